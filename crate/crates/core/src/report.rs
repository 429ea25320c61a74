//! Rendering an [`AuditReport`] as markdown, JSON or a directory of CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agreement::{ContingencyTable, GroupedResult, RetrievalScores};
use crate::audit::{AuditReport, ClusteringSection};
use crate::error::{Error, Result};
use crate::hdbscan::GridSearchResult;
use crate::stats::{PosthocMatrix, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Json,
    CsvDir,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            "csv_dir" | "csv" => Ok(ReportFormat::CsvDir),
            other => Err(Error::InvalidParameter(format!("unknown report format '{other}'"))),
        }
    }
}

/// Round half up to three decimals and format.
pub fn fmt3(x: f64) -> String {
    let r = (x * 1000.0 + 0.5).floor() / 1000.0;
    // Avoid printing "-0.000".
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.3}")
}

fn opt3(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), fmt3)
}

/// p-values below one in a thousand print in scientific notation.
fn fmt_p(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        fmt3(p)
    }
}

pub fn render_json(report: &AuditReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Serialization(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_json(text: &str) -> Result<AuditReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        row: e.line(),
        message: e.to_string(),
    })
}

fn table_header(out: &mut String, first: &str, columns: &[String]) {
    let _ = writeln!(out, "| {first} | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(columns.len()));
}

fn contingency_markdown(out: &mut String, table: &ContingencyTable, retrieval: &RetrievalScores) {
    let mut columns = table.column_names();
    columns.push("total".to_string());
    table_header(out, "KP", &columns);
    for (r, row) in table.counts.iter().enumerate() {
        let best = retrieval.best_per_profile[r].column;
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| if c == best { format!("**{v}**") } else { v.to_string() })
            .collect();
        let _ = writeln!(
            out,
            "| KP{} | {} | {} |",
            table.profiles[r],
            cells.join(" | "),
            table.row_totals[r]
        );
    }
    let totals: Vec<String> = table.col_totals.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "| total | {} | {} |", totals.join(" | "), table.n);
    out.push('\n');
}

fn f1_markdown(out: &mut String, table: &ContingencyTable, retrieval: &RetrievalScores) {
    let mut columns = table.column_names();
    columns.push("best".to_string());
    table_header(out, "KP", &columns);
    for (r, row) in retrieval.f1.iter().enumerate() {
        let best = retrieval.best_per_profile[r];
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                if c == best.column {
                    format!("**{}**", fmt3(v))
                } else {
                    fmt3(v)
                }
            })
            .collect();
        let _ = writeln!(
            out,
            "| KP{} | {} | {} |",
            table.profiles[r],
            cells.join(" | "),
            fmt3(best.f1)
        );
    }
    out.push('\n');
}

fn grouping_markdown(out: &mut String, table: &ContingencyTable, g: &GroupedResult) {
    let best = g.best_grouping();
    let names = table.column_names();
    let bands: Vec<String> = best
        .bands
        .iter()
        .map(|b| {
            let names: Vec<String> = b.iter().map(|p| format!("KP{p}")).collect();
            format!("{{{}}}", names.join(","))
        })
        .collect();
    let _ = writeln!(
        out,
        "Best grouping over {} candidates ({:?}, up to {} bands): {} with mean F1 {}\n",
        g.candidates.len(),
        g.mode,
        g.max_bands,
        bands.join(" "),
        fmt3(best.mean_f1)
    );
    table_header(
        out,
        "band",
        &["size".into(), "best column".into(), "precision".into(), "recall".into(), "F1".into()],
    );
    for (name, s) in bands.iter().zip(&best.scores) {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} |",
            s.size,
            names[s.best.column],
            fmt3(s.precision),
            fmt3(s.recall),
            fmt3(s.best.f1)
        );
    }
    out.push('\n');
}

fn clustering_markdown(out: &mut String, title: &str, c: &ClusteringSection) {
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(
        out,
        "ARI {} (RI {}), {} clusters, {} noise points{}\n",
        fmt3(c.agreement.ari),
        fmt3(c.agreement.ri),
        c.assignment.n_clusters,
        c.assignment.n_noise(),
        if c.agreement.degenerate { ", degenerate ARI" } else { "" }
    );
    if let Some(a) = &c.agreement_excluding_noise {
        let _ = writeln!(out, "ARI excluding noise {}\n", fmt3(a.ari));
    }
    let _ = writeln!(out, "Contingency (best F1 column in bold):\n");
    contingency_markdown(out, &c.contingency, &c.retrieval);
    let _ = writeln!(out, "F1 per profile and cluster:\n");
    f1_markdown(out, &c.contingency, &c.retrieval);
    match (&c.grouping, &c.grouping_error) {
        (Some(g), _) => grouping_markdown(out, &c.contingency, g),
        (None, Some(e)) => {
            let _ = writeln!(out, "Grouped profiles: skipped ({e})\n");
        }
        (None, None) => {}
    }
}

/// The grid as a markdown table: `min_cluster_size` rows, `min_samples` columns.
pub fn render_grid_markdown(grid: &GridSearchResult) -> String {
    let mut out = String::new();
    grid_markdown(&mut out, grid);
    out
}

fn grid_markdown(out: &mut String, grid: &GridSearchResult) {
    let mut ms: Vec<usize> = grid.cells.iter().map(|c| c.min_samples).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut mcs: Vec<usize> = grid.cells.iter().map(|c| c.min_cluster_size).collect();
    mcs.sort_unstable();
    mcs.dedup();
    let columns: Vec<String> = ms.iter().map(|m| format!("ms={m}")).collect();
    table_header(out, "min_cluster_size", &columns);
    let best = grid.best_cell();
    for &size in &mcs {
        let cells: Vec<String> = ms
            .iter()
            .map(|&m| {
                let Some(cell) = grid
                    .cells
                    .iter()
                    .find(|c| c.min_cluster_size == size && c.min_samples == m)
                else {
                    return String::new();
                };
                let score = match grid.policy {
                    crate::agreement::NoisePolicy::AsCluster => cell.ari,
                    crate::agreement::NoisePolicy::Exclude => cell.ari_excluding_noise,
                };
                let text = if cell.error.is_some() { "error".to_string() } else { opt3(score) };
                if best.is_some_and(|b| std::ptr::eq(b, cell)) {
                    format!("**{text}**")
                } else {
                    text
                }
            })
            .collect();
        let _ = writeln!(out, "| {size} | {} |", cells.join(" | "));
    }
    out.push('\n');
}

fn test_line(out: &mut String, name: &str, t: &Option<TestResult>) {
    match t {
        Some(t) => {
            let _ = writeln!(
                out,
                "- {name}: statistic {}, p {}{}",
                fmt3(t.statistic),
                fmt_p(t.p_value),
                t.caveat.as_ref().map_or(String::new(), |c| format!(" ({c})"))
            );
        }
        None => {
            let _ = writeln!(out, "- {name}: not computed");
        }
    }
}

fn posthoc_markdown(out: &mut String, m: &PosthocMatrix) {
    let columns: Vec<String> = (1..=m.k()).map(|i| format!("KP{i}")).collect();
    table_header(out, "", &columns);
    for (i, row) in m.p_values.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|p| p.map_or_else(|| "-".to_string(), fmt_p))
            .collect();
        let _ = writeln!(out, "| KP{} | {} |", i + 1, cells.join(" | "));
    }
    out.push('\n');
}

/// Markdown with one table per contingency, F1, grid and similarity layout.
pub fn render_markdown(r: &AuditReport) -> String {
    let mut out = String::new();
    let d = &r.dataset;
    let _ = writeln!(out, "# Profile discovery audit\n");
    let _ = writeln!(
        out,
        "{} v{}, seed {}. Dataset {}: n = {}, dim = {}, k = {} profiles, sizes {:?}.\n",
        r.provenance.tool,
        r.provenance.version,
        r.provenance.seed,
        d.source.as_deref().unwrap_or("(in memory)"),
        d.n,
        d.dim,
        d.k,
        d.profile_sizes
    );
    if !r.degenerate.is_empty() {
        let _ = writeln!(out, "Degenerate: {}\n", r.degenerate.join("; "));
    }

    let _ = writeln!(out, "## KMeans\n");
    let _ = writeln!(
        out,
        "k = {}, {} restarts, seed {}, best restart {}\n",
        r.kmeans.k, r.kmeans.n_restarts, r.kmeans.seed, r.kmeans.best_restart
    );
    clustering_markdown(&mut out, "KMeans clusters", &r.kmeans.result);

    let _ = writeln!(out, "## HDBSCAN\n");
    let h = &r.hdbscan;
    if let Some(reason) = &h.skipped {
        let _ = writeln!(out, "skipped: {reason}\n");
    }
    if let Some(grid) = &h.grid {
        let _ = writeln!(out, "Grid search ARI ({:?} metric, best in bold):\n", grid.metric);
        grid_markdown(&mut out, grid);
    }
    if let (Some(p), Some(c)) = (&h.best_params, &h.result) {
        let title = format!(
            "HDBSCAN clusters (min_cluster_size = {}, min_samples = {})",
            p.min_cluster_size, p.min_samples
        );
        clustering_markdown(&mut out, &title, c);
    }

    let g = &r.geometry;
    let _ = writeln!(out, "## Similarity structure\n");
    let _ = writeln!(out, "Median pairwise cosine similarity (within-profile on the diagonal):\n");
    let k = g.summary.k();
    let columns: Vec<String> = (1..=k).map(|i| format!("KP{i}")).collect();
    table_header(&mut out, "", &columns);
    let best = d.quality_order.first().copied().unwrap_or(1) as usize - 1;
    for i in 0..k {
        let cells: Vec<String> = (0..k)
            .map(|j| {
                if j < i {
                    return String::new();
                }
                let text = opt3(g.summary.median_matrix[i][j]);
                let dominant = i == best
                    && g.strong_akp
                        .iter()
                        .any(|f| f.profile as usize == j + 1 && f.holds == Some(true));
                if dominant {
                    format!("**{text}**")
                } else {
                    text
                }
            })
            .collect();
        let _ = writeln!(out, "| KP{} | {} |", i + 1, cells.join(" | "));
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "Within-profile medians strictly decreasing with quality: {}\n",
        if g.diagonal_strictly_decreasing { "yes" } else { "no" }
    );
    let held: Vec<String> = g
        .strong_akp
        .iter()
        .filter(|f| f.holds == Some(true))
        .map(|f| format!("KP{}", f.profile))
        .collect();
    let _ = writeln!(
        out,
        "Closer to the best profile than to themselves: {}\n",
        if held.is_empty() { "none".to_string() } else { held.join(", ") }
    );
    match (&g.akp, &g.akp_error) {
        (Some(a), _) => {
            let _ = writeln!(
                out,
                "Spearman correlation of centroid similarity with quality rank: rho = {}, p = {} (n = {})\n",
                fmt3(a.spearman_rho),
                fmt_p(a.p_value),
                a.n
            );
        }
        (None, Some(e)) => {
            let _ = writeln!(out, "Spearman correlation: not computed ({e})\n");
        }
        _ => {}
    }

    let s = &r.stats;
    let _ = writeln!(out, "## Tests\n");
    test_line(&mut out, "KS vs normal (estimated parameters)", &s.ks_estimated);
    test_line(&mut out, "KS vs standard normal", &s.ks_standard);
    test_line(&mut out, "Kruskal-Wallis H", &s.kruskal_wallis);
    out.push('\n');
    if let Some(m) = &s.dunn {
        let _ = writeln!(out, "Dunn post-hoc p-values ({}):\n", m.adjustment.name());
        posthoc_markdown(&mut out, m);
    }
    for e in &s.errors {
        let _ = writeln!(out, "- {e}");
    }
    out
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Serialization(e.to_string()))?;
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(header).map_err(ser)?;
    for row in rows {
        w.write_record(row).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn opt_full(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn clustering_csvs(dir: &Path, tag: &str, c: &ClusteringSection, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut header = vec!["profile".to_string()];
    header.extend(c.contingency.column_names());
    let counts: Vec<Vec<String>> = c
        .contingency
        .counts
        .iter()
        .zip(&c.contingency.profiles)
        .map(|(row, p)| std::iter::once(p.to_string()).chain(row.iter().map(u64::to_string)).collect())
        .collect();
    written.push(write_csv(dir, &format!("{tag}_contingency.csv"), &header, &counts)?);
    for (name, m) in [
        ("f1", &c.retrieval.f1),
        ("precision", &c.retrieval.precision),
        ("recall", &c.retrieval.recall),
    ] {
        let rows: Vec<Vec<String>> = m
            .iter()
            .zip(&c.contingency.profiles)
            .map(|(row, p)| std::iter::once(p.to_string()).chain(row.iter().map(f64::to_string)).collect())
            .collect();
        written.push(write_csv(dir, &format!("{tag}_{name}.csv"), &header, &rows)?);
    }
    if let Some(g) = &c.grouping {
        let rows: Vec<Vec<String>> = g
            .candidates
            .iter()
            .enumerate()
            .map(|(i, cand)| {
                let bands: Vec<String> = cand
                    .bands
                    .iter()
                    .map(|b| b.iter().map(u32::to_string).collect::<Vec<_>>().join("+"))
                    .collect();
                let f1: Vec<String> = cand.f1_per_band().iter().map(f64::to_string).collect();
                vec![
                    bands.join(" "),
                    f1.join(" "),
                    cand.mean_f1.to_string(),
                    (i == g.best).to_string(),
                ]
            })
            .collect();
        let header = ["bands", "band_f1", "mean_f1", "best"].map(String::from);
        written.push(write_csv(dir, &format!("{tag}_grouping.csv"), &header, &rows)?);
    }
    Ok(())
}

/// One CSV per table. Returns the files written.
pub fn write_csv_dir(r: &AuditReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    clustering_csvs(dir, "kmeans", &r.kmeans.result, &mut written)?;
    if let Some(c) = &r.hdbscan.result {
        clustering_csvs(dir, "hdbscan", c, &mut written)?;
    }
    if let Some(grid) = &r.hdbscan.grid {
        let header = [
            "min_cluster_size",
            "min_samples",
            "ari",
            "ari_excluding_noise",
            "n_clusters",
            "n_noise",
            "error",
        ]
        .map(String::from);
        let rows: Vec<Vec<String>> = grid
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.min_cluster_size.to_string(),
                    c.min_samples.to_string(),
                    opt_full(c.ari),
                    opt_full(c.ari_excluding_noise),
                    c.n_clusters.to_string(),
                    c.n_noise.to_string(),
                    c.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        written.push(write_csv(dir, "hdbscan_grid.csv", &header, &rows)?);
    }
    let k = r.geometry.summary.k();
    let mut header = vec!["profile".to_string()];
    header.extend((1..=k).map(|i| format!("KP{i}")));
    let medians: Vec<Vec<String>> = r
        .geometry
        .summary
        .median_matrix
        .iter()
        .enumerate()
        .map(|(i, row)| std::iter::once(format!("KP{}", i + 1)).chain(row.iter().map(|v| opt_full(*v))).collect())
        .collect();
    written.push(write_csv(dir, "similarity_medians.csv", &header, &medians)?);
    let mut tests = Vec::new();
    for (name, t) in [
        ("ks_estimated", &r.stats.ks_estimated),
        ("ks_standard", &r.stats.ks_standard),
        ("kruskal_wallis", &r.stats.kruskal_wallis),
    ] {
        if let Some(t) = t {
            tests.push(vec![name.to_string(), t.statistic.to_string(), t.p_value.to_string()]);
        }
    }
    if let Some(a) = &r.geometry.akp {
        tests.push(vec!["spearman_akp".into(), a.spearman_rho.to_string(), a.p_value.to_string()]);
    }
    let header = ["test", "statistic", "p_value"].map(String::from);
    written.push(write_csv(dir, "tests.csv", &header, &tests)?);
    if let Some(m) = &r.stats.dunn {
        let mut header = vec!["profile".to_string()];
        header.extend((1..=m.k()).map(|i| format!("KP{i}")));
        let rows: Vec<Vec<String>> = m
            .p_values
            .iter()
            .enumerate()
            .map(|(i, row)| std::iter::once(format!("KP{}", i + 1)).chain(row.iter().map(|v| opt_full(*v))).collect())
            .collect();
        written.push(write_csv(dir, "dunn.csv", &header, &rows)?);
    }
    Ok(written)
}

/// Write the report to `out`: a file for markdown and JSON, a directory for CSV.
pub fn render_report(r: &AuditReport, format: ReportFormat, out: &Path) -> Result<Vec<PathBuf>> {
    let write = |text: String| -> Result<Vec<PathBuf>> {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(out, text).map_err(|e| Error::io(out, e))?;
        Ok(vec![out.to_path_buf()])
    };
    match format {
        ReportFormat::Markdown => write(render_markdown(r)),
        ReportFormat::Json => write(render_json(r)?),
        ReportFormat::CsvDir => write_csv_dir(r, out),
    }
}
