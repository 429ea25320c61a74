use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use akp_audit::agreement::{adjusted_rand_index, contingency, retrieval_scores, AgreementResult, NoisePolicy};
use akp_audit::audit::{run_audit, AuditConfig};
use akp_audit::dataset::{load_dataset_with, Dataset, Format, LoadOptions};
use akp_audit::hdbscan::{fit_hdbscan_precomputed, grid_search_precomputed, HdbscanParams, DEFAULT_MCS_GRID, DEFAULT_MS_GRID};
use akp_audit::kmeans::{fit_kmeans_detailed, ClusterAssignment, KMeansParams};
use akp_audit::report::{parse_json, render_grid_markdown, render_markdown, render_report, ReportFormat};
use akp_audit::simindex::{pairwise_distance_matrix, Metric};
use akp_audit::stats::Adjustment;
use akp_audit::synth::{generate, Mode, SynthConfig, DEFAULT_KAPPAS, DEFAULT_SIZES};
use akp_audit::{Error, Result};

const EXIT_OTHER: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(name = "akp-audit", version, about = "Audit how well clusterings recover labeled profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset on the unit sphere.
    Synth(SynthArgs),
    /// Fit KMeans and score it against the gold profiles.
    Kmeans(KmeansArgs),
    /// Fit HDBSCAN with one parameter pair.
    Hdbscan(HdbscanArgs),
    /// Search the HDBSCAN grid for the best ARI.
    Gridsearch(GridArgs),
    /// Run the full pipeline and write report.json and report.md.
    Audit(AuditArgs),
    /// Re-render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Dataset in JSONL or CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Overrides the format implied by the extension.
    #[arg(long)]
    format: Option<Format>,
    /// Renumber sparse profile labels to 1..k in ascending order.
    #[arg(long)]
    remap_sparse_profiles: bool,
}

impl InputArgs {
    fn load(&self) -> Result<Dataset> {
        let format = self.format.unwrap_or_else(|| Format::from_path(&self.input));
        load_dataset_with(
            &self.input,
            format,
            LoadOptions {
                remap_sparse_profiles: self.remap_sparse_profiles,
            },
        )
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    profiles: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(long, default_value = "strong-akp")]
    mode: Mode,
    /// Angle in radians between the best and worst centers.
    #[arg(long, default_value_t = 0.3)]
    spread: f64,
    /// Fraction of the spread at which profile 2 sits.
    #[arg(long, default_value_t = 0.7)]
    near: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Accept concentrations that increase with the profile index.
    #[arg(long)]
    allow_increasing: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct KmeansArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Defaults to the number of gold profiles.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    normalize: bool,
    /// JSON output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HdbscanArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    min_cluster_size: usize,
    #[arg(long, default_value_t = 1)]
    min_samples: usize,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    /// Write the distance matrix as CSV.
    #[arg(long)]
    dump_distances: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MCS_GRID)]
    mcs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MS_GRID)]
    ms: Vec<usize>,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
    #[arg(long, default_value = "as-cluster")]
    noise_policy: NoisePolicy,
    #[arg(long)]
    dump_distances: Option<PathBuf>,
    /// JSON output; the markdown grid goes to stdout either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// TOML file mirroring the audit configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    remap_sparse_profiles: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_delimiter = ',')]
    mcs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    noise_policy: Option<NoisePolicy>,
    #[arg(long)]
    max_bands: Option<usize>,
    #[arg(long)]
    adjustment: Option<Adjustment>,
    /// Quality rank per profile, 1 = best.
    #[arg(long, value_delimiter = ',')]
    quality_ranks: Option<Vec<u32>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by `audit`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// File for markdown and json, directory for csv-dir; markdown goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    input: String,
    seed: Option<u64>,
    params: serde_json::Value,
    assignment: &'a ClusterAssignment,
    agreement: AgreementResult,
    best_f1_per_profile: Vec<f64>,
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dump_distances(ds: &Dataset, metric: Metric, path: &Path) -> Result<()> {
    let d = pairwise_distance_matrix(ds, metric)?;
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    d.write_csv(std::io::BufWriter::new(file))
}

fn score(ds: &Dataset, assignment: &ClusterAssignment) -> Result<(AgreementResult, Vec<f64>)> {
    let agreement = adjusted_rand_index(ds.profiles(), &assignment.labels)?;
    let table = contingency(ds.profiles(), &assignment.labels, NoisePolicy::AsCluster)?;
    let best = retrieval_scores(&table)?.best_per_profile.iter().map(|b| b.f1).collect();
    Ok((agreement, best))
}

fn synth(a: SynthArgs) -> Result<()> {
    let k = a
        .profiles
        .or(a.sizes.as_ref().map(Vec::len))
        .or(a.kappas.as_ref().map(Vec::len))
        .unwrap_or(DEFAULT_SIZES.len());
    let sizes = a
        .sizes
        .unwrap_or_else(|| DEFAULT_SIZES.iter().copied().cycle().take(k).collect());
    let kappas = a.kappas.unwrap_or_else(|| default_kappas(k));
    if sizes.len() != k || kappas.len() != k {
        return Err(Error::InvalidParameter(format!(
            "--profiles {k} disagrees with {} sizes and {} kappas",
            sizes.len(),
            kappas.len()
        )));
    }
    let cfg = SynthConfig {
        n_per_profile: sizes,
        dim: a.dim,
        concentrations: kappas,
        mode: a.mode,
        center_spread: a.spread,
        near_fraction: a.near,
        seed: a.seed,
        require_non_increasing: !a.allow_increasing,
    };
    let ds = generate(&cfg)?;
    ds.save(&a.out, a.format.unwrap_or_else(|| Format::from_path(&a.out)))?;
    eprintln!("wrote {} points in {} profiles to {}", ds.n(), ds.k(), a.out.display());
    Ok(())
}

/// The default concentrations for six profiles, interpolated geometrically for other counts.
fn default_kappas(k: usize) -> Vec<f64> {
    if k == DEFAULT_KAPPAS.len() {
        return DEFAULT_KAPPAS.to_vec();
    }
    let (hi, lo) = (DEFAULT_KAPPAS[0], DEFAULT_KAPPAS[DEFAULT_KAPPAS.len() - 1]);
    (0..k)
        .map(|i| {
            let t = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
            hi * (lo / hi).powf(t)
        })
        .collect()
}

fn kmeans(a: KmeansArgs) -> Result<()> {
    let ds = a.input.load()?;
    let ds = if a.normalize { ds.unit_normalize()? } else { ds };
    let params = KMeansParams {
        k: a.k.unwrap_or(ds.k()),
        max_iter: a.max_iter,
        tol: a.tol,
        n_restarts: a.restarts,
        seed: a.seed,
    };
    let fit = fit_kmeans_detailed(&ds, &params)?;
    let (agreement, best) = score(&ds, &fit.assignment)?;
    write_json(
        &FitOutput {
            input: a.input.input.display().to_string(),
            seed: Some(a.seed),
            params: serde_json::json!({
                "k": params.k,
                "n_restarts": params.n_restarts,
                "max_iter": params.max_iter,
                "tol": params.tol,
                "normalize": a.normalize,
                "best_restart": fit.best_restart,
            }),
            assignment: &fit.assignment,
            agreement,
            best_f1_per_profile: best,
        },
        a.out.as_deref(),
    )
}

fn hdbscan(a: HdbscanArgs) -> Result<()> {
    let ds = a.input.load()?.unit_normalize()?;
    if let Some(path) = &a.dump_distances {
        dump_distances(&ds, a.metric, path)?;
    }
    let params = HdbscanParams::new(a.min_cluster_size, a.min_samples, a.metric);
    let d = pairwise_distance_matrix(&ds, a.metric)?;
    let fit = fit_hdbscan_precomputed(&d, &params)?;
    let (agreement, best) = score(&ds, &fit.assignment)?;
    write_json(
        &FitOutput {
            input: a.input.input.display().to_string(),
            seed: None,
            params: serde_json::to_value(params).map_err(|e| Error::Serialization(e.to_string()))?,
            assignment: &fit.assignment,
            agreement,
            best_f1_per_profile: best,
        },
        a.out.as_deref(),
    )
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let ds = a.input.load()?.unit_normalize()?;
    if let Some(path) = &a.dump_distances {
        dump_distances(&ds, a.metric, path)?;
    }
    let d = pairwise_distance_matrix(&ds, a.metric)?;
    let grid = grid_search_precomputed(&d, ds.profiles(), &a.mcs, &a.ms, a.noise_policy)?;
    print!("{}", render_grid_markdown(&grid));
    if let Some(best) = grid.best_params {
        println!(
            "best: min_cluster_size = {}, min_samples = {}",
            best.min_cluster_size, best.min_samples
        );
    }
    if let Some(out) = &a.out {
        write_json(&grid, Some(out))?;
    }
    Ok(())
}

fn audit(a: AuditArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(path) => AuditConfig::load(path)?,
        None => AuditConfig::default(),
    };
    if let Some(v) = a.input {
        cfg.dataset = Some(v);
    }
    if a.format.is_some() {
        cfg.format = a.format;
    }
    if a.remap_sparse_profiles {
        cfg.remap_sparse_profiles = true;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if a.k.is_some() {
        cfg.kmeans.k = a.k;
    }
    if let Some(v) = a.restarts {
        cfg.kmeans.n_restarts = v;
    }
    if a.normalize {
        cfg.kmeans.normalize = true;
    }
    if let Some(v) = a.mcs {
        cfg.hdbscan.min_cluster_sizes = v;
    }
    if let Some(v) = a.ms {
        cfg.hdbscan.min_samples = v;
    }
    if let Some(v) = a.metric {
        cfg.hdbscan.metric = v;
    }
    if let Some(v) = a.noise_policy {
        cfg.noise_policy = v;
    }
    if let Some(v) = a.max_bands {
        cfg.grouping.max_bands = v;
    }
    if let Some(v) = a.adjustment {
        cfg.stats.adjustment = v;
    }
    if a.quality_ranks.is_some() {
        cfg.quality_ranks = a.quality_ranks;
    }
    if a.output_dir.is_some() {
        cfg.output_dir = a.output_dir;
    }
    if let Some(path) = &cfg.dataset {
        if !path.exists() {
            return Err(Error::InvalidParameter(format!("dataset {} does not exist", path.display())));
        }
    }
    let report = run_audit(&cfg)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    render_report(&report, ReportFormat::Json, &dir.join("report.json"))?;
    render_report(&report, ReportFormat::Markdown, &dir.join("report.md"))?;
    eprintln!("wrote {}", dir.join("report.json").display());
    for reason in &report.degenerate {
        eprintln!("degenerate: {reason}");
    }
    Ok(report.is_degenerate())
}

fn report(a: ReportArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::Io {
        path: a.input.clone(),
        source: e,
    })?;
    let r = parse_json(&text)?;
    match &a.out {
        Some(out) => {
            render_report(&r, a.format, out)?;
        }
        None if a.format == ReportFormat::Markdown => print!("{}", render_markdown(&r)),
        None => return Err(Error::InvalidParameter("--out is required for this format".into())),
    }
    Ok(r.is_degenerate())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("AKP_AUDIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("AKP_AUDIT_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Synth(a) => synth(a).map(|_| false),
        Command::Kmeans(a) => kmeans(a).map(|_| false),
        Command::Hdbscan(a) => hdbscan(a).map(|_| false),
        Command::Gridsearch(a) => gridsearch(a).map(|_| false),
        Command::Audit(a) => audit(a),
        Command::Report(a) => report(a),
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_DEGENERATE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_OTHER })
        }
    }
}
