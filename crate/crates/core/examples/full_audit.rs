//! The whole pipeline on a synthetic dataset, rendered as markdown, JSON and CSV.
//!
//! cargo run --release --example full_audit -- [output_dir]

use std::path::PathBuf;

use akp_audit::audit::{run_audit, AuditConfig};
use akp_audit::report::{render_report, ReportFormat};
use akp_audit::synth::{generate, SynthConfig};
use akp_audit::Format;

fn main() -> akp_audit::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "audit-out".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");
    let data = dir.join("data.jsonl");
    generate(&SynthConfig::default())?.save(&data, Format::Jsonl)?;

    let cfg = AuditConfig {
        dataset: Some(data),
        output_dir: Some(dir.clone()),
        ..AuditConfig::default()
    };
    std::fs::write(dir.join("audit.toml"), cfg.to_toml_string()?).expect("write config");

    let report = run_audit(&cfg)?;
    render_report(&report, ReportFormat::Markdown, &dir.join("report.md"))?;
    render_report(&report, ReportFormat::Json, &dir.join("report.json"))?;
    let csvs = render_report(&report, ReportFormat::CsvDir, &dir.join("tables"))?;

    println!("KMeans ARI {:.3}", report.kmeans.result.agreement.ari);
    if let Some(h) = &report.hdbscan.result {
        println!("HDBSCAN ARI {:.3}", h.agreement.ari);
    }
    if let Some(a) = &report.geometry.akp {
        println!("rho {:.3}", a.spearman_rho);
    }
    println!("wrote report.md, report.json and {} CSV tables to {}", csvs.len(), dir.display());
    Ok(())
}
