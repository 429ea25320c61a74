//! Generate a strong-AKP dataset and save it as JSONL.
//!
//! cargo run --release --example synthetic_dataset -- [out.jsonl] [seed]

use std::path::PathBuf;

use akp_audit::geometry::within_profile_similarities;
use akp_audit::synth::{generate, SynthConfig};
use akp_audit::Format;

fn main() -> akp_audit::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic.jsonl".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);

    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg)?;
    println!("n = {}, dim = {}, profiles = {:?}", ds.n(), ds.dim(), ds.profile_sizes());

    for (p, sims) in within_profile_similarities(&ds)?.iter().enumerate() {
        let mean = sims.iter().sum::<f64>() / sims.len() as f64;
        println!("KP{} kappa {:>6} mean within-profile cosine {mean:.3}", p + 1, cfg.concentrations[p]);
    }
    ds.save(&out, Format::Jsonl)?;
    println!("wrote {}", out.display());
    Ok(())
}
