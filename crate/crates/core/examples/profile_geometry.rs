//! Within- and between-profile similarity medians, strong-AKP flags and the
//! centroid-similarity correlation with quality.

use akp_audit::geometry::{akp_correlation, centroid_similarities, similarity_summary};
use akp_audit::synth::{generate, Mode, SynthConfig};
use akp_audit::ProfileOrdering;

fn main() -> akp_audit::Result<()> {
    // The control has no planted structure: equal concentrations, unrelated centers.
    let control = SynthConfig {
        mode: Mode::IndependentCenters,
        concentrations: vec![4300.0; 6],
        ..SynthConfig::default()
    };
    for cfg in [SynthConfig::default(), control] {
        let mode = cfg.mode;
        let ds = generate(&cfg)?;
        let ordering = ProfileOrdering::identity(ds.k());
        let summary = similarity_summary(&ds)?;

        println!("{mode:?}");
        for i in 0..summary.k() {
            let row: String = (0..summary.k())
                .map(|j| match summary.median_matrix[i][j] {
                    Some(v) if j >= i => format!(" {v:.3}"),
                    _ => "      ".to_string(),
                })
                .collect();
            println!("  KP{}{row}", i + 1);
        }
        println!("  diagonal strictly decreasing: {}", summary.diagonal_strictly_decreasing(&ordering));
        for flag in summary.strong_akp_flags(&ordering) {
            println!("  KP{} closer to the best profile: {:?}", flag.profile, flag.holds);
        }
        let akp = akp_correlation(&centroid_similarities(&ds)?, &ordering)?;
        println!("  rho {:.3}, p {:.2e}\n", akp.spearman_rho, akp.p_value);
    }
    Ok(())
}
