//! Grid search over HDBSCAN hyperparameters on cosine-derived distances.

use akp_audit::agreement::NoisePolicy;
use akp_audit::hdbscan::{fit_hdbscan_precomputed, grid_search_precomputed, DEFAULT_MCS_GRID, DEFAULT_MS_GRID};
use akp_audit::report::render_grid_markdown;
use akp_audit::simindex::{pairwise_distance_matrix, Metric};
use akp_audit::synth::{generate, SynthConfig};

fn main() -> akp_audit::Result<()> {
    let ds = generate(&SynthConfig::default())?;
    let d = pairwise_distance_matrix(&ds, Metric::CosineDerived)?;

    for policy in [NoisePolicy::AsCluster, NoisePolicy::Exclude] {
        let grid = grid_search_precomputed(&d, ds.profiles(), &DEFAULT_MCS_GRID, &DEFAULT_MS_GRID, policy)?;
        println!("noise policy {policy:?}\n");
        print!("{}", render_grid_markdown(&grid));
        let Some(best) = grid.best_params else {
            println!("no usable cell");
            continue;
        };
        let fit = fit_hdbscan_precomputed(&d, &best)?;
        println!(
            "best mcs = {}, ms = {}: {} clusters of sizes {:?}, {} noise\n",
            best.min_cluster_size,
            best.min_samples,
            fit.assignment.n_clusters,
            fit.assignment.cluster_sizes(),
            fit.assignment.n_noise()
        );
    }
    Ok(())
}
