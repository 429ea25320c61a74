//! KMeans with k set to the number of gold profiles, scored by ARI and per-profile F1.

use akp_audit::agreement::{adjusted_rand_index, contingency, retrieval_scores, NoisePolicy};
use akp_audit::kmeans::{fit_kmeans_detailed, KMeansParams};
use akp_audit::synth::{generate, SynthConfig};

fn main() -> akp_audit::Result<()> {
    let ds = generate(&SynthConfig::default())?;
    let params = KMeansParams::new(ds.k(), 43);
    let fit = fit_kmeans_detailed(&ds, &params)?;

    for (i, r) in fit.restarts.iter().enumerate() {
        let mark = if i == fit.best_restart { "*" } else { " " };
        println!(
            "{mark} restart {i:>2} seed {:>3}: {:>3} iterations, inertia {:.4}",
            r.seed,
            r.inertia_history.len(),
            r.final_inertia
        );
    }

    let labels = &fit.assignment.labels;
    let ari = adjusted_rand_index(ds.profiles(), labels)?;
    println!("ARI {:.3}", ari.ari);
    let table = contingency(ds.profiles(), labels, NoisePolicy::AsCluster)?;
    let scores = retrieval_scores(&table)?;
    let names = table.column_names();
    for (p, best) in scores.best_per_profile.iter().enumerate() {
        println!("KP{}: best cluster {} with F1 {:.3}", p + 1, names[best.column], best.f1);
    }
    Ok(())
}
