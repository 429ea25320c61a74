//! Multi-seed checks on generated data, each against an independent oracle.

use akp_audit::agreement::NoisePolicy;
use akp_audit::dataset::Dataset;
use akp_audit::geometry::{akp_correlation, centroid_similarities, median, similarity_summary, CentroidSimilarities};
use akp_audit::hdbscan::{fit_hdbscan, grid_search, HdbscanParams, DEFAULT_MCS_GRID, DEFAULT_MS_GRID};
use akp_audit::simindex::{dot, Metric};
use akp_audit::synth::{generate, sample_vmf, Mode, SynthConfig};
use akp_audit::ProfileOrdering;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Distribution};

fn low_dim(kappas: Vec<f64>, sizes: Vec<usize>, dim: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_per_profile: sizes,
        dim,
        concentrations: kappas,
        seed,
        ..SynthConfig::default()
    }
}

fn pole(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

/// Median cosine between independent vMF draws, from fresh samples.
fn monte_carlo_median(kappa: f64, dim: usize, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = pole(dim);
    let a = sample_vmf(&center, kappa, pairs, &mut rng).unwrap();
    let b = sample_vmf(&center, kappa, pairs, &mut rng).unwrap();
    let sims: Vec<f64> = a.iter().zip(&b).map(|(x, y)| dot(x, y)).collect();
    median(&sims).unwrap()
}

#[test]
fn tight_single_profile_is_nearly_collinear() {
    let ds = generate(&low_dim(vec![1e4], vec![200], 8, 1)).unwrap();
    let within = similarity_summary(&ds).unwrap().median(1, 1).unwrap();
    assert!(within > 0.99, "{within}");
    assert!((within - monte_carlo_median(1e4, 8, 20_000, 2)).abs() < 0.002);
}

#[test]
fn within_medians_match_monte_carlo() {
    let kappas = vec![64.0, 16.0, 4.0];
    let ds = generate(&SynthConfig {
        mode: Mode::IndependentCenters,
        ..low_dim(kappas.clone(), vec![150, 150, 150], 8, 3)
    })
    .unwrap();
    let summary = similarity_summary(&ds).unwrap();
    let within: Vec<f64> = summary.within_medians().into_iter().map(Option::unwrap).collect();
    assert!(within.windows(2).all(|w| w[0] > w[1]), "{within:?}");
    for (i, &kappa) in kappas.iter().enumerate() {
        let oracle = monte_carlo_median(kappa, 8, 100_000, 10 + i as u64);
        assert!((within[i] - oracle).abs() < 0.02, "kappa {kappa}: {} vs {oracle}", within[i]);
    }
}

#[test]
fn mean_resultant_length_grows_with_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let center = pole(5);
    let resultant = |kappa: f64, rng: &mut ChaCha8Rng| {
        let xs = sample_vmf(&center, kappa, 10_000, rng).unwrap();
        let mut mean = vec![0.0; 5];
        for x in &xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / xs.len() as f64);
        }
        dot(&mean, &mean).sqrt()
    };
    let low = resultant(1.0, &mut rng);
    let high = resultant(50.0, &mut rng);
    assert!(high > low + 0.3, "{low} vs {high}");
}

#[test]
fn generated_vectors_are_unit_and_sized() {
    let cfg = low_dim(vec![30.0, 10.0, 3.0], vec![7, 11, 5], 12, 5);
    let ds = generate(&cfg).unwrap();
    assert_eq!(ds.profile_sizes(), cfg.n_per_profile);
    for row in ds.rows() {
        assert!((dot(row, row).sqrt() - 1.0).abs() < 1e-9);
    }
    assert_eq!(ds, generate(&cfg).unwrap());
}

#[test]
fn first_cell_beats_last_at_defaults() {
    let mut held = 0;
    for seed in 0..20 {
        let ds = generate(&SynthConfig {
            seed,
            n_per_profile: vec![60; 6],
            ..SynthConfig::default()
        })
        .unwrap();
        let s = similarity_summary(&ds).unwrap();
        if s.median(1, 1) > s.median(6, 6) {
            held += 1;
        }
    }
    assert!(held >= 19, "{held}/20");
}

#[test]
fn small_kappas_at_low_dimension_plant_akp() {
    let ordering = ProfileOrdering::identity(6);
    let mut held = 0;
    for seed in 0..20 {
        let cfg = SynthConfig {
            center_spread: 1.0,
            ..low_dim(vec![64.0, 32.0, 16.0, 8.0, 4.0, 2.0], vec![60; 6], 16, seed)
        };
        let ds = generate(&cfg).unwrap();
        let s = similarity_summary(&ds).unwrap();
        let akp = akp_correlation(&centroid_similarities(&ds).unwrap(), &ordering).unwrap();
        if s.diagonal_strictly_decreasing(&ordering) && akp.spearman_rho < -0.5 {
            held += 1;
        }
    }
    assert!(held >= 11, "{held}/20");
}

fn from_groups(groups: &[Vec<f64>]) -> CentroidSimilarities {
    use akp_audit::geometry::CentroidRecord;
    let mut records = Vec::new();
    for (p, g) in groups.iter().enumerate() {
        for (j, &s) in g.iter().enumerate() {
            records.push(CentroidRecord {
                id: format!("{p}-{j}"),
                profile: p as u32 + 1,
                similarity: Some(s),
            });
        }
    }
    CentroidSimilarities {
        records,
        centroids: vec![vec![1.0]; groups.len()],
        zero_centroid_profiles: Vec::new(),
    }
}

#[test]
fn exchangeable_similarities_show_no_correlation() {
    let ordering = ProfileOrdering::identity(5);
    let noise = Normal::new(0.8, 0.05).unwrap();
    let mut significant = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups: Vec<Vec<f64>> = (0..5).map(|_| (0..100).map(|_| noise.sample(&mut rng)).collect()).collect();
        let r = akp_correlation(&from_groups(&groups), &ordering).unwrap();
        assert!(r.spearman_rho.abs() < 0.2, "{}", r.spearman_rho);
        if r.p_value < 0.05 {
            significant += 1;
        }
    }
    assert!(significant <= 3, "{significant}/20 significant");
}

#[test]
fn grid_search_recovers_separated_profiles() {
    let ds = generate(&SynthConfig {
        mode: Mode::IndependentCenters,
        ..low_dim(vec![200.0, 200.0, 200.0], vec![40, 40, 40], 16, 6)
    })
    .unwrap();
    let grid = grid_search(&ds, ds.profiles(), &DEFAULT_MCS_GRID, &DEFAULT_MS_GRID, Metric::CosineDerived).unwrap();
    assert_eq!(grid.policy, NoisePolicy::AsCluster);
    assert!(grid.best_ari.unwrap() > 0.9);
    let best = grid.best_cell().unwrap();
    assert_eq!(best.n_clusters, 3);
    let max = grid.cells.iter().filter_map(|c| c.ari).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(grid.best_ari, Some(max));
}

#[test]
fn two_blobs_with_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spread = Normal::new(0.0, 0.1).unwrap();
    let mut rows = Vec::new();
    for cx in [0.0, 10.0] {
        for _ in 0..30 {
            rows.push(vec![cx + spread.sample(&mut rng), spread.sample(&mut rng)]);
        }
    }
    for (x, y) in [(-30.0, 25.0), (40.0, -28.0), (5.0, 35.0), (-25.0, -30.0), (33.0, 31.0)] {
        rows.push(vec![x + rng.gen_range(-1.0..1.0), y]);
    }
    let n = rows.len();
    let ds = Dataset::new((0..n).map(|i| i.to_string()).collect(), rows, vec![1; n], None).unwrap();
    let fit = fit_hdbscan(&ds, &HdbscanParams::new(10, 5, Metric::Euclidean)).unwrap();
    assert_eq!(fit.n_clusters, 2);
    assert_eq!(fit.n_noise(), 5);
    assert!(fit.labels[60..].iter().all(|&l| l == -1));
}
