//! Lloyd's KMeans with k-means++ seeding and best-of-n restarts.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::simindex::squared_euclidean;

/// Label reserved for points that belong to no cluster.
pub const NOISE: i32 = -1;

/// Which algorithm produced an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Kmeans,
    Hdbscan,
}

/// A fitted label per row. Non-noise labels are `0..n_clusters`, each used at least once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    pub inertia: Option<f64>,
    pub source: Source,
}

impl ClusterAssignment {
    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Member count per cluster label.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Clusters as sorted member lists, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                groups[l as usize].push(i);
            }
        }
        groups
    }
}

/// Renumber non-noise labels by order of first appearance. Returns the new
/// labels and the old label of each new cluster.
pub(crate) fn canonicalize(labels: &[i32]) -> (Vec<i32>, Vec<i32>) {
    let mut order: Vec<i32> = Vec::new();
    let relabeled = labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return NOISE;
            }
            match order.iter().position(|&o| o == l) {
                Some(p) => p as i32,
                None => {
                    order.push(l);
                    order.len() as i32 - 1
                }
            }
        })
        .collect();
    (relabeled, order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Relative inertia improvement below which a restart stops.
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            max_iter: 300,
            tol: 1e-6,
            n_restarts: 10,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        if self.k > n {
            return Err(Error::InvalidParameter(format!(
                "k = {} exceeds the number of points ({n})",
                self.k
            )));
        }
        if self.max_iter == 0 || self.n_restarts == 0 {
            return Err(Error::InvalidParameter(
                "max_iter and n_restarts must be positive".into(),
            ));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One restart of Lloyd's algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub seed: u64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub final_inertia: f64,
    pub converged: bool,
}

/// Full output of [`fit_kmeans_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// Centroids in canonical label order.
    pub centroids: Vec<Vec<f64>>,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

fn rows_of(ds: &Dataset) -> Vec<&[f64]> {
    ds.rows().collect()
}

/// Choose `k` distinct rows with squared-distance-weighted sampling.
pub fn kmeanspp_init(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > ds.n() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be in 1..={}",
            ds.n()
        )));
    }
    let rows = rows_of(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(seed_indices(&rows, k, &mut rng)
        .into_iter()
        .map(|i| rows[i].to_vec())
        .collect())
}

fn seed_indices<R: Rng>(rows: &[&[f64]], k: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.len();
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    picks.push(first);
    chosen[first] = true;
    let mut nearest: Vec<f64> = rows.iter().map(|r| squared_euclidean(r, rows[first])).collect();
    while picks.len() < k {
        let weights: Vec<f64> = nearest
            .iter()
            .zip(&chosen)
            .map(|(&d, &c)| if c { 0.0 } else { d })
            .collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(rng),
            // Every remaining point coincides with a chosen one.
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                free[rng.gen_range(0..free.len())]
            }
        };
        picks.push(next);
        chosen[next] = true;
        for (d, r) in nearest.iter_mut().zip(rows) {
            *d = d.min(squared_euclidean(r, rows[next]));
        }
    }
    picks
}

/// Nearest centroid, ties to the lowest index.
fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_euclidean(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Give every empty cluster the point farthest from its centroid, taking only
/// from clusters that keep at least one member. Returns `(cluster, point)` moves.
fn repair_empty(
    rows: &[&[f64]],
    labels: &mut [usize],
    centroids: &[Vec<f64>],
    k: usize,
) -> Vec<(usize, usize)> {
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut moves = Vec::new();
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            let l = labels[i];
            if counts[l] < 2 || moves.iter().any(|&(_, p)| p == i) {
                continue;
            }
            let d = squared_euclidean(row, &centroids[l]);
            if far.map_or(true, |(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        counts[labels[i]] -= 1;
        counts[empty] += 1;
        labels[i] = empty;
        moves.push((empty, i));
    }
    moves
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    trace: RestartTrace,
}

fn means(rows: &[&[f64]], labels: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row.iter()) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

fn lloyd(rows: &[&[f64]], params: &KMeansParams, seed: u64) -> Run {
    let k = params.k;
    let dim = rows[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = seed_indices(rows, k, &mut rng)
        .into_iter()
        .map(|i| rows[i].to_vec())
        .collect();
    let mut labels = vec![0usize; rows.len()];
    let mut history = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_iter {
        let mut inertia = 0.0;
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let (c, d) = nearest_centroid(row, &centroids);
            changed |= labels[i] != c;
            labels[i] = c;
            inertia += d;
        }
        let prev = history.last().copied();
        history.push(inertia);
        if let Some(prev) = prev {
            if !changed || prev - inertia <= params.tol * prev {
                converged = true;
                break;
            }
        }

        let (mut next, _) = means(rows, &labels, k, dim);
        for (c, point) in repair_empty(rows, &mut labels, &next, k) {
            next[c] = rows[point].to_vec();
        }
        centroids = next;
    }

    // Report the objective against the means of the final partition.
    let (current, _) = means(rows, &labels, k, dim);
    repair_empty(rows, &mut labels, &current, k);
    let (final_centroids, _) = means(rows, &labels, k, dim);
    let final_inertia = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| squared_euclidean(r, &final_centroids[l]))
        .sum();
    Run {
        labels,
        centroids: final_centroids,
        trace: RestartTrace {
            seed,
            inertia_history: history,
            final_inertia,
            converged,
        },
    }
}

/// Best-of-`n_restarts` KMeans. Restart `r` uses seed `params.seed + r`.
pub fn fit_kmeans_detailed(ds: &Dataset, params: &KMeansParams) -> Result<KMeansFit> {
    params.validate(ds.n())?;
    if let Some(row) = ds.rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { row: row + 1 });
    }
    let rows = rows_of(ds);
    let runs: Vec<Run> = (0..params.n_restarts)
        .into_par_iter()
        .map(|r| lloyd(&rows, params, params.seed.wrapping_add(r as u64)))
        .collect();

    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.trace.final_inertia < runs[best].trace.final_inertia {
            best = r;
        }
    }
    let raw: Vec<i32> = runs[best].labels.iter().map(|&l| l as i32).collect();
    let (labels, order) = canonicalize(&raw);
    let centroids = order
        .iter()
        .map(|&old| runs[best].centroids[old as usize].clone())
        .collect::<Vec<_>>();
    let inertia = runs[best].trace.final_inertia;
    Ok(KMeansFit {
        assignment: ClusterAssignment {
            n_clusters: centroids.len(),
            labels,
            inertia: Some(inertia),
            source: Source::Kmeans,
        },
        centroids,
        best_restart: best,
        restarts: runs.into_iter().map(|r| r.trace).collect(),
    })
}

pub fn fit_kmeans(ds: &Dataset, params: &KMeansParams) -> Result<ClusterAssignment> {
    Ok(fit_kmeans_detailed(ds, params)?.assignment)
}
