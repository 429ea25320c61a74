//! Cosine similarity, the chord distance derived from it, and dense pairwise matrices.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// How far from 1 a norm may be before an input is rejected as non-unit.
pub const UNIT_INPUT_TOLERANCE: f64 = 1e-6;

/// Distance used for a pairwise matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// `sqrt(2 * (1 - cos(x, y)))` on unit vectors.
    #[serde(alias = "cosine")]
    CosineDerived,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" | "cosine_derived" => Ok(Metric::CosineDerived),
            other => Err(Error::InvalidParameter(format!("unknown metric '{other}'"))),
        }
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Plain Euclidean distance.
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

/// `dot(x, y) / (|x| |y|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    let (sx, sy) = (dot(x, x), dot(y, y));
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok(similarity_from_parts(dot(x, y), sx, sy))
}

/// Chord length between unit vectors computed from their cosine similarity.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    for v in [x, y] {
        let n = norm(v);
        if (n - 1.0).abs() > UNIT_INPUT_TOLERANCE {
            return Err(Error::NotUnit { norm: n });
        }
    }
    let sim = cosine_similarity(x, y)?;
    Ok(chord_from_similarity(sim))
}

/// `sqrt(sx * sy)` rather than `|x| |y|` so that identical inputs give exactly 1.
#[inline]
pub(crate) fn similarity_from_parts(xy: f64, sx: f64, sy: f64) -> f64 {
    (xy / (sx * sy).sqrt()).clamp(-1.0, 1.0)
}

#[inline]
pub(crate) fn chord_from_similarity(sim: f64) -> f64 {
    (2.0 * (1.0 - sim.clamp(-1.0, 1.0))).max(0.0).sqrt()
}

/// Dense symmetric `n x n` distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    /// Wrap row-major values; checks shape, zero diagonal and symmetry (1e-9).
    pub fn from_values(n: usize, values: Vec<f64>, metric: Metric) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: n * n,
            });
        }
        for i in 0..n {
            if values[i * n + i].abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "diagonal entry {i} is {}",
                    values[i * n + i]
                )));
            }
            for j in (i + 1)..n {
                if (values[i * n + j] - values[j * n + i]).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, values, metric })
    }

    /// Matrix of `|a_i - a_j|` for scalar points. Handy for one-dimensional checks.
    pub fn from_points_1d(points: &[f64]) -> Self {
        let n = points.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = (points[i] - points[j]).abs();
            }
        }
        DistanceMatrix {
            n,
            values,
            metric: Metric::Euclidean,
        }
    }

    pub(crate) fn from_raw(n: usize, values: Vec<f64>, metric: Metric) -> Self {
        debug_assert_eq!(values.len(), n * n);
        DistanceMatrix { n, values, metric }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dump as headerless CSV, one matrix row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(",")).map_err(|e| Error::io("<distance dump>", e))?;
        }
        Ok(())
    }
}

/// All pairwise distances between dataset rows, computed in parallel row blocks.
pub fn pairwise_distance_matrix(ds: &Dataset, metric: Metric) -> Result<DistanceMatrix> {
    if metric == Metric::CosineDerived && !ds.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let n = ds.n();
    let sq: Vec<f64> = ds.rows().map(|r| dot(r, r)).collect();
    let mut values = vec![0.0; n * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, out)| {
            let xi = ds.row(i);
            for (j, cell) in out.iter_mut().enumerate() {
                if i == j {
                    continue;
                }
                // Compute each unordered pair once in a fixed orientation so the
                // matrix is exactly symmetric.
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                let (xa, xb) = if i < j { (xi, ds.row(j)) } else { (ds.row(j), xi) };
                *cell = match metric {
                    Metric::Euclidean => euclidean(xa, xb),
                    Metric::CosineDerived => {
                        chord_from_similarity(similarity_from_parts(dot(xa, xb), sq[a], sq[b]))
                    }
                };
            }
        });
    Ok(DistanceMatrix { n, values, metric })
}

/// Pairwise cosine similarities, `n x n` row-major, diagonal set to 1.
pub fn similarity_matrix(ds: &Dataset) -> Vec<f64> {
    let n = ds.n();
    let sq: Vec<f64> = ds.rows().map(|r| dot(r, r)).collect();
    let mut values = vec![1.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        for (j, cell) in out.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            *cell = similarity_from_parts(dot(ds.row(a), ds.row(b)), sq[a], sq[b]);
        }
    });
    values
}
