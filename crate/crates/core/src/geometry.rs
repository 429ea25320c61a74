//! Within- and between-profile similarity structure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ProfileOrdering};
use crate::error::{Error, Result};
use crate::simindex::{cosine_similarity, similarity_matrix};
use crate::stats::spearman;

/// Median, with the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Pairwise cosine similarity statistics per profile pair.
///
/// Matrices are `k x k` and indexed by `profile - 1`; only cells with `i <= j`
/// are filled. Diagonal cells of profiles with fewer than two members are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub median_matrix: Vec<Vec<Option<f64>>>,
    pub mean_matrix: Vec<Vec<Option<f64>>>,
    pub pair_counts: Vec<Vec<u64>>,
    pub undefined_profiles: Vec<u32>,
}

impl SimilaritySummary {
    pub fn k(&self) -> usize {
        self.median_matrix.len()
    }

    /// Median for profiles `a` and `b` (1-based, any order).
    pub fn median(&self, a: u32, b: u32) -> Option<f64> {
        let (i, j) = (a.min(b) as usize - 1, a.max(b) as usize - 1);
        self.median_matrix[i][j]
    }

    /// Within-profile medians in profile order.
    pub fn within_medians(&self) -> Vec<Option<f64>> {
        (0..self.k()).map(|i| self.median_matrix[i][i]).collect()
    }

    /// Whether within-profile medians strictly decrease from best to worst quality.
    pub fn diagonal_strictly_decreasing(&self, ordering: &ProfileOrdering) -> bool {
        let diag: Option<Vec<f64>> = ordering
            .by_quality()
            .into_iter()
            .map(|p| self.median(p, p))
            .collect();
        diag.is_some_and(|d| d.windows(2).all(|w| w[0] > w[1]))
    }

    /// For every profile after the best one, in quality order: whether its median
    /// similarity to the best profile exceeds its own within-profile median.
    pub fn strong_akp_flags(&self, ordering: &ProfileOrdering) -> Vec<StrongAkpFlag> {
        let order = ordering.by_quality();
        let best = order[0];
        order[1..]
            .iter()
            .map(|&p| {
                let cross = self.median(best, p);
                let within = self.median(p, p);
                StrongAkpFlag {
                    profile: p,
                    cross_to_best: cross,
                    within,
                    holds: match (cross, within) {
                        (Some(c), Some(w)) => Some(c > w),
                        _ => None,
                    },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongAkpFlag {
    pub profile: u32,
    pub cross_to_best: Option<f64>,
    pub within: Option<f64>,
    pub holds: Option<bool>,
}

fn require_normalized(ds: &Dataset) -> Result<()> {
    if ds.is_normalized() {
        Ok(())
    } else {
        Err(Error::NotNormalized)
    }
}

/// Medians and means of pairwise cosine similarity within and between profiles.
pub fn similarity_summary(ds: &Dataset) -> Result<SimilaritySummary> {
    require_normalized(ds)?;
    let n = ds.n();
    let k = ds.k();
    let sim = similarity_matrix(ds);
    let members = ds.members_by_profile();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let stats: Vec<(Option<f64>, Option<f64>, u64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut values = Vec::new();
            if i == j {
                let m = &members[i];
                for (a, &p) in m.iter().enumerate() {
                    values.extend(m[a + 1..].iter().map(|&q| sim[p * n + q]));
                }
            } else {
                for &p in &members[i] {
                    values.extend(members[j].iter().map(|&q| sim[p * n + q]));
                }
            }
            let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            (median(&values), mean, values.len() as u64)
        })
        .collect();

    let mut median_matrix = vec![vec![None; k]; k];
    let mut mean_matrix = vec![vec![None; k]; k];
    let mut pair_counts = vec![vec![0; k]; k];
    for (&(i, j), &(med, mean, count)) in cells.iter().zip(&stats) {
        median_matrix[i][j] = med;
        mean_matrix[i][j] = mean;
        pair_counts[i][j] = count;
    }
    let undefined_profiles = (0..k)
        .filter(|&i| median_matrix[i][i].is_none())
        .map(|i| i as u32 + 1)
        .collect();
    Ok(SimilaritySummary {
        median_matrix,
        mean_matrix,
        pair_counts,
        undefined_profiles,
    })
}

/// All within-profile pairwise cosine similarities, one list per profile.
pub fn within_profile_similarities(ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    require_normalized(ds)?;
    let n = ds.n();
    let sim = similarity_matrix(ds);
    Ok(ds
        .members_by_profile()
        .iter()
        .map(|m| {
            let mut values = Vec::with_capacity(m.len() * m.len().saturating_sub(1) / 2);
            for (a, &p) in m.iter().enumerate() {
                values.extend(m[a + 1..].iter().map(|&q| sim[p * n + q]));
            }
            values
        })
        .collect())
}

/// Componentwise mean of each profile's vectors, not renormalized.
pub fn profile_centroids(ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    require_normalized(ds)?;
    ds.members_by_profile()
        .iter()
        .enumerate()
        .map(|(p, members)| {
            if members.is_empty() {
                return Err(Error::Degenerate(format!("profile {} is empty", p + 1)));
            }
            let mut c = vec![0.0; ds.dim()];
            for &i in members {
                c.iter_mut().zip(ds.row(i)).for_each(|(s, v)| *s += v);
            }
            let m = members.len() as f64;
            c.iter_mut().for_each(|v| *v /= m);
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidRecord {
    pub id: String,
    pub profile: u32,
    /// `None` when the profile centroid is the zero vector.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSimilarities {
    pub records: Vec<CentroidRecord>,
    pub centroids: Vec<Vec<f64>>,
    pub zero_centroid_profiles: Vec<u32>,
}

impl CentroidSimilarities {
    /// Defined similarities grouped by profile, in profile order.
    pub fn by_profile(&self) -> Vec<Vec<f64>> {
        let mut groups = vec![Vec::new(); self.centroids.len()];
        for r in &self.records {
            if let Some(s) = r.similarity {
                groups[r.profile as usize - 1].push(s);
            }
        }
        groups
    }
}

/// Cosine similarity of every sample to its own profile's centroid.
pub fn centroid_similarities(ds: &Dataset) -> Result<CentroidSimilarities> {
    let centroids = profile_centroids(ds)?;
    let zero: Vec<bool> = centroids.iter().map(|c| c.iter().all(|&v| v == 0.0)).collect();
    let records = (0..ds.n())
        .map(|i| {
            let p = ds.profiles()[i];
            let c = &centroids[p as usize - 1];
            let similarity = if zero[p as usize - 1] {
                None
            } else {
                Some(cosine_similarity(ds.row(i), c)?)
            };
            Ok(CentroidRecord {
                id: ds.ids()[i].clone(),
                profile: p,
                similarity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let zero_centroid_profiles = zero
        .iter()
        .enumerate()
        .filter(|(_, &z)| z)
        .map(|(p, _)| p as u32 + 1)
        .collect();
    Ok(CentroidSimilarities {
        records,
        centroids,
        zero_centroid_profiles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AkpResult {
    pub spearman_rho: f64,
    pub p_value: f64,
    /// Similarity falls as quality rank worsens.
    pub direction_ok: bool,
    pub n: usize,
}

/// Spearman correlation between centroid similarity and quality rank (1 = best).
pub fn akp_correlation(cs: &CentroidSimilarities, ordering: &ProfileOrdering) -> Result<AkpResult> {
    if ordering.k() != cs.centroids.len() {
        return Err(Error::LengthMismatch {
            left: ordering.k(),
            right: cs.centroids.len(),
        });
    }
    let (sims, ranks): (Vec<f64>, Vec<f64>) = cs
        .records
        .iter()
        .filter_map(|r| r.similarity.map(|s| (s, ordering.rank(r.profile) as f64)))
        .unzip();
    if sims.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least three samples, got {}",
            sims.len()
        )));
    }
    if ranks.iter().all(|&r| r == ranks[0]) {
        return Err(Error::InvalidParameter(
            "need samples from at least two profiles".into(),
        ));
    }
    let t = spearman(&sims, &ranks)?;
    Ok(AkpResult {
        spearman_rho: t.statistic,
        p_value: t.p_value,
        direction_ok: t.statistic < 0.0,
        n: sims.len(),
    })
}
