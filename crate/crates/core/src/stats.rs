//! Rank-based tests: one-sample KS against a normal, Kruskal-Wallis, Dunn's
//! post-hoc comparisons and Spearman correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Largest sample size for which Spearman's p-value is computed by full permutation.
pub const EXACT_SPEARMAN_MAX_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
    pub adjustment: Option<String>,
    /// Set when the statistic fell back to a convention or the p-value carries a known bias.
    pub caveat: Option<String>,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, method: &str) -> Self {
        TestResult {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            method: method.to_string(),
            adjustment: None,
            caveat: None,
        }
    }

    fn with_caveat(mut self, caveat: &str) -> Self {
        self.caveat = Some(caveat.to_string());
        self
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite { row: i + 1 }),
        None => Ok(()),
    }
}

/// 1-based mid-ranks plus the tie sizes encountered.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Reference normal for [`ks_test_normal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KsReference {
    /// Mean and standard deviation taken from the sample itself.
    Estimated,
    Fixed { mean: f64, sd: f64 },
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small lambda.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (c * m * m).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sided one-sample Kolmogorov-Smirnov test against a normal distribution.
pub fn ks_test_normal(sample: &[f64], reference: KsReference) -> Result<TestResult> {
    if sample.is_empty() {
        return Err(Error::Empty);
    }
    check_finite(sample)?;
    let n = sample.len() as f64;
    let (mean, sd) = match reference {
        KsReference::Fixed { mean, sd } => {
            if !(sd > 0.0) || !mean.is_finite() || !sd.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "reference normal needs finite mean and sd > 0, got ({mean}, {sd})"
                )));
            }
            (mean, sd)
        }
        KsReference::Estimated => {
            if sample.len() < 2 {
                return Err(Error::Degenerate(
                    "cannot estimate a standard deviation from one value".into(),
                ));
            }
            let mean = sample.iter().sum::<f64>() / n;
            let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if !(var > 0.0) {
                return Err(Error::Degenerate("zero-variance sample".into()));
            }
            (mean, var.sqrt())
        }
    };
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let result = TestResult::new(d, kolmogorov_sf(n.sqrt() * d), "kolmogorov_smirnov_normal");
    Ok(match reference {
        KsReference::Estimated => result.with_caveat(
            "parameters estimated from the sample; the Kolmogorov p-value is conservative",
        ),
        KsReference::Fixed { .. } => result,
    })
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two groups, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().position(Vec::is_empty) {
        return Err(Error::InvalidParameter(format!("group {} is empty", g + 1)));
    }
    groups.iter().try_for_each(|g| check_finite(g))
}

struct PooledRanks {
    mean_ranks: Vec<f64>,
    sizes: Vec<usize>,
    n: f64,
    tie_sum: f64,
}

fn pooled_ranks(groups: &[Vec<f64>]) -> PooledRanks {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        let sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        mean_ranks.push(sum / g.len() as f64);
        offset += g.len();
    }
    PooledRanks {
        mean_ranks,
        sizes: groups.iter().map(Vec::len).collect(),
        n: pooled.len() as f64,
        tie_sum: tie_sum(&ties),
    }
}

/// Kruskal-Wallis H with tie correction.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    check_groups(groups)?;
    let r = pooled_ranks(groups);
    if r.n < 3.0 {
        return Err(Error::InvalidParameter("need at least three observations".into()));
    }
    let n = r.n;
    let correction = 1.0 - r.tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(TestResult::new(0.0, 1.0, "kruskal_wallis")
            .with_caveat("all values tied; H set to 0"));
    }
    let spread: f64 = r
        .mean_ranks
        .iter()
        .zip(&r.sizes)
        .map(|(&m, &s)| s as f64 * (m - (n + 1.0) / 2.0).powi(2))
        .sum();
    let h = (12.0 / (n * (n + 1.0)) * spread / correction).max(0.0);
    let chi = ChiSquared::new((groups.len() - 1) as f64).expect("positive df");
    Ok(TestResult::new(h, chi.sf(h), "kruskal_wallis"))
}

/// Multiplicity adjustment for pairwise p-values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    None,
    #[default]
    Bonferroni,
    Holm,
}

impl Adjustment {
    pub fn name(self) -> &'static str {
        match self {
            Adjustment::None => "none",
            Adjustment::Bonferroni => "bonferroni",
            Adjustment::Holm => "holm",
        }
    }

    /// Adjust `p` in place.
    pub fn apply(self, p: &mut [f64]) {
        let m = p.len() as f64;
        match self {
            Adjustment::None => {}
            Adjustment::Bonferroni => p.iter_mut().for_each(|v| *v = (*v * m).min(1.0)),
            Adjustment::Holm => {
                let mut order: Vec<usize> = (0..p.len()).collect();
                order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
                let mut running: f64 = 0.0;
                for (step, &i) in order.iter().enumerate() {
                    running = running.max(((m - step as f64) * p[i]).min(1.0));
                    p[i] = running;
                }
            }
        }
    }
}

impl std::str::FromStr for Adjustment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Adjustment::None),
            "bonferroni" => Ok(Adjustment::Bonferroni),
            "holm" => Ok(Adjustment::Holm),
            other => Err(Error::InvalidParameter(format!("unknown adjustment '{other}'"))),
        }
    }
}

/// Pairwise Dunn comparisons. Diagonal cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocMatrix {
    pub z: Vec<Vec<Option<f64>>>,
    pub p_values: Vec<Vec<Option<f64>>>,
    pub adjustment: Adjustment,
}

impl PosthocMatrix {
    pub fn k(&self) -> usize {
        self.z.len()
    }
}

/// Dunn's test on pooled mid-ranks; `z[i][j] > 0` when group `i` ranks higher.
pub fn dunn_posthoc(groups: &[Vec<f64>], adjustment: Adjustment) -> Result<PosthocMatrix> {
    check_groups(groups)?;
    let k = groups.len();
    let r = pooled_ranks(groups);
    let n = r.n;
    let sigma2 = n * (n + 1.0) / 12.0 - if n > 1.0 { r.tie_sum / (12.0 * (n - 1.0)) } else { 0.0 };
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");

    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    let mut z = vec![vec![None; k]; k];
    let mut raw = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let se = (sigma2 * (1.0 / r.sizes[i] as f64 + 1.0 / r.sizes[j] as f64)).sqrt();
            let zij = if se > 0.0 {
                (r.mean_ranks[i] - r.mean_ranks[j]) / se
            } else {
                0.0
            };
            z[i][j] = Some(zij);
            z[j][i] = Some(-zij);
            raw.push((2.0 * std_normal.sf(zij.abs())).min(1.0));
            pairs.push((i, j));
        }
    }
    adjustment.apply(&mut raw);
    let mut p_values = vec![vec![None; k]; k];
    for (&(i, j), &p) in pairs.iter().zip(&raw) {
        p_values[i][j] = Some(p);
        p_values[j][i] = Some(p);
    }
    Ok(PosthocMatrix {
        z,
        p_values,
        adjustment,
    })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Heap's algorithm over every ordering of `ry`, counting how often the
/// permuted correlation is at least as extreme as `observed`.
fn exact_spearman_p(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let n = ry.len();
    let mut perm = ry.to_vec();
    let mut c = vec![0usize; n];
    let threshold = observed.abs() - 1e-12;
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).abs() >= threshold {
            extreme += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Spearman rank correlation with a two-sided p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "spearman needs at least three pairs, got {}",
            x.len()
        )));
    }
    check_finite(x)?;
    check_finite(y)?;
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Degenerate(
            "spearman correlation is undefined for a constant input".into(),
        ));
    }
    let (rx, _) = midranks(x);
    let (ry, _) = midranks(y);
    let rho = pearson(&rx, &ry);
    let n = x.len();
    if n <= EXACT_SPEARMAN_MAX_N {
        return Ok(TestResult::new(rho, exact_spearman_p(&rx, &ry, rho), "spearman_exact"));
    }
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
        2.0 * dist.sf(t.abs())
    };
    Ok(TestResult::new(rho, p, "spearman_t"))
}
