//! Agreement between gold profiles and fitted clusters.
//!
//! Global agreement is the pair-counting Adjusted Rand Index. Per-profile
//! agreement treats every fitted cluster as an attempt to retrieve a profile
//! and scores it with precision, recall and F1 over a contingency table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ProfileOrdering;
use crate::error::{Error, Result};
use crate::kmeans::NOISE;

/// How noise points (label -1) enter a contingency table or ARI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// Noise is one more column.
    #[default]
    AsCluster,
    /// Noise points are dropped before counting.
    Exclude,
}

impl std::str::FromStr for NoisePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "as_cluster" | "cluster" => Ok(NoisePolicy::AsCluster),
            "exclude" => Ok(NoisePolicy::Exclude),
            other => Err(Error::InvalidParameter(format!("unknown noise policy '{other}'"))),
        }
    }
}

/// Profile x cluster counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Gold profile of each row.
    pub profiles: Vec<u32>,
    /// Fitted label of each column; the noise column, if any, is last.
    pub clusters: Vec<i32>,
    pub counts: Vec<Vec<u64>>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    /// Table from raw counts; rows are profiles `1..=k`, columns clusters `0..f`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let f = counts.first().map_or(0, Vec::len);
        if counts.is_empty() || f == 0 {
            return Err(Error::Empty);
        }
        if let Some(bad) = counts.iter().find(|r| r.len() != f) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: f,
            });
        }
        let profiles = (1..=counts.len() as u32).collect();
        let clusters = (0..f as i32).collect();
        Ok(Self::with_labels(profiles, clusters, counts))
    }

    fn with_labels(profiles: Vec<u32>, clusters: Vec<i32>, counts: Vec<Vec<u64>>) -> Self {
        let row_totals: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_totals: Vec<u64> = (0..clusters.len())
            .map(|j| counts.iter().map(|r| r[j]).sum())
            .collect();
        let n = row_totals.iter().sum();
        ContingencyTable {
            profiles,
            clusters,
            counts,
            row_totals,
            col_totals,
            n,
        }
    }

    pub fn k(&self) -> usize {
        self.profiles.len()
    }

    pub fn f(&self) -> usize {
        self.clusters.len()
    }

    pub fn noise_column(&self) -> Option<usize> {
        self.clusters.iter().position(|&c| c == NOISE)
    }

    /// Spreadsheet-style column names: A, B, ..., Z, AA, ...; noise is `noise`.
    pub fn column_names(&self) -> Vec<String> {
        let mut next = 0;
        self.clusters
            .iter()
            .map(|&c| {
                if c == NOISE {
                    return "noise".to_string();
                }
                let name = column_letter(next);
                next += 1;
                name
            })
            .collect()
    }
}

fn column_letter(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Count gold profile x fitted cluster co-occurrences.
pub fn contingency(gold: &[u32], fitted: &[i32], policy: NoisePolicy) -> Result<ContingencyTable> {
    if gold.len() != fitted.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: fitted.len(),
        });
    }
    let mut profiles: Vec<u32> = gold.to_vec();
    profiles.sort_unstable();
    profiles.dedup();
    let mut clusters: Vec<i32> = fitted
        .iter()
        .zip(gold)
        .filter(|(&l, _)| !(policy == NoisePolicy::Exclude && l == NOISE))
        .map(|(&l, _)| l)
        .collect();
    clusters.sort_unstable_by_key(|&l| (l == NOISE, l));
    clusters.dedup();
    let mut counts = vec![vec![0u64; clusters.len()]; profiles.len()];
    for (&g, &l) in gold.iter().zip(fitted) {
        if policy == NoisePolicy::Exclude && l == NOISE {
            continue;
        }
        let r = profiles.binary_search(&g).expect("profile present");
        let c = clusters.iter().position(|&x| x == l).expect("cluster present");
        counts[r][c] += 1;
    }
    Ok(ContingencyTable::with_labels(profiles, clusters, counts))
}

/// Raw pair counts behind the Rand index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Pairs together in both labelings.
    pub same_same: u64,
    /// Pairs apart in both labelings.
    pub diff_diff: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub ri: f64,
    pub ari: f64,
    pub pair_counts: PairCounts,
    /// The chance-adjustment denominator vanished; `ari` then follows the
    /// identical-up-to-renaming convention (1 or 0).
    pub degenerate: bool,
}

fn choose2(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// Adjusted Rand Index via the contingency-table closed form, evaluated in exact
/// integer arithmetic and divided once at the end.
pub fn adjusted_rand_index<A, B>(x: &[A], y: &[B]) -> Result<AgreementResult>
where
    A: Ord + Copy,
    B: Ord + Copy,
{
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len() as u64;
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "ARI needs at least two items, got {n}"
        )));
    }
    let mut cells: BTreeMap<(A, B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<B, u64> = BTreeMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *cells.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let total = choose2(n);
    let index: i128 = cells.values().map(|&c| choose2(c)).sum();
    let sum_rows: i128 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: i128 = cols.values().map(|&c| choose2(c)).sum();

    let same_same = index;
    let diff_diff = total - sum_rows - sum_cols + index;
    let ri = (same_same + diff_diff) as f64 / total as f64;

    // ARI = (index - rows*cols/total) / ((rows+cols)/2 - rows*cols/total),
    // multiplied through by 2 * total.
    let numerator = 2 * (total * index - sum_rows * sum_cols);
    let denominator = total * (sum_rows + sum_cols) - 2 * sum_rows * sum_cols;
    let (ari, degenerate) = if denominator == 0 {
        let identical = cells.len() == rows.len() && cells.len() == cols.len();
        (if identical { 1.0 } else { 0.0 }, true)
    } else {
        (numerator as f64 / denominator as f64, false)
    };
    Ok(AgreementResult {
        ri,
        ari,
        pair_counts: PairCounts {
            same_same: same_same as u64,
            diff_diff: diff_diff as u64,
            total: total as u64,
        },
        degenerate,
    })
}

/// Best-scoring column for one profile (or band).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub column: usize,
    pub cluster: i32,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub precision: Vec<Vec<f64>>,
    pub recall: Vec<Vec<f64>>,
    pub f1: Vec<Vec<f64>>,
    pub best_per_profile: Vec<BestMatch>,
}

#[inline]
fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// F1 of retrieving a set of size `relevant` with a cluster of size `retrieved`
/// sharing `hits` members: `2 hits / (relevant + retrieved)`.
#[inline]
fn f1_score(hits: u64, relevant: u64, retrieved: u64) -> f64 {
    ratio(2 * hits, relevant + retrieved)
}

fn best_column(scores: &[f64], clusters: &[i32]) -> BestMatch {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = j;
        }
    }
    BestMatch {
        column: best,
        cluster: clusters[best],
        f1: scores[best],
    }
}

/// Precision, recall and F1 of every (profile, cluster) cell.
pub fn retrieval_scores(table: &ContingencyTable) -> Result<RetrievalScores> {
    if table.k() == 0 || table.f() == 0 || table.n == 0 {
        return Err(Error::Empty);
    }
    if let Some(r) = table.row_totals.iter().position(|&t| t == 0) {
        return Err(Error::Degenerate(format!(
            "profile {} has no members in the table",
            table.profiles[r]
        )));
    }
    let mut precision = Vec::with_capacity(table.k());
    let mut recall = Vec::with_capacity(table.k());
    let mut f1 = Vec::with_capacity(table.k());
    for (row, &size) in table.counts.iter().zip(&table.row_totals) {
        precision.push(
            row.iter()
                .zip(&table.col_totals)
                .map(|(&a, &c)| ratio(a, c))
                .collect::<Vec<_>>(),
        );
        recall.push(row.iter().map(|&a| ratio(a, size)).collect::<Vec<_>>());
        f1.push(
            row.iter()
                .zip(&table.col_totals)
                .map(|(&a, &c)| f1_score(a, size, c))
                .collect::<Vec<_>>(),
        );
    }
    let best_per_profile = f1.iter().map(|r| best_column(r, &table.clusters)).collect();
    Ok(RetrievalScores {
        precision,
        recall,
        f1,
        best_per_profile,
    })
}

/// Retrieval quality of one pooled group of profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScore {
    pub profiles: Vec<u32>,
    pub size: u64,
    pub best: BestMatch,
    pub precision: f64,
    pub recall: f64,
}

/// Pool the rows of each band and score its best single-cluster retrieval.
/// `bands` must partition the table's profiles.
pub fn score_grouping(table: &ContingencyTable, bands: &[Vec<u32>]) -> Result<Vec<BandScore>> {
    if table.f() == 0 {
        return Err(Error::Empty);
    }
    let mut seen = vec![false; table.k()];
    let mut out = Vec::with_capacity(bands.len());
    for band in bands {
        if band.is_empty() {
            return Err(Error::InvalidParameter("empty band".into()));
        }
        let mut pooled = vec![0u64; table.f()];
        let mut size = 0;
        for p in band {
            let r = table
                .profiles
                .iter()
                .position(|x| x == p)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown profile {p}")))?;
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidParameter(format!("profile {p} in two bands")));
            }
            pooled.iter_mut().zip(&table.counts[r]).for_each(|(s, &c)| *s += c);
            size += table.row_totals[r];
        }
        let f1: Vec<f64> = pooled
            .iter()
            .zip(&table.col_totals)
            .map(|(&a, &c)| f1_score(a, size, c))
            .collect();
        let best = best_column(&f1, &table.clusters);
        out.push(BandScore {
            profiles: band.clone(),
            size,
            best,
            precision: ratio(pooled[best.column], table.col_totals[best.column]),
            recall: ratio(pooled[best.column], size),
        });
    }
    if let Some(r) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidParameter(format!(
            "profile {} is not in any band",
            table.profiles[r]
        )));
    }
    Ok(out)
}

/// Which profile partitions a grouped search considers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMode {
    /// Bands are runs of consecutive quality ranks.
    #[default]
    Contiguous,
    /// Every set partition (limited to k <= 8).
    Exhaustive,
}

/// Largest profile count accepted by the exhaustive grouping search.
pub const MAX_EXHAUSTIVE_PROFILES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGrouping {
    pub bands: Vec<Vec<u32>>,
    pub scores: Vec<BandScore>,
    pub mean_f1: f64,
}

impl ScoredGrouping {
    pub fn f1_per_band(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.best.f1).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedResult {
    pub mode: GroupingMode,
    pub max_bands: usize,
    pub candidates: Vec<ScoredGrouping>,
    /// Index of the grouping with the highest mean band F1 (first on ties).
    pub best: usize,
}

impl GroupedResult {
    pub fn best_grouping(&self) -> &ScoredGrouping {
        &self.candidates[self.best]
    }
}

/// Search partitions of the profiles into 2..=`max_bands` bands for the one whose
/// bands are best retrieved on average.
pub fn grouped_profile_search(
    table: &ContingencyTable,
    ordering: &ProfileOrdering,
    max_bands: usize,
    mode: GroupingMode,
) -> Result<GroupedResult> {
    if max_bands < 2 {
        return Err(Error::InvalidParameter("max_bands must be >= 2".into()));
    }
    if ordering.k() != table.k() {
        return Err(Error::LengthMismatch {
            left: ordering.k(),
            right: table.k(),
        });
    }
    let by_quality: Vec<u32> = ordering
        .by_quality()
        .into_iter()
        .map(|p| table.profiles[p as usize - 1])
        .collect();
    let partitions = match mode {
        GroupingMode::Contiguous => contiguous_partitions(&by_quality, max_bands),
        GroupingMode::Exhaustive => {
            if table.k() > MAX_EXHAUSTIVE_PROFILES {
                return Err(Error::InvalidParameter(format!(
                    "exhaustive grouping supports at most {MAX_EXHAUSTIVE_PROFILES} profiles"
                )));
            }
            set_partitions(&by_quality, max_bands)
        }
    };
    if partitions.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least two profiles to form bands".into(),
        ));
    }
    let mut candidates = Vec::with_capacity(partitions.len());
    for bands in partitions {
        let scores = score_grouping(table, &bands)?;
        let mean_f1 = scores.iter().map(|s| s.best.f1).sum::<f64>() / scores.len() as f64;
        candidates.push(ScoredGrouping {
            bands,
            scores,
            mean_f1,
        });
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean_f1 > candidates[best].mean_f1 {
            best = i;
        }
    }
    Ok(GroupedResult {
        mode,
        max_bands,
        candidates,
        best,
    })
}

/// Cuts of the quality-ordered list into `2..=max_bands` runs, fewest bands first.
fn contiguous_partitions(ordered: &[u32], max_bands: usize) -> Vec<Vec<Vec<u32>>> {
    let k = ordered.len();
    let mut out = Vec::new();
    for bands in 2..=max_bands.min(k) {
        let mut cuts: Vec<usize> = (1..bands).collect();
        loop {
            let mut start = 0;
            let mut partition = Vec::with_capacity(bands);
            for &c in cuts.iter().chain(std::iter::once(&k)) {
                partition.push(ordered[start..c].to_vec());
                start = c;
            }
            out.push(partition);
            // Next combination of cut positions in 1..k.
            let m = cuts.len();
            let Some(i) = (0..m).rev().find(|&i| cuts[i] < k - (m - i)) else {
                break;
            };
            cuts[i] += 1;
            for j in i + 1..m {
                cuts[j] = cuts[j - 1] + 1;
            }
        }
    }
    out
}

/// All set partitions with 2..=`max_bands` blocks, via restricted growth strings.
fn set_partitions(ordered: &[u32], max_bands: usize) -> Vec<Vec<Vec<u32>>> {
    let k = ordered.len();
    let mut out = Vec::new();
    if k < 2 {
        return out;
    }
    let mut growth = vec![0usize; k];
    loop {
        let blocks = growth.iter().max().map_or(0, |m| m + 1);
        if (2..=max_bands).contains(&blocks) {
            let mut partition = vec![Vec::new(); blocks];
            for (i, &b) in growth.iter().enumerate() {
                partition[b].push(ordered[i]);
            }
            out.push(partition);
        }
        // Increment the restricted growth string.
        let mut i = k - 1;
        loop {
            let prefix_max = growth[..i].iter().max().copied().unwrap_or(0);
            if i > 0 && growth[i] <= prefix_max && growth[i] + 1 < max_bands {
                growth[i] += 1;
                growth[i + 1..].iter_mut().for_each(|g| *g = 0);
                break;
            }
            if i <= 1 {
                return out;
            }
            i -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contingency_examples() {
        let t = contingency(&[1, 1, 2, 2], &[0, 0, 1, 1], NoisePolicy::AsCluster).unwrap();
        assert_eq!(t.counts, vec![vec![2, 0], vec![0, 2]]);
        let t = contingency(&[1, 1, 2, 2], &[0, 0, 0, 0], NoisePolicy::AsCluster).unwrap();
        assert_eq!(t.counts, vec![vec![2], vec![2]]);

        let t = contingency(&[1, 2], &[-1, 0], NoisePolicy::AsCluster).unwrap();
        assert_eq!(t.clusters, vec![0, -1]);
        assert_eq!(t.counts, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(t.noise_column(), Some(1));
        assert_eq!(t.column_names(), vec!["A", "noise"]);

        let t = contingency(&[1, 2], &[-1, 0], NoisePolicy::Exclude).unwrap();
        assert_eq!(t.n, 1);
        assert_eq!(t.counts, vec![vec![0], vec![1]]);
        assert!(contingency(&[1], &[0, 0], NoisePolicy::AsCluster).is_err());
    }

    #[test]
    fn ari_examples() {
        let r = adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.ari, 1.0);
        let r = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(r.ari, -0.5);
        let r = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap();
        assert_eq!(r.ari, 4.0 / 7.0);
        assert_eq!(r.pair_counts.same_same, 1);
        assert_eq!(r.pair_counts.diff_diff, 4);
        assert_eq!(r.ri, 5.0 / 6.0);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
    }

    #[test]
    fn ari_degenerate_conventions() {
        let r = adjusted_rand_index(&[0, 0, 0], &[5, 5, 5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.ari, 1.0);
        let r = adjusted_rand_index(&[0, 1, 2], &[0, 1, 2]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.ari, 1.0);
        // One block against all singletons has a nonzero denominator.
        let r = adjusted_rand_index(&[0, 0, 0], &[0, 1, 2]).unwrap();
        assert!(!r.degenerate);
        assert_eq!(r.ari, 0.0);
    }

    #[test]
    fn diagonal_table_scores_one() {
        let t = ContingencyTable::from_counts(vec![vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 9]]).unwrap();
        let s = retrieval_scores(&t).unwrap();
        for (p, b) in s.best_per_profile.iter().enumerate() {
            assert_eq!(b.column, p);
            assert_eq!(b.f1, 1.0);
        }
    }

    #[test]
    fn empty_and_zero_row_tables() {
        assert!(ContingencyTable::from_counts(vec![]).is_err());
        let t = ContingencyTable::from_counts(vec![vec![1, 2], vec![0, 0]]).unwrap();
        assert!(retrieval_scores(&t).is_err());
    }

    #[test]
    fn f1_ties_go_to_lowest_column() {
        let t = ContingencyTable::from_counts(vec![vec![2, 2], vec![1, 1]]).unwrap();
        let s = retrieval_scores(&t).unwrap();
        assert_eq!(s.best_per_profile[0].column, 0);
    }

    #[test]
    fn whole_dataset_band() {
        let t = ContingencyTable::from_counts(vec![vec![3], vec![4], vec![5]]).unwrap();
        let s = score_grouping(&t, &[vec![1, 2, 3]]).unwrap();
        assert_eq!(s[0].best.f1, 1.0);
        assert_eq!((s[0].precision, s[0].recall), (1.0, 1.0));
        assert!(score_grouping(&t, &[vec![1, 2]]).is_err());
        assert!(score_grouping(&t, &[vec![1, 2], vec![2, 3]]).is_err());
    }

    #[test]
    fn contiguous_enumeration() {
        let parts = contiguous_partitions(&[1, 2, 3, 4], 3);
        // C(3,1) two-band + C(3,2) three-band splits.
        assert_eq!(parts.len(), 6);
        assert_eq!(parts[0], vec![vec![1], vec![2, 3, 4]]);
        assert_eq!(parts[3], vec![vec![1], vec![2], vec![3, 4]]);
    }

    #[test]
    fn exhaustive_enumeration_counts() {
        // Stirling numbers S(4,2) = 7, S(4,3) = 6.
        assert_eq!(set_partitions(&[1, 2, 3, 4], 2).len(), 7);
        assert_eq!(set_partitions(&[1, 2, 3, 4], 3).len(), 13);
        // Bell(5) - 1 (the single block)
        assert_eq!(set_partitions(&[1, 2, 3, 4, 5], 5).len(), 51);
    }

    #[test]
    fn search_respects_ordering() {
        let t = ContingencyTable::from_counts(vec![
            vec![10, 0],
            vec![0, 10],
            vec![10, 0],
        ])
        .unwrap();
        let contiguous =
            grouped_profile_search(&t, &ProfileOrdering::identity(3), 2, GroupingMode::Contiguous).unwrap();
        assert!(contiguous.best_grouping().mean_f1 < 1.0);
        let exhaustive =
            grouped_profile_search(&t, &ProfileOrdering::identity(3), 2, GroupingMode::Exhaustive).unwrap();
        assert_eq!(exhaustive.best_grouping().bands, vec![vec![1, 3], vec![2]]);
        assert_eq!(exhaustive.best_grouping().mean_f1, 1.0);
        let reordered = ProfileOrdering::from_ranks(vec![1, 3, 2]).unwrap();
        let r = grouped_profile_search(&t, &reordered, 2, GroupingMode::Contiguous).unwrap();
        assert_eq!(r.best_grouping().mean_f1, 1.0);
        assert!(grouped_profile_search(&t, &reordered, 1, GroupingMode::Contiguous).is_err());
    }
}
