//! HDBSCAN over a dense distance matrix.
//!
//! The pipeline is the usual one: core distances, mutual reachability, a
//! minimum spanning tree (Prim's, dense `O(n^2)`), the single-linkage
//! hierarchy, the condensed tree, and excess-of-mass cluster selection.
//!
//! Two conventions differ from some other implementations:
//!
//! * `min_samples` counts *other* points, so the core distance of a point is the
//!   distance to its `min_samples`-th nearest neighbour with the point itself
//!   excluded.
//! * Merges that happen at exactly the same distance are condensed as a single
//!   multi-way split. If the condensed tree ends up with no cluster below the
//!   root, the root itself is returned as the only cluster.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agreement::{adjusted_rand_index, NoisePolicy};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::{canonicalize, ClusterAssignment, Source, NOISE};
use crate::simindex::{pairwise_distance_matrix, DistanceMatrix, Metric};

/// Grid searched by default for `min_cluster_size`.
pub const DEFAULT_MCS_GRID: [usize; 8] = [3, 4, 5, 10, 15, 20, 30, 40];
/// Grid searched by default for `min_samples`.
pub const DEFAULT_MS_GRID: [usize; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub metric: Metric,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize, min_samples: usize, metric: Metric) -> Self {
        HdbscanParams {
            min_cluster_size,
            min_samples,
            metric,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "min_cluster_size must be >= 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.min_samples < 1 {
            return Err(Error::InvalidParameter("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Distance from each point to its `min_samples`-th nearest other point.
pub fn core_distances(d: &DistanceMatrix, min_samples: usize) -> Result<Vec<f64>> {
    let n = d.n();
    if min_samples == 0 || min_samples >= n {
        return Err(Error::InvalidParameter(format!(
            "min_samples = {min_samples} must be in 1..={}",
            n.saturating_sub(1)
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<f64> = d
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| v)
                .collect();
            let (_, kth, _) = others.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// `max(core[i], core[j], d[i][j])` off the diagonal, zero on it.
pub fn mutual_reachability(d: &DistanceMatrix, core: &[f64]) -> Result<DistanceMatrix> {
    let n = d.n();
    if core.len() != n {
        return Err(Error::LengthMismatch {
            left: core.len(),
            right: n,
        });
    }
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j {
                *cell = d.get(i, j).max(core[i]).max(core[j]);
            }
        }
    });
    Ok(DistanceMatrix::from_raw(n, values, d.metric()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Minimum spanning tree of a dense symmetric matrix (Prim's algorithm).
pub fn build_mst(m: &DistanceMatrix) -> Result<Vec<MstEdge>> {
    let n = m.n();
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "distance matrix has non-finite entries".into(),
        ));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let row = m.row(current);
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            if row[v] < best[v] {
                best[v] = row[v];
                parent[v] = current;
            }
            if next == usize::MAX || best[v] < next_w {
                next = v;
                next_w = best[v];
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: parent[next],
            b: next,
            weight: next_w,
        });
        current = next;
    }
    Ok(edges)
}

/// Merge record of the single-linkage hierarchy. Ids below `n` are points;
/// node `n + i` is the `i`-th merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkageNode {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLinkage {
    pub n_points: usize,
    pub nodes: Vec<LinkageNode>,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..2 * n).collect(),
            size: (0..2 * n).map(|i| usize::from(i < n)).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Kruskal-style merge of MST edges in weight order.
pub fn single_linkage(mst: &[MstEdge], n_points: usize) -> SingleLinkage {
    let mut sorted = mst.to_vec();
    sorted.sort_by(|x, y| x.weight.total_cmp(&y.weight));
    let mut uf = UnionFind::new(n_points.max(1));
    let mut nodes = Vec::with_capacity(sorted.len());
    for (i, e) in sorted.iter().enumerate() {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let id = n_points + i;
        let size = uf.size[ra] + uf.size[rb];
        nodes.push(LinkageNode {
            left: ra,
            right: rb,
            distance: e.weight,
            size,
        });
        uf.parent[ra] = id;
        uf.parent[rb] = id;
        uf.size[id] = size;
    }
    SingleLinkage { n_points, nodes }
}

/// One edge of the condensed tree. `child < n_points` means a point falling out
/// of `parent`; otherwise `child` is a cluster born at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    /// `1 / distance`, infinite for zero distance.
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub min_cluster_size: usize,
    pub edges: Vec<CondensedEdge>,
    /// Clusters are numbered `n_points .. n_points + n_clusters`; the root is `n_points`.
    pub n_clusters: usize,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn is_cluster(&self, id: usize) -> bool {
        id >= self.n_points
    }

    /// Parent cluster of every cluster (`None` for the root), indexed by `id - n_points`.
    pub fn cluster_parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.n_clusters];
        for e in self.edges.iter().filter(|e| self.is_cluster(e.child)) {
            parents[e.child - self.n_points] = Some(e.parent);
        }
        parents
    }

    /// Lambda at which every cluster appeared (0 for the root).
    pub fn births(&self) -> Vec<f64> {
        let mut births = vec![0.0; self.n_clusters];
        for e in self.edges.iter().filter(|e| self.is_cluster(e.child)) {
            births[e.child - self.n_points] = e.lambda;
        }
        births
    }

    /// Member count of every cluster at birth.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        if self.n_clusters > 0 {
            sizes[0] = self.n_points;
        }
        for e in self.edges.iter().filter(|e| self.is_cluster(e.child)) {
            sizes[e.child - self.n_points] = e.child_size;
        }
        sizes
    }

    /// Excess of mass: `sum over members of (lambda_out - lambda_birth)`.
    pub fn stabilities(&self) -> Vec<f64> {
        let births = self.births();
        let mut stability = vec![0.0; self.n_clusters];
        for e in &self.edges {
            let c = e.parent - self.n_points;
            if e.lambda != births[c] {
                stability[c] += (e.lambda - births[c]) * e.child_size as f64;
            }
        }
        stability
    }
}

/// Condense a single-linkage hierarchy: splits only count when at least two
/// sides keep `min_cluster_size` points.
pub fn condense_tree(sl: &SingleLinkage, min_cluster_size: usize) -> CondensedTree {
    let n = sl.n_points;
    let mut edges = Vec::new();
    let mut next_label = n + 1;
    let size_of = |id: usize| if id < n { 1 } else { sl.nodes[id - n].size };

    let leaves_of = |id: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let node = &sl.nodes[x - n];
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        out
    };

    let mut queue = VecDeque::new();
    if let Some(root) = sl.nodes.len().checked_sub(1) {
        queue.push_back((n + root, n));
    }
    while let Some((node_id, label)) = queue.pop_front() {
        let node = &sl.nodes[node_id - n];
        let distance = node.distance;
        let lambda = if distance > 0.0 { 1.0 / distance } else { f64::INFINITY };

        // Flatten merges at the same height into one multi-way split.
        let mut children = Vec::new();
        let mut stack = vec![node.right, node.left];
        while let Some(c) = stack.pop() {
            if c >= n && sl.nodes[c - n].distance == distance {
                stack.push(sl.nodes[c - n].right);
                stack.push(sl.nodes[c - n].left);
            } else {
                children.push(c);
            }
        }

        let big = children
            .iter()
            .filter(|&&c| size_of(c) >= min_cluster_size)
            .count();
        for &c in &children {
            let size = size_of(c);
            if size >= min_cluster_size {
                if big >= 2 {
                    let child_label = next_label;
                    next_label += 1;
                    edges.push(CondensedEdge {
                        parent: label,
                        child: child_label,
                        lambda,
                        child_size: size,
                    });
                    queue.push_back((c, child_label));
                } else {
                    queue.push_back((c, label));
                }
            } else {
                edges.extend(leaves_of(c).into_iter().map(|p| CondensedEdge {
                    parent: label,
                    child: p,
                    lambda,
                    child_size: 1,
                }));
            }
        }
    }
    CondensedTree {
        n_points: n,
        min_cluster_size,
        edges,
        n_clusters: if sl.nodes.is_empty() { 0 } else { next_label - n },
    }
}

/// Selected clusters plus the labels they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub assignment: ClusterAssignment,
    /// Condensed-tree ids of the selected clusters, in output label order.
    pub selected: Vec<usize>,
    pub stabilities: Vec<f64>,
}

/// Excess-of-mass selection over the condensed tree.
pub fn extract_clusters(tree: &CondensedTree) -> Extraction {
    let n = tree.n_points;
    let nc = tree.n_clusters;
    let stability = tree.stabilities();
    if nc == 0 {
        return Extraction {
            assignment: all_noise(n),
            selected: Vec::new(),
            stabilities: stability,
        };
    }
    let parents = tree.cluster_parents();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for (c, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[p - n].push(c);
        }
    }

    let mut selected = vec![false; nc];
    if nc == 1 {
        selected[0] = true;
    } else {
        let mut subtree = stability.clone();
        for c in (1..nc).rev() {
            let child_sum: f64 = children[c].iter().map(|&ch| subtree[ch]).sum();
            if !children[c].is_empty() && child_sum > subtree[c] {
                subtree[c] = child_sum;
            } else {
                selected[c] = true;
                let mut stack = children[c].clone();
                while let Some(d) = stack.pop() {
                    selected[d] = false;
                    stack.extend(children[d].iter().copied());
                }
            }
        }
        // Children were visited before their parents, so a parent that is
        // selected later has already cleared its descendants.
    }

    let mut fell_from = vec![usize::MAX; n];
    for e in tree.edges.iter().filter(|e| e.child < n) {
        fell_from[e.child] = e.parent - n;
    }
    let raw: Vec<i32> = fell_from
        .iter()
        .map(|&start| {
            let mut c = Some(start);
            while let Some(cur) = c {
                if selected[cur] {
                    return cur as i32;
                }
                c = parents[cur].map(|p| p - n);
            }
            NOISE
        })
        .collect();
    let (labels, order) = canonicalize(&raw);
    Extraction {
        assignment: ClusterAssignment {
            n_clusters: order.len(),
            labels,
            inertia: None,
            source: Source::Hdbscan,
        },
        selected: order.iter().map(|&c| c as usize + n).collect(),
        stabilities: stability,
    }
}

fn all_noise(n: usize) -> ClusterAssignment {
    ClusterAssignment {
        labels: vec![NOISE; n],
        n_clusters: 0,
        inertia: None,
        source: Source::Hdbscan,
    }
}

/// Everything computed by one HDBSCAN fit.
#[derive(Debug, Clone, PartialEq)]
pub struct HdbscanFit {
    pub assignment: ClusterAssignment,
    pub core_distances: Vec<f64>,
    pub mst: Vec<MstEdge>,
    pub tree: CondensedTree,
    pub selected: Vec<usize>,
    pub stabilities: Vec<f64>,
}

/// The part of the fit that depends on `min_samples` only.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub core_distances: Vec<f64>,
    pub mst: Vec<MstEdge>,
    pub linkage: SingleLinkage,
}

impl Hierarchy {
    pub fn build(d: &DistanceMatrix, min_samples: usize) -> Result<Self> {
        let core = core_distances(d, min_samples)?;
        let mr = mutual_reachability(d, &core)?;
        let mst = build_mst(&mr)?;
        let linkage = single_linkage(&mst, d.n());
        Ok(Hierarchy {
            core_distances: core,
            mst,
            linkage,
        })
    }

    pub fn extract(&self, min_cluster_size: usize) -> HdbscanFit {
        let tree = condense_tree(&self.linkage, min_cluster_size);
        let Extraction {
            assignment,
            selected,
            stabilities,
        } = extract_clusters(&tree);
        HdbscanFit {
            assignment,
            core_distances: self.core_distances.clone(),
            mst: self.mst.clone(),
            tree,
            selected,
            stabilities,
        }
    }
}

/// Fit on a precomputed distance matrix. Fewer points than `min_cluster_size`
/// yields all noise.
pub fn fit_hdbscan_precomputed(d: &DistanceMatrix, params: &HdbscanParams) -> Result<HdbscanFit> {
    params.validate()?;
    let n = d.n();
    if n < params.min_cluster_size {
        return Ok(HdbscanFit {
            assignment: all_noise(n),
            core_distances: Vec::new(),
            mst: Vec::new(),
            tree: CondensedTree {
                n_points: n,
                min_cluster_size: params.min_cluster_size,
                edges: Vec::new(),
                n_clusters: 0,
            },
            selected: Vec::new(),
            stabilities: Vec::new(),
        });
    }
    Ok(Hierarchy::build(d, params.min_samples)?.extract(params.min_cluster_size))
}

pub fn fit_hdbscan(ds: &Dataset, params: &HdbscanParams) -> Result<ClusterAssignment> {
    params.validate()?;
    if ds.n() < params.min_cluster_size {
        return Ok(all_noise(ds.n()));
    }
    let d = pairwise_distance_matrix(ds, params.metric)?;
    Ok(fit_hdbscan_precomputed(&d, params)?.assignment)
}

/// One cell of a hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// ARI with noise counted as its own label.
    pub ari: Option<f64>,
    /// ARI over non-noise points only.
    pub ari_excluding_noise: Option<f64>,
    pub n_clusters: usize,
    pub n_noise: usize,
    pub error: Option<String>,
}

impl GridCell {
    fn score(&self, policy: NoisePolicy) -> Option<f64> {
        match policy {
            NoisePolicy::AsCluster => self.ari,
            NoisePolicy::Exclude => self.ari_excluding_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub metric: Metric,
    /// Which ARI variant ranks the cells.
    pub policy: NoisePolicy,
    pub cells: Vec<GridCell>,
    pub best_params: Option<HdbscanParams>,
    pub best_ari: Option<f64>,
}

impl GridSearchResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        let best = self.best_params?;
        self.cells.iter().find(|c| {
            c.min_cluster_size == best.min_cluster_size && c.min_samples == best.min_samples
        })
    }
}

/// Fit every `(min_cluster_size, min_samples)` pair and keep the best ARI
/// against `gold`. Ties go to the smaller `min_cluster_size`, then the smaller
/// `min_samples`. Cells that fail are recorded and skipped.
pub fn grid_search(
    ds: &Dataset,
    gold: &[u32],
    mcs_grid: &[usize],
    ms_grid: &[usize],
    metric: Metric,
) -> Result<GridSearchResult> {
    let d = pairwise_distance_matrix(ds, metric)?;
    grid_search_precomputed(&d, gold, mcs_grid, ms_grid, NoisePolicy::AsCluster)
}

pub fn grid_search_precomputed(
    d: &DistanceMatrix,
    gold: &[u32],
    mcs_grid: &[usize],
    ms_grid: &[usize],
    policy: NoisePolicy,
) -> Result<GridSearchResult> {
    if mcs_grid.is_empty() || ms_grid.is_empty() {
        return Err(Error::InvalidParameter("grids must be non-empty".into()));
    }
    if gold.len() != d.n() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: d.n(),
        });
    }
    let mut mcs_grid = mcs_grid.to_vec();
    mcs_grid.sort_unstable();
    mcs_grid.dedup();
    let mut ms_grid = ms_grid.to_vec();
    ms_grid.sort_unstable();
    ms_grid.dedup();

    let hierarchies: Vec<Result<Hierarchy>> = ms_grid
        .par_iter()
        .map(|&ms| Hierarchy::build(d, ms))
        .collect();

    let pairs: Vec<(usize, usize)> = mcs_grid
        .iter()
        .flat_map(|&mcs| ms_grid.iter().enumerate().map(move |(m, _)| (mcs, m)))
        .collect();
    let cells: Vec<GridCell> = pairs
        .par_iter()
        .map(|&(mcs, m)| {
            let ms = ms_grid[m];
            let params = HdbscanParams::new(mcs, ms, d.metric());
            let fit = params.validate().and_then(|_| {
                if d.n() < mcs {
                    fit_hdbscan_precomputed(d, &params)
                } else {
                    match &hierarchies[m] {
                        Ok(h) => Ok(h.extract(mcs)),
                        Err(e) => Err(Error::InvalidParameter(e.to_string())),
                    }
                }
            });
            score_cell(mcs, ms, gold, fit)
        })
        .collect();

    let mut best: Option<&GridCell> = None;
    for cell in &cells {
        let Some(score) = cell.score(policy) else { continue };
        if best.map_or(true, |b| score > b.score(policy).unwrap_or(f64::NEG_INFINITY)) {
            best = Some(cell);
        }
    }
    let best_params = best.map(|c| HdbscanParams::new(c.min_cluster_size, c.min_samples, d.metric()));
    let best_ari = best.and_then(|c| c.score(policy));
    Ok(GridSearchResult {
        metric: d.metric(),
        policy,
        cells,
        best_params,
        best_ari,
    })
}

fn score_cell(mcs: usize, ms: usize, gold: &[u32], fit: Result<HdbscanFit>) -> GridCell {
    let mut cell = GridCell {
        min_cluster_size: mcs,
        min_samples: ms,
        ari: None,
        ari_excluding_noise: None,
        n_clusters: 0,
        n_noise: 0,
        error: None,
    };
    let fit = match fit {
        Ok(fit) => fit,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    let labels = &fit.assignment.labels;
    cell.n_clusters = fit.assignment.n_clusters;
    cell.n_noise = fit.assignment.n_noise();
    match adjusted_rand_index(gold, labels) {
        Ok(r) => cell.ari = Some(r.ari),
        Err(e) => cell.error = Some(e.to_string()),
    }
    let (g, f): (Vec<u32>, Vec<i32>) = gold
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l != NOISE)
        .map(|(&g, &l)| (g, l))
        .unzip();
    cell.ari_excluding_noise = adjusted_rand_index(&g, &f).ok().map(|r| r.ari);
    cell
}
