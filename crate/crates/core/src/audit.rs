//! End-to-end audit: load, cluster, score agreement, measure profile geometry
//! and run the test battery, collecting everything into one report record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agreement::{
    adjusted_rand_index, contingency, grouped_profile_search, retrieval_scores, AgreementResult,
    ContingencyTable, GroupedResult, GroupingMode, NoisePolicy, RetrievalScores,
};
use crate::dataset::{load_dataset_with, Dataset, Format, LoadOptions, ProfileOrdering};
use crate::error::{Error, Result};
use crate::geometry::{
    akp_correlation, centroid_similarities, median, similarity_summary, within_profile_similarities,
    AkpResult, SimilaritySummary, StrongAkpFlag,
};
use crate::hdbscan::{
    fit_hdbscan_precomputed, grid_search_precomputed, GridSearchResult, HdbscanParams,
    DEFAULT_MCS_GRID, DEFAULT_MS_GRID,
};
use crate::kmeans::{fit_kmeans_detailed, ClusterAssignment, KMeansParams, NOISE};
use crate::simindex::{pairwise_distance_matrix, Metric};
use crate::stats::{
    dunn_posthoc, kruskal_wallis, ks_test_normal, Adjustment, KsReference, PosthocMatrix, TestResult,
};

/// Offset added to the root seed for the KMeans stage.
pub const KMEANS_SEED_OFFSET: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    /// Defaults to the number of gold profiles.
    pub k: Option<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub n_restarts: usize,
    /// Run on unit-normalized vectors instead of the raw input.
    pub normalize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: None,
            max_iter: 300,
            tol: 1e-6,
            n_restarts: 10,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdbscanConfig {
    pub min_cluster_sizes: Vec<usize>,
    pub min_samples: Vec<usize>,
    pub metric: Metric,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        HdbscanConfig {
            min_cluster_sizes: DEFAULT_MCS_GRID.to_vec(),
            min_samples: DEFAULT_MS_GRID.to_vec(),
            metric: Metric::CosineDerived,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingConfig {
    pub max_bands: usize,
    pub mode: GroupingMode,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            max_bands: 3,
            mode: GroupingMode::Contiguous,
        }
    }
}

/// Values compared across profiles by Kruskal-Wallis and Dunn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupValues {
    /// One value per sample: similarity to its own profile centroid.
    #[default]
    CentroidSimilarity,
    /// Every within-profile pairwise similarity.
    PairwiseSimilarity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub adjustment: Adjustment,
    pub group_values: GroupValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub dataset: Option<PathBuf>,
    /// Inferred from the extension when absent.
    pub format: Option<Format>,
    pub remap_sparse_profiles: bool,
    /// Quality rank of each profile (1 = best); identity when absent.
    pub quality_ranks: Option<Vec<u32>>,
    pub seed: u64,
    pub noise_policy: NoisePolicy,
    pub kmeans: KMeansConfig,
    pub hdbscan: HdbscanConfig,
    pub grouping: GroupingConfig,
    pub stats: StatsConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            dataset: None,
            format: None,
            remap_sparse_profiles: false,
            quality_ranks: None,
            seed: 42,
            noise_policy: NoisePolicy::AsCluster,
            kmeans: KMeansConfig::default(),
            hdbscan: HdbscanConfig::default(),
            grouping: GroupingConfig::default(),
            stats: StatsConfig::default(),
            output_dir: None,
        }
    }
}

impl AuditConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            row: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn kmeans_seed(&self) -> u64 {
        self.seed.wrapping_add(KMEANS_SEED_OFFSET)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub kmeans_seed: u64,
    pub config: AuditConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: Option<String>,
    pub item: Option<String>,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub profile_sizes: Vec<usize>,
    pub original_labels: Option<Vec<i64>>,
    /// Profiles from best to worst quality.
    pub quality_order: Vec<u32>,
}

/// Agreement and retrieval of one fitted assignment against the gold profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSection {
    pub assignment: ClusterAssignment,
    pub agreement: AgreementResult,
    /// ARI restricted to non-noise points; absent when nothing was left out or too few remain.
    pub agreement_excluding_noise: Option<AgreementResult>,
    pub contingency: ContingencyTable,
    pub retrieval: RetrievalScores,
    pub grouping: Option<GroupedResult>,
    pub grouping_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSection {
    pub k: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub normalized_input: bool,
    pub best_restart: usize,
    pub result: ClusteringSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdbscanSection {
    pub metric: Metric,
    pub grid: Option<GridSearchResult>,
    pub best_params: Option<HdbscanParams>,
    pub result: Option<ClusteringSection>,
    /// Why the section holds no result.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySection {
    pub summary: SimilaritySummary,
    pub diagonal_strictly_decreasing: bool,
    pub strong_akp: Vec<StrongAkpFlag>,
    /// Median similarity to the own-profile centroid, per profile.
    pub centroid_similarity_medians: Vec<Option<f64>>,
    pub zero_centroid_profiles: Vec<u32>,
    pub akp: Option<AkpResult>,
    pub akp_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSection {
    pub group_values: GroupValues,
    /// KS on pooled within-profile similarities, parameters estimated from the sample.
    pub ks_estimated: Option<TestResult>,
    /// KS on the same values against the standard normal.
    pub ks_standard: Option<TestResult>,
    pub kruskal_wallis: Option<TestResult>,
    pub dunn: Option<PosthocMatrix>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub provenance: Provenance,
    pub dataset: DatasetSummary,
    pub kmeans: KMeansSection,
    pub hdbscan: HdbscanSection,
    pub geometry: GeometrySection,
    pub stats: StatsSection,
    /// Conditions under which the numbers carry little information.
    pub degenerate: Vec<String>,
}

impl AuditReport {
    pub fn is_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }
}

/// Load the configured dataset and audit it.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    let path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("no dataset path configured".into()))
        .map_err(|e| e.in_stage("load"))?;
    let format = cfg.format.unwrap_or_else(|| Format::from_path(path));
    let options = LoadOptions {
        remap_sparse_profiles: cfg.remap_sparse_profiles,
    };
    let ds = load_dataset_with(path, format, options).map_err(|e| e.in_stage("load"))?;
    run_audit_on_dataset(&ds, cfg, Some(path.display().to_string()))
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e: Error| e.in_stage(name)
}

fn score_assignment(
    gold: &[u32],
    assignment: ClusterAssignment,
    policy: NoisePolicy,
    ordering: &ProfileOrdering,
    grouping: &GroupingConfig,
) -> Result<ClusteringSection> {
    let labels = &assignment.labels;
    let agreement = match policy {
        NoisePolicy::AsCluster => adjusted_rand_index(gold, labels)?,
        NoisePolicy::Exclude => {
            let (g, f) = non_noise(gold, labels);
            adjusted_rand_index(&g, &f)?
        }
    };
    let agreement_excluding_noise = if assignment.n_noise() > 0 && policy == NoisePolicy::AsCluster {
        let (g, f) = non_noise(gold, labels);
        adjusted_rand_index(&g, &f).ok()
    } else {
        None
    };
    let table = contingency(gold, labels, policy)?;
    let retrieval = retrieval_scores(&table)?;
    let (grouping, grouping_error) =
        match grouped_profile_search(&table, ordering, grouping.max_bands, grouping.mode) {
            Ok(g) => (Some(g), None),
            Err(e) => (None, Some(e.to_string())),
        };
    Ok(ClusteringSection {
        assignment,
        agreement,
        agreement_excluding_noise,
        contingency: table,
        retrieval,
        grouping,
        grouping_error,
    })
}

fn non_noise(gold: &[u32], labels: &[i32]) -> (Vec<u32>, Vec<i32>) {
    gold.iter()
        .zip(labels)
        .filter(|(_, &l)| l != NOISE)
        .map(|(&g, &l)| (g, l))
        .unzip()
}

/// Audit an in-memory dataset. `source` is recorded verbatim in the report.
pub fn run_audit_on_dataset(raw: &Dataset, cfg: &AuditConfig, source: Option<String>) -> Result<AuditReport> {
    let ordering = match &cfg.quality_ranks {
        Some(r) => ProfileOrdering::from_ranks(r.clone()).map_err(stage("config"))?,
        None => ProfileOrdering::identity(raw.k()),
    };
    if ordering.k() != raw.k() {
        return Err(Error::InvalidParameter(format!(
            "quality_ranks has {} entries but the dataset has {} profiles",
            ordering.k(),
            raw.k()
        ))
        .in_stage("config"));
    }
    let normalized = raw.unit_normalize().map_err(stage("normalize"))?;
    let gold = raw.profiles();
    let mut degenerate = Vec::new();

    // KMeans
    let k = cfg.kmeans.k.unwrap_or(raw.k());
    let params = KMeansParams {
        k,
        max_iter: cfg.kmeans.max_iter,
        tol: cfg.kmeans.tol,
        n_restarts: cfg.kmeans.n_restarts,
        seed: cfg.kmeans_seed(),
    };
    let km_input = if cfg.kmeans.normalize { &normalized } else { raw };
    let km = fit_kmeans_detailed(km_input, &params).map_err(stage("kmeans"))?;
    let km_result = score_assignment(gold, km.assignment, cfg.noise_policy, &ordering, &cfg.grouping)
        .map_err(stage("kmeans agreement"))?;
    if km_result.agreement.degenerate {
        degenerate.push("kmeans ARI denominator vanished".to_string());
    }
    let kmeans = KMeansSection {
        k,
        n_restarts: params.n_restarts,
        seed: params.seed,
        normalized_input: cfg.kmeans.normalize,
        best_restart: km.best_restart,
        result: km_result,
    };

    // HDBSCAN
    let metric = cfg.hdbscan.metric;
    let hdbscan = if cfg.hdbscan.min_cluster_sizes.is_empty() || cfg.hdbscan.min_samples.is_empty() {
        HdbscanSection {
            metric,
            grid: None,
            best_params: None,
            result: None,
            skipped: Some("empty hyperparameter grid".to_string()),
        }
    } else {
        let d = pairwise_distance_matrix(&normalized, metric).map_err(stage("distances"))?;
        let grid = grid_search_precomputed(
            &d,
            gold,
            &cfg.hdbscan.min_cluster_sizes,
            &cfg.hdbscan.min_samples,
            cfg.noise_policy,
        )
        .map_err(stage("hdbscan grid"))?;
        if grid.cells.iter().all(|c| c.n_clusters == 0) {
            degenerate.push("every HDBSCAN grid cell labels all points as noise".to_string());
        }
        match grid.best_params {
            Some(best) => {
                let fit = fit_hdbscan_precomputed(&d, &best).map_err(stage("hdbscan"))?;
                let result = score_assignment(gold, fit.assignment, cfg.noise_policy, &ordering, &cfg.grouping)
                    .map_err(stage("hdbscan agreement"))?;
                HdbscanSection {
                    metric,
                    best_params: Some(best),
                    grid: Some(grid),
                    result: Some(result),
                    skipped: None,
                }
            }
            None => HdbscanSection {
                metric,
                best_params: None,
                grid: Some(grid),
                result: None,
                skipped: Some("no grid cell produced a usable ARI".to_string()),
            },
        }
    };

    // Geometry
    let summary = similarity_summary(&normalized).map_err(stage("geometry"))?;
    let cs = centroid_similarities(&normalized).map_err(stage("geometry"))?;
    let (akp, akp_error) = match akp_correlation(&cs, &ordering) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let centroid_groups = cs.by_profile();
    let geometry = GeometrySection {
        diagonal_strictly_decreasing: summary.diagonal_strictly_decreasing(&ordering),
        strong_akp: summary.strong_akp_flags(&ordering),
        centroid_similarity_medians: centroid_groups.iter().map(|g| median(g)).collect(),
        zero_centroid_profiles: cs.zero_centroid_profiles.clone(),
        akp,
        akp_error,
        summary,
    };

    // Tests
    let within = within_profile_similarities(&normalized).map_err(stage("stats"))?;
    let pooled: Vec<f64> = within.iter().flatten().copied().collect();
    let mut errors = Vec::new();
    let mut keep = |name: &str, r: Result<TestResult>| match r {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{name}: {e}"));
            None
        }
    };
    let ks_estimated = keep("ks_estimated", ks_test_normal(&pooled, KsReference::Estimated));
    let ks_standard = keep(
        "ks_standard",
        ks_test_normal(&pooled, KsReference::Fixed { mean: 0.0, sd: 1.0 }),
    );
    let groups = match cfg.stats.group_values {
        GroupValues::CentroidSimilarity => centroid_groups,
        GroupValues::PairwiseSimilarity => within,
    };
    let kw = keep("kruskal_wallis", kruskal_wallis(&groups));
    let dunn = match dunn_posthoc(&groups, cfg.stats.adjustment) {
        Ok(m) => Some(m),
        Err(e) => {
            errors.push(format!("dunn: {e}"));
            None
        }
    };
    let stats = StatsSection {
        group_values: cfg.stats.group_values,
        ks_estimated,
        ks_standard,
        kruskal_wallis: kw,
        dunn,
        errors,
    };

    Ok(AuditReport {
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            kmeans_seed: cfg.kmeans_seed(),
            config: cfg.clone(),
        },
        dataset: DatasetSummary {
            source,
            item: raw.item_tag().map(str::to_string),
            n: raw.n(),
            dim: raw.dim(),
            k: raw.k(),
            profile_sizes: raw.profile_sizes(),
            original_labels: raw.original_labels().map(<[i64]>::to_vec),
            quality_order: ordering.by_quality(),
        },
        kmeans,
        hdbscan,
        geometry,
        stats,
        degenerate,
    })
}
