//! The experiment configuration file.
//!
//! TOML, organized in sections; every key has a default, so an empty file
//! (or no file at all) describes the reference experiment. Unknown keys are
//! rejected — a typo must fail loudly, not silently fall back to a default.

use std::path::{Path, PathBuf};

use decloc_core::autoenc::{OptimizerKind, TrainConfig};
use decloc_core::cluster::dec::{CentroidInit, DecConfig};
use decloc_core::data::{AnchorNode, WindowConfig};
use decloc_core::geom::{Aabb, Vec3};
use decloc_core::score::{Criterion, SelectionPolicy};
use decloc_core::seed::derive_seed;
use decloc_core::sim::ScenarioConfig;
use decloc_core::tdoa::SolverConfig;
use serde::Deserialize;

use crate::error::CliError;

/// Which clustering drives the anchor selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// No clustering, no exclusion: the baseline.
    None,
    /// Flat clustering of the raw windows.
    KMeans,
    Gmm,
    /// Clustering of the pretrained embeddings.
    AeKMeans,
    AeGmm,
    /// Joint fine-tuning of embeddings and centres before clustering.
    DecKMeans,
    DecGmm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::None,
        Method::KMeans,
        Method::Gmm,
        Method::AeKMeans,
        Method::AeGmm,
        Method::DecKMeans,
        Method::DecGmm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::KMeans => "kmeans",
            Method::Gmm => "gmm",
            Method::AeKMeans => "ae_kmeans",
            Method::AeGmm => "ae_gmm",
            Method::DecKMeans => "dec_kmeans",
            Method::DecGmm => "dec_gmm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Simulate(ScenarioConfig),
    Load(PathBuf),
}

/// Fully resolved settings for one run: the raw file content translated into
/// core types, with stage seeds fanned out from the global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSource,
    pub window: WindowConfig,
    pub latent_dim: usize,
    pub pretrain: TrainConfig,
    pub finetune: DecConfig,
    pub k: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub gmm_var_floor: f64,
    pub methods: Vec<Method>,
    pub criterion: Criterion,
    pub exclude_counts: Vec<usize>,
    pub reference_anchor: Option<u32>,
    pub min_anchors: usize,
    pub solver: SolverConfig,
}

impl RunConfig {
    /// Parses a TOML string; an empty string yields the full defaults.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        raw.resolve()
    }

    /// Reads and parses a config file.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Ingest {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The reference experiment.
    pub fn default_config() -> Self {
        Self::from_toml("").expect("defaults must parse")
    }

    /// Applies command-line overrides. Changing the seed re-derives every
    /// stage seed.
    pub fn with_overrides(mut self, seed: Option<u64>, out_dir: Option<PathBuf>) -> Self {
        if let Some(seed) = seed {
            self.seed = seed;
            if let DatasetSource::Simulate(scenario) = &mut self.dataset {
                scenario.seed = derive_seed(seed, "simulate");
            }
            self.pretrain.seed = derive_seed(seed, "pretrain");
            self.finetune.seed = derive_seed(seed, "finetune");
        }
        if let Some(out_dir) = out_dir {
            self.out_dir = out_dir;
        }
        self
    }

    /// Selection settings for one exclusion count.
    pub fn policy(&self, exclude_count: usize) -> SelectionPolicy {
        SelectionPolicy {
            criterion: self.criterion,
            exclude_count,
            min_anchors: self.min_anchors,
        }
    }

    /// Seed for a non-core-stage consumer, derived from the global seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

// ---------------------------------------------------------------------------
// Raw (serde-facing) layer.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    dataset: RawDataset,
    window: RawWindow,
    autoenc: RawAutoenc,
    finetune: RawFinetune,
    cluster: RawCluster,
    experiment: RawExperiment,
    solver: RawSolver,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDataset {
    source: Option<String>,
    path: Option<PathBuf>,
    scenario: RawScenario,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawScenario {
    anchors: Option<Vec<RawAnchor>>,
    waypoints: Option<Vec<[f64; 3]>>,
    speed: Option<f64>,
    sample_rate: Option<f64>,
    nlos_regions: Option<Vec<RawRegion>>,
    seed: Option<u64>,
    noise_sigma: Option<f64>,
    sync_jitter_ns: Option<f64>,
    nlos_excess_delay_mean_ns: Option<f64>,
    nlos_first_path_atten_db: Option<f64>,
    paths_per_link: Option<usize>,
    decay_const_ns: Option<f64>,
    pulse_width_taps: Option<f64>,
    t_s_ns: Option<f64>,
    taps_len: Option<usize>,
    max_range_m: Option<f64>,
    los_reflection_cap: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnchor {
    id: u32,
    pos: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawWindow {
    width: Option<usize>,
    pre_offset: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAutoenc {
    latent_dim: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    optimizer: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawFinetune {
    lambda: Option<f64>,
    total_iters: Option<usize>,
    target_refresh: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    optimizer: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCluster {
    k: Option<usize>,
    kmeans_max_iters: Option<usize>,
    kmeans_tol: Option<f64>,
    gmm_max_iters: Option<usize>,
    gmm_tol: Option<f64>,
    gmm_var_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawExperiment {
    methods: Option<Vec<String>>,
    criterion: Option<String>,
    exclude_counts: Option<Vec<usize>>,
    reference_anchor: Option<u32>,
    min_anchors: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    max_iters: Option<usize>,
    tol_m: Option<f64>,
    damping: Option<f64>,
    tag_z: Option<f64>,
}

fn parse_optimizer(s: Option<&str>) -> Result<OptimizerKind, CliError> {
    match s {
        None => Ok(OptimizerKind::Adam),
        Some(s) => OptimizerKind::parse(s)
            .ok_or_else(|| CliError::Config(format!("unknown optimizer {s:?}"))),
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl RawConfig {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let seed = self.seed.unwrap_or(0);

        let source = self.dataset.source.as_deref().unwrap_or("simulate");
        let dataset = match source {
            "simulate" => {
                DatasetSource::Simulate(self.dataset.scenario.resolve(seed)?)
            }
            "load" => {
                let path = self.dataset.path.clone().ok_or_else(|| {
                    CliError::Config("dataset.source = \"load\" needs dataset.path".into())
                })?;
                DatasetSource::Load(path)
            }
            other => {
                return Err(CliError::Config(format!(
                    "dataset.source must be \"simulate\" or \"load\", got {other:?}"
                )))
            }
        };

        let window_defaults = WindowConfig::default();
        let window = WindowConfig {
            width: self.window.width.unwrap_or(window_defaults.width),
            pre_offset: self.window.pre_offset.unwrap_or(window_defaults.pre_offset),
        };

        let pre_defaults = TrainConfig::default();
        let pretrain = TrainConfig {
            learning_rate: self
                .autoenc
                .learning_rate
                .unwrap_or(pre_defaults.learning_rate),
            batch_size: self.autoenc.batch_size.unwrap_or(pre_defaults.batch_size),
            epochs: self.autoenc.epochs.unwrap_or(pre_defaults.epochs),
            optimizer: parse_optimizer(self.autoenc.optimizer.as_deref())?,
            seed: derive_seed(seed, "pretrain"),
        };
        let latent_dim = self.autoenc.latent_dim.unwrap_or(10);
        if latent_dim == 0 {
            return Err(CliError::Config("autoenc.latent_dim must be positive".into()));
        }

        let dec_defaults = DecConfig::default();
        let finetune = DecConfig {
            lambda: self.finetune.lambda.unwrap_or(dec_defaults.lambda),
            total_iters: self.finetune.total_iters.unwrap_or(dec_defaults.total_iters),
            target_refresh: self
                .finetune
                .target_refresh
                .unwrap_or(dec_defaults.target_refresh),
            learning_rate: self
                .finetune
                .learning_rate
                .unwrap_or(dec_defaults.learning_rate),
            batch_size: self.finetune.batch_size.unwrap_or(dec_defaults.batch_size),
            optimizer: parse_optimizer(self.finetune.optimizer.as_deref())?,
            // The centroid seeding method follows the method under test; see
            // the pipeline.
            init: CentroidInit::KMeans,
            seed: derive_seed(seed, "finetune"),
        };

        let k = self.cluster.k.unwrap_or(9);
        if k == 0 {
            return Err(CliError::Config("cluster.k must be positive".into()));
        }

        let methods = match &self.experiment.methods {
            None => Method::ALL.to_vec(),
            Some(names) => {
                let mut methods = Vec::with_capacity(names.len());
                for name in names {
                    let m = Method::parse(name).ok_or_else(|| {
                        CliError::Config(format!("unknown method {name:?}"))
                    })?;
                    if methods.contains(&m) {
                        return Err(CliError::Config(format!("method {name:?} listed twice")));
                    }
                    methods.push(m);
                }
                if methods.is_empty() {
                    return Err(CliError::Config("experiment.methods is empty".into()));
                }
                methods
            }
        };

        let criterion = match self.experiment.criterion.as_deref() {
            None => Criterion::Sigma,
            Some(s) => Criterion::parse(s)
                .ok_or_else(|| CliError::Config(format!("unknown criterion {s:?}")))?,
        };

        let exclude_counts = self
            .experiment
            .exclude_counts
            .unwrap_or_else(|| vec![0, 1, 2, 3]);
        if exclude_counts.is_empty() {
            return Err(CliError::Config("experiment.exclude_counts is empty".into()));
        }

        let min_anchors = self.experiment.min_anchors.unwrap_or(4);

        let solver_defaults = SolverConfig::default();
        let solver = SolverConfig {
            max_iters: self.solver.max_iters.unwrap_or(solver_defaults.max_iters),
            tol_m: self.solver.tol_m.unwrap_or(solver_defaults.tol_m),
            damping: self.solver.damping.unwrap_or(solver_defaults.damping),
            tag_z: self.solver.tag_z.unwrap_or(solver_defaults.tag_z),
        };

        let cfg = RunConfig {
            seed,
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            dataset,
            window,
            latent_dim,
            pretrain,
            finetune,
            k,
            kmeans_max_iters: self.cluster.kmeans_max_iters.unwrap_or(100),
            kmeans_tol: self.cluster.kmeans_tol.unwrap_or(1e-9),
            gmm_max_iters: self.cluster.gmm_max_iters.unwrap_or(100),
            gmm_tol: self.cluster.gmm_tol.unwrap_or(1e-8),
            gmm_var_floor: self.cluster.gmm_var_floor.unwrap_or(1e-6),
            methods,
            criterion,
            exclude_counts,
            reference_anchor: Some(self.experiment.reference_anchor.unwrap_or(0)),
            min_anchors,
            solver,
        };
        SelectionPolicy {
            criterion: cfg.criterion,
            exclude_count: 0,
            min_anchors: cfg.min_anchors,
        }
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

impl RawScenario {
    fn resolve(&self, global_seed: u64) -> Result<ScenarioConfig, CliError> {
        let mut cfg = ScenarioConfig::default_deployment();
        cfg.seed = self.seed.unwrap_or_else(|| derive_seed(global_seed, "simulate"));
        if let Some(anchors) = &self.anchors {
            cfg.anchors = anchors
                .iter()
                .map(|a| AnchorNode {
                    anchor_id: a.id,
                    position: vec3(a.pos),
                })
                .collect();
        }
        if let Some(waypoints) = &self.waypoints {
            cfg.waypoints = waypoints.iter().copied().map(vec3).collect();
        }
        if let Some(regions) = &self.nlos_regions {
            cfg.nlos_regions = regions
                .iter()
                .map(|r| Aabb::new(vec3(r.min), vec3(r.max)))
                .collect();
        }
        if let Some(v) = self.speed {
            cfg.speed = v;
        }
        if let Some(v) = self.sample_rate {
            cfg.sample_rate = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.sync_jitter_ns {
            cfg.sync_jitter_ns = v;
        }
        if let Some(v) = self.nlos_excess_delay_mean_ns {
            cfg.nlos_excess_delay_mean_ns = v;
        }
        if let Some(v) = self.nlos_first_path_atten_db {
            cfg.nlos_first_path_atten_db = v;
        }
        if let Some(v) = self.paths_per_link {
            cfg.paths_per_link = v;
        }
        if let Some(v) = self.decay_const_ns {
            cfg.decay_const_ns = v;
        }
        if let Some(v) = self.pulse_width_taps {
            cfg.pulse_width_taps = v;
        }
        if let Some(v) = self.t_s_ns {
            cfg.t_s_ns = v;
        }
        if let Some(v) = self.taps_len {
            cfg.taps_len = v;
        }
        if let Some(v) = self.max_range_m {
            cfg.max_range_m = v;
        }
        if let Some(v) = self.los_reflection_cap {
            cfg.los_reflection_cap = v;
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
