//! Experiment configuration files. Every file is JSON with a
//! `schema_version` field; unknown fields are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use mess_core::models::{
    BlindDeconvolutionConfig, BlindDeconvolutionModel, ConjugateGaussianModel,
    GpClassificationConfig, GpClassificationModel, SoluteDataset, SoluteHyperparameters,
    SoluteTransportModel,
};
use mess_core::sampler::DEFAULT_MAX_SHRINK;
use mess_core::{
    DistanceKind, GaussianPrior, LogLikelihood, LpMethod, MessConfig, MhTuning, SamplerSpec,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A config problem, located by a dotted path into the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.reason)
        } else {
            write!(f, "{}: {}", self.path, self.reason)
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

/// Parses `text` as `T`, reporting the failing field path.
pub fn parse<T: DeserializeOwned>(text: &str) -> CResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(
            if path == "." { String::new() } else { path },
            e.into_inner().to_string(),
        )
    })
}

pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> CResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let cfg: T = parse(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub trait Validate {
    fn validate(&self) -> CResult<()>;
}

fn check_schema(v: u32) -> CResult<()> {
    if v != SCHEMA_VERSION {
        return Err(ConfigError::new(
            "schema_version",
            format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

fn positive(path: &str, v: usize) -> CResult<()> {
    if v == 0 {
        return Err(ConfigError::new(path, "must be >= 1"));
    }
    Ok(())
}

fn positive_real(path: &str, v: f64) -> CResult<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(ConfigError::new(
            path,
            format!("must be a positive number, got {v}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Random conjugate-Gaussian instance of dimension `dim`.
    Conjugate {
        dim: usize,
        noise_variance: f64,
        data_seed: u64,
    },
    GpClassification {
        #[serde(default)]
        config: GpClassificationConfig,
        data_seed: u64,
    },
    Deconvolution {
        #[serde(default)]
        config: BlindDeconvolutionConfig,
        data_seed: u64,
    },
    /// Reads `solute_d{d}.json` from `dataset_dir`.
    Solute { dataset_dir: PathBuf, d: usize },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Conjugate { .. } => "conjugate",
            ModelSpec::GpClassification { .. } => "gp_classification",
            ModelSpec::Deconvolution { .. } => "deconvolution",
            ModelSpec::Solute { .. } => "solute",
        }
    }

    /// The size label used in summaries.
    pub fn size(&self) -> usize {
        match self {
            ModelSpec::Conjugate { dim, .. } => *dim,
            ModelSpec::GpClassification { config, .. } => config.n_points,
            ModelSpec::Deconvolution { config, .. } => config.signal_len,
            ModelSpec::Solute { d, .. } => *d,
        }
    }

    /// Same model with its size replaced by `d`.
    pub fn with_size(&self, d: usize) -> CResult<ModelSpec> {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::Conjugate { dim, .. } => *dim = d,
            ModelSpec::GpClassification { config, .. } => config.n_points = d,
            ModelSpec::Deconvolution { .. } => {
                return Err(ConfigError::new(
                    "grid.d",
                    "the deconvolution model has a fixed size",
                ))
            }
            ModelSpec::Solute { d: dd, .. } => *dd = d,
        }
        Ok(out)
    }

    fn validate_at(&self, at: &str) -> CResult<()> {
        match self {
            ModelSpec::Conjugate {
                dim,
                noise_variance,
                ..
            } => {
                positive(&format!("{at}.dim"), *dim)?;
                positive_real(&format!("{at}.noise_variance"), *noise_variance)
            }
            ModelSpec::GpClassification { config, .. } => {
                positive(&format!("{at}.config.n_points"), config.n_points)?;
                positive_real(&format!("{at}.config.amplitude"), config.amplitude)?;
                positive_real(&format!("{at}.config.length_scale"), config.length_scale)
            }
            ModelSpec::Deconvolution { config, .. } => {
                positive(&format!("{at}.config.signal_len"), config.signal_len)?;
                positive(&format!("{at}.config.kernel_len"), config.kernel_len)?;
                positive_real(
                    &format!("{at}.config.noise_variance"),
                    config.noise_variance,
                )?;
                if config.exact_observations > config.signal_len {
                    return Err(ConfigError::new(
                        format!("{at}.config.exact_observations"),
                        "exceeds signal_len",
                    ));
                }
                Ok(())
            }
            ModelSpec::Solute { d, .. } => {
                if *d < 7 {
                    return Err(ConfigError::new(
                        format!("{at}.d"),
                        format!("must be >= 7 so that modes 4..6 exist, got {d}"),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn dataset_path(dataset_dir: &Path, d: usize) -> PathBuf {
        dataset_dir.join(format!("solute_d{d}.json"))
    }

    /// Builds the likelihood and prior. Failures here are configuration
    /// problems (missing dataset, bad hyperparameters).
    pub fn build(&self) -> CResult<BuiltModel> {
        let err = |e: mess_core::MessError| ConfigError::new("model", e.to_string());
        match self {
            ModelSpec::Conjugate {
                dim,
                noise_variance,
                data_seed,
            } => {
                let (prior, model) =
                    ConjugateGaussianModel::random_instance(*dim, *noise_variance, *data_seed)
                        .map_err(err)?;
                let names = (0..*dim).map(|i| format!("x{i}")).collect();
                Ok(BuiltModel {
                    prior,
                    names,
                    likelihood: Box::new(model),
                })
            }
            ModelSpec::GpClassification { config, data_seed } => {
                let model = GpClassificationModel::simulate(config, *data_seed).map_err(err)?;
                let prior = model.prior().map_err(err)?;
                let names = (0..model.dim()).map(|i| format!("f{i}")).collect();
                Ok(BuiltModel {
                    prior,
                    names,
                    likelihood: Box::new(model),
                })
            }
            ModelSpec::Deconvolution { config, data_seed } => {
                let model = BlindDeconvolutionModel::simulate(config, *data_seed).map_err(err)?;
                let prior = model.state_prior().map_err(err)?;
                let mut names: Vec<String> =
                    (0..model.kernel_len()).map(|i| format!("w{i}")).collect();
                names.extend(
                    model
                        .signal_prior
                        .free_indices
                        .iter()
                        .map(|i| format!("c{i}")),
                );
                Ok(BuiltModel {
                    prior,
                    names,
                    likelihood: Box::new(model),
                })
            }
            ModelSpec::Solute { dataset_dir, d } => {
                let path = Self::dataset_path(dataset_dir, *d);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    ConfigError::new(
                        "model.dataset_dir",
                        format!("cannot read {}: {e}", path.display()),
                    )
                })?;
                let ds: SoluteDataset = serde_json::from_str(&text).map_err(|e| {
                    ConfigError::new("model.dataset_dir", format!("{}: {e}", path.display()))
                })?;
                if ds.d != *d {
                    return Err(ConfigError::new(
                        "model.d",
                        format!("{} holds d = {}, expected {d}", path.display(), ds.d),
                    ));
                }
                let model = SoluteTransportModel::from_dataset(&ds).map_err(err)?;
                let prior = model.prior().map_err(err)?;
                let mut names = Vec::with_capacity(model.param_count());
                for i in 0..*d {
                    for j in i + 1..*d {
                        names.push(format!("a{i}_{j}"));
                    }
                }
                Ok(BuiltModel {
                    prior,
                    names,
                    likelihood: Box::new(model),
                })
            }
        }
    }
}

pub struct BuiltModel {
    pub prior: GaussianPrior,
    /// One name per state component.
    pub names: Vec<String>,
    pub likelihood: Box<dyn LogLikelihood + Send>,
}

impl fmt::Debug for BuiltModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BuiltModel")
            .field("dim", &self.prior.dim())
            .finish()
    }
}

fn default_max_shrink() -> usize {
    DEFAULT_MAX_SHRINK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SamplerConfig {
    Ess {
        #[serde(default = "default_max_shrink")]
        max_shrink_iterations: usize,
    },
    Mess {
        proposals: usize,
        #[serde(default)]
        distance: DistanceKind,
        #[serde(default)]
        lp_method: LpMethod,
        #[serde(default = "default_max_shrink")]
        max_shrink_iterations: usize,
    },
    /// Exactly one of `scale` and `tuning_file` must be given.
    Mh {
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        tuning_file: Option<PathBuf>,
    },
}

impl SamplerConfig {
    fn validate_at(&self, at: &str) -> CResult<()> {
        match self {
            SamplerConfig::Ess {
                max_shrink_iterations,
            } => positive(
                &format!("{at}.max_shrink_iterations"),
                *max_shrink_iterations,
            ),
            SamplerConfig::Mess {
                proposals,
                max_shrink_iterations,
                ..
            } => {
                positive(&format!("{at}.proposals"), *proposals)?;
                positive(
                    &format!("{at}.max_shrink_iterations"),
                    *max_shrink_iterations,
                )
            }
            SamplerConfig::Mh { scale, tuning_file } => match (scale, tuning_file) {
                (Some(s), None) => positive_real(&format!("{at}.scale"), *s),
                (None, Some(_)) => Ok(()),
                _ => Err(ConfigError::new(
                    at,
                    "give exactly one of scale and tuning_file",
                )),
            },
        }
    }

    /// The core sampler spec; reads the tuning file for MH if needed.
    pub fn resolve(&self, workers: usize) -> CResult<SamplerSpec> {
        Ok(match self {
            SamplerConfig::Ess {
                max_shrink_iterations,
            } => SamplerSpec::Ess {
                max_shrink_iterations: *max_shrink_iterations,
            },
            SamplerConfig::Mess {
                proposals,
                distance,
                lp_method,
                max_shrink_iterations,
            } => SamplerSpec::Mess(MessConfig {
                proposals: *proposals,
                distance: *distance,
                lp_method: *lp_method,
                max_shrink_iterations: *max_shrink_iterations,
                workers,
            }),
            SamplerConfig::Mh { scale: Some(s), .. } => SamplerSpec::Mh { scale: *s },
            SamplerConfig::Mh {
                tuning_file: Some(path),
                ..
            } => {
                let record: TuningRecord = std::fs::read_to_string(path)
                    .map_err(|e| e.to_string())
                    .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
                    .map_err(|e| {
                        ConfigError::new("sampler.tuning_file", format!("{}: {e}", path.display()))
                    })?;
                SamplerSpec::Mh {
                    scale: record.tuning.scale,
                }
            }
            SamplerConfig::Mh { .. } => {
                return Err(ConfigError::new("sampler", "missing MH scale"))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerConfig::Ess { .. } => "ess",
            SamplerConfig::Mess { .. } => "mess",
            SamplerConfig::Mh { .. } => "mh",
        }
    }

    pub fn proposals(&self) -> usize {
        match self {
            SamplerConfig::Mess { proposals, .. } => *proposals,
            _ => 1,
        }
    }

    pub fn distance_label(&self) -> &'static str {
        match self {
            SamplerConfig::Mess { distance, .. } => distance.as_str(),
            _ => "",
        }
    }
}

fn default_thinning() -> usize {
    1
}

fn default_workers() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// `generate`: solute data sets for several dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub d_list: Vec<usize>,
    #[serde(default)]
    pub hyperparameters: SoluteHyperparameters,
}

impl Validate for GenerateConfig {
    fn validate(&self) -> CResult<()> {
        check_schema(self.schema_version)?;
        if self.d_list.is_empty() {
            return Err(ConfigError::new("d_list", "must not be empty"));
        }
        self.hyperparameters
            .validate()
            .map_err(|e| ConfigError::new("hyperparameters", e.to_string()))?;
        for (i, &d) in self.d_list.iter().enumerate() {
            if d < self.hyperparameters.min_dim() || d > mess_core::models::solute::MASTER_DIM {
                return Err(ConfigError::new(
                    format!("d_list[{i}]"),
                    format!(
                        "{d} is outside [{}, {}]; the observation window needs modes up to {}",
                        self.hyperparameters.min_dim(),
                        mess_core::models::solute::MASTER_DIM,
                        self.hyperparameters.d0
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Shared chain settings of `run` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub iterations: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Discarded iterations before summarizing; 10% of `iterations` when
    /// absent.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Components written to the samples file and summarized; all when
    /// absent.
    #[serde(default)]
    pub record: Option<Vec<usize>>,
    /// One summary row per recorded component instead of a single row
    /// holding the mean over components.
    #[serde(default)]
    pub per_component: bool,
    #[serde(default = "default_true")]
    pub write_samples: bool,
}

impl ChainSettings {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 10)
    }

    fn validate_at(&self, at: &str) -> CResult<()> {
        let p = |f: &str| format!("{at}.{f}");
        positive(&p("iterations"), self.iterations)?;
        positive(&p("thinning"), self.thinning)?;
        if self.burn_in() >= self.iterations {
            return Err(ConfigError::new(
                p("burn_in"),
                "must be smaller than iterations",
            ));
        }
        if let Some(rec) = &self.record {
            if rec.is_empty() {
                return Err(ConfigError::new(p("record"), "must not be empty"));
            }
        }
        Ok(())
    }
}

/// `run`: one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub sampler: SamplerConfig,
    pub chain: ChainSettings,
    pub seed: u64,
    /// Never affects results, so it is left out of the embedded config.
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
}

impl Validate for RunConfig {
    fn validate(&self) -> CResult<()> {
        check_schema(self.schema_version)?;
        self.model.validate_at("model")?;
        self.sampler.validate_at("sampler")?;
        self.chain.validate_at("chain")?;
        positive("workers", self.workers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Model sizes; the template's size when absent.
    #[serde(default)]
    pub d: Option<Vec<usize>>,
    pub samplers: Vec<SamplerConfig>,
    /// Expands every MESS entry over these proposal counts.
    #[serde(default)]
    pub proposals: Option<Vec<usize>>,
    /// Expands every MESS entry over these distances.
    #[serde(default)]
    pub distances: Option<Vec<DistanceKind>>,
}

/// `sweep`: Cartesian product of sizes and samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub grid: SweepGrid,
    pub chain: ChainSettings,
    pub seed: u64,
    /// Use the master seed for every cell instead of a derived one, so
    /// that cells differing only in the sampler share a random stream.
    #[serde(default)]
    pub common_seed: bool,
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub model: ModelSpec,
    pub sampler: SamplerConfig,
}

impl SweepConfig {
    pub fn cells(&self) -> CResult<Vec<Cell>> {
        let sizes = match &self.grid.d {
            Some(ds) => ds.clone(),
            None => vec![self.model.size()],
        };
        let mut samplers = Vec::new();
        for s in &self.grid.samplers {
            match s {
                SamplerConfig::Mess {
                    proposals,
                    distance,
                    lp_method,
                    max_shrink_iterations,
                } => {
                    let ms = self
                        .grid
                        .proposals
                        .clone()
                        .unwrap_or_else(|| vec![*proposals]);
                    let ds = self
                        .grid
                        .distances
                        .clone()
                        .unwrap_or_else(|| vec![*distance]);
                    for &m in &ms {
                        for &dist in &ds {
                            samplers.push(SamplerConfig::Mess {
                                proposals: m,
                                distance: dist,
                                lp_method: *lp_method,
                                max_shrink_iterations: *max_shrink_iterations,
                            });
                        }
                    }
                }
                other => samplers.push(other.clone()),
            }
        }
        let mut cells = Vec::with_capacity(sizes.len() * samplers.len());
        for &d in &sizes {
            let model = if self.grid.d.is_some() {
                self.model.with_size(d)?
            } else {
                self.model.clone()
            };
            for s in &samplers {
                cells.push(Cell {
                    index: cells.len(),
                    model: model.clone(),
                    sampler: s.clone(),
                });
            }
        }
        Ok(cells)
    }
}

impl Validate for SweepConfig {
    fn validate(&self) -> CResult<()> {
        check_schema(self.schema_version)?;
        self.model.validate_at("model")?;
        self.chain.validate_at("chain")?;
        positive("workers", self.workers)?;
        if self.grid.samplers.is_empty() {
            return Err(ConfigError::new("grid.samplers", "empty grid"));
        }
        for (i, s) in self.grid.samplers.iter().enumerate() {
            s.validate_at(&format!("grid.samplers[{i}]"))?;
        }
        if let Some(ds) = &self.grid.d {
            if ds.is_empty() {
                return Err(ConfigError::new("grid.d", "empty grid"));
            }
        }
        if let Some(ms) = &self.grid.proposals {
            if ms.is_empty() {
                return Err(ConfigError::new("grid.proposals", "empty grid"));
            }
            if let Some(i) = ms.iter().position(|&m| m == 0) {
                return Err(ConfigError::new(
                    format!("grid.proposals[{i}]"),
                    "must be >= 1",
                ));
            }
        }
        if matches!(&self.grid.distances, Some(ds) if ds.is_empty()) {
            return Err(ConfigError::new("grid.distances", "empty grid"));
        }
        for cell in self.cells()? {
            cell.model
                .validate_at(&format!("cells[{}].model", cell.index))?;
        }
        Ok(())
    }
}

fn default_target() -> f64 {
    0.234
}

fn default_pilot() -> usize {
    5000
}

fn default_warmup() -> usize {
    2000
}

fn default_warmup_proposals() -> usize {
    50
}

fn default_verify() -> usize {
    10_000
}

/// `tune-mh`: scale the MH proposal on one model and persist the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(default = "default_target")]
    pub target_rate: f64,
    #[serde(default = "default_pilot")]
    pub pilot_length: usize,
    /// MESS steps run first so that pilots start near the posterior.
    #[serde(default = "default_warmup")]
    pub warmup_iterations: usize,
    #[serde(default = "default_warmup_proposals")]
    pub warmup_proposals: usize,
    #[serde(default = "default_verify")]
    pub verify_length: usize,
    pub seed: u64,
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
}

impl Validate for TuneConfig {
    fn validate(&self) -> CResult<()> {
        check_schema(self.schema_version)?;
        self.model.validate_at("model")?;
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            return Err(ConfigError::new(
                "target_rate",
                format!("must lie in (0, 1), got {}", self.target_rate),
            ));
        }
        positive("pilot_length", self.pilot_length)?;
        positive("warmup_proposals", self.warmup_proposals)?;
        positive("verify_length", self.verify_length)?;
        positive("workers", self.workers)
    }
}

/// Contents of the file written by `tune-mh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub schema_version: u32,
    pub config: TuneConfig,
    pub tuning: MhTuning,
    /// Acceptance rate of an independent pilot at the tuned scale.
    pub verification_rate: f64,
}
