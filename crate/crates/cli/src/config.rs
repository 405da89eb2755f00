//! Run configuration.
//!
//! A run is fully captured by one TOML file with namespaced sections;
//! command-line flags override file values. Paths in the file are resolved
//! relative to the file's directory; paths inside the manifest are resolved
//! relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use spotkick_core::dataset::LabelRegime;
use spotkick_core::embedding::{Pooling, SignalInjection, StageTag};

use crate::CliError;

/// `--pooling` accepts a fixed mode or `auto` (select by validation accuracy).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingChoice {
    Auto,
    Fixed(Pooling),
}

impl PoolingChoice {
    pub fn parse(s: &str) -> Option<PoolingChoice> {
        match s {
            "auto" => Some(PoolingChoice::Auto),
            other => Pooling::parse(other).map(PoolingChoice::Fixed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKindChoice {
    Synthetic,
    Precomputed,
    External,
}

impl BackendKindChoice {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(Self::Synthetic),
            "precomputed" => Some(Self::Precomputed),
            "external" => Some(Self::External),
            _ => None,
        }
    }
}

// --- raw TOML schema ---------------------------------------------------------

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: Option<RawRun>,
    backend: Option<RawBackend>,
    model: Option<RawModel>,
    train: Option<RawTrain>,
    #[serde(default)]
    variant: Vec<RawVariant>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    manifest: Option<String>,
    workdir: Option<String>,
    seed: Option<u64>,
    folds: Option<usize>,
    regime: Option<String>,
    pooling: Option<String>,
    jobs: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    kind: Option<String>,
    window: Option<usize>,
    dim: Option<usize>,
    identifier: Option<String>,
    source: Option<String>,
    injection: Option<RawInjection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjection {
    stage: Option<String>,
    coordinate: Option<usize>,
    magnitude: Option<f64>,
    noise_sigma: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    hidden_stream: Option<usize>,
    hidden_meta: Option<usize>,
    hidden_fusion: Option<usize>,
    use_metadata: Option<bool>,
    single_stream: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    learning_rate: Option<f64>,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    early_stop_patience: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    family: String,
    name: String,
    window: Option<usize>,
    dim: Option<usize>,
    kind: Option<String>,
    source: Option<String>,
}

// --- resolved configuration ----------------------------------------------------

/// One backbone variant to embed and evaluate.
#[derive(Debug, Clone)]
pub struct VariantConfig {
    pub family: String,
    pub name: String,
    pub kind: BackendKindChoice,
    pub window: usize,
    pub dim: usize,
    /// Source cache (precomputed) or model file (external).
    pub source: Option<PathBuf>,
}

impl VariantConfig {
    pub fn cache_path(&self, workdir: &Path) -> PathBuf {
        workdir.join("embeddings").join(format!("{}.pkemb", self.name))
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub hidden_stream: usize,
    pub hidden_meta: usize,
    pub hidden_fusion: usize,
    pub use_metadata: bool,
    pub single_stream: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub workdir: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub regime: LabelRegime,
    pub pooling: PoolingChoice,
    pub jobs: usize,
    pub injection: Option<SignalInjection>,
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub variants: Vec<VariantConfig>,
}

/// Flag-level overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub regime: Option<LabelRegime>,
    pub pooling: Option<PoolingChoice>,
}

fn bad_config(msg: impl Into<String>) -> CliError {
    CliError::input(format!("config: {}", msg.into()))
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| bad_config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let resolve = |p: &str| -> PathBuf {
        let pb = PathBuf::from(p);
        if pb.is_absolute() {
            pb
        } else {
            base.join(pb)
        }
    };

    let run = raw.run.unwrap_or_default();
    let backend = raw.backend.unwrap_or_default();
    let model = raw.model.unwrap_or_default();
    let train = raw.train.unwrap_or_default();

    let manifest = resolve(run.manifest.as_deref().unwrap_or("manifest.csv"));
    let workdir = resolve(run.workdir.as_deref().unwrap_or("work"));

    let regime = match overrides.regime {
        Some(r) => r,
        None => match run.regime.as_deref().unwrap_or("three") {
            "three" => LabelRegime::ThreeClass,
            "two" => LabelRegime::TwoClass,
            other => return Err(bad_config(format!("unknown regime `{other}`"))),
        },
    };
    let pooling = match overrides.pooling {
        Some(p) => p,
        None => {
            let s = run.pooling.as_deref().unwrap_or("auto");
            PoolingChoice::parse(s).ok_or_else(|| bad_config(format!("unknown pooling `{s}`")))?
        }
    };

    let injection = match backend.injection {
        None => None,
        Some(inj) => {
            let stage = match inj.stage.as_deref().unwrap_or("kick") {
                "run" => StageTag::Run,
                "kick" => StageTag::Kick,
                other => return Err(bad_config(format!("unknown injection stage `{other}`"))),
            };
            Some(SignalInjection {
                stage,
                coordinate: inj.coordinate.unwrap_or(0),
                magnitude: inj.magnitude.unwrap_or(1.0),
                noise_sigma: inj.noise_sigma.unwrap_or(0.3),
            })
        }
    };

    let default_kind = {
        let s = backend.kind.as_deref().unwrap_or("synthetic");
        BackendKindChoice::parse(s)
            .ok_or_else(|| bad_config(format!("unknown backend kind `{s}`")))?
    };
    let default_window = backend.window.unwrap_or(8);
    let default_dim = backend.dim.unwrap_or(64);
    let default_identifier = backend.identifier.as_deref().unwrap_or("synthetic");
    let default_source = backend.source.as_deref().map(resolve);

    let variants: Vec<VariantConfig> = if raw.variant.is_empty() {
        vec![VariantConfig {
            family: default_identifier.to_string(),
            name: default_identifier.to_string(),
            kind: default_kind,
            window: default_window,
            dim: default_dim,
            source: default_source,
        }]
    } else {
        raw.variant
            .iter()
            .map(|v| {
                let kind = match v.kind.as_deref() {
                    None => default_kind,
                    Some(s) => BackendKindChoice::parse(s)
                        .ok_or_else(|| bad_config(format!("unknown backend kind `{s}`")))?,
                };
                Ok(VariantConfig {
                    family: v.family.clone(),
                    name: v.name.clone(),
                    kind,
                    window: v.window.unwrap_or(default_window),
                    dim: v.dim.unwrap_or(default_dim),
                    source: v.source.as_deref().map(resolve).or_else(|| default_source.clone()),
                })
            })
            .collect::<Result<_, CliError>>()?
    };
    {
        let mut names: Vec<&str> = variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != variants.len() {
            return Err(bad_config("variant names must be unique"));
        }
    }
    for v in &variants {
        if v.window == 0 || v.dim == 0 {
            return Err(bad_config(format!(
                "variant `{}`: window and dim must be >= 1",
                v.name
            )));
        }
    }

    Ok(RunConfig {
        manifest,
        workdir,
        seed: overrides.seed.unwrap_or(run.seed.unwrap_or(42)),
        folds: run.folds.unwrap_or(10),
        regime,
        pooling,
        jobs: overrides.jobs.unwrap_or(run.jobs.unwrap_or(1)).max(1),
        injection,
        model: ModelConfig {
            hidden_stream: model.hidden_stream.unwrap_or(256),
            hidden_meta: model.hidden_meta.unwrap_or(16),
            hidden_fusion: model.hidden_fusion.unwrap_or(128),
            use_metadata: model.use_metadata.unwrap_or(true),
            single_stream: model.single_stream.unwrap_or(false),
        },
        train: TrainSettings {
            learning_rate: train.learning_rate.unwrap_or(1e-3),
            max_epochs: train.max_epochs.unwrap_or(200),
            batch_size: train.batch_size.unwrap_or(32),
            early_stop_patience: train.early_stop_patience.unwrap_or(20),
        },
        variants,
    })
}
