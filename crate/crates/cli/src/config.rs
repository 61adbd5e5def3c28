use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splinept::engine::CommunicationScheme;
use splinept::objective::GradientScaling;
use splinept::TuningConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub snr: SnrConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum ModelConfig {
    Gaussian(GaussianConfig),
    BetaBinomial(BetaBinomialConfig),
    Mixture(MixtureConfig),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Gaussian(GaussianConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Iid,
    RandomWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianConfig {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub dim: usize,
    pub kernel: KernelKind,
    pub step_size: f64,
    pub steps: usize,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self { mu0: -1.0, mu1: 1.0, sigma: 0.2, dim: 1, kernel: KernelKind::Iid, step_size: 0.1, steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaBinomialConfig {
    pub a0: f64,
    pub b0: f64,
    pub successes: u64,
    pub trials: u64,
}

impl Default for BetaBinomialConfig {
    fn default() -> Self {
        Self { a0: 180.0, b0: 840.0, successes: 140_000, trials: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// Observation file; the bundled galaxy velocities when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub components: usize,
    pub prior_mean: f64,
    pub component_sd: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self { data: None, components: 6, prior_mean: 150.0, component_sd: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Linear,
    #[default]
    Spline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub kind: PathKind,
    /// Spline segments `K`.
    pub segments: usize,
    /// Initial knots as `[eta0, eta1]` pairs; overrides `segments`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<[f64; 2]>>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { kind: PathKind::Spline, segments: 4, knots: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    /// Intervals `N`.
    pub chains: usize,
    pub rounds: usize,
    pub sweeps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub scheme: CommunicationScheme,
    pub scaling: GradientScaling,
    pub adapt_schedule: bool,
    /// Parallel exploration within a run.
    pub parallel: bool,
}

impl Default for TuningSection {
    fn default() -> Self {
        let t = TuningConfig::default();
        Self {
            chains: t.chains,
            rounds: t.rounds,
            sweeps: t.sweeps,
            learning_rate: t.learning_rate,
            seed: t.seed,
            scheme: t.scheme,
            scaling: t.scaling,
            adapt_schedule: t.adapt_schedule,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrConfig {
    pub grid: Vec<f64>,
    pub samples: usize,
    pub replicates: usize,
}

impl Default for SnrConfig {
    fn default() -> Self {
        Self { grid: splinept::diagnostics::default_snr_grid(), samples: 50, replicates: 1000 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// The fully defaulted config as TOML.
    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn tuning_config(&self, seed: u64) -> TuningConfig {
        let t = &self.tuning;
        TuningConfig {
            chains: t.chains,
            knots: self.path.knots.as_ref().map_or(self.path.segments, |k| k.len().saturating_sub(1)),
            rounds: t.rounds,
            sweeps: t.sweeps,
            learning_rate: t.learning_rate,
            seed,
            scheme: t.scheme,
            scaling: t.scaling,
            adapt_path: self.path.kind == PathKind::Spline,
            adapt_schedule: t.adapt_schedule,
        }
    }
}
