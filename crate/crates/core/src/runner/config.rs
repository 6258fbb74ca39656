//! Experiment configuration: a TOML document with defaults for every
//! optional field.
//!
//! ```toml
//! mode = "pqfl"            # qfl | pqfl | local
//! seed = 7
//! output_dir = "runs/pqfl"
//!
//! [dataset]
//! path = "features.csv"    # or a [dataset.synthetic] table
//! anomaly_classes = [9]
//!
//! [partition]
//! kind = "dirichlet"
//! alpha = 0.5
//!
//! [sweep]
//! lambda = [0.0, 0.1, 1.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PartitionScheme, SynthSpec};
use crate::error::{Error, Result};
use crate::federation::{Algorithm, FederationConfig};
use crate::metrics::{ScoreRule, ThresholdRule};
use crate::model::{CircuitSpec, Entangler};
use crate::quantum::{NoiseSpec, ShotSpec};
use crate::training::{TrainConfig, TrainMode};

/// Environment variable overriding `seed`.
pub const SEED_ENV: &str = "PQFL_SEED";
/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PQFL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Qfl,
    #[default]
    Pqfl,
    Local,
}

impl Mode {
    pub fn algorithm(self) -> Algorithm {
        match self {
            Mode::Qfl => Algorithm::Qfl,
            Mode::Pqfl => Algorithm::Pqfl,
            Mode::Local => Algorithm::Local,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Qfl => "qfl",
            Mode::Pqfl => "pqfl",
            Mode::Local => "local",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qfl" => Ok(Mode::Qfl),
            "pqfl" => Ok(Mode::Pqfl),
            "local" => Ok(Mode::Local),
            other => Err(Error::config("mode", format!("expected qfl, pqfl or local, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV of features with the integer label in the last column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
    /// Labels treated as anomalies (CSV datasets only).
    #[serde(default)]
    pub anomaly_classes: Vec<usize>,
    /// Share of every normal class held out for validation.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Share of every class kept before splitting.
    #[serde(default = "one")]
    pub data_fraction: f64,
    /// Project features to this many dimensions first. Defaults to
    /// `2^n_qubits` when the raw dimension is larger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
}

fn default_validation_fraction() -> f64 {
    0.2
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangler: Entangler,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            n_layers: 3,
            entangler: Entangler::LinearChain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationSection {
    pub n_clients: usize,
    pub global_rounds: usize,
    /// Aggregation weights; uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_weights: Option<Vec<f64>>,
    pub bits_per_value: u32,
    /// Validation loss that counts as converged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_loss: Option<f64>,
    pub parallel: bool,
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            n_clients: 10,
            global_rounds: 50,
            client_weights: None,
            bits_per_value: 32,
            target_loss: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub eta: f64,
    pub lambda: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            eta: t.eta,
            lambda: t.lambda,
            local_epochs: t.local_epochs,
            batch_size: t.batch_size,
        }
    }
}

/// A single depolarizing probability for every client, or one per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon {
    Shared(f64),
    PerClient(Vec<f64>),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Shared(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantumSection {
    /// Measurement shots per circuit; 0 means exact probabilities.
    pub shots: u32,
    pub epsilon: Epsilon,
    /// Noise on the server's validation circuits. Defaults to the shared
    /// epsilon, or the mean of the per-client list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_epsilon: Option<f64>,
}

impl Default for QuantumSection {
    fn default() -> Self {
        Self {
            shots: 1000,
            epsilon: Epsilon::default(),
            eval_epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub score: ScoreRule,
    pub threshold: ThresholdRule,
}

/// Lists of values to cross. Absent axes keep the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_clients: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_fraction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub quantum: QuantumSection,
    #[serde(default = "default_partition")]
    pub partition: PartitionScheme,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_partition() -> PartitionScheme {
    PartitionScheme::Dirichlet { alpha: 0.5 }
}

fn toml_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".into());
    Error::config(key, msg)
}

impl ExperimentConfig {
    /// A config over the synthetic benchmark with every other field at its
    /// default.
    pub fn synthetic(mode: Mode, spec: SynthSpec) -> Self {
        Self {
            mode,
            seed: 0,
            output_dir: default_output_dir(),
            dataset: DatasetConfig {
                path: None,
                synthetic: Some(spec),
                anomaly_classes: Vec::new(),
                validation_fraction: default_validation_fraction(),
                data_fraction: 1.0,
                feature_dim: None,
            },
            circuit: CircuitConfig::default(),
            federation: FederationSection::default(),
            training: TrainingSection::default(),
            quantum: QuantumSection::default(),
            partition: default_partition(),
            metrics: MetricsSection::default(),
            sweep: None,
        }
    }

    /// Parses and validates a document. Relative dataset paths resolve
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(toml_error)?;
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                cfg.dataset.path = Some(base_dir.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Applies `PQFL_SEED` and `PQFL_OUTPUT_DIR` when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var(SEED_ENV) {
            self.seed = seed
                .trim()
                .parse()
                .map_err(|e| Error::config(SEED_ENV, format!("{seed:?}: {e}")))?;
        }
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match (&d.path, &d.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::config("dataset", "give either path or synthetic, not both"))
            }
            (None, None) => return Err(Error::config("dataset", "needs path or synthetic")),
            (Some(p), None) if !p.is_file() => {
                return Err(Error::config("dataset.path", format!("{} does not exist", p.display())))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&d.validation_fraction) {
            return Err(Error::config("dataset.validation_fraction", "must lie in [0, 1)"));
        }
        if !(d.data_fraction > 0.0 && d.data_fraction <= 1.0) {
            return Err(Error::config("dataset.data_fraction", "must lie in (0, 1]"));
        }
        if d.feature_dim == Some(0) {
            return Err(Error::config("dataset.feature_dim", "must be >= 1"));
        }
        CircuitSpec::new(self.circuit.n_qubits, self.circuit.n_layers, self.circuit.entangler)
            .map_err(|e| Error::config("circuit", e.to_string()))?;
        if let Some(t) = self.federation.target_loss {
            if !t.is_finite() {
                return Err(Error::config("federation.target_loss", "must be finite"));
            }
        }
        if self.federation.bits_per_value == 0 {
            return Err(Error::config("federation.bits_per_value", "must be >= 1"));
        }
        self.partition.validate()?;
        if let Epsilon::PerClient(list) = &self.quantum.epsilon {
            if list.len() != self.n_clients() {
                return Err(Error::config(
                    "quantum.epsilon",
                    format!("{} values for {} clients", list.len(), self.n_clients()),
                ));
            }
        }
        for &e in self.epsilons().iter().chain(self.quantum.eval_epsilon.iter()) {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config("quantum.epsilon", format!("{e} outside [0, 1]")));
            }
        }
        if let Some(axes) = &self.sweep {
            axes.validate()?;
        }
        self.federation_config(1).map_err(|e| match e {
            Error::Config { key, msg } if !key.contains('.') => {
                let section = match key.as_str() {
                    "eta" | "lambda" | "local_epochs" | "batch_size" => "training",
                    _ => "federation",
                };
                Error::config(format!("{section}.{key}"), msg)
            }
            other => other,
        })?;
        Ok(())
    }

    /// Clients actually trained: one in local mode.
    pub fn n_clients(&self) -> usize {
        match self.mode {
            Mode::Local => 1,
            _ => self.federation.n_clients,
        }
    }

    fn epsilons(&self) -> Vec<f64> {
        match &self.quantum.epsilon {
            Epsilon::Shared(e) => vec![*e; self.n_clients()],
            Epsilon::PerClient(v) if self.mode == Mode::Local => {
                vec![v.iter().sum::<f64>() / v.len().max(1) as f64]
            }
            Epsilon::PerClient(v) => v.clone(),
        }
    }

    pub fn eval_epsilon(&self) -> f64 {
        self.quantum.eval_epsilon.unwrap_or_else(|| match &self.quantum.epsilon {
            Epsilon::Shared(e) => *e,
            Epsilon::PerClient(v) => v.iter().sum::<f64>() / v.len().max(1) as f64,
        })
    }

    pub fn circuit_spec(&self) -> Result<CircuitSpec> {
        CircuitSpec::new(self.circuit.n_qubits, self.circuit.n_layers, self.circuit.entangler)
    }

    /// The federation settings this experiment runs with, for a head over
    /// `n_classes` normal classes.
    pub fn federation_config(&self, n_classes: usize) -> Result<FederationConfig> {
        let n = self.n_clients();
        let client_weights = match (&self.federation.client_weights, self.mode) {
            (_, Mode::Local) => vec![1.0],
            (Some(w), _) => w.clone(),
            (None, _) => vec![1.0 / n as f64; n],
        };
        let noise = |e: f64| if e > 0.0 { NoiseSpec::new(e) } else { Ok(NoiseSpec::off()) };
        let cfg = FederationConfig {
            algorithm: self.mode.algorithm(),
            n_clients: n,
            global_rounds: self.federation.global_rounds,
            client_weights,
            train: TrainConfig {
                eta: self.training.eta,
                lambda: self.training.lambda,
                local_epochs: self.training.local_epochs,
                batch_size: self.training.batch_size,
                mode: TrainMode::Classify,
            },
            spec: self.circuit_spec()?,
            n_classes,
            shots: ShotSpec::from_count(self.quantum.shots),
            client_noise: self.epsilons().into_iter().map(noise).collect::<Result<_>>()?,
            eval_noise: noise(self.eval_epsilon())?,
            master_seed: self.seed,
            score_rule: self.metrics.score,
            threshold_rule: self.metrics.threshold,
            bits_per_value: self.federation.bits_per_value,
            parallel: self.federation.parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SweepAxes {
    pub fn validate(&self) -> Result<()> {
        let lens = [
            ("sweep.lambda", self.lambda.as_ref().map(Vec::len)),
            ("sweep.epsilon", self.epsilon.as_ref().map(Vec::len)),
            ("sweep.shots", self.shots.as_ref().map(Vec::len)),
            ("sweep.n_clients", self.n_clients.as_ref().map(Vec::len)),
            ("sweep.data_fraction", self.data_fraction.as_ref().map(Vec::len)),
        ];
        for (key, len) in lens {
            if len == Some(0) {
                return Err(Error::config(key, "sweep axis must not be empty"));
            }
        }
        Ok(())
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    ExperimentConfig::from_toml_str(&text, base)
}
