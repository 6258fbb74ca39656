//! One end-to-end experiment: data preparation, federation and artifacts.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use crate::data::{
    heterogeneity, holdout_split, load_features, partition, reduce_features, synth_anomaly_dataset,
    LabeledDataset, PartitionScheme, PartitionedDataset,
};
use crate::encoding::FeatureVector;
use crate::error::{Error, Result};
use crate::federation::{run_federation, FederationOutcome, RoundHistory, ValidationSet};
use crate::seed::{self, Stream};

pub const CONFIG_FILE: &str = "config.toml";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const PARTITION_FILE: &str = "partition.json";

/// Everything the federation needs, derived deterministically from the
/// config and its seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Normal-only training samples with their original labels.
    pub train: LabeledDataset,
    pub partition: PartitionedDataset,
    /// Training shards with labels mapped to head class indices.
    pub shards: Vec<Vec<FeatureVector>>,
    pub validation: ValidationSet,
    /// Number of normal classes, i.e. head outputs.
    pub n_classes: usize,
}

fn subsample(dataset: &LabeledDataset, fraction: f64, seed: u64) -> LabeledDataset {
    if fraction >= 1.0 {
        return dataset.clone();
    }
    let mut rng = seed::derive(seed, Stream::Subsample, 0, 0);
    let classes: BTreeSet<usize> = dataset.samples.iter().map(|x| x.label).collect();
    let mut keep = Vec::new();
    for c in classes {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.samples[i].label == c)
            .collect();
        idx.shuffle(&mut rng);
        let n = ((idx.len() as f64 * fraction).round() as usize).max(1);
        keep.extend_from_slice(&idx[..n]);
    }
    keep.sort_unstable();
    LabeledDataset {
        samples: keep.into_iter().map(|i| dataset.samples[i].clone()).collect(),
        ..dataset.clone()
    }
}

fn to_head_labels(dataset: &LabeledDataset, samples: Vec<FeatureVector>) -> Vec<FeatureVector> {
    samples
        .into_iter()
        .map(|x| {
            let label = dataset.normal_index(x.label).unwrap_or(x.label);
            FeatureVector::new(x.values, label)
        })
        .collect()
}

/// Loads (or synthesises) the dataset, subsamples, projects to the
/// register size, holds out validation data and partitions the rest.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let seed = cfg.seed;
    let raw = match (&cfg.dataset.path, &cfg.dataset.synthetic) {
        (Some(path), _) => {
            let anomalies: BTreeSet<usize> = cfg.dataset.anomaly_classes.iter().copied().collect();
            load_features(path, &anomalies)?
        }
        (None, Some(spec)) => synth_anomaly_dataset(spec, &mut seed::derive(seed, Stream::Synth, 0, 0))?,
        (None, None) => return Err(Error::config("dataset", "needs path or synthetic")),
    };
    let dataset = subsample(&raw, cfg.dataset.data_fraction, seed);
    let capacity = 1usize << cfg.circuit.n_qubits;
    let target = cfg
        .dataset
        .feature_dim
        .unwrap_or_else(|| dataset.feature_dim().min(capacity));
    if target > capacity {
        return Err(Error::config(
            "dataset.feature_dim",
            format!("{target} features do not fit {} qubits", cfg.circuit.n_qubits),
        ));
    }
    let dataset = reduce_features(&dataset, target, &mut seed::derive(seed, Stream::Projection, 0, 0))?;
    let (train, held) = holdout_split(
        &dataset,
        cfg.dataset.validation_fraction,
        &mut seed::derive(seed, Stream::Split, 0, 0),
    )?;
    let n_clients = cfg.n_clients();
    let scheme = if cfg.mode == Mode::Local { PartitionScheme::Iid } else { cfg.partition };
    let partitioned = partition(&train, scheme, n_clients, &mut seed::derive(seed, Stream::Partition, 0, 0))?;
    let shards = (0..n_clients)
        .map(|k| to_head_labels(&dataset, partitioned.shard_samples(&train, k)))
        .collect();
    let is_anomaly = held.samples.iter().map(|x| dataset.is_anomaly(x.label)).collect();
    let validation = ValidationSet::new(to_head_labels(&dataset, held.samples.clone()), is_anomaly)?;
    Ok(PreparedData {
        n_classes: dataset.n_normal_classes(),
        train,
        partition: partitioned,
        shards,
        validation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub val_loss: Option<f64>,
    pub fe_pct: Option<f64>,
    pub me_pct: Option<f64>,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
    pub threshold: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub n_clients: usize,
    pub global_rounds: usize,
    pub quantum_params: usize,
    pub bits_per_value: u32,
    pub payload_bits_per_round: u64,
    pub total_payload_bits: u64,
    pub total_circuit_evals: u64,
    pub target_loss: Option<f64>,
    pub rounds_to_target: Option<usize>,
    pub final_metrics: FinalMetrics,
    pub params_checksum: String,
    pub avg_pairwise_kl: f64,
}

/// `partition.json`: shard membership as indices into the normal-only
/// training set, with per-client class histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub scheme: PartitionScheme,
    pub shard_sizes: Vec<usize>,
    pub histograms: Vec<Vec<usize>>,
    pub avg_pairwise_kl: f64,
    pub shards: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub outcome: FederationOutcome,
    pub summary: RunSummary,
}

pub fn summarize(cfg: &ExperimentConfig, history: &RoundHistory, checksum: String, kl: f64) -> Result<RunSummary> {
    let spec = cfg.circuit_spec()?;
    let last = history.last().ok_or_else(|| Error::Data("empty history".into()))?;
    let fed = cfg.federation_config(1)?;
    Ok(RunSummary {
        mode: cfg.mode,
        seed: cfg.seed,
        n_clients: cfg.n_clients(),
        global_rounds: history.len(),
        quantum_params: spec.quantum_param_count(),
        bits_per_value: cfg.federation.bits_per_value,
        payload_bits_per_round: fed.round_payload_bits(),
        total_payload_bits: history.total_payload_bits(),
        total_circuit_evals: history.total_circuit_evals(),
        target_loss: cfg.federation.target_loss,
        rounds_to_target: cfg.federation.target_loss.and_then(|t| history.rounds_to_target(t)),
        final_metrics: FinalMetrics {
            val_loss: last.val_loss,
            fe_pct: last.fe_pct,
            me_pct: last.me_pct,
            auroc: last.auroc,
            aupr: last.aupr,
            threshold: last.threshold,
        },
        params_checksum: checksum,
        avg_pairwise_kl: kl,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the experiment without touching the filesystem beyond reading a
/// dataset file.
pub fn execute(cfg: &ExperimentConfig) -> Result<(PreparedData, FederationOutcome)> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let fed = cfg.federation_config(data.n_classes)?;
    let outcome = run_federation(&fed, &data.shards, &data.validation)?;
    Ok((data, outcome))
}

/// Runs the experiment and writes `config.toml`, `history.csv`,
/// `summary.json`, `params.bin` and `partition.json` into `output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    let (data, outcome) = execute(cfg)?;
    let stats = heterogeneity(&data.partition, &data.train);
    let summary = summarize(cfg, &outcome.history, outcome.final_params.checksum(), stats.avg_pairwise_kl)?;
    let manifest = PartitionManifest {
        scheme: data.partition.scheme,
        shard_sizes: data.partition.shard_sizes(),
        histograms: stats.histograms,
        avg_pairwise_kl: stats.avg_pairwise_kl,
        shards: data.partition.shards.clone(),
    };

    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join(CONFIG_FILE), cfg.to_toml_string())?;
    write(&dir.join(HISTORY_FILE), outcome.history.to_csv())?;
    write(
        &dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    write(&dir.join(PARAMS_FILE), outcome.final_params.to_bytes())?;
    write(
        &dir.join(PARTITION_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(RunResult { dir, outcome, summary })
}
