//! Round orchestration: broadcast, local training, aggregation, validation and
//! per-round logging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::FeatureVector;
use crate::error::{Error, Result};
use crate::metrics::{
    anomaly_score, centroid_score, class_centroids, evaluate, MetricReport, ScoreRule, ScoredSet,
    ThresholdRule,
};
use crate::model::{class_probabilities, forward, CircuitSpec, ModelParams};
use crate::quantum::{NoiseSpec, ShotSpec};
use crate::seed::{self, Stream};
use crate::training::{local_train, LocalObjective, TrainConfig};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Which federated algorithm drives local updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Plain local SGD, weighted averaging.
    Qfl,
    /// Local proximal updates anchored at the broadcast model.
    #[default]
    Pqfl,
    /// One client holding all data; nothing is exchanged.
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub algorithm: Algorithm,
    pub n_clients: usize,
    pub global_rounds: usize,
    /// Aggregation weights, one per client, summing to one.
    pub client_weights: Vec<f64>,
    pub train: TrainConfig,
    pub spec: CircuitSpec,
    /// Classes the head predicts.
    pub n_classes: usize,
    pub shots: ShotSpec,
    /// Noise seen by each client during local training.
    pub client_noise: Vec<NoiseSpec>,
    /// Noise seen by the server when validating the global model.
    pub eval_noise: NoiseSpec,
    pub master_seed: u64,
    pub score_rule: ScoreRule,
    pub threshold_rule: ThresholdRule,
    pub bits_per_value: u32,
    /// Train clients on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl FederationConfig {
    /// Uniform weights, noiseless, exact readout.
    pub fn new(spec: CircuitSpec, n_classes: usize, n_clients: usize, global_rounds: usize, train: TrainConfig) -> Self {
        Self {
            algorithm: Algorithm::Pqfl,
            n_clients,
            global_rounds,
            client_weights: vec![1.0 / n_clients.max(1) as f64; n_clients],
            train,
            spec,
            n_classes,
            shots: ShotSpec::Exact,
            client_noise: vec![NoiseSpec::off(); n_clients],
            eval_noise: NoiseSpec::off(),
            master_seed: 0,
            score_rule: ScoreRule::MaxSoftmax,
            threshold_rule: ThresholdRule::MaxTpMinusFp,
            bits_per_value: 32,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::config("n_clients", "must be >= 1"));
        }
        if self.global_rounds == 0 {
            return Err(Error::config("global_rounds", "must be >= 1"));
        }
        check_weights(&self.client_weights, self.n_clients)?;
        if self.client_weights.iter().any(|&a| a <= 0.0) {
            return Err(Error::config("client_weights", "every weight must be positive"));
        }
        if self.client_noise.len() != self.n_clients {
            return Err(Error::config(
                "client_noise",
                format!("{} entries for {} clients", self.client_noise.len(), self.n_clients),
            ));
        }
        if self.algorithm == Algorithm::Local && self.n_clients != 1 {
            return Err(Error::config("n_clients", "local mode trains exactly one client"));
        }
        if self.n_classes == 0 {
            return Err(Error::config("n_classes", "must be >= 1"));
        }
        self.train.validate()
    }

    /// Proximal weight actually used by local training.
    pub fn effective_lambda(&self) -> f64 {
        match self.algorithm {
            Algorithm::Qfl | Algorithm::Local => 0.0,
            Algorithm::Pqfl => self.train.lambda,
        }
    }

    /// Bits exchanged per round; zero without a server.
    pub fn round_payload_bits(&self) -> u64 {
        match self.algorithm {
            Algorithm::Local => 0,
            _ => payload_bits(self.spec.quantum_param_count(), self.bits_per_value),
        }
    }
}

fn check_weights(alphas: &[f64], n: usize) -> Result<()> {
    if alphas.len() != n {
        return Err(Error::config(
            "client_weights",
            format!("{} weights for {n} clients", alphas.len()),
        ));
    }
    let sum: f64 = alphas.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL || alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::config(
            "client_weights",
            format!("weights must be non-negative and sum to 1, got sum {sum}"),
        ));
    }
    Ok(())
}

fn check_homogeneous(sets: &[ModelParams]) -> Result<&ModelParams> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Data("no parameter sets to aggregate".into()))?;
    for p in &sets[1..] {
        first.check_same_shape(p)?;
    }
    Ok(first)
}

/// Element-wise mean, accumulated as offsets from the first set so that
/// identical inputs come back unchanged.
pub fn aggregate_uniform(param_sets: &[ModelParams]) -> Result<ModelParams> {
    let first = check_homogeneous(param_sets)?;
    let mut offsets = vec![0.0; first.len()];
    for p in &param_sets[1..] {
        for ((o, v), f) in offsets.iter_mut().zip(p.values()).zip(first.values()) {
            *o += v - f;
        }
    }
    let n = param_sets.len() as f64;
    let mut out = first.clone();
    for (v, o) in out.values_mut().zip(offsets) {
        *v += o / n;
    }
    Ok(out)
}

/// `Σ α_n w_n`. Equal weights take the [`aggregate_uniform`] path so that
/// uniform weighting reproduces the plain mean bit for bit.
pub fn aggregate_weighted(param_sets: &[ModelParams], alphas: &[f64]) -> Result<ModelParams> {
    let first = check_homogeneous(param_sets)?;
    check_weights(alphas, param_sets.len())?;
    if alphas.iter().all(|&a| a == alphas[0]) {
        return aggregate_uniform(param_sets);
    }
    let mut out = first.clone();
    out.values_mut().for_each(|v| *v = 0.0);
    for (p, &a) in param_sets.iter().zip(alphas) {
        for (o, v) in out.values_mut().zip(p.values()) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Bits exchanged per round for a `d`-parameter quantum model: one upload
/// and one download of `d` values at `bits_per_value` bits each.
pub fn payload_bits(d: usize, bits_per_value: u32) -> u64 {
    2 * d as u64 * bits_per_value as u64
}

/// Held-out samples the server scores after every round. Normal samples
/// carry their head class index in `label`; anomaly labels are ignored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationSet {
    pub samples: Vec<FeatureVector>,
    pub is_anomaly: Vec<bool>,
}

impl ValidationSet {
    pub fn new(samples: Vec<FeatureVector>, is_anomaly: Vec<bool>) -> Result<Self> {
        if samples.len() != is_anomaly.len() {
            return Err(Error::Shape("validation samples and flags differ in length".into()));
        }
        Ok(Self { samples, is_anomaly })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Validation loss (mean cross-entropy over normal samples) and detection
/// metrics for one parameter set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub val_loss: Option<f64>,
    pub report: MetricReport,
    pub scores: Vec<f64>,
}

pub fn evaluate_model(
    config: &FederationConfig,
    params: &ModelParams,
    validation: &ValidationSet,
    rng: &mut seed::Rng,
) -> Result<Evaluation> {
    let mut probs = Vec::with_capacity(validation.len());
    let mut loss = 0.0;
    let mut n_normal = 0usize;
    for (x, &anomaly) in validation.samples.iter().zip(&validation.is_anomaly) {
        let y = forward(&config.spec, params, x, config.shots, &config.eval_noise, rng)?;
        let q = class_probabilities(&y);
        if !anomaly {
            if x.label >= params.n_classes {
                return Err(Error::Label(format!("validation label {} outside head", x.label)));
            }
            loss -= q[x.label].max(f64::MIN_POSITIVE).ln();
            n_normal += 1;
        }
        probs.push(q);
    }
    let scores: Vec<f64> = match config.score_rule {
        ScoreRule::MaxSoftmax => probs.iter().map(|q| anomaly_score(q)).collect(),
        ScoreRule::CentroidDistance => {
            let reference: Vec<Vec<f64>> = probs
                .iter()
                .zip(&validation.is_anomaly)
                .filter(|(_, &a)| !a)
                .map(|(q, _)| q.clone())
                .collect();
            let cents = class_centroids(&reference, params.n_classes);
            probs.iter().map(|q| centroid_score(q, &cents)).collect()
        }
    };
    let set = ScoredSet::new(scores.clone(), validation.is_anomaly.clone())?;
    Ok(Evaluation {
        val_loss: (n_normal > 0).then(|| loss / n_normal as f64),
        report: evaluate(&set, config.threshold_rule),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub params_checksum: String,
    pub val_loss: Option<f64>,
    pub fe_pct: Option<f64>,
    pub me_pct: Option<f64>,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
    pub threshold: f64,
    /// Final-epoch local loss of every client, in client order.
    pub client_losses: Vec<f64>,
    pub payload_bits: u64,
    pub circuit_evals: u64,
}

/// Column order of the history CSV.
pub const HISTORY_COLUMNS: [&str; 11] = [
    "round",
    "params_checksum",
    "val_loss",
    "fe_pct",
    "me_pct",
    "auroc",
    "aupr",
    "threshold",
    "client_losses",
    "payload_bits",
    "circuit_evals",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|e| Error::Parse {
        line,
        msg: format!("{field:?}: {e}"),
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundHistory {
    pub records: Vec<RoundRecord>,
}

impl RoundHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.records.last()
    }

    /// First round whose validation loss is at or below `target`.
    pub fn rounds_to_target(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.val_loss.is_some_and(|l| l <= target))
            .map(|r| r.round)
    }

    pub fn total_payload_bits(&self) -> u64 {
        self.records.iter().map(|r| r.payload_bits).sum()
    }

    pub fn total_circuit_evals(&self) -> u64 {
        self.records.iter().map(|r| r.circuit_evals).sum()
    }

    /// One row per round in [`HISTORY_COLUMNS`] order. Missing metrics are
    /// empty fields; client losses are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut out = HISTORY_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let losses: Vec<String> = r.client_losses.iter().map(|l| l.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.round,
                r.params_checksum,
                fmt_opt(r.val_loss),
                fmt_opt(r.fe_pct),
                fmt_opt(r.me_pct),
                fmt_opt(r.auroc),
                fmt_opt(r.aupr),
                r.threshold,
                losses.join(";"),
                r.payload_bits,
                r.circuit_evals
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == HISTORY_COLUMNS.join(",") => {}
            _ => {
                return Err(Error::Schema {
                    line: 1,
                    msg: format!("expected header `{}`", HISTORY_COLUMNS.join(",")),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != HISTORY_COLUMNS.len() {
                return Err(Error::Schema {
                    line: line_no,
                    msg: format!("{} fields, expected {}", f.len(), HISTORY_COLUMNS.len()),
                });
            }
            let int = |s: &str| {
                s.parse::<u64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("{s:?}: {e}"),
                })
            };
            let client_losses = if f[8].is_empty() {
                Vec::new()
            } else {
                f[8].split(';')
                    .map(|v| parse_opt(v, line_no).map(|o| o.unwrap_or(f64::NAN)))
                    .collect::<Result<Vec<_>>>()?
            };
            records.push(RoundRecord {
                round: int(f[0])? as usize,
                params_checksum: f[1].to_string(),
                val_loss: parse_opt(f[2], line_no)?,
                fe_pct: parse_opt(f[3], line_no)?,
                me_pct: parse_opt(f[4], line_no)?,
                auroc: parse_opt(f[5], line_no)?,
                aupr: parse_opt(f[6], line_no)?,
                threshold: parse_opt(f[7], line_no)?.unwrap_or(f64::NAN),
                client_losses,
                payload_bits: int(f[9])?,
                circuit_evals: int(f[10])?,
            });
        }
        Ok(Self { records })
    }
}

/// One federated round: broadcast `global`, train every client from it,
/// aggregate with the configured weights, then validate the new global model.
/// `round` is 1-based and feeds the per-client seed derivation.
pub fn run_round(
    round: usize,
    config: &FederationConfig,
    global: &ModelParams,
    client_shards: &[Vec<FeatureVector>],
    validation: &ValidationSet,
) -> Result<(ModelParams, RoundRecord)> {
    if client_shards.len() != config.n_clients {
        return Err(Error::config(
            "n_clients",
            format!("{} shards for {} clients", client_shards.len(), config.n_clients),
        ));
    }
    let train = TrainConfig {
        lambda: config.effective_lambda(),
        ..config.train
    };
    let train_client = |client: usize| {
        let mut rng = seed::derive(config.master_seed, Stream::ClientTrain, round as u64, client as u64);
        local_train(
            &config.spec,
            global,
            LocalObjective::Classify(&client_shards[client]),
            &train,
            global,
            config.shots,
            &config.client_noise[client],
            &mut rng,
        )
        .map_err(|e| Error::Client {
            client,
            source: Box::new(e),
        })
    };
    let outcomes: Vec<_> = if config.parallel {
        (0..config.n_clients).into_par_iter().map(train_client).collect()
    } else {
        (0..config.n_clients).map(train_client).collect()
    };
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let locals: Vec<ModelParams> = outcomes.iter().map(|o| o.params.clone()).collect();
    let aggregated = aggregate_weighted(&locals, &config.client_weights)?;

    let mut eval_rng = seed::derive(config.master_seed, Stream::Eval, round as u64, 0);
    let eval = evaluate_model(config, &aggregated, validation, &mut eval_rng)?;
    let record = RoundRecord {
        round,
        params_checksum: aggregated.checksum(),
        val_loss: eval.val_loss,
        fe_pct: eval.report.fe_pct,
        me_pct: eval.report.me_pct,
        auroc: eval.report.auroc,
        aupr: eval.report.aupr,
        threshold: eval.report.threshold,
        client_losses: outcomes
            .iter()
            .map(|o| o.loss_trace.last().copied().unwrap_or(f64::NAN))
            .collect(),
        payload_bits: config.round_payload_bits(),
        circuit_evals: outcomes.iter().map(|o| o.evals_used).sum(),
    };
    Ok((aggregated, record))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationOutcome {
    pub history: RoundHistory,
    pub final_params: ModelParams,
}

/// Initial global parameters drawn from the master seed.
pub fn initial_params(config: &FederationConfig) -> ModelParams {
    let mut rng = seed::derive(config.master_seed, Stream::Init, 0, 0);
    ModelParams::init(&config.spec, config.n_classes, &mut rng)
}

/// Runs `global_rounds` rounds from [`initial_params`].
pub fn run_federation(
    config: &FederationConfig,
    client_shards: &[Vec<FeatureVector>],
    validation: &ValidationSet,
) -> Result<FederationOutcome> {
    config.validate()?;
    run_federation_from(config, initial_params(config), client_shards, validation)
}

pub fn run_federation_from(
    config: &FederationConfig,
    init: ModelParams,
    client_shards: &[Vec<FeatureVector>],
    validation: &ValidationSet,
) -> Result<FederationOutcome> {
    config.validate()?;
    init.check_spec(&config.spec)?;
    let mut global = init;
    let mut history = RoundHistory::default();
    for round in 1..=config.global_rounds {
        let (next, record) = run_round(round, config, &global, client_shards, validation)?;
        global = next;
        history.records.push(record);
    }
    Ok(FederationOutcome {
        history,
        final_params: global,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::Entangler;

    fn scalar(v: f64) -> ModelParams {
        let spec = CircuitSpec::new(1, 1, Entangler::LinearChain).unwrap();
        let mut p = ModelParams::zeros(&spec, 0);
        p.angles[0] = v;
        p
    }

    #[test]
    fn aggregation_examples() {
        let a = scalar(0.7);
        assert_eq!(aggregate_uniform(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert_eq!(aggregate_uniform(&[scalar(0.0), scalar(2.0)]).unwrap().angles[0], 1.0);
        assert_eq!(
            aggregate_weighted(&[scalar(0.0), scalar(4.0)], &[0.25, 0.75]).unwrap().angles[0],
            3.0
        );
        let sets = [scalar(0.3), scalar(-1.2), scalar(5.5)];
        assert_eq!(
            aggregate_weighted(&sets, &[1.0 / 3.0; 3]).unwrap(),
            aggregate_uniform(&sets).unwrap()
        );
        assert_eq!(aggregate_weighted(&sets, &[0.0, 1.0, 0.0]).unwrap(), sets[1]);
    }

    #[test]
    fn aggregation_errors() {
        assert!(matches!(aggregate_uniform(&[]), Err(Error::Data(_))));
        let spec2 = CircuitSpec::new(2, 1, Entangler::LinearChain).unwrap();
        let other = ModelParams::zeros(&spec2, 0);
        assert!(matches!(aggregate_uniform(&[scalar(1.0), other]), Err(Error::Shape(_))));
        assert!(matches!(
            aggregate_weighted(&[scalar(1.0), scalar(2.0)], &[0.5, 0.4]),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            aggregate_weighted(&[scalar(1.0), scalar(2.0)], &[1.0]),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn payload_examples() {
        assert_eq!(payload_bits(12, 32), 768);
        assert_eq!(payload_bits(1, 1), 2);
        assert_eq!(payload_bits(100, 64), 12_800);
    }

    #[test]
    fn rounds_to_target_and_csv() {
        let rec = |round, loss: Option<f64>| RoundRecord {
            round,
            params_checksum: "ab".into(),
            val_loss: loss,
            fe_pct: Some(12.5),
            me_pct: None,
            auroc: Some(0.75),
            aupr: Some(0.5),
            threshold: 0.25,
            client_losses: vec![0.1, 0.2],
            payload_bits: 768,
            circuit_evals: 10,
        };
        let h = RoundHistory { records: vec![rec(1, Some(1.0)), rec(2, None), rec(3, Some(0.4))] };
        assert_eq!(h.rounds_to_target(0.5), Some(3));
        assert_eq!(h.rounds_to_target(1.0), Some(1));
        assert_eq!(h.rounds_to_target(0.1), None);
        assert_eq!(h.total_payload_bits(), 3 * 768);
        let csv = h.to_csv();
        assert!(csv.starts_with("round,params_checksum,val_loss,fe_pct,me_pct,auroc,aupr"));
        assert_eq!(RoundHistory::from_csv(&csv).unwrap(), h);
        assert!(RoundHistory::from_csv("bad header\n").is_err());
    }

    #[test]
    fn config_validation() {
        let spec = CircuitSpec::new(2, 1, Entangler::LinearChain).unwrap();
        let mut cfg = FederationConfig::new(spec, 2, 3, 5, TrainConfig::default());
        assert!(cfg.validate().is_ok());
        cfg.global_rounds = 0;
        assert!(cfg.validate().is_err());
        cfg.global_rounds = 5;
        cfg.client_weights = vec![0.3, 0.3, 0.3];
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "client_weights"));
        cfg.client_weights = vec![0.5, 0.5, 0.0];
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn aggregate_is_convex(
            values in prop::collection::vec(-10.0f64..10.0, 1..6),
            raw in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let sets: Vec<ModelParams> = values.iter().map(|&v| scalar(v)).collect();
            let w = &raw[..sets.len()];
            let total: f64 = w.iter().sum();
            let mut alphas: Vec<f64> = w.iter().map(|x| x / total).collect();
            let head: f64 = alphas[1..].iter().sum();
            alphas[0] = 1.0 - head;
            let agg = aggregate_weighted(&sets, &alphas).unwrap().angles[0];
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(agg >= lo - 1e-12 && agg <= hi + 1e-12);
        }
    }
}
