//! Local optimisation: VQE and classification losses, parameter-shift
//! gradients, plain SGD and the proximal (personalized) update.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::encoding::{amplitude_encode, FeatureVector};
use crate::error::{Error, Result};
use crate::model::{class_probabilities, head, readout, run_circuit, CircuitSpec, ModelParams};
use crate::quantum::{NoiseSpec, Observable, QuantumState, ShotSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Vqe,
    #[default]
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate.
    pub eta: f64,
    /// Proximal weight pulling local parameters toward the broadcast model.
    pub lambda: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            lambda: 0.1,
            local_epochs: 20,
            batch_size: 16,
            mode: TrainMode::Classify,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::config("eta", format!("must be a finite non-negative number, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Gradient with the same layout as [`ModelParams`], plus the number of
/// shifted circuit evaluations spent computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub angle_grads: Vec<f64>,
    pub head_weight_grads: Vec<f64>,
    pub head_bias_grads: Vec<f64>,
    pub evals_used: u64,
}

impl GradientEstimate {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            angle_grads: vec![0.0; params.angles.len()],
            head_weight_grads: vec![0.0; params.head_weights.len()],
            head_bias_grads: vec![0.0; params.head_bias.len()],
            evals_used: 0,
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.angle_grads
            .iter()
            .chain(&self.head_weight_grads)
            .chain(&self.head_bias_grads)
    }

    fn check_shape(&self, params: &ModelParams) -> Result<()> {
        if self.angle_grads.len() != params.angles.len()
            || self.head_weight_grads.len() != params.head_weights.len()
            || self.head_bias_grads.len() != params.head_bias.len()
        {
            return Err(Error::Shape("gradient shape does not match parameters".into()));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if self.values().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient entry".into()));
        }
        Ok(())
    }

    fn scale(&mut self, factor: f64) {
        for g in self
            .angle_grads
            .iter_mut()
            .chain(self.head_weight_grads.iter_mut())
            .chain(self.head_bias_grads.iter_mut())
        {
            *g *= factor;
        }
    }
}

/// `⟨H⟩` on the ansatz output from `|0…0⟩`. With finite shots every
/// non-identity Pauli term is estimated from `shots` ±1 outcomes drawn with
/// the term's exact outcome probabilities.
pub fn loss_vqe<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    observable: &Observable,
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<f64> {
    if observable.n_qubits() != spec.n_qubits {
        return Err(Error::Shape(format!(
            "observable acts on {} qubits, circuit has {}",
            observable.n_qubits(),
            spec.n_qubits
        )));
    }
    let start = QuantumState::zero(spec.n_qubits)?;
    let out = run_circuit(spec, params, &start, noise, rng)?;
    match shots {
        ShotSpec::Exact => out.expectation(observable),
        ShotSpec::Finite(m) => {
            let mut total = 0.0;
            for (coeff, pauli) in observable.terms() {
                if pauli.labels().iter().all(|p| *p == crate::quantum::Pauli::I) {
                    total += coeff;
                    continue;
                }
                let single = Observable::new(spec.n_qubits, vec![(1.0, pauli.clone())])?;
                let exact = out.expectation(&single)?;
                let p_plus = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
                let plus = Binomial::new(m as u64, p_plus)
                    .map_err(|e| Error::Numeric(e.to_string()))?
                    .sample(rng);
                total += coeff * (2.0 * plus as f64 - m as f64) / m as f64;
            }
            Ok(total)
        }
    }
}

fn check_labels(params: &ModelParams, batch: &[FeatureVector]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    if let Some(x) = batch.iter().find(|x| x.label >= params.n_classes) {
        return Err(Error::Label(format!(
            "label {} outside 0..{}",
            x.label, params.n_classes
        )));
    }
    Ok(())
}

fn nll(y: &[f64], label: usize) -> f64 {
    // −ln softmax(y)[label] via log-sum-exp
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + y.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - y[label]
}

/// Mean softmax cross-entropy of the batch.
pub fn loss_classify<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    batch: &[FeatureVector],
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<f64> {
    check_labels(params, batch)?;
    let mut total = 0.0;
    for x in batch {
        let input = amplitude_encode(&x.values, spec.n_qubits)?;
        let out = run_circuit(spec, params, &input, noise, rng)?;
        let p = readout(&out, shots, rng)?;
        total += nll(&head(params, &p), x.label);
    }
    Ok(total / batch.len() as f64)
}

/// Parameter-shift gradient of a scalar loss with respect to the rotation
/// angles: `(f(θ_i + s) − f(θ_i − s)) / (2 sin s)`, exact for R_y generators
/// at any shift `s` (π/2 gives the usual halved difference). Head gradients
/// are left at zero. Two evaluations are charged per angle.
pub fn grad_parameter_shift<F>(params: &ModelParams, shift: f64, mut loss: F) -> Result<GradientEstimate>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    let denom = 2.0 * shift.sin();
    if denom.abs() < 1e-12 {
        return Err(Error::Numeric(format!("shift {shift} gives a singular rule")));
    }
    let mut grad = GradientEstimate::zeros_like(params);
    let mut shifted = params.clone();
    for i in 0..params.angles.len() {
        let base = params.angles[i];
        shifted.angles[i] = base + shift;
        let plus = loss(&shifted)?;
        shifted.angles[i] = base - shift;
        let minus = loss(&shifted)?;
        shifted.angles[i] = base;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at shifted angle {i}")));
        }
        grad.angle_grads[i] = (plus - minus) / denom;
        grad.evals_used += 2;
    }
    Ok(grad)
}

/// VQE gradient via the parameter-shift rule.
pub fn vqe_gradient<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    observable: &Observable,
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<GradientEstimate> {
    grad_parameter_shift(params, std::f64::consts::FRAC_PI_2, |p| {
        loss_vqe(spec, p, observable, shots, noise, rng)
    })
}

/// Cross-entropy gradient for a mini-batch together with the batch loss.
///
/// Head gradients are analytic. Angle gradients push `∂L/∂p = Wᵀ(q − onehot)`
/// through the parameter-shift derivative of every readout probability, each
/// of which is an expectation of a basis projector.
pub fn classify_gradient<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    batch: &[FeatureVector],
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<(GradientEstimate, f64)> {
    params.check_spec(spec)?;
    check_labels(params, batch)?;
    let shift = std::f64::consts::FRAC_PI_2;
    let dim = spec.readout_dim();
    let mut grad = GradientEstimate::zeros_like(params);
    let mut total_loss = 0.0;
    let mut shifted = params.clone();
    let mut dl_dp = vec![0.0; dim];

    for x in batch {
        let input = amplitude_encode(&x.values, spec.n_qubits)?;
        let p = readout(&run_circuit(spec, params, &input, noise, rng)?, shots, rng)?;
        let y = head(params, &p);
        total_loss += nll(&y, x.label);

        let mut dy = class_probabilities(&y);
        dy[x.label] -= 1.0;
        dl_dp.iter_mut().for_each(|v| *v = 0.0);
        for (c, &d) in dy.iter().enumerate() {
            grad.head_bias_grads[c] += d;
            let row = c * dim;
            for j in 0..dim {
                grad.head_weight_grads[row + j] += d * p[j];
                dl_dp[j] += d * params.head_weights[row + j];
            }
        }

        for i in 0..params.angles.len() {
            let base = params.angles[i];
            shifted.angles[i] = base + shift;
            let plus = readout(&run_circuit(spec, &shifted, &input, noise, rng)?, shots, rng)?;
            shifted.angles[i] = base - shift;
            let minus = readout(&run_circuit(spec, &shifted, &input, noise, rng)?, shots, rng)?;
            shifted.angles[i] = base;
            grad.angle_grads[i] += dl_dp
                .iter()
                .zip(plus.iter().zip(&minus))
                .map(|(g, (a, b))| g * (a - b) / 2.0)
                .sum::<f64>();
            grad.evals_used += 2;
        }
    }

    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    grad.check_finite()?;
    Ok((grad, total_loss / n))
}

/// `w ← w − η g`.
pub fn sgd_step(params: &ModelParams, grad: &GradientEstimate, eta: f64) -> Result<ModelParams> {
    grad.check_shape(params)?;
    let mut next = params.clone();
    for (w, g) in next.values_mut().zip(grad.values()) {
        *w -= eta * g;
    }
    Ok(next)
}

/// `w ← w − η [g + λ (w − w_global)]`, applied to angles and head alike.
pub fn personalized_step(
    params: &ModelParams,
    grad: &GradientEstimate,
    eta: f64,
    lambda: f64,
    global: &ModelParams,
) -> Result<ModelParams> {
    params.check_same_shape(global)?;
    if lambda == 0.0 {
        return sgd_step(params, grad, eta);
    }
    grad.check_shape(params)?;
    let mut next = params.clone();
    for ((w, g), wg) in next.values_mut().zip(grad.values()).zip(global.values()) {
        *w -= eta * (g + lambda * (*w - wg));
    }
    Ok(next)
}

/// What a client optimises locally.
#[derive(Debug, Clone, Copy)]
pub enum LocalObjective<'a> {
    Vqe(&'a Observable),
    Classify(&'a [FeatureVector]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub params: ModelParams,
    /// Mean loss per epoch, measured at the parameters each step started from.
    pub loss_trace: Vec<f64>,
    /// Shifted circuit evaluations spent on gradients.
    pub evals_used: u64,
}

/// Runs `local_epochs` epochs from `start`. VQE epochs are a single gradient
/// step; classification epochs shuffle the shard and step once per
/// mini-batch. Steps use the proximal update anchored at `global`, which
/// reduces to plain SGD when `lambda == 0`.
#[allow(clippy::too_many_arguments)]
pub fn local_train<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    start: &ModelParams,
    objective: LocalObjective<'_>,
    config: &TrainConfig,
    global: &ModelParams,
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<LocalOutcome> {
    config.validate()?;
    start.check_spec(spec)?;
    start.check_same_shape(global)?;
    let mut params = start.clone();
    let mut loss_trace = Vec::with_capacity(config.local_epochs);
    let mut evals_used = 0u64;

    match objective {
        LocalObjective::Vqe(observable) => {
            for _ in 0..config.local_epochs {
                loss_trace.push(loss_vqe(spec, &params, observable, shots, noise, rng)?);
                let grad = vqe_gradient(spec, &params, observable, shots, noise, rng)?;
                evals_used += grad.evals_used;
                params = personalized_step(&params, &grad, config.eta, config.lambda, global)?;
            }
        }
        LocalObjective::Classify(shard) => {
            if shard.is_empty() {
                return Err(Error::Data("empty training shard".into()));
            }
            let mut order: Vec<usize> = (0..shard.len()).collect();
            let mut batch = Vec::with_capacity(config.batch_size);
            for _ in 0..config.local_epochs {
                order.shuffle(rng);
                let mut epoch_loss = 0.0;
                for chunk in order.chunks(config.batch_size) {
                    batch.clear();
                    batch.extend(chunk.iter().map(|&i| shard[i].clone()));
                    let (grad, loss) = classify_gradient(spec, &params, &batch, shots, noise, rng)?;
                    epoch_loss += loss * chunk.len() as f64;
                    evals_used += grad.evals_used;
                    params = personalized_step(&params, &grad, config.eta, config.lambda, global)?;
                }
                loss_trace.push(epoch_loss / shard.len() as f64);
            }
        }
    }
    Ok(LocalOutcome {
        params,
        loss_trace,
        evals_used,
    })
}
