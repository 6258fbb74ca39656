//! The hybrid model: a layered R_y/CX ansatz, probability readout and a
//! linear head `y = W p + b`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::{amplitude_encode, FeatureVector};
use crate::error::{Error, Result};
use crate::quantum::{apply_depolarizing, sample_counts, NoiseSpec, QuantumState, ShotSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entangler {
    /// CX(i, i+1) for i = 0..n-2.
    #[default]
    LinearChain,
    /// Linear chain plus CX(n-1, 0) when n >= 3.
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    #[serde(default)]
    pub entangler: Entangler,
}

impl CircuitSpec {
    pub fn new(n_qubits: usize, n_layers: usize, entangler: Entangler) -> Result<Self> {
        if n_qubits == 0 || n_qubits > crate::quantum::MAX_QUBITS {
            return Err(Error::config("n_qubits", format!("must be in 1..=20, got {n_qubits}")));
        }
        if n_layers == 0 {
            return Err(Error::config("n_layers", "must be >= 1"));
        }
        Ok(Self {
            n_qubits,
            n_layers,
            entangler,
        })
    }

    /// Number of trainable rotation angles (`n_layers * n_qubits`).
    pub fn quantum_param_count(&self) -> usize {
        self.n_layers * self.n_qubits
    }

    /// Length of the probability readout, `2^n_qubits`.
    pub fn readout_dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// CX pairs applied after the rotations of every layer.
    pub fn entangling_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        let mut pairs: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if self.entangler == Entangler::Ring && n >= 3 {
            pairs.push((n - 1, 0));
        }
        pairs
    }
}

/// Trainable parameters. The flat order used for checkpoints and for the
/// federated parameter vector is: angles layer-major (`angles[layer * n_qubits
/// + qubit]`), then `W` row-major (`n_classes` rows of `2^n_qubits`), then `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub n_classes: usize,
    pub angles: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"PQFLPRM1";

impl ModelParams {
    pub fn zeros(spec: &CircuitSpec, n_classes: usize) -> Self {
        Self {
            n_qubits: spec.n_qubits,
            n_layers: spec.n_layers,
            n_classes,
            angles: vec![0.0; spec.quantum_param_count()],
            head_weights: vec![0.0; n_classes * spec.readout_dim()],
            head_bias: vec![0.0; n_classes],
        }
    }

    /// Angles uniform in `[0, π)`, head weights uniform in `[-0.1, 0.1]`, zero bias.
    pub fn init<R: Rng + ?Sized>(spec: &CircuitSpec, n_classes: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec, n_classes);
        for a in &mut p.angles {
            *a = rng.random_range(0.0..std::f64::consts::PI);
        }
        for w in &mut p.head_weights {
            *w = rng.random_range(-0.1..=0.1);
        }
        p
    }

    pub fn readout_dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn angle(&self, layer: usize, qubit: usize) -> f64 {
        self.angles[layer * self.n_qubits + qubit]
    }

    pub fn weight(&self, class: usize, j: usize) -> f64 {
        self.head_weights[class * self.readout_dim() + j]
    }

    pub fn len(&self) -> usize {
        self.angles.len() + self.head_weights.len() + self.head_bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_spec(&self, spec: &CircuitSpec) -> Result<()> {
        if self.n_qubits != spec.n_qubits
            || self.n_layers != spec.n_layers
            || self.angles.len() != spec.quantum_param_count()
            || self.head_weights.len() != self.n_classes * spec.readout_dim()
            || self.head_bias.len() != self.n_classes
        {
            return Err(Error::Shape(format!(
                "params ({} qubits, {} layers, {} classes) do not match circuit ({} qubits, {} layers)",
                self.n_qubits, self.n_layers, self.n_classes, spec.n_qubits, spec.n_layers
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.n_qubits == other.n_qubits
            && self.n_layers == other.n_layers
            && self.n_classes == other.n_classes
            && self.angles.len() == other.angles.len()
            && self.head_weights.len() == other.head_weights.len()
            && self.head_bias.len() == other.head_bias.len()
    }

    pub fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "parameter shapes differ: ({}, {}, {}) vs ({}, {}, {})",
                self.n_qubits,
                self.n_layers,
                self.n_classes,
                other.n_qubits,
                other.n_layers,
                other.n_classes
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.angles
            .iter()
            .chain(&self.head_weights)
            .chain(&self.head_bias)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.angles
            .iter_mut()
            .chain(self.head_weights.iter_mut())
            .chain(self.head_bias.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn from_flat(
        n_qubits: usize,
        n_layers: usize,
        n_classes: usize,
        flat: &[f64],
    ) -> Result<Self> {
        let n_angles = n_layers * n_qubits;
        let n_w = n_classes << n_qubits;
        if flat.len() != n_angles + n_w + n_classes {
            return Err(Error::Shape(format!(
                "flat vector has {} values, expected {}",
                flat.len(),
                n_angles + n_w + n_classes
            )));
        }
        if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite parameter {bad}")));
        }
        Ok(Self {
            n_qubits,
            n_layers,
            n_classes,
            angles: flat[..n_angles].to_vec(),
            head_weights: flat[n_angles..n_angles + n_w].to_vec(),
            head_bias: flat[n_angles + n_w..].to_vec(),
        })
    }

    pub fn l2_distance(&self, other: &ModelParams) -> f64 {
        self.values()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Binary checkpoint: `b"PQFLPRM1"`, then `n_qubits`, `n_layers`,
    /// `n_classes` as little-endian u32, then every value of the flat vector as
    /// a little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.len());
        out.extend_from_slice(MAGIC);
        for v in [self.n_qubits, self.n_layers, self.n_classes] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Data("not a parameter checkpoint".into()));
        }
        let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (n_qubits, n_layers, n_classes) = (u(8), u(12), u(16));
        let body = &bytes[20..];
        if body.len() % 8 != 0 {
            return Err(Error::Data("truncated parameter checkpoint".into()));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(n_qubits, n_layers, n_classes, &flat)
    }

    /// Text form: a header line `n_qubits n_layers n_classes`, then one value
    /// per line in flat order.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_qubits, self.n_layers, self.n_classes);
        for v in self.values() {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Data("empty parameter text".into()))?;
        let dims = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?;
        if dims.len() != 3 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `n_qubits n_layers n_classes`".into(),
            });
        }
        let flat = lines
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_flat(dims[0], dims[1], dims[2], &flat)
    }

    /// Hex digest (first 16 hex chars of SHA-256) over the checkpoint bytes.
    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Applies the ansatz to `input`. Each layer applies `R_y(angle)` to every
/// qubit and then the entangling CX pattern. With noise enabled, every qubit a
/// gate touches receives one depolarizing trajectory draw right after the gate.
pub fn run_circuit<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    input: &QuantumState,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<QuantumState> {
    params.check_spec(spec)?;
    if input.n_qubits() != spec.n_qubits {
        return Err(Error::Shape(format!(
            "input state has {} qubits, circuit has {}",
            input.n_qubits(),
            spec.n_qubits
        )));
    }
    let noisy = noise.is_active();
    let pairs = spec.entangling_pairs();
    let mut state = input.clone();
    for layer in 0..spec.n_layers {
        for q in 0..spec.n_qubits {
            state.apply_ry(q, params.angle(layer, q))?;
            if noisy {
                apply_depolarizing(&mut state, q, noise, rng)?;
            }
        }
        for &(c, t) in &pairs {
            state.apply_cx(c, t)?;
            if noisy {
                apply_depolarizing(&mut state, c, noise, rng)?;
                apply_depolarizing(&mut state, t, noise, rng)?;
            }
        }
    }
    Ok(state)
}

/// Probability readout: exact Born probabilities or shot frequencies.
pub fn readout<R: Rng + ?Sized>(
    state: &QuantumState,
    shots: ShotSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match shots {
        ShotSpec::Exact => Ok(state.probabilities()),
        ShotSpec::Finite(m) => Ok(sample_counts(state, shots, rng)?
            .into_iter()
            .map(|c| c as f64 / m as f64)
            .collect()),
    }
}

/// Circuit output probabilities for one feature vector.
pub fn circuit_probabilities<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    x: &[f64],
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let input = amplitude_encode(x, spec.n_qubits)?;
    let out = run_circuit(spec, params, &input, noise, rng)?;
    readout(&out, shots, rng)
}

/// `y = W p + b`.
pub fn head(params: &ModelParams, p: &[f64]) -> Vec<f64> {
    let dim = params.readout_dim();
    (0..params.n_classes)
        .map(|c| {
            let row = &params.head_weights[c * dim..(c + 1) * dim];
            row.iter().zip(p).map(|(w, v)| w * v).sum::<f64>() + params.head_bias[c]
        })
        .collect()
}

/// Class scores for one sample.
pub fn forward<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    params: &ModelParams,
    x: &FeatureVector,
    shots: ShotSpec,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = circuit_probabilities(spec, params, &x.values, shots, noise, rng)?;
    Ok(head(params, &p))
}

/// Numerically stable softmax.
pub fn class_probabilities(y: &[f64]) -> Vec<f64> {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = y.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn spec(n: usize, l: usize) -> CircuitSpec {
        CircuitSpec::new(n, l, Entangler::LinearChain).unwrap()
    }

    #[test]
    fn zero_angles_leave_ground_state() {
        let s = spec(3, 2);
        let p = ModelParams::zeros(&s, 2);
        let out = run_circuit(&s, &p, &QuantumState::zero(3).unwrap(), &NoiseSpec::off(), &mut seed::from_seed(0)).unwrap();
        assert_eq!(out, QuantumState::zero(3).unwrap());
    }

    #[test]
    fn single_rotation() {
        let s = spec(1, 1);
        let mut p = ModelParams::zeros(&s, 1);
        p.angles[0] = 1.1;
        let out = run_circuit(&s, &p, &QuantumState::zero(1).unwrap(), &NoiseSpec::off(), &mut seed::from_seed(0)).unwrap();
        assert!((out.amplitudes()[0].re - (0.55f64).cos()).abs() < 1e-15);
        assert!((out.amplitudes()[1].re - (0.55f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn zero_angles_reduce_to_entangler() {
        let s = spec(2, 1);
        let p = ModelParams::zeros(&s, 1);
        let input = QuantumState::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = run_circuit(&s, &p, &input, &NoiseSpec::off(), &mut seed::from_seed(0)).unwrap();
        let mut expect = input.clone();
        expect.apply_cx(0, 1).unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn ring_closure() {
        assert_eq!(spec(3, 1).entangling_pairs(), vec![(0, 1), (1, 2)]);
        let ring = CircuitSpec::new(3, 1, Entangler::Ring).unwrap();
        assert_eq!(ring.entangling_pairs(), vec![(0, 1), (1, 2), (2, 0)]);
        assert_eq!(spec(1, 1).entangling_pairs(), vec![]);
    }

    #[test]
    fn head_examples() {
        let s = spec(1, 1);
        let mut p = ModelParams::zeros(&s, 2);
        p.head_weights = vec![1.0, 0.0, 0.0, 1.0];
        let x = FeatureVector::new(vec![0.6, 0.8], 0);
        let mut rng = seed::from_seed(0);
        let y = forward(&s, &p, &x, ShotSpec::Exact, &NoiseSpec::off(), &mut rng).unwrap();
        let probs = circuit_probabilities(&s, &p, &x.values, ShotSpec::Exact, &NoiseSpec::off(), &mut rng).unwrap();
        assert_eq!(y, probs);

        let mut p = ModelParams::zeros(&s, 2);
        p.head_bias = vec![0.3, 0.7];
        let y = forward(&s, &p, &x, ShotSpec::Exact, &NoiseSpec::off(), &mut rng).unwrap();
        assert_eq!(y, vec![0.3, 0.7]);
    }

    #[test]
    fn finite_shot_forward_is_seeded() {
        let s = spec(2, 2);
        let p = ModelParams::init(&s, 3, &mut seed::from_seed(4));
        let x = FeatureVector::new(vec![0.2, -0.4, 0.9, 0.1], 0);
        let run = || {
            forward(&s, &p, &x, ShotSpec::Finite(1000), &NoiseSpec::off(), &mut seed::from_seed(77)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(class_probabilities(&[0.0, 0.0]), vec![0.5, 0.5]);
        let q = class_probabilities(&[1000.0, 0.0]);
        assert!((q[0] - 1.0).abs() < 1e-12 && q[1] >= 0.0 && q[1] < 1e-12);
        let q = class_probabilities(&[1.0, 2.0, 3.0]);
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((q[i] - v.exp() / z).abs() < 1e-12);
        }
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_count_and_init_ranges() {
        let s = spec(4, 3);
        assert_eq!(s.quantum_param_count(), 12);
        let p = ModelParams::init(&s, 10, &mut seed::from_seed(1));
        assert!(p.angles.iter().all(|a| (0.0..std::f64::consts::PI).contains(a)));
        assert!(p.head_weights.iter().all(|w| w.abs() <= 0.1));
        assert!(p.head_bias.iter().all(|b| *b == 0.0));
        assert_eq!(p.head_weights.len(), 160);
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = spec(2, 2);
        let p = ModelParams::init(&s, 3, &mut seed::from_seed(8));
        assert_eq!(ModelParams::from_bytes(&p.to_bytes()).unwrap(), p);
        assert_eq!(ModelParams::from_text(&p.to_text()).unwrap(), p);
        let flat = p.to_flat();
        assert_eq!(flat[..4], p.angles[..]);
        assert_eq!(flat[flat.len() - 3..], p.head_bias[..]);
        assert!(ModelParams::from_bytes(b"garbage").is_err());
        assert!(ModelParams::from_flat(2, 2, 3, &flat[1..]).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let s = spec(2, 1);
        let p = ModelParams::zeros(&spec(3, 1), 1);
        let r = run_circuit(&s, &p, &QuantumState::zero(2).unwrap(), &NoiseSpec::off(), &mut seed::from_seed(0));
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
