use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::observable::Pauli;
use super::state::QuantumState;
use crate::error::{Error, Result};

/// Per-gate depolarizing probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub enabled: bool,
}

impl NoiseSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::config(
                "epsilon",
                format!("depolarizing probability must lie in [0, 1], got {epsilon}"),
            ));
        }
        Ok(Self {
            epsilon,
            enabled: true,
        })
    }

    pub fn off() -> Self {
        Self {
            epsilon: 0.0,
            enabled: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.epsilon > 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::off()
    }
}

/// Number of measurements used to estimate probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShotSpec {
    /// Exact Born probabilities.
    #[default]
    Exact,
    Finite(u32),
}

impl ShotSpec {
    pub fn finite(shots: u32) -> Result<Self> {
        if shots == 0 {
            return Err(Error::config("shots", "finite shot count must be >= 1"));
        }
        Ok(ShotSpec::Finite(shots))
    }

    /// `0` encodes exact mode.
    pub fn from_count(shots: u32) -> Self {
        if shots == 0 {
            ShotSpec::Exact
        } else {
            ShotSpec::Finite(shots)
        }
    }

    pub fn as_count(&self) -> u32 {
        match self {
            ShotSpec::Exact => 0,
            ShotSpec::Finite(m) => *m,
        }
    }
}

/// Draws `shots` i.i.d. measurement outcomes and returns the histogram.
///
/// The multinomial is sampled as a chain of conditional binomials, so the cost
/// is `O(2^n)` regardless of the shot count.
pub fn sample_counts<R: Rng + ?Sized>(
    state: &QuantumState,
    shots: ShotSpec,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let ShotSpec::Finite(m) = shots else {
        return Err(Error::Contract(
            "sample_counts needs a finite shot count; use probabilities() in exact mode".into(),
        ));
    };
    let probs = state.probabilities();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = m as u64;
    let mut mass_left = 1.0f64;
    for (j, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probs.len() {
            counts[j] = remaining;
            break;
        }
        let cond = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = Binomial::new(remaining, cond)
            .map_err(|e| Error::Numeric(format!("binomial({remaining}, {cond}): {e}")))?
            .sample(rng);
        counts[j] = k;
        remaining -= k;
        mass_left -= p;
    }
    Ok(counts)
}

/// One trajectory of the single-qubit depolarizing channel: with probability
/// `epsilon` a uniformly chosen X, Y or Z hits `qubit`. Returns the Pauli
/// applied, if any.
pub fn apply_depolarizing<R: Rng + ?Sized>(
    state: &mut QuantumState,
    qubit: usize,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Option<Pauli>> {
    if qubit >= state.n_qubits() {
        return Err(Error::Index(format!(
            "qubit {qubit} out of range for {} qubits",
            state.n_qubits()
        )));
    }
    if !noise.is_active() {
        return Ok(None);
    }
    if rng.random::<f64>() >= noise.epsilon {
        return Ok(None);
    }
    let pauli = match rng.random_range(0..3u8) {
        0 => Pauli::X,
        1 => Pauli::Y,
        _ => Pauli::Z,
    };
    state.apply_pauli(qubit, pauli)?;
    Ok(Some(pauli))
}
