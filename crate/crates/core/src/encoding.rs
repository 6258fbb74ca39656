//! Classical-to-quantum loading by amplitude encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{QuantumState, MAX_QUBITS};

/// One labelled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: usize,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, label: usize) -> Self {
        Self { values, label }
    }
}

/// Scales `x` to unit Euclidean norm.
pub fn l2_normalize(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if x.is_empty() || norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector with norm {norm}"
        )));
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

/// Loads `x` as the amplitudes of an `n_qubits` register. Vectors shorter
/// than `2^n_qubits` are zero-padded at the tail; negative entries become
/// negative amplitudes.
pub fn amplitude_encode(x: &[f64], n_qubits: usize) -> Result<QuantumState> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    let dim = 1usize << n_qubits;
    if x.len() > dim {
        return Err(Error::Capacity(format!(
            "{} features do not fit in {n_qubits} qubits ({dim} amplitudes)",
            x.len()
        )));
    }
    let mut padded = l2_normalize(x)?;
    padded.resize(dim, 0.0);
    QuantumState::from_real(n_qubits, &padded)
}
