use num_complex::Complex64;

use super::observable::{Observable, Pauli};
use crate::error::{Error, Result};

/// Largest register the simulator will allocate (2^20 amplitudes).
pub const MAX_QUBITS: usize = 20;

const NORM_TOL: f64 = 1e-10;

/// A pure state of `n_qubits` qubits held as a dense amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

fn check_width(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    Ok(())
}

impl QuantumState {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_width(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps an amplitude vector. The vector must have length `2^n_qubits`
    /// and unit norm (within 1e-10).
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_width(n_qubits)?;
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::Shape(format!(
                "expected {} amplitudes for {n_qubits} qubits, got {}",
                1usize << n_qubits,
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Degenerate(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn from_real(n_qubits: usize, amplitudes: &[f64]) -> Result<Self> {
        Self::from_amplitudes(
            n_qubits,
            amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// `R_y(angle)` on `qubit`.
    pub fn apply_ry(&mut self, qubit: usize, angle: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (angle / 2.0).sin_cos();
        let bit = 1usize << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = a0 * c - a1 * s;
                self.amplitudes[i | bit] = a0 * s + a1 * c;
            }
        }
        Ok(())
    }

    /// Controlled-X: flips `target` on every basis state whose `control` bit is set.
    pub fn apply_cx(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Index(format!(
                "control and target must differ (both {control})"
            )));
        }
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
        Ok(())
    }

    /// Single-qubit Pauli on `qubit`.
    pub fn apply_pauli(&mut self, qubit: usize, pauli: Pauli) -> Result<()> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        let i_unit = Complex64::new(0.0, 1.0);
        match pauli {
            Pauli::I => {}
            Pauli::X => {
                for i in 0..self.amplitudes.len() {
                    if i & bit == 0 {
                        self.amplitudes.swap(i, i | bit);
                    }
                }
            }
            Pauli::Y => {
                // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                for i in 0..self.amplitudes.len() {
                    if i & bit == 0 {
                        let a0 = self.amplitudes[i];
                        let a1 = self.amplitudes[i | bit];
                        self.amplitudes[i] = -i_unit * a1;
                        self.amplitudes[i | bit] = i_unit * a0;
                    }
                }
            }
            Pauli::Z => {
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *a = -*a;
                    }
                }
            }
        }
        Ok(())
    }

    /// Born-rule probabilities `|a_j|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨ψ|H|ψ⟩` for a Pauli-sum observable.
    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        if obs.n_qubits() != self.n_qubits {
            return Err(Error::Shape(format!(
                "observable acts on {} qubits, state has {}",
                obs.n_qubits(),
                self.n_qubits
            )));
        }
        let mut total = 0.0;
        for (coeff, pauli) in obs.terms() {
            let (xmask, zmask, n_y) = pauli.masks();
            // P|j⟩ = i^{n_y} (−1)^{popcount(j & zmask)} |j ⊕ xmask⟩
            let phase = match n_y % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, 1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, -1.0),
            };
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &a) in self.amplitudes.iter().enumerate() {
                let sign = if (j & zmask).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                acc += self.amplitudes[j ^ xmask].conj() * a * sign;
            }
            total += coeff * (phase * acc).re;
        }
        Ok(total)
    }
}
