use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis. Label `i` acts on qubit `i`, so the
/// string `"ZI"` is Z on qubit 0 and identity on qubit 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(labels: Vec<Pauli>) -> Self {
        Self(labels)
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self(vec![Pauli::I; n_qubits])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[Pauli] {
        &self.0
    }

    /// `(x_mask, z_mask, n_y)`: bits flipped, bits picking up a sign, and the
    /// number of Y factors (each contributes a factor of i).
    pub(crate) fn masks(&self) -> (usize, usize, usize) {
        let mut x = 0;
        let mut z = 0;
        let mut n_y = 0;
        for (q, p) in self.0.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    n_y += 1;
                }
            }
        }
        (x, z, n_y)
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| Error::Shape(format!("invalid Pauli label {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliString)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

/// Hermitian operator as a real-weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        for (coeff, p) in &terms {
            if p.len() != n_qubits {
                return Err(Error::Shape(format!(
                    "Pauli string {p} has {} labels, expected {n_qubits}",
                    p.len()
                )));
            }
            if !coeff.is_finite() {
                return Err(Error::Numeric(format!("non-finite coefficient on {p}")));
            }
        }
        Ok(Self { n_qubits, terms })
    }

    pub fn parse_terms(n_qubits: usize, terms: &[(f64, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|(c, s)| Ok((*c, s.parse::<PauliString>()?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_qubits, parsed)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .map(|(c, p)| (c * factor, p.clone()))
                .collect(),
        }
    }

    /// Concatenates the terms of two observables on the same register.
    pub fn sum(&self, other: &Observable) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Shape(format!(
                "cannot add observables on {} and {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            n_qubits: self.n_qubits,
            terms,
        })
    }
}
