//! Statevector simulation: states, Pauli observables, finite-shot sampling and
//! trajectory-based depolarizing noise.
//!
//! Qubit ordering is little-endian throughout: qubit `q` is bit `q` of the
//! basis index, so `|10⟩` written with qubit 0 first is basis index 1.

mod noise;
mod observable;
mod state;

pub use noise::{apply_depolarizing, sample_counts, NoiseSpec, ShotSpec};
pub use observable::{Observable, Pauli, PauliString};
pub use state::{QuantumState, MAX_QUBITS};
