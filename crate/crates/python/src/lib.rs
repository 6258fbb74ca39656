//! Python bindings for the simulator core.
//!
//! ```python
//! import pqfl
//! spec = pqfl.CircuitSpec(4, 3)
//! params = pqfl.ModelParams.init(spec, n_classes=3, seed=0)
//! scores = pqfl.forward(spec, params, [0.1] * 16)
//! ```

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use pqfl_core::encoding;
use pqfl_core::federation;
use pqfl_core::metrics::{self, ScoredSet, ThresholdRule};
use pqfl_core::model::{self, CircuitSpec, Entangler, ModelParams};
use pqfl_core::quantum::{NoiseSpec, Observable, Pauli, QuantumState, ShotSpec};
use pqfl_core::runner::{self, Mode};
use pqfl_core::seed;
use pqfl_core::training::{self, LocalObjective, TrainConfig, TrainMode};

create_exception!(pqfl, PqflError, PyException, "Raised for any simulator error.");

fn err(e: pqfl_core::Error) -> PyErr {
    PqflError::new_err(e.to_string())
}

fn noise(epsilon: f64) -> PyResult<NoiseSpec> {
    if epsilon > 0.0 {
        NoiseSpec::new(epsilon).map_err(err)
    } else {
        Ok(NoiseSpec::off())
    }
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PqflError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "QuantumState", module = "pqfl")]
struct PyQuantumState {
    inner: QuantumState,
}

#[pymethods]
impl PyQuantumState {
    /// The all-zeros state on `n_qubits` qubits.
    #[new]
    fn new(n_qubits: usize) -> PyResult<Self> {
        Ok(Self { inner: QuantumState::zero(n_qubits).map_err(err)? })
    }

    /// A state with the given real, normalised amplitudes.
    #[staticmethod]
    fn from_real(n_qubits: usize, amplitudes: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: QuantumState::from_real(n_qubits, &amplitudes).map_err(err)? })
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    fn apply_ry(&mut self, qubit: usize, angle: f64) -> PyResult<()> {
        self.inner.apply_ry(qubit, angle).map_err(err)
    }

    fn apply_cx(&mut self, control: usize, target: usize) -> PyResult<()> {
        self.inner.apply_cx(control, target).map_err(err)
    }

    fn apply_pauli(&mut self, qubit: usize, pauli: char) -> PyResult<()> {
        let p = Pauli::from_char(pauli).ok_or_else(|| PqflError::new_err(format!("unknown Pauli {pauli:?}")))?;
        self.inner.apply_pauli(qubit, p).map_err(err)
    }

    /// Amplitudes as `(re, im)` pairs, little-endian basis order.
    fn amplitudes(&self) -> Vec<(f64, f64)> {
        self.inner.amplitudes().iter().map(|a| (a.re, a.im)).collect()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities()
    }

    fn expectation(&self, observable: PyRef<'_, PyObservable>) -> PyResult<f64> {
        self.inner.expectation(&observable.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("QuantumState(n_qubits={})", self.inner.n_qubits())
    }
}

#[pyclass(name = "Observable", module = "pqfl")]
struct PyObservable {
    inner: Observable,
}

#[pymethods]
impl PyObservable {
    /// Weighted Pauli strings, e.g. `Observable(2, [(1.0, "ZI"), (0.5, "XX")])`.
    /// Character `i` of a label acts on qubit `i`.
    #[new]
    fn new(n_qubits: usize, terms: Vec<(f64, String)>) -> PyResult<Self> {
        let borrowed: Vec<(f64, &str)> = terms.iter().map(|(w, s)| (*w, s.as_str())).collect();
        Ok(Self { inner: Observable::parse_terms(n_qubits, &borrowed).map_err(err)? })
    }

    fn terms(&self) -> Vec<(f64, String)> {
        self.inner.terms().iter().map(|(w, p)| (*w, p.to_string())).collect()
    }
}

#[pyclass(name = "CircuitSpec", module = "pqfl")]
struct PyCircuitSpec {
    inner: CircuitSpec,
}

#[pymethods]
impl PyCircuitSpec {
    #[new]
    #[pyo3(signature = (n_qubits, n_layers, entangler = "linear-chain"))]
    fn new(n_qubits: usize, n_layers: usize, entangler: &str) -> PyResult<Self> {
        let entangler = match entangler {
            "linear-chain" => Entangler::LinearChain,
            "ring" => Entangler::Ring,
            other => return Err(PqflError::new_err(format!("unknown entangler {other:?}"))),
        };
        Ok(Self { inner: CircuitSpec::new(n_qubits, n_layers, entangler).map_err(err)? })
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.inner.n_layers
    }

    fn quantum_param_count(&self) -> usize {
        self.inner.quantum_param_count()
    }
}

#[pyclass(name = "ModelParams", module = "pqfl")]
struct PyModelParams {
    inner: ModelParams,
}

#[pymethods]
impl PyModelParams {
    /// Random initial parameters: angles in [0, π), head weights in
    /// [-0.1, 0.1], zero bias.
    #[staticmethod]
    #[pyo3(signature = (spec, n_classes, seed = 0))]
    fn init(spec: PyRef<'_, PyCircuitSpec>, n_classes: usize, seed: u64) -> Self {
        Self { inner: ModelParams::init(&spec.inner, n_classes, &mut seed::from_seed(seed)) }
    }

    #[staticmethod]
    fn zeros(spec: PyRef<'_, PyCircuitSpec>, n_classes: usize) -> Self {
        Self { inner: ModelParams::zeros(&spec.inner, n_classes) }
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: ModelParams::from_bytes(data).map_err(err)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[getter]
    fn angles(&self) -> Vec<f64> {
        self.inner.angles.clone()
    }

    #[setter]
    fn set_angles(&mut self, values: Vec<f64>) -> PyResult<()> {
        if values.len() != self.inner.angles.len() {
            return Err(PqflError::new_err(format!("expected {} angles", self.inner.angles.len())));
        }
        self.inner.angles = values;
        Ok(())
    }

    #[getter]
    fn head_weights(&self) -> Vec<f64> {
        self.inner.head_weights.clone()
    }

    #[getter]
    fn head_bias(&self) -> Vec<f64> {
        self.inner.head_bias.clone()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.inner.to_flat()
    }

    fn checksum(&self) -> String {
        self.inner.checksum()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: PyRef<'_, PyModelParams>) -> bool {
        self.inner == other.inner
    }
}

/// Zero-pads `x` to `2^n_qubits`, normalises it and loads it as a state.
#[pyfunction]
fn amplitude_encode(x: Vec<f64>, n_qubits: usize) -> PyResult<PyQuantumState> {
    Ok(PyQuantumState { inner: encoding::amplitude_encode(&x, n_qubits).map_err(err)? })
}

/// Class scores `W p + b` for one feature vector. `shots = 0` reads exact
/// probabilities.
#[pyfunction]
#[pyo3(signature = (spec, params, x, shots = 0, epsilon = 0.0, seed = 0))]
fn forward(
    spec: PyRef<'_, PyCircuitSpec>,
    params: PyRef<'_, PyModelParams>,
    x: Vec<f64>,
    shots: u32,
    epsilon: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let fv = encoding::FeatureVector::new(x, 0);
    model::forward(&spec.inner, &params.inner, &fv, ShotSpec::from_count(shots), &noise(epsilon)?, &mut seed::from_seed(seed))
        .map_err(err)
}

#[pyfunction]
fn class_probabilities(y: Vec<f64>) -> Vec<f64> {
    model::class_probabilities(&y)
}

/// `⟨H⟩` of the ansatz applied to `|0…0⟩`.
#[pyfunction]
#[pyo3(signature = (spec, params, observable, shots = 0, epsilon = 0.0, seed = 0))]
fn loss_vqe(
    spec: PyRef<'_, PyCircuitSpec>,
    params: PyRef<'_, PyModelParams>,
    observable: PyRef<'_, PyObservable>,
    shots: u32,
    epsilon: f64,
    seed: u64,
) -> PyResult<f64> {
    training::loss_vqe(&spec.inner, &params.inner, &observable.inner, ShotSpec::from_count(shots), &noise(epsilon)?, &mut seed::from_seed(seed))
        .map_err(err)
}

/// Parameter-shift gradient of [`loss_vqe`] with respect to the angles.
#[pyfunction]
#[pyo3(signature = (spec, params, observable, shots = 0, epsilon = 0.0, seed = 0))]
fn vqe_gradient(
    spec: PyRef<'_, PyCircuitSpec>,
    params: PyRef<'_, PyModelParams>,
    observable: PyRef<'_, PyObservable>,
    shots: u32,
    epsilon: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    training::vqe_gradient(&spec.inner, &params.inner, &observable.inner, ShotSpec::from_count(shots), &noise(epsilon)?, &mut seed::from_seed(seed))
        .map(|g| g.angle_grads)
        .map_err(err)
}

/// Gradient descent on `⟨H⟩` for `steps` steps. Returns the final
/// parameters and the loss before each step.
#[pyfunction]
#[pyo3(signature = (spec, params, observable, eta, steps, shots = 0, epsilon = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train_vqe(
    spec: PyRef<'_, PyCircuitSpec>,
    params: PyRef<'_, PyModelParams>,
    observable: PyRef<'_, PyObservable>,
    eta: f64,
    steps: usize,
    shots: u32,
    epsilon: f64,
    seed: u64,
) -> PyResult<(PyModelParams, Vec<f64>)> {
    let cfg = TrainConfig { eta, lambda: 0.0, local_epochs: steps, batch_size: 1, mode: TrainMode::Vqe };
    let out = training::local_train(
        &spec.inner,
        &params.inner,
        LocalObjective::Vqe(&observable.inner),
        &cfg,
        &params.inner,
        ShotSpec::from_count(shots),
        &noise(epsilon)?,
        &mut seed::from_seed(seed),
    )
    .map_err(err)?;
    Ok((PyModelParams { inner: out.params }, out.loss_trace))
}

/// Weighted element-wise average; uniform when `weights` is omitted.
#[pyfunction]
#[pyo3(signature = (param_sets, weights = None))]
fn aggregate(param_sets: Vec<PyRef<'_, PyModelParams>>, weights: Option<Vec<f64>>) -> PyResult<PyModelParams> {
    let sets: Vec<ModelParams> = param_sets.iter().map(|p| p.inner.clone()).collect();
    let inner = match weights {
        Some(w) => federation::aggregate_weighted(&sets, &w),
        None => federation::aggregate_uniform(&sets),
    }
    .map_err(err)?;
    Ok(PyModelParams { inner })
}

#[pyfunction]
#[pyo3(signature = (d, bits_per_value = 32))]
fn payload_bits(d: usize, bits_per_value: u32) -> u64 {
    federation::payload_bits(d, bits_per_value)
}

fn scored(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<ScoredSet> {
    ScoredSet::new(scores, labels).map_err(err)
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auroc(&scored(scores, labels)?).map_err(err)
}

#[pyfunction]
fn aupr(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::aupr(&scored(scores, labels)?).map_err(err)
}

/// FE/ME at the best (or a fixed) threshold plus AUROC and AUPR, as a dict.
#[pyfunction]
#[pyo3(signature = (scores, labels, threshold = None))]
fn evaluate<'py>(py: Python<'py>, scores: Vec<f64>, labels: Vec<bool>, threshold: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let rule = threshold.map_or(ThresholdRule::MaxTpMinusFp, ThresholdRule::Fixed);
    to_dict(py, &metrics::evaluate(&scored(scores, labels)?, rule))
}

#[pyfunction]
#[pyo3(signature = (alpha, n, seed = 0))]
fn dirichlet_proportions(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
    pqfl_core::data::dirichlet_proportions(alpha, n, &mut seed::from_seed(seed))
}

/// Loads a TOML experiment config, applies the overrides, runs it and
/// returns the summary as a dict. Artifacts land in the output directory.
#[pyfunction]
#[pyo3(signature = (config_path, seed = None, output_dir = None, mode = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    mode: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = runner::load_config(&config_path).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = output_dir {
        cfg.output_dir = d;
    }
    if let Some(m) = mode {
        cfg.mode = m.parse::<Mode>().map_err(err)?;
    }
    cfg.validate().map_err(err)?;
    let result = py.detach(|| runner::run(&cfg)).map_err(err)?;
    let summary = to_dict(py, &result.summary)?;
    summary.cast::<PyDict>()?.set_item("output_dir", result.dir.display().to_string())?;
    Ok(summary)
}

#[pymodule]
fn pqfl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PqflError", m.py().get_type::<PqflError>())?;
    m.add_class::<PyQuantumState>()?;
    m.add_class::<PyObservable>()?;
    m.add_class::<PyCircuitSpec>()?;
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(amplitude_encode, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(class_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(loss_vqe, m)?)?;
    m.add_function(wrap_pyfunction!(vqe_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(train_vqe, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(payload_bits, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aupr, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_proportions, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
