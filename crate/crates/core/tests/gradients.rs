mod common;

use common::finite_difference;
use pqfl_core::encoding::FeatureVector;
use pqfl_core::model::{CircuitSpec, Entangler, ModelParams};
use pqfl_core::quantum::{NoiseSpec, Observable, ShotSpec};
use pqfl_core::seed;
use pqfl_core::training::{classify_gradient, loss_classify, loss_vqe, vqe_gradient};
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random_instance(rng: &mut impl Rng, n_classes: usize) -> (CircuitSpec, ModelParams) {
    let n = rng.random_range(1..=4);
    let l = rng.random_range(1..=3);
    let spec = CircuitSpec::new(n, l, Entangler::LinearChain).unwrap();
    let mut p = ModelParams::init(&spec, n_classes, rng);
    for w in &mut p.head_weights {
        *w = rng.random_range(-1.0..1.0);
    }
    for b in &mut p.head_bias {
        *b = rng.random_range(-0.5..0.5);
    }
    (spec, p)
}

fn random_observable(n: usize, rng: &mut impl Rng) -> Observable {
    let labels: Vec<(f64, String)> = (0..3)
        .map(|_| {
            let s: String = (0..n).map(|_| ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]).collect();
            (rng.random_range(-1.0..1.0), s)
        })
        .collect();
    let borrowed: Vec<(f64, &str)> = labels.iter().map(|(w, s)| (*w, s.as_str())).collect();
    Observable::parse_terms(n, &borrowed).unwrap()
}

#[test]
fn vqe_parameter_shift_matches_finite_differences() {
    let mut rng = seed::from_seed(21);
    let off = NoiseSpec::off();
    for case in 0..50 {
        let (spec, params) = random_instance(&mut rng, 1);
        let obs = random_observable(spec.n_qubits, &mut rng);
        let g = vqe_gradient(&spec, &params, &obs, ShotSpec::Exact, &off, &mut rng).unwrap();
        assert_eq!(g.evals_used, 2 * params.angles.len() as u64);
        let fd = finite_difference(&params.angles, H, |a| {
            let mut p = params.clone();
            p.angles = a.to_vec();
            loss_vqe(&spec, &p, &obs, ShotSpec::Exact, &off, &mut seed::from_seed(0)).unwrap()
        });
        for (i, (ps, fd)) in g.angle_grads.iter().zip(&fd).enumerate() {
            assert!((ps - fd).abs() < TOL, "case {case} angle {i}: {ps} vs {fd}");
        }
    }
}

#[test]
fn classification_gradient_matches_finite_differences() {
    let mut rng = seed::from_seed(22);
    let off = NoiseSpec::off();
    for case in 0..50 {
        let n_classes = rng.random_range(2..=3);
        let (spec, params) = random_instance(&mut rng, n_classes);
        let dim = 1 << spec.n_qubits;
        let batch: Vec<FeatureVector> = (0..3)
            .map(|_| {
                let v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                FeatureVector::new(v, rng.random_range(0..n_classes))
            })
            .collect();
        let (g, loss) = classify_gradient(&spec, &params, &batch, ShotSpec::Exact, &off, &mut rng).unwrap();
        let exact = loss_classify(&spec, &params, &batch, ShotSpec::Exact, &off, &mut rng).unwrap();
        assert!((loss - exact).abs() < 1e-12);
        assert_eq!(g.evals_used, 2 * params.angles.len() as u64 * batch.len() as u64);

        let flat = params.to_flat();
        let fd = finite_difference(&flat, H, |v| {
            let p = ModelParams::from_flat(spec.n_qubits, spec.n_layers, n_classes, v).unwrap();
            loss_classify(&spec, &p, &batch, ShotSpec::Exact, &off, &mut seed::from_seed(0)).unwrap()
        });
        let analytic: Vec<f64> = g.values().copied().collect();
        for (i, (a, f)) in analytic.iter().zip(&fd).enumerate() {
            assert!((a - f).abs() < TOL, "case {case} coordinate {i}: {a} vs {f}");
        }
    }
}
