mod common;

use common::*;
use num_complex::Complex64;
use pqfl_core::model::{run_circuit, CircuitSpec, Entangler, ModelParams};
use pqfl_core::quantum::{sample_counts, NoiseSpec, Observable, QuantumState, ShotSpec};
use pqfl_core::seed;
use rand::Rng;

fn random_state(n: usize, rng: &mut impl Rng) -> QuantumState {
    let amps: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    QuantumState::from_amplitudes(n, amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn random_label(n: usize, rng: &mut impl Rng) -> String {
    (0..n).map(|_| ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]).collect()
}

#[test]
fn statevector_matches_dense_kronecker_oracle() {
    let mut rng = seed::from_seed(11);
    for case in 0..200 {
        let n = rng.random_range(1..=3);
        let layers = rng.random_range(1..=2);
        let entangler = if case % 2 == 0 { Entangler::LinearChain } else { Entangler::Ring };
        let spec = CircuitSpec::new(n, layers, entangler).unwrap();
        let mut params = ModelParams::zeros(&spec, 1);
        for a in &mut params.angles {
            *a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        }
        let input = random_state(n, &mut rng);
        let out = run_circuit(&spec, &params, &input, &NoiseSpec::off(), &mut rng).unwrap();

        let pairs = match entangler {
            Entangler::LinearChain => linear_pairs(n),
            Entangler::Ring => ring_pairs(n),
        };
        let u = ansatz_unitary(n, layers, &params.angles, &pairs);
        let expected = apply(&u, input.amplitudes());
        for (a, b) in out.amplitudes().iter().zip(&expected) {
            assert!((a - b).norm() < 1e-10, "case {case}: {a} vs {b}");
        }

        let terms: Vec<(f64, String)> = (0..3)
            .map(|_| (rng.random_range(-2.0..2.0), random_label(n, &mut rng)))
            .collect();
        let borrowed: Vec<(f64, &str)> = terms.iter().map(|(w, s)| (*w, s.as_str())).collect();
        let obs = Observable::parse_terms(n, &borrowed).unwrap();
        let dense = expectation(&observable(&borrowed), &expected);
        assert!((out.expectation(&obs).unwrap() - dense).abs() < 1e-10, "case {case}");
    }
}

#[test]
fn single_gates_match_dense_matrices() {
    let mut rng = seed::from_seed(5);
    for _ in 0..50 {
        let n = rng.random_range(2..=4);
        let s = random_state(n, &mut rng);
        let q = rng.random_range(0..n);
        let theta = rng.random_range(-6.0..6.0);
        let mut got = s.clone();
        got.apply_ry(q, theta).unwrap();
        let want = apply(&ry_on(n, q, theta), s.amplitudes());
        for (a, b) in got.amplitudes().iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
        let c = rng.random_range(0..n);
        let t = (c + rng.random_range(1..n)) % n;
        let mut got = s.clone();
        got.apply_cx(c, t).unwrap();
        let want = apply(&cx_on(n, c, t), s.amplitudes());
        for (a, b) in got.amplitudes().iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn noise_trajectories_average_to_density_matrix_channel() {
    let n = 2;
    let layers = 2;
    let spec = CircuitSpec::new(n, layers, Entangler::LinearChain).unwrap();
    let mut params = ModelParams::zeros(&spec, 1);
    params.angles = vec![0.3, 1.1, -0.7, 2.0];
    let obs_terms = [(1.0, "ZI"), (0.5, "XZ"), (-0.8, "IY")];
    let obs = Observable::parse_terms(n, &obs_terms).unwrap();
    let h = observable(&obs_terms);
    let zero = QuantumState::zero(n).unwrap();
    for eps in [0.05, 0.3] {
        let exact = noisy_expectation(n, layers, &params.angles, &linear_pairs(n), zero.amplitudes(), eps, &h);
        let noise = NoiseSpec::new(eps).unwrap();
        let mut rng = seed::from_seed(99);
        let trials = 40_000;
        let samples: Vec<f64> = (0..trials)
            .map(|_| {
                run_circuit(&spec, &params, &zero, &noise, &mut rng)
                    .unwrap()
                    .expectation(&obs)
                    .unwrap()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - exact).abs() < 5.0 * se + 1e-12, "eps {eps}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn shot_counts_are_unbiased() {
    let mut rng = seed::from_seed(3);
    let s = random_state(3, &mut rng);
    let p = s.probabilities();
    let m = 2000u32;
    let reps = 400;
    let mut mean = vec![0.0; 8];
    for _ in 0..reps {
        let counts = sample_counts(&s, ShotSpec::Finite(m), &mut rng).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), m as u64);
        for (acc, c) in mean.iter_mut().zip(counts) {
            *acc += c as f64 / m as f64 / reps as f64;
        }
    }
    for (est, p) in mean.iter().zip(&p) {
        let se = (p * (1.0 - p) / (m as f64 * reps as f64)).sqrt();
        assert!((est - p).abs() < 5.0 * se + 1e-9, "{est} vs {p}");
    }
}
