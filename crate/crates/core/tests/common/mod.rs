//! Dense reference implementations used as test oracles. Everything here is
//! built from explicit 2x2 matrices and Kronecker products, with qubit 0 as
//! the rightmost tensor factor.

#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type Mat = Vec<Vec<C>>;

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn identity(d: usize) -> Mat {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { c(1.0) } else { c(0.0) }).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = vec![vec![c(0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == c(0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn scale(a: &Mat, f: f64) -> Mat {
    a.iter().map(|r| r.iter().map(|x| x * f).collect()).collect()
}

pub fn dagger(a: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i].conj()).collect()).collect()
}

pub fn apply(a: &Mat, v: &[C]) -> Vec<C> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn trace(a: &Mat) -> C {
    (0..a.len()).map(|i| a[i][i]).sum()
}

pub fn ry(theta: f64) -> Mat {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co), c(-s)], vec![c(s), c(co)]]
}

pub fn pauli(p: char) -> Mat {
    match p {
        'I' => identity(2),
        'X' => vec![vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]],
        'Y' => vec![vec![c(0.0), C::new(0.0, -1.0)], vec![C::new(0.0, 1.0), c(0.0)]],
        'Z' => vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(-1.0)]],
        _ => panic!("bad pauli {p}"),
    }
}

/// `factors[q]` acts on qubit `q`; missing qubits get the identity.
pub fn tensor(n: usize, factors: &[(usize, Mat)]) -> Mat {
    let mut out = identity(1);
    for q in (0..n).rev() {
        let f = factors
            .iter()
            .find(|(k, _)| *k == q)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| identity(2));
        out = kron(&out, &f);
    }
    out
}

pub fn ry_on(n: usize, q: usize, theta: f64) -> Mat {
    tensor(n, &[(q, ry(theta))])
}

/// `|0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t`.
pub fn cx_on(n: usize, control: usize, target: usize) -> Mat {
    let p0 = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(0.0)]];
    let p1 = vec![vec![c(0.0), c(0.0)], vec![c(0.0), c(1.0)]];
    add(
        &tensor(n, &[(control, p0)]),
        &tensor(n, &[(control, p1), (target, pauli('X'))]),
    )
}

/// Label character `i` acts on qubit `i`.
pub fn pauli_string(label: &str) -> Mat {
    let n = label.len();
    let factors: Vec<(usize, Mat)> = label.chars().enumerate().map(|(q, p)| (q, pauli(p))).collect();
    tensor(n, &factors)
}

pub fn observable(terms: &[(f64, &str)]) -> Mat {
    let n = terms[0].1.len();
    terms.iter().fold(scale(&identity(1 << n), 0.0), |acc, (w, s)| {
        add(&acc, &scale(&pauli_string(s), *w))
    })
}

pub fn expectation(h: &Mat, psi: &[C]) -> f64 {
    let hp = apply(h, psi);
    psi.iter().zip(&hp).map(|(a, b)| a.conj() * b).sum::<C>().re
}

/// One entry per gate: the unitary and the qubits it touches.
pub fn ansatz_gates(
    n: usize,
    layers: usize,
    angles: &[f64],
    pairs: &[(usize, usize)],
) -> Vec<(Mat, Vec<usize>)> {
    let mut gates = Vec::new();
    for l in 0..layers {
        for q in 0..n {
            gates.push((ry_on(n, q, angles[l * n + q]), vec![q]));
        }
        for &(a, b) in pairs {
            gates.push((cx_on(n, a, b), vec![a, b]));
        }
    }
    gates
}

pub fn ansatz_unitary(n: usize, layers: usize, angles: &[f64], pairs: &[(usize, usize)]) -> Mat {
    ansatz_gates(n, layers, angles, pairs)
        .into_iter()
        .fold(identity(1 << n), |u, (g, _)| matmul(&g, &u))
}

pub fn density(psi: &[C]) -> Mat {
    psi.iter()
        .map(|a| psi.iter().map(|b| a * b.conj()).collect())
        .collect()
}

/// `ρ ↦ (1 − ε) ρ + ε/3 Σ_{P∈{X,Y,Z}} P_q ρ P_q`.
pub fn depolarize(rho: &Mat, n: usize, q: usize, eps: f64) -> Mat {
    let mut out = scale(rho, 1.0 - eps);
    for p in ['X', 'Y', 'Z'] {
        let pq = tensor(n, &[(q, pauli(p))]);
        out = add(&out, &scale(&matmul(&matmul(&pq, rho), &pq), eps / 3.0));
    }
    out
}

/// Exact noisy expectation: every gate followed by a depolarizing channel
/// on each qubit it touches.
pub fn noisy_expectation(
    n: usize,
    layers: usize,
    angles: &[f64],
    pairs: &[(usize, usize)],
    psi0: &[C],
    eps: f64,
    h: &Mat,
) -> f64 {
    let mut rho = density(psi0);
    for (g, touched) in ansatz_gates(n, layers, angles, pairs) {
        rho = matmul(&matmul(&g, &rho), &dagger(&g));
        for q in touched {
            rho = depolarize(&rho, n, q, eps);
        }
    }
    trace(&matmul(h, &rho)).re
}

pub fn linear_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect()
}

pub fn ring_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut p = linear_pairs(n);
    if n >= 3 {
        p.push((n - 1, 0));
    }
    p
}

/// Central finite difference of `f` at `x` along every coordinate.
pub fn finite_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let plus = f(&y);
            y[i] = x[i] - h;
            let minus = f(&y);
            y[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}
