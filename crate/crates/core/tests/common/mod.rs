//! Shared test oracles: brute-force eigensolver and finite-difference
//! derivatives, kept independent of the library's probe/gradient paths.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use steplab::model::{grad, loss, Batch, ModelSpec};
use steplab::params::ParamVector;

/// Cyclic Jacobi eigenvalue decomposition of a symmetric matrix.
pub fn jacobi_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _sweep in 0..300 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[p][q] * a[p][q];
                }
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// The eigenvalue of largest magnitude, sign preserved.
pub fn top_abs_eigenvalue(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .expect("nonempty spectrum")
}

/// A random symmetric matrix with entries in [-1, 1].
pub fn random_symmetric(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let v = rng.random_range(-1.0..1.0);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Dense central-difference gradient of the model loss.
pub fn fd_gradient(params: &ParamVector, batch: &Batch, spec: &ModelSpec, h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len());
    let mut work = params.clone();
    for i in 0..params.len() {
        let orig = work.values()[i];
        work.values_mut()[i] = orig + h;
        let fp = loss(&work, batch, spec).expect("finite loss at perturbed point");
        work.values_mut()[i] = orig - h;
        let fm = loss(&work, batch, spec).expect("finite loss at perturbed point");
        work.values_mut()[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Dense Hessian from central differences of the gradient, columnwise,
/// symmetrized.
pub fn fd_hessian(params: &ParamVector, batch: &Batch, spec: &ModelSpec, h: f64) -> Vec<Vec<f64>> {
    let p = params.len();
    let mut cols = Vec::with_capacity(p);
    let mut work = params.clone();
    for j in 0..p {
        let orig = work.values()[j];
        work.values_mut()[j] = orig + h;
        let gp = grad(&work, batch, spec).expect("finite gradient at perturbed point");
        work.values_mut()[j] = orig - h;
        let gm = grad(&work, batch, spec).expect("finite gradient at perturbed point");
        work.values_mut()[j] = orig;
        let col: Vec<f64> = gp
            .values()
            .iter()
            .zip(gm.values())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        cols.push(col);
    }
    let mut hmat = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            hmat[i][j] = 0.5 * (cols[j][i] + cols[i][j]);
        }
    }
    hmat
}

pub fn l2_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, x| x.mul_add(*x, acc)).sqrt()
}

pub fn rel_err(got: f64, expected: f64) -> f64 {
    (got - expected).abs() / expected.abs().max(1e-12)
}

/// Random small-model batch for gradient checks.
pub fn random_batch(n: usize, dim: usize, classes: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch::new(inputs, labels, dim).unwrap()
}
