//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use gem_core::linalg::{FlatVector, Matrix};
use gem_core::predictor::Predictor;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            // Box-Muller keeps the oracle free of crate code
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Projection of `g` onto the halfspace `<z, a> >= 0`.
pub fn halfspace_projection(g: &[f64], a: &[f64]) -> Vec<f64> {
    let c = dot(g, a).min(0.0) / dot(a, a);
    g.iter().zip(a).map(|(gi, ai)| gi - c * ai).collect()
}

/// Euclidean projection of `g` onto `{z : <z, g_k> >= 0 for all k}` by
/// enumerating every candidate active set, solving the equality-constrained
/// least squares on it, and keeping the closest feasible point.
pub fn active_set_projection(g: &[f64], past: &[Vec<f64>]) -> Vec<f64> {
    let p = g.len();
    let k = past.len();
    let gv = DVector::from_column_slice(g);
    let scale = norm(g).max(1.0) * past.iter().map(|r| norm(r)).fold(1.0, f64::max);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let z = if active.is_empty() {
            gv.clone()
        } else {
            let a = DMatrix::from_fn(active.len(), p, |r, c| past[active[r]][c]);
            let gram = &a * a.transpose();
            let rhs = &a * &gv;
            let lam = gram
                .pseudo_inverse(1e-12)
                .expect("pseudo-inverse of a Gram matrix")
                * rhs;
            &gv - a.transpose() * lam
        };
        let feasible = past
            .iter()
            .all(|row| dot(z.as_slice(), row) >= -1e-10 * scale);
        if !feasible {
            continue;
        }
        let d = (&z - &gv).norm();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    }
    best.expect("z = 0 is always feasible, so some active set is").1.as_slice().to_vec()
}

/// Random projection instance with at least one violated constraint.
pub fn violating_instance(rng: &mut impl Rng, p: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    loop {
        let g = gaussian_vec(rng, p);
        let past: Vec<Vec<f64>> = (0..k).map(|_| gaussian_vec(rng, p)).collect();
        if past.iter().any(|row| dot(&g, row) < 0.0) {
            return (g, past);
        }
    }
}

pub fn flat(v: &[f64]) -> FlatVector {
    FlatVector::from(v.to_vec())
}

/// Central-difference gradient of `f` at `theta`.
pub fn central_diff(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            work[i] = theta[i] + h;
            let up = f(&work);
            work[i] = theta[i] - h;
            let down = f(&work);
            work[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a).max(norm(b));
    if denom == 0.0 {
        0.0
    } else {
        dist(a, b) / denom
    }
}

/// Finite-difference gradient of a predictor's mean batch loss.
pub fn predictor_fd(model: &Predictor, x: &Matrix, t: usize, y: &[usize], h: f64) -> Vec<f64> {
    let mut probe = model.clone();
    central_diff(model.params().as_slice(), h, |theta| {
        probe.set_params(flat(theta)).unwrap();
        probe.loss(x, t, y).unwrap()
    })
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, gaussian_vec(rng, rows * cols)).unwrap()
}

/// Random PSD `H = A A^T` (3x3, well scaled) and `q` whose optimum over
/// `v >= 0` lies inside `[0, 3]^3`: `q = -H v_true + mu`, with `mu` nonzero
/// only where `v_true` is zero.
pub fn psd_instance(rng: &mut impl Rng) -> (Matrix, Vec<f64>) {
    let n = 3;
    let a = gaussian_vec(rng, n * n);
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
            h.set(i, j, v + if i == j { 0.05 } else { 0.0 });
        }
    }
    let v_true: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.1..2.5) })
        .collect();
    let q = (0..n)
        .map(|i| {
            let hv: f64 = (0..n).map(|j| h.get(i, j) * v_true[j]).sum();
            let mu = if v_true[i] == 0.0 { rng.random_range(0.0..1.0) } else { 0.0 };
            -hv + mu
        })
        .collect();
    (h, q)
}

pub fn objective(h: &Matrix, q: &[f64], v: &[f64]) -> f64 {
    let n = q.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += 0.5 * v[i] * h.get(i, j) * v[j];
        }
        s += q[i] * v[i];
    }
    s
}

/// Minimum of the objective over the grid `{0, step, ..., hi}^3`. For each
/// `(v0, v1)` the objective is a convex quadratic in `v2`, so its grid
/// minimum sits on one of the two grid points around the clipped
/// continuous minimizer; only those are evaluated.
pub fn grid_min_3(h: &Matrix, q: &[f64], step: f64, hi: f64) -> f64 {
    let n = (hi / step).round() as i64;
    let h22 = h.get(2, 2);
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let v0 = i as f64 * step;
        for j in 0..=n {
            let v1 = j as f64 * step;
            let lin = q[2] + h.get(2, 0) * v0 + h.get(2, 1) * v1;
            let cont = if h22 > 0.0 { (-lin / h22).clamp(0.0, hi) } else if lin < 0.0 { hi } else { 0.0 };
            let k0 = ((cont / step).floor() as i64).clamp(0, n);
            for k in [k0, (k0 + 1).min(n)] {
                let v = [v0, v1, k as f64 * step];
                best = best.min(objective(h, q, &v));
            }
        }
    }
    best
}
