//! Gradient projection onto the cone of updates that do not increase any
//! stored task's loss to first order.
//!
//! Given the proposed gradient `g` and past-task gradients `g_1..g_n`
//! (the rows of `G`), the projected gradient is the closest `z` to `g` with
//! `<z, g_k> >= 0` for every `k`. It is obtained from the `n`-variable dual
//!
//! ```text
//!     minimize    1/2 v' (G G') v + (G g)' v
//!     subject to  v >= 0
//! ```
//!
//! as `z = G' v + g`. The dual is solved by cyclic coordinate descent
//! (Hildreth's method) followed by an exact solve on the detected support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{FlatVector, Matrix};
use crate::predictor::Predictor;

/// Current-task gradient together with the memory gradients of earlier tasks.
#[derive(Debug, Clone)]
pub struct GradientBank {
    current: FlatVector,
    past: Vec<FlatVector>,
}

impl GradientBank {
    pub fn new(current: FlatVector, past: Vec<FlatVector>) -> Result<Self> {
        let p = current.len();
        if let Some((k, bad)) = past.iter().enumerate().find(|(_, g)| g.len() != p) {
            return Err(Error::shape(format!(
                "past gradient {k} has length {}, current gradient has {p}",
                bad.len()
            )));
        }
        Ok(GradientBank { current, past })
    }

    pub fn current(&self) -> &FlatVector {
        &self.current
    }

    pub fn past(&self) -> &[FlatVector] {
        &self.past
    }

    pub fn dim(&self) -> usize {
        self.current.len()
    }

    /// Entry `k` is true iff `<g, g_k> < 0`.
    pub fn violations(&self) -> Vec<bool> {
        self.past.iter().map(|gk| self.current.dot(gk) < 0.0).collect()
    }

    /// The dual problem: `H = G G'`, `q = G g`.
    pub fn dual(&self) -> DualQp {
        let n = self.past.len();
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.past[i].dot(&self.past[j]);
                h.set(i, j, v);
                h.set(j, i, v);
            }
        }
        let q = self.past.iter().map(|gk| gk.dot(&self.current)).collect();
        DualQp { h, q }
    }
}

/// `minimize 1/2 v'Hv + q'v subject to v >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualQp {
    pub h: Matrix,
    pub q: Vec<f64>,
}

impl DualQp {
    pub fn objective(&self, v: &[f64]) -> f64 {
        qp_objective(&self.h, &self.q, v)
    }
}

pub fn qp_objective(h: &Matrix, q: &[f64], v: &[f64]) -> f64 {
    let n = q.len();
    let mut obj = 0.0;
    for i in 0..n {
        let hv: f64 = (0..n).map(|j| h.get(i, j) * v[j]).sum();
        obj += v[i] * (0.5 * hv + q[i]);
    }
    obj
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSolverOptions {
    /// Stop once no coordinate moves by more than this in a sweep.
    pub tol: f64,
    /// Maximum number of coordinate-descent sweeps.
    pub max_iter: usize,
    /// Diagonal shift relative to `trace(H)/n`, or `None` to disable.
    pub ridge: Option<f64>,
}

impl Default for DualSolverOptions {
    fn default() -> Self {
        DualSolverOptions {
            tol: 1e-9,
            max_iter: 10_000,
            ridge: Some(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub v: Vec<f64>,
    pub sweeps: usize,
    /// KKT residual of `v` against the unregularized problem.
    pub kkt_residual: f64,
}

/// Scale used to make KKT tolerances relative: `max(1, max H_ii, max |q_i|)`.
pub fn kkt_scale(h: &Matrix, q: &[f64]) -> f64 {
    let diag = (0..q.len()).map(|i| h.get(i, i).abs());
    diag.chain(q.iter().map(|v| v.abs())).fold(1.0, f64::max)
}

/// Largest violation of the KKT conditions of the nonnegative QP at `v`:
/// stationarity on the support, dual feasibility off it, primal feasibility.
pub fn kkt_residual(h: &Matrix, q: &[f64], v: &[f64]) -> f64 {
    let n = q.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let grad: f64 = q[i] + (0..n).map(|j| h.get(i, j) * v[j]).sum::<f64>();
        let r = if v[i] > 0.0 {
            grad.abs()
        } else {
            (-grad).max(0.0).max(-v[i])
        };
        worst = worst.max(r);
    }
    worst
}

pub fn solve_dual(h: &Matrix, q: &[f64], opts: &DualSolverOptions) -> Result<DualSolution> {
    let n = q.len();
    if h.rows() != n || h.cols() != n {
        return Err(Error::shape(format!(
            "dual QP with {}x{} H and {n} linear terms",
            h.rows(),
            h.cols()
        )));
    }
    if !h.is_finite() || q.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("dual QP has non-finite entries"));
    }
    let scale = kkt_scale(h, q);
    for i in 0..n {
        for j in 0..i {
            if (h.get(i, j) - h.get(j, i)).abs() > 1e-12 * scale {
                return Err(Error::domain("dual QP matrix is not symmetric"));
            }
        }
    }
    if n == 0 {
        return Ok(DualSolution {
            v: Vec::new(),
            sweeps: 0,
            kkt_residual: 0.0,
        });
    }

    let trace: f64 = (0..n).map(|i| h.get(i, i)).sum();
    let shift = match opts.ridge {
        Some(rel) if trace > 0.0 => rel * trace / n as f64,
        _ => 0.0,
    };

    let mut v = vec![0.0; n];
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        let mut max_step = 0.0f64;
        for i in 0..n {
            let hii = h.get(i, i) + shift;
            if hii <= 0.0 {
                // zero row: v_i only enters linearly with q_i = 0
                continue;
            }
            let grad: f64 = q[i] + shift * v[i] + (0..n).map(|j| h.get(i, j) * v[j]).sum::<f64>();
            let next = (v[i] - grad / hii).max(0.0);
            max_step = max_step.max((next - v[i]).abs());
            v[i] = next;
        }
        if max_step <= opts.tol {
            break;
        }
    }

    let mut residual = kkt_residual(h, q, &v);
    if let Some(polished) = polish_on_support(h, q, &v) {
        let r = kkt_residual(h, q, &polished);
        if r <= residual {
            v = polished;
            residual = r;
        }
    }
    if residual > opts.tol * scale {
        return Err(Error::NonConvergence {
            iterations: sweeps,
            residual,
        });
    }
    Ok(DualSolution {
        v,
        sweeps,
        kkt_residual: residual,
    })
}

/// Active-set refinement started from the support of `v`: solve the
/// stationarity equations on the support, drop coordinates that come out
/// negative, add the most violated inactive coordinate, repeat.
fn polish_on_support(h: &Matrix, q: &[f64], v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len();
    let scale = kkt_scale(h, q);
    let mut support: Vec<usize> = (0..n).filter(|&i| v[i] > 0.0).collect();
    for _ in 0..2 * n + 4 {
        let mut out = vec![0.0; n];
        if !support.is_empty() {
            let sol = solve_on(h, q, &support)?;
            let negative: Vec<usize> = support
                .iter()
                .zip(&sol)
                .filter(|&(_, &s)| s < 0.0)
                .map(|(&i, _)| i)
                .collect();
            if !negative.is_empty() {
                support.retain(|i| !negative.contains(i));
                continue;
            }
            for (&i, s) in support.iter().zip(sol) {
                out[i] = s;
            }
        }
        let entering = (0..n)
            .filter(|i| !support.contains(i))
            .map(|i| (i, q[i] + (0..n).map(|j| h.get(i, j) * out[j]).sum::<f64>()))
            .filter(|&(_, g)| g < -1e-12 * scale)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match entering {
            Some((i, _)) => support.push(i),
            None => return Some(out),
        }
    }
    None
}

/// Solves `H_SS x = -q_S`. A linearly independent subset of `S` is picked
/// by pivoted Cholesky; the remaining coordinates are set to zero, which
/// still solves the system whenever it is consistent.
fn solve_on(h: &Matrix, q: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    let max_diag = support.iter().map(|&i| h.get(i, i)).fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return Some(vec![0.0; k]);
    }
    // Schur-complement diagonal tracking for pivot selection
    let mut chosen: Vec<usize> = Vec::new();
    let mut l_rows: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut diag: Vec<f64> = support.iter().map(|&i| h.get(i, i)).collect();
    loop {
        let next = (0..k)
            .filter(|r| !chosen.contains(r))
            .max_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let Some(pivot) = next else { break };
        if diag[pivot] <= 1e-10 * max_diag {
            break;
        }
        let d = diag[pivot].sqrt();
        for r in 0..k {
            if chosen.contains(&r) {
                continue;
            }
            let dotp: f64 = l_rows[r].iter().zip(&l_rows[pivot]).map(|(a, b)| a * b).sum();
            let lr = if r == pivot { d } else { (h.get(support[r], support[pivot]) - dotp) / d };
            l_rows[r].push(lr);
            if r != pivot {
                diag[r] -= lr * lr;
            }
        }
        chosen.push(pivot);
    }
    let m = chosen.len();
    let mut a = Matrix::zeros(m, m);
    for (r, &i) in chosen.iter().enumerate() {
        for (c, &j) in chosen.iter().enumerate() {
            a.set(r, c, h.get(support[i], support[j]));
        }
    }
    let rhs: Vec<f64> = chosen.iter().map(|&i| -q[support[i]]).collect();
    let sol = cholesky_solve(&a, &rhs)?;
    let mut out = vec![0.0; k];
    for (&i, s) in chosen.iter().zip(sol) {
        out[i] = s;
    }
    Some(out)
}

fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0f64, f64::max);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = a.get(j, j) - (0..j).map(|k| l.get(j, k).powi(2)).sum::<f64>();
        if d <= 1e-12 * max_diag {
            return None;
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let s = a.get(i, j) - (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum::<f64>();
            l.set(i, j, s / ljj);
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l.get(i, k) * y[k]).sum::<f64>()) / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l.get(k, i) * x[k]).sum::<f64>()) / l.get(i, i);
    }
    Some(x)
}

const CANCELLATION_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Constant added to every dual coordinate before recovery.
    pub gamma: f64,
    pub solver: DualSolverOptions,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            gamma: 0.5,
            solver: DualSolverOptions::default(),
        }
    }
}

impl ProjectionConfig {
    pub fn with_gamma(gamma: f64) -> Self {
        ProjectionConfig {
            gamma,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub gradient: FlatVector,
    /// Dual solution before the `gamma` shift; `None` when no QP was solved.
    pub dual: Option<DualSolution>,
}

/// Projects with the default solver settings.
pub fn project(bank: &GradientBank, gamma: f64) -> Result<FlatVector> {
    Ok(project_with(bank, &ProjectionConfig::with_gamma(gamma))?.gradient)
}

/// Returns `g` untouched when no constraint is violated; otherwise solves
/// the dual and returns `G'(v + gamma) + g`.
pub fn project_with(bank: &GradientBank, cfg: &ProjectionConfig) -> Result<Projection> {
    if !(cfg.gamma >= 0.0) {
        return Err(Error::domain(format!("gamma must be >= 0, got {}", cfg.gamma)));
    }
    if !bank.violations().into_iter().any(|v| v) {
        return Ok(Projection {
            gradient: bank.current.clone(),
            dual: None,
        });
    }
    let qp = bank.dual();
    let sol = solve_dual(&qp.h, &qp.q, &cfg.solver)?;
    let mut out = bank.current.clone();
    let mut magnitude = out.norm();
    for (gk, &vk) in bank.past.iter().zip(&sol.v) {
        let coef = vk + cfg.gamma;
        if coef != 0.0 {
            out.axpy(coef, gk);
            magnitude += coef * gk.norm();
        }
    }
    // cancellation down to rounding noise: the cone's only point near g is 0
    if out.norm() <= CANCELLATION_ULPS * f64::EPSILON * magnitude {
        out = FlatVector::zeros(out.len());
    }
    Ok(Projection {
        gradient: out,
        dual: Some(sol),
    })
}

/// `theta <- theta - lr * g`
pub fn sgd_step(model: &mut Predictor, g: &FlatVector, lr: f64) -> Result<()> {
    if g.len() != model.param_count() {
        return Err(Error::shape(format!(
            "step of length {} for a model with {} parameters",
            g.len(),
            model.param_count()
        )));
    }
    model.params_mut().axpy(-lr, g);
    Ok(())
}
