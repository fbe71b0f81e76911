//! Levenberg-Marquardt for weighted least squares with analytic Jacobians.

use crate::linalg;

/// Model callback: value at `x` for parameters `p`, gradient written into `grad`.
pub trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        let mut g = vec![0.0; self.n_params()];
        self.eval(x, p, &mut g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Relative cost decrease below which an accepted step ends the search.
    pub ftol: f64,
    /// Bound on the scaled gradient (cosine between residual and each Jacobian column).
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, initial_damping: 1e-3, ftol: 1e-10, gtol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Covariance scaled by the reduced chi-square; zero rows/columns for fixed parameters,
    /// `None` if the normal matrix at the optimum is singular.
    pub covariance: Option<Vec<f64>>,
    pub cost: f64,
    pub reduced_chi2: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LmFailure {
    NonFiniteStart,
    /// Jacobian column of this free parameter vanishes at the start.
    SingularJacobian(usize),
}

struct Linearization {
    cost: f64,
    /// Normal matrix over free parameters.
    a: Vec<f64>,
    /// `J^T W r` over free parameters.
    g: Vec<f64>,
}

fn cost_of<M: Model + ?Sized>(m: &M, x: &[f64], y: &[f64], w: &[f64], p: &[f64]) -> f64 {
    let mut grad = vec![0.0; m.n_params()];
    let mut c = 0.0;
    for i in 0..x.len() {
        let r = y[i] - m.eval(x[i], p, &mut grad);
        c += w[i] * r * r;
    }
    if c.is_finite() {
        c
    } else {
        f64::NAN
    }
}

fn linearize<M: Model + ?Sized>(m: &M, x: &[f64], y: &[f64], w: &[f64], p: &[f64], free: &[usize]) -> Linearization {
    let nf = free.len();
    let mut grad = vec![0.0; m.n_params()];
    let mut a = vec![0.0; nf * nf];
    let mut g = vec![0.0; nf];
    let mut cost = 0.0;
    for i in 0..x.len() {
        let r = y[i] - m.eval(x[i], p, &mut grad);
        cost += w[i] * r * r;
        for (jj, &j) in free.iter().enumerate() {
            let wj = w[i] * grad[j];
            g[jj] += wj * r;
            for (kk, &k) in free.iter().enumerate().take(jj + 1) {
                a[jj * nf + kk] += wj * grad[k];
            }
        }
    }
    for jj in 0..nf {
        for kk in 0..jj {
            a[kk * nf + jj] = a[jj * nf + kk];
        }
    }
    Linearization { cost, a, g }
}

fn scaled_gradient(lin: &Linearization, nf: usize) -> f64 {
    if lin.cost <= 0.0 {
        return 0.0;
    }
    (0..nf)
        .map(|j| {
            let d = lin.a[j * nf + j];
            if d > 0.0 {
                lin.g[j].abs() / (d * lin.cost).sqrt()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `sum w_i (y_i - f(x_i; p))^2` over the parameters not marked in `fixed`.
pub fn minimize<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    p0: &[f64],
    fixed: &[bool],
    opts: &LmOptions,
) -> Result<LmOutcome, LmFailure> {
    let np = model.n_params();
    assert_eq!(p0.len(), np);
    assert_eq!(fixed.len(), np);
    assert!(x.len() == y.len() && y.len() == w.len());
    let free: Vec<usize> = (0..np).filter(|&j| !fixed[j]).collect();
    let nf = free.len();

    let mut p = p0.to_vec();
    let mut lin = linearize(model, x, y, w, &p, &free);
    if !lin.cost.is_finite() {
        return Err(LmFailure::NonFiniteStart);
    }
    if let Some(jj) = (0..nf).find(|&jj| lin.a[jj * nf + jj] == 0.0) {
        if lin.cost > 0.0 {
            return Err(LmFailure::SingularJacobian(free[jj]));
        }
    }
    let floor = 1e-30 * y.iter().zip(w).map(|(v, wi)| wi * v * v).sum::<f64>();
    let mut damping = opts.initial_damping;
    let mut history = vec![lin.cost];
    let mut converged = nf == 0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        if lin.cost <= floor || scaled_gradient(&lin, nf) < opts.gtol {
            converged = true;
            break;
        }
        let mut accepted = false;
        while damping < 1e20 {
            let mut a = lin.a.clone();
            for j in 0..nf {
                let d = lin.a[j * nf + j];
                a[j * nf + j] = d + damping * if d > 0.0 { d } else { 1.0 };
            }
            let mut step = lin.g.clone();
            if linalg::solve_in_place(&mut a, &mut step, nf, 1e-300).is_none() {
                damping *= 10.0;
                continue;
            }
            let mut trial = p.clone();
            for (jj, &j) in free.iter().enumerate() {
                trial[j] += step[jj];
            }
            let c = cost_of(model, x, y, w, &trial);
            if c < lin.cost {
                let rel = (lin.cost - c) / lin.cost;
                p = trial;
                lin = linearize(model, x, y, w, &p, &free);
                history.push(lin.cost);
                damping = (damping * 0.1).max(1e-15);
                accepted = true;
                if rel < opts.ftol {
                    converged = true;
                }
                break;
            }
            if c == lin.cost {
                // the step no longer changes the cost at all
                converged = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted && !converged {
            // damping exhausted: no descent direction left at working precision
            converged = true;
        }
    }

    let gradient_norm = scaled_gradient(&lin, nf);
    let dof = x.len().saturating_sub(nf);
    let reduced_chi2 = if dof > 0 { lin.cost / dof as f64 } else { f64::NAN };
    let covariance = linalg::invert(&lin.a, nf, 1e-14).map(|inv| {
        let scale = if dof > 0 { reduced_chi2 } else { f64::NAN };
        let mut full = vec![0.0; np * np];
        for (jj, &j) in free.iter().enumerate() {
            for (kk, &k) in free.iter().enumerate() {
                full[j * np + k] = inv[jj * nf + kk] * scale;
            }
        }
        full
    });
    Ok(LmOutcome {
        params: p,
        covariance,
        cost: lin.cost,
        reduced_chi2,
        gradient_norm,
        iterations,
        converged,
        cost_history: history,
    })
}

/// Richardson-extrapolated central-difference gradient, for checking analytic Jacobians.
///
/// Step for parameter `j` is `rel_step * max(|p_j|, 1)`.
pub fn numerical_gradient<M: Model + ?Sized>(m: &M, x: f64, p: &[f64], rel_step: f64) -> Vec<f64> {
    let diff = |j: usize, h: f64| {
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[j] += h;
        lo[j] -= h;
        (m.value(x, &hi) - m.value(x, &lo)) / (hi[j] - lo[j])
    };
    (0..p.len())
        .map(|j| {
            let h = rel_step * p[j].abs().max(1.0);
            (4.0 * diff(j, 0.5 * h) - diff(j, h)) / 3.0
        })
        .collect()
}

/// Compares the analytic gradient with [`numerical_gradient`]: each component must
/// agree to `rel_tol` relative, above the floating-point noise floor of the difference quotient.
pub fn check_gradient<M: Model + ?Sized>(m: &M, x: f64, p: &[f64], rel_tol: f64) -> Result<(), String> {
    const STEP: f64 = 1e-5;
    let mut g = vec![0.0; p.len()];
    let f = m.eval(x, p, &mut g);
    let num = numerical_gradient(m, x, p, STEP);
    for j in 0..p.len() {
        let h = STEP * p[j].abs().max(1.0);
        let noise = 100.0 * f64::EPSILON * f.abs().max(f64::MIN_POSITIVE) / h;
        let tol = rel_tol * g[j].abs().max(num[j].abs()) + noise;
        if !((g[j] - num[j]).abs() <= tol) {
            return Err(format!("parameter {j} at x = {x}, p = {p:?}: analytic {} vs numeric {}", g[j], num[j]));
        }
    }
    Ok(())
}
