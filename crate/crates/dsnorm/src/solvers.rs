//! Regularized least squares, `min (1/2n)||y - X b||^2 + lambda ||b||`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{dist2, dot, norm2, power_iteration_gram, Matrix};
use crate::proxops::{inexact_schedule, prox_norm_with_value, ProxConfig};
use crate::vecnorms::{eval_dual_norm, eval_norm, NormDescriptor};

/// Covariance of the noise vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseCovariance {
    /// `sigma2 * I`
    Identity { sigma2: f64 },
    Diagonal { diag: Vec<f64> },
    Dense { rows: Vec<Vec<f64>> },
}

impl NoiseCovariance {
    pub fn to_dmatrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            NoiseCovariance::Identity { sigma2 } => Ok(DMatrix::identity(n, n) * *sigma2),
            NoiseCovariance::Diagonal { diag } => {
                check_dim(n, diag.len())?;
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
            }
            NoiseCovariance::Dense { rows } => {
                check_dim(n, rows.len())?;
                for r in rows {
                    check_dim(n, r.len())?;
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegressionProblem {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub beta_star: Option<Vec<f64>>,
    pub noise_cov: Option<NoiseCovariance>,
}

impl RegressionProblem {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let p = RegressionProblem {
            x,
            y,
            beta_star: None,
            noise_cov: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_truth(mut self, beta_star: Vec<f64>) -> Result<Self> {
        check_dim(self.p(), beta_star.len())?;
        check_finite(&beta_star)?;
        self.beta_star = Some(beta_star);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.x.rows * self.x.cols, self.x.data.len())?;
        check_dim(self.x.rows, self.y.len())?;
        if !self.x.is_finite() {
            return Err(Error::NonFinite);
        }
        check_finite(&self.y)?;
        if self.x.rows == 0 {
            return Err(Error::InvalidParameter("empty design".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.rows
    }

    pub fn p(&self) -> usize {
        self.x.cols
    }

    /// `(1/2n) ||y - X b||^2`
    pub fn loss(&self, beta: &[f64]) -> f64 {
        let r = self.x.mul_vec(beta);
        0.5 * dist2(&r, &self.y) / self.n() as f64
    }

    /// Gradient of the loss, `-(1/n) X^T (y - X b)`.
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        let r: Vec<f64> = self.x.mul_vec(beta).iter().zip(&self.y).map(|(a, b)| a - b).collect();
        self.x.tmul_vec(&r).iter().map(|g| g / n).collect()
    }

    /// `(1/n) X^T y`, whose dual norm is the smallest `lambda` giving zero.
    pub fn correlation(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.x.tmul_vec(&self.y).iter().map(|g| g / n).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub beta_hat: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `(1/n) ||X (b* - b)||^2`
    pub prediction_error: Option<f64>,
    pub estimation_error_l2: Option<f64>,
    /// `||b - b*||` in the regularizer norm
    pub estimation_error_norm: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Fixed step; `1/L` with `L = lambda_max(X^T X / n)` when absent.
    pub step: Option<f64>,
    pub accel: bool,
    /// Halve the step until the quadratic upper model majorizes the loss.
    pub backtracking: bool,
    /// Stationarity tolerance, relative to `max(1, ||X^T y||_2 / n)`.
    pub tol: f64,
    pub max_iters: usize,
    /// First inner prox tolerance of the `eps0 / t^2` schedule.
    pub eps0: f64,
    pub prox: ProxConfig,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            step: None,
            accel: true,
            backtracking: false,
            tol: 1e-8,
            max_iters: 20_000,
            eps0: 1e-4,
            prox: ProxConfig::default(),
        }
    }
}

fn finish(problem: &RegressionProblem, norm: &NormDescriptor, beta: Vec<f64>, trace: Vec<f64>, iterations: usize, converged: bool) -> Result<SolveResult> {
    let (pe, l2, nv) = match &problem.beta_star {
        Some(bs) => {
            let v: Vec<f64> = beta.iter().zip(bs).map(|(a, b)| a - b).collect();
            let xv = problem.x.mul_vec(&v);
            (
                Some(dot(&xv, &xv) / problem.n() as f64),
                Some(norm2(&v)),
                Some(eval_norm(norm, &v)?),
            )
        }
        None => (None, None, None),
    };
    Ok(SolveResult {
        beta_hat: beta,
        objective_trace: trace,
        iterations,
        converged,
        prediction_error: pe,
        estimation_error_l2: l2,
        estimation_error_norm: nv,
    })
}

fn default_step(problem: &RegressionProblem) -> f64 {
    let l = power_iteration_gram(&problem.x, 1e-8, 100_000);
    // power iteration approaches L from below
    if l > 0.0 {
        1.0 / (l * (1.0 + 1e-6))
    } else {
        1.0
    }
}

/// Shared (accelerated) proximal-gradient loop. `prox(z, t, eps)` returns
/// `prox_{t ||.||}(z)` and its norm.
fn fista(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &SolverOptions,
    mut prox: impl FnMut(&[f64], f64, f64) -> Result<(Vec<f64>, f64)>,
) -> Result<(Vec<f64>, Vec<f64>, usize, bool)> {
    let p = problem.p();
    let mut step = match opts.step {
        Some(s) if s > 0.0 => s,
        Some(_) => return Err(Error::InvalidParameter("step must be positive".into())),
        None => default_step(problem),
    };
    let scale = (norm2(&problem.correlation())).max(1.0);
    let mut apply = |z: &[f64], t: f64, it: usize| -> Result<(Vec<f64>, f64)> {
        if lambda == 0.0 {
            Ok((z.to_vec(), 0.0))
        } else {
            prox(z, t * lambda, inexact_schedule(opts.eps0, it).max(1e-12))
        }
    };
    let mut beta = vec![0.0; p];
    let mut obj = problem.loss(&beta);
    let mut trace = vec![obj];
    let mut y = beta.clone();
    let mut tk = 1.0f64;
    for it in 1..=opts.max_iters {
        let g = problem.gradient(&y);
        let fy = problem.loss(&y);
        let (next, nv) = loop {
            let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let (cand, nv) = apply(&z, step, it)?;
            if !opts.backtracking {
                break (cand, nv);
            }
            let d: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = fy + dot(&g, &d) + dot(&d, &d) / (2.0 * step);
            if problem.loss(&cand) <= model * (1.0 + 1e-14) || step < 1e-300 {
                break (cand, nv);
            }
            step *= 0.5;
        };
        let new_obj = problem.loss(&next) + lambda * nv;
        if !new_obj.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        let mapping = dist2(&next, &y).sqrt() / step;
        if opts.accel && new_obj > obj && y != beta {
            // momentum restart: retake the step from the last iterate
            y.clone_from(&beta);
            tk = 1.0;
            continue;
        }
        let t_next = if opts.accel { 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) } else { 1.0 };
        let mom = if opts.accel { (tk - 1.0) / t_next } else { 0.0 };
        y = next.iter().zip(&beta).map(|(a, b)| a + mom * (a - b)).collect();
        tk = t_next;
        beta = next;
        obj = new_obj;
        trace.push(new_obj);
        if mapping <= opts.tol * scale {
            return Ok((beta, trace, it, true));
        }
    }
    Ok((beta, trace, opts.max_iters, false))
}

/// Proximal gradient (FISTA with restart when `accel`), started at zero.
pub fn prox_gradient(
    problem: &RegressionProblem,
    norm: &NormDescriptor,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    problem.validate()?;
    norm.validate(problem.p())?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
    }
    let (beta, trace, it, conv) = fista(problem, lambda, opts, |z, t, eps| {
        let cfg = ProxConfig {
            objective_tol: eps.max(opts.prox.objective_tol),
            ..opts.prox
        };
        prox_norm_with_value(z, norm, t, &cfg)
    })?;
    finish(problem, norm, beta, trace, it, conv)
}

/// The l1 arm: the same loop with the soft-threshold map inlined.
pub fn lasso_baseline(problem: &RegressionProblem, lambda: f64, opts: &SolverOptions) -> Result<SolveResult> {
    problem.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
    }
    let (beta, trace, it, conv) = fista(problem, lambda, opts, |z, t, _| {
        let b: Vec<f64> = z.iter().map(|v| v.signum() * (v.abs() - t).max(0.0)).collect();
        let nv = b.iter().map(|v| v.abs()).sum();
        Ok((b, nv))
    })?;
    finish(problem, &NormDescriptor::L1, beta, trace, it, conv)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmOptions {
    /// Penalty; defaults to `lambda` (or 1 when `lambda = 0`).
    pub rho: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub prox: ProxConfig,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: None,
            tol: 1e-10,
            max_iters: 100_000,
            prox: ProxConfig::default(),
        }
    }
}

/// ADMM on the split `b = z`; returns `z`, which carries the exact zeros.
pub fn admm(
    problem: &RegressionProblem,
    norm: &NormDescriptor,
    lambda: f64,
    opts: &AdmmOptions,
) -> Result<SolveResult> {
    problem.validate()?;
    norm.validate(problem.p())?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
    }
    let rho = match opts.rho {
        Some(r) if r > 0.0 => r,
        Some(_) => return Err(Error::InvalidParameter("rho must be positive".into())),
        None if lambda > 0.0 => lambda,
        None => 1.0,
    };
    let (n, p) = (problem.n() as f64, problem.p());
    // zero satisfies the optimality condition exactly; the splitting would
    // only approach it from the boundary of the dual ball
    if lambda > 0.0 && eval_dual_norm(norm, &problem.correlation())? <= lambda {
        return finish(problem, norm, vec![0.0; p], vec![problem.loss(&vec![0.0; p])], 0, true);
    }
    let xd = problem.x.to_dmatrix();
    let mut h = xd.transpose() * &xd / n;
    for i in 0..p {
        h[(i, i)] += rho;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Assertion("X^T X / n + rho I is not positive definite".into()))?;
    let b = DVector::from_vec(problem.correlation());
    let mut z = vec![0.0; p];
    let mut u = vec![0.0; p];
    let mut trace = vec![problem.loss(&z)];
    let scale = norm2(b.as_slice()).max(1.0);
    for it in 1..=opts.max_iters {
        let rhs = &b + DVector::from_iterator(p, (0..p).map(|i| rho * (z[i] - u[i])));
        let beta = chol.solve(&rhs);
        let v: Vec<f64> = (0..p).map(|i| beta[i] + u[i]).collect();
        let (z_new, nv) = if lambda == 0.0 {
            (v.clone(), 0.0)
        } else {
            let cfg = ProxConfig {
                objective_tol: inexact_schedule(1e-4, it).max(opts.prox.objective_tol),
                ..opts.prox
            };
            prox_norm_with_value(&v, norm, lambda / rho, &cfg)?
        };
        let r_prim = (0..p).map(|i| (beta[i] - z_new[i]).powi(2)).sum::<f64>().sqrt();
        let r_dual = rho * dist2(&z_new, &z).sqrt();
        for i in 0..p {
            u[i] += beta[i] - z_new[i];
        }
        z = z_new;
        let obj = problem.loss(&z) + lambda * nv;
        if !obj.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        trace.push(obj);
        if r_prim <= opts.tol * scale && r_dual <= opts.tol * scale {
            return finish(problem, norm, z, trace, it, true);
        }
    }
    finish(problem, norm, z, trace, opts.max_iters, false)
}

/// Residuals of `(1/n) X^T (y - X b) in lambda * subdiff ||b||`:
/// `(||g||* / lambda, |<g, b> - lambda ||b|| |)`.
pub fn optimality_certificate(
    problem: &RegressionProblem,
    norm: &NormDescriptor,
    lambda: f64,
    beta: &[f64],
) -> Result<(f64, f64)> {
    let g: Vec<f64> = problem.gradient(beta).iter().map(|v| -v).collect();
    let dn = eval_dual_norm(norm, &g)?;
    let pairing = (dot(&g, beta) - lambda * eval_norm(norm, beta)?).abs();
    Ok((if lambda > 0.0 { dn / lambda } else { dn }, pairing))
}

/// Objective value `(1/2n)||y - Xb||^2 + lambda ||b||`.
pub fn objective(problem: &RegressionProblem, norm: &NormDescriptor, lambda: f64, beta: &[f64]) -> Result<f64> {
    Ok(problem.loss(beta) + lambda * eval_norm(norm, beta)?)
}
