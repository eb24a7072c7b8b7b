//! Synthetic doubly-sparse regression experiments, the noise-level coverage
//! check and the two-dimensional figure sweeps.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{Error, Result};
use crate::geometry::{
    cone_membership, dual_ball_extreme_points, in_error_set, kd_varphi_bound, psi_estimate, subdiff_origin_distance,
    subdiff_vertices, varphi_exact, varphi_numeric, ConeSpec,
};
use crate::io::write_records;
use crate::kdnorm::dual_norm_kd;
use crate::linalg::{psd_sqrt, Matrix};
use crate::solvers::{lasso_baseline, prox_gradient, NoiseCovariance, RegressionProblem, SolveResult, SolverOptions};
use crate::statbounds::{aggregate_measures, build_mset, kd_phi_measures, SubsetSearch, DEFAULT_C_HW};
use crate::vecnorms::{eval_dual_norm, eval_norm, NormDescriptor};

/// Design covariance `Psi` for correlated Gaussian rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    Identity,
    /// `Psi_ij = rho^|i-j|`
    Toeplitz { rho: f64 },
    /// `Psi_ij = rho` off the diagonal
    Equicorrelated { rho: f64 },
    Dense { rows: Vec<Vec<f64>> },
}

impl Covariance {
    pub fn matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        Ok(match self {
            Covariance::Identity => DMatrix::identity(p, p),
            Covariance::Toeplitz { rho } => DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs())),
            Covariance::Equicorrelated { rho } => DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { *rho }),
            Covariance::Dense { rows } => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::DimensionMismatch { expected: p, got: rows.len() });
                }
                DMatrix::from_fn(p, p, |i, j| rows[i][j])
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    GaussianIso,
    GaussianCov { psi: Covariance },
    /// 0/1 entries with column frequencies log-spaced in `[freq_min,
    /// freq_max]`, then columns centered and scaled to norm `sqrt n`.
    RareBernoulli { freq_min: f64, freq_max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `lambda = 2 phi` from the doubly-sparse noise calculator with `c_hw`.
    PhiFormula,
    /// `lambda = ||(2/n) X^T eps||*` from the realized noise.
    OracleDualNorm,
    /// Multiples of the oracle value; each arm keeps its best prediction error.
    Grid { multipliers: Vec<f64> },
}

fn default_range() -> (f64, f64) {
    (0.5, 2.0)
}
fn default_trials() -> usize {
    200
}
fn default_p0() -> f64 {
    0.05
}
fn default_c_hw() -> f64 {
    DEFAULT_C_HW
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub k_star: usize,
    pub d_star: usize,
    pub k: usize,
    pub d: usize,
    pub sigma: f64,
    pub design: Design,
    pub lambda_rule: LambdaRule,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_c_hw")]
    pub c_hw: f64,
    /// Range of the nonzero magnitudes of `beta*`.
    #[serde(default = "default_range")]
    pub value_range: (f64, f64),
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
}

impl ExperimentConfig {
    /// The doubly-sparse preset: `n=150, p=200, k*=10, d*=2, sigma=0.5`,
    /// regularizer `k=10, d=2`, oracle lambda for both arms.
    pub fn ds_preset() -> Self {
        ExperimentConfig {
            n: 150,
            p: 200,
            k_star: 10,
            d_star: 2,
            k: 10,
            d: 2,
            sigma: 0.5,
            design: Design::GaussianIso,
            lambda_rule: LambdaRule::OracleDualNorm,
            trials: 200,
            master_seed: 2024,
            p0: 0.05,
            c_hw: DEFAULT_C_HW,
            value_range: default_range(),
            solver_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(1 <= self.d_star && self.d_star <= self.k_star && self.k_star <= self.p) {
            return bad("need 1 <= d_star <= k_star <= p");
        }
        if !(1 <= self.d && self.d <= self.k && self.k <= self.p) {
            return bad("need 1 <= d <= k <= p");
        }
        if !(self.sigma >= 0.0) || self.trials == 0 || self.n == 0 {
            return bad("need sigma >= 0, trials >= 1, n >= 1");
        }
        if !(self.p0 > 0.0 && self.p0 < 0.5) || !(self.c_hw > 2.0) {
            return bad("need p0 in (0, 1/2) and c_hw > 2");
        }
        let (lo, hi) = self.value_range;
        if !(lo > 0.0 && hi >= lo) || (self.d_star > 1 && hi == lo) {
            return bad("value_range must be positive and wide enough for d_star levels");
        }
        if let LambdaRule::Grid { multipliers } = &self.lambda_rule {
            if multipliers.is_empty() || multipliers.iter().any(|m| !(*m > 0.0)) {
                return bad("grid multipliers must be positive");
            }
        }
        if let Design::RareBernoulli { freq_min, freq_max } = self.design {
            if !(freq_min > 0.0 && freq_min <= freq_max && freq_max <= 1.0) {
                return bad("need 0 < freq_min <= freq_max <= 1");
            }
        }
        Ok(())
    }
}

/// Per-trial seed, a function of `(master_seed, trial)` only.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(master_seed) ^ trial as u64)
}

/// `k_star` nonzeros at random positions taking exactly `d_star` distinct
/// magnitudes in `value_range`, with independent signs.
pub fn gen_beta_star(p: usize, k_star: usize, d_star: usize, value_range: (f64, f64), seed: u64) -> Result<Vec<f64>> {
    if !(1 <= d_star && d_star <= k_star && k_star <= p) {
        return Err(Error::InvalidParameter(format!("infeasible (p, k*, d*) = ({p}, {k_star}, {d_star})")));
    }
    let (lo, hi) = value_range;
    if !(lo > 0.0 && hi >= lo) || (d_star > 1 && hi == lo) {
        return Err(Error::InvalidParameter("bad value_range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // distinct levels, spaced by at least 5% of the range over d_star
    let gap = 0.05 * (hi - lo) / d_star as f64;
    let levels: Vec<f64> = loop {
        let mut l: Vec<f64> = (0..d_star).map(|_| rng.random_range(lo..=hi)).collect();
        l.sort_by(f64::total_cmp);
        if l.windows(2).all(|w| w[1] - w[0] >= gap) {
            break l;
        }
    };
    // random composition of k_star into d_star positive block sizes
    let mut cuts: Vec<usize> = sample(&mut rng, k_star - 1, d_star - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    cuts.push(k_star);
    let support = sample(&mut rng, p, k_star).into_vec();
    let mut beta = vec![0.0; p];
    let mut block = 0;
    for (r, &i) in support.iter().enumerate() {
        while r >= cuts[block] {
            block += 1;
        }
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        beta[i] = s * levels[block];
    }
    Ok(beta)
}

/// Draw an `n x p` design.
pub fn gen_design(config: &ExperimentConfig, seed: u64) -> Result<Matrix> {
    let (n, p) = (config.n, config.p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> Matrix {
        Matrix {
            rows: n,
            cols: p,
            data: (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect(),
        }
    };
    match &config.design {
        Design::GaussianIso => Ok(gauss()),
        Design::GaussianCov { psi } => {
            let root = psd_sqrt(&psi.matrix(p)?, 1e-10)
                .ok_or_else(|| Error::InvalidParameter("design covariance is not PSD".into()))?;
            Ok(Matrix::from_dmatrix(&(gauss().to_dmatrix() * root)))
        }
        Design::RareBernoulli { freq_min, freq_max } => {
            let mut x = Matrix::zeros(n, p);
            let nf = n as f64;
            for j in 0..p {
                let t = if p == 1 { 0.0 } else { j as f64 / (p - 1) as f64 };
                let f = (freq_min.ln() + t * (freq_max.ln() - freq_min.ln())).exp();
                let dist = Bernoulli::new(f).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let mut col: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng) as u8 as f64).collect();
                if col.iter().all(|&v| v == col[0]) {
                    // a constant column cannot be normalized; plant one feature
                    let i = rng.random_range(0..n);
                    col.iter_mut().for_each(|v| *v = 0.0);
                    col[i] = 1.0;
                }
                let mean = col.iter().sum::<f64>() / nf;
                col.iter_mut().for_each(|v| *v -= mean);
                let s = nf.sqrt() / crate::linalg::norm2(&col);
                for (i, v) in col.iter().enumerate() {
                    x.set(i, j, v * s);
                }
            }
            Ok(x)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub lambda_ds: f64,
    pub lambda_lasso: f64,
    /// `||(1/n) X^T eps||*` in the `k box d` dual norm.
    pub theta_ds: f64,
    /// `||(1/n) X^T eps||_inf`
    pub theta_lasso: f64,
    pub lambda_condition_ds: bool,
    pub lambda_condition_lasso: bool,
    pub converged_ds: bool,
    pub converged_lasso: bool,
    pub pred_err_ds: f64,
    pub pred_err_lasso: f64,
    pub err_ratio: f64,
    pub est_l2_ds: f64,
    pub est_l2_lasso: f64,
    pub pred_bound_ds: f64,
    pub pred_bound_lasso: f64,
    pub oracle_ok_ds: bool,
    pub oracle_ok_lasso: bool,
    pub phi_ds: f64,
    pub phi_ds_upper_bound: bool,
    pub phi_lasso: f64,
    pub cone_ds: bool,
    pub cone_lasso: bool,
    pub error_set_ds: bool,
    pub error_set_lasso: bool,
    /// Noise-level calculator value (phi rule only, else NaN).
    pub phi_noise: f64,
    pub iters_ds: usize,
    pub iters_lasso: usize,
    pub runtime_ds_ms: f64,
    pub runtime_lasso_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub eligible: usize,
    pub holds: usize,
    pub frequency: f64,
}

impl Coverage {
    fn tally(it: impl Iterator<Item = (bool, bool)>) -> Self {
        let (mut e, mut h) = (0, 0);
        for (eligible, ok) in it {
            if eligible {
                e += 1;
                h += ok as usize;
            }
        }
        Coverage {
            eligible: e,
            holds: h,
            frequency: if e > 0 { h as f64 / e as f64 } else { f64::NAN },
        }
    }

    pub fn complete(&self) -> bool {
        self.holds == self.eligible
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

fn mean_se(v: &[f64]) -> MeanSe {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    MeanSe {
        mean,
        std_err: (var / n).sqrt(),
        count: v.len(),
    }
}

/// One-sided test of `mean < mu0`: `(t, p-value)`.
pub fn one_sided_t_test(v: &[f64], mu0: f64) -> (f64, f64) {
    let m = mean_se(v);
    if v.len() < 2 || m.std_err == 0.0 {
        let p = if m.mean < mu0 { 0.0 } else { 1.0 };
        return (f64::NAN, p);
    }
    let t = (m.mean - mu0) / m.std_err;
    let dist = StudentsT::new(0.0, 1.0, (v.len() - 1) as f64).expect("valid degrees of freedom");
    (t, dist.cdf(t))
}

/// `P(X <= successes)` for `X ~ Bin(trials, p)`: small values reject
/// "frequency >= p".
pub fn binomial_lower_pvalue(successes: usize, trials: usize, p: f64) -> f64 {
    Binomial::new(p, trials as u64).expect("valid binomial").cdf(successes as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    pub nonconverged_ds: usize,
    pub nonconverged_lasso: usize,
    pub pred_err_ds: MeanSe,
    pub pred_err_lasso: MeanSe,
    pub err_ratio: MeanSe,
    /// One-sided test of mean ratio < 1.
    pub ratio_t_stat: f64,
    pub ratio_p_value: f64,
    pub oracle_ds: Coverage,
    pub oracle_lasso: Coverage,
    pub cone_ds: Coverage,
    pub cone_lasso: Coverage,
    pub error_set_ds: Coverage,
    pub error_set_lasso: Coverage,
    /// Frequency of `theta_ds <= phi_noise` (phi rule only).
    pub noise_phi_coverage: Option<Coverage>,
    pub mean_runtime_ds_ms: f64,
    pub mean_runtime_lasso_ms: f64,
    /// Deterministic assertions that failed, one line each.
    pub assertion_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

fn lambda_condition(lambda: f64, theta: f64) -> bool {
    lambda >= 2.0 * theta * (1.0 - 1e-12)
}

struct Arm {
    result: SolveResult,
    lambda: f64,
    ms: f64,
}

fn solve_arm(lambdas: &[f64], mut solve: impl FnMut(f64) -> Result<SolveResult>) -> Result<Arm> {
    let mut best: Option<Arm> = None;
    for &l in lambdas {
        let t = Instant::now();
        let r = solve(l)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        let better = best.as_ref().is_none_or(|b| r.prediction_error < b.result.prediction_error);
        if better {
            best = Some(Arm { result: r, lambda: l, ms });
        }
    }
    Ok(best.expect("non-empty lambda list"))
}

fn phi_at(norm: &NormDescriptor, beta: &[f64]) -> Result<(f64, bool)> {
    match varphi_exact(norm, beta) {
        Ok(r) => Ok((r.value, r.is_upper_bound)),
        Err(Error::Unsupported(_)) => match norm {
            NormDescriptor::Kd { k, d } => Ok((kd_varphi_bound(beta, *k, *d)?.value, true)),
            _ => Err(Error::Unsupported(format!("no phi for {norm:?}"))),
        },
        Err(e) => Err(e),
    }
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta_star = gen_beta_star(cfg.p, cfg.k_star, cfg.d_star, cfg.value_range, rng.next_u64())?;
    let x = gen_design(cfg, rng.next_u64())?;
    let n = cfg.n as f64;
    let eps: Vec<f64> = (0..cfg.n).map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let xe: Vec<f64> = x.tmul_vec(&eps).iter().map(|v| v / n).collect();
    let theta_ds = dual_norm_kd(&xe, cfg.k, cfg.d)?;
    let theta_l = xe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let y: Vec<f64> = x.mul_vec(&beta_star).iter().zip(&eps).map(|(a, b)| a + b).collect();

    let mut phi_noise = f64::NAN;
    let (lam_ds, lam_l): (Vec<f64>, Vec<f64>) = match &cfg.lambda_rule {
        LambdaRule::OracleDualNorm => (vec![2.0 * theta_ds], vec![2.0 * theta_l]),
        LambdaRule::Grid { multipliers } => (
            multipliers.iter().map(|m| 2.0 * m * theta_ds).collect(),
            multipliers.iter().map(|m| 2.0 * m * theta_l).collect(),
        ),
        LambdaRule::PhiFormula => {
            let sigma = NoiseCovariance::Identity { sigma2: cfg.sigma * cfg.sigma };
            let exact = crate::vecnorms::binomial(cfg.p, cfg.k) <= 1e5;
            let mode = if exact { SubsetSearch::Exact } else { SubsetSearch::Greedy };
            let m = kd_phi_measures(&x, &sigma, cfg.k, cfg.d, cfg.p0, cfg.c_hw, mode)?;
            let m1 = kd_phi_measures(&x, &sigma, 1, 1, cfg.p0, cfg.c_hw, SubsetSearch::Exact)?;
            phi_noise = m.phi_upper;
            (vec![2.0 * m.phi_upper], vec![2.0 * m1.phi_upper])
        }
    };
    let problem = RegressionProblem::new(x, y)?.with_truth(beta_star.clone())?;
    let opts = SolverOptions {
        tol: cfg.solver_tol,
        ..Default::default()
    };
    let kd = NormDescriptor::Kd { k: cfg.k, d: cfg.d };
    let ds = solve_arm(&lam_ds, |l| prox_gradient(&problem, &kd, l, &opts))?;
    let la = solve_arm(&lam_l, |l| lasso_baseline(&problem, l, &opts))?;

    let v_ds: Vec<f64> = ds.result.beta_hat.iter().zip(&beta_star).map(|(a, b)| a - b).collect();
    let v_l: Vec<f64> = la.result.beta_hat.iter().zip(&beta_star).map(|(a, b)| a - b).collect();
    let kd_star = eval_norm(&kd, &beta_star)?;
    let l1_star: f64 = beta_star.iter().map(|v| v.abs()).sum();
    let (phi_ds, phi_ub) = phi_at(&kd, &beta_star)?;
    let (phi_l, _) = phi_at(&NormDescriptor::L1, &beta_star)?;
    let pe_ds = ds.result.prediction_error.unwrap_or(f64::NAN);
    let pe_l = la.result.prediction_error.unwrap_or(f64::NAN);
    let pb_ds = 3.0 * ds.lambda * kd_star;
    let pb_l = 3.0 * la.lambda * l1_star;
    let tol_ds = 1e-6 * (1.0 + kd_star);
    let tol_l = 1e-6 * (1.0 + l1_star);
    Ok(TrialRecord {
        trial,
        seed,
        lambda_ds: ds.lambda,
        lambda_lasso: la.lambda,
        theta_ds,
        theta_lasso: theta_l,
        lambda_condition_ds: lambda_condition(ds.lambda, theta_ds),
        lambda_condition_lasso: lambda_condition(la.lambda, theta_l),
        converged_ds: ds.result.converged,
        converged_lasso: la.result.converged,
        pred_err_ds: pe_ds,
        pred_err_lasso: pe_l,
        err_ratio: pe_ds / pe_l,
        est_l2_ds: ds.result.estimation_error_l2.unwrap_or(f64::NAN),
        est_l2_lasso: la.result.estimation_error_l2.unwrap_or(f64::NAN),
        pred_bound_ds: pb_ds,
        pred_bound_lasso: pb_l,
        oracle_ok_ds: pe_ds <= pb_ds,
        oracle_ok_lasso: pe_l <= pb_l,
        phi_ds,
        phi_ds_upper_bound: phi_ub,
        phi_lasso: phi_l,
        cone_ds: cone_membership(&v_ds, &ConeSpec { phi: phi_ds, factor: 2.0 }, &kd)?,
        cone_lasso: cone_membership(&v_l, &ConeSpec { phi: phi_l, factor: 2.0 }, &NormDescriptor::L1)?,
        error_set_ds: in_error_set(&v_ds, &beta_star, &kd, 2.0, tol_ds)?,
        error_set_lasso: in_error_set(&v_l, &beta_star, &NormDescriptor::L1, 2.0, tol_l)?,
        phi_noise,
        iters_ds: ds.result.iterations,
        iters_lasso: la.result.iterations,
        runtime_ds_ms: ds.ms,
        runtime_lasso_ms: la.ms,
    })
}

/// Run every trial (data-parallel, assembled in trial order) and summarize.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let rows: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&rows);
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        summary,
    })
}

fn summarize(rows: &[TrialRecord]) -> ExperimentSummary {
    let both: Vec<&TrialRecord> = rows.iter().filter(|r| r.converged_ds && r.converged_lasso).collect();
    let ratios: Vec<f64> = both.iter().map(|r| r.err_ratio).filter(|v| v.is_finite()).collect();
    let (t, pv) = one_sided_t_test(&ratios, 1.0);
    let cov = |f: &dyn Fn(&TrialRecord) -> (bool, bool)| Coverage::tally(rows.iter().map(f));
    let oracle_ds = cov(&|r| (r.converged_ds && r.lambda_condition_ds, r.oracle_ok_ds));
    let oracle_lasso = cov(&|r| (r.converged_lasso && r.lambda_condition_lasso, r.oracle_ok_lasso));
    let cone_ds = cov(&|r| (r.converged_ds && r.lambda_condition_ds, r.cone_ds));
    let cone_lasso = cov(&|r| (r.converged_lasso && r.lambda_condition_lasso, r.cone_lasso));
    let error_set_ds = cov(&|r| (r.converged_ds && r.lambda_condition_ds, r.error_set_ds));
    let error_set_lasso = cov(&|r| (r.converged_lasso && r.lambda_condition_lasso, r.error_set_lasso));
    let noise_phi_coverage = rows
        .iter()
        .all(|r| r.phi_noise.is_finite())
        .then(|| cov(&|r| (true, r.theta_ds <= r.phi_noise)));
    let mut failures = Vec::new();
    for (name, c) in [
        ("prediction bound (DS)", &oracle_ds),
        ("prediction bound (Lasso)", &oracle_lasso),
        ("cone membership (DS)", &cone_ds),
        ("cone membership (Lasso)", &cone_lasso),
        ("error set (DS)", &error_set_ds),
        ("error set (Lasso)", &error_set_lasso),
    ] {
        if !c.complete() {
            failures.push(format!("{name}: {}/{} trials", c.holds, c.eligible));
        }
    }
    let col = |f: fn(&TrialRecord) -> f64| -> Vec<f64> { both.iter().map(|r| f(r)).collect() };
    ExperimentSummary {
        trials: rows.len(),
        nonconverged_ds: rows.iter().filter(|r| !r.converged_ds).count(),
        nonconverged_lasso: rows.iter().filter(|r| !r.converged_lasso).count(),
        pred_err_ds: mean_se(&col(|r| r.pred_err_ds)),
        pred_err_lasso: mean_se(&col(|r| r.pred_err_lasso)),
        err_ratio: mean_se(&ratios),
        ratio_t_stat: t,
        ratio_p_value: pv,
        oracle_ds,
        oracle_lasso,
        cone_ds,
        cone_lasso,
        error_set_ds,
        error_set_lasso,
        noise_phi_coverage,
        mean_runtime_ds_ms: rows.iter().map(|r| r.runtime_ds_ms).sum::<f64>() / rows.len() as f64,
        mean_runtime_lasso_ms: rows.iter().map(|r| r.runtime_lasso_ms).sum::<f64>() / rows.len() as f64,
        assertion_failures: failures,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub n: usize,
    pub p: usize,
    /// Regularizer whose dual norm is measured (`k_support` or `kd`).
    pub norm: NormDescriptor,
    pub sigma: f64,
    pub draws: usize,
    pub seed: u64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_c_hw")]
    pub c_hw: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub draws: usize,
    pub covered: usize,
    pub frequency: f64,
    /// `P(Bin(draws, 0.9) <= covered)`
    pub p_value_vs_090: f64,
    pub max_theta: f64,
}

/// Fixed Gaussian design, fresh `N(0, sigma^2 I)` noise per draw: how often
/// `||(1/n) X^T eps||* <= Lambda`.
pub fn lambda_coverage(cfg: &CoverageConfig) -> Result<CoverageReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = Matrix {
        rows: cfg.n,
        cols: cfg.p,
        data: (0..cfg.n * cfg.p).map(|_| StandardNormal.sample(&mut rng)).collect(),
    };
    let mset = build_mset(&cfg.norm, cfg.p)?;
    let sigma = NoiseCovariance::Identity { sigma2: cfg.sigma * cfg.sigma };
    let agg = aggregate_measures(&x, &sigma, &mset, cfg.eta, cfg.p0, cfg.c_hw)?;
    let n = cfg.n as f64;
    let mut covered = 0;
    let mut max_theta = 0.0f64;
    for _ in 0..cfg.draws {
        let eps: Vec<f64> = (0..cfg.n).map(|_| cfg.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let xe: Vec<f64> = x.tmul_vec(&eps).iter().map(|v| v / n).collect();
        let theta = eval_dual_norm(&cfg.norm, &xe)?;
        max_theta = max_theta.max(theta);
        covered += (theta <= agg.big_lambda) as usize;
    }
    Ok(CoverageReport {
        big_lambda: agg.big_lambda,
        draws: cfg.draws,
        covered,
        frequency: covered as f64 / cfg.draws as f64,
        p_value_vs_090: binomial_lower_pvalue(covered, cfg.draws, 0.9),
        max_theta,
    })
}

/// Angular resolution of the two-dimensional psi search in the sweeps.
pub const FIG_PSI_DIRS: usize = 4000;

/// The swept family at parameter `gamma`: rows `(1, 4/3)`,
/// `((g+4)/g, 10/9)` and `((g+5)/g, 2/9)`.
pub fn maxwl1_family(gamma: f64) -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 4.0 / 3.0],
        vec![(gamma + 4.0) / gamma, 10.0 / 9.0],
        vec![(gamma + 5.0) / gamma, 2.0 / 9.0],
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxWl1Row {
    pub gamma: f64,
    pub phi: f64,
    pub psi_xi: f64,
    pub psi_xi_inf: f64,
    pub ratio: f64,
    /// Component of the family whose dual box supplies the farthest point.
    pub regime: usize,
    pub family: String,
}

struct TwoDQuantities {
    phi: f64,
    component: usize,
    psi: f64,
    psi_inf: f64,
    two_dist0: f64,
    dist0_inner: bool,
}

fn two_d_quantities(norm: &NormDescriptor) -> Result<TwoDQuantities> {
    let beta = [0.0, 1.0];
    let ext = dual_ball_extreme_points(norm, 2)?;
    let pts: Vec<Vec<f64>> = ext.iter().map(|(z, _)| z.clone()).collect();
    let phi = varphi_numeric(norm, &beta, Some(&pts))?;
    let face = subdiff_vertices(&pts, &beta, eval_norm(norm, &beta)?);
    let (d0, inner) = subdiff_origin_distance(&face);
    Ok(TwoDQuantities {
        phi: phi.value,
        component: ext[phi.achieving_index.expect("numeric phi has an index")].1,
        psi: psi_estimate(norm, &beta, 2.0, FIG_PSI_DIRS, 0)?.value,
        psi_inf: psi_estimate(norm, &beta, f64::INFINITY, FIG_PSI_DIRS, 0)?.value,
        two_dist0: 2.0 * d0,
        dist0_inner: inner,
    })
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// phi, psi(Xi), psi(Xi^inf) at `beta = (0, 1)` along the gamma grid.
pub fn fig_maxwl1_sweep(gamma_grid: &[f64], out_csv: Option<&Path>) -> Result<Vec<MaxWl1Row>> {
    if gamma_grid.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    let rows = gamma_grid
        .iter()
        .map(|&g| {
            let q = two_d_quantities(&NormDescriptor::MaxWeightedL1 { weight_family: maxwl1_family(g) })?;
            Ok(MaxWl1Row {
                gamma: g,
                phi: q.phi,
                psi_xi: q.psi,
                psi_xi_inf: q.psi_inf,
                ratio: q.phi / q.psi_inf,
                regime: q.component,
                family: "reciprocal".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = out_csv {
        write_records(path, &rows)?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandNormRow {
    pub index: usize,
    pub n_weights: usize,
    /// `w1:w2` pairs separated by `;`.
    pub weights: String,
    pub phi: f64,
    pub two_phi: f64,
    pub psi_xi: f64,
    pub psi_xi_inf: f64,
    pub ratio: f64,
    /// `2 dist(0, subdiff)`
    pub lower_bound: f64,
    /// Whether the projection of 0 falls inside the subdifferential.
    pub lower_bound_applies: bool,
}

/// Random maxima of weighted l1 norms in the plane: always `w = (1, 1)`, plus
/// one to four points with `w1 > 1` and `w2 < 1`.
pub fn fig_random_norms(count: usize, seed: u64, out_csv: Option<&Path>) -> Result<Vec<RandNormRow>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    for index in 0..count {
        let m = rng.random_range(1..=4usize);
        let mut fam = vec![vec![1.0, 1.0]];
        for _ in 0..m {
            let w1: f64 = 1.0 + rng.random_range(0.05..5.0);
            let w2: f64 = rng.random_range(0.05..0.95);
            fam.push(vec![w1, w2]);
        }
        let weights = fam.iter().map(|w| format!("{:.6}:{:.6}", w[0], w[1])).collect::<Vec<_>>().join(";");
        let q = two_d_quantities(&NormDescriptor::MaxWeightedL1 { weight_family: fam })?;
        rows.push(RandNormRow {
            index,
            n_weights: m + 1,
            weights,
            phi: q.phi,
            two_phi: 2.0 * q.phi,
            psi_xi: q.psi,
            psi_xi_inf: q.psi_inf,
            ratio: q.phi / q.psi_inf,
            lower_bound: q.two_dist0,
            lower_bound_applies: q.dist0_inner,
        });
    }
    if let Some(path) = out_csv {
        write_records(path, &rows)?;
    }
    Ok(rows)
}

/// `psi(Xi^inf) <= psi(Xi) <= 2 phi` and `psi(Xi^inf) < phi`, with a
/// relative slack `rel` for the first two (the psi values are computed by
/// bisection and can tie exactly).
pub fn chain_holds(phi: f64, psi: f64, psi_inf: f64, rel: f64) -> bool {
    psi_inf <= psi * (1.0 + rel) && psi <= 2.0 * phi * (1.0 + rel) && psi_inf < phi
}
