//! Projection onto dual-norm balls and proximal maps by Moreau decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::kdnorm::{consecutive_partitions, dp_table, dual_norm_kd, eval_norm_kd, project_skd};
use crate::linalg::{dot, norm2};
use crate::qcqp::{block_form, solve_sorted_ball, Blocks, Objective};
use crate::vecnorms::{eval_dual_norm, eval_norm, sort_context, NormDescriptor};

/// The triples `(e, m, s)` (1-based) of the quadratic constraints
/// `(1^T u_[m,s])^2/(s-m+1) <= nu_{s,e} - nu_{m-1,e-1}` that, with
/// `nu_{k,d} <= 1` and the sorted nonnegative cone, describe the dual ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcqpConstraintFamily {
    pub k: usize,
    pub d: usize,
    pub triples: Vec<(usize, usize, usize)>,
}

impl QcqpConstraintFamily {
    pub fn new(k: usize, d: usize) -> Self {
        let mut triples = Vec::new();
        for e in 1..=d {
            for s in e..=k - d + e {
                for m in e..=s {
                    triples.push((e, m, s));
                }
            }
        }
        QcqpConstraintFamily { k, d, triples }
    }

    /// Check feasibility of sorted nonnegative `u` with the smallest
    /// admissible `nu` (the DP table itself). Returns the largest violation.
    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let t = dp_table(&u[..self.k], self.d);
        let mut worst = t.optimum() - 1.0;
        for &(e, m, s) in &self.triples {
            let sum: f64 = u[m - 1..s].iter().sum();
            let lhs = sum * sum / (s - m + 1) as f64;
            if let (Some(a), Some(b)) = (t.nu[s][e], t.nu[m - 1][e - 1]) {
                worst = worst.max(lhs - (a - b));
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    /// Log-barrier Newton on the reduced sorted-cone problem.
    #[default]
    InteriorPoint,
    /// Cyclic Dykstra over the monotone cone and the partition constraints.
    Dykstra,
    /// Outer approximation by supporting cuts at projected subgradients.
    SubgradientProjection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    pub max_outer_iters: usize,
    pub feasibility_tol: f64,
    pub objective_tol: f64,
    pub method: ProjectionMethod,
}

impl Default for ProxConfig {
    fn default() -> Self {
        ProxConfig {
            max_outer_iters: 100_000,
            feasibility_tol: 1e-9,
            objective_tol: 1e-9,
            method: ProjectionMethod::InteriorPoint,
        }
    }
}

impl ProxConfig {
    fn validate(&self) -> Result<()> {
        if self.feasibility_tol > 0.0 && self.objective_tol > 0.0 && self.max_outer_iters > 0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter("prox tolerances and iteration cap must be positive".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallProjection {
    pub point: Vec<f64>,
    /// `max(0, ||point||* / radius - 1)`
    pub feasibility_gap: f64,
    pub iterations: usize,
}

/// Euclidean projection onto `{u : ||u||*_{k box d} <= radius}`.
pub fn project_dual_ball(
    theta: &[f64],
    k: usize,
    d: usize,
    radius: f64,
    cfg: &ProxConfig,
) -> Result<BallProjection> {
    check_finite(theta)?;
    cfg.validate()?;
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    let p = theta.len();
    let dn = dual_norm_kd(theta, k, d)?;
    // a few ulps of slack so that points on the sphere, computed through a
    // different rounding path, count as inside
    if dn <= radius * (1.0 + 4.0 * f64::EPSILON) {
        return Ok(BallProjection {
            point: theta.to_vec(),
            feasibility_gap: 0.0,
            iterations: 0,
        });
    }
    let scaled: Vec<f64> = theta.iter().map(|t| t / radius).collect();
    let ctx = sort_context(&scaled);
    let a = &ctx.sorted_abs;
    let (mut sorted_u, iterations) = match cfg.method {
        ProjectionMethod::InteriorPoint => {
            let gap_tol = (1e-3 * cfg.objective_tol * (1.0 + dot(a, a))).max(1e-15);
            let sol = solve_sorted_ball(
                Objective::Projection { a: &a[..k], tail: &a[k..] },
                k,
                d,
                &a[..k],
                gap_tol,
            )?;
            let xk = sol.x[k - 1];
            let mut u: Vec<f64> = a.iter().map(|&t| t.min(xk)).collect();
            u[..k].copy_from_slice(&sol.x);
            (polish_single_face(a, &u, k, d).unwrap_or(u), sol.newton_steps)
        }
        ProjectionMethod::Dykstra => dykstra_sorted(a, k, d, cfg)?,
        ProjectionMethod::SubgradientProjection => cutting_plane_sorted(a, k, d, cfg)?,
    };
    // pull any rounding excess back inside the ball
    let f = dp_table(&sorted_u[..k], d).optimum().sqrt();
    if f > 1.0 {
        sorted_u.iter_mut().for_each(|v| *v /= f);
    }
    let point: Vec<f64> = ctx.restore(&sorted_u).iter().map(|v| v * radius).collect();
    debug_assert_eq!(point.len(), p);
    let feas = (dual_norm_kd(&point, k, d)? / radius - 1.0).max(0.0);
    Ok(BallProjection {
        point,
        feasibility_gap: feas,
        iterations,
    })
}

/// Exact projection when a single partition constraint is active. For the
/// partition `P` chosen by the DP at `approx`, the cylinder
/// `{v : ||A_P v_[1..k]|| <= 1}` contains the ball, and projecting onto it
/// keeps the within-block deviations of `a` and rescales the block means.
/// If that point lies in the ball it is the projection onto the ball.
fn polish_single_face(a: &[f64], approx: &[f64], k: usize, d: usize) -> Option<Vec<f64>> {
    let ranges = dp_table(&approx[..k], d).partition().ranges();
    let means: Vec<f64> = ranges
        .iter()
        .map(|&(s, e)| a[s..e].iter().sum::<f64>() / (e - s) as f64)
        .collect();
    let r = ranges
        .iter()
        .zip(&means)
        .map(|(&(s, e), m)| m * m * (e - s) as f64)
        .sum::<f64>()
        .sqrt();
    if !(r > 1.0) {
        return None;
    }
    let mut u = a.to_vec();
    for (&(s, e), m) in ranges.iter().zip(&means) {
        u[s..e].iter_mut().for_each(|v| *v += m / r - m);
    }
    let inside = dual_norm_kd(&u, k, d).ok()? <= 1.0 + 8.0 * f64::EPSILON;
    inside.then_some(u)
}

/// Projection of `y` onto `{u : u_1 >= ... >= u_p >= 0}`.
pub(crate) fn project_monotone_nonneg(y: &[f64]) -> Vec<f64> {
    // pool adjacent violators for a non-increasing fit
    let mut vals: Vec<f64> = Vec::with_capacity(y.len());
    let mut wts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        vals.push(v);
        wts.push(1);
        while vals.len() > 1 && vals[vals.len() - 2] < vals[vals.len() - 1] {
            let (v2, w2) = (vals.pop().unwrap(), wts.pop().unwrap());
            let (v1, w1) = (vals.pop().unwrap(), wts.pop().unwrap());
            let w = w1 + w2;
            vals.push((v1 * w1 as f64 + v2 * w2 as f64) / w as f64);
            wts.push(w);
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (v, w) in vals.iter().zip(&wts) {
        out.extend(std::iter::repeat_n(v.max(0.0), *w));
    }
    out
}

fn project_cylinder(u: &mut [f64], blocks: &Blocks) {
    let f = block_form(u, blocks);
    if f > 1.0 {
        let shrink = 1.0 - 1.0 / f.sqrt();
        for &(a, b) in blocks {
            let mean = u[a..b].iter().sum::<f64>() / (b - a) as f64;
            u[a..b].iter_mut().for_each(|v| *v -= shrink * mean);
        }
    }
}

/// Dykstra over the cone and every partition cylinder (lazily grown).
fn dykstra_sorted(a: &[f64], k: usize, d: usize, cfg: &ProxConfig) -> Result<(Vec<f64>, usize)> {
    let p = a.len();
    let total = crate::vecnorms::binomial(k - 1, d - 1);
    let mut family: Vec<Blocks> = if total <= 256.0 {
        consecutive_partitions(k, d).map(|q| q.ranges()).collect()
    } else {
        vec![dp_table(&a[..k], d).partition().ranges()]
    };
    let mut x = a.to_vec();
    let mut incs: Vec<Vec<f64>> = vec![vec![0.0; p]; family.len() + 1];
    for it in 1..=cfg.max_outer_iters {
        let before = x.clone();
        for (j, inc) in incs.iter_mut().enumerate() {
            let y: Vec<f64> = x.iter().zip(inc.iter()).map(|(x, i)| x + i).collect();
            let z = if j == 0 {
                project_monotone_nonneg(&y)
            } else {
                let mut z = y.clone();
                project_cylinder(&mut z, &family[j - 1]);
                z
            };
            for i in 0..p {
                inc[i] = y[i] - z[i];
            }
            x = z;
        }
        let change = norm2(&crate::linalg::sub(&x, &before));
        if change <= cfg.objective_tol * 1e-3 {
            let sorted = project_monotone_nonneg(&x);
            let t = dp_table(&sorted[..k], d);
            if t.optimum() <= 1.0 + cfg.feasibility_tol {
                return Ok((sorted, it));
            }
            let blocks = t.partition().ranges();
            if !family.contains(&blocks) {
                family.push(blocks);
                incs.push(vec![0.0; p]);
                continue;
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_outer_iters,
        gap: (dp_table(&x[..k], d).optimum().sqrt() - 1.0).max(0.0),
    })
}

/// Cuts `<c_j, u> <= 1` at normalized projections onto `S_{k,d}`, each
/// intermediate projection solved by Hildreth's dual coordinate ascent.
fn cutting_plane_sorted(
    a: &[f64],
    k: usize,
    d: usize,
    cfg: &ProxConfig,
) -> Result<(Vec<f64>, usize)> {
    let p = a.len();
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut x = a.to_vec();
    let mut sweeps = 0;
    for _ in 0..cfg.max_outer_iters {
        let pr = project_skd(&x, k, d)?;
        let len = pr.sq_dual_norm.sqrt();
        if len <= 1.0 + cfg.feasibility_tol {
            return Ok((project_monotone_nonneg(&x), sweeps));
        }
        cuts.push(pr.projected.iter().map(|v| v / len).collect());
        mult.push(0.0);
        // Hildreth sweeps until the multipliers settle
        loop {
            sweeps += 1;
            let mut moved = 0.0f64;
            for (c, mu) in cuts.iter().zip(mult.iter_mut()) {
                let delta = dot(c, &x) - 1.0;
                let new_mu = (*mu + delta).max(0.0);
                let step = new_mu - *mu;
                if step != 0.0 {
                    for i in 0..p {
                        x[i] -= step * c[i];
                    }
                    moved = moved.max(step.abs());
                    *mu = new_mu;
                }
            }
            if moved <= 1e-3 * cfg.objective_tol || sweeps >= cfg.max_outer_iters {
                break;
            }
        }
        if sweeps >= cfg.max_outer_iters {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: sweeps,
        gap: (dual_norm_kd(&x, k, d)? - 1.0).max(0.0),
    })
}

/// Kolmogorov-criterion residual of a candidate projection `u` of `theta`
/// onto the ball of radius `radius`: `sup_{z in ball} <theta - u, z - u>`,
/// which is `radius * ||theta - u|| - <theta - u, u>` (zero at the optimum).
pub fn kolmogorov_violation(
    theta: &[f64],
    u: &[f64],
    k: usize,
    d: usize,
    radius: f64,
) -> Result<f64> {
    let r = crate::linalg::sub(theta, u);
    let support = radius * eval_norm_kd(&r, k, d, 1e-10)?.value;
    Ok(support - dot(&r, u))
}

fn soft_threshold(x: &[f64], thresholds: impl Fn(usize) -> f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| v.signum() * (v.abs() - thresholds(i)).max(0.0))
        .collect()
}

/// Projection onto the l1 ball of radius `r`.
fn project_l1_ball(x: &[f64], r: f64) -> Vec<f64> {
    if x.iter().map(|v| v.abs()).sum::<f64>() <= r {
        return x.to_vec();
    }
    let a = crate::vecnorms::sorted_abs(x);
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &v) in a.iter().enumerate() {
        cum += v;
        let t = (cum - r) / (j + 1) as f64;
        if v > t {
            tau = t;
        }
    }
    soft_threshold(x, |_| tau)
}

/// Projection onto `{u : ||u||* <= radius}` for the norms with a prox.
pub fn project_dual_norm_ball(
    norm: &NormDescriptor,
    x: &[f64],
    radius: f64,
    cfg: &ProxConfig,
) -> Result<Vec<f64>> {
    use NormDescriptor::*;
    check_finite(x)?;
    norm.validate(x.len())?;
    // same inside slack as project_dual_ball, so that points on the sphere
    // reached through a different rounding path are returned unchanged
    if matches!(norm, L1 | WeightedL1 { .. } | L2 | Linf | GroupL1 { .. })
        && eval_dual_norm(norm, x)? <= radius * (1.0 + 4.0 * f64::EPSILON)
    {
        return Ok(x.to_vec());
    }
    Ok(match norm {
        L1 => x.iter().map(|v| v.clamp(-radius, radius)).collect(),
        WeightedL1 { weights } => x
            .iter()
            .zip(weights)
            .map(|(v, w)| v.clamp(-radius * w, radius * w))
            .collect(),
        L2 => {
            let n = norm2(x);
            if n <= radius {
                x.to_vec()
            } else {
                x.iter().map(|v| v * radius / n).collect()
            }
        }
        Linf => project_l1_ball(x, radius),
        GroupL1 { groups } => {
            let mut out = x.to_vec();
            for g in groups {
                let n = g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                if n > radius {
                    g.iter().for_each(|&i| out[i] = x[i] * radius / n);
                }
            }
            out
        }
        KSupport { k } => project_dual_ball(x, *k, *k, radius, cfg)?.point,
        Kd { k, d } => project_dual_ball(x, *k, *d, radius, cfg)?.point,
        other => {
            return Err(Error::Unsupported(format!("no proximal map for {other:?}")));
        }
    })
}

/// `prox_{lambda ||.||}(x) = x - Pi_{lambda B*}(x)`; soft-thresholding for l1.
pub fn prox_norm(x: &[f64], norm: &NormDescriptor, lambda: f64, cfg: &ProxConfig) -> Result<Vec<f64>> {
    check_finite(x)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    match norm {
        NormDescriptor::L1 => Ok(soft_threshold(x, |_| lambda)),
        NormDescriptor::WeightedL1 { weights } => {
            norm.validate(x.len())?;
            Ok(soft_threshold(x, |i| lambda * weights[i]))
        }
        _ => {
            let u = project_dual_norm_ball(norm, x, lambda, cfg)?;
            Ok(x.iter().zip(&u).map(|(a, b)| a - b).collect())
        }
    }
}

/// `prox_norm` together with `||prox||`. For the doubly-sparse kinds the
/// value comes from the Moreau pairing `<Pi(x), prox>/lambda`, exact up to
/// the projection tolerance, which saves a norm evaluation per call.
pub fn prox_norm_with_value(
    x: &[f64],
    norm: &NormDescriptor,
    lambda: f64,
    cfg: &ProxConfig,
) -> Result<(Vec<f64>, f64)> {
    match norm {
        NormDescriptor::Kd { .. } | NormDescriptor::KSupport { .. } => {
            if !(lambda > 0.0) {
                return Err(Error::InvalidParameter("lambda must be positive".into()));
            }
            let u = project_dual_norm_ball(norm, x, lambda, cfg)?;
            let prox: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - b).collect();
            let value = (dot(&u, &prox) / lambda).max(0.0);
            Ok((prox, value))
        }
        _ => {
            let prox = prox_norm(x, norm, lambda, cfg)?;
            let value = eval_norm(norm, &prox)?;
            Ok((prox, value))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoreauReport {
    /// `||prox(x) + Pi(x) - x||_2`
    pub reconstruction_residual: f64,
    /// `max(0, ||g||* - 1)` for `g = (x - prox)/lambda`
    pub dual_feasibility_gap: f64,
    /// `| <g, prox> - ||prox|| |`
    pub pairing_gap: f64,
    /// the larger of the two gaps above
    pub subgradient_gap: f64,
}

/// Residuals of the Moreau decomposition and of prox optimality.
pub fn moreau_check(x: &[f64], norm: &NormDescriptor, lambda: f64, cfg: &ProxConfig) -> Result<MoreauReport> {
    let prox = prox_norm(x, norm, lambda, cfg)?;
    let proj = project_dual_norm_ball(norm, x, lambda, cfg)?;
    let recon: Vec<f64> = (0..x.len()).map(|i| prox[i] + proj[i] - x[i]).collect();
    let g: Vec<f64> = x.iter().zip(&prox).map(|(a, b)| (a - b) / lambda).collect();
    let feas = (eval_dual_norm(norm, &g)? - 1.0).max(0.0);
    let pairing = (dot(&g, &prox) - eval_norm(norm, &prox)?).abs();
    Ok(MoreauReport {
        reconstruction_residual: norm2(&recon),
        dual_feasibility_gap: feas,
        pairing_gap: pairing,
        subgradient_gap: feas.max(pairing),
    })
}

/// Inner prox tolerance at outer iteration `t >= 1`: `eps0 / t^2`.
pub fn inexact_schedule(eps0: f64, t: usize) -> f64 {
    eps0 / (t.max(1) as f64).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_basic() {
        assert_eq!(project_monotone_nonneg(&[1.0, 3.0, -1.0]), vec![2.0, 2.0, 0.0]);
        assert_eq!(project_monotone_nonneg(&[3.0, 1.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn family_size_bound() {
        for k in 1..8 {
            for d in 1..=k {
                let f = QcqpConstraintFamily::new(k, d);
                assert!(f.triples.len() <= k * k * d);
            }
        }
    }

    #[test]
    fn l1_ball_projection() {
        let u = project_l1_ball(&[3.0, -1.0], 1.0);
        assert!((u[0] - 1.0).abs() < 1e-15 && u[1] == 0.0);
    }
}
