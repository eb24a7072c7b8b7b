//! The doubly-sparse norm engine.
//!
//! `S_{k,d}` holds vectors with at most `k` nonzeros whose top-`k`
//! magnitudes (zeros included) take at most `d` values. Projection onto it
//! is 1-D K-means with `d` clusters on the sorted top-`k` magnitudes, solved
//! exactly by dynamic programming over consecutive partitions. The dual norm
//! is the length of that projection; the primal norm is a small convex
//! program over the dual ball.

use serde::{Deserialize, Serialize};

use crate::combin::{stirling2, Combinations, SetPartitions};
use crate::error::{check_finite, Error, Result};
use crate::qcqp::{solve_sorted_ball, Objective};
use crate::vecnorms::{binomial, sort_context};

/// `d` consecutive non-empty intervals covering `1..k`, stored by their
/// boundaries `0 = b_0 < b_1 < ... < b_d = k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub boundaries: Vec<usize>,
}

impl IntervalPartition {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        let ok = boundaries.len() >= 2
            && boundaries[0] == 0
            && boundaries.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(IntervalPartition { boundaries })
        } else {
            Err(Error::InvalidParameter(format!(
                "boundaries must start at 0 and increase strictly: {boundaries:?}"
            )))
        }
    }

    pub fn k(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn d(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Zero-based half-open ranges `[b_{t-1}, b_t)`.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        self.boundaries.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// All `C(k-1, d-1)` consecutive partitions of `1..k` into `d` intervals.
pub fn consecutive_partitions(k: usize, d: usize) -> impl Iterator<Item = IntervalPartition> {
    Combinations::new(k.saturating_sub(1), d.saturating_sub(1)).map(move |cuts| {
        let mut b = Vec::with_capacity(d + 1);
        b.push(0);
        b.extend(cuts.iter().map(|c| c + 1));
        b.push(k);
        IntervalPartition { boundaries: b }
    })
}

/// Dynamic-programming table over the sorted top-`k` magnitudes.
///
/// `nu[s][e]` is the best value of `sum_t (sum_{I_t} b)^2/|I_t|` over
/// partitions of the first `s` entries into `e` intervals. Only cells with
/// `e <= s <= k - d + e` (and `(0,0)`) are populated.
#[derive(Clone, Debug)]
pub struct DpTable {
    pub k: usize,
    pub d: usize,
    pub nu: Vec<Vec<Option<f64>>>,
    /// Start `m` (1-based) of the last interval in the optimum for `(s, e)`.
    pub argmax: Vec<Vec<Option<usize>>>,
}

impl DpTable {
    pub fn optimum(&self) -> f64 {
        self.nu[self.k][self.d].expect("terminal cell is always populated")
    }

    pub fn partition(&self) -> IntervalPartition {
        let mut bounds = vec![self.k];
        let (mut s, mut e) = (self.k, self.d);
        while e > 0 {
            let m = self.argmax[s][e].expect("back-pointer on the optimal path");
            bounds.push(m - 1);
            s = m - 1;
            e -= 1;
        }
        bounds.reverse();
        IntervalPartition { boundaries: bounds }
    }
}

/// Run the DP on `top` (non-increasing, nonnegative; its length is `k`).
pub fn dp_table(top: &[f64], d: usize) -> DpTable {
    let k = top.len();
    let mut prefix = vec![0.0; k + 1];
    for (j, v) in top.iter().enumerate() {
        prefix[j + 1] = prefix[j] + v;
    }
    let cost = |m: usize, s: usize| {
        let sum = prefix[s] - prefix[m - 1];
        sum * sum / (s - m + 1) as f64
    };
    let mut nu = vec![vec![None; d + 1]; k + 1];
    let mut argmax = vec![vec![None; d + 1]; k + 1];
    nu[0][0] = Some(0.0);
    for e in 1..=d {
        for s in e..=k - d + e {
            let mut best: Option<(f64, usize)> = None;
            for m in e..=s {
                if let Some(prev) = nu[m - 1][e - 1] {
                    let v = prev + cost(m, s);
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, m));
                    }
                }
            }
            if let Some((v, m)) = best {
                nu[s][e] = Some(v);
                argmax[s][e] = Some(m);
            }
        }
    }
    DpTable { k, d, nu, argmax }
}

/// DP optimum and its partition for a sorted nonnegative block.
pub(crate) fn dp_optimum(top: &[f64], d: usize) -> (f64, IntervalPartition) {
    let t = dp_table(top, d);
    (t.optimum(), t.partition())
}

fn check_kd(p: usize, k: usize, d: usize) -> Result<()> {
    if 1 <= d && d <= k && k <= p {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "need 1 <= d <= k <= p, got k={k}, d={d}, p={p}"
        )))
    }
}

/// One projection of a vector onto `S_{k,d}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    pub projected: Vec<f64>,
    /// `||projected||_2^2`, the squared dual norm.
    pub sq_dual_norm: f64,
    /// Original indices of the top-k entries, in sorted order.
    pub support: Vec<usize>,
    pub partition: IntervalPartition,
}

/// Project onto `S_{k,d}`: keep the top-k magnitudes, cluster them by the
/// DP, replace each cluster by its mean, restore order and signs.
pub fn project_skd(theta: &[f64], k: usize, d: usize) -> Result<ProjectionOutcome> {
    check_finite(theta)?;
    check_kd(theta.len(), k, d)?;
    let ctx = sort_context(theta);
    let top = &ctx.sorted_abs[..k];
    let table = dp_table(top, d);
    let partition = table.partition();
    let mut sorted_proj = vec![0.0; theta.len()];
    for (a, b) in partition.ranges() {
        let mean = top[a..b].iter().sum::<f64>() / (b - a) as f64;
        sorted_proj[a..b].iter_mut().for_each(|v| *v = mean);
    }
    let projected = ctx.restore(&sorted_proj);
    Ok(ProjectionOutcome {
        sq_dual_norm: table.optimum(),
        projected,
        support: ctx.permutation[..k].to_vec(),
        partition,
    })
}

/// `||theta||*_{k box d}`, the length of the projection onto `S_{k,d}`.
pub fn dual_norm_kd(theta: &[f64], k: usize, d: usize) -> Result<f64> {
    check_finite(theta)?;
    check_kd(theta.len(), k, d)?;
    let ctx = sort_context(theta);
    Ok(dp_table(&ctx.sorted_abs[..k], d).optimum().max(0.0).sqrt())
}

/// Reference oracle: every size-k support, every consecutive partition of
/// that support's sorted magnitudes.
pub fn dual_norm_bruteforce(theta: &[f64], k: usize, d: usize) -> Result<f64> {
    check_finite(theta)?;
    let p = theta.len();
    check_kd(p, k, d)?;
    let work = binomial(k - 1, d - 1) * binomial(p, k);
    if p > 14 || work > 1e6 {
        return Err(Error::GuardExceeded(format!(
            "brute force needs p <= 14 and <= 1e6 candidates (p={p}, candidates={work})"
        )));
    }
    let mut best = 0.0f64;
    for sup in Combinations::new(p, k) {
        let mut vals: Vec<f64> = sup.iter().map(|&i| theta[i].abs()).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        for part in consecutive_partitions(k, d) {
            let v: f64 = part
                .ranges()
                .iter()
                .map(|&(a, b)| {
                    let s: f64 = vals[a..b].iter().sum();
                    s * s / (b - a) as f64
                })
                .sum();
            best = best.max(v);
        }
    }
    Ok(best.sqrt())
}

/// A member of BD(k,d): the rank-d projector that averages (with signs)
/// over each block of the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagElement {
    /// Support indices, laid out so that each block is consecutive.
    pub support: Vec<usize>,
    pub blocks: IntervalPartition,
    pub signs: Vec<f64>,
}

impl BlockDiagElement {
    /// `theta^T A theta`
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        self.blocks
            .ranges()
            .iter()
            .map(|&(a, b)| {
                let s: f64 = (a..b).map(|r| self.signs[r] * theta[self.support[r]]).sum();
                s * s / (b - a) as f64
            })
            .sum()
    }

    /// The `d` orthonormal columns `u_t` with `A = sum_t u_t u_t^T`.
    pub fn factor(&self, p: usize) -> Vec<Vec<f64>> {
        self.blocks
            .ranges()
            .iter()
            .map(|&(a, b)| {
                let mut u = vec![0.0; p];
                let c = 1.0 / ((b - a) as f64).sqrt();
                for r in a..b {
                    u[self.support[r]] = self.signs[r] * c;
                }
                u
            })
            .collect()
    }

    pub fn dense(&self, p: usize) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(p, p);
        for u in self.factor(p) {
            for i in 0..p {
                if u[i] != 0.0 {
                    for j in 0..p {
                        m[(i, j)] += u[i] * u[j];
                    }
                }
            }
        }
        m
    }
}

/// Exact size of BD(k,d) modulo the per-block sign flip, i.e. the number
/// of distinct matrices: `C(p,k) * S(k,d) * 2^(k-d)`.
pub fn bd_count(p: usize, k: usize, d: usize) -> f64 {
    binomial(p, k) * stirling2(k, d) * 2f64.powi((k - d) as i32)
}

/// The analytic cardinality bound `(2epd/k)^k`.
pub fn bd_bound(p: usize, k: usize, d: usize) -> f64 {
    (2.0 * std::f64::consts::E * p as f64 * d as f64 / k as f64).powi(k as i32)
}

pub const BD_GUARD: f64 = 1e6;

/// Every distinct member of BD(k,d) exactly once. Each block's signs are
/// normalized so that its first support index has sign `+1`.
pub fn enumerate_bd(
    p: usize,
    k: usize,
    d: usize,
) -> Result<impl Iterator<Item = BlockDiagElement>> {
    check_kd(p, k, d)?;
    let count = bd_count(p, k, d);
    if count > BD_GUARD {
        return Err(Error::GuardExceeded(format!("|BD({k},{d})| = {count} at p={p}")));
    }
    Ok(Combinations::new(p, k).flat_map(move |subset| {
        SetPartitions::new(k, d).flat_map(move |labels| {
            let mut order: Vec<usize> = Vec::with_capacity(k);
            let mut bounds = vec![0];
            for b in 0..d {
                order.extend((0..k).filter(|&r| labels[r] == b));
                bounds.push(order.len());
            }
            let free: Vec<usize> = (0..k).filter(|&r| !bounds[..d].contains(&r)).collect();
            let subset = subset.clone();
            (0u64..1 << free.len()).map(move |mask| {
                let mut signs = vec![1.0; k];
                for (bit, &r) in free.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        signs[r] = -1.0;
                    }
                }
                BlockDiagElement {
                    support: order.iter().map(|&r| subset[r]).collect(),
                    blocks: IntervalPartition {
                        boundaries: bounds.clone(),
                    },
                    signs,
                }
            })
        })
    }))
}

/// `card(beta) <= k` and the top-k magnitudes form at most `d` clusters of
/// width `tol`.
pub fn check_membership_skd(beta: &[f64], k: usize, d: usize, tol: f64) -> bool {
    if k == 0 || k > beta.len() || d == 0 {
        return false;
    }
    let ctx = sort_context(beta);
    let card = ctx.sorted_abs.iter().filter(|&&a| a > tol).count();
    if card > k {
        return false;
    }
    let mut groups = 0;
    let mut anchor = f64::INFINITY;
    for &a in &ctx.sorted_abs[..k] {
        if groups == 0 || a < anchor - tol {
            groups += 1;
            anchor = a;
        }
    }
    groups <= d
}

/// `||beta||_{k box 1} = max{ ||beta||_1 / sqrt k, sqrt k ||beta||_inf }`.
pub fn norm_k1(beta: &[f64], k: usize) -> f64 {
    let kf = k as f64;
    let l1: f64 = beta.iter().map(|x| x.abs()).sum();
    let li = beta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (l1 / kf.sqrt()).max(kf.sqrt() * li)
}

/// The k-support norm in closed form (the `d = k` member of the family).
pub fn ksupport_norm(beta: &[f64], k: usize) -> Result<f64> {
    check_finite(beta)?;
    check_kd(beta.len(), k, k)?;
    let z = sort_context(beta).sorted_abs;
    let p = z.len();
    let mut suffix = vec![0.0; p + 1];
    for i in (0..p).rev() {
        suffix[i] = suffix[i + 1] + z[i];
    }
    let scale = z[0].max(f64::MIN_POSITIVE);
    let eval = |r: usize| {
        let h = k - r - 1;
        let head: f64 = z[..h].iter().map(|v| v * v).sum();
        let t = suffix[h];
        (head + t * t / (r + 1) as f64).sqrt()
    };
    let mut best: Option<(f64, usize)> = None;
    for r in 0..k {
        let h = k - r - 1;
        let avg = suffix[h] / (r + 1) as f64;
        let upper = if h == 0 { f64::INFINITY } else { z[h - 1] };
        // violation of z_{h-1} > avg >= z_h, scaled
        let viol = ((avg - upper).max(0.0) + (z[h] - avg).max(0.0)) / scale;
        if viol <= 1e-12 {
            return Ok(eval(r));
        }
        if best.is_none_or(|(v, _)| viol < v) {
            best = Some((viol, r));
        }
    }
    Ok(eval(best.unwrap().1))
}

/// Result of evaluating the primal doubly-sparse norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdNormEval {
    /// Certified lower bound `<beta, theta> / ||theta||*`; the true value is
    /// at most `value + gap`.
    pub value: f64,
    pub gap: f64,
    /// A maximizer of `<beta, .>` over the dual unit ball.
    pub theta: Vec<f64>,
}

/// `||beta||_{k box d} = sup{ <beta, theta> : ||theta||*_{k box d} <= 1 }`,
/// evaluated to additive `tol`.
pub fn eval_norm_kd(beta: &[f64], k: usize, d: usize, tol: f64) -> Result<KdNormEval> {
    check_finite(beta)?;
    let p = beta.len();
    check_kd(p, k, d)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let ctx = sort_context(beta);
    let scale = ctx.sorted_abs[0];
    if scale == 0.0 {
        return Ok(KdNormEval {
            value: 0.0,
            gap: 0.0,
            theta: vec![0.0; p],
        });
    }
    let b: Vec<f64> = ctx.sorted_abs.iter().map(|v| v / scale).collect();
    let mut c = b[..k].to_vec();
    c[k - 1] = b[k - 1..].iter().sum();
    let sol = solve_sorted_ball(Objective::Linear { c: &c }, k, d, &c, 0.25 * tol / scale)?;
    let mut sorted_theta = vec![sol.x[k - 1]; p];
    sorted_theta[..k].copy_from_slice(&sol.x);
    let dual = dp_table(&sorted_theta[..k], d).optimum().sqrt();
    let inner: f64 = b.iter().zip(&sorted_theta).map(|(a, t)| a * t).sum();
    let value = scale * inner / dual.max(1.0);
    let upper = scale * (c.iter().zip(&sol.x).map(|(a, x)| a * x).sum::<f64>() + sol.gap);
    let gap = (upper - value).max(0.0);
    if gap > tol {
        return Err(Error::NonConvergence {
            iterations: sol.newton_steps,
            gap,
        });
    }
    let theta_sorted: Vec<f64> = sorted_theta.iter().map(|t| t / dual.max(1.0)).collect();
    Ok(KdNormEval {
        value,
        gap,
        theta: ctx.restore(&theta_sorted),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_region_is_the_trapezoid() {
        let t = dp_table(&[5.0, 4.0, 3.0, 2.0, 1.0], 3);
        for s in 0..=5 {
            for e in 0..=3 {
                let inside = (s == 0 && e == 0) || (e >= 1 && e <= s && s <= 5 - 3 + e);
                assert_eq!(t.nu[s][e].is_some(), inside, "cell ({s},{e})");
            }
        }
    }

    #[test]
    fn partition_recovery() {
        let t = dp_table(&[5.0, 5.0, 3.0], 2);
        assert_eq!(t.partition().boundaries, vec![0, 2, 3]);
        assert!((t.optimum() - 59.0).abs() < 1e-12);
    }

    #[test]
    fn ksupport_simple_values() {
        assert!((ksupport_norm(&[1.0, 1.0, 1.0], 2).unwrap() - 4.5f64.sqrt()).abs() < 1e-12);
        assert!((ksupport_norm(&[3.0, 4.0], 2).unwrap() - 5.0).abs() < 1e-12);
        assert!((ksupport_norm(&[3.0, -4.0], 1).unwrap() - 7.0).abs() < 1e-12);
    }
}
