//! Log-barrier solver for the sorted-cone description of the unit ball of
//! the dual doubly-sparse norm.
//!
//! On the cone `x_1 >= ... >= x_k >= 0`, membership in the ball is one convex
//! quadratic constraint per consecutive partition of `1..k`:
//! `sum_t (sum_{I_t} x)^2 / |I_t| <= 1`. Coordinates beyond `k` never enter
//! the constraints; callers fold them into the objective (they sit at or
//! below `x_k`). The problems are tiny (`k` variables), so a dense Newton
//! barrier method is both fast and accurate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kdnorm::{consecutive_partitions, dp_optimum};

/// Consecutive partition as half-open ranges over `0..k`.
pub(crate) type Blocks = Vec<(usize, usize)>;

/// Include every consecutive partition up front below this count.
const FULL_FAMILY_LIMIT: f64 = 256.0;

#[derive(Clone, Debug)]
pub(crate) enum Objective<'a> {
    /// `1/2 sum_{i<k} (x_i - a_i)^2 + 1/2 sum_j (tail_j - x_k)_+^2`
    Projection { a: &'a [f64], tail: &'a [f64] },
    /// maximize `<c, x>`
    Linear { c: &'a [f64] },
}

impl Objective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Projection { a, tail } => {
                let xk = *x.last().unwrap();
                let head: f64 = x.iter().zip(*a).map(|(x, a)| (x - a) * (x - a)).sum();
                let t: f64 = tail.iter().map(|&t| (t - xk).max(0.0).powi(2)).sum();
                0.5 * (head + t)
            }
            Objective::Linear { c } => -x.iter().zip(*c).map(|(x, c)| x * c).sum::<f64>(),
        }
    }

    fn grad_hess(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>, t: f64) {
        let k = x.len();
        match self {
            Objective::Projection { a, tail } => {
                for i in 0..k {
                    g[i] += t * (x[i] - a[i]);
                    h[(i, i)] += t;
                }
                let xk = x[k - 1];
                let mut gk = 0.0;
                let mut cnt = 0.0;
                for &tj in *tail {
                    if tj > xk {
                        gk -= tj - xk;
                        cnt += 1.0;
                    }
                }
                g[k - 1] += t * gk;
                h[(k - 1, k - 1)] += t * cnt;
            }
            Objective::Linear { c } => {
                for i in 0..k {
                    g[i] -= t * c[i];
                }
            }
        }
    }
}

pub(crate) fn block_form(x: &[f64], blocks: &Blocks) -> f64 {
    blocks
        .iter()
        .map(|&(s, e)| {
            let sum: f64 = x[s..e].iter().sum();
            sum * sum / (e - s) as f64
        })
        .sum()
}

#[derive(Clone, Debug)]
pub(crate) struct BarrierSolution {
    pub x: Vec<f64>,
    /// Duality gap bound `m / t` at exit.
    pub gap: f64,
    pub newton_steps: usize,
    #[allow(dead_code)]
    pub family: Vec<Blocks>,
}

struct Barrier<'a> {
    obj: Objective<'a>,
    family: Vec<Blocks>,
}

impl Barrier<'_> {
    fn m(&self, k: usize) -> usize {
        k + self.family.len()
    }

    /// Slacks of all constraints; `None` if any is non-positive.
    fn slacks(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = x.len();
        let mut lin = Vec::with_capacity(k);
        for i in 0..k - 1 {
            lin.push(x[i] - x[i + 1]);
        }
        lin.push(x[k - 1]);
        let quad: Vec<f64> = self.family.iter().map(|b| 1.0 - block_form(x, b)).collect();
        if lin.iter().chain(&quad).all(|&s| s > 0.0) {
            Some((lin, quad))
        } else {
            None
        }
    }

    fn phi(&self, x: &[f64], t: f64) -> Option<f64> {
        let (lin, quad) = self.slacks(x)?;
        let bar: f64 = lin.iter().chain(&quad).map(|s| -s.ln()).sum();
        Some(t * self.obj.value(x) + bar)
    }

    fn newton_direction(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        let k = x.len();
        let (lin, quad) = self.slacks(x)?;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        self.obj.grad_hess(x, &mut g, &mut h, t);
        for i in 0..k {
            let s = lin[i];
            // constraint row: e_i - e_{i+1} (or e_{k-1} for the last)
            g[i] -= 1.0 / s;
            h[(i, i)] += 1.0 / (s * s);
            if i + 1 < k {
                g[i + 1] += 1.0 / s;
                h[(i + 1, i + 1)] += 1.0 / (s * s);
                h[(i, i + 1)] -= 1.0 / (s * s);
                h[(i + 1, i)] -= 1.0 / (s * s);
            }
        }
        for (blocks, &s) in self.family.iter().zip(&quad) {
            let mut grad = vec![0.0; k];
            for &(a, b) in blocks {
                let len = (b - a) as f64;
                let sum: f64 = x[a..b].iter().sum();
                for j in a..b {
                    grad[j] = 2.0 * sum / len;
                }
                for i in a..b {
                    for j in a..b {
                        h[(i, j)] += 2.0 / (len * s);
                    }
                }
            }
            for i in 0..k {
                g[i] += grad[i] / s;
                if grad[i] != 0.0 {
                    for j in 0..k {
                        h[(i, j)] += grad[i] * grad[j] / (s * s);
                    }
                }
            }
        }
        let rhs = -&g;
        let mut reg = 0.0;
        let scale = (0..k).fold(0.0f64, |m, i| m.max(h[(i, i)].abs())).max(1e-300);
        for _ in 0..8 {
            let mut hr = h.clone();
            if reg > 0.0 {
                for i in 0..k {
                    hr[(i, i)] += reg;
                }
            }
            if let Some(ch) = hr.cholesky() {
                let dx = ch.solve(&rhs);
                let dec = -g.dot(&dx);
                return Some((dx, dec));
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        }
        None
    }

    fn center(&self, x: &mut Vec<f64>, t: f64, steps: &mut usize) -> Result<()> {
        let mut prev_dec = f64::INFINITY;
        for _ in 0..200 {
            let Some((dx, dec)) = self.newton_direction(x, t) else {
                return Err(Error::NonConvergence { iterations: *steps, gap: f64::NAN });
            };
            *steps += 1;
            if dec <= 1e-12 || !dec.is_finite() {
                return Ok(());
            }
            // below the floating-point floor the decrement stops shrinking
            if dec < 1e-6 && dec >= 0.5 * prev_dec {
                return Ok(());
            }
            prev_dec = dec;
            // inside the quadratic-convergence region take the full step; this
            // also sidesteps Armijo tests lost in the roundoff of t * f
            if dec < 0.05 {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + d).collect();
                if self.slacks(&cand).is_some() {
                    *x = cand;
                    if dec <= 1e-10 {
                        return Ok(());
                    }
                    continue;
                }
            }
            let f0 = self.phi(x, t).unwrap();
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(f) = self.phi(&cand, t) {
                    if f <= f0 - 0.25 * step * dec {
                        *x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                // no further progress representable in floating point
                return Ok(());
            }
        }
        Ok(())
    }

    fn solve(&self, mut x: Vec<f64>, gap_tol: f64, steps: &mut usize) -> Result<(Vec<f64>, f64)> {
        let k = x.len();
        let m = self.m(k) as f64;
        let f0 = self.obj.value(&x).abs();
        let mut t = (m / (1.0 + f0)).max(1e-3);
        loop {
            self.center(&mut x, t, steps)?;
            let gap = m / t;
            if gap <= gap_tol || t > 1e18 {
                return Ok((x, gap));
            }
            t *= 20.0;
        }
    }
}

/// Strictly feasible interior start with `||x||_2 = 0.5`.
fn interior_start(k: usize) -> Vec<f64> {
    let x: Vec<f64> = (0..k).map(|i| (k - i) as f64).collect();
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().map(|v| 0.5 * v / n).collect()
}

/// Solve the reduced problem over the dual unit ball intersected with the
/// sorted cone. `probe` seeds the lazily generated partition family.
pub(crate) fn solve_sorted_ball(
    obj: Objective<'_>,
    k: usize,
    d: usize,
    probe: &[f64],
    gap_tol: f64,
) -> Result<BarrierSolution> {
    let total = crate::vecnorms::binomial(k - 1, d - 1);
    let family: Vec<Blocks> = if total <= FULL_FAMILY_LIMIT {
        consecutive_partitions(k, d).map(|p| p.ranges()).collect()
    } else {
        vec![dp_optimum(probe, d).1.ranges()]
    };
    let mut bar = Barrier { obj, family };
    let x0 = interior_start(k);
    let mut steps = 0;
    let (mut x, mut gap) = bar.solve(x0.clone(), gap_tol, &mut steps)?;
    if total > FULL_FAMILY_LIMIT {
        for _ in 0..10_000 {
            let (val, part) = dp_optimum(&x, d);
            if val <= 1.0 + 1e-12 {
                break;
            }
            let blocks = part.ranges();
            if bar.family.contains(&blocks) {
                break;
            }
            bar.family.push(blocks);
            // warm start: pull towards the interior point, then shrink into the family
            let y: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| 0.9 * a + 0.1 * b).collect();
            let fmax = bar.family.iter().map(|b| block_form(&y, b)).fold(0.0, f64::max);
            let s = if fmax > 0.999 { (0.999 / fmax).sqrt() } else { 1.0 };
            let y: Vec<f64> = y.iter().map(|v| v * s).collect();
            let r = bar.solve(y, gap_tol, &mut steps)?;
            x = r.0;
            gap = r.1;
        }
    }
    Ok(BarrierSolution {
        x,
        gap,
        newton_steps: steps,
        family: bar.family,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_linf_type_ball() {
        // k = d = 1: the ball is |x_1| <= 1 on the cone, tail clamps at x_1
        let a = [3.0];
        let tail = [2.0, 0.5];
        let s = solve_sorted_ball(Objective::Projection { a: &a, tail: &tail }, 1, 1, &a, 1e-13).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-9, "{:?}", s.x);
    }

    #[test]
    fn linear_maximization_k2_d1() {
        // max <(1,1), x> s.t. (x1+x2)^2/2 <= 1 => sqrt(2)
        let c = [1.0, 1.0];
        let s = solve_sorted_ball(Objective::Linear { c: &c }, 2, 1, &c, 1e-13).unwrap();
        let v = s.x[0] + s.x[1];
        assert!((v - 2f64.sqrt()).abs() < 1e-10, "{v}");
    }
}
