//! Relative diameter `phi(beta) = dist_H(B*, subdiff ||beta||)`, the
//! compatibility constants `psi` of the error sets, and the cone `C(phi)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::combin::Combinations;
use crate::error::{check_finite, Error, Result};
use crate::kdnorm::eval_norm_kd;
use crate::linalg::{dot, norm2};
use crate::polytope::dist_to_hull;
use crate::vecnorms::{eval_norm, sorted_abs, NormDescriptor};

/// Cap on enumerated extreme points of a dual ball.
pub const EXT_GUARD: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelDiamMethod {
    ExactFormula,
    UpperBound,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelDiamReport {
    pub value: f64,
    pub method: RelDiamMethod,
    pub achieving_z: Option<Vec<f64>>,
    /// Index of `achieving_z` in the extreme-point list (numeric method).
    pub achieving_index: Option<usize>,
    pub formula_id: String,
    /// True when `value` is only an upper bound on `phi`.
    pub is_upper_bound: bool,
    /// Looser companion bound when the formula comes with one.
    pub relaxed_bound: Option<f64>,
}

impl RelDiamReport {
    fn formula(value: f64, id: &str, upper: bool) -> Self {
        RelDiamReport {
            value,
            method: if upper { RelDiamMethod::UpperBound } else { RelDiamMethod::ExactFormula },
            achieving_z: None,
            achieving_index: None,
            formula_id: id.to_string(),
            is_upper_bound: upper,
            relaxed_bound: None,
        }
    }
}

fn nonzero(beta: &[f64]) -> Result<()> {
    check_finite(beta)?;
    if beta.iter().all(|&b| b == 0.0) {
        Err(Error::ZeroVector)
    } else {
        Ok(())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// phi^2 for the weighted l_inf norm `max_i |b_i| / w_i`.
fn weighted_linf_phi2(w: &[f64], beta: &[f64]) -> f64 {
    let r: Vec<f64> = beta.iter().zip(w).map(|(b, w)| b.abs() / w).collect();
    let top = r.iter().fold(0.0f64, |m, &v| m.max(v));
    let tied: Vec<usize> = (0..r.len()).filter(|&i| close(r[i], top)).collect();
    let wt2: f64 = tied.iter().map(|&i| w[i] * w[i]).sum();
    // farthest vertex off the active set
    let off = (0..r.len())
        .filter(|i| !tied.contains(i))
        .map(|i| w[i])
        .fold(f64::INFINITY, f64::min);
    let first = if off.is_finite() { 1.0 / (off * off) + 1.0 / wt2 } else { f64::NEG_INFINITY };
    let second = if tied.len() == 1 {
        4.0 / wt2
    } else {
        // the antipodal vertex -e_i/w_i against the weighted simplex face
        tied.iter()
            .map(|&i| {
                let wi2 = w[i] * w[i];
                if 2.0 * wi2 <= wt2 {
                    1.0 / wi2 + 1.0 / (wt2 - wi2)
                } else {
                    4.0 / wt2
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    first.max(second)
}

/// Closed-form relative diameters.
pub fn varphi_exact(norm: &NormDescriptor, beta: &[f64]) -> Result<RelDiamReport> {
    use NormDescriptor::*;
    nonzero(beta)?;
    norm.validate(beta.len())?;
    let p = beta.len();
    let s = beta.iter().filter(|&&b| b != 0.0).count() as f64;
    Ok(match norm {
        L1 => RelDiamReport::formula(2.0 * s.sqrt(), "l1", false),
        L2 => RelDiamReport::formula(2.0, "l2", false),
        WeightedL1 { weights } => {
            let ws: f64 = beta.iter().zip(weights).filter(|(b, _)| **b != 0.0).map(|(_, w)| w * w).sum();
            RelDiamReport::formula(2.0 * ws.sqrt(), "weighted-l1", false)
        }
        Linf => RelDiamReport::formula(weighted_linf_phi2(&vec![1.0; p], beta).sqrt(), "linf", false),
        WeightedLinf { weights } => {
            RelDiamReport::formula(weighted_linf_phi2(weights, beta).sqrt(), "weighted-linf", false)
        }
        Kd { k, d: 1 } => {
            let k = *k as f64;
            let a = sorted_abs(beta);
            let l1: f64 = a.iter().sum();
            let linf = a[0];
            let t = a.iter().filter(|&&v| close(v, linf)).count() as f64;
            let big = (4.0 * s / k).max(2.0 + s / k + k);
            let small = (k * (1.0 + 1.0 / (t - 1.0).max(1.0 / 3.0))).max(2.0 + k / t + p as f64 / k);
            if close(l1, k * linf) {
                let mut r = RelDiamReport::formula(big.min(small).sqrt(), "k-1-tie", true);
                r.relaxed_bound = Some(big.max(small).sqrt());
                r
            } else if l1 > k * linf {
                RelDiamReport::formula(big.sqrt(), "k-1-l1-branch", false)
            } else {
                RelDiamReport::formula(small.sqrt(), "k-1-linf-branch", false)
            }
        }
        other => {
            return Err(Error::Unsupported(format!("no closed-form relative diameter for {other:?}")));
        }
    })
}

/// Upper bounds from the max-min inequality.
pub fn varphi_bound(norm: &NormDescriptor, beta: &[f64]) -> Result<RelDiamReport> {
    use NormDescriptor::*;
    nonzero(beta)?;
    norm.validate(beta.len())?;
    match norm {
        Owl { weights } => {
            let a = sorted_abs(beta);
            let mut refined = 0.0;
            let mut wg2 = 0.0;
            let mut pos = 0;
            while pos < a.len() && a[pos] > 0.0 {
                let mut end = pos + 1;
                while end < a.len() && close(a[end], a[pos]) {
                    end += 1;
                }
                let ws: f64 = weights[pos..end].iter().sum();
                refined += 3.0 * ws * ws / (end - pos) as f64;
                wg2 += weights[pos..end].iter().map(|w| w * w).sum::<f64>();
                pos = end;
            }
            let mut r = RelDiamReport::formula((wg2 + refined).sqrt(), "owl-refined", true);
            r.relaxed_bound = Some((4.0 * wg2).sqrt());
            Ok(r)
        }
        KdDual { k, d: 1 } => {
            let s = beta.iter().filter(|&&b| b != 0.0).count() as f64;
            Ok(RelDiamReport::formula((4.0 * (s / *k as f64).min(1.0)).sqrt(), "k-1-dual", true))
        }
        Kd { k, d } => kd_varphi_bound(beta, *k, *d),
        other => Err(Error::Unsupported(format!("no relative-diameter bound for {other:?}"))),
    }
}

/// `phi <= max_{z in B*} ||z||_2 + ||g||_2` for any `g` in the
/// subdifferential; `max ||z||_2 <= max(sqrt k, sqrt(p/k))` because the
/// `d = 1` dual ball contains every other one.
pub fn kd_varphi_bound(beta: &[f64], k: usize, d: usize) -> Result<RelDiamReport> {
    nonzero(beta)?;
    let p = beta.len();
    let radius = (k as f64).sqrt().max((p as f64 / k as f64).sqrt());
    let g = eval_norm_kd(beta, k, d, 1e-9)?.theta;
    let mut r = RelDiamReport::formula(radius + norm2(&g), "kd-radius", true);
    r.achieving_z = None;
    Ok(r)
}

fn sign_vectors(p: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << p).map(move |mask| (0..p).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
}

fn dedup(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for z in points {
        if !out.iter().any(|v| crate::linalg::dist2(v, &z) < 1e-24) {
            out.push(z);
        }
    }
    out
}

fn guard(count: f64) -> Result<()> {
    if count > EXT_GUARD as f64 {
        Err(Error::GuardExceeded(format!("{count} extreme points")))
    } else {
        Ok(())
    }
}

/// Extreme points of the dual unit ball, for the polyhedral kinds. For a max
/// of weighted l1 norms the list is the union of the component boxes'
/// vertices minus those inside another box; each point carries the index of
/// its component in the second slot.
pub fn dual_ball_extreme_points(norm: &NormDescriptor, p: usize) -> Result<Vec<(Vec<f64>, usize)>> {
    use NormDescriptor::*;
    norm.validate(p)?;
    let unit = |i: usize, v: f64| -> Vec<f64> {
        let mut e = vec![0.0; p];
        e[i] = v;
        e
    };
    let tag = |v: Vec<Vec<f64>>| v.into_iter().map(|z| (z, 0)).collect::<Vec<_>>();
    Ok(match norm {
        L1 => {
            guard(2f64.powi(p as i32))?;
            tag(sign_vectors(p).collect())
        }
        WeightedL1 { weights } => {
            guard(2f64.powi(p as i32))?;
            tag(sign_vectors(p).map(|s| s.iter().zip(weights).map(|(s, w)| s * w).collect()).collect())
        }
        Linf => tag((0..p).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect()),
        WeightedLinf { weights } => tag(
            (0..p)
                .flat_map(|i| [unit(i, 1.0 / weights[i]), unit(i, -1.0 / weights[i])])
                .collect(),
        ),
        Owl { weights } => {
            let f: f64 = (1..=p).map(|i| i as f64).product();
            guard(f * 2f64.powi(p as i32))?;
            let mut out = Vec::new();
            let mut perm: Vec<usize> = (0..p).collect();
            permutations(&mut perm, 0, &mut |pi| {
                for s in sign_vectors(p) {
                    let mut z = vec![0.0; p];
                    for (i, &j) in pi.iter().enumerate() {
                        z[j] = s[i] * weights[i];
                    }
                    out.push(z);
                }
            });
            tag(dedup(out))
        }
        Kd { k, d: 1 } => {
            guard(2f64.powi(p as i32) + 2.0 * p as f64)?;
            let sk = (*k as f64).sqrt();
            let mut out: Vec<Vec<f64>> = (0..p).flat_map(|i| [unit(i, sk), unit(i, -sk)]).collect();
            out.extend(sign_vectors(p).map(|s| s.iter().map(|v| v / sk).collect()));
            tag(dedup(out))
        }
        KdDual { k, d: 1 } => {
            guard(crate::vecnorms::binomial(p, *k) * 2f64.powi(*k as i32))?;
            let sk = (*k as f64).sqrt();
            let mut out = Vec::new();
            for supp in Combinations::new(p, *k) {
                for s in sign_vectors(*k) {
                    let mut z = vec![0.0; p];
                    for (&i, sv) in supp.iter().zip(&s) {
                        z[i] = sv / sk;
                    }
                    out.push(z);
                }
            }
            tag(out)
        }
        MaxWeightedL1 { weight_family } => {
            guard(weight_family.len() as f64 * 2f64.powi(p as i32))?;
            let mut out: Vec<(Vec<f64>, usize)> = Vec::new();
            for (c, w) in weight_family.iter().enumerate() {
                'vertex: for s in sign_vectors(p) {
                    let z: Vec<f64> = s.iter().zip(w).map(|(s, w)| s * w).collect();
                    for (c2, w2) in weight_family.iter().enumerate() {
                        if c2 == c {
                            continue;
                        }
                        let inside = z.iter().zip(w2).all(|(a, b)| a.abs() <= *b);
                        let strictly = z.iter().zip(w2).any(|(a, b)| a.abs() < *b);
                        // dominated by another box, or a duplicate of an earlier vertex
                        if inside && (strictly || c2 < c) {
                            continue 'vertex;
                        }
                    }
                    out.push((z, c));
                }
            }
            out
        }
        other => {
            return Err(Error::Unsupported(format!("dual ball of {other:?} is not an enumerable polytope")));
        }
    })
}

fn permutations(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permutations(v, i + 1, f);
        v.swap(i, j);
    }
}

/// Vertices of the subdifferential: the extreme points of `B*` exposed by `beta`.
pub fn subdiff_vertices(ext: &[Vec<f64>], beta: &[f64], norm_value: f64) -> Vec<Vec<f64>> {
    let tol = 1e-10 * norm_value.abs().max(1e-300);
    ext.iter()
        .filter(|z| dot(z, beta) >= norm_value - tol)
        .cloned()
        .collect()
}

/// `max_{z in ext B*} dist(z, subdiff ||beta||)` over explicit extreme points.
pub fn varphi_numeric(
    norm: &NormDescriptor,
    beta: &[f64],
    extreme_points: Option<&[Vec<f64>]>,
) -> Result<RelDiamReport> {
    nonzero(beta)?;
    norm.validate(beta.len())?;
    if matches!(norm, NormDescriptor::L2) && extreme_points.is_none() {
        // subdifferential is the single point g = beta/||beta||; the farthest
        // point of the unit sphere from it is -g
        let g: Vec<f64> = beta.iter().map(|b| b / norm2(beta)).collect();
        let z: Vec<f64> = g.iter().map(|v| -v).collect();
        let value = norm2(&crate::linalg::sub(&z, &g));
        return Ok(RelDiamReport {
            value,
            method: RelDiamMethod::Numeric,
            achieving_z: Some(z),
            achieving_index: None,
            formula_id: "max-ext".into(),
            is_upper_bound: false,
            relaxed_bound: None,
        });
    }
    let owned;
    let ext: &[Vec<f64>] = match extreme_points {
        Some(e) => e,
        None => {
            owned = dual_ball_extreme_points(norm, beta.len())?
                .into_iter()
                .map(|(z, _)| z)
                .collect::<Vec<_>>();
            &owned
        }
    };
    let nv = eval_norm(norm, beta)?;
    let face = subdiff_vertices(ext, beta, nv);
    if face.is_empty() {
        return Err(Error::Assertion("no extreme point attains the norm value".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, z) in ext.iter().enumerate() {
        let d = dist_to_hull(z, &face).distance;
        if d > best.0 * (1.0 + 1e-12) + 1e-15 {
            best = (d, i);
        }
    }
    Ok(RelDiamReport {
        value: best.0,
        method: RelDiamMethod::Numeric,
        achieving_z: Some(ext[best.1].clone()),
        achieving_index: Some(best.1),
        formula_id: "max-ext".into(),
        is_upper_bound: false,
        relaxed_bound: None,
    })
}

/// `2 dist(0, subdiff)` and whether the projection of 0 onto the affine
/// hull of the subdifferential lies in it (when the lower bound applies).
pub fn subdiff_origin_distance(face: &[Vec<f64>]) -> (f64, bool) {
    let np = crate::polytope::min_norm_point(face, 1e-15);
    // the minimum-norm point is interior to its face exactly when it is the
    // affine projection; check it against the full affine hull by testing
    // orthogonality to all edge directions
    let x = &np.point;
    let base = &face[0];
    let inner = face.iter().all(|f| {
        let e = crate::linalg::sub(f, base);
        dot(x, &e).abs() <= 1e-10 * (1.0 + norm2(&e))
    });
    (np.distance, inner)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub value: f64,
    /// False only for the 2-D angular search; random directions certify a
    /// lower bound.
    pub lower_bound_only: bool,
    pub direction: Vec<f64>,
    pub directions_tried: usize,
}

/// Support function of the subdifferential at `u` (the directional
/// derivative of the norm at `beta`).
fn subdiff_support(norm: &NormDescriptor, beta: &[f64], face: &Option<Vec<Vec<f64>>>, u: &[f64]) -> f64 {
    match face {
        Some(f) => f.iter().map(|g| dot(g, u)).fold(f64::NEG_INFINITY, f64::max),
        None => {
            // smooth case (l2)
            let _ = norm;
            dot(beta, u) / norm2(beta)
        }
    }
}

/// Lower-bounding estimate of `psi(Xi^(q)) = sup ||u|| / ||u||_2` over
/// directions `u` with `sigma_subdiff(u) <= ||u|| / q` (`q = inf`: `<= 0`).
/// In two dimensions an angular grid with bisection at every feasibility
/// switch is used; otherwise `n_dirs` Gaussian directions.
pub fn psi_estimate(norm: &NormDescriptor, beta: &[f64], q: f64, n_dirs: usize, seed: u64) -> Result<PsiEstimate> {
    nonzero(beta)?;
    norm.validate(beta.len())?;
    if !(q > 1.0) {
        return Err(Error::InvalidParameter("q must exceed 1".into()));
    }
    let p = beta.len();
    let face = if matches!(norm, NormDescriptor::L2) {
        None
    } else {
        let ext: Vec<Vec<f64>> = dual_ball_extreme_points(norm, p)?.into_iter().map(|(z, _)| z).collect();
        let nv = eval_norm(norm, beta)?;
        Some(subdiff_vertices(&ext, beta, nv))
    };
    let inv_q = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let ratio = |u: &[f64]| -> Result<(f64, bool)> {
        let nu = eval_norm(norm, u)?;
        let s = subdiff_support(norm, beta, &face, u);
        Ok((nu, s <= nu * inv_q + 1e-13 * nu.max(1.0)))
    };
    let mut best = (0.0f64, vec![0.0; p]);
    if p == 2 {
        let m = n_dirs.max(16);
        let dir = |a: f64| vec![a.cos(), a.sin()];
        let step = std::f64::consts::TAU / m as f64;
        let mut prev = ratio(&dir(0.0))?;
        let consider = |r: f64, u: Vec<f64>, best: &mut (f64, Vec<f64>)| {
            if r > best.0 {
                *best = (r, u);
            }
        };
        if prev.1 {
            consider(prev.0, dir(0.0), &mut best);
        }
        for i in 1..=m {
            let a = i as f64 * step;
            let cur = ratio(&dir(a))?;
            if cur.1 {
                consider(cur.0, dir(a), &mut best);
            }
            if cur.1 != prev.1 {
                // bisect the feasibility switch between a - step and a
                let (mut lo, mut hi) = if prev.1 { (a - step, a) } else { (a, a - step) };
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if ratio(&dir(mid))?.1 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let r = ratio(&dir(lo))?;
                if r.1 {
                    consider(r.0, dir(lo), &mut best);
                }
            }
            prev = cur;
        }
        Ok(PsiEstimate {
            value: best.0,
            lower_bound_only: false,
            direction: best.1,
            directions_tried: m,
        })
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_dirs {
            let mut u: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = norm2(&u);
            u.iter_mut().for_each(|v| *v /= n);
            let (r, ok) = ratio(&u)?;
            if ok && r > best.0 {
                best = (r, u);
            }
        }
        Ok(PsiEstimate {
            value: best.0,
            lower_bound_only: true,
            direction: best.1,
            directions_tried: n_dirs,
        })
    }
}

/// The cone `C(phi) = { v : ||v|| <= factor * phi * ||v||_2 }`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub phi: f64,
    /// 2 for the error set Xi, q/(q-1) for Xi^(q).
    pub factor: f64,
}

pub fn cone_membership(v: &[f64], spec: &ConeSpec, norm: &NormDescriptor) -> Result<bool> {
    Ok(eval_norm(norm, v)? <= spec.factor * spec.phi * norm2(v) + 1e-10)
}

/// `0.5 ||v|| + ||b*|| >= ||b* + v||` (to `tol`), the regularized error set.
pub fn in_error_set(v: &[f64], beta_star: &[f64], norm: &NormDescriptor, q: f64, tol: f64) -> Result<bool> {
    let shifted: Vec<f64> = beta_star.iter().zip(v).map(|(a, b)| a + b).collect();
    let lhs = eval_norm(norm, v)? / q + eval_norm(norm, beta_star)?;
    Ok(lhs >= eval_norm(norm, &shifted)? - tol)
}
