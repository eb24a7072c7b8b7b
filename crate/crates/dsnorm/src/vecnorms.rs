//! Closed-form norms, their duals, subdifferentials, and the sort/sign
//! bookkeeping shared by the rest of the crate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::kdnorm;
use crate::linalg::{dot, norm2};

/// Absolute tolerance used for set-membership decisions on normalized inputs.
pub const TIE_TOL: f64 = 1e-12;

/// Tagged description of a norm on R^p.
///
/// Serializes as e.g. `{"kind":"kd","k":3,"d":2}` or
/// `{"kind":"owl","weights":[1.0,0.5]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormDescriptor {
    L1,
    L2,
    Linf,
    /// `sum_i w_i |b_i|`
    WeightedL1 { weights: Vec<f64> },
    /// `max_i |b_i| / w_i`
    WeightedLinf { weights: Vec<f64> },
    /// Ordered weighted l1, `sum_i w_i |b|_(i)` with non-increasing weights.
    Owl { weights: Vec<f64> },
    KSupport { k: usize },
    /// The doubly-sparse norm: gauge of conv(S_{k,d} on the unit sphere).
    Kd { k: usize, d: usize },
    /// The dual of the doubly-sparse norm, used as a regularizer.
    KdDual { k: usize, d: usize },
    /// `max_i sum_j w_ij |b_j|`
    MaxWeightedL1 { weight_family: Vec<Vec<f64>> },
    /// Non-overlapping group lasso, `sum_g ||b_g||_2`.
    GroupL1 { groups: Vec<Vec<usize>> },
}

impl NormDescriptor {
    /// Check the descriptor against the ambient dimension `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        use NormDescriptor::*;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self {
            L1 | L2 | Linf => Ok(()),
            WeightedL1 { weights } | WeightedLinf { weights } => {
                check_dim(p, weights.len())?;
                if weights.iter().all(|w| w.is_finite() && *w > 0.0) {
                    Ok(())
                } else {
                    bad("weighted norm weights must be strictly positive")
                }
            }
            Owl { weights } => {
                check_dim(p, weights.len())?;
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return bad("OWL weights must be nonnegative");
                }
                if weights.windows(2).any(|w| w[0] < w[1]) {
                    return bad("OWL weights must be non-increasing");
                }
                if weights.first().copied().unwrap_or(0.0) <= 0.0 {
                    return bad("OWL requires w_1 > 0");
                }
                Ok(())
            }
            KSupport { k } => check_kd(*k, *k, p),
            Kd { k, d } | KdDual { k, d } => check_kd(*k, *d, p),
            MaxWeightedL1 { weight_family } => {
                if weight_family.is_empty() {
                    return bad("max-of-weighted-l1 needs at least one weight vector");
                }
                for w in weight_family {
                    check_dim(p, w.len())?;
                    if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                        return bad("max-of-weighted-l1 weights must be strictly positive");
                    }
                }
                Ok(())
            }
            GroupL1 { groups } => {
                let mut seen = vec![false; p];
                for g in groups {
                    for &i in g {
                        if i >= p || seen[i] {
                            return bad("groups must be disjoint indices below p");
                        }
                        seen[i] = true;
                    }
                }
                if seen.iter().all(|&s| s) {
                    Ok(())
                } else {
                    bad("groups must cover every coordinate")
                }
            }
        }
    }

    /// The dual norm, when it is itself in the catalog.
    pub fn dual(&self) -> Option<NormDescriptor> {
        use NormDescriptor::*;
        match self {
            L1 => Some(Linf),
            Linf => Some(L1),
            L2 => Some(L2),
            WeightedL1 { weights } => Some(WeightedLinf { weights: weights.clone() }),
            WeightedLinf { weights } => Some(WeightedL1 { weights: weights.clone() }),
            Kd { k, d } => Some(KdDual { k: *k, d: *d }),
            KdDual { k, d } => Some(Kd { k: *k, d: *d }),
            _ => None,
        }
    }
}

fn check_kd(k: usize, d: usize, p: usize) -> Result<()> {
    if 1 <= d && d <= k && k <= p {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "need 1 <= d <= k <= p, got k={k}, d={d}, p={p}"
        )))
    }
}

/// Signs, sorting permutation and sorted magnitudes of a vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SortContext {
    /// `+1` or `-1` per original coordinate; `sign(0) = +1`.
    pub sign_pattern: Vec<f64>,
    /// `permutation[r]` is the original index of the r-th largest magnitude.
    pub permutation: Vec<usize>,
    pub sorted_abs: Vec<f64>,
}

impl SortContext {
    /// Place sorted-order values back into original order, applying signs.
    pub fn restore(&self, sorted_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.permutation.len()];
        for (r, &i) in self.permutation.iter().enumerate() {
            out[i] = self.sign_pattern[i] * sorted_values[r];
        }
        out
    }

    /// Position of every original index in the sorted order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.permutation.len()];
        for (r, &i) in self.permutation.iter().enumerate() {
            rank[i] = r;
        }
        rank
    }
}

/// Sort |b| descending; ties go to the lower original index.
pub fn sort_context(beta: &[f64]) -> SortContext {
    let sign_pattern: Vec<f64> = beta
        .iter()
        .map(|&b| if b < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let mut permutation: Vec<usize> = (0..beta.len()).collect();
    // stable sort keeps ascending index order among equal magnitudes
    permutation.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()));
    let sorted_abs = permutation.iter().map(|&i| beta[i].abs()).collect();
    SortContext {
        sign_pattern,
        permutation,
        sorted_abs,
    }
}

pub(crate) fn sorted_abs(v: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    a
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn owl_norm(w: &[f64], beta: &[f64]) -> f64 {
    sorted_abs(beta).iter().zip(w).map(|(b, w)| b * w).sum()
}

fn owl_dual(w: &[f64], z: &[f64]) -> f64 {
    let zs = sorted_abs(z);
    let (mut sz, mut sw, mut best) = (0.0, 0.0, 0.0f64);
    for (zi, wi) in zs.iter().zip(w) {
        sz += zi;
        sw += wi;
        best = best.max(sz / sw);
    }
    best
}

/// Dual of a max of weighted l1 norms: the LP `max <|theta|, z>` over
/// `{z >= 0 : <w_i, z> <= 1}`, solved by vertex enumeration.
fn max_weighted_l1_dual(family: &[Vec<f64>], theta: &[f64]) -> Result<f64> {
    let p = theta.len();
    let a: Vec<f64> = theta.iter().map(|x| x.abs()).collect();
    let vertices = max_weighted_l1_primal_vertices(family, p)?;
    Ok(vertices
        .iter()
        .map(|z| dot(&a, z))
        .fold(0.0, f64::max))
}

/// Vertices of `{z >= 0 : <w_i, z> <= 1 for all i}`.
pub(crate) fn max_weighted_l1_primal_vertices(
    family: &[Vec<f64>],
    p: usize,
) -> Result<Vec<Vec<f64>>> {
    // rows: p nonnegativity constraints then one row per weight vector
    let m = family.len();
    let total = p + m;
    let count = binomial(total, p);
    if count > 1_000_000.0 {
        return Err(Error::GuardExceeded(format!(
            "{count} candidate vertices for the max-of-weighted-l1 dual"
        )));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for active in crate::combin::Combinations::new(total, p) {
        let mut mat = nalgebra::DMatrix::<f64>::zeros(p, p);
        let mut rhs = nalgebra::DVector::<f64>::zeros(p);
        for (r, &c) in active.iter().enumerate() {
            if c < p {
                mat[(r, c)] = 1.0;
            } else {
                for j in 0..p {
                    mat[(r, j)] = family[c - p][j];
                }
                rhs[r] = 1.0;
            }
        }
        let Some(z) = mat.lu().solve(&rhs) else {
            continue;
        };
        let z: Vec<f64> = z.iter().copied().collect();
        if z.iter().any(|x| !x.is_finite() || *x < -1e-12) {
            continue;
        }
        if family.iter().any(|w| dot(w, &z) > 1.0 + 1e-12) {
            continue;
        }
        let z: Vec<f64> = z.iter().map(|x| x.max(0.0)).collect();
        if !out.iter().any(|v| crate::linalg::dist2(v, &z) < 1e-12) {
            out.push(z);
        }
    }
    Ok(out)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Norm value. KD kinds go through the kdnorm engine (closed forms at
/// `d = 1` and `d = k`).
pub fn eval_norm(norm: &NormDescriptor, beta: &[f64]) -> Result<f64> {
    use NormDescriptor::*;
    check_finite(beta)?;
    norm.validate(beta.len())?;
    Ok(match norm {
        L1 => l1(beta),
        L2 => norm2(beta),
        Linf => linf(beta),
        WeightedL1 { weights } => beta.iter().zip(weights).map(|(b, w)| w * b.abs()).sum(),
        WeightedLinf { weights } => beta
            .iter()
            .zip(weights)
            .fold(0.0, |m, (b, w)| m.max(b.abs() / w)),
        Owl { weights } => owl_norm(weights, beta),
        KSupport { k } => kdnorm::ksupport_norm(beta, *k)?,
        Kd { k, d } => {
            if *d == 1 {
                kdnorm::norm_k1(beta, *k)
            } else if d == k {
                kdnorm::ksupport_norm(beta, *k)?
            } else {
                kdnorm::eval_norm_kd(beta, *k, *d, 1e-10)?.value
            }
        }
        KdDual { k, d } => kdnorm::dual_norm_kd(beta, *k, *d)?,
        MaxWeightedL1 { weight_family } => weight_family
            .iter()
            .map(|w| beta.iter().zip(w).map(|(b, w)| w * b.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        GroupL1 { groups } => groups
            .iter()
            .map(|g| g.iter().map(|&i| beta[i] * beta[i]).sum::<f64>().sqrt())
            .sum(),
    })
}

/// Dual norm value.
pub fn eval_dual_norm(norm: &NormDescriptor, theta: &[f64]) -> Result<f64> {
    use NormDescriptor::*;
    check_finite(theta)?;
    norm.validate(theta.len())?;
    match norm {
        WeightedL1 { .. } | WeightedLinf { .. } | L1 | L2 | Linf => {
            eval_norm(&norm.dual().expect("closed under duality"), theta)
        }
        Owl { weights } => Ok(owl_dual(weights, theta)),
        KSupport { k } => kdnorm::dual_norm_kd(theta, *k, *k),
        Kd { k, d } => kdnorm::dual_norm_kd(theta, *k, *d),
        KdDual { k, d } => eval_norm(&Kd { k: *k, d: *d }, theta),
        MaxWeightedL1 { weight_family } => max_weighted_l1_dual(weight_family, theta),
        GroupL1 { groups } => Ok(groups
            .iter()
            .map(|g| g.iter().map(|&i| theta[i] * theta[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)),
    }
}

/// `sum_{i in indices} weights_i |g_i|` compared to `bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSum {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub bound: f64,
    /// `true`: the sum equals `bound`; `false`: at most `bound`.
    pub equality: bool,
}

/// Explicit description of a subdifferential of a closed-form norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdiffDescription {
    pub fixed_coords: BTreeMap<usize, f64>,
    pub box_coords: BTreeMap<usize, f64>,
    pub group_sum_constraints: Vec<GroupSum>,
    /// `g_i * beta_i >= 0` for all i.
    pub sign_coupling: bool,
    /// `|beta_i| > |beta_j|` implies `|g_i| >= |g_j|`.
    pub order_coupling: bool,
    /// Prefix caps on the sorted magnitudes of g (OWL dual-ball condition).
    pub prefix_caps: Option<Vec<f64>>,
    /// The point the subdifferential was taken at.
    pub beta: Vec<f64>,
}

impl SubdiffDescription {
    pub fn contains(&self, g: &[f64], tol: f64) -> bool {
        if g.len() != self.beta.len() {
            return false;
        }
        for (&i, &v) in &self.fixed_coords {
            if (g[i] - v).abs() > tol {
                return false;
            }
        }
        for (&i, &b) in &self.box_coords {
            if g[i].abs() > b + tol {
                return false;
            }
        }
        for c in &self.group_sum_constraints {
            let s: f64 = c
                .indices
                .iter()
                .zip(&c.weights)
                .map(|(&i, w)| w * g[i].abs())
                .sum();
            if s > c.bound + tol || (c.equality && s < c.bound - tol) {
                return false;
            }
        }
        if self.sign_coupling && g.iter().zip(&self.beta).any(|(g, b)| g * b < -tol) {
            return false;
        }
        if self.order_coupling {
            let p = g.len();
            for i in 0..p {
                for j in 0..p {
                    if self.beta[i].abs() > self.beta[j].abs() && g[i].abs() < g[j].abs() - tol {
                        return false;
                    }
                }
            }
        }
        if let Some(caps) = &self.prefix_caps {
            let gs = sorted_abs(g);
            let mut s = 0.0;
            for (gi, cap) in gs.iter().zip(caps) {
                s += gi;
                if s > cap + tol {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Subdifferential {
    /// At `beta = 0` the subdifferential is the whole dual unit ball.
    FullBall,
    Described(SubdiffDescription),
}

fn empty_description(beta: &[f64]) -> SubdiffDescription {
    SubdiffDescription {
        fixed_coords: BTreeMap::new(),
        box_coords: BTreeMap::new(),
        group_sum_constraints: Vec::new(),
        sign_coupling: false,
        order_coupling: false,
        prefix_caps: None,
        beta: beta.to_vec(),
    }
}

/// Indices attaining `max_i r_i` within `TIE_TOL` after normalizing by the max.
pub(crate) fn argmax_set(r: &[f64]) -> Vec<usize> {
    let m = r.iter().fold(0.0f64, |m, x| m.max(*x));
    (0..r.len())
        .filter(|&i| m > 0.0 && (r[i] / m - 1.0).abs() <= TIE_TOL)
        .collect()
}

/// Groups of equal nonzero magnitudes (in sorted order) plus the zero block.
pub(crate) fn magnitude_groups(ctx: &SortContext) -> (Vec<Vec<usize>>, Vec<usize>) {
    let scale = ctx.sorted_abs.first().copied().unwrap_or(0.0);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut zeros = Vec::new();
    for (r, &a) in ctx.sorted_abs.iter().enumerate() {
        if scale == 0.0 || a / scale <= TIE_TOL {
            zeros.push(r);
            continue;
        }
        match groups.last_mut() {
            Some(g) if (ctx.sorted_abs[g[0]] - a) / scale <= TIE_TOL => g.push(r),
            _ => groups.push(vec![r]),
        }
    }
    (groups, zeros)
}

/// Subdifferential description for L1, L2, Linf, weighted l1/linf and OWL.
pub fn subdifferential(norm: &NormDescriptor, beta: &[f64]) -> Result<Subdifferential> {
    use NormDescriptor::*;
    check_finite(beta)?;
    norm.validate(beta.len())?;
    let scale = linf(beta);
    if scale == 0.0 {
        return Ok(Subdifferential::FullBall);
    }
    let p = beta.len();
    let nonzero = |i: usize| beta[i].abs() / scale > TIE_TOL;
    let sgn = |i: usize| beta[i].signum();
    let mut s = empty_description(beta);
    match norm {
        L1 | WeightedL1 { .. } => {
            let w = |i: usize| match norm {
                WeightedL1 { weights } => weights[i],
                _ => 1.0,
            };
            for i in 0..p {
                if nonzero(i) {
                    s.fixed_coords.insert(i, w(i) * sgn(i));
                } else {
                    s.box_coords.insert(i, w(i));
                }
            }
        }
        L2 => {
            let n = norm2(beta);
            for i in 0..p {
                s.fixed_coords.insert(i, beta[i] / n);
            }
        }
        Linf | WeightedLinf { .. } => {
            let w: Vec<f64> = match norm {
                WeightedLinf { weights } => weights.clone(),
                _ => vec![1.0; p],
            };
            let r: Vec<f64> = (0..p).map(|i| beta[i].abs() / w[i]).collect();
            let t = argmax_set(&r);
            for i in 0..p {
                if !t.contains(&i) {
                    s.fixed_coords.insert(i, 0.0);
                }
            }
            s.group_sum_constraints.push(GroupSum {
                weights: t.iter().map(|&i| w[i]).collect(),
                indices: t,
                bound: 1.0,
                equality: true,
            });
            s.sign_coupling = true;
        }
        Owl { weights } => {
            let ctx = sort_context(beta);
            let (groups, zeros) = magnitude_groups(&ctx);
            for g in &groups {
                s.group_sum_constraints.push(GroupSum {
                    indices: g.iter().map(|&r| ctx.permutation[r]).collect(),
                    weights: vec![1.0; g.len()],
                    bound: g.iter().map(|&r| weights[r]).sum(),
                    equality: true,
                });
            }
            if !zeros.is_empty() {
                s.group_sum_constraints.push(GroupSum {
                    indices: zeros.iter().map(|&r| ctx.permutation[r]).collect(),
                    weights: vec![1.0; zeros.len()],
                    bound: zeros.iter().map(|&r| weights[r]).sum(),
                    equality: false,
                });
            }
            let mut caps = Vec::with_capacity(p);
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                caps.push(acc);
            }
            s.prefix_caps = Some(caps);
            s.sign_coupling = true;
            s.order_coupling = true;
        }
        other => {
            return Err(Error::Unsupported(format!(
                "no closed-form subdifferential description for {other:?}"
            )))
        }
    }
    Ok(Subdifferential::Described(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_json_round_trip() {
        let n: NormDescriptor = serde_json::from_str(r#"{"kind":"kd","k":3,"d":2}"#).unwrap();
        assert_eq!(n, NormDescriptor::Kd { k: 3, d: 2 });
        let s = serde_json::to_string(&NormDescriptor::Owl { weights: vec![1.0, 0.5] }).unwrap();
        assert_eq!(s, r#"{"kind":"owl","weights":[1.0,0.5]}"#);
    }

    #[test]
    fn owl_validation() {
        let bad = NormDescriptor::Owl { weights: vec![0.5, 1.0] };
        assert!(bad.validate(2).is_err());
        let zero_lead = NormDescriptor::Owl { weights: vec![0.0, 0.0] };
        assert!(zero_lead.validate(2).is_err());
    }

    #[test]
    fn primal_vertices_of_single_box() {
        let v = max_weighted_l1_primal_vertices(&[vec![1.0, 2.0]], 2).unwrap();
        // {z >= 0 : z1 + 2 z2 <= 1}: (0,0), (1,0), (0,1/2)
        assert_eq!(v.len(), 3);
    }
}
