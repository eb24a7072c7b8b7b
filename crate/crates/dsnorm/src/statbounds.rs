//! Variational M-sets for squared dual norms, the Hanson-Wright aggregate
//! measures built on them, the doubly-sparse phi0/phi1/phi calculator and
//! the error-bound formulas.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::combin::Combinations;
use crate::error::{Error, Result};
use crate::geometry::{cone_membership, ConeSpec};
use crate::kdnorm::{bd_bound, bd_count, enumerate_bd, BD_GUARD};
use crate::linalg::{norm2, Matrix};
use crate::solvers::{NoiseCovariance, RegressionProblem};
use crate::vecnorms::{binomial, eval_dual_norm, NormDescriptor};

/// Default Hanson-Wright constant (any `c > 2` is admissible).
pub const DEFAULT_C_HW: f64 = 2.1;

/// One member `M = sum_j v_j v_j^T` of an M-set, stored by its sparse factor
/// columns `v_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MElement {
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl MElement {
    fn mask(indices: &[usize]) -> Self {
        MElement {
            columns: indices.iter().map(|&i| vec![(i, 1.0)]).collect(),
        }
    }

    fn dense_columns(cols: Vec<Vec<f64>>) -> Self {
        MElement {
            columns: cols
                .into_iter()
                .map(|c| c.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect())
                .collect(),
        }
    }

    /// `theta^T M theta`
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        self.columns
            .iter()
            .map(|c| {
                let s: f64 = c.iter().map(|&(i, v)| v * theta[i]).sum();
                s * s
            })
            .sum()
    }

    /// Eigenvalues of `V^T G V`, the nonzero spectrum of `G^{1/2} M G^{1/2}`.
    fn spectrum(&self, g: &DMatrix<f64>) -> Vec<f64> {
        let r = self.columns.len();
        let mut b = DMatrix::zeros(r, r);
        for a in 0..r {
            for c in a..r {
                let mut s = 0.0;
                for &(i, vi) in &self.columns[a] {
                    for &(j, vj) in &self.columns[c] {
                        s += vi * g[(i, j)] * vj;
                    }
                }
                b[(a, c)] = s;
                b[(c, a)] = s;
            }
        }
        SymmetricEigen::new(b).eigenvalues.iter().map(|&l| l.max(0.0)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MSetElements {
    Explicit { elements: Vec<MElement> },
    /// BD(k,d) streamed on demand.
    LazyBd { p: usize, k: usize, d: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MSet {
    pub norm: NormDescriptor,
    pub p: usize,
    pub elements: MSetElements,
    /// Number of distinct matrices in the family.
    pub cardinality: f64,
    /// Orbit representatives under signed permutations, where the family
    /// literature counts those.
    pub canonical_cardinality: f64,
    /// The analytic bound on the size.
    pub cardinality_bound: f64,
}

impl MSet {
    pub fn for_each(&self, mut f: impl FnMut(&MElement)) -> Result<()> {
        match &self.elements {
            MSetElements::Explicit { elements } => elements.iter().for_each(f),
            MSetElements::LazyBd { p, k, d } => {
                for e in enumerate_bd(*p, *k, *d)? {
                    f(&MElement::dense_columns(e.factor(*p)));
                }
            }
        }
        Ok(())
    }

    /// `max_M theta^T M theta`, the squared dual norm when the family is exact.
    pub fn max_quad_form(&self, theta: &[f64]) -> Result<f64> {
        let mut best = 0.0f64;
        self.for_each(|m| best = best.max(m.quad_form(theta)))?;
        Ok(best)
    }
}

/// M-set realizing `(||theta||*)^2 = max_M theta^T M theta` for the dual of
/// `norm` (group l1, k-support, k box d, and the dual of k box 1).
pub fn build_mset(norm: &NormDescriptor, p: usize) -> Result<MSet> {
    use NormDescriptor::*;
    norm.validate(p)?;
    let explicit = |elements: Vec<MElement>, canonical: f64, bound: f64| {
        let n = elements.len() as f64;
        MSet {
            norm: norm.clone(),
            p,
            elements: MSetElements::Explicit { elements },
            cardinality: n,
            canonical_cardinality: canonical,
            cardinality_bound: bound,
        }
    };
    Ok(match norm {
        GroupL1 { groups } => {
            let el: Vec<MElement> = groups.iter().map(|g| MElement::mask(g)).collect();
            let n = el.len() as f64;
            explicit(el, n, n)
        }
        L1 => build_mset(&KSupport { k: 1 }, p)?,
        KSupport { k } => {
            let c = binomial(p, *k);
            if c > BD_GUARD {
                return Err(Error::GuardExceeded(format!("C({p},{k}) = {c} masks")));
            }
            let el: Vec<MElement> = Combinations::new(p, *k).map(|j| MElement::mask(&j)).collect();
            explicit(el, 1.0, c)
        }
        Kd { k, d } if d == k => {
            let mut m = build_mset(&KSupport { k: *k }, p)?;
            m.norm = norm.clone();
            m
        }
        Kd { k, d } => {
            let count = bd_count(p, *k, *d);
            if count > BD_GUARD {
                return Err(Error::GuardExceeded(format!("|BD({k},{d})| = {count} at p={p}")));
            }
            MSet {
                norm: norm.clone(),
                p,
                elements: MSetElements::LazyBd { p, k: *k, d: *d },
                cardinality: count,
                canonical_cardinality: crate::combin::stirling2(*k, *d).min(count),
                cardinality_bound: bd_bound(p, *k, *d),
            }
        }
        KdDual { k, d: 1 } => {
            // (||.||_{k box 1})^2 = max{ k linf^2, l1^2 / k }
            if p > 20 {
                return Err(Error::GuardExceeded(format!("2^{} sign patterns", p - 1)));
            }
            let kf = *k as f64;
            let mut el: Vec<MElement> = (0..p)
                .map(|i| MElement {
                    columns: vec![vec![(i, kf.sqrt())]],
                })
                .collect();
            for mask in 0..1usize << (p - 1) {
                let col: Vec<(usize, f64)> = (0..p)
                    .map(|i| {
                        let neg = i > 0 && mask >> (i - 1) & 1 == 1;
                        (i, if neg { -1.0 } else { 1.0 } / kf.sqrt())
                    })
                    .collect();
                el.push(MElement { columns: vec![col] });
            }
            explicit(el, (p + 1) as f64, (p + 1) as f64)
        }
        other => return Err(Error::Unsupported(format!("no M-set builder for {other:?}"))),
    })
}

/// `G = X^T Sigma X / n = X~^T X~ / n` with `X~ = Sigma^{1/2} X`; checks
/// that `Sigma` is PSD.
pub fn whitened_gram(x: &Matrix, sigma: &NoiseCovariance) -> Result<DMatrix<f64>> {
    let n = x.rows;
    let xd = x.to_dmatrix();
    let s = sigma.to_dmatrix(n)?;
    let eig = SymmetricEigen::new(s.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) || (&s - s.transpose()).amax() > 1e-10 * scale {
        return Err(Error::InvalidParameter("noise covariance is not symmetric PSD".into()));
    }
    Ok(xd.transpose() * s * xd / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMeasures {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa: f64,
    /// `kappa` evaluated with the analytic cardinality bound.
    pub kappa_bound: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub c_hw: f64,
    pub p0: f64,
    pub eta: f64,
    pub cardinality: f64,
}

/// Lambda0/1/2, kappa and Lambda over the family.
pub fn aggregate_measures(
    x: &Matrix,
    sigma: &NoiseCovariance,
    mset: &MSet,
    eta: f64,
    p0: f64,
    c_hw: f64,
) -> Result<AggregateMeasures> {
    if !(p0 > 0.0 && p0 < 0.5) {
        return Err(Error::InvalidParameter("p0 must lie in (0, 1/2)".into()));
    }
    if !(c_hw > 2.0) {
        return Err(Error::InvalidParameter("Hanson-Wright constant must exceed 2".into()));
    }
    crate::error::check_dim(mset.p, x.cols)?;
    let n = x.rows as f64;
    let g = whitened_gram(x, sigma)?;
    let (mut l0, mut l1, mut l2) = (0.0f64, 0.0f64, 0.0f64);
    mset.for_each(|m| {
        let ev = m.spectrum(&g);
        l0 = l0.max(ev.iter().sum());
        l1 = l1.max(ev.iter().copied().fold(0.0, f64::max));
        l2 = l2.max(ev.iter().map(|v| v * v).sum::<f64>().sqrt());
    })?;
    let kappa = 0.5 * c_hw * (mset.cardinality / p0).ln();
    let kappa_bound = 0.5 * c_hw * (mset.cardinality_bound.max(mset.cardinality) / p0).ln();
    let inner = l0 + 2.0 * eta * eta * (l2 * kappa.sqrt()).max(l1 * kappa);
    Ok(AggregateMeasures {
        lambda0: l0,
        lambda1: l1,
        lambda2: l2,
        kappa,
        kappa_bound,
        big_lambda: (inner / n).sqrt(),
        c_hw,
        p0,
        eta,
        cardinality: mset.cardinality,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSearch {
    Exact,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdPhiMeasures {
    pub phi0: f64,
    pub phi1: f64,
    pub phi: f64,
    /// True when both suprema were enumerated.
    pub exact: bool,
    /// Spectral upper bounds (equal to the values in exact mode).
    pub phi0_upper: f64,
    pub phi1_upper: f64,
    /// `phi` evaluated at the upper bounds.
    pub phi_upper: f64,
}

/// `phi = n^{-1/2} (d phi0 + c min(d phi0, phi1) [k log(2epd/k) + log(1/p0)])^{1/2}`
pub fn kd_phi_formula(phi0: f64, phi1: f64, n: usize, p: usize, k: usize, d: usize, p0: f64, c_hw: f64) -> f64 {
    let (kf, df) = (k as f64, d as f64);
    let log_term = kf * (2.0 * std::f64::consts::E * p as f64 * df / kf).ln() + (1.0 / p0).ln();
    ((df * phi0 + c_hw * (df * phi0).min(phi1) * log_term) / n as f64).sqrt()
}

fn signed_block_value(g: &DMatrix<f64>, idx: &[usize], signs: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            s += signs[a] * signs[b] * g[(i, j)];
        }
    }
    s / idx.len() as f64
}

fn sub_lambda_max(g: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let m = DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])]);
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(0.0, f64::max)
}

/// phi0 (signed column aggregates over `|J| <= k-d+1`) and phi1 (restricted
/// operator norm over `|J| <= k`) of the whitened design. Signs enter phi0
/// because BD(k,d) carries them; for a nonnegatively correlated design they
/// change nothing.
pub fn kd_phi_measures(
    x: &Matrix,
    sigma: &NoiseCovariance,
    k: usize,
    d: usize,
    p0: f64,
    c_hw: f64,
    mode: SubsetSearch,
) -> Result<KdPhiMeasures> {
    let p = x.cols;
    if !(1 <= d && d <= k && k <= p) {
        return Err(Error::InvalidParameter(format!("need 1 <= d <= k <= p, got d={d} k={k} p={p}")));
    }
    let g = whitened_gram(x, sigma)?;
    let m0 = k - d + 1;
    let top = SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().fold(0.0, f64::max);
    let (phi0, phi1, exact) = match mode {
        SubsetSearch::Exact => {
            let count0: f64 = (1..=m0).map(|j| binomial(p, j) * 2f64.powi(j as i32 - 1)).sum();
            let count1 = binomial(p, k);
            if count0 > BD_GUARD || count1 > BD_GUARD {
                return Err(Error::GuardExceeded(format!("{count0} + {count1} subsets")));
            }
            let mut phi0 = 0.0f64;
            for j in 1..=m0 {
                for idx in Combinations::new(p, j) {
                    for mask in 0..1usize << (j - 1) {
                        let signs: Vec<f64> = (0..j)
                            .map(|r| if r > 0 && mask >> (r - 1) & 1 == 1 { -1.0 } else { 1.0 })
                            .collect();
                        phi0 = phi0.max(signed_block_value(&g, &idx, &signs));
                    }
                }
            }
            // the restricted operator norm is monotone in J
            let phi1 = Combinations::new(p, k).map(|idx| sub_lambda_max(&g, &idx)).fold(0.0, f64::max);
            (phi0, phi1, true)
        }
        SubsetSearch::Greedy => {
            // forward selection from the best single column
            let mut phi0 = 0.0f64;
            let mut idx: Vec<usize> = Vec::new();
            let mut signs: Vec<f64> = Vec::new();
            for _ in 0..m0 {
                let mut best: Option<(f64, usize, f64)> = None;
                for j in 0..p {
                    if idx.contains(&j) {
                        continue;
                    }
                    for s in [1.0, -1.0] {
                        idx.push(j);
                        signs.push(s);
                        let v = signed_block_value(&g, &idx, &signs);
                        idx.pop();
                        signs.pop();
                        if best.is_none_or(|b| v > b.0) {
                            best = Some((v, j, s));
                        }
                    }
                }
                let (v, j, s) = best.unwrap();
                idx.push(j);
                signs.push(s);
                phi0 = phi0.max(v);
            }
            let mut idx1: Vec<usize> = Vec::new();
            let mut phi1 = 0.0f64;
            for _ in 0..k {
                let mut best: Option<(f64, usize)> = None;
                for j in 0..p {
                    if idx1.contains(&j) {
                        continue;
                    }
                    idx1.push(j);
                    let v = sub_lambda_max(&g, &idx1);
                    idx1.pop();
                    if best.is_none_or(|b| v > b.0) {
                        best = Some((v, j));
                    }
                }
                let (v, j) = best.unwrap();
                idx1.push(j);
                phi1 = phi1.max(v);
            }
            (phi0, phi1, false)
        }
    };
    let n = x.rows;
    let (u0, u1) = if exact { (phi0, phi1) } else { (top, top) };
    Ok(KdPhiMeasures {
        phi0,
        phi1,
        phi: kd_phi_formula(phi0, phi1, n, p, k, d, p0, c_hw),
        exact,
        phi0_upper: u0,
        phi1_upper: u1,
        phi_upper: kd_phi_formula(u0, u1, n, p, k, d, p0, c_hw),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub lower: f64,
    /// Which calculator produced `lower` ("phi" or "Lambda").
    pub lower_source: String,
    /// `(1/n) ||X^T y||*`: any `lambda` at or above it gives zero.
    pub upper: f64,
}

/// Noise-level lower end of the lambda range: the doubly-sparse `phi` for
/// `l1` and `k box d` (exact subsets when cheap, else the spectral upper
/// bound), `Lambda` from the M-set otherwise. Returns the value and which
/// calculator produced it.
pub fn lambda_lower(
    x: &Matrix,
    norm: &NormDescriptor,
    sigma: &NoiseCovariance,
    p0: f64,
    c_hw: f64,
) -> Result<(f64, &'static str)> {
    let kd = match norm {
        NormDescriptor::L1 => Some((1, 1)),
        NormDescriptor::Kd { k, d } => Some((*k, *d)),
        _ => None,
    };
    match kd {
        Some((k, d)) => {
            let p = x.cols;
            let exact_cost = binomial(p, k) + (1..=k - d + 1).map(|j| binomial(p, j) * 2f64.powi(j as i32 - 1)).sum::<f64>();
            let mode = if exact_cost <= 1e5 { SubsetSearch::Exact } else { SubsetSearch::Greedy };
            let m = kd_phi_measures(x, sigma, k, d, p0, c_hw, mode)?;
            Ok((if m.exact { m.phi } else { m.phi_upper }, "phi"))
        }
        None => {
            let mset = build_mset(norm, x.cols)?;
            Ok((aggregate_measures(x, sigma, &mset, 1.0, p0, c_hw)?.big_lambda, "Lambda"))
        }
    }
}

/// Endpoints of the recommended lambda grid.
pub fn lambda_bounds(
    problem: &RegressionProblem,
    norm: &NormDescriptor,
    sigma: &NoiseCovariance,
    p0: f64,
    c_hw: f64,
) -> Result<LambdaBounds> {
    let upper = eval_dual_norm(norm, &problem.correlation())?;
    let (lower, src) = lambda_lower(&problem.x, norm, sigma, p0, c_hw)?;
    Ok(LambdaBounds {
        lower,
        lower_source: src.into(),
        upper,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundInput {
    pub lambda: f64,
    /// `||beta*||` in the regularizer norm.
    pub norm_beta_star: f64,
    pub phi: f64,
    /// Restricted-eigenvalue constant.
    pub alpha: f64,
    /// Measured `||(1/n) X^T eps||*`, enabling the refined bounds.
    pub theta: Option<f64>,
    pub k: usize,
    pub p: usize,
    /// The unnamed constant of the RE sample-size condition.
    pub re_constant: f64,
    pub lambda_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedBounds {
    pub prediction: f64,
    pub estimation_norm: f64,
    pub estimation_l2: f64,
    pub re_sample_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    /// `3 lambda ||beta*||`
    pub prediction: f64,
    /// `psi <= 2 phi`
    pub psi_surrogate: f64,
    /// `3 lambda psi^2 / alpha`
    pub estimation_norm: f64,
    /// `3 lambda psi / alpha`
    pub estimation_l2: f64,
    pub refined: Option<RefinedBounds>,
    /// `C lambda_min^{-2} phi^4 k log p`
    pub re_sample_size: f64,
}

pub fn error_bound_report(inp: &ErrorBoundInput) -> Result<ErrorBoundReport> {
    if !(inp.alpha > 0.0) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    let (l, a, phi) = (inp.lambda, inp.alpha, inp.phi);
    let psi = 2.0 * phi;
    let logp = (inp.p as f64).ln();
    let kf = inp.k as f64;
    let re = inp.re_constant * phi.powi(4) * kf * logp / (inp.lambda_min * inp.lambda_min);
    let refined = match inp.theta {
        None => None,
        Some(t) if l > t => Some(RefinedBounds {
            prediction: 2.0 * (l + t) * inp.norm_beta_star,
            estimation_norm: 2.0 * l * l * (l + t) / ((l - t) * (l - t)) * phi * phi / a,
            estimation_l2: 2.0 * l * (l + t) / (l - t) * phi / a,
            re_sample_size: 36.0 * inp.re_constant.powi(2) * kf * logp * phi.powi(4)
                / (inp.lambda_min * inp.lambda_min)
                * (l / (l - t)).powi(4),
        }),
        Some(_) => return Err(Error::InvalidParameter("refined bounds need lambda > theta".into())),
    };
    Ok(ErrorBoundReport {
        prediction: 3.0 * l * inp.norm_beta_star,
        psi_surrogate: psi,
        estimation_norm: 3.0 * l * psi * psi / a,
        estimation_l2: 3.0 * l * psi / a,
        refined,
        re_sample_size: re,
    })
}

/// `C sqrt(k - k log(k/d) / log p) * ||b*||_{k box d} / ||b*||_1`
pub fn gain_ratio_bound(c: f64, k: usize, d: usize, p: usize, norm_kd: f64, norm_l1: f64) -> f64 {
    let kf = k as f64;
    c * (kf - kf * (kf / d as f64).ln() / (p as f64).ln()).max(0.0).sqrt() * norm_kd / norm_l1
}

/// Smallest `||X u||^2 / (n ||u||^2)` over sampled directions of the cone.
/// A sampled minimum can only overestimate the infimum, so this is an
/// estimate rather than a certified restricted-eigenvalue constant. Samples
/// are drawn around `center` (typically `beta*`) so that they land in the
/// cone; returns `None` when none does.
pub fn re_constant_estimate(
    x: &Matrix,
    cone: &ConeSpec,
    norm: &NormDescriptor,
    center: &[f64],
    n_dirs: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = x.cols;
    let n = x.rows as f64;
    let support: Vec<usize> = (0..p).filter(|&i| center[i] != 0.0).collect();
    let mut best: Option<f64> = None;
    for t in 0..n_dirs {
        // alternate dense directions with support-concentrated ones
        let u: Vec<f64> = (0..p)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if t % 2 == 1 || support.is_empty() || support.contains(&i) {
                    z
                } else {
                    0.05 * z
                }
            })
            .collect();
        if !cone_membership(&u, cone, norm)? {
            continue;
        }
        let xu = x.mul_vec(&u);
        let q = crate::linalg::dot(&xu, &xu) / (n * norm2(&u).powi(2));
        best = Some(best.map_or(q, |b: f64| b.min(q)));
    }
    Ok(best)
}
