//! Nearest points in polytopes given by vertex lists, plus the closed forms
//! for (weighted) simplices.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{dot, norm2};

#[derive(Clone, Debug, PartialEq)]
pub struct NearestPoint {
    pub point: Vec<f64>,
    /// Convex weights over the input points (zero outside the active set).
    pub weights: Vec<f64>,
    pub distance: f64,
}

/// Affine minimizer of `||sum_i a_i q_i||` subject to `sum a_i = 1`.
fn affine_minimizer(q: &[&[f64]]) -> Option<Vec<f64>> {
    let m = q.len();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut b = DVector::zeros(m + 1);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = dot(q[i], q[j]);
        }
        a[(i, m)] = 1.0;
        a[(m, i)] = 1.0;
    }
    b[m] = 1.0;
    let sol = a.lu().solve(&b)?;
    let w: Vec<f64> = sol.iter().take(m).copied().collect();
    if w.iter().all(|v| v.is_finite()) {
        Some(w)
    } else {
        None
    }
}

/// Minimum-norm point of `conv(points)` by Wolfe's algorithm.
///
/// Terminates when `||x||^2 - min_j <x, p_j> <= tol * max_j ||p_j||^2`.
pub fn min_norm_point(points: &[Vec<f64>], tol: f64) -> NearestPoint {
    assert!(!points.is_empty(), "min_norm_point needs at least one point");
    let dim = points[0].len();
    let scale = points.iter().map(|p| dot(p, p)).fold(0.0f64, f64::max).max(1e-300);
    let start = (0..points.len())
        .min_by(|&a, &b| dot(&points[a], &points[a]).total_cmp(&dot(&points[b], &points[b])))
        .unwrap();
    let mut active = vec![start];
    let mut lam = vec![1.0];
    let combine = |active: &[usize], lam: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for (&i, &l) in active.iter().zip(lam) {
            for (xv, pv) in x.iter_mut().zip(&points[i]) {
                *xv += l * pv;
            }
        }
        x
    };
    for _major in 0..10_000 {
        let x = combine(&active, &lam);
        let xx = dot(&x, &x);
        let (j, best) = (0..points.len())
            .map(|j| (j, dot(&x, &points[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - best <= tol * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        lam.push(0.0);
        loop {
            let q: Vec<&[f64]> = active.iter().map(|&i| points[i].as_slice()).collect();
            let Some(alpha) = affine_minimizer(&q) else {
                // affinely dependent set: drop the newest point and stop
                active.pop();
                lam.pop();
                break;
            };
            if alpha.iter().all(|&a| a > 1e-15) {
                lam = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (&l, &a) in lam.iter().zip(&alpha) {
                if a <= 1e-15 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lam.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut keep_i = Vec::new();
            let mut keep_l = Vec::new();
            for (&i, &l) in active.iter().zip(&lam) {
                if l > 1e-15 {
                    keep_i.push(i);
                    keep_l.push(l);
                }
            }
            if keep_i.is_empty() {
                keep_i.push(active[0]);
                keep_l.push(1.0);
            }
            let s: f64 = keep_l.iter().sum();
            active = keep_i;
            lam = keep_l.iter().map(|l| l / s).collect();
        }
    }
    let x = combine(&active, &lam);
    let mut weights = vec![0.0; points.len()];
    for (&i, &l) in active.iter().zip(&lam) {
        weights[i] += l;
    }
    NearestPoint {
        distance: norm2(&x),
        point: x,
        weights,
    }
}

/// Euclidean distance from `z` to `conv(points)`.
pub fn dist_to_hull(z: &[f64], points: &[Vec<f64>]) -> NearestPoint {
    let shifted: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(z).map(|(a, b)| a - b).collect())
        .collect();
    let mut np = min_norm_point(&shifted, 1e-15);
    for (v, zi) in np.point.iter_mut().zip(z) {
        *v += zi;
    }
    np
}

/// `dist^2(-e_i, simplex_p) = 1 + 1/max{p-1, 1/3}`.
pub fn dist2_neg_ei_simplex(p: usize) -> f64 {
    1.0 + 1.0 / ((p as f64 - 1.0).max(1.0 / 3.0))
}

/// `dist^2(-e_i/w_i, {u >= 0 : <w,u> = 1})`.
pub fn dist2_neg_ei_weighted_simplex(w: &[f64], i: usize) -> f64 {
    let wi2 = w[i] * w[i];
    let w2 = dot(w, w);
    if w.len() == 1 {
        4.0 / wi2
    } else if 2.0 * wi2 <= w2 {
        1.0 / wi2 + 1.0 / (w2 - wi2)
    } else {
        4.0 / w2
    }
}

/// `min { ||u||^2 : <w,u> = 1, u >= 0 } = 1/||w||^2`, attained at `w/||w||^2`.
pub fn min_norm_weighted_simplex(w: &[f64]) -> (f64, Vec<f64>) {
    let w2 = dot(w, w);
    (1.0 / w2, w.iter().map(|v| v / w2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance() {
        let pts = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let np = min_norm_point(&pts, 1e-15);
        assert!((np.distance - 1.0).abs() < 1e-12);
        assert!((np.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn simplex_closed_form() {
        for p in 1..6 {
            let pts: Vec<Vec<f64>> = (0..p)
                .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            let mut z = vec![0.0; p];
            z[0] = -1.0;
            let d = dist_to_hull(&z, &pts).distance;
            assert!((d * d - dist2_neg_ei_simplex(p)).abs() < 1e-10, "p={p}");
        }
    }
}
