//! Dense vector helpers and the few matrix routines the solvers need.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scaled(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

/// Row-major dense matrix used for designs.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `X v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `X^T v`
    pub fn tmul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi != 0.0 {
                for (o, x) in out.iter_mut().zip(self.row(i)) {
                    *o += vi * x;
                }
            }
        }
        out
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Largest eigenvalue of `X^T X / n` by power iteration to relative `tol`.
pub fn power_iteration_gram(x: &Matrix, tol: f64, max_iter: usize) -> f64 {
    let n = x.rows as f64;
    let p = x.cols;
    if p == 0 || x.rows == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v: Vec<f64> = (0..p).map(|j| 1.0 + (j as f64 * 0.618_034).fract()).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|a| *a /= nv);
    let mut lam = 0.0;
    for _ in 0..max_iter {
        let w = x.tmul_vec(&x.mul_vec(&v));
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw / n;
        v = w.iter().map(|a| a / nw).collect();
        if (next - lam).abs() <= tol * next {
            return next;
        }
        lam = next;
    }
    lam
}

/// Symmetric PSD square root; errors if an eigenvalue is below `-tol`.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -tol * scale) {
        return None;
    }
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let q = &eig.eigenvectors;
    Some(q * DMatrix::from_diagonal(&d) * q.transpose())
}

/// Solve the symmetric positive definite system `a x = b` by Cholesky.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}
