//! Python bindings. Norms are passed as JSON descriptors such as
//! `'{"kind":"kd","k":3,"d":2}'`; structured results come back as JSON
//! strings for `json.loads`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dsnorm::linalg::Matrix;
use dsnorm::proxops::ProxConfig;
use dsnorm::solvers::{RegressionProblem, SolverOptions};
use dsnorm::{Error, NormDescriptor};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DimensionMismatch { .. }
        | Error::NonFinite
        | Error::InvalidParameter(_)
        | Error::ZeroVector
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn descriptor(norm: &str) -> PyResult<NormDescriptor> {
    serde_json::from_str(norm).map_err(|e| PyValueError::new_err(format!("bad norm descriptor: {e}")))
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Projection onto S_{k,d}: `(projected, squared dual norm)`.
#[pyfunction]
fn project_skd(theta: Vec<f64>, k: usize, d: usize) -> PyResult<(Vec<f64>, f64)> {
    let r = dsnorm::kdnorm::project_skd(&theta, k, d).map_err(to_py)?;
    Ok((r.projected, r.sq_dual_norm))
}

#[pyfunction]
fn dual_norm(norm: &str, theta: Vec<f64>) -> PyResult<f64> {
    dsnorm::vecnorms::eval_dual_norm(&descriptor(norm)?, &theta).map_err(to_py)
}

#[pyfunction]
fn norm(norm: &str, beta: Vec<f64>) -> PyResult<f64> {
    dsnorm::vecnorms::eval_norm(&descriptor(norm)?, &beta).map_err(to_py)
}

#[pyfunction]
fn prox(norm: &str, x: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
    dsnorm::proxops::prox_norm(&x, &descriptor(norm)?, lam, &ProxConfig::default()).map_err(to_py)
}

/// Accelerated proximal gradient; returns the `SolveResult` as JSON.
#[pyfunction]
#[pyo3(signature = (norm, x, y, lam, tol=1e-8, beta_star=None))]
fn solve(
    norm: &str,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    lam: f64,
    tol: f64,
    beta_star: Option<Vec<f64>>,
) -> PyResult<String> {
    if x.iter().any(|r| r.len() != x[0].len()) {
        return Err(PyValueError::new_err("ragged design rows"));
    }
    let mut problem = RegressionProblem::new(Matrix::from_rows(&x), y).map_err(to_py)?;
    if let Some(b) = beta_star {
        problem = problem.with_truth(b).map_err(to_py)?;
    }
    let opts = SolverOptions {
        tol,
        ..Default::default()
    };
    json(&dsnorm::solvers::prox_gradient(&problem, &descriptor(norm)?, lam, &opts).map_err(to_py)?)
}

/// Relative diameter: `method` is `"exact"`, `"bound"` or `"numeric"`.
#[pyfunction]
#[pyo3(signature = (norm, beta, method="exact"))]
fn varphi(norm: &str, beta: Vec<f64>, method: &str) -> PyResult<String> {
    let nd = descriptor(norm)?;
    let r = match method {
        "exact" => dsnorm::geometry::varphi_exact(&nd, &beta),
        "bound" => dsnorm::geometry::varphi_bound(&nd, &beta),
        "numeric" => dsnorm::geometry::varphi_numeric(&nd, &beta, None),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    json(&r.map_err(to_py)?)
}

/// Rows of the max-of-weighted-l1 sweep as JSON.
#[pyfunction]
fn fig_maxwl1(gammas: Vec<f64>) -> PyResult<String> {
    json(&dsnorm::bench::fig_maxwl1_sweep(&gammas, None).map_err(to_py)?)
}

#[pymodule]
fn dsnorm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(project_skd, m)?)?;
    m.add_function(wrap_pyfunction!(dual_norm, m)?)?;
    m.add_function(wrap_pyfunction!(norm, m)?)?;
    m.add_function(wrap_pyfunction!(prox, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(varphi, m)?)?;
    m.add_function(wrap_pyfunction!(fig_maxwl1, m)?)?;
    Ok(())
}
