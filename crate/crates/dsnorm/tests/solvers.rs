use dsnorm::linalg::Matrix;
use dsnorm::solvers::*;
use dsnorm::vecnorms::{eval_dual_norm, NormDescriptor};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_problem(rng: &mut ChaCha8Rng, n: usize, p: usize) -> RegressionProblem {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let beta: Vec<f64> = (0..p).map(|i| if i < 2 { 1.5 } else { 0.0 }).collect();
    let x = Matrix::from_rows(&rows);
    let y: Vec<f64> = x.mul_vec(&beta).iter().map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    RegressionProblem::new(x, y).unwrap().with_truth(beta).unwrap()
}

fn least_squares(problem: &RegressionProblem) -> Vec<f64> {
    let x = problem.x.to_dmatrix();
    let y = DVector::from_vec(problem.y.clone());
    let sol = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * y));
    sol.as_slice().to_vec()
}

fn maxdiff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norms(p: usize) -> Vec<NormDescriptor> {
    vec![
        NormDescriptor::L1,
        NormDescriptor::L2,
        NormDescriptor::Linf,
        NormDescriptor::KSupport { k: 2.min(p) },
        NormDescriptor::Kd { k: 3.min(p), d: 1 },
        NormDescriptor::Kd { k: 3.min(p), d: 2.min(p) },
    ]
}

#[test]
fn kill_switch_zeroes_the_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for inst in 0..100 {
        let (n, p) = (rng.random_range(5..30), rng.random_range(3..9));
        let pr = gaussian_problem(&mut rng, n, p);
        let norm = norms(p)[inst % 6].clone();
        let lam = eval_dual_norm(&norm, &pr.correlation()).unwrap();
        let r = prox_gradient(&pr, &norm, lam, &SolverOptions::default()).unwrap();
        assert!(r.beta_hat.iter().all(|v| *v == 0.0), "{norm:?}: {:?}", r.beta_hat);
        let r = admm(&pr, &norm, lam, &AdmmOptions::default()).unwrap();
        assert!(r.beta_hat.iter().all(|v| *v == 0.0), "admm {norm:?}: {:?}", r.beta_hat);
        if norm == NormDescriptor::L1 {
            let r = lasso_baseline(&pr, lam, &SolverOptions::default()).unwrap();
            assert!(r.beta_hat.iter().all(|v| *v == 0.0));
        }
        // just below the threshold the estimate moves off zero
        let r = prox_gradient(&pr, &norm, 0.9 * lam, &SolverOptions::default()).unwrap();
        assert!(r.beta_hat.iter().any(|v| *v != 0.0));
    }
}

#[test]
fn zero_lambda_is_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let pr = gaussian_problem(&mut rng, 6, 6);
        let ls = least_squares(&pr);
        let opts = SolverOptions { tol: 1e-12, max_iters: 500_000, ..Default::default() };
        let r = prox_gradient(&pr, &NormDescriptor::Kd { k: 3, d: 2 }, 0.0, &opts).unwrap();
        assert!(maxdiff(&r.beta_hat, &ls) < 1e-6, "{:?} vs {ls:?}", r.beta_hat);
        let r = admm(&pr, &NormDescriptor::L1, 0.0, &AdmmOptions::default()).unwrap();
        assert!(maxdiff(&r.beta_hat, &ls) < 1e-6);
        let r = lasso_baseline(&pr, 0.0, &opts).unwrap();
        assert!(maxdiff(&r.beta_hat, &ls) < 1e-6);
    }
}

/// Cyclic coordinate descent for the Lasso, run to a tiny change.
fn cd_lasso(pr: &RegressionProblem, lam: f64) -> Vec<f64> {
    let (n, p) = (pr.n(), pr.p());
    let cols: Vec<Vec<f64>> = (0..p).map(|j| pr.x.column(j)).collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n as f64).collect();
    let mut b = vec![0.0; p];
    let mut r = pr.y.clone();
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for j in 0..p {
            let rho: f64 = cols[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n as f64 + sq[j] * b[j];
            let new = rho.signum() * (rho.abs() - lam).max(0.0) / sq[j];
            let step = new - b[j];
            if step != 0.0 {
                r.iter_mut().zip(&cols[j]).for_each(|(ri, c)| *ri -= step * c);
                b[j] = new;
            }
            delta = delta.max(step.abs());
        }
        if delta < 1e-14 {
            break;
        }
    }
    b
}

#[test]
fn lasso_matches_coordinate_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let pr = gaussian_problem(&mut rng, 20, 5);
        let lam = 0.2 * eval_dual_norm(&NormDescriptor::L1, &pr.correlation()).unwrap();
        let oracle = cd_lasso(&pr, lam);
        let f_oracle = objective(&pr, &NormDescriptor::L1, lam, &oracle).unwrap();
        let pg = prox_gradient(&pr, &NormDescriptor::L1, lam, &SolverOptions::default()).unwrap();
        let base = lasso_baseline(&pr, lam, &SolverOptions::default()).unwrap();
        let f_pg = objective(&pr, &NormDescriptor::L1, lam, &pg.beta_hat).unwrap();
        assert!((f_pg - f_oracle).abs() <= 1e-6 * (1.0 + f_oracle));
        assert!(maxdiff(&pg.beta_hat, &base.beta_hat) <= 1e-8);
        let ad = admm(&pr, &NormDescriptor::L1, lam, &AdmmOptions::default()).unwrap();
        assert!(maxdiff(&ad.beta_hat, &pg.beta_hat) <= 1e-6);
    }
}

#[test]
fn admm_agrees_with_prox_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for inst in 0..12 {
        let p = 6;
        let pr = gaussian_problem(&mut rng, 25, p);
        let norm = norms(p)[inst % 6].clone();
        let lam = 0.3 * eval_dual_norm(&norm, &pr.correlation()).unwrap();
        let pg = prox_gradient(&pr, &norm, lam, &SolverOptions { tol: 1e-10, ..Default::default() }).unwrap();
        let ad = admm(&pr, &norm, lam, &AdmmOptions::default()).unwrap();
        assert!(pg.converged && ad.converged);
        let f1 = objective(&pr, &norm, lam, &pg.beta_hat).unwrap();
        let f2 = objective(&pr, &norm, lam, &ad.beta_hat).unwrap();
        assert!((f1 - f2).abs() <= 1e-6 * f1.abs().max(1e-12), "{norm:?}: {f1} vs {f2}");
    }
}

#[test]
fn orthogonal_design_soft_thresholds() {
    // Hadamard design: X^T X / n = I
    let h = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
    let x = Matrix::from_rows(&h.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    let y = vec![3.0, -1.0, 0.5, 2.0];
    let pr = RegressionProblem::new(x, y).unwrap();
    let c = pr.correlation();
    let lam = 0.4;
    let expect: Vec<f64> = c.iter().map(|v| v.signum() * (v.abs() - lam).max(0.0)).collect();
    let r = lasso_baseline(&pr, lam, &SolverOptions::default()).unwrap();
    assert!(maxdiff(&r.beta_hat, &expect) < 1e-12, "{:?} vs {expect:?}", r.beta_hat);
}

#[test]
fn certificates_and_monotone_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for inst in 0..12 {
        let pr = gaussian_problem(&mut rng, 30, 8);
        let norm = norms(8)[inst % 6].clone();
        let lam = 0.25 * eval_dual_norm(&norm, &pr.correlation()).unwrap();
        let opts = SolverOptions { accel: false, ..Default::default() };
        let r = prox_gradient(&pr, &norm, lam, &opts).unwrap();
        assert!(r.converged);
        let (ratio, pairing) = optimality_certificate(&pr, &norm, lam, &r.beta_hat).unwrap();
        assert!(ratio <= 1.0 + 1e-4, "{norm:?} {ratio}");
        assert!(pairing <= 1e-5 * (1.0 + lam), "{norm:?} {pairing}");
        // exact-prox step 1/L never increases the objective beyond the
        // inexactness schedule
        let slack: f64 = (1..=r.objective_trace.len()).map(|t| 1e-4 / (t * t) as f64).sum();
        let rises: f64 = r.objective_trace.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
        assert!(rises <= slack, "{norm:?} {rises}");
        assert!(r.prediction_error.is_some() && r.estimation_error_norm.is_some());
    }
}

#[test]
fn backtracking_reaches_the_same_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pr = gaussian_problem(&mut rng, 30, 6);
    let norm = NormDescriptor::Kd { k: 3, d: 2 };
    let lam = 0.2 * eval_dual_norm(&norm, &pr.correlation()).unwrap();
    let a = prox_gradient(&pr, &norm, lam, &SolverOptions::default()).unwrap();
    let b = prox_gradient(&pr, &norm, lam, &SolverOptions { backtracking: true, step: Some(10.0), ..Default::default() }).unwrap();
    let fa = objective(&pr, &norm, lam, &a.beta_hat).unwrap();
    let fb = objective(&pr, &norm, lam, &b.beta_hat).unwrap();
    assert!((fa - fb).abs() <= 1e-7 * fa);
}

#[test]
fn input_validation() {
    let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    assert!(RegressionProblem::new(x.clone(), vec![1.0]).is_err());
    assert!(RegressionProblem::new(x.clone(), vec![1.0, f64::NAN]).is_err());
    let pr = RegressionProblem::new(x, vec![1.0, 2.0]).unwrap();
    assert!(prox_gradient(&pr, &NormDescriptor::L1, -1.0, &SolverOptions::default()).is_err());
    let bad = AdmmOptions { rho: Some(0.0), ..Default::default() };
    assert!(admm(&pr, &NormDescriptor::L1, 0.1, &bad).is_err());
    assert!(pr.clone().with_truth(vec![1.0]).is_err());
    let _ = DMatrix::<f64>::identity(1, 1);
}
