use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use dsnorm::bench::{self, CoverageConfig, ExperimentConfig};
use dsnorm::geometry::{self, ConeSpec, RelDiamReport};
use dsnorm::io::{read_json, read_matrix, read_vector, write_json, write_records, write_vector};
use dsnorm::kdnorm::project_skd;
use dsnorm::linalg::Matrix;
use dsnorm::proxops::{moreau_check, prox_norm, ProxConfig};
use dsnorm::solvers::{self, AdmmOptions, NoiseCovariance, RegressionProblem, SolveResult, SolverOptions};
use dsnorm::statbounds::{self, ErrorBoundInput, DEFAULT_C_HW};
use dsnorm::vecnorms::{eval_dual_norm, eval_norm};
use dsnorm::{Error, NormDescriptor};

#[derive(Parser)]
#[command(name = "dsnorm", version, about = "Doubly-sparse structure norms toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// `--norm` takes a kind name (`l1`, `l2`, `linf`, `kd`, `kd_dual`,
/// `k_support`) combined with `--k/--d`, a JSON descriptor, or `@file.json`.
#[derive(clap::Args, Clone)]
struct NormArgs {
    #[arg(long, default_value = "kd")]
    norm: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
}

impl NormArgs {
    fn descriptor(&self) -> dsnorm::Result<NormDescriptor> {
        let s = self.norm.trim();
        if let Some(path) = s.strip_prefix('@') {
            return read_json(Path::new(path));
        }
        if s.starts_with('{') {
            return Ok(serde_json::from_str(s)?);
        }
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| Error::InvalidParameter(format!("--norm {s} needs --{name}")))
        };
        Ok(match s {
            "l1" => NormDescriptor::L1,
            "l2" => NormDescriptor::L2,
            "linf" => NormDescriptor::Linf,
            "k_support" | "ksupport" => NormDescriptor::KSupport { k: need(self.k, "k")? },
            "kd" => NormDescriptor::Kd {
                k: need(self.k, "k")?,
                d: need(self.d, "d")?,
            },
            "kd_dual" => NormDescriptor::KdDual {
                k: need(self.k, "k")?,
                d: need(self.d, "d")?,
            },
            other => return Err(Error::InvalidParameter(format!("unknown norm kind {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Pg,
    Fista,
    Admm,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarphiMethod {
    Exact,
    Bound,
    Numeric,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum PhiFrom {
    Exact,
    Numeric,
}

#[derive(Subcommand)]
enum Cmd {
    /// Project a vector onto S_{k,d}.
    Project {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        d: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dual norm of a vector.
    Dualnorm {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Norm of a vector.
    Norm {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Proximal map of `lambda ||.||`, with an optional Moreau certificate.
    Prox {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Regularized least squares.
    Solve {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "X")]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum, default_value = "fista")]
        solver: SolverKind,
        #[arg(long)]
        beta_star: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative diameter at beta.
    Varphi {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        beta: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        method: VarphiMethod,
    },
    /// Compatibility constant of the error set at beta.
    Psi {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        beta: PathBuf,
        /// `2` or `inf`
        #[arg(long, default_value = "2")]
        q: String,
        #[arg(long, default_value_t = 4000)]
        dirs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Noise-level lower end and zero-solution upper end of the lambda range.
    Lambda {
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long, default_value_t = 0.05)]
        p0: f64,
        #[arg(long, default_value_t = DEFAULT_C_HW)]
        c_hw: f64,
        #[arg(long = "X")]
        x: PathBuf,
        #[arg(long)]
        y: Option<PathBuf>,
        /// Noise covariance JSON, e.g. `{"kind":"identity","sigma2":0.25}`.
        #[arg(long)]
        sigma: PathBuf,
    },
    /// Error-bound report for a `solve` result.
    Bounds {
        #[arg(long)]
        result: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        phi_from: PhiFrom,
        /// Restricted-eigenvalue constant; estimated from `--X` when absent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "X")]
        x: Option<PathBuf>,
        /// Measured `||(1/n) X^T eps||*` for the refined bounds.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        re_constant: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_min: f64,
    },
    /// Monte-Carlo experiment; with `--coverage` the noise-level coverage check.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        coverage: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Sweep of the three-branch max of weighted l1 norms.
    FigMaxwl1 {
        #[arg(long, default_value_t = 0.01)]
        gamma_min: f64,
        #[arg(long, default_value_t = 100.0)]
        gamma_max: f64,
        #[arg(long, default_value_t = 81)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random maxima of weighted l1 norms in the plane.
    FigRandnorms {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// What `solve` writes and `bounds` reads.
#[derive(Serialize, Deserialize)]
struct SolveOutput {
    norm: NormDescriptor,
    lambda: f64,
    solver: String,
    n: usize,
    p: usize,
    beta_star: Option<Vec<f64>>,
    /// `(||g||* / lambda, pairing)` for `g = (1/n) X^T (y - X b)`
    certificate: (f64, f64),
    result: SolveResult,
}

enum Outcome {
    Ok,
    Assertion(String),
    NonConvergence(String),
}

fn print_json(v: &impl Serialize) -> dsnorm::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn emit(v: &impl Serialize, out: Option<&Path>) -> dsnorm::Result<()> {
    match out {
        Some(p) => write_json(p, v),
        None => print_json(v),
    }
}

fn varphi_report(norm: &NormDescriptor, beta: &[f64], method: VarphiMethod) -> dsnorm::Result<RelDiamReport> {
    match method {
        VarphiMethod::Exact => match geometry::varphi_exact(norm, beta) {
            Err(Error::Unsupported(_)) => geometry::varphi_bound(norm, beta),
            r => r,
        },
        VarphiMethod::Bound => geometry::varphi_bound(norm, beta),
        VarphiMethod::Numeric => geometry::varphi_numeric(norm, beta, None),
    }
}

fn run(cmd: Cmd) -> dsnorm::Result<Outcome> {
    match cmd {
        Cmd::Project { k, d, input, out } => {
            let theta = read_vector(&input)?;
            let r = project_skd(&theta, k, d)?;
            if let Some(o) = out {
                write_vector(&o, "value", &r.projected)?;
            }
            print_json(&r)?;
        }
        Cmd::Dualnorm { norm, input } => {
            let v = eval_dual_norm(&norm.descriptor()?, &read_vector(&input)?)?;
            print_json(&json!({ "dual_norm": v }))?;
        }
        Cmd::Norm { norm, input } => {
            let v = eval_norm(&norm.descriptor()?, &read_vector(&input)?)?;
            print_json(&json!({ "norm": v }))?;
        }
        Cmd::Prox {
            norm,
            lambda,
            input,
            out,
            cert,
        } => {
            let nd = norm.descriptor()?;
            let x = read_vector(&input)?;
            let cfg = ProxConfig::default();
            let prox = prox_norm(&x, &nd, lambda, &cfg)?;
            match out {
                Some(o) => write_vector(&o, "value", &prox)?,
                None => print_json(&prox)?,
            }
            if let Some(c) = cert {
                write_json(&c, &moreau_check(&x, &nd, lambda, &cfg)?)?;
            }
        }
        Cmd::Solve {
            norm,
            lambda,
            x,
            y,
            solver,
            beta_star,
            tol,
            max_iters,
            out,
        } => {
            let nd = norm.descriptor()?;
            let mut problem = RegressionProblem::new(read_matrix(&x)?, read_vector(&y)?)?;
            if let Some(b) = &beta_star {
                problem = problem.with_truth(read_vector(b)?)?;
            }
            let opts = SolverOptions {
                tol,
                max_iters,
                ..Default::default()
            };
            let (name, result) = match solver {
                SolverKind::Pg => (
                    "pg",
                    solvers::prox_gradient(&problem, &nd, lambda, &SolverOptions { accel: false, ..opts })?,
                ),
                SolverKind::Fista => ("fista", solvers::prox_gradient(&problem, &nd, lambda, &opts)?),
                SolverKind::Admm => (
                    "admm",
                    solvers::admm(
                        &problem,
                        &nd,
                        lambda,
                        &AdmmOptions {
                            tol,
                            max_iters: max_iters.max(100_000),
                            ..Default::default()
                        },
                    )?,
                ),
            };
            let certificate = solvers::optimality_certificate(&problem, &nd, lambda, &result.beta_hat)?;
            let converged = result.converged;
            let iterations = result.iterations;
            let o = SolveOutput {
                norm: nd,
                lambda,
                solver: name.into(),
                n: problem.n(),
                p: problem.p(),
                beta_star: problem.beta_star.clone(),
                certificate,
                result,
            };
            emit(&o, out.as_deref())?;
            if !converged {
                return Ok(Outcome::NonConvergence(format!("{name} stopped after {iterations} iterations")));
            }
        }
        Cmd::Varphi { norm, beta, method } => {
            print_json(&varphi_report(&norm.descriptor()?, &read_vector(&beta)?, method)?)?;
        }
        Cmd::Psi {
            norm,
            beta,
            q,
            dirs,
            seed,
        } => {
            let q = match q.as_str() {
                "inf" | "infinity" => f64::INFINITY,
                s => s.parse().map_err(|_| Error::InvalidParameter(format!("bad --q {s}")))?,
            };
            print_json(&geometry::psi_estimate(&norm.descriptor()?, &read_vector(&beta)?, q, dirs, seed)?)?;
        }
        Cmd::Lambda {
            norm,
            p0,
            c_hw,
            x,
            y,
            sigma,
        } => {
            let nd = norm.descriptor()?;
            let x = read_matrix(&x)?;
            let sigma: NoiseCovariance = read_json(&sigma)?;
            match y {
                Some(y) => {
                    let problem = RegressionProblem::new(x, read_vector(&y)?)?;
                    print_json(&statbounds::lambda_bounds(&problem, &nd, &sigma, p0, c_hw)?)?;
                }
                None => {
                    let (lower, src) = statbounds::lambda_lower(&x, &nd, &sigma, p0, c_hw)?;
                    print_json(&json!({ "lower": lower, "lower_source": src, "upper": null }))?;
                }
            }
        }
        Cmd::Bounds {
            result,
            phi_from,
            alpha,
            x,
            theta,
            re_constant,
            lambda_min,
        } => {
            let s: SolveOutput = read_json(&result)?;
            let center = s.beta_star.clone().unwrap_or_else(|| s.result.beta_hat.clone());
            let method = if phi_from == PhiFrom::Exact { VarphiMethod::Exact } else { VarphiMethod::Numeric };
            let phi = varphi_report(&s.norm, &center, method)?;
            let alpha = match (alpha, x) {
                (Some(a), _) => a,
                (None, Some(xp)) => {
                    let xm: Matrix = read_matrix(&xp)?;
                    let cone = ConeSpec { phi: phi.value, factor: 2.0 };
                    statbounds::re_constant_estimate(&xm, &cone, &s.norm, &center, 2000, 0)?
                        .ok_or_else(|| Error::Assertion("no sampled direction fell in the cone".into()))?
                }
                (None, None) => return Err(Error::InvalidParameter("bounds needs --alpha or --X".into())),
            };
            let report = statbounds::error_bound_report(&ErrorBoundInput {
                lambda: s.lambda,
                norm_beta_star: eval_norm(&s.norm, &center)?,
                phi: phi.value,
                alpha,
                theta,
                k: center.iter().filter(|v| **v != 0.0).count().max(1),
                p: s.p,
                re_constant,
                lambda_min,
            })?;
            print_json(&json!({ "phi": phi, "alpha": alpha, "bounds": report }))?;
        }
        Cmd::Bench {
            config,
            coverage,
            out,
            summary,
        } => {
            if coverage {
                let cfg: CoverageConfig = read_json(&config)?;
                let r = bench::lambda_coverage(&cfg)?;
                emit(&r, summary.as_deref())?;
                if r.p_value_vs_090 < 0.05 {
                    return Ok(Outcome::Assertion(format!("coverage {} below 0.90", r.frequency)));
                }
            } else {
                let cfg: ExperimentConfig = read_json(&config)?;
                let r = bench::run_experiment(&cfg)?;
                if let Some(o) = out {
                    write_records(&o, &r.rows)?;
                }
                emit(&r.summary, summary.as_deref())?;
                if !r.summary.assertion_failures.is_empty() {
                    return Ok(Outcome::Assertion(r.summary.assertion_failures.join("; ")));
                }
            }
        }
        Cmd::FigMaxwl1 {
            gamma_min,
            gamma_max,
            points,
            out,
        } => {
            let rows = bench::fig_maxwl1_sweep(&bench::log_grid(gamma_min, gamma_max, points), Some(&out))?;
            let mut regimes: Vec<usize> = rows.iter().map(|r| r.regime).collect();
            regimes.dedup();
            let bad = rows.iter().filter(|r| !bench::chain_holds(r.phi, r.psi_xi, r.psi_xi_inf, 1e-9)).count();
            print_json(&json!({ "rows": rows.len(), "regime_sequence": regimes, "chain_violations": bad }))?;
            if bad > 0 {
                return Ok(Outcome::Assertion(format!("{bad} rows violate the psi/phi chain")));
            }
        }
        Cmd::FigRandnorms { count, seed, out } => {
            let rows = bench::fig_random_norms(count, seed, Some(&out))?;
            let bad = rows
                .iter()
                .filter(|r| !bench::chain_holds(r.phi, r.psi_xi, r.psi_xi_inf, 1e-9) || !(r.ratio > 1.0))
                .count();
            print_json(&json!({ "rows": rows.len(), "chain_violations": bad }))?;
            if bad > 0 {
                return Ok(Outcome::Assertion(format!("{bad} rows violate the psi/phi chain")));
            }
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Assertion(m)) => {
            eprintln!("assertion failed: {m}");
            ExitCode::from(2)
        }
        Ok(Outcome::NonConvergence(m)) => {
            eprintln!("no convergence: {m}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Assertion(_) => 2,
                Error::NonConvergence { .. } => 3,
                _ => 1,
            })
        }
    }
}
