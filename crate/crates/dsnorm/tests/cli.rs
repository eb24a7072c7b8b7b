use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("dsnorm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn file(name: &str, body: &str) -> PathBuf {
    let p = dir().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsnorm")).args(args).output().unwrap()
}

fn json(o: &Output) -> Value {
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn project_and_dual_norm() {
    let v = file("v.csv", "3\n3\n");
    let out = dir().join("proj.csv");
    let r = json(&run(&["project", "--k", "2", "--d", "1", "--in", s(&v), "--out", s(&out)]));
    assert!((r["sq_dual_norm"].as_f64().unwrap() - 18.0).abs() < 1e-12, "{r}");
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("value"));
    let z: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(z, vec![3.0, 3.0]);

    let r = json(&run(&["dualnorm", "--norm", "kd", "--k", "2", "--d", "1", "--in", s(&v)]));
    assert!((r["dual_norm"].as_f64().unwrap() - 6.0 / 2f64.sqrt()).abs() < 1e-12);
    let r = json(&run(&["norm", "--norm", "l1", "--in", s(&v)]));
    assert_eq!(r["norm"].as_f64(), Some(6.0));
    let desc = file("n.json", r#"{"kind":"linf"}"#);
    let at = format!("@{}", s(&desc));
    let r = json(&run(&["norm", "--norm", &at, "--in", s(&v)]));
    assert_eq!(r["norm"].as_f64(), Some(3.0));
}

#[test]
fn prox_writes_certificate() {
    let v = file("px.csv", "value\n2.0\n-0.3\n1.0\n");
    let out = dir().join("px_out.csv");
    let cert = dir().join("px_cert.json");
    assert_eq!(
        run(&["prox", "--norm", "l1", "--lambda", "0.5", "--in", s(&v), "--out", s(&out), "--cert", s(&cert)])
            .status
            .code(),
        Some(0)
    );
    let z: Vec<f64> = std::fs::read_to_string(&out).unwrap().lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(z, vec![1.5, 0.0, 0.5]);
    let c: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert!(c.is_object());
}

#[test]
fn solve_then_bounds() {
    let x = file("x.csv", "1,1,1,1\n1,-1,1,-1\n1,1,-1,-1\n1,-1,-1,1\n");
    let y = file("y.csv", "3\n-1\n0.5\n2\n");
    let bs = file("bs.csv", "1\n0\n0\n0\n");
    let out = dir().join("solve.json");
    let o = run(&[
        "solve", "--norm", "l1", "--lambda", "0.4", "--X", s(&x), "--y", s(&y), "--beta-star", s(&bs), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let b: Vec<f64> = r["result"]["beta_hat"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // orthogonal design: soft-threshold of X^T y / n = (1.125, 0.625, 0.375, 1.375)
    let expect = [0.725, 0.225, 0.0, 0.975];
    assert!(b.iter().zip(expect).all(|(a, e)| (a - e).abs() < 1e-9), "{b:?}");
    let r = json(&run(&["bounds", "--result", s(&out), "--alpha", "1.0"]));
    assert!(r["bounds"].is_object() && r["phi"]["value"].as_f64().is_some(), "{r}");
    let r = json(&run(&["varphi", "--norm", "linf", "--beta", s(&bs)]));
    assert!(r["value"].as_f64().is_some());
}

#[test]
fn lambda_and_psi() {
    let x = file("lx.csv", "1,0\n0,1\n1,1\n");
    let sig = file("sig.json", r#"{"kind":"identity","sigma2":0.25}"#);
    let r = json(&run(&["lambda", "--norm", "l1", "--X", s(&x), "--sigma", s(&sig)]));
    assert!(r["lower"].as_f64().unwrap() > 0.0 && r["upper"].is_null(), "{r}");
    let b = file("pb.csv", "1\n0\n");
    let r = json(&run(&["psi", "--norm", "l1", "--beta", s(&b), "--q", "inf", "--dirs", "2000"]));
    assert!((r["value"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-6, "{r}");
}

#[test]
fn figure_commands() {
    let out = dir().join("sweep.csv");
    let r = json(&run(&["fig-maxwl1", "--points", "21", "--out", s(&out)]));
    assert_eq!(r["chain_violations"].as_u64(), Some(0));
    assert_eq!(r["regime_sequence"].as_array().unwrap().len(), 3);
    let hdr = std::fs::read_to_string(&out).unwrap();
    assert_eq!(hdr.lines().next(), Some("gamma,phi,psi_xi,psi_xi_inf,ratio,regime,family"));
    let out = dir().join("rn.csv");
    let r = json(&run(&["fig-randnorms", "--count", "5", "--seed", "1", "--out", s(&out)]));
    assert_eq!(r["rows"].as_u64(), Some(5));
}

#[test]
fn exit_codes() {
    let v = file("e.csv", "1\n2\n");
    // usage and input errors
    assert_eq!(run(&["project", "--k", "2"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["project", "--k", "1", "--d", "2", "--in", s(&v)]).status.code(), Some(1));
    assert_eq!(run(&["norm", "--norm", "bogus", "--in", s(&v)]).status.code(), Some(1));
    assert_eq!(run(&["norm", "--norm", "l1", "--in", "/nonexistent/file.csv"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // non-convergence
    let x = file("nx.csv", "1,2,0\n0,1,3\n2,0,1\n1,1,1\n");
    let y = file("ny.csv", "1\n2\n3\n4\n");
    let o = run(&["solve", "--norm", "l2", "--lambda", "0.01", "--X", s(&x), "--y", s(&y), "--max-iters", "2", "--tol", "1e-14"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // a failed statistical check: Lambda without its deviation term covers too rarely
    let cfg = file(
        "cov.json",
        r#"{"n":50,"p":5,"norm":{"kind":"k_support","k":2},"sigma":1.0,"draws":500,"seed":1,"eta":0.0}"#,
    );
    let o = run(&["bench", "--coverage", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}
