use dsnorm::geometry::*;
use dsnorm::vecnorms::{eval_norm, NormDescriptor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sparse_beta(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    loop {
        let b: Vec<f64> = (0..p)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => [2.0, -2.0][rng.random_range(0..2)],
                _ => rng.random_range(-3.0..3.0),
            })
            .collect();
        if b.iter().any(|v| *v != 0.0) {
            return b;
        }
    }
}

fn random_norm(rng: &mut ChaCha8Rng, p: usize) -> NormDescriptor {
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(0.3..2.0)).collect();
    match rng.random_range(0..6) {
        0 => NormDescriptor::L1,
        1 => NormDescriptor::L2,
        2 => NormDescriptor::Linf,
        3 => NormDescriptor::WeightedL1 { weights: w },
        4 => NormDescriptor::WeightedLinf { weights: w },
        _ => NormDescriptor::Kd { k: rng.random_range(1..=p), d: 1 },
    }
}

#[test]
fn exact_examples() {
    let r = varphi_exact(&NormDescriptor::L1, &[1.0, 0.0, -2.0, 3.0, 0.5]).unwrap();
    assert!((r.value - 4.0).abs() < 1e-12);
    let r = varphi_exact(&NormDescriptor::Linf, &[1.0, 1.0, 0.0]).unwrap();
    assert!((r.value - 2f64.sqrt()).abs() < 1e-12);
    let e1 = [1.0, 0.0, 0.0, 0.0];
    let kd = NormDescriptor::Kd { k: 2, d: 1 };
    let r = varphi_exact(&kd, &e1).unwrap();
    assert!((r.value - 8f64.sqrt()).abs() < 1e-12 && !r.is_upper_bound);
    let n = varphi_numeric(&kd, &e1, None).unwrap();
    assert!((n.value - 8f64.sqrt()).abs() < 1e-9);
    assert!(varphi_exact(&NormDescriptor::Owl { weights: vec![1.0, 0.5] }, &[1.0, 0.0]).is_err());
    assert!(varphi_exact(&NormDescriptor::L1, &[0.0, 0.0]).is_err());
}

#[test]
fn bound_examples() {
    let b = [0.0, 3.0, -1.0, 0.0, 2.0];
    let ones = NormDescriptor::Owl { weights: vec![1.0; 5] };
    let r = varphi_bound(&ones, &b).unwrap();
    assert!((r.relaxed_bound.unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-12);
    // the l1 case attains the relaxed bound
    let n = varphi_numeric(&ones, &b, None).unwrap();
    assert!((n.value - 2.0 * 3f64.sqrt()).abs() < 1e-9);
    for t in 1..=4 {
        let mut beta = vec![0.5; 4];
        beta[..t].iter_mut().for_each(|v| *v = 1.0);
        let linf = NormDescriptor::Owl { weights: vec![1.0, 0.0, 0.0, 0.0] };
        let r = varphi_bound(&linf, &beta).unwrap();
        assert!((r.value - (1.0 + 3.0 / t as f64).sqrt()).abs() < 1e-12);
        assert!(r.value <= 2.0);
    }
    let r = varphi_bound(&NormDescriptor::KdDual { k: 4, d: 1 }, &[1.0, 0.0, 0.0, -1.0, 0.0]).unwrap();
    assert!((r.value - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn l2_numeric_is_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in 1..=6 {
        let b = sparse_beta(&mut rng, p);
        assert!((varphi_numeric(&NormDescriptor::L2, &b, None).unwrap().value - 2.0).abs() < 1e-12);
    }
}

#[test]
fn exact_matches_numeric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut compared = 0;
    while compared < 500 {
        let p = rng.random_range(1..=5);
        let b = sparse_beta(&mut rng, p);
        let norm = random_norm(&mut rng, p);
        let ex = varphi_exact(&norm, &b).unwrap();
        let nu = varphi_numeric(&norm, &b, None).unwrap();
        if ex.is_upper_bound {
            assert!(nu.value <= ex.value + 1e-8, "{norm:?} {b:?}");
        } else {
            assert!((ex.value - nu.value).abs() <= 1e-6, "{norm:?} {b:?}: {} vs {}", ex.value, nu.value);
        }
        compared += 1;
    }
}

#[test]
fn owl_numeric_below_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = rng.random_range(1..=5);
        let mut w: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..2.0)).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        w[0] += 0.05;
        let norm = NormDescriptor::Owl { weights: w };
        let b = sparse_beta(&mut rng, p);
        let bound = varphi_bound(&norm, &b).unwrap();
        let nu = varphi_numeric(&norm, &b, None).unwrap();
        assert!(nu.value <= bound.value + 1e-8, "{norm:?} {b:?}");
        assert!(bound.value <= bound.relaxed_bound.unwrap() + 1e-12);
    }
}

#[test]
fn homogeneity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let p = rng.random_range(1..=4);
        let b = sparse_beta(&mut rng, p);
        let norm = random_norm(&mut rng, p);
        let base = varphi_numeric(&norm, &b, None).unwrap().value;
        for c in [-2.0, 0.1, 7.0] {
            let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
            assert!((varphi_numeric(&norm, &cb, None).unwrap().value - base).abs() <= 1e-9);
        }
        // scaling the norm scales phi: c||.||_1 is weighted l1 with weights c
        let c = rng.random_range(0.2..4.0);
        let wl1 = NormDescriptor::WeightedL1 { weights: vec![c; p] };
        let l1 = varphi_numeric(&NormDescriptor::L1, &b, None).unwrap().value;
        assert!((varphi_numeric(&wl1, &b, None).unwrap().value - c * l1).abs() <= 1e-9);
    }
}

#[test]
fn origin_distance_lower_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p = rng.random_range(1..=4);
        let b = sparse_beta(&mut rng, p);
        let norm = match rng.random_range(0..3) {
            0 => NormDescriptor::L1,
            1 => NormDescriptor::Linf,
            _ => NormDescriptor::Kd { k: rng.random_range(1..=p), d: 1 },
        };
        let ext: Vec<Vec<f64>> = dual_ball_extreme_points(&norm, p).unwrap().into_iter().map(|e| e.0).collect();
        let face = subdiff_vertices(&ext, &b, eval_norm(&norm, &b).unwrap());
        let (dist, inner) = subdiff_origin_distance(&face);
        let phi = varphi_numeric(&norm, &b, None).unwrap().value;
        if inner {
            assert!(phi >= 2.0 * dist - 1e-9, "{norm:?} {b:?}");
        }
    }
}

#[test]
fn literal_figure_family_has_constant_phi() {
    // read literally, the three-norm family's subdifferential at e2 is a
    // horizontal segment at height 9/2, so phi = 9 for every gamma
    for g in [0.01, 1.0, 3.0, 100.0] {
        let norm = NormDescriptor::MaxWeightedL1 {
            weight_family: vec![vec![1.0, 0.75], vec![g / (g + 4.0), 0.9], vec![g / (g + 5.0), 4.5]],
        };
        let r = varphi_numeric(&norm, &[0.0, 1.0], None).unwrap();
        assert!((r.value - 9.0).abs() < 1e-9, "gamma={g}: {}", r.value);
    }
}

#[test]
fn psi_examples() {
    let r = psi_estimate(&NormDescriptor::L2, &[0.3, 1.0], 2.0, 1000, 0).unwrap();
    assert!((r.value - 1.0).abs() < 1e-12 && !r.lower_bound_only);
    let r = psi_estimate(&NormDescriptor::L2, &[0.3, 1.0, 2.0], 2.0, 1000, 0).unwrap();
    assert!((r.value - 1.0).abs() < 1e-12 && r.lower_bound_only);
    let r = psi_estimate(&NormDescriptor::L1, &[1.0, 0.0], f64::INFINITY, 10_000, 0).unwrap();
    assert!((r.value - 2f64.sqrt()).abs() < 1e-9, "{}", r.value);
    assert!(psi_estimate(&NormDescriptor::L1, &[1.0, 0.0], 1.0, 10, 0).is_err());
}

#[test]
fn psi_chain_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..60 {
        let p = rng.random_range(2..=4);
        let b = sparse_beta(&mut rng, p);
        let norm = random_norm(&mut rng, p);
        let phi = varphi_numeric(&norm, &b, None).unwrap().value;
        let dirs = if p == 2 { 4000 } else { 3000 };
        let inf = psi_estimate(&norm, &b, f64::INFINITY, dirs, 1).unwrap().value;
        for q in [1.5, 2.0, 4.0] {
            let psi = psi_estimate(&norm, &b, q, dirs, 1).unwrap().value;
            assert!(psi <= q / (q - 1.0) * phi + 1e-9, "{norm:?} {b:?} q={q}");
            if p == 2 {
                // exact in two dimensions, and the feasible sets are nested
                assert!(inf <= psi + 1e-9);
            }
        }
    }
}

#[test]
fn cone_and_error_set() {
    let spec = ConeSpec { phi: 1.0, factor: 2.0 };
    assert!(cone_membership(&[0.0, 0.0], &spec, &NormDescriptor::L1).unwrap());
    assert!(cone_membership(&[1.0, -2.0], &spec, &NormDescriptor::Linf).unwrap());
    assert!(!cone_membership(&[1.0, 1.0, 1.0, 1.0, 1.0], &ConeSpec { phi: 1.0, factor: 2.0 }, &NormDescriptor::L1).unwrap());
    let bs = [1.0, 0.0, 0.0];
    // moving along the support is inside, spreading onto the off-support is not
    assert!(in_error_set(&[-0.5, 0.0, 0.0], &bs, &NormDescriptor::L1, 2.0, 0.0).unwrap());
    assert!(!in_error_set(&[0.0, 1.0, 1.0], &bs, &NormDescriptor::L1, 2.0, 0.0).unwrap());
}

#[test]
fn error_set_lies_in_the_cone() {
    // sampled v in Xi(beta*) satisfy ||v|| <= 2 phi ||v||_2
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hits = 0;
    for _ in 0..3000 {
        let p = rng.random_range(2..=5);
        let bs = sparse_beta(&mut rng, p);
        let norm = random_norm(&mut rng, p);
        let v: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        if in_error_set(&v, &bs, &norm, 2.0, 0.0).unwrap() {
            hits += 1;
            let phi = varphi_numeric(&norm, &bs, None).unwrap().value;
            assert!(cone_membership(&v, &ConeSpec { phi, factor: 2.0 }, &norm).unwrap(), "{norm:?} {bs:?} {v:?}");
        }
    }
    assert!(hits > 100);
}
