mod common;

use common::random_feasible_socp;
use conic::{
    solve_hsde, Cone, ConeSet, ConicProblem, CscMat, DerivativeContext, DiffSettings,
    Perturbation, SolverSettings,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central finite difference of the primal solution along (db, dc).
fn fd_solution(
    p: &ConicProblem,
    db: &[f64],
    dc: &[f64],
    h: f64,
    warm: (&[f64], &[f64], &[f64]),
) -> Vec<f64> {
    let settings = SolverSettings { tol: 1e-10, ..Default::default() };
    let mut plus = p.clone();
    for (v, d) in plus.b.iter_mut().zip(db) {
        *v += h * d;
    }
    for (v, d) in plus.c.iter_mut().zip(dc) {
        *v += h * d;
    }
    let mut minus = p.clone();
    for (v, d) in minus.b.iter_mut().zip(db) {
        *v -= h * d;
    }
    for (v, d) in minus.c.iter_mut().zip(dc) {
        *v -= h * d;
    }
    let sp = solve_hsde(&plus, &settings, Some(warm)).unwrap();
    let sm = solve_hsde(&minus, &settings, Some(warm)).unwrap();
    sp.x.iter().zip(&sm.x).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

#[test]
fn forward_mode_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut tested = 0;
    for seed in 0..10u64 {
        let p = random_feasible_socp(seed);
        let settings = SolverSettings { tol: 1e-10, ..Default::default() };
        let sol = solve_hsde(&p, &settings, None).unwrap();
        let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
        if !ctx.kinks().is_empty() {
            // weakly complementary solution: one-sided derivatives, FD
            // would straddle the kink
            continue;
        }
        tested += 1;
        for _ in 0..3 {
            let db: Vec<f64> = (0..p.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dc: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fwd = ctx
                .forward(&Perturbation {
                    db: Some(db.clone()),
                    dc: Some(dc.clone()),
                    ..Default::default()
                })
                .unwrap();
            assert!(!fwd.approximate, "seed {seed}: normal residual {}", fwd.normal_residual);
            let fd = fd_solution(&p, &db, &dc, 1e-4, (&sol.x, &sol.y, &sol.s));
            let scale = fd.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for j in 0..p.n() {
                assert!(
                    (fwd.dx[j] - fd[j]).abs() <= 1e-3 * scale,
                    "seed {seed} comp {j}: forward {} vs fd {}",
                    fwd.dx[j],
                    fd[j]
                );
            }
        }
    }
    assert!(tested >= 6, "only {tested} smooth instances out of 10");
}

#[test]
fn adjoint_and_forward_satisfy_the_pairing_identity() {
    let p = random_feasible_socp(3);
    let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
    let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let (n, m) = (p.n(), p.m());
    for trial in 0..50 {
        let db: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dc: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tri = Vec::new();
        for _ in 0..6 {
            tri.push((rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(-1.0..1.0)));
        }
        let da = CscMat::from_triplets(m, n, &tri);
        let gx: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fwd = ctx
            .forward(&Perturbation {
                da: Some(da.clone()),
                db: Some(db.clone()),
                dc: Some(dc.clone()),
            })
            .unwrap();
        let adj = ctx.adjoint(&gx, &gy, &gs);
        let lhs = dot(&gx, &fwd.dx) + dot(&gy, &fwd.dy) + dot(&gs, &fwd.ds);
        let rhs = dot(&adj.gb, &db) + dot(&adj.gc, &dc) + adj.ga_dot(&da);
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        assert!(
            (lhs - rhs).abs() <= 1e-8 * scale,
            "trial {trial}: <g, J d> = {lhs} but <J'g, d> = {rhs}"
        );
    }
}

#[test]
fn value_function_gradient_equals_negative_multipliers() {
    // d(c'x*)/db = -y* whenever the solution map is differentiable
    for seed in [5u64, 11, 17] {
        let p = random_feasible_socp(seed);
        let settings = SolverSettings { tol: 1e-10, ..Default::default() };
        let sol = solve_hsde(&p, &settings, None).unwrap();
        let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
        if !ctx.kinks().is_empty() {
            continue;
        }
        let zeros = vec![0.0; p.m()];
        let adj = ctx.adjoint(&p.c, &zeros, &zeros);
        for i in 0..p.m() {
            assert!(
                (adj.gb[i] + sol.y[i]).abs() <= 1e-6 * (1.0 + sol.y[i].abs()),
                "seed {seed} row {i}: gb = {} vs -y = {}",
                adj.gb[i],
                -sol.y[i]
            );
        }
    }
}

#[test]
fn rank_two_gradient_assembles_consistently() {
    let p = random_feasible_socp(21);
    let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
    let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gx: Vec<f64> = (0..p.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let gy = vec![0.0; p.m()];
    let gs = vec![0.0; p.m()];
    let adj = ctx.adjoint(&gx, &gy, &gs);
    let dense = adj.ga_dense();
    let mut tri = Vec::new();
    for i in 0..p.m() {
        for j in 0..p.n() {
            if rng.gen_bool(0.3) {
                tri.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    tri.push((0, 0, 0.5));
    let da = CscMat::from_triplets(p.m(), p.n(), &tri);
    let lazy = adj.ga_dot(&da);
    let mut explicit = 0.0;
    for (i, j, v) in da.to_triplets() {
        explicit += v * dense[i][j];
    }
    assert!((lazy - explicit).abs() <= 1e-12 * (1.0 + explicit.abs()));
}
