mod common;

use common::random_feasible_socp;
use conic::{
    kkt_report, solve_hsde, Cone, ConeSet, ConicProblem, CscMat, SolveError, SolverSettings,
};

fn lp_box() -> ConicProblem {
    // min x1 + x2 s.t. x >= 1 componentwise
    let a = CscMat::from_triplets(2, 2, &[(0, 0, -1.0), (1, 1, -1.0)]);
    ConicProblem {
        a,
        b: vec![-1.0, -1.0],
        c: vec![1.0, 1.0],
        cones: ConeSet::new(vec![Cone::NonNeg(2)]),
    }
}

#[test]
fn lp_reaches_the_vertex() {
    let p = lp_box();
    let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
    assert!((sol.x[0] - 1.0).abs() < 1e-7, "x = {:?}", sol.x);
    assert!((sol.x[1] - 1.0).abs() < 1e-7);
    assert!((sol.y[0] - 1.0).abs() < 1e-7, "y = {:?}", sol.y);
    assert!((sol.y[1] - 1.0).abs() < 1e-7);
    assert!((sol.obj_primal - 2.0).abs() < 1e-7);
    assert!((sol.obj_primal - sol.obj_dual).abs() < 1e-7);
    assert!(sol.kkt.within(1e-7), "kkt = {:?}", sol.kkt);
    assert!(sol.n_residual <= 1e-8);
}

#[test]
fn soc_norm_bound_hits_the_analytic_solution() {
    // min t s.t. ||(3, 4)|| <= t
    let a = CscMat::from_triplets(3, 1, &[(0, 0, -1.0)]);
    let p = ConicProblem {
        a,
        b: vec![0.0, 3.0, 4.0],
        c: vec![1.0],
        cones: ConeSet::new(vec![Cone::Soc(3)]),
    };
    let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
    assert!((sol.x[0] - 5.0).abs() < 1e-7, "t = {}", sol.x[0]);
    assert!((sol.y[0] - 1.0).abs() < 1e-7, "y = {:?}", sol.y);
    assert!((sol.y[1] + 0.6).abs() < 1e-7);
    assert!((sol.y[2] + 0.8).abs() < 1e-7);
    assert!((sol.s[0] - 5.0).abs() < 1e-6 && (sol.s[1] - 3.0).abs() < 1e-6);
}

#[test]
fn random_mixed_cone_problems_solve_to_tolerance() {
    for seed in 0..12u64 {
        let p = random_feasible_socp(seed);
        let sol = solve_hsde(&p, &SolverSettings::default(), None)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(sol.kkt.within(1e-7), "seed {seed}: kkt = {:?}", sol.kkt);
        assert!(sol.n_residual <= 1e-8, "seed {seed}: residual {}", sol.n_residual);
        assert!(
            (sol.obj_primal - sol.obj_dual).abs() <= 1e-6 * (1.0 + sol.obj_primal.abs()),
            "seed {seed}: gap {} vs {}",
            sol.obj_primal,
            sol.obj_dual
        );
    }
}

#[test]
fn contradictory_bounds_produce_a_valid_infeasibility_certificate() {
    // x <= -1 and x >= 1
    let a = CscMat::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, -1.0)]);
    let p = ConicProblem {
        a: a.clone(),
        b: vec![-1.0, -1.0],
        c: vec![0.0],
        cones: ConeSet::new(vec![Cone::NonNeg(2)]),
    };
    match solve_hsde(&p, &SolverSettings::default(), None) {
        Err(SolveError::Infeasible { certificate, residual }) => {
            let bty: f64 = p.b.iter().zip(&certificate).map(|(b, y)| b * y).sum();
            assert!((bty + 1.0).abs() < 1e-9, "b'y = {bty}");
            assert!(certificate.iter().all(|&y| y >= -1e-9), "y = {certificate:?}");
            let aty = a.matvec_transpose(&certificate);
            assert!(aty.iter().all(|v| v.abs() < 1e-6), "A'y = {aty:?}");
            assert!(residual < 1e-6);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn unbounded_objective_produces_a_valid_ray() {
    // min -x s.t. x >= 0
    let a = CscMat::from_triplets(1, 1, &[(0, 0, -1.0)]);
    let p = ConicProblem {
        a: a.clone(),
        b: vec![0.0],
        c: vec![-1.0],
        cones: ConeSet::new(vec![Cone::NonNeg(1)]),
    };
    match solve_hsde(&p, &SolverSettings::default(), None) {
        Err(SolveError::Unbounded { certificate_x, certificate_s, residual }) => {
            let ctx: f64 = p.c.iter().zip(&certificate_x).map(|(c, x)| c * x).sum();
            assert!((ctx + 1.0).abs() < 1e-9, "c'x = {ctx}");
            let mut r = certificate_s.clone();
            a.axpy(1.0, &certificate_x, &mut r);
            assert!(r.iter().all(|v| v.abs() < 1e-6), "Ax + s = {r:?}");
            assert!(certificate_s.iter().all(|&s| s >= -1e-9));
            assert!(residual < 1e-6);
        }
        other => panic!("expected unboundedness, got {other:?}"),
    }
}

#[test]
fn warm_start_reconverges_after_a_small_data_change() {
    let p = random_feasible_socp(99);
    let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
    let mut p2 = p.clone();
    for v in p2.b.iter_mut() {
        *v *= 1.001;
    }
    let warm = solve_hsde(&p2, &SolverSettings::default(), Some((&sol.x, &sol.y, &sol.s))).unwrap();
    assert!(warm.kkt.within(1e-7));
    let cold = solve_hsde(&p2, &SolverSettings::default(), None).unwrap();
    assert!(
        warm.iters <= cold.iters,
        "warm start took {} iters vs {} cold",
        warm.iters,
        cold.iters
    );
}

#[test]
fn disabling_equilibration_changes_nothing_about_the_answer() {
    let p = random_feasible_socp(7);
    let scaled = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
    let raw_settings = SolverSettings { scaling: false, ..Default::default() };
    let raw = solve_hsde(&p, &raw_settings, None).unwrap();
    for (a, b) in scaled.x.iter().zip(&raw.x) {
        assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", scaled.x, raw.x);
    }
    let report = kkt_report(&p, &raw.x, &raw.y, &raw.s);
    assert!(report.within(1e-7));
}
