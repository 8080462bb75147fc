//! Forward- and adjoint-mode differentiation of the conic solution map.
//!
//! At an optimal embedding point z the solution map (A, b, c) -> (x, y, s)
//! is differentiated implicitly through the normalized residual map: with
//! M = (Q - I) DPi(z) + I, a data perturbation dQ moves the solution by
//! dz = -pinv(M) dQ Pi(z), and the primal-dual perturbation is Dphi(z) dz.
//! M is singular along span{z}, so both modes use minimum-norm least
//! squares; the component along z is irrelevant because Dphi(z) z = 0.

use crate::cone::{dproject_cone, ConeJacobian, ConeSpec};
use crate::embed::{
    build_q, construct_solution, dphi_adjoint, dphi_apply, ConicProblem, RecoverError, Recovered,
};
use crate::ldl::LdlError;
use crate::msolve::{assemble_m, MSolver};
use crate::sparse::{dot, norm2, CscMat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("cannot differentiate at this point: {0}")]
    Recover(#[from] RecoverError),
    #[error("derivative KKT factorization failed: {0}")]
    Factorization(#[from] LdlError),
    #[error("perturbation shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
}

#[derive(Debug, Clone)]
pub struct DiffSettings {
    /// Kink tolerance for classifying projection regions at z.
    pub kink_tol: f64,
    /// Static regularization for the augmented least-squares factorization.
    pub reg_delta: f64,
    /// Iterated-Tikhonov refinement passes per solve.
    pub ls_refine: usize,
    /// Relative normal-residual threshold above which a solve is flagged.
    pub approx_tol: f64,
}

impl Default for DiffSettings {
    fn default() -> Self {
        DiffSettings { kink_tol: 1e-7, reg_delta: 1e-8, ls_refine: 6, approx_tol: 1e-6 }
    }
}

/// Data perturbation (dA, db, dc); any part may be omitted.
#[derive(Debug, Clone, Default)]
pub struct Perturbation {
    pub da: Option<CscMat>,
    pub db: Option<Vec<f64>>,
    pub dc: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardSensitivity {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub ds: Vec<f64>,
    /// Normal-equation residual of the least-squares solve.
    pub normal_residual: f64,
    /// True when the solve left a non-negligible normal residual, which
    /// happens at weakly complementary (kinked) solutions.
    pub approximate: bool,
}

/// Gradients with respect to the problem data for one cotangent
/// (gx, gy, gs). The gradient with respect to A is rank two and is kept
/// in factored form: gA[i][j] = y[i] wx[j] - wy[i] x[j].
#[derive(Debug, Clone)]
pub struct AdjointSensitivity {
    pub gb: Vec<f64>,
    pub gc: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    pub normal_residual: f64,
    pub approximate: bool,
}

impl AdjointSensitivity {
    pub fn ga_entry(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.wx[j] - self.wy[i] * self.x[j]
    }

    /// Dense gA, for small problems and tests.
    pub fn ga_dense(&self) -> Vec<Vec<f64>> {
        (0..self.y.len())
            .map(|i| (0..self.x.len()).map(|j| self.ga_entry(i, j)).collect())
            .collect()
    }

    /// Inner product of gA with a sparse direction dA, without forming gA.
    pub fn ga_dot(&self, da: &CscMat) -> f64 {
        let mut acc = 0.0;
        for (i, j, v) in da.to_triplets() {
            acc += v * self.ga_entry(i, j);
        }
        acc
    }
}

/// Shared factorization for any number of forward/adjoint evaluations at
/// one solution. Construction does the only expensive work.
pub struct DerivativeContext {
    z: Vec<f64>,
    spec: ConeSpec,
    rec: Recovered,
    jac: ConeJacobian,
    solver: MSolver,
    settings: DiffSettings,
    n: usize,
    m: usize,
}

impl DerivativeContext {
    /// `z` must be an omega-normalized optimal embedding point for
    /// `problem`, e.g. `SolutionBundle::z`.
    pub fn new(
        problem: &ConicProblem,
        z: &[f64],
        settings: DiffSettings,
    ) -> Result<Self, DiffError> {
        let spec = ConeSpec { n: problem.n(), cones: problem.cones.clone() };
        let rec = construct_solution(z, &spec, settings.kink_tol)?;
        let jac = dproject_cone(z, &spec, settings.kink_tol);
        let q = build_q(&problem.a, &problem.b, &problem.c);
        let m_mat = assemble_m(&q, &jac);
        let delta = settings.reg_delta * m_mat.max_abs().max(1.0);
        let solver = MSolver::new(m_mat, delta)?;
        Ok(DerivativeContext {
            z: z.to_vec(),
            n: problem.n(),
            m: problem.m(),
            spec,
            rec,
            jac,
            solver,
            settings,
        })
    }

    /// Jacobian blocks flagged as within kink tolerance of a projection
    /// boundary; derivatives there are one-sided.
    pub fn kinks(&self) -> &[usize] {
        &self.jac.kinks
    }

    pub fn solution(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.rec.x, &self.rec.y, &self.rec.s)
    }

    fn check_shapes(&self, dp: &Perturbation) -> Result<(), DiffError> {
        if let Some(da) = &dp.da {
            if da.m != self.m || da.n != self.n {
                return Err(DiffError::Shape {
                    expected: format!("dA {}x{}", self.m, self.n),
                    got: format!("dA {}x{}", da.m, da.n),
                });
            }
        }
        if let Some(db) = &dp.db {
            if db.len() != self.m {
                return Err(DiffError::Shape {
                    expected: format!("db len {}", self.m),
                    got: format!("db len {}", db.len()),
                });
            }
        }
        if let Some(dc) = &dp.dc {
            if dc.len() != self.n {
                return Err(DiffError::Shape {
                    expected: format!("dc len {}", self.n),
                    got: format!("dc len {}", dc.len()),
                });
            }
        }
        Ok(())
    }

    /// Directional derivative of (x, y, s) along (dA, db, dc).
    pub fn forward(&self, dp: &Perturbation) -> Result<ForwardSensitivity, DiffError> {
        self.check_shapes(dp)?;
        let (n, m) = (self.n, self.m);
        // g = dQ * Pi(z) with Pi(z) = (x, y, 1)
        let mut g = vec![0.0; n + m + 1];
        if let Some(da) = &dp.da {
            da.axpy_transpose(1.0, &self.rec.y, &mut g[..n]);
            da.axpy(-1.0, &self.rec.x, &mut g[n..n + m]);
        }
        if let Some(dc) = &dp.dc {
            for j in 0..n {
                g[j] += dc[j];
            }
            g[n + m] -= dot(dc, &self.rec.x);
        }
        if let Some(db) = &dp.db {
            for i in 0..m {
                g[n + i] += db[i];
            }
            g[n + m] -= dot(db, &self.rec.y);
        }
        for v in g.iter_mut() {
            *v = -*v;
        }
        let sol = self.solver.solve(&g, self.settings.ls_refine);
        let (dx, dy, ds) = dphi_apply(&self.z, &self.spec, &self.jac, &self.rec, &sol.x);
        let scale = norm2(&g).max(1.0);
        Ok(ForwardSensitivity {
            dx,
            dy,
            ds,
            normal_residual: sol.normal_residual,
            approximate: sol.normal_residual > self.settings.approx_tol * scale,
        })
    }

    /// Gradients of the scalar <gx, x> + <gy, y> + <gs, s> with respect to
    /// the problem data.
    pub fn adjoint(&self, gx: &[f64], gy: &[f64], gs: &[f64]) -> AdjointSensitivity {
        assert_eq!(gx.len(), self.n, "gx length");
        assert_eq!(gy.len(), self.m, "gy length");
        assert_eq!(gs.len(), self.m, "gs length");
        let (n, m) = (self.n, self.m);
        let mut gz = dphi_adjoint(&self.z, &self.spec, &self.jac, &self.rec, gx, gy, gs);
        for v in gz.iter_mut() {
            *v = -*v;
        }
        let sol = self.solver.solve_transpose(&gz, self.settings.ls_refine);
        let w = &sol.x;
        let w_tau = w[n + m];
        let gb: Vec<f64> = (0..m).map(|i| w[n + i] - w_tau * self.rec.y[i]).collect();
        let gc: Vec<f64> = (0..n).map(|j| w[j] - w_tau * self.rec.x[j]).collect();
        let scale = norm2(&gz).max(1.0);
        AdjointSensitivity {
            gb,
            gc,
            wx: w[..n].to_vec(),
            wy: w[n..n + m].to_vec(),
            x: self.rec.x.clone(),
            y: self.rec.y.clone(),
            normal_residual: sol.normal_residual,
            approximate: sol.normal_residual > self.settings.approx_tol * scale,
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{Cone, ConeSet};
    use crate::solver::{solve_hsde, SolverSettings};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    // min x1 + 2 x2  s.t.  x >= [1, 2]  (as -x + s = -[1,2], s in R^2_+)
    fn toy_lp() -> ConicProblem {
        let a = CscMat::from_triplets(2, 2, &[(0, 0, -1.0), (1, 1, -1.0)]);
        ConicProblem {
            a,
            b: vec![-1.0, -2.0],
            c: vec![1.0, 2.0],
            cones: ConeSet::new(vec![Cone::NonNeg(2)]),
        }
    }

    #[test]
    fn lp_sensitivity_matches_multipliers() {
        let p = toy_lp();
        let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
        let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
        // objective value = c'x; d(c'x)/db = -y at a nondegenerate LP optimum
        let adj = ctx.adjoint(&p.c, &vec![0.0; 2], &vec![0.0; 2]);
        assert!(!adj.approximate);
        for i in 0..2 {
            assert!((adj.gb[i] + sol.y[i]).abs() < 1e-7, "gb = {:?} y = {:?}", adj.gb, sol.y);
        }
        // x* sits at a nondegenerate vertex, so dx/dc = 0: the implicit
        // part of d<c, x(c)>/dc vanishes and dy/dc tracks dc exactly
        for j in 0..2 {
            assert!(adj.gc[j].abs() < 1e-7, "gc = {:?}", adj.gc);
        }
        let fwd = ctx
            .forward(&Perturbation { dc: Some(vec![0.3, -0.4]), ..Default::default() })
            .unwrap();
        for j in 0..2 {
            assert!(fwd.dx[j].abs() < 1e-7, "dx = {:?}", fwd.dx);
            assert!(fwd.ds[j].abs() < 1e-7, "ds = {:?}", fwd.ds);
        }
        assert!((fwd.dy[0] - 0.3).abs() < 1e-7 && (fwd.dy[1] + 0.4).abs() < 1e-7);
    }

    #[test]
    fn forward_and_adjoint_agree_on_pairings() {
        let p = toy_lp();
        let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
        let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let db: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dc: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let da = CscMat::from_triplets(
                2,
                2,
                &[(0, 0, rng.gen_range(-0.3..0.3)), (1, 0, rng.gen_range(-0.3..0.3))],
            );
            let gx: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gy: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gs: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
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
            assert!(
                (lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs().max(rhs.abs())),
                "pairing mismatch: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = toy_lp();
        let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
        let ctx = DerivativeContext::new(&p, &sol.z, DiffSettings::default()).unwrap();
        let bad = Perturbation { db: Some(vec![1.0; 3]), ..Default::default() };
        assert!(matches!(ctx.forward(&bad), Err(DiffError::Shape { .. })));
    }
}
