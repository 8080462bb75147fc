//! Operator-splitting solver over the homogeneous self-dual embedding.
//!
//! Each iteration alternates one linear solve against the static matrix
//! [[I, A'], [A, -I]] (factored once, Sherman-Morrison for the (c, b)
//! rank-one border) with one projection onto R^n x K* x R_+. Problem data
//! is Ruiz-equilibrated first and every accepted solution is unscaled and
//! then polished by Gauss-Newton steps on the normalized residual map of
//! the original data, so reported residuals always refer to the caller's
//! (A, b, c).

use crate::cone::{dproject_cone, project_cone, ConeSpec};
use crate::embed::{
    build_q, construct_solution, embed_solution, kkt_report, residual_map, ConicProblem,
    KktReport, ProblemError, SkewMap,
};
use crate::ldl::{amd_order, ldl_factor, LdlError, LdlFactor};
use crate::msolve::{assemble_m, MSolver};
use crate::scaling::{ruiz, Scaling};
use crate::sparse::{dot, norm2, CscMat};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Acceptance threshold on ||N(z, Q)|| over the original data.
    pub tol: f64,
    /// Acceptance threshold on the recovered KKT residuals.
    pub kkt_tol: f64,
    pub max_iters: usize,
    /// Ruiz equilibration on/off.
    pub scaling: bool,
    pub ruiz_iters: usize,
    /// Over-relaxation parameter in (0, 2).
    pub over_relax: f64,
    /// Residual and certificate checks every this many iterations.
    pub check_interval: usize,
    /// Gauss-Newton polish iterations after the splitting loop.
    pub polish_steps: usize,
    /// Iterated-Tikhonov passes per least-squares solve.
    pub ls_refine: usize,
    pub kink_tol: f64,
    /// Relative tolerance for infeasibility/unboundedness certificates.
    pub infeas_tol: f64,
    /// Static regularization added to factored KKT-type matrices.
    pub reg_delta: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            kkt_tol: 1e-7,
            max_iters: 100_000,
            scaling: true,
            ruiz_iters: 10,
            over_relax: 1.5,
            check_interval: 25,
            polish_steps: 4,
            ls_refine: 6,
            kink_tol: 1e-7,
            infeas_tol: 1e-7,
            reg_delta: 1e-8,
        }
    }
}

/// Primal-dual solution with the embedding point it came from.
#[derive(Debug, Clone)]
pub struct SolutionBundle {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// Omega-normalized embedding point in original data space.
    pub z: Vec<f64>,
    pub obj_primal: f64,
    pub obj_dual: f64,
    /// ||N(z, Q)|| on the original data.
    pub n_residual: f64,
    pub kkt: KktReport,
    /// Cone-Jacobian block indices within kink tolerance at z.
    pub kinks: Vec<usize>,
    pub iters: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    Invalid(#[from] ProblemError),
    #[error("KKT factorization failed: {0}")]
    Factorization(#[from] LdlError),
    #[error(
        "iteration limit {iters} reached: residual {n_residual:.3e}, KKT violation {kkt_violation:.3e}"
    )]
    MaxIters { iters: usize, n_residual: f64, kkt_violation: f64 },
    #[error("problem is primal infeasible (certificate with b'y = -1, ||A'y|| = {residual:.3e})")]
    Infeasible { certificate: Vec<f64>, residual: f64 },
    #[error("problem is unbounded below (certificate with c'x = -1, ||Ax + s|| = {residual:.3e})")]
    Unbounded { certificate_x: Vec<f64>, certificate_s: Vec<f64>, residual: f64 },
}

struct MTildeSolver {
    factor: LdlFactor,
    k_exact: CscMat,
    n: usize,
    m: usize,
}

impl MTildeSolver {
    /// Factors [[I, A'], [A, -I]] with +/- delta regularization.
    fn new(a: &CscMat, delta: f64) -> Result<Self, LdlError> {
        let (m, n) = (a.m, a.n);
        let mut t = Vec::with_capacity(2 * a.nnz() + n + m);
        for (i, j, v) in a.to_triplets() {
            t.push((n + i, j, v));
            t.push((j, n + i, v));
        }
        let mut t_exact = t.clone();
        for j in 0..n {
            t.push((j, j, 1.0 + delta));
            t_exact.push((j, j, 1.0));
        }
        for i in 0..m {
            t.push((n + i, n + i, -1.0 - delta));
            t_exact.push((n + i, n + i, -1.0));
        }
        let k_reg = CscMat::from_triplets(n + m, n + m, &t);
        let k_exact = CscMat::from_triplets(n + m, n + m, &t_exact);
        let perm = amd_order(&k_reg)?;
        let factor = ldl_factor(&k_reg, &perm)?;
        Ok(MTildeSolver { factor, k_exact, n, m })
    }

    /// Solves [[I, A'], [-A, I]] out = (p, q).
    fn solve(&self, p: &[f64], q: &[f64], refine: usize) -> Vec<f64> {
        let mut rhs = Vec::with_capacity(self.n + self.m);
        rhs.extend_from_slice(p);
        rhs.extend(q.iter().map(|v| -v));
        self.factor.solve_refined(&self.k_exact, &rhs, refine)
    }
}

struct ScaledData {
    a: CscMat,
    b: Vec<f64>,
    c: Vec<f64>,
    scaling: Scaling,
}

fn scale_problem(p: &ConicProblem, settings: &SolverSettings) -> ScaledData {
    let mut a = p.a.clone();
    let mut scaling = if settings.scaling {
        ruiz(&mut a, &p.cones, settings.ruiz_iters)
    } else {
        Scaling::identity(p.m(), p.n())
    };
    let mut b: Vec<f64> = p.b.iter().zip(&scaling.d).map(|(v, d)| v * d).collect();
    let mut c: Vec<f64> = p.c.iter().zip(&scaling.e).map(|(v, e)| v * e).collect();
    if settings.scaling {
        let nb = norm2(&b);
        let nc = norm2(&c);
        scaling.rho = if nb > 0.0 { ((p.m() as f64).sqrt() / nb).clamp(1e-6, 1e6) } else { 1.0 };
        scaling.sigma = if nc > 0.0 { ((p.n() as f64).sqrt() / nc).clamp(1e-6, 1e6) } else { 1.0 };
        for v in b.iter_mut() {
            *v *= scaling.rho;
        }
        for v in c.iter_mut() {
            *v *= scaling.sigma;
        }
    }
    ScaledData { a, b, c, scaling }
}

/// Direct evaluation of sqrt(rp^2 + rd^2 + gap^2), which equals
/// ||N(embed(x, y, s), Q)|| whenever (y, s) are blockwise complementary.
fn kkt_stack_norm(p: &ConicProblem, x: &[f64], y: &[f64], s: &[f64]) -> f64 {
    let mut rp: Vec<f64> = s.iter().zip(&p.b).map(|(si, bi)| si - bi).collect();
    p.a.axpy(1.0, x, &mut rp);
    let mut rd = p.c.clone();
    p.a.axpy_transpose(1.0, y, &mut rd);
    let gap = dot(&p.c, x) + dot(&p.b, y);
    (norm2(&rp).powi(2) + norm2(&rd).powi(2) + gap * gap).sqrt()
}

pub fn solve_hsde(
    problem: &ConicProblem,
    settings: &SolverSettings,
    warm: Option<(&[f64], &[f64], &[f64])>,
) -> Result<SolutionBundle, SolveError> {
    problem.validate()?;
    let n = problem.n();
    let m = problem.m();
    let dim = n + m + 1;
    let sd = scale_problem(problem, settings);
    let spec = ConeSpec { n, cones: problem.cones.clone() };

    let mt = MTildeSolver::new(&sd.a, settings.reg_delta)?;
    let mut h = Vec::with_capacity(n + m);
    h.extend_from_slice(&sd.c);
    h.extend_from_slice(&sd.b);
    let h_sol = mt.solve(&h[..n], &h[n..], 2);
    let denom = 1.0 + dot(&h, &h_sol);

    // iterate state
    let mut u = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    match warm {
        Some((x0, y0, s0)) => {
            let mut xs = x0.to_vec();
            let mut ys = y0.to_vec();
            let mut ss = s0.to_vec();
            sd.scaling.scale_point(&mut xs, &mut ys, &mut ss);
            u[..n].copy_from_slice(&xs);
            u[n..n + m].copy_from_slice(&ys);
            u[dim - 1] = 1.0;
            v[n..n + m].copy_from_slice(&ss);
        }
        None => {
            u[dim - 1] = 1.0;
            v[dim - 1] = 1.0;
        }
    }

    let alpha = settings.over_relax;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let mut iters_done = settings.max_iters;
    let mut warnings = Vec::new();

    let mut w = vec![0.0; dim];
    let mut g = vec![0.0; n + m];
    let mut utilde = vec![0.0; dim];
    let mut xi = vec![0.0; dim];

    for k in 0..settings.max_iters {
        // linear step: (I + Q) utilde = u + v
        for i in 0..dim {
            w[i] = u[i] + v[i];
        }
        let w_tau = w[dim - 1];
        for i in 0..n + m {
            g[i] = w[i] - w_tau * h[i];
        }
        let p = mt.solve(&g[..n], &g[n..], 1);
        let hp = dot(&h, &p);
        for i in 0..n + m {
            utilde[i] = p[i] - h_sol[i] * (hp / denom);
        }
        utilde[dim - 1] = w_tau + dot(&h, &utilde[..n + m]);

        // projection step with over-relaxation
        for i in 0..dim {
            xi[i] = alpha * utilde[i] + (1.0 - alpha) * u[i] - v[i];
        }
        let u_next = project_cone(&xi, &spec);
        for i in 0..dim {
            v[i] = u_next[i] - xi[i];
        }
        u = u_next;

        if (k + 1) % settings.check_interval != 0 && k + 1 != settings.max_iters {
            continue;
        }

        let tau = u[dim - 1];
        if tau > 1e-9 * norm2(&u).max(1.0) {
            let mut x: Vec<f64> = u[..n].iter().map(|ui| ui / tau).collect();
            let mut yv: Vec<f64> = u[n..n + m].iter().map(|ui| ui / tau).collect();
            let mut s: Vec<f64> = v[n..n + m].iter().map(|vi| vi / tau).collect();
            sd.scaling.unscale(&mut x, &mut yv, &mut s);
            let nres = kkt_stack_norm(problem, &x, &yv, &s);
            if best.as_ref().map_or(true, |(b, ..)| nres < *b) {
                best = Some((nres, x, yv, s));
            }
            if nres <= settings.tol {
                iters_done = k + 1;
                break;
            }
        }

        // certificate checks on the scaled ray
        let bty = dot(&sd.b, &u[n..n + m]);
        if bty < -1e-12 {
            let yc: Vec<f64> = u[n..n + m].iter().map(|ui| -ui / bty).collect();
            let aty = sd.a.matvec_transpose(&yc);
            if norm2(&aty) <= settings.infeas_tol {
                let dir: Vec<f64> =
                    yc.iter().zip(&sd.scaling.d).map(|(yi, di)| yi * di).collect();
                let beta = -dot(&problem.b, &dir);
                if beta > 0.0 {
                    let cert: Vec<f64> = dir.iter().map(|yi| yi / beta).collect();
                    let resid = norm2(&problem.a.matvec_transpose(&cert));
                    if resid <= 1e-6 * norm2(&cert).max(1.0) * problem.a.max_abs().max(1.0) {
                        return Err(SolveError::Infeasible { certificate: cert, residual: resid });
                    }
                }
            }
        }
        let ctx = dot(&sd.c, &u[..n]);
        if ctx < -1e-12 {
            let xc: Vec<f64> = u[..n].iter().map(|ui| -ui / ctx).collect();
            let sc: Vec<f64> = v[n..n + m].iter().map(|vi| -vi / ctx).collect();
            let mut r = sc.clone();
            sd.a.axpy(1.0, &xc, &mut r);
            if norm2(&r) <= settings.infeas_tol {
                let xdir: Vec<f64> =
                    xc.iter().zip(&sd.scaling.e).map(|(xj, ej)| xj * ej).collect();
                let sdir: Vec<f64> =
                    sc.iter().zip(&sd.scaling.d).map(|(si, di)| si / di).collect();
                let gamma = -dot(&problem.c, &xdir);
                if gamma > 0.0 {
                    let cx: Vec<f64> = xdir.iter().map(|v| v / gamma).collect();
                    let cs: Vec<f64> = sdir.iter().map(|v| v / gamma).collect();
                    let mut rr = cs.clone();
                    problem.a.axpy(1.0, &cx, &mut rr);
                    let resid = norm2(&rr);
                    if resid <= 1e-6 * norm2(&cx).max(1.0) * problem.a.max_abs().max(1.0) {
                        return Err(SolveError::Unbounded {
                            certificate_x: cx,
                            certificate_s: cs,
                            residual: resid,
                        });
                    }
                }
            }
        }
    }

    let (mut nres_best, x, yv, s) = match best {
        Some(b) => b,
        None => {
            return Err(SolveError::MaxIters {
                iters: settings.max_iters,
                n_residual: f64::INFINITY,
                kkt_violation: f64::INFINITY,
            })
        }
    };
    if iters_done == settings.max_iters {
        warnings.push(format!(
            "splitting loop hit the iteration limit at residual {nres_best:.3e}; relying on polish"
        ));
    }

    // polish on original data
    let mut z = embed_solution(&x, &yv, &s);
    let skew = SkewMap::new(problem);
    let q_csc = build_q(&problem.a, &problem.b, &problem.c);
    if settings.polish_steps > 0 {
        let mut r = residual_map(&z, &skew, &spec);
        let mut rnorm = norm2(&r);
        for _ in 0..settings.polish_steps {
            if rnorm <= 1e-14 * (1.0 + norm2(&problem.b) + norm2(&problem.c)) {
                break;
            }
            let jac = dproject_cone(&z, &spec, settings.kink_tol);
            let m_mat = assemble_m(&q_csc, &jac);
            let delta = settings.reg_delta * m_mat.max_abs().max(1.0);
            let solver = match MSolver::new(m_mat, delta) {
                Ok(sv) => sv,
                Err(e) => {
                    warnings.push(format!("polish factorization failed: {e}"));
                    break;
                }
            };
            let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
            let sol = solver.solve(&neg_r, settings.ls_refine);
            let mut improved = false;
            let mut step = 1.0;
            for _ in 0..5 {
                let mut cand: Vec<f64> =
                    z.iter().zip(&sol.x).map(|(zi, di)| zi + step * di).collect();
                let om = cand[dim - 1];
                if om > 1e-9 {
                    for ci in cand.iter_mut() {
                        *ci /= om;
                    }
                    let rc = residual_map(&cand, &skew, &spec);
                    let rcn = norm2(&rc);
                    if rcn < rnorm * (1.0 - 1e-6) {
                        z = cand;
                        r = rc;
                        rnorm = rcn;
                        improved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        nres_best = rnorm;
    }

    let rec = construct_solution(&z, &spec, settings.kink_tol)
        .expect("polished embedding point kept omega = 1");
    let kkt = kkt_report(problem, &rec.x, &rec.y, &rec.s);
    let nres = norm2(&residual_map(&z, &skew, &spec));
    let _ = nres_best;

    if nres > settings.tol || !kkt.within(settings.kkt_tol) {
        return Err(SolveError::MaxIters {
            iters: iters_done,
            n_residual: nres,
            kkt_violation: kkt.max_violation(),
        });
    }

    Ok(SolutionBundle {
        obj_primal: dot(&problem.c, &rec.x),
        obj_dual: -dot(&problem.b, &rec.y),
        x: rec.x,
        y: rec.y,
        s: rec.s,
        z,
        n_residual: nres,
        kkt,
        kinks: rec.kinks,
        iters: iters_done,
        warnings,
    })
}
