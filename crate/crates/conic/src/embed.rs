//! Homogeneous self-dual embedding of the conic pair
//!
//!   min c'x  s.t.  Ax + s = b, s in K        (primal)
//!   min b'y  s.t.  A'y + c = 0, y in K*      (dual)
//!
//! Embedding points z of dimension n + m + 1 are partitioned (u, v, omega).
//! The normalized residual map N and the recovery map phi below are the
//! whole interface between the splitting solver and the differentiation
//! machinery.

use crate::cone::{
    dist_to_cone, dist_to_dual_cone, dproject_cone, project_cone, project_onto_dual, ConeJacobian,
    ConeSet, ConeSpec,
};
use crate::sparse::{dot, norm2, CscMat};
use thiserror::Error;

/// Problem data for one conic program instance.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    /// m-by-n constraint matrix.
    pub a: CscMat,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub cones: ConeSet,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: A is {m}x{n}, b has {blen}, c has {clen}")]
    Dims { m: usize, n: usize, blen: usize, clen: usize },
    #[error("cone dimensions sum to {cone_dim} but A has {m} rows")]
    ConeDim { cone_dim: usize, m: usize },
    #[error("invalid cone list: {0}")]
    Cones(String),
    #[error("equality rows {0:?} of A have no entries")]
    ZeroRows(Vec<usize>),
    #[error("non-finite entry in problem data")]
    NonFinite,
}

impl ConicProblem {
    pub fn n(&self) -> usize {
        self.a.n
    }

    pub fn m(&self) -> usize {
        self.a.m
    }

    pub fn spec(&self) -> ConeSpec {
        ConeSpec { n: self.n(), cones: self.cones.clone() }
    }

    pub fn zero_rows(&self) -> Vec<usize> {
        let mut hit = vec![false; self.m()];
        for &i in &self.a.rowind {
            hit[i] = true;
        }
        hit.iter().enumerate().filter(|(_, &h)| !h).map(|(i, _)| i).collect()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.b.len() != self.m() || self.c.len() != self.n() {
            return Err(ProblemError::Dims {
                m: self.m(),
                n: self.n(),
                blen: self.b.len(),
                clen: self.c.len(),
            });
        }
        if self.cones.dim() != self.m() {
            return Err(ProblemError::ConeDim { cone_dim: self.cones.dim(), m: self.m() });
        }
        self.cones.validate().map_err(ProblemError::Cones)?;
        if !self
            .a
            .values
            .iter()
            .chain(&self.b)
            .chain(&self.c)
            .all(|v| v.is_finite())
        {
            return Err(ProblemError::NonFinite);
        }
        // an empty row in an inequality or cone block just pins s_i = b_i;
        // an empty equality row is almost certainly a modeling bug
        let eq_dim: usize = self
            .cones
            .cones
            .iter()
            .map_while(|c| match c {
                crate::cone::Cone::Zero(d) => Some(*d),
                _ => None,
            })
            .sum();
        let zr: Vec<usize> =
            self.zero_rows().into_iter().filter(|&i| i < eq_dim).collect();
        if !zr.is_empty() {
            return Err(ProblemError::ZeroRows(zr));
        }
        Ok(())
    }
}

/// The skew-symmetric embedding operator
///
///   Q = [ 0    A'   c ]
///       [-A    0    b ]
///       [-c'  -b'   0 ].
pub struct SkewMap<'a> {
    pub a: &'a CscMat,
    pub b: &'a [f64],
    pub c: &'a [f64],
}

impl<'a> SkewMap<'a> {
    pub fn new(p: &'a ConicProblem) -> Self {
        SkewMap { a: &p.a, b: &p.b, c: &p.c }
    }

    pub fn dim(&self) -> usize {
        self.a.n + self.a.m + 1
    }

    /// out = Q z
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let n = self.a.n;
        let m = self.a.m;
        debug_assert_eq!(z.len(), n + m + 1);
        out.fill(0.0);
        let omega = z[n + m];
        self.a.axpy_transpose(1.0, &z[n..n + m], &mut out[..n]);
        for j in 0..n {
            out[j] += self.c[j] * omega;
        }
        self.a.axpy(-1.0, &z[..n], &mut out[n..n + m]);
        for i in 0..m {
            out[n + i] += self.b[i] * omega;
        }
        out[n + m] = -dot(self.c, &z[..n]) - dot(self.b, &z[n..n + m]);
    }

    pub fn to_csc(&self) -> CscMat {
        build_q(self.a, self.b, self.c)
    }
}

/// Assembles Q explicitly as a sparse matrix.
pub fn build_q(a: &CscMat, b: &[f64], c: &[f64]) -> CscMat {
    let n = a.n;
    let m = a.m;
    let dim = n + m + 1;
    let mut t = Vec::with_capacity(2 * a.nnz() + 2 * (n + m));
    for (i, j, v) in a.to_triplets() {
        t.push((j, n + i, v)); // A' block
        t.push((n + i, j, -v)); // -A block
    }
    for (j, &cj) in c.iter().enumerate() {
        if cj != 0.0 {
            t.push((j, n + m, cj));
            t.push((n + m, j, -cj));
        }
    }
    for (i, &bi) in b.iter().enumerate() {
        if bi != 0.0 {
            t.push((n + i, n + m, bi));
            t.push((n + m, n + i, -bi));
        }
    }
    CscMat::from_triplets(dim, dim, &t)
}

/// Embeds a candidate solution as z = (x, y - s, 1).
pub fn embed_solution(x: &[f64], y: &[f64], s: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + y.len() + 1);
    z.extend_from_slice(x);
    z.extend(y.iter().zip(s).map(|(yi, si)| yi - si));
    z.push(1.0);
    z
}

/// Normalized residual N(z, Q) = ((Q - I) Pi + I)(z / |omega|).
/// A point with N = 0 and omega > 0 encodes a primal-dual solution.
/// For omega == 0 the unnormalized residual is returned.
pub fn residual_map(z: &[f64], q: &SkewMap, spec: &ConeSpec) -> Vec<f64> {
    let dim = spec.embed_dim();
    debug_assert_eq!(z.len(), dim);
    let omega = z[dim - 1].abs();
    let zn: Vec<f64> = if omega > 0.0 { z.iter().map(|&v| v / omega).collect() } else { z.to_vec() };
    let u = project_cone(&zn, spec);
    let mut out = vec![0.0; dim];
    q.apply(&u, &mut out);
    for i in 0..dim {
        out[i] += zn[i] - u[i];
    }
    out
}

/// Solution recovered from an embedding point.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// Cone-Jacobian block indices flagged as kinks at z.
    pub kinks: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum RecoverError {
    #[error("embedding scalar omega = {0} is not positive; the point encodes a ray, not a solution")]
    NonPositiveOmega(f64),
}

/// phi(z): splits z = (u, v, omega) into x = u/omega, y = Pi_K*(v)/omega,
/// s = (Pi_K*(v) - v)/omega. Scale-invariant in z.
pub fn construct_solution(
    z: &[f64],
    spec: &ConeSpec,
    kink_tol: f64,
) -> Result<Recovered, RecoverError> {
    let n = spec.n;
    let m = spec.cones.dim();
    debug_assert_eq!(z.len(), n + m + 1);
    let omega = z[n + m];
    if !(omega > 0.0) {
        return Err(RecoverError::NonPositiveOmega(omega));
    }
    let v = &z[n..n + m];
    let pv = project_onto_dual(v, &spec.cones);
    let x = z[..n].iter().map(|&u| u / omega).collect();
    let y = pv.iter().map(|&p| p / omega).collect();
    let s = pv.iter().zip(v).map(|(p, vi)| (p - vi) / omega).collect();
    let kinks = dproject_cone(z, spec, kink_tol).kinks;
    Ok(Recovered { x, y, s, kinks })
}

/// Derivative of phi at z (omega-normalized), applied to a direction dz.
pub fn dphi_apply(
    z: &[f64],
    spec: &ConeSpec,
    jac: &ConeJacobian,
    rec: &Recovered,
    dz: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = spec.n;
    let m = spec.cones.dim();
    let omega = z[n + m];
    debug_assert!(omega > 0.0);
    let domega = dz[n + m];
    let dx: Vec<f64> =
        (0..n).map(|j| (dz[j] - rec.x[j] * domega) / omega).collect();
    // middle blocks of the cone Jacobian act on the v part
    let mut jdv = vec![0.0; m];
    let mut at = 0;
    for b in &jac.blocks[1..jac.blocks.len() - 1] {
        let d = b.dim();
        b.apply(&dz[n + at..n + at + d], &mut jdv[at..at + d]);
        at += d;
    }
    let dy: Vec<f64> = (0..m).map(|i| (jdv[i] - rec.y[i] * domega) / omega).collect();
    let ds: Vec<f64> =
        (0..m).map(|i| (jdv[i] - dz[n + i] - rec.s[i] * domega) / omega).collect();
    (dx, dy, ds)
}

/// Adjoint of dphi: maps cotangents (gx, gy, gs) to a cotangent on z.
pub fn dphi_adjoint(
    z: &[f64],
    spec: &ConeSpec,
    jac: &ConeJacobian,
    rec: &Recovered,
    gx: &[f64],
    gy: &[f64],
    gs: &[f64],
) -> Vec<f64> {
    let n = spec.n;
    let m = spec.cones.dim();
    let omega = z[n + m];
    debug_assert!(omega > 0.0);
    let mut gz = vec![0.0; n + m + 1];
    for j in 0..n {
        gz[j] = gx[j] / omega;
    }
    // D Pi is symmetric blockwise: adjoint apply equals forward apply
    let sum: Vec<f64> = gy.iter().zip(gs).map(|(a, b)| a + b).collect();
    let mut jsum = vec![0.0; m];
    let mut at = 0;
    for b in &jac.blocks[1..jac.blocks.len() - 1] {
        let d = b.dim();
        b.apply(&sum[at..at + d], &mut jsum[at..at + d]);
        at += d;
    }
    for i in 0..m {
        gz[n + i] = (jsum[i] - gs[i]) / omega;
    }
    let mut acc = 0.0;
    for (xi, gi) in rec.x.iter().zip(gx) {
        acc += xi * gi;
    }
    for (yi, gi) in rec.y.iter().zip(gy) {
        acc += yi * gi;
    }
    for (si, gi) in rec.s.iter().zip(gs) {
        acc += si * gi;
    }
    gz[n + m] = -acc / omega;
    gz
}

/// Feasibility and optimality residuals of a recovered solution, all in
/// absolute 2-norms on the original problem data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// ||Ax + s - b||
    pub primal_residual: f64,
    /// ||A'y + c||
    pub dual_residual: f64,
    /// |s'y|
    pub gap: f64,
    /// distance of s to K
    pub primal_cone_dist: f64,
    /// distance of y to K*
    pub dual_cone_dist: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.gap)
            .max(self.primal_cone_dist)
            .max(self.dual_cone_dist)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

pub fn kkt_report(p: &ConicProblem, x: &[f64], y: &[f64], s: &[f64]) -> KktReport {
    let mut rp: Vec<f64> = s.iter().zip(&p.b).map(|(si, bi)| si - bi).collect();
    p.a.axpy(1.0, x, &mut rp);
    let mut rd = p.c.clone();
    p.a.axpy_transpose(1.0, y, &mut rd);
    KktReport {
        primal_residual: norm2(&rp),
        dual_residual: norm2(&rd),
        gap: dot(s, y).abs(),
        primal_cone_dist: dist_to_cone(s, &p.cones),
        dual_cone_dist: dist_to_dual_cone(y, &p.cones),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::Cone;

    fn toy_lp() -> ConicProblem {
        // min x  s.t.  x >= 1
        ConicProblem {
            a: CscMat::from_triplets(1, 1, &[(0, 0, -1.0)]),
            b: vec![-1.0],
            c: vec![1.0],
            cones: ConeSet::new(vec![Cone::NonNeg(1)]),
        }
    }

    #[test]
    fn q_matches_hand_built_matrix() {
        let a = CscMat::from_triplets(1, 1, &[(0, 0, 1.0)]);
        let q = build_q(&a, &[2.0], &[3.0]);
        let d = q.to_dense();
        assert_eq!(d, vec![
            vec![0.0, 1.0, 3.0],
            vec![-1.0, 0.0, 2.0],
            vec![-3.0, -2.0, 0.0],
        ]);
    }

    #[test]
    fn q_is_skew_symmetric() {
        let a = CscMat::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, -2.5), (2, 0, 0.5)]);
        let q = build_q(&a, &[1.0, 0.0, -1.0], &[4.0, 5.0]);
        let d = q.to_dense();
        for i in 0..q.m {
            for j in 0..q.n {
                assert_eq!(d[i][j], -d[j][i], "Q[{i}][{j}]");
            }
        }
    }

    #[test]
    fn residual_vanishes_at_analytic_solution() {
        // x* = 1, y* = 1, s* = 0
        let p = toy_lp();
        let z = embed_solution(&[1.0], &[1.0], &[0.0]);
        let r = residual_map(&z, &SkewMap::new(&p), &p.spec());
        assert!(norm2(&r) < 1e-12, "residual {:?}", r);
    }

    #[test]
    fn residual_is_scale_invariant_and_recovery_too() {
        let p = toy_lp();
        let z = embed_solution(&[1.0], &[1.0], &[0.0]);
        let z2: Vec<f64> = z.iter().map(|v| v * 2.0).collect();
        let spec = p.spec();
        let r1 = residual_map(&z, &SkewMap::new(&p), &spec);
        let r2 = residual_map(&z2, &SkewMap::new(&p), &spec);
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-14);
        }
        let s1 = construct_solution(&z, &spec, 1e-9).unwrap();
        let s2 = construct_solution(&z2, &spec, 1e-9).unwrap();
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.y, s2.y);
        assert_eq!(s1.s, s2.s);
    }

    #[test]
    fn recovery_with_interior_dual_leaves_zero_slack() {
        let spec = ConeSpec { n: 1, cones: ConeSet::new(vec![Cone::NonNeg(2)]) };
        // v strictly positive: Pi_K*(v) = v, so s = 0
        let z = vec![3.0, 1.0, 2.0, 1.0];
        let rec = construct_solution(&z, &spec, 1e-9).unwrap();
        assert_eq!(rec.s, vec![0.0, 0.0]);
        assert_eq!(rec.y, vec![1.0, 2.0]);
    }

    #[test]
    fn nonpositive_omega_is_rejected() {
        let spec = ConeSpec { n: 1, cones: ConeSet::new(vec![Cone::NonNeg(1)]) };
        assert!(construct_solution(&[1.0, 1.0, 0.0], &spec, 1e-9).is_err());
        assert!(construct_solution(&[1.0, 1.0, -1.0], &spec, 1e-9).is_err());
    }

    #[test]
    fn dphi_last_column_is_negated_solution() {
        let p = toy_lp();
        let spec = p.spec();
        let z = embed_solution(&[1.0], &[1.0], &[0.0]);
        let rec = construct_solution(&z, &spec, 1e-9).unwrap();
        let jac = dproject_cone(&z, &spec, 1e-9);
        let mut e = vec![0.0; z.len()];
        *e.last_mut().unwrap() = 1.0;
        let (dx, dy, ds) = dphi_apply(&z, &spec, &jac, &rec, &e);
        assert_eq!(dx, vec![-1.0]);
        assert_eq!(dy, vec![-1.0]);
        assert_eq!(ds, vec![0.0]);
    }

    #[test]
    fn validate_catches_zero_rows() {
        let p = ConicProblem {
            a: CscMat::from_triplets(2, 1, &[(0, 0, 1.0)]),
            b: vec![1.0, 1.0],
            c: vec![1.0],
            cones: ConeSet::new(vec![Cone::Zero(2)]),
        };
        match p.validate() {
            Err(ProblemError::ZeroRows(rows)) => assert_eq!(rows, vec![1]),
            other => panic!("expected zero-row error, got {other:?}"),
        }
        // the same empty row inside an inequality block only pins s = b
        let q = ConicProblem {
            a: CscMat::from_triplets(2, 1, &[(0, 0, 1.0)]),
            b: vec![1.0, 1.0],
            c: vec![1.0],
            cones: ConeSet::new(vec![Cone::NonNeg(2)]),
        };
        assert!(q.validate().is_ok());
    }
}
