//! Least-squares solves against M = (Q - I) DPi(z) + I.
//!
//! M is singular by construction: positive homogeneity of the residual map
//! gives M z = 0 at any solution point, so "solve" here always means the
//! minimum-norm least-squares solution. It is computed through one LDL'
//! factorization of the shifted gram matrix C = M'M + delta I (positive
//! definite, so the factorization is growth-free) and iterated Tikhonov
//! passes that remove the shift bias geometrically. ker(M) and range(M')
//! are C-invariant, so the iterates stay in range(M') and the minimum-norm
//! property is automatic. Forward and transpose solves share the factor:
//! the transpose iteration is w += M C^-1 (g - M'w).

use crate::cone::ConeJacobian;
use crate::ldl::{amd_order, ldl_factor, LdlError, LdlFactor};
use crate::sparse::{norm2, CscMat};

/// M = (Q - I) * DPi + I with DPi the block-diagonal cone Jacobian.
pub fn assemble_m(q: &CscMat, jac: &ConeJacobian) -> CscMat {
    let dim = q.n;
    debug_assert_eq!(jac.dim(), dim);
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(q.nnz() + 2 * dim);
    let mut col_start = 0usize;
    for block in &jac.blocks {
        let d = block.dim();
        match block {
            crate::cone::JacBlock::Identity(_) => {
                for j in col_start..col_start + d {
                    for p in q.colptr[j]..q.colptr[j + 1] {
                        t.push((q.rowind[p], j, q.values[p]));
                    }
                    t.push((j, j, -1.0));
                }
            }
            crate::cone::JacBlock::Zeros(_) => {}
            crate::cone::JacBlock::Diag(dv) => {
                for (jl, &scale) in dv.iter().enumerate() {
                    if scale == 0.0 {
                        continue;
                    }
                    let j = col_start + jl;
                    for p in q.colptr[j]..q.colptr[j + 1] {
                        t.push((q.rowind[p], j, q.values[p] * scale));
                    }
                    t.push((j, j, -scale));
                }
            }
            crate::cone::JacBlock::Dense { dim: bd, v } => {
                // column jl of the product pulls in (Q - I) columns kl
                for jl in 0..*bd {
                    for kl in 0..*bd {
                        let coef = v[kl * bd + jl];
                        if coef == 0.0 {
                            continue;
                        }
                        let k = col_start + kl;
                        for p in q.colptr[k]..q.colptr[k + 1] {
                            t.push((q.rowind[p], col_start + jl, q.values[p] * coef));
                        }
                        t.push((k, col_start + jl, -coef));
                    }
                }
            }
        }
        col_start += d;
    }
    for i in 0..dim {
        t.push((i, i, 1.0));
    }
    CscMat::from_triplets(dim, dim, &t)
}

pub struct MSolver {
    pub m_mat: CscMat,
    gram: CscMat,
    factor: LdlFactor,
    delta: f64,
    dim: usize,
}

/// Outcome of one least-squares solve. `normal_residual` is
/// ||M'(M x - rhs)|| / max(||M' rhs||, tiny): the optimality measure of the
/// least-squares problem, small even when rhs has a component outside
/// range(M).
pub struct LsSolution {
    pub x: Vec<f64>,
    pub ls_residual: f64,
    pub normal_residual: f64,
}

impl MSolver {
    /// `delta` sets the relative null-space shift of the gram matrix;
    /// anything in [1e-10, 1e-7] works, the Tikhonov iteration removes the
    /// bias either way.
    pub fn new(m_mat: CscMat, delta: f64) -> Result<Self, LdlError> {
        let dim = m_mat.n;
        let mut gram = m_mat.gram();
        let shift = (delta.abs().clamp(1e-12, 1e-4)) * gram.max_abs().max(f64::MIN_POSITIVE);
        let mut t = gram.to_triplets();
        for i in 0..dim {
            t.push((i, i, shift));
        }
        gram = CscMat::from_triplets(dim, dim, &t);
        let perm = amd_order(&gram)?;
        let factor = ldl_factor(&gram, &perm)?;
        Ok(MSolver { m_mat, gram, factor, delta: shift, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One inner solve against C = M'M + shift, refined once to clean up
    /// factorization rounding.
    fn gram_solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve_refined(&self.gram, rhs, 1)
    }

    /// Minimum-norm least-squares solution of M x = rhs.
    pub fn solve(&self, rhs: &[f64], refine: usize) -> LsSolution {
        let mut x = vec![0.0; self.dim];
        let mut res = rhs.to_vec();
        for _ in 0..refine.max(2) {
            let mtr = self.m_mat.matvec_transpose(&res);
            let dx = self.gram_solve(&mtr);
            for i in 0..self.dim {
                x[i] += dx[i];
            }
            res.copy_from_slice(rhs);
            self.m_mat.axpy(-1.0, &x, &mut res);
        }
        self.finish(x, res, rhs)
    }

    /// Minimum-norm least-squares solution of M' w = g.
    pub fn solve_transpose(&self, g: &[f64], refine: usize) -> LsSolution {
        let mut w = vec![0.0; self.dim];
        let mut res = g.to_vec();
        for _ in 0..refine.max(2) {
            let t = self.gram_solve(&res);
            let dw = self.m_mat.matvec(&t);
            for i in 0..self.dim {
                w[i] += dw[i];
            }
            res.copy_from_slice(g);
            self.m_mat.axpy_transpose(-1.0, &w, &mut res);
        }
        // normal residual for the transpose problem: ||M (M'w - g)||
        let ls = norm2(&res) / norm2(g).max(f64::MIN_POSITIVE);
        let normal = {
            let mg = self.m_mat.matvec(&res);
            let scale = norm2(&self.m_mat.matvec(g)).max(f64::MIN_POSITIVE);
            norm2(&mg) / scale
        };
        LsSolution { x: w, ls_residual: ls, normal_residual: normal }
    }

    fn finish(&self, x: Vec<f64>, res: Vec<f64>, rhs: &[f64]) -> LsSolution {
        let ls = norm2(&res) / norm2(rhs).max(f64::MIN_POSITIVE);
        let mtr = self.m_mat.matvec_transpose(&res);
        let scale = norm2(&self.m_mat.matvec_transpose(rhs)).max(f64::MIN_POSITIVE);
        LsSolution { x, ls_residual: ls, normal_residual: norm2(&mtr) / scale }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{Cone, ConeSet, ConeSpec, JacBlock};

    #[test]
    fn assemble_matches_dense_product() {
        // small Q with a dense SOC Jacobian block in the middle
        let q = CscMat::from_triplets(
            6,
            6,
            &[
                (0, 1, 1.0),
                (1, 0, -1.0),
                (2, 3, 2.0),
                (3, 2, -2.0),
                (4, 5, 0.5),
                (5, 4, -0.5),
                (0, 5, 3.0),
                (5, 0, -3.0),
            ],
        );
        let jac = ConeJacobian {
            blocks: vec![
                JacBlock::Identity(1),
                JacBlock::Dense { dim: 3, v: vec![0.5, 0.1, 0.0, 0.1, 0.5, 0.2, 0.0, 0.2, 0.5] },
                JacBlock::Diag(vec![0.0, 1.0]),
            ],
            kinks: vec![],
        };
        let m = assemble_m(&q, &jac);
        // dense reference
        let qd = q.to_dense();
        let mut dpi = vec![vec![0.0; 6]; 6];
        dpi[0][0] = 1.0;
        let dv = [[0.5, 0.1, 0.0], [0.1, 0.5, 0.2], [0.0, 0.2, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                dpi[1 + i][1 + j] = dv[i][j];
            }
        }
        dpi[4][4] = 0.0;
        dpi[5][5] = 1.0;
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = if i == j { 1.0 } else { 0.0 };
                for k in 0..6 {
                    let qmi = qd[i][k] - if i == k { 1.0 } else { 0.0 };
                    acc += qmi * dpi[k][j];
                }
                let got = m.get(i, j);
                assert!((got - acc).abs() < 1e-14, "M[{i}][{j}] = {got} vs {acc}");
            }
        }
    }

    #[test]
    fn least_squares_handles_the_homogeneity_null_direction() {
        // At a solution point M z = 0; solves must still return finite
        // answers with small normal residuals.
        use crate::embed::{build_q, embed_solution};
        let a = CscMat::from_triplets(1, 1, &[(0, 0, -1.0)]);
        let q = build_q(&a, &[-1.0], &[1.0]);
        let z = embed_solution(&[1.0], &[1.0], &[0.0]);
        let spec = ConeSpec { n: 1, cones: ConeSet::new(vec![Cone::NonNeg(1)]) };
        let jac = crate::cone::dproject_cone(&z, &spec, 1e-9);
        let m = assemble_m(&q, &jac);
        let mz = m.matvec(&z);
        assert!(norm2(&mz) < 1e-12, "Mz = {mz:?}");

        let solver = MSolver::new(m, 1e-8).unwrap();
        let rhs = vec![0.3, -0.2, 0.7];
        let sol = solver.solve(&rhs, 6);
        assert!(sol.normal_residual < 1e-9, "normal residual {}", sol.normal_residual);
        // minimum-norm solution carries no component along the null direction z
        let along = crate::sparse::dot(&sol.x, &z) / crate::sparse::dot(&z, &z);
        assert!(along.abs() < 1e-8, "null-space component {along}");
    }
}
