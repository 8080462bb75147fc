//! Ruiz equilibration of the constraint matrix, cone-aware: rows belonging
//! to one second-order cone block share a single scale factor so the scaled
//! slack cone is the same cone.

use crate::cone::{Cone, ConeSet};
use crate::sparse::CscMat;

#[derive(Debug, Clone)]
pub struct Scaling {
    /// Row scales (length m): scaled A = D A E.
    pub d: Vec<f64>,
    /// Column scales (length n).
    pub e: Vec<f64>,
    /// Scalar applied to D b.
    pub rho: f64,
    /// Scalar applied to E c.
    pub sigma: f64,
}

impl Scaling {
    pub fn identity(m: usize, n: usize) -> Self {
        Scaling { d: vec![1.0; m], e: vec![1.0; n], rho: 1.0, sigma: 1.0 }
    }

    /// Maps a scaled-space solution back to the original problem.
    pub fn unscale(&self, x: &mut [f64], y: &mut [f64], s: &mut [f64]) {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj *= self.e[j] / self.rho;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi *= self.d[i] / self.sigma;
        }
        for (i, si) in s.iter_mut().enumerate() {
            *si /= self.d[i] * self.rho;
        }
    }

    /// Maps an original-space point into scaled space (for warm starts).
    pub fn scale_point(&self, x: &mut [f64], y: &mut [f64], s: &mut [f64]) {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj *= self.rho / self.e[j];
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi *= self.sigma / self.d[i];
        }
        for (i, si) in s.iter_mut().enumerate() {
            *si *= self.rho * self.d[i];
        }
    }
}

fn clamp_scale(v: f64) -> f64 {
    v.clamp(1e-6, 1e6)
}

/// Equilibrates A in place over `iters` Ruiz sweeps and returns the
/// accumulated row/column scales (rho and sigma left at 1).
pub fn ruiz(a: &mut CscMat, cones: &ConeSet, iters: usize) -> Scaling {
    let m = a.m;
    let n = a.n;
    let mut total = Scaling::identity(m, n);
    // map each row to its cone block so SOC rows move together
    let mut block_of = vec![0usize; m];
    let mut is_soc = vec![false; cones.cones.len()];
    {
        let mut at = 0;
        for (k, c) in cones.cones.iter().enumerate() {
            is_soc[k] = matches!(c, Cone::Soc(_));
            for i in at..at + c.dim() {
                block_of[i] = k;
            }
            at += c.dim();
        }
    }
    let mut dr = vec![0.0f64; m];
    let mut dc = vec![0.0f64; n];
    for _ in 0..iters {
        dr.fill(0.0);
        dc.fill(0.0);
        for j in 0..n {
            for p in a.colptr[j]..a.colptr[j + 1] {
                let v = a.values[p].abs();
                let i = a.rowind[p];
                if v > dr[i] {
                    dr[i] = v;
                }
                if v > dc[j] {
                    dc[j] = v;
                }
            }
        }
        // SOC blocks: uniform factor = block max
        let mut block_max = vec![0.0f64; cones.cones.len()];
        for i in 0..m {
            let k = block_of[i];
            if is_soc[k] && dr[i] > block_max[k] {
                block_max[k] = dr[i];
            }
        }
        let mut spread: f64 = 0.0;
        for i in 0..m {
            let mx = if is_soc[block_of[i]] { block_max[block_of[i]] } else { dr[i] };
            let f = if mx > 0.0 { clamp_scale(1.0 / mx.sqrt()) } else { 1.0 };
            spread = spread.max((mx - 1.0).abs());
            dr[i] = f;
        }
        for j in 0..n {
            let f = if dc[j] > 0.0 { clamp_scale(1.0 / dc[j].sqrt()) } else { 1.0 };
            spread = spread.max((dc[j] - 1.0).abs());
            dc[j] = f;
        }
        if spread < 0.05 {
            break;
        }
        a.scale(&dr, &dc);
        for i in 0..m {
            total.d[i] *= dr[i];
        }
        for j in 0..n {
            total.e[j] *= dc[j];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrates_badly_scaled_matrix() {
        let mut a = CscMat::from_triplets(
            3,
            2,
            &[(0, 0, 1000.0), (1, 0, 0.001), (1, 1, 5.0), (2, 1, 0.02)],
        );
        let orig = a.clone();
        let cones = ConeSet::new(vec![Cone::NonNeg(3)]);
        let sc = ruiz(&mut a, &cones, 10);
        for (i, j, v) in a.to_triplets() {
            assert!(v.abs() < 35.0, "entry ({i},{j}) still {v}");
            // scaled entry equals d[i] * orig * e[j]
            let expect = sc.d[i] * orig.get(i, j) * sc.e[j];
            assert!((v - expect).abs() < 1e-12);
        }
        let mx = a.max_abs();
        assert!(mx < 3.0, "max abs after equilibration {mx}");
    }

    #[test]
    fn soc_rows_share_one_factor() {
        let mut a = CscMat::from_triplets(
            4,
            2,
            &[(0, 0, 1.0), (1, 0, 100.0), (2, 1, 0.01), (3, 1, 1.0)],
        );
        let cones = ConeSet::new(vec![Cone::NonNeg(1), Cone::Soc(3)]);
        let sc = ruiz(&mut a, &cones, 6);
        assert!((sc.d[1] - sc.d[2]).abs() < 1e-15);
        assert!((sc.d[2] - sc.d[3]).abs() < 1e-15);
    }

    #[test]
    fn unscale_inverts_scale_point() {
        let sc = Scaling {
            d: vec![2.0, 0.5, 4.0],
            e: vec![0.25, 8.0],
            rho: 3.0,
            sigma: 0.7,
        };
        let (x0, y0, s0) = (vec![1.0, -2.0], vec![0.3, 0.4, -0.5], vec![1.5, 0.0, 2.0]);
        let (mut x, mut y, mut s) = (x0.clone(), y0.clone(), s0.clone());
        sc.scale_point(&mut x, &mut y, &mut s);
        sc.unscale(&mut x, &mut y, &mut s);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in y.iter().zip(&y0) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in s.iter().zip(&s0) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
