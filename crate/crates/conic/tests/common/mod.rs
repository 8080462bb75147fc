//! Shared generators for solver and derivative tests.

use conic::{Cone, ConeSet, ConicProblem, CscMat};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// A point strictly inside the given cone (zero block stays zero).
fn interior_point(cones: &ConeSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = Vec::with_capacity(cones.dim());
    for c in &cones.cones {
        match c {
            Cone::Zero(d) => s.extend(std::iter::repeat(0.0).take(*d)),
            Cone::NonNeg(d) => {
                for _ in 0..*d {
                    s.push(rng.gen_range(0.5..1.5));
                }
            }
            Cone::Soc(d) => {
                let w: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                s.push(nw + rng.gen_range(0.3..1.0));
                s.extend(w);
            }
        }
    }
    s
}

/// A point strictly inside the dual cone (zero block becomes free).
fn dual_interior_point(cones: &ConeSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = Vec::with_capacity(cones.dim());
    for c in &cones.cones {
        match c {
            Cone::Zero(d) => {
                for _ in 0..*d {
                    y.push(rng.gen_range(-1.0..1.0));
                }
            }
            Cone::NonNeg(d) => {
                for _ in 0..*d {
                    y.push(rng.gen_range(0.5..1.5));
                }
            }
            Cone::Soc(d) => {
                let w: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                y.push(nw + rng.gen_range(0.3..1.0));
                y.extend(w);
            }
        }
    }
    y
}

/// Random problem with strictly feasible primal and dual points, so an
/// optimal solution exists and strong duality holds.
pub fn random_feasible_socp(seed: u64) -> ConicProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..9);
    let mut nonneg = rng.gen_range(2..5);
    let mut cones = vec![Cone::Zero(rng.gen_range(1..3))];
    let soc4 = rng.gen_bool(0.5);
    // keep m >= n + 2 so A has full column rank and the dual equality
    // A'y + c = 0 stays solvable under small data perturbations; with
    // m < n the generated c sits exactly on the boundary of dual
    // attainability and any perturbation makes the problem marginally
    // unbounded
    let fixed = 1 + 3 + if soc4 { 4 } else { 0 };
    if fixed + nonneg < n + 2 {
        nonneg = n + 2 - fixed;
    }
    cones.push(Cone::NonNeg(nonneg));
    cones.push(Cone::Soc(3));
    if soc4 {
        cones.push(Cone::Soc(4));
    }
    let cones = ConeSet::new(cones);
    let m = cones.dim();
    let mut triplets = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.gen_bool(0.6) {
                triplets.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        // keep every row nonempty
        let j = rng.gen_range(0..n);
        triplets.push((i, j, rng.gen_range(0.5..1.5)));
    }
    let a = CscMat::from_triplets(m, n, &triplets);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s0 = interior_point(&cones, &mut rng);
    let y0 = dual_interior_point(&cones, &mut rng);
    let mut b = a.matvec(&x0);
    for (bi, si) in b.iter_mut().zip(&s0) {
        *bi += si;
    }
    let mut c = a.matvec_transpose(&y0);
    for v in c.iter_mut() {
        *v = -*v;
    }
    ConicProblem { a, b, c, cones }
}
