//! Cone blocks, Euclidean projections, and projection derivatives.
//!
//! Three block kinds cover everything the dispatch scheduler emits: zero
//! cones (equality rows), nonnegative orthants (inequality rows), and
//! second-order cones. The embedding works with the product
//! R^n x K* x R_+, so the dual-cone projection and its derivative are the
//! load-bearing pieces here.

use crate::sparse::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// {0}^d, dual is R^d.
    Zero(usize),
    /// R_+^d, self-dual.
    NonNeg(usize),
    /// { (t, w) in R^d : ||w|| <= t }, d >= 2, self-dual.
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) => d,
        }
    }
}

/// Ordered list of cone blocks describing K as a product cone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeSet {
    pub cones: Vec<Cone>,
}

impl ConeSet {
    pub fn new(cones: Vec<Cone>) -> Self {
        ConeSet { cones }
    }

    pub fn dim(&self) -> usize {
        self.cones.iter().map(|c| c.dim()).sum()
    }

    /// Checks block dimensions and the zero-blocks-first convention.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen_nonzero = false;
        for (k, c) in self.cones.iter().enumerate() {
            match *c {
                Cone::Zero(d) | Cone::NonNeg(d) => {
                    if d == 0 {
                        return Err(format!("cone block {k} has dimension 0"));
                    }
                }
                Cone::Soc(d) => {
                    if d < 2 {
                        return Err(format!("second-order cone block {k} has dimension {d} < 2"));
                    }
                }
            }
            match *c {
                Cone::Zero(_) => {
                    if seen_nonzero {
                        return Err(format!("zero-cone block {k} appears after a non-zero block"));
                    }
                }
                _ => seen_nonzero = true,
            }
        }
        Ok(())
    }
}

/// Embedding layout R^n x K* x R_+ for points of dimension n + dim(K) + 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeSpec {
    /// Free block dimension (number of primal variables).
    pub n: usize,
    pub cones: ConeSet,
}

impl ConeSpec {
    pub fn embed_dim(&self) -> usize {
        self.n + self.cones.dim() + 1
    }
}

/// Projection onto a single second-order cone.
pub fn project_soc(v: &[f64]) -> Vec<f64> {
    let t = v[0];
    let w = &v[1..];
    let nw = norm2(w);
    if nw <= t {
        return v.to_vec();
    }
    if nw <= -t {
        return vec![0.0; v.len()];
    }
    let scale = 0.5 * (1.0 + t / nw);
    let mut out = Vec::with_capacity(v.len());
    out.push(0.5 * (t + nw));
    out.extend(w.iter().map(|&x| scale * x));
    out
}

fn project_block(v: &[f64], cone: Cone, dual: bool, out: &mut Vec<f64>) {
    match (cone, dual) {
        (Cone::Zero(_), false) => out.extend(v.iter().map(|_| 0.0)),
        (Cone::Zero(_), true) => out.extend_from_slice(v), // dual of {0} is free
        (Cone::NonNeg(_), _) => out.extend(v.iter().map(|&x| x.max(0.0))),
        (Cone::Soc(_), _) => out.extend(project_soc(v)),
    }
}

/// Projects v onto K.
pub fn project_onto(v: &[f64], cones: &ConeSet) -> Vec<f64> {
    debug_assert_eq!(v.len(), cones.dim());
    let mut out = Vec::with_capacity(v.len());
    let mut at = 0;
    for &c in &cones.cones {
        project_block(&v[at..at + c.dim()], c, false, &mut out);
        at += c.dim();
    }
    out
}

/// Projects v onto the dual cone K*.
pub fn project_onto_dual(v: &[f64], cones: &ConeSet) -> Vec<f64> {
    debug_assert_eq!(v.len(), cones.dim());
    let mut out = Vec::with_capacity(v.len());
    let mut at = 0;
    for &c in &cones.cones {
        project_block(&v[at..at + c.dim()], c, true, &mut out);
        at += c.dim();
    }
    out
}

/// Euclidean distance from v to K.
pub fn dist_to_cone(v: &[f64], cones: &ConeSet) -> f64 {
    let p = project_onto(v, cones);
    v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Euclidean distance from v to K*.
pub fn dist_to_dual_cone(v: &[f64], cones: &ConeSet) -> f64 {
    let p = project_onto_dual(v, cones);
    v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Projects an embedding point onto R^n x K* x R_+.
pub fn project_cone(z: &[f64], spec: &ConeSpec) -> Vec<f64> {
    debug_assert_eq!(z.len(), spec.embed_dim());
    let n = spec.n;
    let m = spec.cones.dim();
    let mut out = Vec::with_capacity(z.len());
    out.extend_from_slice(&z[..n]);
    out.extend(project_onto_dual(&z[n..n + m], &spec.cones));
    out.push(z[n + m].max(0.0));
    out
}

/// One block of a projection Jacobian. Dense blocks are row-major.
#[derive(Debug, Clone)]
pub enum JacBlock {
    Identity(usize),
    Zeros(usize),
    Diag(Vec<f64>),
    Dense { dim: usize, v: Vec<f64> },
}

impl JacBlock {
    pub fn dim(&self) -> usize {
        match self {
            JacBlock::Identity(d) | JacBlock::Zeros(d) => *d,
            JacBlock::Diag(d) => d.len(),
            JacBlock::Dense { dim, .. } => *dim,
        }
    }

    /// out = J * x; J is symmetric for every projection block.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            JacBlock::Identity(_) => out.copy_from_slice(x),
            JacBlock::Zeros(_) => out.fill(0.0),
            JacBlock::Diag(d) => {
                for (o, (xi, di)) in out.iter_mut().zip(x.iter().zip(d)) {
                    *o = xi * di;
                }
            }
            JacBlock::Dense { dim, v } => {
                for i in 0..*dim {
                    let row = &v[i * dim..(i + 1) * dim];
                    out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// Entries as (local row, local col, value) triplets.
    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        match self {
            JacBlock::Identity(d) => (0..*d).map(|i| (i, i, 1.0)).collect(),
            JacBlock::Zeros(_) => Vec::new(),
            JacBlock::Diag(d) => {
                d.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, i, v)).collect()
            }
            JacBlock::Dense { dim, v } => {
                let mut t = Vec::new();
                for i in 0..*dim {
                    for j in 0..*dim {
                        let x = v[i * dim + j];
                        if x != 0.0 {
                            t.push((i, j, x));
                        }
                    }
                }
                t
            }
        }
    }
}

/// Block-diagonal derivative of `project_cone` at a point, with kink
/// diagnostics. Blocks: one for the free part, one per cone block, one for
/// the trailing scalar.
#[derive(Debug, Clone)]
pub struct ConeJacobian {
    pub blocks: Vec<JacBlock>,
    /// Indices into `blocks` where the point sits within `kink_tol` of a
    /// non-differentiable boundary. The block still carries the one-sided
    /// derivative taken as the limit from the interior of the region the
    /// point classifies into.
    pub kinks: Vec<usize>,
}

impl ConeJacobian {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        let mut at = 0;
        for b in &self.blocks {
            let d = b.dim();
            b.apply(&x[at..at + d], &mut out[at..at + d]);
            at += d;
        }
        out
    }

    pub fn is_kinked(&self) -> bool {
        !self.kinks.is_empty()
    }
}

fn dproject_soc(v: &[f64], kink_tol: f64) -> (JacBlock, bool) {
    let d = v.len();
    let t = v[0];
    let w = &v[1..];
    let nw = norm2(w);
    let kink = (nw - t.abs()).abs() <= kink_tol * nw.max(t.abs()).max(1.0);
    if nw <= t {
        return (JacBlock::Identity(d), kink);
    }
    if nw <= -t {
        return (JacBlock::Zeros(d), kink);
    }
    // boundary region: P(t, w) = ((t + ||w||)/2) (1, w/||w||)
    let u: Vec<f64> = w.iter().map(|&x| x / nw).collect();
    let c = 0.5 * (1.0 + t / nw);
    let mut j = vec![0.0; d * d];
    j[0] = 0.5;
    for i in 0..d - 1 {
        j[i + 1] = 0.5 * u[i];
        j[(i + 1) * d] = 0.5 * u[i];
        for k in 0..d - 1 {
            j[(i + 1) * d + (k + 1)] = -0.5 * (t / nw) * u[i] * u[k];
        }
        j[(i + 1) * d + (i + 1)] += c;
    }
    (JacBlock::Dense { dim: d, v: j }, kink)
}

fn dproject_nonneg(v: &[f64], kink_tol: f64) -> (JacBlock, bool) {
    let mut kink = false;
    let diag: Vec<f64> = v
        .iter()
        .map(|&x| {
            if x.abs() <= kink_tol {
                kink = true;
            }
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    (JacBlock::Diag(diag), kink)
}

/// Derivative of the dual-cone projection for one block.
fn dproject_dual_block(v: &[f64], cone: Cone, kink_tol: f64) -> (JacBlock, bool) {
    match cone {
        Cone::Zero(d) => (JacBlock::Identity(d), false),
        Cone::NonNeg(_) => dproject_nonneg(v, kink_tol),
        Cone::Soc(_) => dproject_soc(v, kink_tol),
    }
}

/// Derivative of `project_cone` at z.
pub fn dproject_cone(z: &[f64], spec: &ConeSpec, kink_tol: f64) -> ConeJacobian {
    debug_assert_eq!(z.len(), spec.embed_dim());
    let n = spec.n;
    let mut blocks = Vec::with_capacity(spec.cones.cones.len() + 2);
    let mut kinks = Vec::new();
    blocks.push(JacBlock::Identity(n));
    let mut at = n;
    for &c in &spec.cones.cones {
        let (b, kink) = dproject_dual_block(&z[at..at + c.dim()], c, kink_tol);
        if kink {
            kinks.push(blocks.len());
        }
        blocks.push(b);
        at += c.dim();
    }
    let (tau_block, tau_kink) = dproject_nonneg(&z[at..at + 1], kink_tol);
    if tau_kink {
        kinks.push(blocks.len());
    }
    blocks.push(tau_block);
    ConeJacobian { blocks, kinks }
}
