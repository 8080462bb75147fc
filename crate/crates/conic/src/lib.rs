//! Second-order cone programming with a differentiable solution map.
//!
//! Problems are stated in the standard conic form
//!
//! ```text
//! minimize    c'x
//! subject to  Ax + s = b,   s in K
//! ```
//!
//! where K is a product of zero cones, nonnegative orthants, and
//! second-order cones. The solver embeds the primal-dual pair into a
//! homogeneous self-dual system and runs an operator-splitting iteration
//! whose fixed points encode either a solution or an infeasibility
//! certificate. Because the optimality conditions are the root of a single
//! piecewise-smooth map N(z, Q) = 0, the solution can be differentiated
//! with respect to (A, b, c) by implicit differentiation of that map; both
//! a forward (directional derivative) and an adjoint (gradient) mode are
//! provided and share one factorization per solution point.
//!
//! ```
//! use conic::{Cone, ConeSet, ConicProblem, CscMat, SolverSettings, solve_hsde};
//!
//! // minimize x1 + x2 subject to x >= 1 componentwise
//! let a = CscMat::from_triplets(2, 2, &[(0, 0, -1.0), (1, 1, -1.0)]);
//! let p = ConicProblem {
//!     a,
//!     b: vec![-1.0, -1.0],
//!     c: vec![1.0, 1.0],
//!     cones: ConeSet::new(vec![Cone::NonNeg(2)]),
//! };
//! let sol = solve_hsde(&p, &SolverSettings::default(), None).unwrap();
//! assert!((sol.x[0] - 1.0).abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6);
//! ```

pub mod cone;
pub mod diff;
pub mod embed;
pub mod ldl;
pub mod msolve;
pub mod scaling;
pub mod solver;
pub mod sparse;

pub use cone::{Cone, ConeSet, ConeSpec};
pub use diff::{
    AdjointSensitivity, DerivativeContext, DiffError, DiffSettings, ForwardSensitivity,
    Perturbation,
};
pub use embed::{kkt_report, ConicProblem, KktReport, ProblemError};
pub use solver::{solve_hsde, SolutionBundle, SolveError, SolverSettings};
pub use sparse::CscMat;
