//! Self-contained dense linear algebra: a bounded-variable two-phase simplex
//! with certificates, a cyclic Jacobi symmetric eigensolver, and the small
//! dense kernels they share.
//!
//! Problem sizes in this crate stay tiny (tens to a few hundred variables),
//! so everything works on plain `Vec`-backed dense matrices. The simplex
//! returns dual values on optimal instances, a Farkas certificate on
//! infeasible ones, and an improving ray on unbounded ones, so callers can
//! cross-check every verdict.

pub mod dense;
pub mod eigen;
pub mod simplex;

pub use eigen::{symmetric_eigenvalues, EigenError, DEFAULT_EIGEN_TOL};
pub use simplex::{
    dual_objective, solve_lp, verify_farkas, verify_ray, LinearProgram, LpError, LpOutcome,
    RowKind, Sense, DEFAULT_LP_TOL,
};
