//! Small dense convex kernels used inside the ADMM iterates.

mod pinv;
mod qp;

pub use pinv::{project_affine, pseudo_inverse, ColumnProjector, PROJECTOR_CONSISTENCY_TOL};
pub use qp::{
    solve_eq_qp, solve_eq_qp_with_duals, solve_qp, solve_qp_with, Polytope, PreparedQp, QpSettings, QpSolution,
    QuadraticCost,
};
