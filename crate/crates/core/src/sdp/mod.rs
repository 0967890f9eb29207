//! Dense symmetric eigenvalues, Lyapunov equations and LMI feasibility.

mod eig;
mod lyapunov;
mod solver;

pub use eig::{eig_sym, eig_sym_vectors, lambda_max, lambda_min};
pub use lyapunov::{hurwitz_check, lyapunov_residual, lyapunov_solve, lyapunov_solve_unchecked};
pub use solver::{
    solve_feasibility, solve_with, verify_certificate, Certificate, ConstraintReport,
    SolverOptions, Status, VerificationReport,
};
