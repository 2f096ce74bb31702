//! Solvers and certification checks for a one-dimensional coupled system of
//! p-Laplacian equations: energy minimizers for the segregation limit and the
//! constrained two-species problem, shooting and comparison constructions for
//! the decaying single-profile equation, and the verification toolkit that
//! certifies computed profiles against their structural identities.

pub mod bvp;
pub mod cli;
pub mod descent;
pub mod error;
pub mod ivp;
pub mod lambda;
pub mod mesh;
pub mod numerics;
pub mod verify;

pub use error::SolverError;

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    cli::run()
}
