//! P1 finite-element kernel shared by the micro and cell solvers.

pub mod assembly;
pub mod periodic;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub use assembly::{AssemblyError, Assembler, Scaling};
pub use periodic::{apply_periodic_constraints, periodic_dofmap, DofMap, PeriodicError};
pub use solver::{solve_linear, Method, SolveStats, SolverError, SolverOptions};
pub use sparse::CsrMatrix;
