//! Shape optimization of a tracking functional constrained by a semilinear
//! elliptic Dirichlet problem, using steepest descent in the Lipschitz
//! topology with Armijo backtracking.
//!
//! The solver evolves a triangulated domain inside a fixed hold-all
//! rectangle. Each iteration solves the state and adjoint equations with P1
//! finite elements, assembles the volume form of the shape derivative as a
//! dual vector over mesh vertices, computes a descent field with unit
//! pointwise Jacobian bound, and moves the mesh by `id + t V` with the
//! largest dyadic step accepted by the Armijo rule.
//!
//! Modules follow the pipeline:
//!
//! * [`mesh`] — triangle meshes, deformation, congruent refinement
//! * [`linalg`] — CSR matrices and preconditioned conjugate gradients
//! * [`problem`] — problem data (nonlinearity, source, integrand)
//! * [`pde`] — state and adjoint finite-element solves
//! * [`shapecalc`] — functional value and shape-derivative assembly
//! * [`direction`] — the Lipschitz steepest-descent subproblem
//! * [`descent`] — the outer optimization loop
//! * [`geomdiag`] — geometric convergence diagnostics
//! * [`cli`] — configuration parsing and experiment runner

pub mod cli;
pub mod descent;
pub mod direction;
pub mod geomdiag;
pub mod linalg;
pub mod mat2;
pub mod mesh;
pub mod meshio;
pub mod pde;
pub mod problem;
pub mod shapecalc;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
