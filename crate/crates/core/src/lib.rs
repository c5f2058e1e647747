//! Discontinuous Petrov-Galerkin solver for 2D linear elasticity with
//! strongly symmetric stresses.
//!
//! The ultraweak formulation couples stress `sigma`, displacement `u`, a
//! numerical trace `u_hat` on the mesh skeleton and a numerical flux
//! `sigma_hat_n`. Test functions are computed element by element through the
//! broken `H(div) x H^1` inner product on an enriched space, which gives a
//! symmetric positive definite global system and an error estimator for free.
//!
//! Two variants are provided: the plain method, and a second one with an extra
//! scalar multiplier enforcing `int tr(A sigma) = 0`, solved through a
//! Sherman-Morrison bordered solve on top of the first method's factorization.

pub mod assembly;
pub mod basis;
pub mod error;
pub mod exact;
pub mod local;
pub mod material;
pub mod mesh;
pub mod second_method;
pub mod sparse;
pub mod study;

pub use error::{Error, Result};
pub use exact::{ExactSolution, LShapeParams};
pub use material::{Material, PlaneModel};
pub use mesh::{DegreeMap, Domain, Mesh};
