//! Numerical laboratory for Carnot groups: exact group law, left-invariant
//! operators and their grid discretization, heat-semigroup cut-offs,
//! explicit test functions, and blow-up lifespan experiments for
//! semilinear heat and wave equations.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod cli;
pub mod diffops;
pub mod error;
pub mod grid;
pub mod group;
pub mod poly;
pub mod profiles;
pub mod quad;
pub mod regime;
pub mod report;
pub mod semigroup;
pub mod solver;
pub mod testfn;

pub use diffops::{DiffOps, SmoothFn, VectorField};
pub use error::{Error, Result};
pub use grid::{Boundary, GridField, GridSpec, SubLaplacianStencil};
pub use group::{AlgebraConfig, CdParams, GroupPoint, StratifiedAlgebra};
pub use poly::Poly;
