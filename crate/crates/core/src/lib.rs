//! Fractional powers of nondivergence-form elliptic operators.
//!
//! The crate computes L^s and L^{−s} for L = −a^{ij}(x)∂_ij through the heat
//! semigroup, realizes the degenerate extension problem whose Neumann trace
//! recovers L^s, and provides the Monge–Ampère geometry, sliding paraboloids
//! and barrier constructions used to test the Harnack inequality on grids.

pub mod error;
pub mod extension;
pub mod fractional;
pub mod geometry;
pub mod harnack;
pub mod paraboloid;
pub mod quadrature;
pub mod semigroup;
pub mod special;

pub use error::{FracError, Result};
pub use geometry::{PointXZ, Potential, SParam};
