//! Discrete L = −a^{ij}(x)∂_ij on boxes and its heat semigroup e^{−tL}.

mod banded;
mod coeff;
mod evolve;
mod grid;
mod operator;
mod spectral;

pub use banded::{Banded, BandedLu};
pub use coeff::{sym_eigs, CoeffField};
pub use evolve::{
    default_probe, estimate_decay, heat_evolve, heat_kernel_column, lambda_min_estimate, linear_fit, march, march_increment, EvolveOptions,
    HeatKernelColumn, Scheme, SemigroupDecayEstimate,
};
pub use grid::{Axis, GridFunction, GridSpec, MIN_INTERIOR};
pub use operator::{assemble_l, DiscreteOperator, MixedStencil};
pub use spectral::{spectral_apply, spectral_power, spectral_semigroup, SpectralEigen};
