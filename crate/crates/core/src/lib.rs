//! Sparse convex aggregation of densities on `[0, 1]` by maximum likelihood
//! over the simplex, together with the quantities that control its risk:
//! oracle-inequality right-hand sides, compatibility constants, empirical
//! process suprema and minimax lower-bound constructions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dictionary;
pub mod empirical_process;
pub mod error;
pub mod harness;
pub mod lower_bounds;
pub mod quadrature;
pub mod sampling;
pub mod solver;
pub mod spectra;

pub use dictionary::{
    empirical_gram, normalize_tabulated, sine_dictionary, Density, DensityKind, Dictionary,
    EvaluationMatrix, GramMatrix, Reference,
};
pub use error::{Error, Result};
pub use quadrature::Simpson;
pub use sampling::SeedSpec;
pub use solver::{fit_mle, fit_mle_surrogate, Method, SolverOptions, SolverResult, WeightVector};
