//! Online estimation of the latent reversion target.
//!
//! [`scalar`] is the closed-form filter for the nested OU model; [`general`]
//! is the matrix Kalman-Bucy filter for arbitrary linear Gaussian systems.
//! The former is a specialization of the latter and the test-suite checks
//! that both agree.

pub mod general;
pub mod scalar;

pub use general::{general_filter_series, GeneralFilterState, LinearGaussianSystem};
pub use scalar::{
    asymptotic_variance, filter_series, riccati_rhs, variance_ode_evolve, FilterState,
    FilteredNouParams, InitialVariance, ScalarFilter,
};
