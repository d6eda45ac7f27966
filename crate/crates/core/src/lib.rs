//! Nested Ornstein-Uhlenbeck modelling and optimal automated market making
//! for pegged crypto pairs.
//!
//! The analytic layers ([`model`], [`filter::scalar`], [`intensity`],
//! [`control`]) are generic over the floating point type through [`Real`];
//! statistical estimation, the matrix filter and the simulator work in `f64`.

pub mod calibrate;
pub mod control;
pub mod error;
pub mod filter;
pub mod intensity;
pub mod model;
pub mod scalar;
pub mod sim;

pub use error::{NouError, Result};
pub use scalar::Real;

pub type NouParams64 = model::NouParams<f64>;
pub type NouParams32 = model::NouParams<f32>;
pub type FilterState64 = filter::FilterState<f64>;
pub type Sample64 = calibrate::Sample<f64>;
pub type PricePath64 = model::PricePath<f64>;
pub type FilteredNouParams64 = filter::FilteredNouParams<f64>;
pub type LiquiditySpec64 = intensity::LiquiditySpec<f64>;
pub type ControlCoeffs64 = control::ControlCoeffs<f64>;
