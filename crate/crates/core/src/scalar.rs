//! Scalar abstraction shared by the analytic parts of the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating point scalar the model, filter, intensity and control code is generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `(1 - e^{-r h}) / r`, continuous at `r = 0`.
pub fn exp_integral<T: Real>(r: T, h: T) -> T {
    let x = r * h;
    if x.abs() < T::lit(1e-8) {
        // second-order series
        h * (T::one() - x / T::lit(2.0))
    } else {
        -(-x).exp_m1() / r
    }
}
