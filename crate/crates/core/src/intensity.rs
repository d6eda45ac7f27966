//! Logistic demand curves, the per-trade Hamiltonians and the optimal-markup map.
//!
//! A trade of size `z` on one side of the pool arrives at rate
//! `lam / (1 + exp(a + b * delta))` when the pool quotes markup `delta`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{NouError, Result};
use crate::scalar::Real;

/// Direction of a swap, seen from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Pool sells crypto 1 against crypto 0 at `S + delta`.
    #[serde(rename = "01")]
    ZeroOne,
    /// Pool buys crypto 1 against crypto 0 at `S - delta`.
    #[serde(rename = "10")]
    OneZero,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::ZeroOne, Side::OneZero];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::ZeroOne => "01",
            Side::OneZero => "10",
        }
    }

    /// Change of the pool's crypto-1 inventory per unit traded.
    pub fn inventory_sign(self) -> f64 {
        match self {
            Side::ZeroOne => -1.0,
            Side::OneZero => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideIntensity<T> {
    /// Maximal arrival rate (1/day).
    pub lam: T,
    pub a: T,
    /// Markup sensitivity (per quote unit).
    pub b: T,
}

impl<T: Real> SideIntensity<T> {
    pub fn new(lam: T, a: T, b: T) -> Result<Self> {
        let s = SideIntensity { lam, a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lam > T::zero()) || !self.lam.is_finite() {
            return Err(NouError::InvalidParams(format!("lambda must be > 0, got {}", self.lam)));
        }
        if !(self.b > T::zero()) || !self.b.is_finite() {
            return Err(NouError::InvalidParams(format!("b must be > 0, got {}", self.b)));
        }
        if !self.a.is_finite() {
            return Err(NouError::InvalidParams("a must be finite".into()));
        }
        Ok(())
    }

    /// `lam / (1 + e^{a + b delta})`.
    pub fn rate(&self, delta: T) -> T {
        self.lam / (T::one() + (self.a + self.b * delta).exp())
    }

    /// `1 - rate/lam`, computed without cancellation.
    fn refusal(&self, delta: T) -> T {
        T::one() / (T::one() + (-(self.a + self.b * delta)).exp())
    }
}

/// Arrival rate of size-`z` trades at markup `delta`. The model's
/// parameters do not depend on the size, so `z` only labels the atom.
pub fn intensity<T: Real>(side: &SideIntensity<T>, _z: T, delta: T) -> T {
    side.rate(delta)
}

/// Markup at which the arrival rate equals `y`.
pub fn inverse_intensity<T: Real>(side: &SideIntensity<T>, y: T) -> Result<T> {
    if !(y > T::zero() && y < side.lam) {
        return Err(NouError::Domain {
            value: y.to_f64_lossy(),
            domain: format!("(0, {})", side.lam),
        });
    }
    Ok(((side.lam / y - T::one()).ln() - side.a) / side.b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue<T> {
    pub h: T,
    pub dh_dp: T,
    /// Maximizing markup.
    pub delta_star: T,
}

/// `H(z, p) = sup_delta rate(delta) / (gamma z) * (1 - e^{-gamma z (delta - p)})`.
///
/// The maximizer solves `gamma z E = b (1 - rate/lam) (1 - E)` with
/// `E = e^{-gamma z (delta - p)}`; the left side minus the right is strictly
/// decreasing on `delta > p`, so the root is found by bisection.
pub fn hamiltonian<T: Real>(side: &SideIntensity<T>, z: T, p: T, gamma: T) -> Result<HamiltonianValue<T>> {
    if !(gamma > T::zero()) || !(z > T::zero()) || !p.is_finite() {
        return Err(NouError::InvalidInput(format!(
            "hamiltonian needs gamma > 0, z > 0 and finite p (gamma = {gamma}, z = {z}, p = {p})"
        )));
    }
    let gz = gamma * z;
    let foc = |d: T| {
        let x = gz * (d - p);
        let e = (-x).exp();
        let one_minus_e = -(-x).exp_m1();
        gz * e - side.b * side.refusal(d) * one_minus_e
    };

    let mut lo = p;
    let mut width = T::lit(50.0) / side.b;
    let mut hi = p + width;
    let mut expansions = 0;
    while foc(hi) > T::zero() {
        lo = hi;
        width = width * T::lit(2.0);
        hi = p + width;
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(NouError::Bracketing(format!(
                "no sign change of the first-order condition above p = {p}"
            )));
        }
    }

    // Bisect down to adjacent floats.
    for _ in 0..2000 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if foc(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta_star = lo + (hi - lo) / T::lit(2.0);
    let x = gz * (delta_star - p);
    let rate = side.rate(delta_star);
    Ok(HamiltonianValue {
        h: rate * (-(-x).exp_m1()) / gz,
        dh_dp: -rate * (-x).exp(),
        delta_star,
    })
}

/// Optimal markup given the reservation shift `p`, through the inverse
/// demand curve evaluated at `gamma z H - dH/dp`.
pub fn optimal_markup<T: Real>(side: &SideIntensity<T>, z: T, p: T, gamma: T) -> Result<T> {
    let hv = hamiltonian(side, z, p, gamma)?;
    let target = gamma * z * hv.h - hv.dh_dp;
    match inverse_intensity(side, target) {
        Ok(d) => Ok(d),
        // rate underflowed relative to lam; the maximizer is the same point
        Err(_) => Ok(hv.delta_star),
    }
}

/// Second-order Taylor coefficients of `H(z, .)` at `p = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCoeffs<T> {
    pub alpha0: T,
    pub alpha1: T,
    pub alpha2: T,
}

impl<T: Real> QuadCoeffs<T> {
    pub fn eval(&self, p: T) -> T {
        self.alpha0 + self.alpha1 * p + T::lit(0.5) * self.alpha2 * p * p
    }
}

pub fn quad_fit<T: Real>(side: &SideIntensity<T>, z: T, gamma: T) -> Result<QuadCoeffs<T>> {
    let at0 = hamiltonian(side, z, T::zero(), gamma)?;
    let slope = |p: T| hamiltonian(side, z, p, gamma).map(|v| v.dh_dp);
    let central = |h: T| -> Result<T> { Ok((slope(h)? - slope(-h)?) / (T::lit(2.0) * h)) };
    let h = T::lit(1e-2) / side.b;
    let coarse = central(h)?;
    let fine = central(h / T::lit(2.0))?;
    let alpha2 = (T::lit(4.0) * fine - coarse) / T::lit(3.0);
    let q = QuadCoeffs {
        alpha0: at0.h,
        alpha1: at0.dh_dp,
        alpha2,
    };
    if !(q.alpha0 > T::zero() && q.alpha1 < T::zero() && q.alpha2 > T::zero()) {
        return Err(NouError::Conditioning(format!(
            "quadratic Hamiltonian has unexpected signs: {q:?}"
        )));
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeAtom<T> {
    /// Trade size in crypto-1 units.
    pub z: T,
    pub w: T,
}

/// Discrete trade-size measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeMeasure<T> {
    pub atoms: Vec<SizeAtom<T>>,
}

impl<T: Real> SizeMeasure<T> {
    pub fn dirac(z: T) -> Self {
        SizeMeasure {
            atoms: vec![SizeAtom { z, w: T::one() }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(NouError::InvalidParams("size measure has no atoms".into()));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if !(a.z > T::zero() && a.w > T::zero()) || !a.z.is_finite() || !a.w.is_finite() {
                return Err(NouError::InvalidParams(format!("size atom {i} must have z > 0 and w > 0")));
            }
            if self.atoms[..i].iter().any(|b| b.z == a.z) {
                return Err(NouError::InvalidParams(format!("duplicate size z = {}", a.z)));
            }
        }
        Ok(())
    }
}

/// Flat on-disk form of [`LiquiditySpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiquidityFile<T> {
    lambda_01: T,
    a_01: T,
    b_01: T,
    lambda_10: T,
    a_10: T,
    b_10: T,
    sizes: Vec<SizeAtom<T>>,
}

/// Demand curves of both sides and the trade-size measure they share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LiquidityFile<T>", into = "LiquidityFile<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct LiquiditySpec<T: Real> {
    pub side_01: SideIntensity<T>,
    pub side_10: SideIntensity<T>,
    pub sizes: SizeMeasure<T>,
}

impl<T: Real> TryFrom<LiquidityFile<T>> for LiquiditySpec<T> {
    type Error = NouError;

    fn try_from(f: LiquidityFile<T>) -> Result<Self> {
        let spec = LiquiditySpec {
            side_01: SideIntensity { lam: f.lambda_01, a: f.a_01, b: f.b_01 },
            side_10: SideIntensity { lam: f.lambda_10, a: f.a_10, b: f.b_10 },
            sizes: SizeMeasure { atoms: f.sizes },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl<T: Real> From<LiquiditySpec<T>> for LiquidityFile<T> {
    fn from(s: LiquiditySpec<T>) -> Self {
        LiquidityFile {
            lambda_01: s.side_01.lam,
            a_01: s.side_01.a,
            b_01: s.side_01.b,
            lambda_10: s.side_10.lam,
            a_10: s.side_10.a,
            b_10: s.side_10.b,
            sizes: s.sizes.atoms,
        }
    }
}

impl<T: Real> LiquiditySpec<T> {
    pub fn symmetric(side: SideIntensity<T>, sizes: SizeMeasure<T>) -> Self {
        LiquiditySpec {
            side_01: side,
            side_10: side,
            sizes,
        }
    }

    /// 250 trades/day at most, `a = 0`, `b = 1e4`, single size 100 000 (USDC/USDT runs).
    pub fn usdc_usdt() -> Self {
        Self::symmetric(
            SideIntensity { lam: T::lit(250.0), a: T::zero(), b: T::lit(1e4) },
            SizeMeasure::dirac(T::lit(1e5)),
        )
    }

    /// Same demand curves with a single size of 40 (wstETH/WETH runs).
    pub fn wsteth_weth() -> Self {
        Self::symmetric(
            SideIntensity { lam: T::lit(250.0), a: T::zero(), b: T::lit(1e4) },
            SizeMeasure::dirac(T::lit(40.0)),
        )
    }

    pub fn side(&self, side: Side) -> &SideIntensity<T> {
        match side {
            Side::ZeroOne => &self.side_01,
            Side::OneZero => &self.side_10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.side_01.validate()?;
        self.side_10.validate()?;
        self.sizes.validate()
    }
}
