use serde::{Deserialize, Serialize};

use crate::calibrate::Sample;
use crate::error::{NouError, Result};
use crate::model::NouParams;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState<T> {
    /// Conditional mean of the latent target.
    pub u_hat: T,
    /// Conditional variance of the latent target.
    pub v: T,
    pub t: T,
}

/// Parameters of the filtered `(S, U_hat)` dynamics once the variance has
/// settled at its asymptotic value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilteredNouParams<T> {
    pub base: NouParams<T>,
    /// Volatility of `U_hat` under the innovation Brownian motion.
    pub nu_hat: T,
    /// Asymptotic conditional variance.
    pub v_inf: T,
}

impl<T: Real> FilteredNouParams<T> {
    pub fn from_params(base: NouParams<T>) -> Result<Self> {
        base.validate()?;
        let (v_inf, nu_hat) = asymptotic_variance(&base);
        Ok(FilteredNouParams { base, nu_hat, v_inf })
    }
}

/// Returns `(V_inf, nu_hat)`.
pub fn asymptotic_variance<T: Real>(params: &NouParams<T>) -> (T, T) {
    let r = params.kappa * params.nu / params.sigma;
    let denom = params.eta + (params.eta * params.eta + r * r).sqrt();
    let v_inf = params.nu * params.nu / denom;
    let nu_hat = params.nu * r / denom;
    (v_inf, nu_hat)
}

/// Right-hand side of the conditional-variance ODE.
pub fn riccati_rhs<T: Real>(v: T, params: &NouParams<T>) -> T {
    let g = params.kappa / params.sigma;
    -T::lit(2.0) * params.eta * v + params.nu * params.nu - g * g * v * v
}

fn rk4<T: Real>(mut v: T, h: T, n: usize, params: &NouParams<T>) -> T {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    for _ in 0..n {
        let k1 = riccati_rhs(v, params);
        let k2 = riccati_rhs(v + h / two * k1, params);
        let k3 = riccati_rhs(v + h / two * k2, params);
        let k4 = riccati_rhs(v + h * k3, params);
        v += h / six * (k1 + two * k2 + two * k3 + k4);
    }
    v
}

/// Integrate the variance ODE from `v0` over `horizon` days with classical RK4,
/// refining the step until halving it moves the result by less than `1e-12`
/// relative to the variance scale, or until rounding stops further gains.
pub fn variance_ode_evolve<T: Real>(v0: T, horizon: T, params: &NouParams<T>) -> T {
    if horizon <= T::zero() {
        return v0;
    }
    let (v_inf, _) = asymptotic_variance(params);
    let g = params.kappa / params.sigma;
    let rate = T::lit(2.0) * params.eta + T::lit(2.0) * g * g * v0.max(v_inf);
    let n0 = (horizon * rate / T::lit(1e-3)).ceil().to_usize().unwrap_or(1).max(1);
    let scale = v0.abs().max(v_inf).max(T::min_positive_value());
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale;

    let mut n = n0;
    let mut coarse = rk4(v0, horizon / T::from_usize(n).unwrap(), n, params);
    let mut last_change = T::infinity();
    for _ in 0..20 {
        let fine = rk4(v0, horizon / T::from_usize(2 * n).unwrap(), 2 * n, params);
        let change = (fine - coarse).abs();
        // A fourth-order scheme shrinks the change ~16x per halving; once it
        // stops shrinking, accumulated rounding dominates.
        if change < tol || change > last_change / T::lit(2.0) {
            return fine;
        }
        last_change = change;
        coarse = fine;
        n *= 2;
    }
    coarse
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialVariance<T> {
    /// Start the variance at its asymptotic value.
    Asymptotic,
    Value(T),
}

/// Incremental form of [`filter_series`].
#[derive(Debug, Clone)]
pub struct ScalarFilter<T> {
    params: NouParams<T>,
    state: FilterState<T>,
    last_s: T,
}

impl<T: Real> ScalarFilter<T> {
    pub fn new(params: NouParams<T>, t0: T, s0: T, u_hat0: T, v0: InitialVariance<T>) -> Result<Self> {
        params.validate()?;
        let v = match v0 {
            InitialVariance::Asymptotic => asymptotic_variance(&params).0,
            InitialVariance::Value(v) if v >= T::zero() && v.is_finite() => v,
            InitialVariance::Value(v) => {
                return Err(NouError::InvalidInput(format!("initial variance must be >= 0, got {v}")))
            }
        };
        if !s0.is_finite() {
            return Err(NouError::NonFinite { index: 0, what: "price".into() });
        }
        Ok(ScalarFilter {
            params,
            state: FilterState { u_hat: u_hat0, v, t: t0 },
            last_s: s0,
        })
    }

    pub fn state(&self) -> FilterState<T> {
        self.state
    }

    pub fn params(&self) -> &NouParams<T> {
        &self.params
    }

    /// Innovation increment for a move to `s` after `dt`, in Brownian units.
    pub fn innovation(&self, s: T, dt: T) -> T {
        let p = &self.params;
        (s - self.last_s + p.kappa * (self.last_s - self.state.u_hat) * dt) / p.sigma
    }

    /// Incorporate the observation `s` made at time `t`.
    pub fn update(&mut self, t: T, s: T) -> FilterState<T> {
        let dt = t - self.state.t;
        let p = self.params;
        let dw = self.innovation(s, dt);
        let st = &mut self.state;
        st.u_hat = st.u_hat - p.eta * (st.u_hat - p.u_bar) * dt + p.kappa / p.sigma * st.v * dw;
        st.v = variance_ode_evolve(st.v, dt, &p);
        st.t = t;
        self.last_s = s;
        *st
    }
}

/// Run the filter over an observed price series, returning one state per
/// observation. `u_hat0` defaults to `u_bar`.
pub fn filter_series<T: Real>(
    prices: &Sample<T>,
    params: &NouParams<T>,
    u_hat0: Option<T>,
    v0: InitialVariance<T>,
) -> Result<Vec<FilterState<T>>> {
    if let Some(i) = prices.values.iter().position(|v| !v.is_finite()) {
        return Err(NouError::NonFinite { index: i, what: "price".into() });
    }
    if prices.times.is_empty() {
        return Ok(Vec::new());
    }
    let mut f = ScalarFilter::new(
        *params,
        prices.times[0],
        prices.values[0],
        u_hat0.unwrap_or(params.u_bar),
        v0,
    )?;
    let mut out = Vec::with_capacity(prices.len());
    out.push(f.state());
    for (t, s) in prices.times.iter().zip(&prices.values).skip(1) {
        out.push(f.update(*t, *s));
    }
    Ok(out)
}
