//! Two-level nested Ornstein-Uhlenbeck exchange-rate model.
//!
//! The observed rate `S` reverts at speed `kappa` toward a latent target `U`,
//! which itself reverts at speed `eta` toward the constant `u_bar`:
//!
//! ```text
//! dS = -kappa (S - U) dt + sigma dW^S
//! dU = -eta (U - u_bar) dt + nu dW^U
//! ```
//!
//! Time is measured in days throughout; rates are per day and volatilities
//! per square-root day.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NouError, Result};
use crate::scalar::{exp_integral, Real};

/// Relative floor on `kappa - eta`; closer parameters hit the `1/(kappa - eta)` singularity.
pub const KAPPA_ETA_REL_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NouParams<T> {
    /// Reversion speed of `S` toward `U` (1/day).
    pub kappa: T,
    /// Reversion speed of `U` toward `u_bar` (1/day).
    pub eta: T,
    /// Volatility of `S` (quote units per sqrt day).
    pub sigma: T,
    /// Volatility of `U` (quote units per sqrt day).
    pub nu: T,
    /// Long-run target.
    pub u_bar: T,
}

impl<T: Real> NouParams<T> {
    pub fn new(kappa: T, eta: T, sigma: T, nu: T, u_bar: T) -> Result<Self> {
        let p = NouParams {
            kappa,
            eta,
            sigma,
            nu,
            u_bar,
        };
        p.validate()?;
        Ok(p)
    }

    /// USDC/USDT reference parameters.
    pub fn usdc_usdt() -> Self {
        NouParams {
            kappa: T::lit(5e-2),
            eta: T::lit(3e-2),
            sigma: T::lit(5e-4),
            nu: T::lit(5e-4),
            u_bar: T::lit(1.0),
        }
    }

    /// wstETH/WETH reference parameters, defined on the yield-discounted series.
    pub fn wsteth_weth() -> Self {
        NouParams {
            kappa: T::lit(6.0),
            eta: T::lit(3.0),
            sigma: T::lit(6e-3),
            nu: T::lit(4e-3),
            u_bar: T::lit(1.15),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "usdc_usdt" => Some(Self::usdc_usdt()),
            "wsteth_weth" => Some(Self::wsteth_weth()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.eta, self.sigma, self.nu, self.u_bar];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(NouError::InvalidParams(format!("non-finite parameter in {self:?}")));
        }
        if !(self.eta > T::zero()) {
            return Err(NouError::InvalidParams(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.kappa > self.eta) {
            return Err(NouError::InvalidParams(format!(
                "kappa must exceed eta (kappa = {}, eta = {})",
                self.kappa, self.eta
            )));
        }
        if self.kappa - self.eta < T::lit(KAPPA_ETA_REL_GAP) * self.kappa {
            return Err(NouError::InvalidParams(format!(
                "kappa - eta = {} is below the relative floor {KAPPA_ETA_REL_GAP}",
                self.kappa - self.eta
            )));
        }
        if !(self.sigma > T::zero()) {
            return Err(NouError::InvalidParams(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.nu < T::zero() {
            return Err(NouError::InvalidParams(format!("nu must be >= 0, got {}", self.nu)));
        }
        if !(self.u_bar > T::zero()) {
            return Err(NouError::InvalidParams(format!("u_bar must be > 0, got {}", self.u_bar)));
        }
        Ok(())
    }

    /// Same parameters with every price-scaled quantity multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        NouParams {
            sigma: self.sigma * c,
            nu: self.nu * c,
            u_bar: self.u_bar * c,
            ..*self
        }
    }

    /// Weights of the two exponentials in the stationary autocovariance,
    /// `C(tau) = w_eta e^{-eta|tau|} + w_kappa e^{-kappa|tau|}`.
    pub(crate) fn cov_weights(&self) -> (T, T) {
        let (k, e) = (self.kappa, self.eta);
        let half = T::lit(0.5);
        let k2e2 = (k - e) * (k + e);
        let nu2 = self.nu * self.nu;
        let w_eta = half * k * k * nu2 / (e * k2e2);
        let w_kappa = half * (self.sigma * self.sigma / k - k * nu2 / k2e2);
        (w_eta, w_kappa)
    }

    pub(crate) fn cov_unchecked(&self, tau: T) -> T {
        let (w_eta, w_kappa) = self.cov_weights();
        let a = tau.abs();
        w_eta * (-self.eta * a).exp() + w_kappa * (-self.kappa * a).exp()
    }

    /// Stationary covariance matrix of `(S, U)` ordered `[[SS, SU], [SU, UU]]`.
    pub fn stationary_joint_cov(&self) -> [[T; 2]; 2] {
        let two = T::lit(2.0);
        let nu2 = self.nu * self.nu;
        let var_s = self.cov_unchecked(T::zero());
        let var_u = nu2 / (two * self.eta);
        let cov_su = self.kappa * nu2 / (two * self.eta * (self.kappa + self.eta));
        [[var_s, cov_su], [cov_su, var_u]]
    }
}

/// Stationary autocovariance of `S` at lag `tau` (days).
pub fn stationary_cov<T: Real>(tau: T, params: &NouParams<T>) -> Result<T> {
    params.validate()?;
    Ok(params.cov_unchecked(tau))
}

/// `kappa/(kappa-eta) * (e^{-eta t} - e^{-kappa t})`, evaluated without cancellation.
fn cross_loading<T: Real>(params: &NouParams<T>, t: T) -> T {
    let delta = params.kappa - params.eta;
    params.kappa * (-params.eta * t).exp() * exp_integral(delta, t)
}

/// `E[S_t | S_0 = s0, U_0 = u0]`.
pub fn conditional_mean<T: Real>(t: T, s0: T, u0: T, params: &NouParams<T>) -> Result<T> {
    params.validate()?;
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(NouError::InvalidInput(format!("horizon must be finite and >= 0, got {t}")));
    }
    let ub = params.u_bar;
    Ok(ub + (s0 - ub) * (-params.kappa * t).exp() + (u0 - ub) * cross_loading(params, t))
}

/// Exact one-step Gaussian transition of `(S, U)` over a step `h`.
///
/// `x_{t+h} - u_bar = phi (x_t - u_bar) + eps`, `eps ~ N(0, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub phi: [[T; 2]; 2],
    pub q: [[T; 2]; 2],
    /// Lower Cholesky factor of `q`.
    chol: [[T; 2]; 2],
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss-Legendre rule on `[0, h]`.
fn gauss_legendre<T: Real>(h: T, panels: usize, f: impl Fn(T) -> T) -> T {
    let width = h / T::from_usize(panels).unwrap();
    let half = width / T::lit(2.0);
    let mut total = T::zero();
    for p in 0..panels {
        let mid = width * T::from_usize(p).unwrap() + half;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            let dx = half * T::lit(*x);
            total += T::lit(*w) * (f(mid - dx) + f(mid + dx));
        }
    }
    total * half
}

impl<T: Real> Transition<T> {
    pub fn new(params: &NouParams<T>, h: T) -> Result<Self> {
        params.validate()?;
        if !(h > T::zero()) || !h.is_finite() {
            return Err(NouError::InvalidInput(format!("time step must be finite and > 0, got {h}")));
        }
        let (k, e) = (params.kappa, params.eta);
        let delta = k - e;
        let two = T::lit(2.0);
        let nu2 = params.nu * params.nu;
        let sig2 = params.sigma * params.sigma;

        let phi = [[(-k * h).exp(), cross_loading(params, h)], [T::zero(), (-e * h).exp()]];

        // Integrals of e^{-2 eta u} g(u) and e^{-2 eta u} g(u)^2 on [0, h],
        // with g(u) = kappa (1 - e^{-delta u}) / delta.
        let (int_g, int_g2) = if delta * h >= T::lit(0.1) {
            let c = k / delta;
            let e2e = exp_integral(two * e, h);
            let eke = exp_integral(k + e, h);
            let e2k = exp_integral(two * k, h);
            (c * (e2e - eke), c * c * (e2e - two * eke + e2k))
        } else {
            let panels = (two * k * h).ceil().to_usize().unwrap_or(1).clamp(1, 1000);
            let g = |u: T| k * exp_integral(delta, u);
            let i1 = gauss_legendre(h, panels, |u| (-two * e * u).exp() * g(u));
            let i2 = gauss_legendre(h, panels, |u| {
                let gu = g(u);
                (-two * e * u).exp() * gu * gu
            });
            (i1, i2)
        };

        let q_ss = sig2 * exp_integral(two * k, h) + nu2 * int_g2;
        let q_su = nu2 * int_g;
        let q_uu = nu2 * exp_integral(two * e, h);
        let q = [[q_ss, q_su], [q_su, q_uu]];

        let l11 = q_ss.max(T::zero()).sqrt();
        let l21 = if l11 > T::zero() { q_su / l11 } else { T::zero() };
        let l22 = (q_uu - l21 * l21).max(T::zero()).sqrt();
        Ok(Transition {
            phi,
            q,
            chol: [[l11, T::zero()], [l21, l22]],
        })
    }

    pub fn mean(&self, s: T, u: T, u_bar: T) -> (T, T) {
        let ds = s - u_bar;
        let du = u - u_bar;
        (
            u_bar + self.phi[0][0] * ds + self.phi[0][1] * du,
            u_bar + self.phi[1][1] * du,
        )
    }

    /// Advance `(s, u)` given two independent standard normal draws.
    pub fn step_with(&self, s: T, u: T, u_bar: T, z1: T, z2: T) -> (T, T) {
        let (ms, mu) = self.mean(s, u, u_bar);
        let l = &self.chol;
        (ms + l[0][0] * z1, mu + l[1][0] * z1 + l[1][1] * z2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState<T> {
    pub t: T,
    pub s: T,
    pub u: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricePath<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub latent: Option<Vec<T>>,
}

impl<T: Real> PricePath<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, latent: Option<Vec<T>>) -> Result<Self> {
        if times.len() != values.len() || latent.as_ref().is_some_and(|l| l.len() != times.len()) {
            return Err(NouError::InvalidInput("path columns have different lengths".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NouError::InvalidInput("path times must be strictly increasing".into()));
        }
        Ok(PricePath {
            times,
            values,
            latent,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> PathState<T> {
        PathState {
            t: self.times[i],
            s: self.values[i],
            u: self.latent.as_ref().map_or(T::nan(), |l| l[i]),
        }
    }
}

impl PricePath<f64> {
    /// CSV with header `t,s[,u]`, full round-trip precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        match &self.latent {
            Some(lat) => {
                wr.write_record(["t", "s", "u"])?;
                for i in 0..self.len() {
                    wr.write_record(&[
                        self.times[i].to_string(),
                        self.values[i].to_string(),
                        lat[i].to_string(),
                    ])?;
                }
            }
            None => {
                wr.write_record(["t", "s"])?;
                for i in 0..self.len() {
                    wr.write_record(&[self.times[i].to_string(), self.values[i].to_string()])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let has_u = match headers.iter().collect::<Vec<_>>().as_slice() {
            ["t", "s"] => false,
            ["t", "s", "u"] => true,
            other => {
                return Err(NouError::InvalidInput(format!(
                    "expected header t,s[,u], got {}",
                    other.join(",")
                )))
            }
        };
        let (mut times, mut values, mut latent) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let field = |j: usize, name: &str| -> Result<f64> {
                rec.get(j)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        NouError::InvalidInput(format!("line {}: bad field `{name}`", line + 2))
                    })
            };
            times.push(field(0, "t")?);
            values.push(field(1, "s")?);
            if has_u {
                latent.push(field(2, "u")?);
            }
        }
        PricePath::new(times, values, has_u.then_some(latent))
    }
}

/// Sample `(S, U)` exactly on a uniform grid of `n_steps` steps of size `dt`.
///
/// The returned path has `n_steps + 1` points starting at `t = 0` and keeps
/// the latent target for diagnostics.
pub fn simulate_exact<T: Real>(
    params: &NouParams<T>,
    s0: T,
    u0: T,
    dt: T,
    n_steps: usize,
    seed: u64,
) -> Result<PricePath<T>>
where
    StandardNormal: Distribution<T>,
{
    if !s0.is_finite() || !u0.is_finite() {
        return Err(NouError::InvalidInput("initial state must be finite".into()));
    }
    let tr = Transition::new(params, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut latent = Vec::with_capacity(n_steps + 1);
    let (mut s, mut u) = (s0, u0);
    times.push(T::zero());
    values.push(s);
    latent.push(u);
    for i in 1..=n_steps {
        let z1: T = StandardNormal.sample(&mut rng);
        let z2: T = StandardNormal.sample(&mut rng);
        (s, u) = tr.step_with(s, u, params.u_bar, z1, z2);
        times.push(dt * T::from_usize(i).unwrap());
        values.push(s);
        latent.push(u);
    }
    Ok(PricePath {
        times,
        values,
        latent: Some(latent),
    })
}

/// Draw `(S_0, U_0)` from the stationary joint distribution.
pub fn sample_stationary<T: Real, R: rand::Rng + ?Sized>(params: &NouParams<T>, rng: &mut R) -> (T, T)
where
    StandardNormal: Distribution<T>,
{
    let c = params.stationary_joint_cov();
    let l11 = c[0][0].max(T::zero()).sqrt();
    let l21 = if l11 > T::zero() { c[0][1] / l11 } else { T::zero() };
    let l22 = (c[1][1] - l21 * l21).max(T::zero()).sqrt();
    let z1: T = StandardNormal.sample(rng);
    let z2: T = StandardNormal.sample(rng);
    (params.u_bar + l11 * z1, params.u_bar + l21 * z1 + l22 * z2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usdc() -> NouParams<f64> {
        NouParams::usdc_usdt()
    }

    #[test]
    fn rejects_kappa_not_above_eta() {
        assert!(NouParams::new(0.03, 0.05, 1e-3, 1e-3, 1.0).is_err());
        assert!(NouParams::new(0.05, 0.05, 1e-3, 1e-3, 1.0).is_err());
        assert!(NouParams::new(0.05, 0.05 * (1.0 - 1e-12), 1e-3, 1e-3, 1.0).is_err());
        assert!(stationary_cov(0.0, &NouParams { kappa: 0.01, ..usdc() }).is_err());
    }

    #[test]
    fn stationary_variance_usdc() {
        // 0.5*k^2 nu^2/(eta(k^2-eta^2)) + 0.5*(sigma^2/k - k nu^2/(k^2-eta^2))
        let expected = 0.5 * 0.0025 * 2.5e-7 / (0.03 * 0.0016)
            + 0.5 * (2.5e-7 / 0.05 - 0.05 * 2.5e-7 / 0.0016);
        let c0 = stationary_cov(0.0, &usdc()).unwrap();
        assert!((c0 - expected).abs() < 1e-20);
        assert!((c0 - 5.10e-6).abs() < 0.01e-6);
    }

    #[test]
    fn classical_ou_when_nu_zero() {
        let p = NouParams { nu: 0.0, ..usdc() };
        for tau in [0.0, 0.3, 5.0, 40.0] {
            let c = stationary_cov(tau, &p).unwrap();
            let ou = p.sigma * p.sigma / (2.0 * p.kappa) * (-p.kappa * tau).exp();
            assert!((c - ou).abs() <= 1e-15 * ou.abs().max(1e-300));
        }
    }

    #[test]
    fn cov_is_even() {
        let p = usdc();
        assert_eq!(stationary_cov(1.7, &p).unwrap(), stationary_cov(-1.7, &p).unwrap());
    }

    #[test]
    fn conditional_mean_limits() {
        let p = usdc();
        assert_eq!(conditional_mean(0.0, 0.999, 1.2345, &p).unwrap(), 0.999);
        let far = conditional_mean(1e5, 0.999, 1.0005, &p).unwrap();
        assert!((far - p.u_bar).abs() < 1e-15);
        assert!(conditional_mean(-1.0, 0.999, 1.0, &p).is_err());
    }

    #[test]
    fn noise_free_path_follows_conditional_mean() {
        // sigma must be positive; a vanishing one freezes S noise to ~0
        let p = NouParams { sigma: 1e-300, nu: 0.0, ..usdc() };
        let path = simulate_exact(&p, 0.999, 1.0005, 0.25, 40, 3).unwrap();
        for (t, s) in path.times.iter().zip(&path.values) {
            let m = conditional_mean(*t, 0.999, 1.0005, &p).unwrap();
            assert!((s - m).abs() < 1e-14, "t={t}: {s} vs {m}");
        }
    }

    #[test]
    fn same_seed_same_path() {
        let p = usdc();
        let a = simulate_exact(&p, 1.0, 1.0, 0.01, 500, 11).unwrap();
        let b = simulate_exact(&p, 1.0, 1.0, 0.01, 500, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_exact(&p, 1.0, 1.0, 0.01, 500, 12).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn transition_covariance_matches_closed_form_across_regimes() {
        // The quadrature branch and the closed-form branch must agree near the switch.
        let p = NouParams::<f64>::new(1.0, 0.5, 0.01, 0.02, 1.0).unwrap();
        let below = Transition::new(&p, 0.199_999).unwrap();
        let above = Transition::new(&p, 0.200_001).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let rel = (below.q[i][j] - above.q[i][j]).abs() / above.q[i][j].abs();
                assert!(rel < 1e-4, "q[{i}][{j}] rel diff {rel}");
            }
        }
    }

    #[test]
    fn long_step_transition_reaches_stationarity() {
        let p = usdc();
        let tr = Transition::new(&p, 5000.0).unwrap();
        let st = p.stationary_joint_cov();
        for i in 0..2 {
            for j in 0..2 {
                assert!((tr.q[i][j] - st[i][j]).abs() < 1e-12 * st[0][0]);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let path = simulate_exact(&usdc(), 1.0, 1.0, 1.0 / 96.0, 50, 1).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = PricePath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(path, back);
    }

    #[test]
    fn works_in_single_precision() {
        let p: NouParams<f32> = NouParams::usdc_usdt();
        let c = stationary_cov(0.0f32, &p).unwrap();
        assert!((c - 5.10e-6).abs() < 1e-8);
        let path = simulate_exact(&p, 1.0f32, 1.0, 0.01, 10, 0).unwrap();
        assert_eq!(path.len(), 11);
    }
}
