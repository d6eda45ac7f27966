//! Maximum-likelihood calibration of the nested OU model and staking-yield
//! detrending for value-accruing tokens.

mod likelihood;
mod staking;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NouError, Result};
use crate::model::NouParams;
use crate::scalar::Real;

pub use likelihood::{log_likelihood, log_likelihood_with, LikelihoodMethod};
pub use staking::{discount_series, estimate_yield, YieldEstimate, DAYS_PER_YEAR};

/// Observed rates at strictly increasing times (days).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> Sample<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(NouError::InvalidInput(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(NouError::InvalidInput("empty sample".into()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(NouError::InvalidInput(format!(
                "times must be strictly increasing (index {})",
                i + 1
            )));
        }
        Ok(Sample { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// True when every gap matches the first one to 1e-9 relative.
    pub fn is_equally_spaced(&self) -> bool {
        if self.len() < 3 {
            return true;
        }
        let h0 = self.times[1] - self.times[0];
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h0).abs() <= T::lit(1e-9) * h0)
    }

    pub fn mean(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v) / T::from_usize(self.len()).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub delta: f64,
    pub eta: f64,
    pub sigma: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Simplex iterations per restart.
    pub max_iters: u64,
    /// Number of simplex searches; the first starts at the moment guess, the
    /// others at jittered copies of it.
    pub restarts: usize,
    /// Standard deviation of the log-scale jitter.
    pub jitter: f64,
    /// Stop when the spread of simplex costs falls below this.
    pub sd_tolerance: f64,
    pub seed: u64,
    pub initial: Option<InitialGuess>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 2000,
            restarts: 5,
            jitter: 0.5,
            sd_tolerance: 1e-9,
            seed: 0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: NouParams<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: u64,
}

/// Sample autocovariance at an index lag.
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Moment heuristics for the starting point of the simplex search.
pub fn initial_guess(sample: &Sample<f64>) -> InitialGuess {
    let n = sample.len();
    let span = sample.times[n - 1] - sample.times[0];
    let mean = sample.mean();
    let qv: f64 = sample.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let sigma = (qv / span).sqrt().max(f64::MIN_POSITIVE);

    let h = span / (n - 1) as f64;
    let (l1, l2) = ((n / 20).max(1), (n / 10).max(2));
    let (c1, c2) = (autocov(&sample.values, mean, l1), autocov(&sample.values, mean, l2));
    let eta = if c1 > 0.0 && c2 > 0.0 && c1 > c2 {
        (c1 / c2).ln() / ((l2 - l1) as f64 * h)
    } else {
        10.0 / span
    };
    let eta = eta.clamp(0.1 / span, 1e3 / h.max(f64::MIN_POSITIVE));
    InitialGuess {
        delta: 2.0 * eta,
        eta,
        sigma,
        nu: sigma,
    }
}

fn to_params(x: &[f64], u_bar: f64) -> NouParams<f64> {
    let (delta, eta) = (x[0].exp(), x[1].exp());
    NouParams {
        kappa: eta + delta,
        eta,
        sigma: x[2].exp(),
        nu: x[3].exp(),
        u_bar,
    }
}

struct NegLogLik<'a> {
    sample: &'a Sample<f64>,
    u_bar: f64,
}

const PENALTY: f64 = 1e300;

impl CostFunction for NegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        if x.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return Ok(PENALTY);
        }
        let p = to_params(x, self.u_bar);
        Ok(match log_likelihood_with(self.sample, &p, LikelihoodMethod::StateSpace) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => PENALTY,
        })
    }
}

struct RunOutcome {
    x: Vec<f64>,
    cost: f64,
    converged: bool,
    iters: u64,
}

fn simplex_search(problem: NegLogLik<'_>, start: &[f64], opts: &FitOptions) -> Result<RunOutcome> {
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.sd_tolerance)
        .map_err(|e| NouError::InvalidInput(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| NouError::Conditioning(format!("simplex search failed: {e}")))?;
    let state = res.state();
    let x = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    Ok(RunOutcome {
        x,
        cost: state.get_best_cost(),
        converged: matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        ),
        iters: state.get_iter(),
    })
}

/// Fit `(kappa, eta, sigma, nu)` by maximum likelihood with `u_bar` fixed at
/// the sample mean, searching over `(ln delta, ln eta, ln sigma, ln nu)` with
/// `kappa = eta + delta`.
pub fn fit_mle(sample: &Sample<f64>, options: &FitOptions) -> Result<FitResult> {
    if sample.len() < 10 {
        return Err(NouError::InvalidInput(format!(
            "need at least 10 observations, got {}",
            sample.len()
        )));
    }
    if let Some(i) = sample.values.iter().position(|v| !v.is_finite()) {
        return Err(NouError::NonFinite { index: i, what: "price".into() });
    }
    let u_bar = sample.mean();
    let var = sample.values.iter().map(|v| (v - u_bar).powi(2)).sum::<f64>() / sample.len() as f64;
    let tiny = 64.0 * f64::EPSILON * u_bar.abs();
    if sample.values.iter().all(|v| *v == sample.values[0]) || !(var > tiny * tiny) {
        return Err(NouError::Conditioning(format!(
            "sample is constant at {}; covariance is degenerate (sigma -> 0)",
            sample.values[0]
        )));
    }

    let g = options.initial.unwrap_or_else(|| initial_guess(sample));
    let x0 = vec![g.delta.ln(), g.eta.ln(), g.sigma.ln(), g.nu.ln()];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let starts: Vec<Vec<f64>> = (0..options.restarts.max(1))
        .map(|r| {
            if r == 0 {
                x0.clone()
            } else {
                x0.iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        v + options.jitter * z
                    })
                    .collect()
            }
        })
        .collect();

    let runs = starts
        .par_iter()
        .map(|x| simplex_search(NegLogLik { sample, u_bar }, x, options))
        .collect::<Result<Vec<_>>>()?;
    let mut iterations: u64 = runs.iter().map(|r| r.iters).sum();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one restart");

    // Polish from the best point with a fresh simplex.
    let polish = simplex_search(NegLogLik { sample, u_bar }, &best.x, options)?;
    iterations += polish.iters;
    let (x, converged) = if polish.cost <= best.cost {
        (polish.x, polish.converged)
    } else {
        (best.x, best.converged)
    };

    let params = to_params(&x, u_bar);
    let log_likelihood = log_likelihood(sample, &params)?;
    Ok(FitResult {
        params,
        log_likelihood,
        converged: converged && params.validate().is_ok(),
        iterations,
    })
}
