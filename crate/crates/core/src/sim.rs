//! Event-driven simulation of a pool quoting markups around the reference rate.
//!
//! Trades arrive by Bernoulli thinning: in each step of length `dt`, each
//! side and size atom trades once with probability `rate(delta) * w * dt`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Sample;
use crate::control::{coefficients, greedy_markup, ControlCoeffs, ControlConfig};
use crate::error::{NouError, Result};
use crate::filter::{FilteredNouParams, InitialVariance, ScalarFilter};
use crate::intensity::{LiquiditySpec, Side};
use crate::model::{sample_stationary, NouParams, Transition};

/// Largest admissible `lam * w * dt` for any side and atom.
pub const THINNING_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    /// Days since the start of the path.
    pub t: f64,
    /// Accumulated markups.
    pub x: f64,
    pub y0: f64,
    pub y1: f64,
    pub q0: f64,
    pub q1: f64,
    pub s: f64,
    pub u_hat: f64,
}

impl PoolState {
    pub fn new(q0: f64, q1: f64, s: f64, u_hat: f64) -> Self {
        PoolState {
            t: 0.0,
            x: 0.0,
            y0: 0.0,
            y1: 0.0,
            q0,
            q1,
            s,
            u_hat,
        }
    }

    /// Settle a trade of size `z` at markup `delta` against the current rate.
    pub fn apply_trade(&mut self, side: Side, z: f64, delta: f64) {
        let sz = z * self.s;
        match side {
            Side::OneZero => {
                self.q1 += z;
                self.q0 -= sz;
                self.y1 += z;
                self.y0 -= sz;
            }
            Side::ZeroOne => {
                self.q1 -= z;
                self.q0 += sz;
                self.y1 -= z;
                self.y0 += sz;
            }
        }
        self.x += z * delta;
    }
}

/// Mark-to-market gain over holding the initial reserves.
pub fn excess_pnl(state: &PoolState) -> f64 {
    state.x + state.y0 + state.y1 * state.s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub t: f64,
    pub side: Side,
    pub z: f64,
    pub delta: f64,
    /// Executed exchange rate, `s + delta` when the pool sells crypto 1.
    pub rate: f64,
    /// Reference rate at execution.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub excess_pnl: f64,
    pub trades_01: u64,
    pub trades_10: u64,
    pub terminal: PoolState,
    pub events: Option<Vec<TradeEvent>>,
}

/// Replay executed trades onto `start` and mark at the final rate `s_end`.
pub fn replay_events(start: PoolState, events: &[TradeEvent], s_end: f64) -> PoolState {
    let mut st = start;
    for e in events {
        st.s = e.s;
        st.t = e.t;
        st.apply_trade(e.side, e.z, e.delta);
    }
    st.s = s_end;
    st
}

#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    Greedy(&'a ControlCoeffs<f64>),
    Constant(f64),
    NoQuote,
}

#[derive(Debug, Clone, Copy)]
pub enum PriceSource<'a> {
    /// Exact simulation of the model, started from its stationary law.
    Simulated,
    /// Prices read from a series from index `start`, held between samples.
    Historical { series: &'a Sample<f64>, start: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step in days.
    pub dt: f64,
    /// Days.
    pub horizon: f64,
    pub initial_q0: f64,
    pub initial_q1: f64,
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 10.0 / 86_400.0,
            horizon: 1.0,
            initial_q0: 1e7,
            initial_q1: 1e7,
            record_events: false,
        }
    }
}

impl SimConfig {
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.horizon > 0.0) || !self.dt.is_finite() || !self.horizon.is_finite() {
            return Err(NouError::InvalidParams(format!(
                "dt and horizon must be positive (dt = {}, horizon = {})",
                self.dt, self.horizon
            )));
        }
        let n = (self.horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(NouError::InvalidParams(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Model and demand curves shared by every path.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    pub params: NouParams<f64>,
    pub liquidity: LiquiditySpec<f64>,
}

impl Market {
    pub fn new(params: NouParams<f64>, liquidity: LiquiditySpec<f64>) -> Result<Self> {
        params.validate()?;
        liquidity.validate()?;
        Ok(Market { params, liquidity })
    }

    /// Largest step honouring the thinning bound.
    pub fn max_dt(&self) -> f64 {
        let max_w = self.liquidity.sizes.atoms.iter().map(|a| a.w).fold(0.0, f64::max);
        let max_lam = self.liquidity.side_01.lam.max(self.liquidity.side_10.lam);
        THINNING_BOUND / (max_lam * max_w)
    }

    pub fn check_dt(&self, dt: f64) -> Result<()> {
        let max_dt = self.max_dt();
        if dt > max_dt {
            return Err(NouError::ThinningBound { dt, max_dt });
        }
        Ok(())
    }
}

/// Piecewise-constant reader over a series, relative to its start index.
struct HeldPrices<'a> {
    series: &'a Sample<f64>,
    t0: f64,
    idx: usize,
}

impl HeldPrices<'_> {
    fn at(&mut self, t_rel: f64) -> f64 {
        let t = self.t0 + t_rel;
        let times = &self.series.times;
        // tolerate rounding of the step grid against the sample grid
        let tol = 1e-9 * (1.0 + t.abs());
        while self.idx + 1 < times.len() && times[self.idx + 1] <= t + tol {
            self.idx += 1;
        }
        self.series.values[self.idx]
    }
}

enum Feed<'a> {
    Simulated { tr: Transition<f64>, u: f64 },
    Historical(HeldPrices<'a>),
}

fn markup(strategy: &Strategy<'_>, market: &Market, st: &PoolState, z: f64, side: Side) -> Result<f64> {
    match strategy {
        Strategy::Greedy(c) => greedy_markup(c, &market.liquidity, st.t, st.y1, st.s, st.u_hat, z, side),
        Strategy::Constant(d) => Ok(*d),
        Strategy::NoQuote => Ok(f64::INFINITY),
    }
}

pub fn run_path(
    market: &Market,
    source: PriceSource<'_>,
    strategy: Strategy<'_>,
    sim: &SimConfig,
    seed: u64,
) -> Result<PathResult> {
    let n = sim.n_steps()?;
    market.check_dt(sim.dt)?;
    let p = market.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (s0, mut feed) = match source {
        PriceSource::Simulated => {
            let (s0, u0) = sample_stationary(&p, &mut rng);
            (s0, Feed::Simulated { tr: Transition::new(&p, sim.dt)?, u: u0 })
        }
        PriceSource::Historical { series, start } => {
            if start >= series.len() {
                return Err(NouError::InvalidInput(format!(
                    "start index {start} beyond series of length {}",
                    series.len()
                )));
            }
            let t0 = series.times[start];
            let end = series.times[series.len() - 1];
            if t0 + sim.horizon > end + 1e-9 * (1.0 + end.abs()) {
                return Err(NouError::InvalidInput(format!(
                    "window of {} days from t = {t0} runs past the end of the series at {end}",
                    sim.horizon
                )));
            }
            let mut held = HeldPrices { series, t0, idx: start };
            (held.at(0.0), Feed::Historical(held))
        }
    };

    // Start the filter from the conditional mean of U given S_0.
    let c = p.stationary_joint_cov();
    let u_hat0 = if c[0][0] > 0.0 { p.u_bar + c[0][1] / c[0][0] * (s0 - p.u_bar) } else { p.u_bar };
    let mut filter = ScalarFilter::new(p, 0.0, s0, u_hat0, InitialVariance::Asymptotic)?;

    let mut st = PoolState::new(sim.initial_q0, sim.initial_q1, s0, u_hat0);
    let mut events = sim.record_events.then(Vec::new);
    let (mut n01, mut n10) = (0u64, 0u64);
    let atoms = &market.liquidity.sizes.atoms;

    for k in 0..n {
        st.t = k as f64 * sim.dt;
        for side in Side::BOTH {
            let intensity = market.liquidity.side(side);
            for atom in atoms {
                let delta = markup(&strategy, market, &st, atom.z, side)?;
                let prob = if delta.is_finite() { intensity.rate(delta) * atom.w * sim.dt } else { 0.0 };
                let u: f64 = rng.random();
                if u < prob {
                    st.apply_trade(side, atom.z, delta);
                    match side {
                        Side::ZeroOne => n01 += 1,
                        Side::OneZero => n10 += 1,
                    }
                    if let Some(ev) = events.as_mut() {
                        let rate = match side {
                            Side::ZeroOne => st.s + delta,
                            Side::OneZero => st.s - delta,
                        };
                        ev.push(TradeEvent { t: st.t, side, z: atom.z, delta, rate, s: st.s });
                    }
                }
            }
        }
        debug_assert!(
            ((st.q0 - sim.initial_q0) + st.s * (st.q1 - sim.initial_q1) + st.x - excess_pnl(&st)).abs()
                <= 1e-6 * (1.0 + st.x.abs() + st.y0.abs())
        );

        let t_next = (k + 1) as f64 * sim.dt;
        let s_next = match &mut feed {
            Feed::Simulated { tr, u } => {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let (s, u_next) = tr.step_with(st.s, *u, p.u_bar, z1, z2);
                *u = u_next;
                s
            }
            Feed::Historical(held) => held.at(t_next),
        };
        if !s_next.is_finite() {
            return Err(NouError::NonFinite { index: k + 1, what: "price".into() });
        }
        st.s = s_next;
        st.u_hat = filter.update(t_next, s_next).u_hat;
        st.t = t_next;
    }

    let pnl = excess_pnl(&st);
    if !pnl.is_finite() {
        return Err(NouError::NonFinite { index: n, what: "excess pnl".into() });
    }
    Ok(PathResult {
        excess_pnl: pnl,
        trades_01: n01,
        trades_10: n10,
        terminal: st,
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub gamma: f64,
    pub mean_excess_pnl: f64,
    pub std_excess_pnl: f64,
    pub n_paths: usize,
}

/// Mean and sample standard deviation, two-pass.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed of path `i` of a batch.
pub fn path_seed(seed: u64, i: usize) -> u64 {
    seed ^ i as u64
}

/// Excess PnL of `sources.len()` paths run in parallel, in path order.
pub fn run_batch(
    market: &Market,
    sources: &[PriceSource<'_>],
    strategy: Strategy<'_>,
    sim: &SimConfig,
    seed: u64,
) -> std::result::Result<Vec<f64>, (usize, NouError)> {
    sources
        .par_iter()
        .enumerate()
        .map(|(i, src)| {
            run_path(market, *src, strategy, sim, path_seed(seed, i))
                .map(|r| r.excess_pnl)
                .map_err(|e| (i, e))
        })
        .collect()
}

fn sweep(
    market: &Market,
    control: &ControlConfig<f64>,
    sim: &SimConfig,
    gammas: &[f64],
    sources: &[PriceSource<'_>],
    seed: u64,
) -> Result<Vec<FrontierPoint>> {
    if sources.len() < 2 {
        return Err(NouError::InvalidInput(format!("need at least 2 paths, got {}", sources.len())));
    }
    sim.n_steps()?;
    market.check_dt(sim.dt)?;
    let filtered = FilteredNouParams::from_params(market.params)?;
    gammas
        .iter()
        .map(|&gamma| {
            let cfg = ControlConfig { gamma, ..*control };
            let coeffs = coefficients(&filtered, &market.liquidity, &cfg)?;
            let pnl = run_batch(market, sources, Strategy::Greedy(&coeffs), sim, seed).map_err(|(path, e)| {
                NouError::PathFailure { gamma, path, source: Box::new(e) }
            })?;
            let (mean, std) = mean_std(&pnl);
            Ok(FrontierPoint {
                gamma,
                mean_excess_pnl: mean,
                std_excess_pnl: std,
                n_paths: pnl.len(),
            })
        })
        .collect()
}

/// Greedy-strategy frontier on simulated prices: one point per risk aversion.
pub fn frontier(
    market: &Market,
    control: &ControlConfig<f64>,
    sim: &SimConfig,
    gammas: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<FrontierPoint>> {
    let sources = vec![PriceSource::Simulated; n_paths];
    sweep(market, control, sim, gammas, &sources, seed)
}

/// Uniform start indices whose whole window fits inside the series.
pub fn draw_starts(series: &Sample<f64>, window: f64, n_starts: usize, seed: u64) -> Result<Vec<usize>> {
    let t0 = series.times[0];
    let end = series.times[series.len() - 1];
    if end - t0 < window {
        return Err(NouError::InvalidInput(format!(
            "series spans {} days, shorter than the {window}-day window",
            end - t0
        )));
    }
    let last = series.times.partition_point(|&t| t + window <= end + 1e-9 * (1.0 + end.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_starts).map(|_| rng.random_range(0..last)).collect())
}

/// Frontier over windows of a historical series starting at random times.
pub fn historical_replay(
    market: &Market,
    control: &ControlConfig<f64>,
    sim: &SimConfig,
    series: &Sample<f64>,
    gammas: &[f64],
    n_starts: usize,
    seed: u64,
) -> Result<Vec<FrontierPoint>> {
    let starts = draw_starts(series, sim.horizon, n_starts, seed)?;
    let sources: Vec<PriceSource<'_>> = starts
        .iter()
        .map(|&start| PriceSource::Historical { series, start })
        .collect();
    sweep(market, control, sim, gammas, &sources, seed)
}

pub fn write_frontier_csv<W: Write>(w: W, points: &[FrontierPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["gamma", "mean_excess_pnl", "std_excess_pnl", "n_paths"])?;
    for p in points {
        out.write_record([
            p.gamma.to_string(),
            p.mean_excess_pnl.to_string(),
            p.std_excess_pnl.to_string(),
            p.n_paths.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_events_csv<W: Write>(w: W, events: &[TradeEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "side", "z", "delta", "rate"])?;
    for e in events {
        out.write_record([
            e.t.to_string(),
            e.side.to_string(),
            e.z.to_string(),
            e.delta.to_string(),
            e.rate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
