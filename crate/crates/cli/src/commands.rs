//! Command-line surface. Every command reads its inputs, validates them in
//! full, computes, and only then writes its outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nou_amm::calibrate::{discount_series, estimate_yield, fit_mle, FitOptions, FitResult, Sample, YieldEstimate};
use nou_amm::control::{coefficients, greedy_markup, ControlCoeffs, ControlConfig};
use nou_amm::filter::{filter_series, FilteredNouParams, InitialVariance};
use nou_amm::intensity::{optimal_markup, Side};
use nou_amm::sim::{
    historical_replay, frontier as run_frontier, run_path, write_events_csv, write_frontier_csv, FrontierPoint,
    PriceSource, Strategy,
};
use serde::Serialize;

use crate::config::{check_gammas, load_liquidity, load_params, resolve_config, ParamsFile, RunConfig, DEFAULT_GAMMAS};
use crate::error::{CliError, CliResult};
use crate::io::{aligned_cross_rate, parse_step, read_raw_csv, resample_ffill, write_raw, RawSeries};

#[derive(Debug, Parser)]
#[command(name = "nou-amm", version, about = "Nested OU calibration, filtering and market making for pegged pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cross-rate series from two USD-denominated feeds.
    Ingest(IngestArgs),
    /// Fit the model to a price series by maximum likelihood.
    Calibrate(CalibrateArgs),
    /// Run the latent-target filter over a price series.
    Filter(FilterArgs),
    /// Print greedy bid/ask markups at one state.
    Quote(QuoteArgs),
    /// Simulate one path and log every trade.
    Simulate(SimulateArgs),
    /// Efficient frontier on simulated prices.
    Frontier(FrontierArgs),
    /// Efficient frontier on windows of a historical series.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Numerator feed, `timestamp,price`.
    #[arg(long)]
    pub num: PathBuf,
    /// Denominator feed, `timestamp,price`.
    #[arg(long)]
    pub den: PathBuf,
    /// Grid step: seconds, or a duration such as `15m`.
    #[arg(long, default_value = "1")]
    pub step: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Sampling step used for the fit.
    #[arg(long, default_value = "15m")]
    pub resample: String,
    /// Estimate and remove an exponential staking yield first.
    #[arg(long)]
    pub detrend_yield: bool,
    /// Seed for the optimizer restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Parameters file written by `calibrate`, or a preset name.
    #[arg(long)]
    pub params: String,
    /// Resample to this step before filtering.
    #[arg(long)]
    pub resample: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QuoteArgs {
    /// Parameters file or preset name.
    #[arg(long)]
    pub params: String,
    /// Liquidity file or preset name.
    #[arg(long)]
    pub liquidity: String,
    #[arg(long)]
    pub gamma: f64,
    /// Use the stationary (long-horizon) coefficients.
    #[arg(long)]
    pub ergodic: bool,
    /// Control horizon in days.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub grid_n: usize,
    /// `y1,S,u_hat,t` with `t` in days.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub state: Vec<f64>,
    /// Trade sizes; defaults to the atoms of the liquidity spec.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<f64>>,
    /// Quote with all value-function coefficients set to zero.
    #[arg(long)]
    pub zero_coeffs: bool,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunSource {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration instead of `--config`.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: RunSource,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Risk aversion; overrides `control.gamma`.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Output directory for `events.csv` and `summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub source: RunSource,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Historical `timestamp,price` series; overrides `replay.data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub source: RunSource,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Number of random window starts.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Calibrate(a) => calibrate(&a),
        Command::Filter(a) => filter(&a),
        Command::Quote(a) => quote(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Frontier(a) => frontier(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::numerical(e.to_string()))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn nou(context: &str) -> impl Fn(nou_amm::NouError) -> CliError + '_ {
    move |e| CliError::from_nou(context, e)
}

fn ingest(a: &IngestArgs) -> CliResult<()> {
    let step = parse_step(&a.step)?;
    let num = read_raw_csv(&a.num)?;
    let den = read_raw_csv(&a.den)?;
    let rate = aligned_cross_rate(&num, &den, step)?;
    write_with(&a.out, |w| write_raw(w, &rate))
}

/// A series as a sample in days, optionally resampled first.
fn load_sample(path: &Path, step: Option<&str>) -> CliResult<(RawSeries, Sample<f64>)> {
    let mut raw = read_raw_csv(path)?;
    if let Some(step) = step {
        raw = resample_ffill(&raw, parse_step(step)?)?;
    }
    if raw.len() < 3 {
        return Err(CliError::validation(format!("{}: need at least 3 observations, got {}", raw.label, raw.len())));
    }
    let sample = raw.to_sample()?;
    Ok((raw, sample))
}

#[derive(Debug, Serialize)]
struct CalibrationOutput {
    #[serde(flatten)]
    fit: FitResult,
    #[serde(rename = "yield", skip_serializing_if = "Option::is_none")]
    yield_estimate: Option<YieldEstimate>,
    n_observations: usize,
}

fn calibrate(a: &CalibrateArgs) -> CliResult<()> {
    let (raw, mut sample) = load_sample(&a.data, Some(&a.resample))?;
    let mut yield_estimate = None;
    if a.detrend_yield {
        let est = estimate_yield(&sample).map_err(nou(&raw.label))?;
        sample = discount_series(&sample, est.r).map_err(nou(&raw.label))?;
        yield_estimate = Some(est);
    }
    let fit = fit_mle(&sample, &FitOptions { seed: a.seed, ..FitOptions::default() }).map_err(nou(&raw.label))?;
    write_json(&a.out, &CalibrationOutput { fit, yield_estimate, n_observations: sample.len() })
}

fn filter(a: &FilterArgs) -> CliResult<()> {
    let ParamsFile { params, yield_estimate } = load_params(&a.params)?;
    let (raw, mut sample) = load_sample(&a.data, a.resample.as_deref())?;
    if let Some(y) = &yield_estimate {
        sample = discount_series(&sample, y.r).map_err(nou(&raw.label))?;
    }
    let states = filter_series(&sample, &params, None, InitialVariance::Asymptotic).map_err(nou(&raw.label))?;
    write_with(&a.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CliError::validation(format!("{}: {e}", a.out.display()));
        out.write_record(["timestamp", "t", "s", "u_hat", "v"]).map_err(err)?;
        for (i, st) in states.iter().enumerate() {
            out.write_record([
                raw.timestamps[i].to_string(),
                st.t.to_string(),
                sample.values[i].to_string(),
                st.u_hat.to_string(),
                st.v.to_string(),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| CliError::validation(format!("{}: {e}", a.out.display())))
    })
}

#[derive(Debug, Serialize)]
struct SizeQuote {
    z: f64,
    /// Pool sells crypto 1 at `S + ask`.
    ask: f64,
    /// Pool buys crypto 1 at `S - bid`.
    bid: f64,
}

#[derive(Debug, Serialize)]
struct QuoteOutput {
    gamma: f64,
    ergodic: bool,
    zero_coeffs: bool,
    y1: f64,
    s: f64,
    u_hat: f64,
    t: f64,
    quotes: Vec<SizeQuote>,
}

fn quote(a: &QuoteArgs) -> CliResult<()> {
    let params = load_params(&a.params)?.params;
    let liquidity = load_liquidity(&a.liquidity)?;
    let &[y1, s, u_hat, t] = a.state.as_slice() else {
        return Err(CliError::validation("--state takes four values: y1,S,u_hat,t"));
    };
    if let Some(bad) = a.state.iter().find(|x| !x.is_finite()) {
        return Err(CliError::validation(format!("--state: values must be finite, got {bad}")));
    }
    let sizes = a.sizes.clone().unwrap_or_else(|| liquidity.sizes.atoms.iter().map(|at| at.z).collect());
    if let Some(z) = sizes.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
        return Err(CliError::validation(format!("--sizes: sizes must be positive, got {z}")));
    }
    let cfg = ControlConfig { gamma: a.gamma, horizon_t: a.horizon, grid_n: a.grid_n, ergodic: a.ergodic };
    cfg.validate().map_err(nou("control"))?;
    if !(0.0..=a.horizon).contains(&t) && !a.ergodic {
        return Err(CliError::validation(format!("--state: t = {t} outside [0, {}]", a.horizon)));
    }
    let coeffs = if a.zero_coeffs {
        ControlCoeffs::zero(a.gamma)
    } else {
        let filtered = FilteredNouParams::from_params(params).map_err(nou("params"))?;
        coefficients(&filtered, &liquidity, &cfg).map_err(nou("control"))?
    };
    let t_eval = if a.zero_coeffs || a.ergodic { 0.0 } else { t };
    let quotes = sizes
        .iter()
        .map(|&z| {
            let m = |side| {
                if a.zero_coeffs {
                    optimal_markup(liquidity.side(side), z, 0.0, a.gamma)
                } else {
                    greedy_markup(&coeffs, &liquidity, t_eval, y1, s, u_hat, z, side)
                }
            };
            Ok(SizeQuote {
                z,
                ask: m(Side::ZeroOne).map_err(nou("quote"))?,
                bid: m(Side::OneZero).map_err(nou("quote"))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let out = QuoteOutput { gamma: a.gamma, ergodic: a.ergodic, zero_coeffs: a.zero_coeffs, y1, s, u_hat, t, quotes };
    match &a.out {
        Some(path) => write_json(path, &out),
        None => {
            let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::numerical(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn gamma_grid(cli: &Option<Vec<f64>>, cfg: &RunConfig) -> CliResult<Vec<f64>> {
    let gammas = cli.clone().or_else(|| cfg.gammas.clone()).unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
    check_gammas(&gammas).map_err(|m| CliError::validation(format!("--gammas: {m}")))?;
    Ok(gammas)
}

fn control_for(cfg: &RunConfig, gamma: f64) -> CliResult<ControlConfig<f64>> {
    let c = cfg.control.to_control(gamma);
    c.validate().map_err(nou("control"))?;
    Ok(c)
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    seed: u64,
    gamma: f64,
    excess_pnl: f64,
    trades_01: u64,
    trades_10: u64,
    terminal: nou_amm::sim::PoolState,
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let cfg = resolve_config(a.source.config.as_deref(), a.source.preset.as_deref())?;
    let gamma = a
        .gamma
        .or(cfg.control.gamma)
        .ok_or_else(|| CliError::validation("no risk aversion: set `control.gamma` or pass --gamma"))?;
    let control = control_for(&cfg, gamma)?;
    let market = cfg.market()?;
    let seed = a.seed.unwrap_or(cfg.simulation.seed);
    let sim = cfg.simulation.to_sim(true);
    let filtered = FilteredNouParams::from_params(market.params).map_err(nou("model"))?;
    let coeffs = coefficients(&filtered, &market.liquidity, &control).map_err(nou("control"))?;
    let path = run_path(&market, PriceSource::Simulated, Strategy::Greedy(&coeffs), &sim, seed).map_err(nou("simulate"))?;

    fs::create_dir_all(&a.out).map_err(|e| CliError::validation(format!("{}: {e}", a.out.display())))?;
    let events = path.events.unwrap_or_default();
    let events_path = a.out.join("events.csv");
    write_with(&events_path, |w| write_events_csv(w, &events).map_err(nou(&events_path.display().to_string())))?;
    write_json(
        &a.out.join("summary.json"),
        &SimulationSummary {
            seed,
            gamma,
            excess_pnl: path.excess_pnl,
            trades_01: path.trades_01,
            trades_10: path.trades_10,
            terminal: path.terminal,
        },
    )
}

fn write_points(path: &Path, points: &[FrontierPoint]) -> CliResult<()> {
    write_with(path, |w| write_frontier_csv(w, points).map_err(nou(&path.display().to_string())))
}

fn frontier(a: &FrontierArgs) -> CliResult<()> {
    let cfg = resolve_config(a.source.config.as_deref(), a.source.preset.as_deref())?;
    let gammas = gamma_grid(&a.gammas, &cfg)?;
    let control = control_for(&cfg, gammas[0])?;
    let n_paths = a.paths.unwrap_or(cfg.simulation.n_paths);
    if n_paths < 2 {
        return Err(CliError::validation(format!("--paths: need at least 2, got {n_paths}")));
    }
    let seed = a.seed.unwrap_or(cfg.simulation.seed);
    let points = run_frontier(&cfg.market()?, &control, &cfg.simulation.to_sim(false), &gammas, n_paths, seed)
        .map_err(nou("frontier"))?;
    write_points(&a.out, &points)
}

fn replay(a: &ReplayArgs) -> CliResult<()> {
    let cfg = resolve_config(a.source.config.as_deref(), a.source.preset.as_deref())?;
    let section = cfg.replay.clone().unwrap_or_default();
    let data = a
        .data
        .clone()
        .or(section.data)
        .ok_or_else(|| CliError::validation("no historical series: pass --data or set `replay.data`"))?;
    let gammas = gamma_grid(&a.gammas, &cfg)?;
    let control = control_for(&cfg, gammas[0])?;
    let n_starts = a.starts.or(section.n_starts).unwrap_or(cfg.simulation.n_paths);
    if n_starts < 2 {
        return Err(CliError::validation(format!("--starts: need at least 2, got {n_starts}")));
    }
    let step = section.resample_seconds.unwrap_or(cfg.simulation.dt_seconds.round().max(1.0) as i64);
    let (raw, mut sample) = load_sample(&data, Some(&step.to_string()))?;
    if let Some(r) = section.yield_r {
        sample = discount_series(&sample, r).map_err(nou(&raw.label))?;
    }
    let seed = a.seed.unwrap_or(cfg.simulation.seed);
    let points = historical_replay(
        &cfg.market()?,
        &control,
        &cfg.simulation.to_sim(false),
        &sample,
        &gammas,
        n_starts,
        seed,
    )
    .map_err(nou("replay"))?;
    write_points(&a.out, &points)
}
