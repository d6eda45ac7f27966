//! Run configuration: one JSON document, see `schema/run_config.schema.json`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nou_amm::calibrate::YieldEstimate;
use nou_amm::control::ControlConfig;
use nou_amm::intensity::LiquiditySpec;
use nou_amm::model::NouParams;
use nou_amm::sim::{Market, SimConfig};
use serde::de::{self, DeserializeOwned, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, CliResult};
use crate::io::SECONDS_PER_DAY;

pub const PRESETS: [&str; 2] = ["usdc_usdt", "wsteth_weth"];

/// Risk-aversion grid used when neither the config nor the command line gives one.
pub const DEFAULT_GAMMAS: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

fn unknown_preset(name: &str) -> String {
    format!("unknown preset `{name}` (known: {})", PRESETS.join(", "))
}

/// Either a preset name or an inline object.
#[derive(Debug, Clone, PartialEq)]
pub enum Choice<T> {
    Preset(String),
    Inline(T),
}

impl<T: Serialize> Serialize for Choice<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Choice::Preset(name) => s.serialize_str(name),
            Choice::Inline(v) => v.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Choice<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: DeserializeOwned> Visitor<'de> for V<T> {
            type Value = Choice<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a preset name ({}) or an object", PRESETS.join(", "))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                if PRESETS.contains(&v) {
                    Ok(Choice::Preset(v.to_owned()))
                } else {
                    Err(E::custom(unknown_preset(v)))
                }
            }
            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                T::deserialize(de::value::MapAccessDeserializer::new(map)).map(Choice::Inline)
            }
        }
        d.deserialize_any(V(std::marker::PhantomData))
    }
}

impl Choice<NouParams<f64>> {
    pub fn resolve(&self) -> NouParams<f64> {
        match self {
            Choice::Preset(name) => NouParams::preset(name).expect("preset names are checked on parse"),
            Choice::Inline(p) => *p,
        }
    }
}

impl Choice<LiquiditySpec<f64>> {
    pub fn resolve(&self) -> LiquiditySpec<f64> {
        match self {
            Choice::Preset(name) if name == "usdc_usdt" => LiquiditySpec::usdc_usdt(),
            Choice::Preset(_) => LiquiditySpec::wsteth_weth(),
            Choice::Inline(l) => l.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// Risk aversion for single-strategy commands (`simulate`).
    pub gamma: Option<f64>,
    pub horizon_days: f64,
    pub grid_n: usize,
    pub ergodic: bool,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection { gamma: None, horizon_days: 1.0, grid_n: 10_000, ergodic: false }
    }
}

impl ControlSection {
    pub fn to_control(&self, gamma: f64) -> ControlConfig<f64> {
        ControlConfig { gamma, horizon_t: self.horizon_days, grid_n: self.grid_n, ergodic: self.ergodic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt_seconds: f64,
    pub horizon_days: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial_q0: f64,
    pub initial_q1: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimulationSection {
            dt_seconds: 10.0,
            horizon_days: d.horizon,
            n_paths: 300,
            seed: 0,
            initial_q0: d.initial_q0,
            initial_q1: d.initial_q1,
        }
    }
}

impl SimulationSection {
    pub fn to_sim(&self, record_events: bool) -> SimConfig {
        SimConfig {
            dt: self.dt_seconds / SECONDS_PER_DAY,
            horizon: self.horizon_days,
            initial_q0: self.initial_q0,
            initial_q1: self.initial_q1,
            record_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaySection {
    /// `timestamp,price` CSV, resolved relative to the config file.
    pub data: Option<PathBuf>,
    pub resample_seconds: Option<i64>,
    /// Annual staking yield removed from the series before replay.
    pub yield_r: Option<f64>,
    pub n_starts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Choice<NouParams<f64>>,
    pub liquidity: Choice<LiquiditySpec<f64>>,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    /// Risk-aversion grid for `frontier` and `replay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplaySection>,
}

impl RunConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let gamma = match name {
            "usdc_usdt" => 1e-3,
            "wsteth_weth" => 1.0,
            _ => return None,
        };
        Some(RunConfig {
            model: Choice::Preset(name.into()),
            liquidity: Choice::Preset(name.into()),
            control: ControlSection { gamma: Some(gamma), ..ControlSection::default() },
            simulation: SimulationSection::default(),
            gammas: Some(DEFAULT_GAMMAS.to_vec()),
            replay: None,
        })
    }

    pub fn params(&self) -> NouParams<f64> {
        self.model.resolve()
    }

    pub fn market(&self) -> CliResult<Market> {
        Market::new(self.params(), self.liquidity.resolve()).map_err(|e| CliError::from_nou("config", e))
    }

    /// Check every section against the library invariants.
    pub fn validate(&self, source: &str) -> CliResult<()> {
        let ctx = |field: &str| format!("{source}: field `{field}`");
        self.params().validate().map_err(|e| CliError::from_nou(&ctx("model"), e))?;
        self.liquidity.resolve().validate().map_err(|e| CliError::from_nou(&ctx("liquidity"), e))?;
        if let Some(g) = self.control.gamma {
            self.control.to_control(g).validate().map_err(|e| CliError::from_nou(&ctx("control"), e))?;
        } else {
            self.control.to_control(1.0).validate().map_err(|e| CliError::from_nou(&ctx("control"), e))?;
        }
        let sim = self.simulation.to_sim(false);
        sim.n_steps().map_err(|e| CliError::from_nou(&ctx("simulation"), e))?;
        self.market()?
            .check_dt(sim.dt)
            .map_err(|e| CliError::from_nou(&ctx("simulation.dt_seconds"), e))?;
        if self.simulation.n_paths < 2 {
            return Err(CliError::validation(format!("{}: need at least 2 paths", ctx("simulation.n_paths"))));
        }
        if let Some(gs) = &self.gammas {
            check_gammas(gs).map_err(|m| CliError::validation(format!("{}: {m}", ctx("gammas"))))?;
        }
        if let Some(r) = &self.replay {
            if let Some(step) = r.resample_seconds {
                if step <= 0 {
                    return Err(CliError::validation(format!("{}: must be > 0", ctx("replay.resample_seconds"))));
                }
            }
            if let Some(y) = r.yield_r {
                if !y.is_finite() {
                    return Err(CliError::validation(format!("{}: must be finite", ctx("replay.yield_r"))));
                }
            }
        }
        Ok(())
    }
}

pub fn check_gammas(gammas: &[f64]) -> Result<(), String> {
    if gammas.is_empty() {
        return Err("risk-aversion grid is empty".into());
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(format!("risk aversion must be positive and finite, got {g}"));
    }
    Ok(())
}

/// Deserialize JSON text, naming the source, line, column and field on error.
pub fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        let msg = match msg.find(" at line ") {
            Some(i) => msg[..i].to_owned(),
            None => msg,
        };
        let field = if path == "." { String::new() } else { format!(" field `{path}`:") };
        CliError::validation(format!(
            "{source}: line {} column {}:{field} {msg}",
            inner.line(),
            inner.column()
        ))
    })?;
    Ok(value)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let source = path.display().to_string();
    let mut cfg: RunConfig = parse_json(&read_text(path)?, &source)?;
    if let Some(ReplaySection { data: Some(d), .. }) = cfg.replay.as_mut() {
        if d.is_relative() {
            if let Some(dir) = path.parent() {
                *d = dir.join(&*d);
            }
        }
    }
    cfg.validate(&source)?;
    Ok(cfg)
}

/// `--config FILE` or `--preset NAME`.
pub fn resolve_config(config: Option<&Path>, preset: Option<&str>) -> CliResult<RunConfig> {
    match (config, preset) {
        (Some(p), None) => load_config(p),
        (None, Some(name)) => RunConfig::preset(name).ok_or_else(|| CliError::validation(unknown_preset(name))),
        (Some(_), Some(_)) => Err(CliError::validation("give either --config or --preset, not both")),
        (None, None) => Err(CliError::validation("missing --config FILE (or --preset NAME)")),
    }
}

/// Model parameters as written by `calibrate`: the five parameters plus
/// optional fit diagnostics and the staking yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(flatten)]
    pub params: NouParams<f64>,
    #[serde(rename = "yield", default, skip_serializing_if = "Option::is_none")]
    pub yield_estimate: Option<YieldEstimate>,
}

/// A parameters file, or a preset name when no such file exists.
pub fn load_params(arg: &str) -> CliResult<ParamsFile> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(p) = NouParams::preset(arg) {
            return Ok(ParamsFile { params: p, yield_estimate: None });
        }
    }
    let file: ParamsFile = parse_json(&read_text(path)?, arg)?;
    file.params.validate().map_err(|e| CliError::from_nou(arg, e))?;
    Ok(file)
}

/// A liquidity file, or a preset name when no such file exists.
pub fn load_liquidity(arg: &str) -> CliResult<LiquiditySpec<f64>> {
    let path = Path::new(arg);
    if !path.exists() && PRESETS.contains(&arg) {
        return Ok(Choice::<LiquiditySpec<f64>>::Preset(arg.into()).resolve());
    }
    let spec: LiquiditySpec<f64> = parse_json(&read_text(path)?, arg)?;
    Ok(spec)
}
