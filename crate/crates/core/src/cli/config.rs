//! Run configuration: a TOML file with one level of sections.
//!
//! ```toml
//! experiment = "chain"
//! seed = 7
//!
//! [kinetics]
//! items = 3
//! gamma_p = 1.05
//! gamma_d = 1.11
//!
//! [topology]
//! units = 64
//! delta = 0.75
//!
//! [integrator]
//! t_end = 3000
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::Thresholds;
use crate::error::{Error, Result};
use crate::integrate::{IntegratorConfig, Scheme};
use crate::model::Kinetics;
use crate::topology::{Boundary, GammaInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleUnit,
    TwoUnit,
    Chain,
    Ring,
    RingDistance,
    GridRandom,
    GridDisc,
    Quench,
    Sweep,
    BifurcationScan,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SingleUnit => "single_unit",
            ExperimentKind::TwoUnit => "two_unit",
            ExperimentKind::Chain => "chain",
            ExperimentKind::Ring => "ring",
            ExperimentKind::RingDistance => "ring_distance",
            ExperimentKind::GridRandom => "grid_random",
            ExperimentKind::GridDisc => "grid_disc",
            ExperimentKind::Quench => "quench",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::BifurcationScan => "bifurcation_scan",
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, ExperimentKind::GridRandom | ExperimentKind::GridDisc | ExperimentKind::Quench)
    }

    /// One simulation, as opposed to a family of them.
    pub fn is_single_run(&self) -> bool {
        !matches!(self, ExperimentKind::Sweep | ExperimentKind::BifurcationScan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsBlock {
    /// 3 or 9.
    pub items: usize,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "two")]
    pub c: f64,
    #[serde(default = "point_two")]
    pub e: f64,
    /// Cross-group rates of 9-item units.
    #[serde(default = "two")]
    pub d: f64,
    #[serde(default = "point_four")]
    pub f: f64,
    #[serde(default = "five_quarters")]
    pub r: f64,
    /// Decay rate of a lone unit.
    pub gamma: Option<f64>,
    pub gamma_p: Option<f64>,
    pub gamma_d: Option<f64>,
    #[serde(default)]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn point_two() -> f64 {
    0.2
}
fn point_four() -> f64 {
    0.4
}
fn five_quarters() -> f64 {
    1.25
}

impl KineticsBlock {
    pub fn kinetics(&self) -> Result<Kinetics> {
        match self.items {
            3 => Kinetics::three(self.rho, self.c, self.e),
            9 => Kinetics::nine(self.rho, self.c, self.e, self.d, self.f, self.r),
            n => Err(Error::config("kinetics.items", format!("must be 3 or 9, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyBlock {
    pub units: Option<usize>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub delta_b: f64,
    pub delta_p: Option<f64>,
    pub side: Option<usize>,
    #[serde(default)]
    pub boundary: Boundary,
    pub p_d: Option<f64>,
    pub radius: Option<f64>,
    /// Interval of defect decay rates on grids.
    #[serde(default = "gamma_lo")]
    pub gamma_lo: f64,
    #[serde(default = "gamma_hi")]
    pub gamma_hi: f64,
    /// Seed of the grid parameter field; the run seed when absent.
    pub field_seed: Option<u64>,
}

fn gamma_lo() -> f64 {
    GammaInterval::canonical().lo
}
fn gamma_hi() -> f64 {
    GammaInterval::canonical().hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorBlock {
    /// Defaults to the item-count dependent step of [`IntegratorConfig::default_dt`].
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Steps between analysed frames; defaults to a frame every 0.1 time units.
    pub stride: Option<u64>,
    /// Defaults to RK4 without noise and Euler-Maruyama with it.
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub clamp_floor: f64,
    /// Analysed frames per snapshot frame; defaults to 1, or 50 on grids.
    pub snapshot_every: Option<usize>,
    /// Start of the analysis window as a fraction of `t_end`.
    #[serde(default = "half")]
    pub window_start: f64,
    pub quench_time: Option<f64>,
    pub quench_gamma: Option<f64>,
    /// Window length of the post-quench persistence measurement.
    #[serde(default = "fifty")]
    pub persistence_window: f64,
}

fn half() -> f64 {
    0.5
}
fn fifty() -> f64 {
    50.0
}

/// One run per value of `parameter`, which names a `section.key` of the
/// base experiment's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub base: ExperimentKind,
    pub parameter: String,
    pub values: Vec<f64>,
    /// Unit whose regime and hierarchy are tabulated; the first driven unit
    /// when absent.
    pub unit: Option<usize>,
}

/// Regime of one unit along a parameter; each change of label between
/// neighbouring values is refined by bisection to `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub base: ExperimentKind,
    pub parameter: String,
    pub values: Vec<f64>,
    pub unit: Option<usize>,
    #[serde(default = "scan_tol")]
    pub tol: f64,
}

fn scan_tol() -> f64 {
    5e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub kinetics: Option<KineticsBlock>,
    pub topology: Option<TopologyBlock>,
    pub integrator: Option<IntegratorBlock>,
    pub analysis: Option<Thresholds>,
    pub sweep: Option<SweepBlock>,
    pub scan: Option<ScanBlock>,
}

fn missing(path: &str) -> Error {
    Error::config(path, "required but missing")
}

fn require<T: Copy>(v: Option<T>, path: &str) -> Result<T> {
    v.ok_or_else(|| missing(path))
}

impl ExperimentConfig {
    /// Parses and validates. A `seed_override` replaces the file's seed, but
    /// the file must still carry one.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_error(&e))?;
        Self::from_table(value, seed_override)
    }

    pub fn from_table(table: toml::Table, seed_override: Option<u64>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            ExperimentConfig::deserialize(toml::Value::Table(table)).map_err(|e| parse_error(&e))?;
        if cfg.seed.is_none() {
            return Err(missing("seed"));
        }
        if let Some(seed) = seed_override {
            if i64::try_from(seed).is_err() {
                return Err(Error::config("seed", "must be at most 9223372036854775807"));
            }
            cfg.seed = seed_override;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn kinetics_block(&self) -> Result<&KineticsBlock> {
        self.kinetics.as_ref().ok_or_else(|| missing("kinetics"))
    }

    pub fn topology_block(&self) -> Result<&TopologyBlock> {
        self.topology.as_ref().ok_or_else(|| missing("topology"))
    }

    pub fn integrator_block(&self) -> Result<&IntegratorBlock> {
        self.integrator.as_ref().ok_or_else(|| missing("integrator"))
    }

    /// Checks that every block and key the experiment reads is present.
    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        match self.experiment {
            Sweep => {
                let s = self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
                check_base(s.base, "sweep.base")?;
                return check_parameter(&s.parameter, "sweep.parameter");
            }
            BifurcationScan => {
                let s = self.scan.as_ref().ok_or_else(|| missing("scan"))?;
                check_base(s.base, "scan.base")?;
                check_parameter(&s.parameter, "scan.parameter")?;
                if s.values.len() < 2 || s.values.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::config("scan.values", "need at least two strictly increasing values"));
                }
                if !(s.tol > 0.0) {
                    return Err(Error::config("scan.tol", "must be > 0"));
                }
                return Ok(());
            }
            _ => {}
        }
        let k = self.kinetics_block()?;
        k.kinetics()?;
        let ib = self.integrator_block()?;
        self.integrator_config()?;
        if !(0.0..1.0).contains(&ib.window_start) {
            return Err(Error::config("integrator.window_start", "must lie in [0, 1)"));
        }
        if self.experiment == SingleUnit {
            require(k.gamma, "kinetics.gamma")?;
            return Ok(());
        }
        require(k.gamma_p, "kinetics.gamma_p")?;
        let t = self.topology_block()?;
        require(t.delta, "topology.delta")?;
        match self.experiment {
            TwoUnit => {
                if t.units.is_some_and(|n| n != 2) {
                    return Err(Error::config("topology.units", "two_unit has exactly 2 units"));
                }
            }
            Chain | RingDistance => {
                require(t.units, "topology.units")?;
            }
            Ring => {
                require(t.units, "topology.units")?;
                require(t.delta_p, "topology.delta_p")?;
            }
            GridRandom => {
                require(t.side, "topology.side")?;
                require(t.p_d, "topology.p_d")?;
            }
            GridDisc | Quench => {
                require(t.side, "topology.side")?;
                require(t.radius, "topology.radius")?;
            }
            SingleUnit | Sweep | BifurcationScan => unreachable!(),
        }
        if self.experiment.is_grid() {
            GammaInterval::new(t.gamma_lo, t.gamma_hi).map_err(|_| Error::config("topology.gamma_lo", "invalid interval"))?;
            if k.items != 9 {
                return Err(Error::config("kinetics.items", "grid experiments use 9-item units"));
            }
        } else {
            require(k.gamma_d, "kinetics.gamma_d")?;
        }
        if self.experiment == Quench {
            let t_q = require(ib.quench_time, "integrator.quench_time")?;
            require(ib.quench_gamma, "integrator.quench_gamma")?;
            if !(t_q > 0.0 && t_q < ib.t_end) {
                return Err(Error::config("integrator.quench_time", "must lie in (0, t_end)"));
            }
        }
        Ok(())
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig> {
        let k = self.kinetics_block()?;
        let ib = self.integrator_block()?;
        let dt = ib.dt.unwrap_or_else(|| IntegratorConfig::default_dt(k.items));
        let stride = match ib.stride {
            Some(s) => s,
            None => ((0.1 / dt).round() as u64).max(1),
        };
        let scheme = ib
            .scheme
            .unwrap_or(if k.sigma > 0.0 { Scheme::EulerMaruyama } else { Scheme::Rk4 });
        IntegratorConfig::new(dt, ib.t_end, stride, scheme, self.seed())?.with_clamp_floor(ib.clamp_floor)
    }

    /// Analysis thresholds: the `[analysis]` block, or the defaults scaled to
    /// the driven decay rate.
    pub fn thresholds(&self) -> Thresholds {
        if let Some(th) = self.analysis {
            return th;
        }
        match &self.kinetics {
            Some(k) => Thresholds::for_driven(k.rho, k.gamma_d.or(k.gamma).unwrap_or(1.0)),
            None => Thresholds::default(),
        }
    }
}

fn check_base(kind: ExperimentKind, path: &str) -> Result<()> {
    if kind.is_single_run() {
        Ok(())
    } else {
        Err(Error::config(path, "must name a single-run experiment"))
    }
}

fn check_parameter(name: &str, path: &str) -> Result<()> {
    match name.split_once('.') {
        Some(("kinetics" | "topology" | "integrator" | "analysis", key)) if !key.is_empty() && !key.contains('.') => Ok(()),
        _ => Err(Error::config(path, format!("`{name}` is not of the form section.key"))),
    }
}

/// Turns a TOML or schema error into a configuration error whose path is the
/// offending key when it can be recovered.
fn parse_error(e: &dyn std::fmt::Display) -> Error {
    let msg = e.to_string();
    let path = msg
        .split('`')
        .nth(1)
        .filter(|p| !p.contains(' '))
        .unwrap_or("config")
        .to_string();
    Error::config(path, msg.trim().replace('\n', " "))
}

/// Sets `section.key = value` in a raw configuration table and makes `base`
/// the experiment.
pub fn with_parameter(table: &toml::Table, base: ExperimentKind, parameter: &str, value: f64) -> Result<toml::Table> {
    let mut t = table.clone();
    t.remove("sweep");
    t.remove("scan");
    t.insert("experiment".into(), toml::Value::String(base.name().into()));
    let (section, key) = parameter
        .split_once('.')
        .ok_or_else(|| Error::config("sweep.parameter", "expected section.key"))?;
    let block = t
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::config(section, "must be a section"))?;
    // Integer-valued keys stay integers so typed fields still parse.
    let v = match block.get(key) {
        Some(toml::Value::Integer(_)) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
        _ if is_integer_key(key) => toml::Value::Integer(value as i64),
        _ => toml::Value::Float(value),
    };
    block.insert(key.to_string(), v);
    Ok(t)
}

fn is_integer_key(key: &str) -> bool {
    matches!(key, "items" | "units" | "side" | "field_seed" | "stride" | "snapshot_every")
}
