//! Experiment runner: turns a configuration into simulations and writes
//! snapshots, analysis tables, optional PPM frames and a checksummed manifest.

pub mod config;
pub mod ppm;
pub mod snapshot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    classify_regime, detect_path, entrainment_length, hierarchy_level, profile_non_increasing, radial_profile,
    spatiotemporal_field, symbol_sequence_relative, write_profile_csv, write_symbols_csv, Hierarchy, Path, RadialBin,
    Regime, RegimeReport, Thresholds,
};
use crate::error::{Error, Result};
use crate::experiments::{self, Drive, GridSpec, Observation, ObserveOptions};
use crate::integrate::{initial_condition_uniform, Setup, Trajectory};
use crate::model::SystemState;
use crate::topology::GammaInterval;

pub use config::{ExperimentConfig, ExperimentKind};

/// Symbol sequences are lagged by at most this many symbols when comparing
/// a driven unit with the pacemaker.
pub const ENTRAINMENT_MAX_LAG: usize = 2;

/// Radial bins of target-wave amplitude profiles.
pub const PROFILE_BINS: usize = 12;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
    pub export_frames: bool,
}

/// A configured single run, ready to execute.
#[derive(Debug, Clone)]
pub struct Plan {
    pub kind: ExperimentKind,
    pub setup: Setup,
    pub initial: SystemState,
    pub observe: ObserveOptions,
    /// Global index of the unit tabulated in sweeps and scans.
    pub focus: usize,
    /// Disc radius of disc experiments.
    pub radius: Option<f64>,
}

impl Plan {
    pub fn new(cfg: &ExperimentConfig) -> Result<Plan> {
        use ExperimentKind::*;
        let k = cfg.kinetics_block()?;
        let kinetics = k.kinetics()?;
        let ic = cfg.integrator_config()?;
        let ib = cfg.integrator_block()?;
        let th = cfg.thresholds();
        let from_time = ib.window_start * ib.t_end;
        let mut persistence = None;
        let mut radius = None;
        let (setup, probes) = match cfg.experiment {
            SingleUnit => (experiments::single_unit(kinetics, k.gamma.unwrap(), k.sigma, ic)?, vec![0]),
            Sweep | BifurcationScan => {
                return Err(Error::config("experiment", "not a single run"));
            }
            kind if !kind.is_grid() => {
                let t = cfg.topology_block()?;
                let drive = Drive::new(k.gamma_p.unwrap(), k.gamma_d.unwrap(), k.sigma);
                let delta = t.delta.unwrap();
                let setup = match kind {
                    TwoUnit => experiments::chain(kinetics, 2, drive, delta, t.delta_b, ic)?,
                    Chain => experiments::chain(kinetics, t.units.unwrap(), drive, delta, t.delta_b, ic)?,
                    Ring => experiments::ring(kinetics, t.units.unwrap(), drive, delta, t.delta_p.unwrap(), ic)?,
                    _ => experiments::ring_distance(kinetics, t.units.unwrap(), drive, delta, t.delta_b, ic)?,
                };
                let all = (0..setup.units()).collect();
                (setup, all)
            }
            kind => {
                let t = cfg.topology_block()?;
                let grid = GridSpec {
                    side: t.side.unwrap(),
                    delta: t.delta.unwrap(),
                    boundary: t.boundary,
                    gamma_pacemaker: k.gamma_p.unwrap(),
                    interval: GammaInterval::new(t.gamma_lo, t.gamma_hi)?,
                    field_seed: t.field_seed.unwrap_or(cfg.seed()),
                    sigma: k.sigma,
                };
                if kind == GridRandom {
                    let p_d = t.p_d.unwrap();
                    let rep = experiments::representative_defect(&grid, p_d.min(0.1))?;
                    (experiments::grid_random(kinetics, &grid, p_d, ic)?, vec![rep])
                } else {
                    let r = t.radius.unwrap();
                    radius = Some(r);
                    let mut setup = experiments::grid_disc(kinetics, &grid, r, ic)?;
                    let ring = experiments::disc_neighbours(grid.side, &setup.params.pacemakers);
                    if kind == Quench {
                        let t_q = ib.quench_time.unwrap();
                        setup = experiments::quench_pacemakers(setup, t_q, ib.quench_gamma.unwrap())?;
                        persistence = Some((t_q, ib.persistence_window));
                    }
                    (setup, ring)
                }
            }
        };
        let focus = match cfg.experiment {
            SingleUnit => 0,
            kind if kind.is_grid() => probes.first().copied().unwrap_or(0),
            _ => 1,
        };
        let initial = initial_condition_uniform(setup.units(), setup.kinetics.items(), cfg.seed());
        let snapshot_every = ib.snapshot_every.unwrap_or(if cfg.experiment.is_grid() { 50 } else { 1 });
        Ok(Plan {
            kind: cfg.experiment,
            setup,
            initial,
            observe: ObserveOptions {
                probes,
                from_time,
                snapshot_every: Some(snapshot_every),
                persistence,
                thresholds: th,
            },
            focus,
            radius,
        })
    }

    /// Tabulate `unit` instead of the default focus, recording it if needed.
    pub fn with_focus(mut self, unit: usize) -> Result<Plan> {
        if unit >= self.setup.units() {
            return Err(Error::config("unit", format!("unit {unit} outside network of {}", self.setup.units())));
        }
        if !self.observe.probes.contains(&unit) {
            self.observe.probes.push(unit);
        }
        self.focus = unit;
        Ok(self)
    }

    pub fn execute(&self) -> Result<Observation> {
        experiments::observe(&self.setup, &self.initial, &self.observe)
    }
}

/// Per-unit analysis of a probe.
#[derive(Debug, Clone, Serialize)]
pub struct UnitRow {
    pub unit: usize,
    pub gamma: f64,
    pub regime: Regime,
    pub amplitude: f64,
    pub min_concentration: f64,
    pub hierarchy: Option<Hierarchy>,
    pub within_group: Option<f64>,
    pub between_group: Option<f64>,
    pub path: Option<Path>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub seed: u64,
    pub units: usize,
    pub items: usize,
    pub fault: Option<String>,
    pub entrainment_length: Option<usize>,
    pub focus: usize,
    pub persistence: Option<f64>,
    pub profile: Option<Vec<RadialBin>>,
    pub profile_non_increasing: Option<bool>,
    pub rows: Vec<UnitRow>,
}

impl RunSummary {
    pub fn focus_row(&self) -> Option<&UnitRow> {
        self.rows.iter().find(|r| r.unit == self.focus)
    }
}

fn analyse_unit(plan: &Plan, obs: &Observation, column: usize, th: &Thresholds) -> UnitRow {
    let traj = &obs.trajectory;
    let unit = traj.unit_ids[column];
    let w = 0..traj.frames();
    let reg = classify_regime(traj, column, w.clone(), th);
    let nine = traj.items == 9;
    let h = nine.then(|| hierarchy_level(traj, column, w.clone(), th));
    let path = nine.then(|| detect_path(&symbol_sequence_relative(traj, column, w, th)));
    UnitRow {
        unit,
        gamma: plan.setup.params.gammas[unit],
        regime: reg.label,
        amplitude: reg.amplitude,
        min_concentration: reg.min_concentration,
        hierarchy: h.map(|h| h.level),
        within_group: h.map(|h| h.within_group),
        between_group: h.map(|h| h.between_group),
        path,
    }
}

pub fn summarize(plan: &Plan, obs: &Observation, seed: u64) -> RunSummary {
    let th = &plan.observe.thresholds;
    let traj = &obs.trajectory;
    let analysable = traj.frames() >= 2;
    let rows = if analysable {
        (0..traj.recorded_units()).map(|c| analyse_unit(plan, obs, c, th)).collect()
    } else {
        Vec::new()
    };
    let chain_like = matches!(
        plan.kind,
        ExperimentKind::TwoUnit | ExperimentKind::Chain | ExperimentKind::Ring | ExperimentKind::RingDistance
    );
    let entrainment =
        (chain_like && analysable).then(|| entrainment_length(traj, 0..traj.frames(), th, ENTRAINMENT_MAX_LAG));
    let (profile, monotone) = match (plan.radius, plan.setup.topology) {
        (Some(r), crate::topology::TopologyTag::Grid { side }) => {
            let c = (side as f64 - 1.0) / 2.0;
            let bins = radial_profile(&obs.amplitudes, side, (c, c), PROFILE_BINS);
            let mono = profile_non_increasing(&bins, r, th.mono);
            (Some(bins), Some(mono))
        }
        _ => (None, None),
    };
    RunSummary {
        experiment: plan.kind.name().to_string(),
        seed,
        units: plan.setup.units(),
        items: plan.setup.kinetics.items(),
        fault: obs.fault.as_ref().map(|e| e.to_string()),
        entrainment_length: entrainment,
        focus: plan.focus,
        persistence: obs.persistence,
        profile,
        profile_non_increasing: monotone,
        rows,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e9).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or(String::new(), num)
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn units_csv(rows: &[UnitRow]) -> String {
    let mut s = String::from("unit,gamma,regime,amplitude,min_concentration,hierarchy,within_group,between_group,path\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.unit,
            num(r.gamma),
            r.regime.name(),
            num(r.amplitude),
            num(r.min_concentration),
            r.hierarchy.as_ref().map(json_name).unwrap_or_default(),
            opt_num(r.within_group),
            opt_num(r.between_group),
            r.path.as_ref().map(json_name).unwrap_or_default(),
        );
    }
    s
}

/// Files written so far, relative to the output root.
struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(root: &FsPath) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: impl Into<PathBuf>, bytes: &[u8]) -> Result<()> {
        let rel = rel.into();
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.files.push(rel);
        Ok(())
    }

    fn manifest(mut self, config_text: &str, experiment: &str, seed: u64, status: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Entry {
            path: String,
            bytes: u64,
            sha256: String,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            experiment: &'a str,
            seed: u64,
            status: &'a str,
            config_sha256: String,
            files: Vec<Entry>,
        }
        self.files.sort();
        let mut files = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let bytes = fs::read(self.root.join(rel))?;
            files.push(Entry {
                path: rel.to_string_lossy().replace('\\', "/"),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        let m = Manifest {
            experiment,
            seed,
            status,
            config_sha256: sha256_hex(config_text.as_bytes()),
            files,
        };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Outcome of a command-line invocation.
#[derive(Debug)]
pub struct RunReport {
    /// Integration fault of a single run. Sweeps and scans record failed
    /// points in their tables instead.
    pub fault: Option<Error>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.fault.as_ref().map_or(0, Error::exit_code)
    }
}

/// Effective configuration text: the file's table with the seed override applied.
fn effective_table(text: &str, seed_override: Option<u64>) -> Result<toml::Table> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("config", e.to_string().trim().replace('\n', " ")))?;
    if let Some(seed) = seed_override {
        if table.contains_key("seed") {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
    }
    Ok(table)
}

fn table_text(table: &toml::Table) -> Result<String> {
    toml::to_string(table).map_err(|e| Error::Format(e.to_string()))
}

/// Parses `config_text`, runs the experiment and writes every artifact under
/// `opts.out`. Configuration and I/O problems are errors; an integration
/// fault still writes what was computed and is returned in the report.
pub fn run(config_text: &str, seed_override: Option<u64>, opts: &RunOptions) -> Result<RunReport> {
    let cfg = ExperimentConfig::parse(config_text, seed_override)?;
    let table = effective_table(config_text, seed_override)?;
    match cfg.experiment {
        ExperimentKind::Sweep => run_sweep(&cfg, &table, opts),
        ExperimentKind::BifurcationScan => run_scan(&cfg, &table, opts),
        _ => run_single(&cfg, &table_text(&table)?, None, opts),
    }
}

/// Runs one configured experiment into `opts.out` and returns its summary.
fn run_single_summary(
    cfg: &ExperimentConfig,
    text: &str,
    focus: Option<usize>,
    opts: &RunOptions,
) -> Result<(RunSummary, Option<Error>)> {
    let mut plan = Plan::new(cfg)?;
    if let Some(u) = focus {
        plan = plan.with_focus(u)?;
    }
    let obs = plan.execute()?;
    let summary = summarize(&plan, &obs, cfg.seed());
    let mut out = Outputs::new(&opts.out)?;
    out.write("config.toml", text.as_bytes())?;
    if let Some(snap) = &obs.snapshot {
        out.write("snapshot.hksnap", &snapshot::Snapshot::from_trajectory(snap).to_bytes()?)?;
        if opts.export_frames {
            let th = &plan.observe.thresholds;
            let palette = ppm::Palette::new(snap.items);
            for (j, r) in spatiotemporal_field(snap, th.dom).iter().enumerate() {
                let mut bytes = Vec::new();
                ppm::write_ppm(r, &palette, &mut bytes)?;
                out.write(format!("frames/frame_{j:05}.ppm"), &bytes)?;
            }
        }
    }
    out.write("units.csv", units_csv(&summary.rows).as_bytes())?;
    let traj = &obs.trajectory;
    if traj.frames() >= 2 && traj.recorded_units() <= 4 {
        for c in 0..traj.recorded_units() {
            let seq = symbol_sequence_relative(traj, c, 0..traj.frames(), &plan.observe.thresholds);
            let mut bytes = Vec::new();
            write_symbols_csv(&seq, &mut bytes)?;
            out.write(format!("symbols_unit{}.csv", traj.unit_ids[c]), &bytes)?;
        }
    }
    if let Some(bins) = &summary.profile {
        let mut bytes = Vec::new();
        write_profile_csv(bins, &mut bytes)?;
        out.write("profile.csv", &bytes)?;
    }
    out.write("summary.json", &to_json(&summary)?)?;
    let status = if let Some(e) = &obs.fault {
        #[derive(Serialize)]
        struct Fault {
            error: String,
            time: Option<f64>,
            unit: Option<usize>,
            item: Option<usize>,
            last_recorded_time: Option<f64>,
        }
        let (time, unit, item) = match e {
            Error::Integration { time, unit, item, .. } => (Some(*time), Some(*unit), Some(*item)),
            _ => (None, None, None),
        };
        let last = |t: &Trajectory| t.times.last().copied();
        let f = Fault {
            error: e.to_string(),
            time,
            unit,
            item,
            last_recorded_time: obs.snapshot.as_ref().and_then(last).or_else(|| last(traj)),
        };
        out.write("fault.json", &to_json(&f)?)?;
        "integration_fault"
    } else {
        "ok"
    };
    out.manifest(text, cfg.experiment.name(), cfg.seed(), status)?;
    Ok((summary, obs.fault))
}

fn run_single(cfg: &ExperimentConfig, text: &str, focus: Option<usize>, opts: &RunOptions) -> Result<RunReport> {
    let (_, fault) = run_single_summary(cfg, text, focus, opts)?;
    Ok(RunReport { fault })
}

/// Configuration of point `index` of a sweep or scan: the base experiment with
/// `parameter = value` and the given seed. Grid fields keep the master seed
/// so every point sees the same base random field.
fn point_table(table: &toml::Table, base: ExperimentKind, parameter: &str, value: f64, seed: u64) -> Result<toml::Table> {
    let mut t = config::with_parameter(table, base, parameter, value)?;
    let master = t.get("seed").cloned();
    if base.is_grid() {
        if let Some(toml::Value::Table(topo)) = t.get_mut("topology") {
            if !topo.contains_key("field_seed") {
                if let Some(m) = master {
                    topo.insert("field_seed".into(), m);
                }
            }
        }
    }
    t.insert("seed".into(), toml::Value::Integer(seed as i64));
    Ok(t)
}

fn run_sweep(cfg: &ExperimentConfig, table: &toml::Table, opts: &RunOptions) -> Result<RunReport> {
    let sw = cfg.sweep.as_ref().expect("validated");
    let master = cfg.seed();
    let results = experiments::sweep(sw.values.len(), master, opts.workers, |i, seed| {
        let t = point_table(table, sw.base, &sw.parameter, sw.values[i], seed)?;
        let point = ExperimentConfig::from_table(t.clone(), None)?;
        let run_opts = RunOptions {
            out: opts.out.join(format!("run_{i:04}")),
            ..opts.clone()
        };
        run_single_summary(&point, &table_text(&t)?, sw.unit, &run_opts)
    })?;
    let mut csv = String::from("index,value,seed,status,entrainment_length,regime,hierarchy,amplitude,persistence,error\n");
    let mut failed = false;
    for (i, r) in results.into_iter().enumerate() {
        let seed = experiments::run_seed(master, i as u64);
        let value = sw.values[i];
        match r {
            Ok((s, fault)) => {
                let row = s.focus_row();
                let status = if fault.is_some() { "integration_fault" } else { "ok" };
                let _ = writeln!(
                    csv,
                    "{i},{value},{seed},{status},{},{},{},{},{},{}",
                    opt(s.entrainment_length),
                    row.map_or("", |r| r.regime.name()),
                    row.and_then(|r| r.hierarchy.as_ref()).map(json_name).unwrap_or_default(),
                    opt_num(row.map(|r| r.amplitude)),
                    opt_num(s.persistence),
                    csv_text(s.fault.as_deref().unwrap_or("")),
                );
                failed |= fault.is_some();
            }
            Err(e) => {
                let status = match e {
                    Error::Config { .. } => "config_error",
                    _ => "error",
                };
                let _ = writeln!(csv, "{i},{value},{seed},{status},,,,,,{}", csv_text(&e.to_string()));
                failed = true;
            }
        }
    }
    let mut out = Outputs::new(&opts.out)?;
    let text = table_text(table)?;
    out.write("config.toml", text.as_bytes())?;
    out.write("sweep.csv", csv.as_bytes())?;
    let status = if failed { "partial" } else { "ok" };
    out.manifest(&text, cfg.experiment.name(), master, status)?;
    // Failed points are rows of the table; the sweep itself succeeded.
    Ok(RunReport { fault: None })
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Regime of the scan's unit at `value`, without writing files.
fn scan_point(table: &toml::Table, cfg: &ExperimentConfig, value: f64) -> Result<RegimeReport> {
    let sc = cfg.scan.as_ref().expect("validated");
    let t = point_table(table, sc.base, &sc.parameter, value, cfg.seed())?;
    let point = ExperimentConfig::from_table(t, None)?;
    let mut plan = Plan::new(&point)?;
    if let Some(u) = sc.unit {
        plan = plan.with_focus(u)?;
    }
    plan.observe.snapshot_every = None;
    plan.observe.probes = vec![plan.focus];
    let obs = plan.execute()?;
    if let Some(e) = obs.fault {
        return Err(e);
    }
    let traj = &obs.trajectory;
    Ok(classify_regime(traj, 0, 0..traj.frames(), &plan.observe.thresholds))
}

fn run_scan(cfg: &ExperimentConfig, table: &toml::Table, opts: &RunOptions) -> Result<RunReport> {
    let sc = cfg.scan.as_ref().expect("validated");
    let results = experiments::sweep(sc.values.len(), cfg.seed(), opts.workers, |i, _| {
        scan_point(table, cfg, sc.values[i])
    })?;
    let mut csv = String::from("value,regime,amplitude,min_concentration,maxima_spread,min_trend,amplitude_ratio,error\n");
    let mut labels = Vec::with_capacity(results.len());
    for (&v, r) in sc.values.iter().zip(&results) {
        match r {
            Ok(rep) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},",
                    num(v),
                    rep.label.name(),
                    num(rep.amplitude),
                    num(rep.min_concentration),
                    num(rep.maxima_spread),
                    num(rep.min_trend),
                    num(rep.amplitude_ratio)
                );
                labels.push(Some(rep.label));
            }
            Err(e) => {
                let _ = writeln!(csv, "{v},,,,,,,{}", csv_text(&e.to_string()));
                labels.push(None);
            }
        }
    }
    let mut boundaries = String::from("lower,upper,lo,hi,boundary\n");
    for (i, w) in labels.windows(2).enumerate() {
        let (Some(a), Some(b)) = (w[0], w[1]) else { continue };
        if a == b {
            continue;
        }
        let (lo, hi) = (sc.values[i], sc.values[i + 1]);
        let found = experiments::bisect_boundary(
            |x| Ok(scan_point(table, cfg, x)?.label == a),
            lo,
            hi,
            sc.tol,
        );
        let boundary = match found {
            Ok(Some(x)) => x.to_string(),
            Ok(None) | Err(_) => String::new(),
        };
        let _ = writeln!(boundaries, "{},{},{lo},{hi},{boundary}", a.name(), b.name());
    }
    let mut out = Outputs::new(&opts.out)?;
    let text = table_text(table)?;
    out.write("config.toml", text.as_bytes())?;
    out.write("scan.csv", csv.as_bytes())?;
    out.write("boundaries.csv", boundaries.as_bytes())?;
    out.manifest(&text, cfg.experiment.name(), cfg.seed(), "ok")?;
    Ok(RunReport { fault: None })
}
