//! Time stepping of the coupled system: classical RK4 for noiseless runs and
//! Euler-Maruyama with half-normal additive noise `sigma_k |eta| sqrt(dt)`.
//!
//! Step `m` starts at `t = m * dt`. Frames are recorded whenever
//! `m % record_stride == 0`, including `m = 0` and the final step count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Kinetics, RhsContext, SystemState};
use crate::topology::{CouplingMatrix, ParameterField, TopologyTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: u64,
    pub scheme: Scheme,
    pub clamp_floor: f64,
    pub seed: u64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, record_stride: u64, scheme: Scheme, seed: u64) -> Result<Self> {
        let cfg = IntegratorConfig {
            dt,
            t_end,
            record_stride,
            scheme,
            clamp_floor: 0.0,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Step size that passes the convergence and conservation probes with
    /// margin for the given item count.
    pub fn default_dt(items: usize) -> f64 {
        if items > 3 {
            0.005
        } else {
            0.01
        }
    }

    pub fn with_clamp_floor(mut self, floor: f64) -> Result<Self> {
        self.clamp_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("integrator.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::config("integrator.t_end", format!("must be > 0, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::config("integrator.record_stride", "must be >= 1"));
        }
        if !(self.clamp_floor.is_finite() && self.clamp_floor >= 0.0) {
            return Err(Error::config("integrator.clamp_floor", format!("must be >= 0, got {}", self.clamp_floor)));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    /// Time spacing between recorded frames.
    pub fn frame_interval(&self) -> f64 {
        self.record_stride as f64 * self.dt
    }
}

/// Instantaneous change of the decay rate of a set of units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchEvent {
    pub time: f64,
    pub units: Vec<usize>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuenchSchedule {
    events: Vec<QuenchEvent>,
}

impl QuenchSchedule {
    pub fn new(events: Vec<QuenchEvent>) -> Result<Self> {
        for (i, ev) in events.iter().enumerate() {
            if !(ev.time.is_finite() && ev.time > 0.0) {
                return Err(Error::config(format!("quench[{i}].time"), "must be > 0"));
            }
            if !(ev.gamma.is_finite() && ev.gamma > 0.0) {
                return Err(Error::config(format!("quench[{i}].gamma"), "must be > 0"));
            }
        }
        if events.windows(2).any(|w| w[0].time > w[1].time) {
            return Err(Error::config("quench", "events must be sorted by time"));
        }
        Ok(QuenchSchedule { events })
    }

    pub fn events(&self) -> &[QuenchEvent] {
        &self.events
    }

    fn check_against(&self, t_end: f64, units: usize) -> Result<()> {
        for (i, ev) in self.events.iter().enumerate() {
            if ev.time >= t_end {
                return Err(Error::config(format!("quench[{i}].time"), format!("must lie in (0, {t_end})")));
            }
            if let Some(&u) = ev.units.iter().find(|&&u| u >= units) {
                return Err(Error::config(format!("quench[{i}].units"), format!("unit {u} out of range")));
            }
        }
        Ok(())
    }
}

/// I.i.d. Uniform[0, 1) concentrations.
pub fn initial_condition_uniform(units: usize, items: usize, seed: u64) -> SystemState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let values = (0..units * items).map(|_| rng.random::<f64>()).collect();
    SystemState::from_values(units, items, values).expect("length matches by construction")
}

/// Scratch buffers for one RK4 step on a system of fixed size.
#[derive(Debug, Clone)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(len: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }
}

/// One classical RK4 step of `ds/dt = f(s)` in place.
pub fn rk4_step<F>(f: &F, s: &mut [f64], dt: f64, w: &mut Rk4Scratch)
where
    F: Fn(&[f64], &mut [f64]) + ?Sized,
{
    let half = 0.5 * dt;
    f(s, &mut w.k1);
    for ((t, &x), &k) in w.tmp.iter_mut().zip(s.iter()).zip(&w.k1) {
        *t = x + half * k;
    }
    f(&w.tmp, &mut w.k2);
    for ((t, &x), &k) in w.tmp.iter_mut().zip(s.iter()).zip(&w.k2) {
        *t = x + half * k;
    }
    f(&w.tmp, &mut w.k3);
    for ((t, &x), &k) in w.tmp.iter_mut().zip(s.iter()).zip(&w.k3) {
        *t = x + dt * k;
    }
    f(&w.tmp, &mut w.k4);
    let sixth = dt / 6.0;
    for (i, x) in s.iter_mut().enumerate() {
        *x += sixth * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
}

/// Mutable stepping engine. Holds the drift context, per-unit noise levels,
/// the noise generator and scratch space.
#[derive(Debug, Clone)]
pub struct Integrator {
    ctx: RhsContext,
    sigmas: Vec<f64>,
    config: IntegratorConfig,
    rng: ChaCha8Rng,
    scratch: Rk4Scratch,
}

impl Integrator {
    pub fn new(ctx: RhsContext, sigmas: Vec<f64>, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        if sigmas.len() != ctx.units() {
            return Err(Error::config("params.sigma", format!("{} sigmas for {} units", sigmas.len(), ctx.units())));
        }
        let len = ctx.units() * ctx.items();
        Ok(Integrator {
            ctx,
            sigmas,
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            scratch: Rk4Scratch::new(len),
        })
    }

    pub fn context(&self) -> &RhsContext {
        &self.ctx
    }

    pub fn set_gamma(&mut self, unit: usize, gamma: f64) {
        self.ctx.gammas[unit] = gamma;
    }

    /// RK4 step from time `t`, then clamp.
    pub fn step_deterministic(&mut self, s: &mut [f64], t: f64) -> Result<()> {
        let ctx = &self.ctx;
        rk4_step(&|x: &[f64], out: &mut [f64]| ctx.eval(x, out), s, self.config.dt, &mut self.scratch);
        self.finish_step(s, t)
    }

    /// Euler-Maruyama step from time `t`: drift, half-normal kicks on units
    /// with `sigma > 0` (drawn unit-major, item-minor), then clamp.
    pub fn step_stochastic(&mut self, s: &mut [f64], t: f64) -> Result<()> {
        let dt = self.config.dt;
        let n = self.ctx.items();
        self.ctx.eval(s, &mut self.scratch.k1);
        for (x, &k) in s.iter_mut().zip(&self.scratch.k1) {
            *x += dt * k;
        }
        let sqrt_dt = dt.sqrt();
        for (k, &sigma) in self.sigmas.iter().enumerate() {
            if sigma > 0.0 {
                for x in &mut s[k * n..(k + 1) * n] {
                    let eta: f64 = self.rng.sample(StandardNormal);
                    *x += sigma * eta.abs() * sqrt_dt;
                }
            }
        }
        self.finish_step(s, t)
    }

    pub fn step(&mut self, s: &mut [f64], t: f64) -> Result<()> {
        match self.config.scheme {
            Scheme::Rk4 => self.step_deterministic(s, t),
            Scheme::EulerMaruyama => self.step_stochastic(s, t),
        }
    }

    fn finish_step(&self, s: &mut [f64], t: f64) -> Result<()> {
        let n = self.ctx.items();
        let floor = self.config.clamp_floor;
        for (idx, x) in s.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::Integration {
                    time: t,
                    unit: idx / n,
                    item: idx % n,
                    value: *x,
                });
            }
            *x = x.max(floor);
        }
        Ok(())
    }
}

/// Time-subsampled record of a run, frame-major then unit-major then
/// item-major. `unit_ids[j]` is the global index of the `j`-th recorded unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub data: Vec<f64>,
    pub unit_ids: Vec<usize>,
    pub items: usize,
    pub meta: RunMeta,
}

/// Everything needed to re-run a trajectory bit-identically, apart from the
/// initial state, which is the first frame of a full recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: IntegratorConfig,
    pub topology: TopologyTag,
    pub kinetics: Kinetics,
    pub params: ParameterField,
    pub coupling: CouplingMatrix,
    pub quench: QuenchSchedule,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.times.len()
    }

    pub fn recorded_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn frame_len(&self) -> usize {
        self.unit_ids.len() * self.items
    }

    pub fn frame(&self, j: usize) -> &[f64] {
        let len = self.frame_len();
        &self.data[j * len..(j + 1) * len]
    }

    pub fn frame_state(&self, j: usize) -> SystemState {
        SystemState::from_values(self.recorded_units(), self.items, self.frame(j).to_vec())
            .expect("frame shape is consistent")
    }

    /// Column of a global unit index, if that unit was recorded.
    pub fn column(&self, unit: usize) -> Option<usize> {
        if self.unit_ids.get(unit) == Some(&unit) {
            return Some(unit);
        }
        self.unit_ids.iter().position(|&u| u == unit)
    }

    /// Concentrations of one unit at frame `j`.
    pub fn unit_at(&self, j: usize, column: usize) -> &[f64] {
        let start = j * self.frame_len() + column * self.items;
        &self.data[start..start + self.items]
    }

    pub fn series(&self, column: usize, item: usize) -> Vec<f64> {
        (0..self.frames()).map(|j| self.unit_at(j, column)[item]).collect()
    }

    /// Frame indices `[start, frames)` covering the last `fraction` of the
    /// recorded time span.
    pub fn tail_window(&self, fraction: f64) -> std::ops::Range<usize> {
        let n = self.frames();
        if n == 0 {
            return 0..0;
        }
        let (t0, t1) = (self.times[0], self.times[n - 1]);
        let cut = t1 - fraction.clamp(0.0, 1.0) * (t1 - t0);
        let start = self.times.partition_point(|&t| t < cut);
        start..n
    }

    pub fn final_state(&self) -> Option<SystemState> {
        (self.frames() > 0).then(|| self.frame_state(self.frames() - 1))
    }
}

/// Collects frames for a chosen subset of units from a chosen time on.
#[derive(Debug, Clone)]
pub struct Recorder {
    unit_ids: Option<Vec<usize>>,
    from_time: f64,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl Recorder {
    pub fn all() -> Self {
        Recorder {
            unit_ids: None,
            from_time: f64::NEG_INFINITY,
            times: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn units(ids: Vec<usize>) -> Self {
        Recorder {
            unit_ids: Some(ids),
            ..Recorder::all()
        }
    }

    pub fn from_time(mut self, t: f64) -> Self {
        self.from_time = t;
        self
    }

    pub fn push(&mut self, t: f64, s: &[f64], items: usize) {
        if t < self.from_time {
            return;
        }
        self.times.push(t);
        match &self.unit_ids {
            None => self.data.extend_from_slice(s),
            Some(ids) => {
                for &u in ids {
                    self.data.extend_from_slice(&s[u * items..(u + 1) * items]);
                }
            }
        }
    }

    /// Packs the collected frames into a trajectory of `setup`.
    pub fn finish(self, setup: &Setup) -> Trajectory {
        Trajectory {
            times: self.times,
            data: self.data,
            unit_ids: self.unit_ids.unwrap_or_else(|| (0..setup.units()).collect()),
            items: setup.kinetics.items(),
            meta: setup.meta(),
        }
    }
}

/// A fully specified run.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: TopologyTag,
    pub coupling: CouplingMatrix,
    pub params: ParameterField,
    pub kinetics: Kinetics,
    pub config: IntegratorConfig,
    pub quench: QuenchSchedule,
}

impl Setup {
    pub fn new(
        topology: TopologyTag,
        coupling: CouplingMatrix,
        params: ParameterField,
        kinetics: Kinetics,
        config: IntegratorConfig,
    ) -> Self {
        Setup {
            topology,
            coupling,
            params,
            kinetics,
            config,
            quench: QuenchSchedule::default(),
        }
    }

    pub fn with_quench(mut self, quench: QuenchSchedule) -> Self {
        self.quench = quench;
        self
    }

    pub fn units(&self) -> usize {
        self.params.units()
    }

    fn meta(&self) -> RunMeta {
        RunMeta {
            config: self.config,
            topology: self.topology,
            kinetics: self.kinetics,
            params: self.params.clone(),
            coupling: self.coupling.clone(),
            quench: self.quench.clone(),
        }
    }
}

/// Runs the system and calls `observer(t, state)` at every recording point.
/// Returns the final state.
pub fn simulate_observed<O>(setup: &Setup, initial: &SystemState, mut observer: O) -> Result<SystemState>
where
    O: FnMut(f64, &[f64]),
{
    let units = setup.units();
    let items = setup.kinetics.items();
    if initial.units() != units || initial.items() != items {
        return Err(Error::config(
            "initial",
            format!(
                "initial state is {}x{}, system is {units}x{items}",
                initial.units(),
                initial.items()
            ),
        ));
    }
    if setup.coupling.units() != units {
        return Err(Error::config(
            "topology",
            format!("coupling over {} units, parameter field over {units}", setup.coupling.units()),
        ));
    }
    setup.config.validate()?;
    setup.quench.check_against(setup.config.t_end, units)?;

    let ctx = RhsContext::new(&setup.kinetics, setup.params.gammas.clone(), setup.coupling.clone())?;
    let mut integrator = Integrator::new(ctx, setup.params.sigmas.clone(), setup.config)?;
    let mut state = initial.clone();
    let cfg = setup.config;
    let steps = cfg.steps();
    let mut next_event = 0;
    let events = setup.quench.events();

    observer(0.0, state.values());
    for m in 0..steps {
        let t = m as f64 * cfg.dt;
        while next_event < events.len() && t >= events[next_event].time {
            let ev = &events[next_event];
            for &u in &ev.units {
                integrator.set_gamma(u, ev.gamma);
            }
            next_event += 1;
        }
        integrator.step(state.values_mut(), t)?;
        if (m + 1) % cfg.record_stride == 0 {
            observer((m + 1) as f64 * cfg.dt, state.values());
        }
    }
    Ok(state)
}

/// Runs the system, recording through `recorder`.
pub fn simulate_with(setup: &Setup, initial: &SystemState, mut recorder: Recorder) -> Result<Trajectory> {
    let items = setup.kinetics.items();
    simulate_observed(setup, initial, |t, s| recorder.push(t, s, items))?;
    Ok(recorder.finish(setup))
}

/// Runs the system and records every unit.
pub fn simulate(setup: &Setup, initial: &SystemState) -> Result<Trajectory> {
    simulate_with(setup, initial, Recorder::all())
}
