//! Recipes for the standard experiments: how each network is assembled, and
//! the observation loops the larger runs need.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{AmplitudeTracker, SwitchingPersistence, Thresholds};
use crate::error::{Error, Result};
use crate::integrate::{
    simulate_observed, IntegratorConfig, QuenchEvent, QuenchSchedule, Recorder, Setup, Trajectory,
};
use crate::model::{Kinetics, SystemState};
use crate::topology::{
    chain_bidirectional, disc_pacemaker_field, grid_coords, grid_diffusive, grid_index, random_defect_field,
    ring_directed, ring_distance_dependent, Boundary, CouplingMatrix, GammaInterval, ParameterField, TopologyTag,
};

/// Pacemaker at unit 0 with `gamma_p`, every other unit with `gamma_d`.
/// `sigma` applies to all units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Drive {
    pub gamma_p: f64,
    pub gamma_d: f64,
    pub sigma: f64,
}

impl Drive {
    pub fn new(gamma_p: f64, gamma_d: f64, sigma: f64) -> Self {
        Drive { gamma_p, gamma_d, sigma }
    }

    fn field(&self, units: usize) -> Result<ParameterField> {
        ParameterField::with_pacemaker(units, 0, self.gamma_p, self.gamma_d)?.with_sigma(self.sigma)
    }
}

pub fn single_unit(kinetics: Kinetics, gamma: f64, sigma: f64, config: IntegratorConfig) -> Result<Setup> {
    let params = ParameterField::uniform(1, gamma)?.with_sigma(sigma)?;
    Ok(Setup::new(TopologyTag::Single, CouplingMatrix::empty(1), params, kinetics, config))
}

/// Chain with forward coupling `delta` away from the pacemaker and backward
/// coupling `delta_b` toward it. Two units make the pacemaker-driven pair.
pub fn chain(
    kinetics: Kinetics,
    units: usize,
    drive: Drive,
    delta: f64,
    delta_b: f64,
    config: IntegratorConfig,
) -> Result<Setup> {
    let coupling = chain_bidirectional(units, delta, delta_b)?;
    Ok(Setup::new(TopologyTag::Chain, coupling, drive.field(units)?, kinetics, config))
}

/// Directed ring; the link closing the ring onto the pacemaker has `delta_p`.
pub fn ring(
    kinetics: Kinetics,
    units: usize,
    drive: Drive,
    delta: f64,
    delta_p: f64,
    config: IntegratorConfig,
) -> Result<Setup> {
    let coupling = ring_directed(units, delta, delta_p, 0)?;
    Ok(Setup::new(TopologyTag::Ring, coupling, drive.field(units)?, kinetics, config))
}

/// Ring whose pacemaker reaches every unit with strength falling off with
/// ring distance.
pub fn ring_distance(
    kinetics: Kinetics,
    units: usize,
    drive: Drive,
    delta: f64,
    delta_b: f64,
    config: IntegratorConfig,
) -> Result<Setup> {
    let coupling = ring_distance_dependent(units, delta, delta_b)?;
    Ok(Setup::new(TopologyTag::RingDistance, coupling, drive.field(units)?, kinetics, config))
}

/// Shared description of a diffusively coupled square grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub side: usize,
    pub delta: f64,
    pub boundary: Boundary,
    pub gamma_pacemaker: f64,
    pub interval: GammaInterval,
    /// Seed of the per-site random field, kept fixed across defect fractions.
    pub field_seed: u64,
    pub sigma: f64,
}

impl GridSpec {
    fn setup(&self, params: ParameterField, kinetics: Kinetics, config: IntegratorConfig) -> Result<Setup> {
        let coupling = grid_diffusive(self.side, self.delta, self.boundary)?;
        let params = params.with_sigma(self.sigma)?;
        Ok(Setup::new(TopologyTag::Grid { side: self.side }, coupling, params, kinetics, config))
    }
}

pub fn grid_random(kinetics: Kinetics, grid: &GridSpec, p_d: f64, config: IntegratorConfig) -> Result<Setup> {
    let params = random_defect_field(grid.side, p_d, grid.gamma_pacemaker, grid.interval, grid.field_seed)?;
    grid.setup(params, kinetics, config)
}

pub fn grid_disc(kinetics: Kinetics, grid: &GridSpec, radius: f64, config: IntegratorConfig) -> Result<Setup> {
    let params = disc_pacemaker_field(grid.side, radius, grid.gamma_pacemaker, grid.interval, grid.field_seed)?;
    grid.setup(params, kinetics, config)
}

/// Sets every pacemaker of `setup` to `gamma` at time `t_q`.
pub fn quench_pacemakers(setup: Setup, t_q: f64, gamma: f64) -> Result<Setup> {
    let units = setup.params.pacemakers.clone();
    let schedule = QuenchSchedule::new(vec![QuenchEvent { time: t_q, units, gamma }])?;
    Ok(setup.with_quench(schedule))
}

/// Non-pacemaker sites sharing an edge with a pacemaker site.
pub fn disc_neighbours(side: usize, pacemakers: &[usize]) -> Vec<usize> {
    let mut is_pm = vec![false; side * side];
    for &k in pacemakers {
        is_pm[k] = true;
    }
    (0..side * side)
        .filter(|&k| {
            let (x, y) = grid_coords(side, k);
            !is_pm[k]
                && [(x + 1, y), (x.wrapping_sub(1), y), (x, y + 1), (x, y.wrapping_sub(1))]
                    .into_iter()
                    .any(|(a, b)| a < side && b < side && is_pm[grid_index(side, a, b)])
        })
        .collect()
}

/// The defect of the `p_d` field nearest `(side/4, side/8)`. Because defects
/// only accumulate as `p_d` grows, it stays a defect with the same decay rate
/// in every field built from the same seed with a larger fraction.
pub fn representative_defect(grid: &GridSpec, p_d: f64) -> Result<usize> {
    let field = random_defect_field(grid.side, p_d, grid.gamma_pacemaker, grid.interval, grid.field_seed)?;
    let target = (grid.side as f64 / 4.0, grid.side as f64 / 8.0);
    let dist = |k: usize| {
        let (x, y) = grid_coords(grid.side, k);
        (x as f64 - target.0).powi(2) + (y as f64 - target.1).powi(2)
    };
    let mut best: Option<usize> = None;
    for k in (0..grid.side * grid.side).filter(|k| field.pacemakers.binary_search(k).is_err()) {
        if best.is_none_or(|b| dist(k) < dist(b)) {
            best = Some(k);
        }
    }
    best.ok_or_else(|| Error::config("topology.p_d", "field has no defect"))
}

/// What a large run keeps: full frames for a few probe units, per-unit
/// amplitudes over the late window, optionally a thinned record of every
/// unit, and how long group switching outlived a quench.
#[derive(Debug)]
pub struct Observation {
    pub trajectory: Trajectory,
    pub amplitudes: Vec<f64>,
    /// Every unit at every `snapshot_every`-th recording point from t = 0.
    pub snapshot: Option<Trajectory>,
    pub persistence: Option<f64>,
    /// `None` when the run stopped on an integration fault.
    pub final_state: Option<SystemState>,
    /// The fault that cut the run short; everything above covers the run up to it.
    pub fault: Option<Error>,
}

/// Options for [`observe`].
#[derive(Debug, Clone)]
pub struct ObserveOptions {
    pub probes: Vec<usize>,
    /// Probe frames and amplitudes are collected from this time on.
    pub from_time: f64,
    pub snapshot_every: Option<usize>,
    /// Start and window length of the persistence measurement.
    pub persistence: Option<(f64, f64)>,
    pub thresholds: Thresholds,
}

impl ObserveOptions {
    pub fn probes(probes: Vec<usize>, from_time: f64, thresholds: Thresholds) -> Self {
        ObserveOptions {
            probes,
            from_time,
            snapshot_every: None,
            persistence: None,
            thresholds,
        }
    }
}

/// Runs `setup`, feeding every observer in one pass. Configuration errors are
/// returned; an integration fault is reported in [`Observation::fault`].
pub fn observe(setup: &Setup, initial: &SystemState, opts: &ObserveOptions) -> Result<Observation> {
    let units = setup.units();
    let items = setup.kinetics.items();
    let mut recorder = Recorder::units(opts.probes.clone()).from_time(opts.from_time);
    let mut snapshot = opts.snapshot_every.map(|every| (Recorder::all(), every.max(1), 0usize));
    let mut amplitudes = AmplitudeTracker::new(units, items);
    let mut persistence = opts
        .persistence
        .map(|(start, window)| SwitchingPersistence::new(units, items, start, window, &opts.thresholds));
    let outcome = simulate_observed(setup, initial, |t, s| {
        recorder.push(t, s, items);
        if let Some((rec, every, count)) = snapshot.as_mut() {
            if *count % *every == 0 {
                rec.push(t, s, items);
            }
            *count += 1;
        }
        if t >= opts.from_time {
            amplitudes.observe(s);
        }
        if let Some(p) = persistence.as_mut() {
            p.observe(t, s);
        }
    });
    let (final_state, fault) = match outcome {
        Ok(s) => (Some(s), None),
        Err(e @ Error::Integration { .. }) => (None, Some(e)),
        Err(e) => return Err(e),
    };
    Ok(Observation {
        trajectory: recorder.finish(setup),
        amplitudes: amplitudes.unit_amplitudes(),
        snapshot: snapshot.map(|(rec, every, _)| {
            let mut traj = rec.finish(setup);
            traj.meta.config.record_stride *= every as u64;
            traj
        }),
        persistence: persistence.map(|p| p.persistence()),
        final_state,
        fault,
    })
}

/// Bisection for the parameter where `pred` stops holding; `pred(lo)` must
/// hold and `pred(hi)` must not, otherwise `None`.
pub fn bisect_boundary<F>(mut pred: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !pred(lo)? || pred(hi)? {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Seed of run `index` in a sweep: the first word of the ChaCha stream
/// `index` under `master`, top bit cleared so it stays a valid config integer.
pub fn run_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64() >> 1
}

/// Runs `f(index, seed)` for every grid point on `workers` threads. Results
/// come back in index order and depend only on `(master, index)`.
pub fn sweep<T, F>(points: usize, master: u64, workers: usize, f: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(|| {
        (0..points)
            .into_par_iter()
            .map(|i| f(i, run_seed(master, i as u64)))
            .collect()
    }))
}
