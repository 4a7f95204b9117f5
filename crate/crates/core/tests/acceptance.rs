//! Acceptance criteria 1-15. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line. An argument such as `c12`
//! runs only that criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use hetnet::analysis::{
    classify_regime, detect_path, entrainment_length, hierarchy_level, profile_non_increasing, radial_profile,
    symbol_sequence_relative, Hierarchy, Path, Regime, Thresholds,
};
use hetnet::equilibria::{
    bisect, critical_couplings, delta_c1, enumerate_reachable_labels, forced_equilibria, gamma_crit_three,
    proliferation_count, ForcedParams,
};
use hetnet::experiments::{self, Drive, GridSpec, ObserveOptions};
use hetnet::integrate::{
    initial_condition_uniform, rk4_step, simulate, simulate_with, IntegratorConfig, Recorder, Rk4Scratch, Scheme,
    Setup, Trajectory,
};
use hetnet::model::{Kinetics, RhsContext, SystemState};
use hetnet::topology::{chain_bidirectional, Boundary, GammaInterval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    /// Failed only on a documented, unattainable part of the criterion; every
    /// other check held.
    known_gap: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        known_gap: false,
        detail: detail.into(),
    }
}

fn scheme(sigma: f64) -> Scheme {
    if sigma > 0.0 {
        Scheme::EulerMaruyama
    } else {
        Scheme::Rk4
    }
}

/// Integrator with a frame every `frame` time units.
fn config(dt: f64, t_end: f64, frame: f64, sigma: f64, seed: u64) -> IntegratorConfig {
    let stride = ((frame / dt).round() as u64).max(1);
    IntegratorConfig::new(dt, t_end, stride, scheme(sigma), seed).unwrap()
}

/// Runs `setup` from the uniform initial condition of `seed`, recording
/// `units` (all when `None`) over the last `tail` of the run.
fn run_tail(setup: &Setup, seed: u64, units: Option<Vec<usize>>, tail: f64) -> Trajectory {
    let init = initial_condition_uniform(setup.units(), setup.kinetics.items(), seed);
    let rec = match units {
        Some(u) => Recorder::units(u),
        None => Recorder::all(),
    };
    simulate_with(setup, &init, rec.from_time(setup.config.t_end * (1.0 - tail))).unwrap()
}

fn regime_of(traj: &Trajectory, column: usize, th: &Thresholds) -> Regime {
    classify_regime(traj, column, 0..traj.frames(), th).label
}

// 1. Hopf boundary of the 3-item unit.
fn c1() -> Outcome {
    let k = Kinetics::canonical_three();
    let single = |gamma: f64, sigma: f64, t_end: f64| {
        experiments::single_unit(k, gamma, sigma, config(0.01, t_end, 0.1, sigma, 1)).unwrap()
    };
    let fin = simulate(&single(1.2, 0.0, 500.0), &initial_condition_uniform(1, 3, 1))
        .unwrap()
        .final_state()
        .unwrap();
    let err_to = |xi: f64| fin.values().iter().map(|x| (x - xi).abs()).fold(0.0, f64::max);
    // The stated target; the coexistence point rho / (c + e + gamma) is 1/3.4 at gamma = 1.2.
    let err = err_to(1.0 / 3.3);
    let err_fixed_point = err_to(1.0 / (2.2 + 1.2));

    let hc = regime_of(&run_tail(&single(1.0, 1e-8, 500.0), 1, None, 0.5), 0, &Thresholds::for_driven(1.0, 1.0));

    let oscillates = |g: f64| -> hetnet::Result<bool> {
        let traj = run_tail(&single(g, 0.0, 500.0), 1, None, 0.5);
        Ok(regime_of(&traj, 0, &Thresholds::for_driven(1.0, g)) != Regime::Ce)
    };
    let boundary = experiments::bisect_boundary(oscillates, 1.0, 1.2, 0.005).unwrap();
    let analytic = gamma_crit_three(2.0, 0.2);
    let rest = hc == Regime::Hc && boundary.is_some_and(|b| (b - 1.1).abs() <= 0.01) && (analytic - 1.1).abs() < 1e-12;
    Outcome {
        pass: err < 1e-6 && rest,
        known_gap: err >= 1e-6 && err_fixed_point < 1e-6 && rest,
        detail: format!(
            "max|s-1/3.3| at t=500 = {err:.2e} (max|s-1/3.4| = {err_fixed_point:.2e}); gamma=1.0 -> {}; boundary {boundary:?}",
            hc.name()
        ),
    }
}

// 2. Sum and product conservation at gamma_crit over one period.
fn c2() -> Outcome {
    let k = Kinetics::canonical_three();
    let setup = experiments::single_unit(k, 1.1, 0.0, config(1e-3, 60.0, 1e-3, 0.0, 0)).unwrap();
    // On the plane sum = rho / gamma, which attracts and carries the product invariant.
    let scale = 1.0 / (1.1 * 0.9);
    let init = SystemState::from_values(1, 3, vec![0.4 * scale, 0.3 * scale, 0.2 * scale]).unwrap();
    let traj = simulate(&setup, &init).unwrap();
    let s1 = traj.series(0, 0);
    let peaks: Vec<usize> = (1..s1.len() - 1).filter(|&j| s1[j] > s1[j - 1] && s1[j] >= s1[j + 1]).collect();
    if peaks.len() < 2 {
        return outcome(false, "no full period recorded");
    }
    let (a, b) = (peaks[0], peaks[1]);
    let sum = |j: usize| traj.unit_at(j, 0).iter().sum::<f64>();
    let prod = |j: usize| traj.unit_at(j, 0).iter().product::<f64>();
    let (s0, p0) = (sum(a), prod(a));
    let ds = (a..=b).map(|j| (sum(j) / s0 - 1.0).abs()).fold(0.0, f64::max);
    let dp = (a..=b).map(|j| (prod(j) / p0 - 1.0).abs()).fold(0.0, f64::max);
    outcome(
        ds < 1e-3 && dp < 1e-3,
        format!("period {:.3}; drift sum {ds:.2e}, product {dp:.2e}", traj.times[b] - traj.times[a]),
    )
}

/// Residual of the driven unit of a pacemaker-driven pair, the pacemaker
/// held on its first saddle, from the full network right-hand side.
fn network_residual(p: &ForcedParams, point: [f64; 3]) -> f64 {
    let k = Kinetics::three(p.rho, p.c, p.e).unwrap();
    let ctx = RhsContext::new(&k, vec![p.gamma_p, p.gamma_d], chain_bidirectional(2, p.delta, 0.0).unwrap()).unwrap();
    let s = [p.rho / p.gamma_p, 0.0, 0.0, point[0], point[1], point[2]];
    let mut out = [0.0; 6];
    ctx.eval(&s, &mut out);
    let pace = out[..3].iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(pace < 1e-12, "pacemaker saddle is not fixed");
    let f = out[3..].iter().map(|v| v * v).sum::<f64>().sqrt();
    f / (1.0 + point.iter().map(|v| v * v).sum::<f64>().sqrt())
}

// 3. Residuals of the forced equilibria over random parameters.
fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = [0usize; 3];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = ForcedParams::canonical(
            rng.random_range(0.5..=1.05),
            rng.random_range(1.11..=2.5),
            rng.random_range(0.0..=1.0),
        )
        .unwrap();
        let eq = forced_equilibria(&p);
        for (i, e) in [eq.one_s, eq.two_s, eq.three_s].into_iter().enumerate() {
            if let Some(e) = e {
                counts[i] += 1;
                worst = worst.max(network_residual(&p, e.point));
            }
        }
    }
    // 1S exists for every parameter set, so a formula error cannot hide as "absent".
    let pass = worst < 1e-10 && counts[0] == 1000 && counts[1] > 0 && counts[2] > 0;
    outcome(pass, format!("existing 1S/2S/3S = {counts:?}; worst residual {worst:.2e}"))
}

// 4. delta_c1 against bisection on the expanding eigenvalue, and ordering.
fn c4() -> Outcome {
    let (rho, c, e) = (1.0, 2.0, 0.2);
    let mut worst = 0.0f64;
    let mut unordered = Vec::new();
    for i in 0..20 {
        for j in 0..20 {
            let gp = 0.5 + 0.55 * i as f64 / 19.0;
            let gd = 1.11 + 1.39 * j as f64 / 19.0;
            // 1S of the forced driven unit: rho x - gd x^2 + delta (rho/gp - x) = 0.
            let s_a = |d: f64| ((rho - d) + ((rho - d).powi(2) + 4.0 * gd * d * rho / gp).sqrt()) / (2.0 * gd);
            // Growth rate of the item invaded next at 1S.
            let expanding = |d: f64| rho - e * s_a(d) - d;
            let root = bisect(expanding, 0.0, rho, 1e-13);
            let closed = delta_c1(gp, gd, c, e, rho).unwrap();
            worst = worst.max((root - closed).abs());
            let k = critical_couplings(gp, gd, c, e, rho).unwrap();
            if !k.ordered() {
                unordered.push((gp, gd));
            }
        }
    }
    outcome(
        worst < 1e-8 && unordered.is_empty(),
        format!("max |delta_c1 - bisection| = {worst:.1e}; unordered points {}", unordered.len()),
    )
}

fn pair_setup(kinetics: Kinetics, drive: Drive, delta: f64, delta_b: f64, dt: f64, seed: u64) -> Setup {
    experiments::chain(kinetics, 2, drive, delta, delta_b, config(dt, 3000.0, 0.1, drive.sigma, seed)).unwrap()
}

// 5. Entrainment ladder of the driven pair.
fn c5() -> Outcome {
    let drive = Drive::new(0.6, 1.11, 1e-12);
    let th = Thresholds::for_driven(1.0, 1.11);
    let run = |delta: f64| {
        let traj = run_tail(&pair_setup(Kinetics::canonical_three(), drive, delta, 0.0, 0.01, 1), 1, None, 0.5);
        let len = entrainment_length(&traj, 0..traj.frames(), &th, 2);
        (len, classify_regime(&traj, 1, 0..traj.frames(), &th))
    };
    let (weak, driven) = run(0.05);
    let (strong, _) = run(0.8);
    // Weakly driven, the unit keeps all three items well away from the axes
    // and moves between the forced 3-item foci as the pacemaker switches.
    let on_foci = driven.min_concentration > 0.01 && driven.amplitude > th.amp;
    let pass = weak == 0 && on_foci && strong == 1;
    outcome(
        pass,
        format!(
            "delta=0.05: length {weak}, driven min {:.3}, amplitude {:.3}; delta=0.8: length {strong}",
            driven.min_concentration, driven.amplitude
        ),
    )
}

// 6. Back-coupling bifurcation of the driven unit.
fn c6() -> Outcome {
    let drive = Drive::new(0.9, 1.7, 0.0);
    let th = Thresholds::for_driven(1.0, 1.7);
    let regime = |db: f64| {
        let traj = run_tail(&pair_setup(Kinetics::canonical_three(), drive, 0.5, db, 0.01, 1), 1, Some(vec![1]), 0.5);
        regime_of(&traj, 0, &th)
    };
    let labels = [regime(0.05), regime(0.25), regime(0.4)];
    let hc_lc = experiments::bisect_boundary(|x| Ok(regime(x) == Regime::Hc), 0.05, 0.25, 0.005).unwrap();
    let lc_ce = experiments::bisect_boundary(|x| Ok(regime(x) != Regime::Ce), 0.25, 0.4, 0.005).unwrap();
    let pass = labels == [Regime::Hc, Regime::Lc, Regime::Ce]
        && hc_lc.is_some_and(|b| (b - 0.146).abs() <= 0.02)
        && lc_ce.is_some_and(|b| (b - 0.31).abs() <= 0.02);
    outcome(
        pass,
        format!(
            "delta_b 0.05/0.25/0.4 -> {}/{}/{}; HC->LC {hc_lc:?}; LC->CE {lc_ce:?}",
            labels[0].name(),
            labels[1].name(),
            labels[2].name()
        ),
    )
}

// 7. Entrainment length grows with coupling along a chain.
fn c7() -> Outcome {
    let drive = Drive::new(1.05, 1.11, 1e-12);
    let th = Thresholds::for_driven(1.0, 1.11);
    let lengths: Vec<usize> = [0.5, 0.6, 0.75]
        .iter()
        .map(|&delta| {
            let cfg = config(0.01, 3000.0, 0.1, drive.sigma, 1);
            let setup = experiments::chain(Kinetics::canonical_three(), 64, drive, delta, 0.0, cfg).unwrap();
            let traj = run_tail(&setup, 1, None, 0.5);
            entrainment_length(&traj, 0..traj.frames(), &th, 2)
        })
        .collect();
    let pass = lengths[0] <= lengths[1] && lengths[1] <= lengths[2] && lengths[2] >= 32;
    outcome(pass, format!("lengths at delta 0.5/0.6/0.75 = {lengths:?}"))
}

// 8. Ring regimes against the closing coupling.
fn c8() -> Outcome {
    let drive = Drive::new(1.05, 1.11, 1e-12);
    let th = Thresholds::for_driven(1.0, 1.11);
    let run = |delta_p: f64| {
        let cfg = config(0.01, 3000.0, 0.1, drive.sigma, 1);
        let setup = experiments::ring(Kinetics::canonical_three(), 50, drive, 0.75, delta_p, cfg).unwrap();
        let traj = run_tail(&setup, 1, None, 0.5);
        let labels: Vec<Regime> = (0..50).map(|u| regime_of(&traj, u, &th)).collect();
        let len = entrainment_length(&traj, 0..traj.frames(), &th, 2);
        (labels, len)
    };
    let all = |labels: &[Regime], r: Regime| labels.iter().filter(|&&l| l == r).count();
    let (hc, hc_len) = run(0.001);
    let (lc, _) = run(0.07);
    let (ce, _) = run(0.15);
    let counts = (all(&hc, Regime::Hc), all(&lc, Regime::Lc), all(&ce, Regime::Ce));
    let pass = counts == (50, 50, 50) && hc_len == 49;
    outcome(
        pass,
        format!(
            "HC units at 0.001: {} (entrained {hc_len}); LC at 0.07: {}; CE at 0.15: {}",
            counts.0, counts.1, counts.2
        ),
    )
}

// 9. Noise selects the pacemaker's hierarchy level.
fn c9() -> Outcome {
    let th = Thresholds::for_driven(1.0, 1.47);
    let levels: Vec<Hierarchy> = [1e-12, 1e-4, 1e-3]
        .iter()
        .map(|&sigma| {
            let drive = Drive::new(1.05, 1.47, sigma);
            let cfg = config(0.001, 3000.0, 0.1, sigma, 1);
            let setup = experiments::chain(Kinetics::canonical_nine(0.3), 64, drive, 0.5, 0.0, cfg).unwrap();
            let traj = run_tail(&setup, 1, Some(vec![0]), 0.5);
            hierarchy_level(&traj, 0, 0..traj.frames(), &th).level
        })
        .collect();
    let pass = levels == [Hierarchy::TwoLevel, Hierarchy::OneLevel, Hierarchy::Coexistence];
    outcome(pass, format!("sigma 1e-12/1e-4/1e-3 -> {levels:?}"))
}

// 10. Only the two heteroclinic paths occur, the first one more often.
fn c10() -> Outcome {
    let drive = Drive::new(1.05, 1.47, 1e-12);
    let th = Thresholds::for_driven(1.0, 1.47);
    let mut counts = [0usize; 4];
    for seed in 1..=60 {
        let setup = pair_setup(Kinetics::canonical_nine(0.3), drive, 0.1, 0.001, 0.005, seed);
        let traj = run_tail(&setup, seed, Some(vec![0]), 0.9);
        let path = detect_path(&symbol_sequence_relative(&traj, 0, 0..traj.frames(), &th));
        counts[match path {
            Path::Path1 => 0,
            Path::Path2 => 1,
            Path::Other => 2,
            Path::Unknown => 3,
        }] += 1;
    }
    let [p1, p2, other, unknown] = counts;
    let pass = other == 0 && p1 > p2 && p2 >= 1 && p1 + p2 >= 50;
    outcome(pass, format!("60 runs: Path1 {p1}, Path2 {p2}, other {other}, unclassified {unknown}"))
}

// 11. Branch counts of the equilibrium labels.
fn c11() -> Outcome {
    let levels = enumerate_reachable_labels(8);
    let mut bad = Vec::new();
    for n in 1..=8usize {
        let per_saddle = levels[n - 1].len();
        // A pacemaker cycle visits three saddles, each seeding its own tree.
        let per_cycle = 3 * per_saddle;
        let counted = proliferation_count(n as u64);
        if per_saddle != n * (n + 1) / 2
            || per_cycle != 3 * n * (n + 1) / 2
            || counted != (per_saddle as u64, per_cycle as u64)
        {
            bad.push(n);
        }
    }
    let totals: Vec<usize> = levels.iter().map(Vec::len).collect();
    outcome(bad.is_empty(), format!("depth totals {totals:?}; mismatches at {bad:?}"))
}

fn grid(delta: f64) -> GridSpec {
    GridSpec {
        side: 64,
        delta,
        boundary: Boundary::Periodic,
        gamma_pacemaker: 0.8,
        interval: GammaInterval::canonical(),
        field_seed: 1,
        sigma: 1e-12,
    }
}

fn grid_config(t_end: f64) -> IntegratorConfig {
    config(0.005, t_end, 0.2, 1e-12, 1)
}

fn grid_thresholds() -> Thresholds {
    Thresholds::for_driven(1.0, 1.55)
}

// 12. Hierarchy of a representative defect falls with the defect fraction.
fn c12() -> Outcome {
    let g = grid(0.5);
    let rep = experiments::representative_defect(&g, 0.1).unwrap();
    let th = grid_thresholds();
    let levels: Vec<Hierarchy> = [0.1, 0.5, 0.95]
        .iter()
        .map(|&p_d| {
            let setup = experiments::grid_random(Kinetics::canonical_nine(0.4), &g, p_d, grid_config(1500.0)).unwrap();
            let init = initial_condition_uniform(setup.units(), 9, 1);
            let obs = experiments::observe(&setup, &init, &ObserveOptions::probes(vec![rep], 750.0, th)).unwrap();
            let traj = &obs.trajectory;
            hierarchy_level(traj, 0, 0..traj.frames(), &th).level
        })
        .collect();
    let ranks: Vec<Option<u8>> = levels.iter().map(Hierarchy::rank).collect();
    let monotone = ranks.iter().all(Option::is_some) && ranks.windows(2).all(|w| w[0] >= w[1]);
    outcome(monotone, format!("unit {rep}: p_d 0.1/0.5/0.95 -> {levels:?}"))
}

fn disc_setup(t_end: f64) -> Setup {
    experiments::grid_disc(Kinetics::canonical_nine(0.4), &grid(0.2), 4.0, grid_config(t_end)).unwrap()
}

// 13. Target-wave amplitude profile around a pacemaker disc.
fn c13() -> Outcome {
    let setup = disc_setup(1500.0);
    let ring = experiments::disc_neighbours(64, &setup.params.pacemakers);
    let th = grid_thresholds();
    let init = initial_condition_uniform(setup.units(), 9, 1);
    let obs = experiments::observe(&setup, &init, &ObserveOptions::probes(ring.clone(), 750.0, th)).unwrap();
    let bins = radial_profile(&obs.amplitudes, 64, (31.5, 31.5), 12);
    let monotone = profile_non_increasing(&bins, 4.0, th.mono);
    let (inner, outer) = (bins[0].mean_amplitude, bins[bins.len() - 1].mean_amplitude);
    let traj = &obs.trajectory;
    let two_level = (0..ring.len())
        .filter(|&c| hierarchy_level(traj, c, 0..traj.frames(), &th).level == Hierarchy::TwoLevel)
        .count();
    let pass = monotone && inner >= 5.0 * outer && two_level == ring.len();
    outcome(
        pass,
        format!(
            "profile non-increasing {monotone}; inner {inner:.3e} vs outer {outer:.3e}; two-level {two_level}/{}",
            ring.len()
        ),
    )
}

// 14. Group switching outlives a quench of the pacemaker disc.
fn c14() -> Outcome {
    let t_q = 500.0;
    let setup = experiments::quench_pacemakers(disc_setup(1000.0), t_q, 1.55).unwrap();
    let th = grid_thresholds();
    let init = initial_condition_uniform(setup.units(), 9, 1);
    let opts = ObserveOptions {
        persistence: Some((t_q, 50.0)),
        ..ObserveOptions::probes(Vec::new(), 1000.0, th)
    };
    let persistence = experiments::observe(&setup, &init, &opts).unwrap().persistence.unwrap();
    outcome(
        persistence >= 0.3 * t_q,
        format!("switching persisted {persistence:.0} time units after t_q = {t_q}"),
    )
}

// 15. Convergence order, reproducibility and worker-count independence.
fn c15() -> Outcome {
    let f = |x: &[f64], out: &mut [f64]| out[0] = -x[0];
    let errors: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            let mut s = [1.0];
            let mut w = Rk4Scratch::new(1);
            for _ in 0..(1.0 / dt as f64).round() as usize {
                rk4_step(&f, &mut s, dt, &mut w);
            }
            (s[0] - (-1.0f64).exp()).abs()
        })
        .collect();
    let slopes: Vec<f64> = errors.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
    let slope_ok = slopes.iter().all(|s| (s - 4.0).abs() <= 0.2);

    let run = |seed: u64, sigma: f64| -> Vec<u64> {
        let drive = Drive::new(1.05, 1.47, sigma);
        let cfg = config(0.005, 50.0, 0.5, sigma, seed);
        let setup = experiments::chain(Kinetics::canonical_nine(0.3), 4, drive, 0.5, 0.0, cfg).unwrap();
        let traj = simulate(&setup, &initial_condition_uniform(4, 9, seed)).unwrap();
        traj.data.iter().map(|v| v.to_bits()).collect()
    };
    let rerun_ok = run(7, 1e-4) == run(7, 1e-4) && run(7, 1e-4) != run(8, 1e-4);

    let point = |_: usize, seed: u64| Ok(run(seed, 1e-4));
    let one: Vec<_> = experiments::sweep(6, 99, 1, point).unwrap().into_iter().map(Result::unwrap).collect();
    let three: Vec<_> = experiments::sweep(6, 99, 3, point).unwrap().into_iter().map(Result::unwrap).collect();
    let sweep_ok = one == three;
    outcome(
        slope_ok && rerun_ok && sweep_ok,
        format!("RK4 slopes {slopes:.3?}; reruns identical {rerun_ok}; sweep 1 vs 3 workers identical {sweep_ok}"),
    )
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

const CRITERIA: [Criterion; 15] = [
    (1, "Hopf boundary of the 3-item unit", 5.0, c1),
    (2, "conservation at criticality", 5.0, c2),
    (3, "forced-equilibrium residuals", 1.0, c3),
    (4, "critical-coupling cross-check", 10.0, c4),
    (5, "two-unit regime ladder", 30.0, c5),
    (6, "back-coupling bifurcation", 300.0, c6),
    (7, "entrainment monotonicity", 300.0, c7),
    (8, "ring regimes", 300.0, c8),
    (9, "noise as control", 600.0, c9),
    (10, "path detection", 900.0, c10),
    (11, "label combinatorics", 1.0, c11),
    (12, "2D defect sweep", 1800.0, c12),
    (13, "target-wave profile", 1800.0, c13),
    (14, "quench inertia", 1800.0, c14),
    (15, "engineering", 60.0, c15),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|(n, ..)| filters.is_empty() || filters.iter().any(|f| f == &format!("c{n}")))
        .collect();
    let selected_len = selected.len();
    let mut failed = Vec::new();
    let mut gaps = Vec::new();
    for &(n, name, budget, f) in selected {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        let (pass, known_gap, detail) = match result {
            Ok(o) => (o.pass && secs <= budget, o.known_gap && secs <= budget, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, false, format!("panicked: {msg}"))
            }
        };
        let verdict = match (pass, known_gap) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented gap)",
            (false, false) => "FAIL",
        };
        println!("criterion {n:2} {verdict} [{secs:.1}s / {budget:.0}s] {name}: {detail}");
        if known_gap && !pass {
            gaps.push(n);
        } else if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!(
            "acceptance: {} of {selected_len} selected criteria passed; documented gaps {gaps:?}",
            selected_len - gaps.len()
        );
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
