//! Observables computed from trajectories: dominant items, symbol sequences,
//! heteroclinic path identity, hierarchy level, dynamical regime, entrainment
//! length and spatial amplitude profiles.
//!
//! Item indices are 0-based internally. User-facing text and CSV output use
//! 1-based labels.

use std::collections::BTreeSet;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::integrate::Trajectory;
use crate::topology::grid_coords;

/// Detection thresholds. Fractions are relative to the window maximum of the
/// unit being analysed; the rest are absolute concentrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Emission level as a fraction of the window maximum.
    pub hi_fraction: f64,
    /// Release level as a fraction of the emission level.
    pub lo_fraction: f64,
    /// Minimum peak-to-peak amplitude of an oscillating unit.
    pub amp: f64,
    /// Max-minus-min below which a frame has no clear dominant item.
    pub dom: f64,
    /// Variance below which a unit is at rest.
    pub var: f64,
    /// Minimum concentration that counts as a deep saddle approach.
    pub hc: f64,
    /// Within-group spread below which a group moves as one block.
    pub flat: f64,
    /// Relative spread of successive maxima separating QP from LC.
    pub qp: f64,
    /// Bin-to-bin relative tolerance for monotone radial profiles.
    pub mono: f64,
    /// Trailing fraction of the trajectory analysed.
    pub window: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            hi_fraction: 0.5,
            lo_fraction: 0.1,
            amp: 0.05,
            dom: 1e-3,
            var: 1e-8,
            hc: 1e-6,
            flat: 0.02,
            qp: 0.05,
            mono: 0.10,
            window: 0.5,
        }
    }
}

impl Thresholds {
    /// Defaults with the amplitude threshold `0.05 rho / gamma_d`.
    pub fn for_driven(rho: f64, gamma_d: f64) -> Self {
        Thresholds {
            amp: 0.05 * rho / gamma_d,
            ..Thresholds::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dominance {
    pub item: usize,
    /// All items within `dom` of each other.
    pub degenerate: bool,
}

/// Argmax over items with ties going to the lowest index.
pub fn dominant_item(values: &[f64], theta_dom: f64) -> Dominance {
    let mut item = 0;
    let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > max {
            max = v;
            item = i;
        }
        min = min.min(v);
    }
    Dominance {
        item,
        degenerate: max - min < theta_dom,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Symbol {
    pub item: usize,
    pub entry: f64,
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolSequence {
    pub symbols: Vec<Symbol>,
    pub theta_hi: f64,
    pub theta_lo: f64,
}

impl SymbolSequence {
    pub fn items(&self) -> Vec<usize> {
        self.symbols.iter().map(|s| s.item).collect()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Distinct consecutive pairs `(from, to)`.
    pub fn transitions(&self) -> BTreeSet<(usize, usize)> {
        self.symbols.windows(2).map(|w| (w[0].item, w[1].item)).collect()
    }

    pub fn visited(&self) -> BTreeSet<usize> {
        self.symbols.iter().map(|s| s.item).collect()
    }
}

/// Symbolic dynamics with hysteresis over the frames in `window`.
///
/// An item is armed once it has been below `theta_lo`. The current symbol is
/// released once its own concentration falls below `theta_lo`. A new symbol
/// is emitted when the current one is released (or none exists yet) and an
/// armed item other than the current one is at or above `theta_hi`; among
/// several candidates the largest wins, ties to the lowest index.
pub fn symbol_sequence(
    traj: &Trajectory,
    column: usize,
    window: Range<usize>,
    theta_hi: f64,
    theta_lo: f64,
) -> SymbolSequence {
    let n = traj.items;
    let mut armed = vec![false; n];
    let mut current: Option<usize> = None;
    let mut released = true;
    let mut symbols: Vec<Symbol> = Vec::new();
    let end_time = window.clone().last().map(|j| traj.times[j]);

    for j in window {
        let s = traj.unit_at(j, column);
        for (a, &v) in armed.iter_mut().zip(s) {
            if v < theta_lo {
                *a = true;
            }
        }
        if let Some(c) = current {
            if s[c] < theta_lo {
                released = true;
            } else if released && s[c] >= theta_hi {
                released = false;
            }
        }
        if !released {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..n {
            if armed[i] && Some(i) != current && s[i] >= theta_hi && best.is_none_or(|b| s[i] > s[b]) {
                best = Some(i);
            }
        }
        if let Some(i) = best {
            let t = traj.times[j];
            if let Some(last) = symbols.last_mut() {
                last.dwell = t - last.entry;
            }
            symbols.push(Symbol {
                item: i,
                entry: t,
                dwell: 0.0,
            });
            armed[i] = false;
            current = Some(i);
            released = false;
        }
    }
    if let (Some(last), Some(t_end)) = (symbols.last_mut(), end_time) {
        last.dwell = t_end - last.entry;
        if last.dwell <= 0.0 {
            symbols.pop();
        }
    }
    SymbolSequence {
        symbols,
        theta_hi,
        theta_lo,
    }
}

/// Largest concentration of a unit over a window.
pub fn window_max(traj: &Trajectory, column: usize, window: Range<usize>) -> f64 {
    window
        .flat_map(|j| traj.unit_at(j, column).iter().copied())
        .fold(0.0, f64::max)
}

/// `symbol_sequence` with thresholds taken as fractions of the window maximum.
pub fn symbol_sequence_relative(traj: &Trajectory, column: usize, window: Range<usize>, th: &Thresholds) -> SymbolSequence {
    let hi = th.hi_fraction * window_max(traj, column, window.clone());
    symbol_sequence(traj, column, window, hi, th.lo_fraction * hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Path1,
    Path2,
    /// Complete cycles through all nine items that follow neither path.
    Other,
    /// No complete cycle, or a tie between the candidates.
    Unknown,
}

/// Path cycles of a 9-item unit, 0-based.
pub const PATH1: [usize; 9] = [0, 1, 2, 5, 3, 4, 7, 8, 6];
pub const PATH2: [usize; 9] = [0, 3, 6, 7, 1, 4, 5, 8, 2];

/// Directed item-to-item edges a path cycle traverses: each group's small
/// cycle plus the exits from one group to the next.
fn path_edges(path: &[usize; 9]) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for g in 0..3 {
        let group = &path[3 * g..3 * g + 3];
        for k in 0..3 {
            edges.insert((group[k], group[(k + 1) % 3]));
        }
        edges.insert((group[2], path[(3 * g + 3) % 9]));
    }
    edges
}

/// Identifies the heteroclinic path of a 9-item symbol sequence.
///
/// Both paths share half their edges, so only transitions along edges
/// exclusive to one path vote for it, and transitions outside both edge sets
/// vote for a third cycle. The winner needs at least nine votes and twice the
/// votes of each other candidate; otherwise the path is unknown.
pub fn detect_path(seq: &SymbolSequence) -> Path {
    let (e1, e2) = (path_edges(&PATH1), path_edges(&PATH2));
    let mut votes = [0usize; 3];
    for w in seq.symbols.windows(2) {
        let edge = (w[0].item, w[1].item);
        match (e1.contains(&edge), e2.contains(&edge)) {
            (true, false) => votes[0] += 1,
            (false, true) => votes[1] += 1,
            (false, false) => votes[2] += 1,
            (true, true) => {}
        }
    }
    let (best, &n) = votes.iter().enumerate().max_by_key(|&(_, v)| *v).unwrap();
    if n < 9 || votes.iter().enumerate().any(|(k, &v)| k != best && 2 * v > n) {
        return Path::Unknown;
    }
    [Path::Path1, Path::Path2, Path::Other][best]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hierarchy {
    TwoLevel,
    OneLevel,
    Coexistence,
    /// Oscillating, but the window shows no switching between groups, or
    /// the within-group spread falls between the two decision levels.
    Unresolved,
}

impl Hierarchy {
    /// Two-level > one-level > coexistence. Unresolved has no rank.
    pub fn rank(&self) -> Option<u8> {
        match self {
            Hierarchy::TwoLevel => Some(2),
            Hierarchy::OneLevel => Some(1),
            Hierarchy::Coexistence => Some(0),
            Hierarchy::Unresolved => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HierarchyReport {
    pub level: Hierarchy,
    /// Median over frames of the max-minus-min spread inside the dominant group.
    pub within_group: f64,
    /// Peak-to-peak amplitude of the group sums, largest over groups.
    pub between_group: f64,
    /// Peak-to-peak amplitude of single items, largest over items.
    pub total_amplitude: f64,
    pub dominant_groups: usize,
}

pub const GROUP_SIZE: usize = 3;

/// Largest peak-to-peak amplitude over items of one unit, from per-item
/// minima and maxima over a window.
fn peak_to_peak(traj: &Trajectory, column: usize, window: Range<usize>) -> Vec<f64> {
    let n = traj.items;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for j in window {
        for (i, &v) in traj.unit_at(j, column).iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    hi.iter().zip(&lo).map(|(h, l)| if h >= l { h - l } else { 0.0 }).collect()
}

pub fn amplitude(traj: &Trajectory, column: usize, window: Range<usize>) -> f64 {
    peak_to_peak(traj, column, window).into_iter().fold(0.0, f64::max)
}

/// Hierarchy level of a 9-item unit with groups {1,2,3}, {4,5,6}, {7,8,9}.
pub fn hierarchy_level(traj: &Trajectory, column: usize, window: Range<usize>, th: &Thresholds) -> HierarchyReport {
    let groups = traj.items / GROUP_SIZE;
    let total_amplitude = amplitude(traj, column, window.clone());
    let mut spreads = Vec::with_capacity(window.len());
    let mut seen = BTreeSet::new();
    let mut gmin = vec![f64::INFINITY; groups];
    let mut gmax = vec![f64::NEG_INFINITY; groups];
    for j in window.clone() {
        let s = traj.unit_at(j, column);
        let sums: Vec<f64> = s.chunks_exact(GROUP_SIZE).map(|g| g.iter().sum()).collect();
        for (g, &v) in sums.iter().enumerate() {
            gmin[g] = gmin[g].min(v);
            gmax[g] = gmax[g].max(v);
        }
        let dom = dominant_item(&sums, 0.0).item;
        seen.insert(dom);
        let g = &s[dom * GROUP_SIZE..(dom + 1) * GROUP_SIZE];
        let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        spreads.push(hi - lo);
    }
    let within_group = median(&mut spreads);
    let between_group = gmax.iter().zip(&gmin).map(|(h, l)| h - l).fold(0.0, f64::max);

    let level = if total_amplitude < th.amp {
        Hierarchy::Coexistence
    } else if seen.len() < 2 {
        Hierarchy::Unresolved
    } else if within_group <= th.flat {
        Hierarchy::OneLevel
    } else if within_group > th.amp {
        Hierarchy::TwoLevel
    } else {
        Hierarchy::Unresolved
    };
    HierarchyReport {
        level,
        within_group,
        between_group,
        total_amplitude,
        dominant_groups: seen.len(),
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "LC")]
    Lc,
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "QP")]
    Qp,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Hc => "HC",
            Regime::Lc => "LC",
            Regime::Ce => "CE",
            Regime::Qp => "QP",
            Regime::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub label: Regime,
    pub min_concentration: f64,
    pub amplitude: f64,
    pub variance: f64,
    /// Relative spread `(max - min) / mean` of the excursion maxima of the
    /// largest-amplitude item.
    pub maxima_spread: f64,
    pub maxima: usize,
    /// Regression slope of log10 of the per-symbol minimum concentration,
    /// in decades per symbol. Negative while the orbit creeps toward the
    /// saddles.
    pub min_trend: f64,
    /// Amplitude in the last quarter of the window over that in the first.
    pub amplitude_ratio: f64,
    pub noiseless: bool,
}

/// Largest value of each excursion above the midline of `series`, with a
/// hysteresis band of 5% of the range so jitter does not split excursions.
/// Excursions cut by either end of the series are dropped.
pub fn excursion_maxima(series: &[f64]) -> Vec<f64> {
    let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Vec::new();
    }
    let mid = 0.5 * (lo + hi);
    let band = 0.05 * (hi - lo);
    let mut out = Vec::new();
    let mut armed = false;
    let mut peak: Option<f64> = None;
    for &v in series {
        match peak {
            None if v < mid - band => armed = true,
            None if armed && v > mid + band => peak = Some(v),
            Some(p) if v < mid - band => {
                out.push(p);
                peak = None;
            }
            Some(p) => peak = Some(p.max(v)),
            None => {}
        }
    }
    out
}

/// Minimum concentration of the unit during each complete symbol dwell.
fn per_symbol_minima(traj: &Trajectory, column: usize, seq: &SymbolSequence) -> Vec<f64> {
    let complete = seq.symbols.len().saturating_sub(1);
    seq.symbols[..complete]
        .iter()
        .map(|sym| {
            let a = traj.times.partition_point(|&t| t < sym.entry);
            let b = traj.times.partition_point(|&t| t < sym.entry + sym.dwell);
            (a..b.max(a + 1))
                .flat_map(|j| traj.unit_at(j, column).iter().copied())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Relative spread of the successive-maxima return map, allowing the orbit to
/// close after up to four excursions so a period-2 cycle is not quasi-periodic.
fn return_map_spread(maxima: &[f64]) -> f64 {
    let mean = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let lag_spread = |p: usize| {
        maxima
            .windows(p + 1)
            .map(|w| (w[p] - w[0]).abs())
            .fold(0.0, f64::max)
            / mean
    };
    (1..=4)
        .filter(|&p| maxima.len() > p + 1)
        .map(lag_spread)
        .fold(f64::INFINITY, f64::min)
        .min(lag_spread(1))
}

fn regression_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Per-symbol minima falling by more than this many decades per symbol mark
/// a noiseless orbit as heteroclinic.
pub const MIN_TREND_TOL: f64 = 0.01;

/// An oscillation whose quarter-window amplitudes fall strictly and end below
/// this fraction of the first is decaying toward the coexistence point.
pub const DECAY_RATIO: f64 = 0.9;

/// Regime of one unit over a window.
///
/// CE if the state variance is below `var` or the oscillation is still
/// decaying. HC with noise if the orbit dips below `hc`;
/// HC without noise if the per-symbol minima keep falling, so that dwell
/// times keep growing. Otherwise QP if successive maxima spread by more than
/// `qp`, else LC.
pub fn classify_regime(traj: &Trajectory, column: usize, window: Range<usize>, th: &Thresholds) -> RegimeReport {
    let n = traj.items;
    let len = window.len();
    let noiseless = traj.meta.params.sigmas.iter().all(|&s| s == 0.0);
    let mut report = RegimeReport {
        label: Regime::Unknown,
        min_concentration: f64::NAN,
        amplitude: 0.0,
        variance: 0.0,
        maxima_spread: 0.0,
        maxima: 0,
        min_trend: 0.0,
        amplitude_ratio: 1.0,
        noiseless,
    };
    if len < 8 {
        return report;
    }
    let mut mean = vec![0.0; n];
    let mut min_concentration = f64::INFINITY;
    for j in window.clone() {
        for (i, &v) in traj.unit_at(j, column).iter().enumerate() {
            mean[i] += v / len as f64;
            min_concentration = min_concentration.min(v);
        }
    }
    let mut var = vec![0.0; n];
    for j in window.clone() {
        for (i, &v) in traj.unit_at(j, column).iter().enumerate() {
            var[i] += (v - mean[i]).powi(2) / len as f64;
        }
    }
    report.variance = var.iter().copied().fold(0.0, f64::max);
    report.min_concentration = min_concentration;
    let ptp = peak_to_peak(traj, column, window.clone());
    report.amplitude = ptp.iter().copied().fold(0.0, f64::max);

    let q = len / 4;
    let quarters: Vec<f64> = (0..4)
        .map(|k| amplitude(traj, column, window.start + k * q..window.start + (k + 1) * q))
        .collect();
    report.amplitude_ratio = if quarters[0] > 0.0 { quarters[3] / quarters[0] } else { 1.0 };
    let decaying = quarters.windows(2).all(|w| w[1] < w[0]) && report.amplitude_ratio < DECAY_RATIO;

    let item = ptp
        .iter()
        .enumerate()
        .fold(0, |best, (i, &a)| if a > ptp[best] { i } else { best });
    let series: Vec<f64> = window.clone().map(|j| traj.unit_at(j, column)[item]).collect();
    let maxima = excursion_maxima(&series);
    report.maxima = maxima.len();
    if maxima.len() >= 2 {
        report.maxima_spread = return_map_spread(&maxima);
    }

    let seq = symbol_sequence_relative(traj, column, window, th);
    let mins: Vec<f64> = per_symbol_minima(traj, column, &seq)
        .into_iter()
        .map(|m| m.max(f64::MIN_POSITIVE).log10())
        .collect();
    // The first symbol may be cut by the window start; with many symbols only
    // the late half counts, so a transient approach does not pass for slowing.
    let inner = mins.get(1..).unwrap_or(&[]);
    let late = if inner.len() >= 8 { &inner[inner.len() / 2..] } else { inner };
    report.min_trend = if late.len() >= 3 { regression_slope(late) } else { 0.0 };

    let heteroclinic = if noiseless {
        report.min_trend < -MIN_TREND_TOL || min_concentration == 0.0
    } else {
        min_concentration < th.hc
    };
    report.label = if report.variance < th.var || decaying {
        Regime::Ce
    } else if heteroclinic {
        Regime::Hc
    } else if maxima.len() < 2 {
        Regime::Unknown
    } else if report.maxima_spread > th.qp {
        Regime::Qp
    } else {
        Regime::Lc
    };
    report
}

/// Unit `column` follows the pacemaker's symbol cycle: it oscillates with
/// amplitude above `amp`, visits every item the pacemaker visits, uses only
/// transitions the pacemaker uses, and emits a symbol count within `max_lag`
/// of the pacemaker's.
pub fn is_entrained(
    traj: &Trajectory,
    column: usize,
    reference: &SymbolSequence,
    window: Range<usize>,
    th: &Thresholds,
    max_lag: usize,
) -> bool {
    if amplitude(traj, column, window.clone()) <= th.amp {
        return false;
    }
    let seq = symbol_sequence_relative(traj, column, window, th);
    seq.len().abs_diff(reference.len()) <= max_lag
        && seq.visited() == reference.visited()
        && seq.transitions().is_subset(&reference.transitions())
}

/// Number of consecutive units after the pacemaker (column 0) that are
/// entrained to it, in column order.
pub fn entrainment_length(traj: &Trajectory, window: Range<usize>, th: &Thresholds, max_lag: usize) -> usize {
    if amplitude(traj, 0, window.clone()) <= th.amp {
        return 0;
    }
    let reference = symbol_sequence_relative(traj, 0, window.clone(), th);
    if reference.len() < 3 {
        return 0;
    }
    (1..traj.recorded_units())
        .take_while(|&k| is_entrained(traj, k, &reference, window.clone(), th, max_lag))
        .count()
}

/// Running per-unit, per-item minima and maxima, fed frame by frame.
#[derive(Debug, Clone)]
pub struct AmplitudeTracker {
    items: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AmplitudeTracker {
    pub fn new(units: usize, items: usize) -> Self {
        AmplitudeTracker {
            items,
            lo: vec![f64::INFINITY; units * items],
            hi: vec![f64::NEG_INFINITY; units * items],
        }
    }

    pub fn observe(&mut self, s: &[f64]) {
        for ((lo, hi), &v) in self.lo.iter_mut().zip(self.hi.iter_mut()).zip(s) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }

    /// Largest peak-to-peak amplitude over items, per unit.
    pub fn unit_amplitudes(&self) -> Vec<f64> {
        self.hi
            .chunks_exact(self.items)
            .zip(self.lo.chunks_exact(self.items))
            .map(|(h, l)| h.iter().zip(l).map(|(a, b)| a - b).fold(0.0, f64::max))
            .collect()
    }
}

/// Streams frames after a start time in consecutive windows and remembers the
/// end of the last window in which some unit still switched between item
/// groups with an amplitude above `amp`.
#[derive(Debug, Clone)]
pub struct SwitchingPersistence {
    items: usize,
    start: f64,
    window: f64,
    amp: f64,
    dom: f64,
    window_end: f64,
    tracker: AmplitudeTracker,
    group: Vec<Option<usize>>,
    switched: Vec<bool>,
    last_alive: Option<f64>,
}

impl SwitchingPersistence {
    pub fn new(units: usize, items: usize, start: f64, window: f64, th: &Thresholds) -> Self {
        SwitchingPersistence {
            items,
            start,
            window,
            amp: th.amp,
            dom: th.dom,
            window_end: start + window,
            tracker: AmplitudeTracker::new(units, items),
            group: vec![None; units],
            switched: vec![false; units],
            last_alive: None,
        }
    }

    pub fn observe(&mut self, t: f64, s: &[f64]) {
        if t < self.start {
            return;
        }
        if t > self.window_end {
            self.close_window();
        }
        self.tracker.observe(s);
        for (u, values) in s.chunks_exact(self.items).enumerate() {
            let sums: Vec<f64> = values.chunks_exact(GROUP_SIZE).map(|g| g.iter().sum()).collect();
            let g = dominant_item(&sums, self.dom).item;
            if self.group[u].is_some_and(|prev| prev != g) {
                self.switched[u] = true;
            }
            self.group[u] = Some(g);
        }
    }

    fn close_window(&mut self) {
        let amps = self.tracker.unit_amplitudes();
        if amps.iter().zip(&self.switched).any(|(&a, &sw)| sw && a > self.amp) {
            self.last_alive = Some(self.window_end);
        }
        let units = self.switched.len();
        self.tracker = AmplitudeTracker::new(units, self.items);
        self.switched.iter_mut().for_each(|x| *x = false);
        self.window_end += self.window;
    }

    /// Time from the start to the end of the last live window, or 0 if
    /// switching stopped within the first window. Windows cut short by the
    /// end of the run are not counted.
    pub fn persistence(&self) -> f64 {
        self.last_alive.map_or(0.0, |t| t - self.start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialBin {
    pub r_lo: f64,
    pub r_hi: f64,
    pub mean_amplitude: f64,
    pub count: usize,
}

/// Mean unit amplitude in `n_bins` equal-width distance bins from `center`
/// out to the farthest site.
pub fn radial_profile(amplitudes: &[f64], side: usize, center: (f64, f64), n_bins: usize) -> Vec<RadialBin> {
    let dist = |k: usize| {
        let (x, y) = grid_coords(side, k);
        ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt()
    };
    let r_max = (0..amplitudes.len()).map(dist).fold(0.0, f64::max);
    let width = if n_bins == 0 { 0.0 } else { r_max / n_bins as f64 };
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (k, &a) in amplitudes.iter().enumerate() {
        if n_bins == 0 {
            break;
        }
        let b = if width > 0.0 { ((dist(k) / width) as usize).min(n_bins - 1) } else { 0 };
        sums[b] += a;
        counts[b] += 1;
    }
    (0..n_bins)
        .map(|b| RadialBin {
            r_lo: b as f64 * width,
            r_hi: (b + 1) as f64 * width,
            mean_amplitude: if counts[b] > 0 { sums[b] / counts[b] as f64 } else { 0.0 },
            count: counts[b],
        })
        .collect()
}

/// Radial profile over the frames in `window` of a full grid recording. The
/// grid side is `sqrt` of the recorded unit count.
pub fn radial_amplitude_profile(
    traj: &Trajectory,
    center: (f64, f64),
    n_bins: usize,
    window: Range<usize>,
) -> Vec<RadialBin> {
    let side = (traj.recorded_units() as f64).sqrt().round() as usize;
    let mut tracker = AmplitudeTracker::new(traj.recorded_units(), traj.items);
    for j in window {
        tracker.observe(traj.frame(j));
    }
    radial_profile(&tracker.unit_amplitudes(), side, center, n_bins)
}

/// Non-empty bins with `r_lo >= from_radius` never rise by more than the
/// relative tolerance `mono` from one bin to the next.
pub fn profile_non_increasing(bins: &[RadialBin], from_radius: f64, mono: f64) -> bool {
    let tail: Vec<f64> = bins
        .iter()
        .filter(|b| b.count > 0 && b.r_lo >= from_radius)
        .map(|b| b.mean_amplitude)
        .collect();
    tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + mono))
}

/// Dominant item and its concentration at every unit of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub items: Vec<u8>,
    pub values: Vec<f64>,
    pub degenerate: Vec<bool>,
}

pub fn raster_of_frame(frame: &[f64], items: usize, width: usize, height: usize, theta_dom: f64) -> Raster {
    let mut r = Raster {
        width,
        height,
        items: Vec::with_capacity(width * height),
        values: Vec::with_capacity(width * height),
        degenerate: Vec::with_capacity(width * height),
    };
    for u in frame.chunks_exact(items) {
        let d = dominant_item(u, theta_dom);
        r.items.push(d.item as u8);
        r.values.push(u[d.item]);
        r.degenerate.push(d.degenerate);
    }
    r
}

/// One raster per recorded frame, laid out by the trajectory's topology.
pub fn spatiotemporal_field(traj: &Trajectory, theta_dom: f64) -> Vec<Raster> {
    let (w, h) = traj.meta.topology.raster_dims(traj.recorded_units());
    (0..traj.frames())
        .map(|j| raster_of_frame(traj.frame(j), traj.items, w, h, theta_dom))
        .collect()
}

/// CSV with columns `entry,dwell,item` (1-based items).
pub fn write_symbols_csv<W: Write>(seq: &SymbolSequence, mut out: W) -> Result<()> {
    writeln!(out, "entry,dwell,item")?;
    for s in &seq.symbols {
        writeln!(out, "{},{},{}", s.entry, s.dwell, s.item + 1)?;
    }
    Ok(())
}

/// CSV with columns `r_lo,r_hi,count,mean_amplitude`.
pub fn write_profile_csv<W: Write>(bins: &[RadialBin], mut out: W) -> Result<()> {
    writeln!(out, "r_lo,r_hi,count,mean_amplitude")?;
    for b in bins {
        writeln!(out, "{},{},{},{}", b.r_lo, b.r_hi, b.count, b.mean_amplitude)?;
    }
    Ok(())
}
