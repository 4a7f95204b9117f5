//! Coupling matrices and per-unit parameter fields for chains, rings and
//! square grids.
//!
//! Units are 0-indexed. On an `L x L` grid, site `(x, y)` has index `y * L + x`.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UnitParams;

/// Sparse, non-negative inter-unit coupling in compressed-row form.
/// `get(k, l)` is the strength with which unit `l` drives unit `k`.
/// Entries are kept sorted by `(k, l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    units: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl CouplingMatrix {
    pub fn empty(units: usize) -> Self {
        CouplingMatrix {
            units,
            row_ptr: vec![0; units + 1],
            cols: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds from `(k, l, weight)` triplets. Duplicates are summed, zero
    /// weights dropped.
    pub fn from_triplets(units: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(k, l, w) in &triplets {
            if k >= units || l >= units {
                return Err(Error::config("coupling", format!("entry ({k},{l}) outside {units} units")));
            }
            if k == l {
                return Err(Error::config("coupling", format!("diagonal entry ({k},{k}) not allowed")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config("coupling", format!("entry ({k},{l}) = {w} must be finite and >= 0")));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (k, l, w) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == k && last.1 == l => last.2 += w,
                _ => merged.push((k, l, w)),
            }
        }
        merged.retain(|t| t.2 != 0.0);

        let mut row_ptr = vec![0; units + 1];
        for &(k, _, _) in &merged {
            row_ptr[k + 1] += 1;
        }
        for k in 0..units {
            row_ptr[k + 1] += row_ptr[k];
        }
        Ok(CouplingMatrix {
            units,
            row_ptr,
            cols: merged.iter().map(|t| t.1).collect(),
            weights: merged.iter().map(|t| t.2).collect(),
        })
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.row(k).find(|&(c, _)| c == l).map_or(0.0, |(_, w)| w)
    }

    /// Incoming links of unit `k` as `(l, weight)`, ascending in `l`.
    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[k]..self.row_ptr[k + 1];
        self.cols[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    /// All nonzero entries in row-major `(k, l)` order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.units).flat_map(move |k| self.row(k).map(move |(l, w)| (k, l, w)))
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row(k).map(|(_, w)| w).sum()
    }

    pub fn sum(&self, other: &CouplingMatrix) -> Result<CouplingMatrix> {
        if self.units != other.units {
            return Err(Error::config("coupling", "cannot add matrices of different size"));
        }
        CouplingMatrix::from_triplets(self.units, self.entries().chain(other.entries()).collect())
    }

    /// The coupling contribution `sum_l K[k][l] (s[l][i] - s[k][i])` alone.
    pub fn coupling_term(&self, s: &[f64], items: usize) -> Vec<f64> {
        let mut out = vec![0.0; s.len()];
        for k in 0..self.units {
            for (l, w) in self.row(k) {
                for i in 0..items {
                    out[k * items + i] += w * (s[l * items + i] - s[k * items + i]);
                }
            }
        }
        out
    }
}

fn require_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(name, format!("must be finite and >= 0, got {v}")))
    }
}

/// `K[k][k-1] = delta` for `k = 1..n-1`.
pub fn chain_unidirectional(n: usize, delta: f64) -> Result<CouplingMatrix> {
    chain_bidirectional(n, delta, 0.0)
}

/// Forward links `K[k][k-1] = delta` plus back links `K[k][k+1] = delta_b`.
pub fn chain_bidirectional(n: usize, delta: f64, delta_b: f64) -> Result<CouplingMatrix> {
    if n < 2 {
        return Err(Error::config("topology.units", format!("a chain needs at least 2 units, got {n}")));
    }
    require_nonneg("topology.delta", delta)?;
    require_nonneg("topology.delta_b", delta_b)?;
    let mut t = Vec::with_capacity(2 * (n - 1));
    for k in 1..n {
        t.push((k, k - 1, delta));
        t.push((k - 1, k, delta_b));
    }
    CouplingMatrix::from_triplets(n, t)
}

/// Directed ring: every unit is driven by its predecessor with `delta`,
/// except the pacemaker `k_p`, whose incoming link carries `delta_p`.
pub fn ring_directed(n: usize, delta: f64, delta_p: f64, k_p: usize) -> Result<CouplingMatrix> {
    if n < 3 {
        return Err(Error::config("topology.units", format!("a ring needs at least 3 units, got {n}")));
    }
    if k_p >= n {
        return Err(Error::config("topology.pacemaker", format!("index {k_p} outside ring of {n}")));
    }
    require_nonneg("topology.delta", delta)?;
    require_nonneg("topology.delta_p", delta_p)?;
    let t = (0..n)
        .map(|k| {
            let prev = (k + n - 1) % n;
            (k, prev, if k == k_p { delta_p } else { delta })
        })
        .collect();
    CouplingMatrix::from_triplets(n, t)
}

/// Ring distance `min(|k - l|, n - |k - l|)`.
pub fn ring_distance(n: usize, k: usize, l: usize) -> usize {
    let d = k.abs_diff(l);
    d.min(n - d)
}

/// Ring with the pacemaker at unit 0 coupled to every driven unit with
/// strength `delta / r` (and back with `delta_b / r`), and nearest-neighbour
/// links of strength `delta` among driven units only.
pub fn ring_distance_dependent(n: usize, delta: f64, delta_b: f64) -> Result<CouplingMatrix> {
    if n < 5 {
        return Err(Error::config("topology.units", format!("distance-dependent ring needs at least 5 units, got {n}")));
    }
    require_nonneg("topology.delta", delta)?;
    require_nonneg("topology.delta_b", delta_b)?;
    let mut t = Vec::new();
    for k in 1..n {
        let r = ring_distance(n, k, 0) as f64;
        t.push((k, 0, delta / r));
        t.push((0, k, delta_b / r));
        if k > 1 {
            t.push((k, k - 1, delta));
        }
        if k + 1 < n {
            t.push((k, k + 1, delta));
        }
    }
    CouplingMatrix::from_triplets(n, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Links across the edge are dropped, which is the zero-flux condition
    /// for the 5-point Laplacian.
    NoFlux,
}

pub fn grid_index(side: usize, x: usize, y: usize) -> usize {
    y * side + x
}

pub fn grid_coords(side: usize, index: usize) -> (usize, usize) {
    (index % side, index / side)
}

/// 5-point diffusive coupling of strength `delta` on an `side x side` grid.
pub fn grid_diffusive(side: usize, delta: f64, boundary: Boundary) -> Result<CouplingMatrix> {
    if side < 4 {
        return Err(Error::config("topology.side", format!("grid side must be >= 4, got {side}")));
    }
    require_nonneg("topology.delta", delta)?;
    let mut t = Vec::with_capacity(4 * side * side);
    for y in 0..side {
        for x in 0..side {
            let k = grid_index(side, x, y);
            let mut link = |nx: isize, ny: isize| {
                let inside = (0..side as isize).contains(&nx) && (0..side as isize).contains(&ny);
                let (nx, ny) = match boundary {
                    Boundary::Periodic => (nx.rem_euclid(side as isize), ny.rem_euclid(side as isize)),
                    Boundary::NoFlux if inside => (nx, ny),
                    Boundary::NoFlux => return,
                };
                t.push((k, grid_index(side, nx as usize, ny as usize), delta));
            };
            let (xi, yi) = (x as isize, y as isize);
            link(xi - 1, yi);
            link(xi + 1, yi);
            link(xi, yi - 1);
            link(xi, yi + 1);
        }
    }
    CouplingMatrix::from_triplets(side * side, t)
}

/// Shape of the unit arrangement, carried with trajectories for provenance
/// and raster layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyTag {
    Single,
    Chain,
    Ring,
    RingDistance,
    Grid { side: usize },
}

impl TopologyTag {
    /// `(kind, aux)` pair stored in snapshot headers.
    pub fn code(&self) -> (u32, u32) {
        match *self {
            TopologyTag::Single => (0, 0),
            TopologyTag::Chain => (1, 0),
            TopologyTag::Ring => (2, 0),
            TopologyTag::RingDistance => (3, 0),
            TopologyTag::Grid { side } => (4, side as u32),
        }
    }

    pub fn from_code(kind: u32, aux: u32) -> Option<Self> {
        Some(match kind {
            0 => TopologyTag::Single,
            1 => TopologyTag::Chain,
            2 => TopologyTag::Ring,
            3 => TopologyTag::RingDistance,
            4 => TopologyTag::Grid { side: aux as usize },
            _ => return None,
        })
    }

    /// Raster `(width, height)` for `units` units.
    pub fn raster_dims(&self, units: usize) -> (usize, usize) {
        match *self {
            TopologyTag::Grid { side } => (side, side),
            _ => (units, 1),
        }
    }
}

/// Closed interval `[lo, hi]` from which defect decay rates are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl GammaInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::config("params.gamma_interval", format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(GammaInterval { lo, hi })
    }

    /// The interval used for resting units on the grid.
    pub fn canonical() -> Self {
        GammaInterval { lo: 1.5, hi: 1.6 }
    }

    fn sample(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u
    }
}

const DEFECT_STREAM: u64 = 0;
const GAMMA_STREAM: u64 = 1;

/// Uniform `[0, 1)` value keyed by `(seed, stream, index)`. Independent of the
/// order in which sites are visited.
pub fn site_uniform(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-unit decay rates, noise strengths and the set of pacemaker units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterField {
    pub gammas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub pacemakers: Vec<usize>,
}

impl ParameterField {
    pub fn new(gammas: Vec<f64>, sigmas: Vec<f64>, mut pacemakers: Vec<usize>) -> Result<Self> {
        if gammas.len() != sigmas.len() {
            return Err(Error::config("params", "gammas and sigmas differ in length"));
        }
        for (k, (&g, &s)) in gammas.iter().zip(&sigmas).enumerate() {
            UnitParams::new(g, s).map_err(|e| match e {
                Error::Config { path, message } => Error::config(format!("params.{path}[{k}]"), message),
                other => other,
            })?;
        }
        pacemakers.sort_unstable();
        pacemakers.dedup();
        if let Some(&p) = pacemakers.iter().find(|&&p| p >= gammas.len()) {
            return Err(Error::config("params.pacemakers", format!("unit {p} out of range")));
        }
        Ok(ParameterField {
            gammas,
            sigmas,
            pacemakers,
        })
    }

    pub fn uniform(units: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; units], vec![0.0; units], Vec::new())
    }

    /// One pacemaker at `pacemaker` with `gamma_p`; every other unit gets `gamma_d`.
    pub fn with_pacemaker(units: usize, pacemaker: usize, gamma_p: f64, gamma_d: f64) -> Result<Self> {
        if pacemaker >= units {
            return Err(Error::config("params.pacemaker", format!("unit {pacemaker} out of range")));
        }
        let mut gammas = vec![gamma_d; units];
        gammas[pacemaker] = gamma_p;
        Self::new(gammas, vec![0.0; units], vec![pacemaker])
    }

    pub fn units(&self) -> usize {
        self.gammas.len()
    }

    /// Same noise strength on every unit.
    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        require_nonneg("params.sigma", sigma)?;
        self.sigmas.iter_mut().for_each(|s| *s = sigma);
        Ok(self)
    }

    /// Noise on pacemakers only; other units are noiseless.
    pub fn with_pacemaker_sigma(mut self, sigma: f64) -> Result<Self> {
        require_nonneg("params.sigma", sigma)?;
        self.sigmas.iter_mut().for_each(|s| *s = 0.0);
        for &p in &self.pacemakers {
            self.sigmas[p] = sigma;
        }
        Ok(self)
    }

    pub fn unit_params(&self) -> Vec<UnitParams> {
        self.gammas
            .iter()
            .zip(&self.sigmas)
            .map(|(&gamma, &sigma)| UnitParams { gamma, sigma })
            .collect()
    }
}

/// Grid where each site is a defect (resting unit) with probability `p_d`.
/// Defects draw their decay rate from `interval`; the rest get
/// `gamma_pacemaker`. The per-site draws depend only on `(seed, site)`, so
/// fields for different `p_d` share the same underlying random values.
pub fn random_defect_field(
    side: usize,
    p_d: f64,
    gamma_pacemaker: f64,
    interval: GammaInterval,
    seed: u64,
) -> Result<ParameterField> {
    if !(0.0..=1.0).contains(&p_d) {
        return Err(Error::config("params.p_d", format!("must lie in [0, 1], got {p_d}")));
    }
    let interval = GammaInterval::new(interval.lo, interval.hi)?;
    let units = side * side;
    let mut gammas = Vec::with_capacity(units);
    let mut pacemakers = Vec::new();
    for k in 0..units {
        let defect = site_uniform(seed, DEFECT_STREAM, k as u64) < p_d;
        if defect {
            gammas.push(interval.sample(site_uniform(seed, GAMMA_STREAM, k as u64)));
        } else {
            gammas.push(gamma_pacemaker);
            pacemakers.push(k);
        }
    }
    ParameterField::new(gammas, vec![0.0; units], pacemakers)
}

/// Pacemakers fill the disc of radius `radius` (inclusive) around the grid's
/// geometric center `((side-1)/2, (side-1)/2)`; all other sites are resting
/// units with decay rates drawn from `interval`.
pub fn disc_pacemaker_field(
    side: usize,
    radius: f64,
    gamma_pacemaker: f64,
    interval: GammaInterval,
    seed: u64,
) -> Result<ParameterField> {
    if !(radius > 0.0 && radius < side as f64 / 2.0) {
        return Err(Error::config("params.radius", format!("must lie in (0, {}), got {radius}", side as f64 / 2.0)));
    }
    let interval = GammaInterval::new(interval.lo, interval.hi)?;
    let center = (side as f64 - 1.0) / 2.0;
    let units = side * side;
    let mut gammas = Vec::with_capacity(units);
    let mut pacemakers = Vec::new();
    for k in 0..units {
        let (x, y) = grid_coords(side, k);
        let (dx, dy) = (x as f64 - center, y as f64 - center);
        if dx * dx + dy * dy <= radius * radius {
            gammas.push(gamma_pacemaker);
            pacemakers.push(k);
        } else {
            gammas.push(interval.sample(site_uniform(seed, GAMMA_STREAM, k as u64)));
        }
    }
    ParameterField::new(gammas, vec![0.0; units], pacemakers)
}
