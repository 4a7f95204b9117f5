//! Generalized Lotka-Volterra kinetics of a heteroclinic unit and the
//! deterministic right-hand side of the coupled system
//!
//! ```text
//! d/dt s[k][i] = rho s[k][i] - gamma_k s[k][i]^2 - s[k][i] sum_j A[i][j] s[k][j]
//!              + sum_l K[k][l] (s[l][i] - s[k][i])
//! ```
//!
//! The additive noise term is left to the stochastic integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::CouplingMatrix;

/// Competition rates of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rates {
    /// Rock-paper-scissors competition among three items.
    Three { c: f64, e: f64 },
    /// Nine items arranged as three coupled rock-paper-scissors groups,
    /// giving two hierarchy levels of heteroclinic motion.
    Nine {
        c: f64,
        e: f64,
        d: f64,
        f: f64,
        r: f64,
    },
}

/// Intrinsic rate parameters of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinetics {
    /// Net reproduction rate; sets the time scale.
    pub rho: f64,
    pub rates: Rates,
}

impl Kinetics {
    pub fn new(rho: f64, rates: Rates) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::config("kinetics.rho", format!("must be finite and > 0, got {rho}")));
        }
        let named: &[(&str, f64)] = match &rates {
            Rates::Three { c, e } => &[("c", *c), ("e", *e)],
            Rates::Nine { c, e, d, f, r } => &[("c", *c), ("e", *e), ("d", *d), ("f", *f), ("r", *r)],
        };
        for (name, v) in named {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config(
                    format!("kinetics.{name}"),
                    format!("rate must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(Kinetics { rho, rates })
    }

    pub fn three(rho: f64, c: f64, e: f64) -> Result<Self> {
        Self::new(rho, Rates::Three { c, e })
    }

    pub fn nine(rho: f64, c: f64, e: f64, d: f64, f: f64, r: f64) -> Result<Self> {
        Self::new(rho, Rates::Nine { c, e, d, f, r })
    }

    /// rho = 1, c = 2, e = 0.2.
    pub fn canonical_three() -> Self {
        Kinetics {
            rho: 1.0,
            rates: Rates::Three { c: 2.0, e: 0.2 },
        }
    }

    /// rho = 1, c = d = 2, e = 0.2, r = 1.25 and the given `f` (0.3 or 0.4 in practice).
    pub fn canonical_nine(f: f64) -> Self {
        Kinetics {
            rho: 1.0,
            rates: Rates::Nine {
                c: 2.0,
                e: 0.2,
                d: 2.0,
                f,
                r: 1.25,
            },
        }
    }

    pub fn items(&self) -> usize {
        match self.rates {
            Rates::Three { .. } => 3,
            Rates::Nine { .. } => 9,
        }
    }

    pub fn rate_matrix(&self) -> RateMatrix {
        build_rate_matrix(self)
    }
}

/// Dense competition matrix; `get(i, j)` is the rate with which item `j`
/// suppresses item `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RateMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::config("rate_matrix", "matrix must be square"));
            }
            for (j, &v) in row.iter().enumerate() {
                if i == j && v != 0.0 {
                    return Err(Error::config("rate_matrix", "diagonal must be zero"));
                }
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config("rate_matrix", format!("entry ({i},{j}) = {v} is invalid")));
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(RateMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Builds the rock-paper-scissors matrix (3 items) or the 3x3 block-circulant
/// matrix (9 items). Block row `b` holds `m0` at block column `b`, `m_d` at
/// `b + 1` and `m_f` at `b + 2` (mod 3).
pub fn build_rate_matrix(kinetics: &Kinetics) -> RateMatrix {
    fn rps(c: f64, e: f64) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[(i + 1) % 3] = c;
            row[(i + 2) % 3] = e;
        }
        m
    }
    fn diag_block(diag: f64, off: f64) -> [[f64; 3]; 3] {
        let mut m = [[off; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = diag;
        }
        m
    }

    match kinetics.rates {
        Rates::Three { c, e } => RateMatrix {
            n: 3,
            entries: rps(c, e).iter().flatten().copied().collect(),
        },
        Rates::Nine { c, e, d, f, r } => {
            let blocks = [rps(c, e), diag_block(d, r), diag_block(f, r)];
            let mut entries = vec![0.0; 81];
            for br in 0..3 {
                for bc in 0..3 {
                    let block = &blocks[(bc + 3 - br) % 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            entries[(3 * br + i) * 9 + 3 * bc + j] = block[i][j];
                        }
                    }
                }
            }
            RateMatrix { n: 9, entries }
        }
    }
}

/// Per-unit decay rate (bifurcation parameter) and additive noise strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitParams {
    pub gamma: f64,
    pub sigma: f64,
}

impl UnitParams {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::config("gamma", format!("must be > 0, got {gamma}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::config("sigma", format!("must be >= 0, got {sigma}")));
        }
        Ok(UnitParams { gamma, sigma })
    }
}

/// Concentrations of all items at all units, stored unit-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    units: usize,
    items: usize,
    values: Vec<f64>,
}

impl SystemState {
    pub fn zeros(units: usize, items: usize) -> Self {
        SystemState {
            units,
            items,
            values: vec![0.0; units * items],
        }
    }

    pub fn from_values(units: usize, items: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != units * items {
            return Err(Error::config(
                "state",
                format!("expected {} values for {units} units x {items} items, got {}", units * items, values.len()),
            ));
        }
        Ok(SystemState { units, items, values })
    }

    /// Every unit set to the same item vector.
    pub fn replicated(units: usize, unit_values: &[f64]) -> Self {
        let items = unit_values.len();
        let values = (0..units).flat_map(|_| unit_values.iter().copied()).collect();
        SystemState { units, items, values }
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn get(&self, unit: usize, item: usize) -> f64 {
        self.values[unit * self.items + item]
    }

    pub fn set(&mut self, unit: usize, item: usize, value: f64) {
        self.values[unit * self.items + item] = value;
    }

    pub fn unit(&self, unit: usize) -> &[f64] {
        &self.values[unit * self.items..(unit + 1) * self.items]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Everything the right-hand side needs besides the state. Gammas are mutable
/// so parameter quenches can be applied between steps.
#[derive(Debug, Clone)]
pub struct RhsContext {
    pub rho: f64,
    pub rates: RateMatrix,
    pub gammas: Vec<f64>,
    pub coupling: CouplingMatrix,
}

impl RhsContext {
    pub fn new(kinetics: &Kinetics, gammas: Vec<f64>, coupling: CouplingMatrix) -> Result<Self> {
        if gammas.len() != coupling.units() {
            return Err(Error::config(
                "params",
                format!("{} gammas for a coupling matrix over {} units", gammas.len(), coupling.units()),
            ));
        }
        Ok(RhsContext {
            rho: kinetics.rho,
            rates: build_rate_matrix(kinetics),
            gammas,
            coupling,
        })
    }

    pub fn units(&self) -> usize {
        self.gammas.len()
    }

    pub fn items(&self) -> usize {
        self.rates.n()
    }

    /// Evaluates the drift into `out`. Both slices are unit-major with
    /// `units() * items()` entries. Summation order is fixed per component.
    pub fn eval(&self, s: &[f64], out: &mut [f64]) {
        debug_assert_eq!(s.len(), self.units() * self.items());
        debug_assert_eq!(out.len(), s.len());
        match self.rates.n() {
            3 => self.eval_fixed::<3>(s, out),
            9 => self.eval_fixed::<9>(s, out),
            _ => self.eval_dyn(s, out),
        }
    }

    /// Same arithmetic as `eval_dyn`, with the item loops fixed at compile time.
    fn eval_fixed<const N: usize>(&self, s: &[f64], out: &mut [f64]) {
        let mut a = [[0.0; N]; N];
        for (i, row) in a.iter_mut().enumerate() {
            row.copy_from_slice(self.rates.row(i));
        }
        for (k, (sk, dk)) in s.chunks_exact(N).zip(out.chunks_exact_mut(N)).enumerate() {
            let sk: &[f64; N] = sk.try_into().expect("chunk of N");
            let dk: &mut [f64; N] = dk.try_into().expect("chunk of N");
            let gamma = self.gammas[k];
            for i in 0..N {
                let mut competition = 0.0;
                for j in 0..N {
                    competition += a[i][j] * sk[j];
                }
                dk[i] = sk[i] * (self.rho - gamma * sk[i] - competition);
            }
            for (l, w) in self.coupling.row(k) {
                let sl: &[f64; N] = s[l * N..(l + 1) * N].try_into().expect("chunk of N");
                for i in 0..N {
                    dk[i] += w * (sl[i] - sk[i]);
                }
            }
        }
    }

    fn eval_dyn(&self, s: &[f64], out: &mut [f64]) {
        let n = self.rates.n();
        for (k, (sk, dk)) in s.chunks_exact(n).zip(out.chunks_exact_mut(n)).enumerate() {
            let gamma = self.gammas[k];
            for i in 0..n {
                let row = self.rates.row(i);
                let mut competition = 0.0;
                for j in 0..n {
                    competition += row[j] * sk[j];
                }
                dk[i] = sk[i] * (self.rho - gamma * sk[i] - competition);
            }
            for (l, w) in self.coupling.row(k) {
                let sl = &s[l * n..(l + 1) * n];
                for i in 0..n {
                    dk[i] += w * (sl[i] - sk[i]);
                }
            }
        }
    }
}

/// Deterministic drift of the coupled system.
pub fn rhs(
    state: &SystemState,
    params: &[UnitParams],
    rates: &RateMatrix,
    rho: f64,
    coupling: &CouplingMatrix,
) -> Result<SystemState> {
    if params.len() != state.units() || coupling.units() != state.units() {
        return Err(Error::config(
            "state",
            format!(
                "shape mismatch: {} units in state, {} params, {} in coupling",
                state.units(),
                params.len(),
                coupling.units()
            ),
        ));
    }
    if rates.n() != state.items() {
        return Err(Error::config(
            "state",
            format!("{} items in state but rate matrix is {}x{}", state.items(), rates.n(), rates.n()),
        ));
    }
    let ctx = RhsContext {
        rho,
        rates: rates.clone(),
        gammas: params.iter().map(|p| p.gamma).collect(),
        coupling: coupling.clone(),
    };
    let mut out = SystemState::zeros(state.units(), state.items());
    ctx.eval(state.values(), out.values_mut());
    Ok(out)
}
