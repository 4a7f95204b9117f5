//! Equilibria of a single unit and of the forced reduced system, stability
//! classification, critical coupling strengths and the combinatorics of
//! equilibria along a chain.
//!
//! The reduced system describes a driven unit whose pacemaker sits at its
//! first saddle `(rho / gamma_p, 0, 0)`:
//!
//! ```text
//! x' = rho x - gD x^2 - x (c y + e z) + delta (rho / gP - x)
//! y' = rho y - gD y^2 - y (c z + e x) - delta y
//! z' = rho z - gD z^2 - z (c x + e y) - delta z
//! ```

use std::io::Write;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Kinetics, Rates};

/// Imaginary parts below this are treated as zero when classifying.
pub const EPS_EIG: f64 = 1e-9;

/// Coordinates below this are outside the physical orthant.
pub const ORTHANT_TOL: f64 = -1e-12;

/// Relative residual bound `|f(x)| / (1 + |x|)` accepted for a closed-form point.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Bisection tolerance in delta for the numeric critical couplings.
pub const DELTA_TOL: f64 = 1e-8;

/// Decay rate at which a 3-item unit undergoes its Hopf bifurcation.
pub fn gamma_crit_three(c: f64, e: f64) -> f64 {
    0.5 * (c + e)
}

/// Axis saddle `rho / gamma` and the coexistence point with all items equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleUnitPoints {
    pub saddle: f64,
    pub coexistence: Vec<f64>,
}

/// Every row of the rate matrix has the same sum for both kinetics variants,
/// so the equal-item point is `rho / (gamma + row sum)`.
pub fn saddle_and_coexistence_points(kinetics: &Kinetics, gamma: f64) -> Result<SingleUnitPoints> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::config("gamma", format!("must be > 0, got {gamma}")));
    }
    let row_sum = match kinetics.rates {
        Rates::Three { c, e } => c + e,
        Rates::Nine { c, e, d, f, r } => c + e + d + f + 4.0 * r,
    };
    let xi = kinetics.rho / (gamma + row_sum);
    Ok(SingleUnitPoints {
        saddle: kinetics.rho / gamma,
        coexistence: vec![xi; kinetics.items()],
    })
}

/// Parameters of the forced reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcedParams {
    pub gamma_p: f64,
    pub gamma_d: f64,
    pub delta: f64,
    pub c: f64,
    pub e: f64,
    pub rho: f64,
}

impl ForcedParams {
    pub fn new(gamma_p: f64, gamma_d: f64, delta: f64, c: f64, e: f64, rho: f64) -> Result<Self> {
        for (name, v) in [("gamma_p", gamma_p), ("gamma_d", gamma_d), ("c", c), ("e", e), ("rho", rho)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be > 0, got {v}")));
            }
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::config("delta", format!("must be >= 0, got {delta}")));
        }
        Ok(ForcedParams {
            gamma_p,
            gamma_d,
            delta,
            c,
            e,
            rho,
        })
    }

    /// Canonical competition rates `c = 2`, `e = 0.2`, `rho = 1`.
    pub fn canonical(gamma_p: f64, gamma_d: f64, delta: f64) -> Result<Self> {
        Self::new(gamma_p, gamma_d, delta, 2.0, 0.2, 1.0)
    }

    pub fn with_delta(self, delta: f64) -> Self {
        ForcedParams { delta, ..self }
    }
}

pub fn reduced_rhs(p: &ForcedParams, s: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = s;
    let ForcedParams {
        gamma_p: gp,
        gamma_d: gd,
        delta,
        c,
        e,
        rho,
    } = *p;
    [
        rho * x - gd * x * x - x * (c * y + e * z) + delta * (rho / gp - x),
        rho * y - gd * y * y - y * (c * z + e * x) - delta * y,
        rho * z - gd * z * z - z * (c * x + e * y) - delta * z,
    ]
}

fn norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative residual `|f(s)| / (1 + |s|)`.
pub fn reduced_residual(p: &ForcedParams, s: [f64; 3]) -> f64 {
    norm(reduced_rhs(p, s)) / (1.0 + norm(s))
}

/// Jacobian of the reduced system with its eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub matrix: [[f64; 3]; 3],
    pub eigenvalues: [Complex64; 3],
}

impl Jacobian {
    pub fn trace(&self) -> f64 {
        self.matrix[0][0] + self.matrix[1][1] + self.matrix[2][2]
    }
}

pub fn jacobian_reduced(s: [f64; 3], p: &ForcedParams) -> Jacobian {
    let [x, y, z] = s;
    let ForcedParams {
        gamma_d: gd,
        delta,
        c,
        e,
        rho,
        ..
    } = *p;
    let matrix = [
        [rho - 2.0 * gd * x - (c * y + e * z) - delta, -c * x, -e * x],
        [-e * y, rho - 2.0 * gd * y - (c * z + e * x) - delta, -c * y],
        [-c * z, -e * z, rho - 2.0 * gd * z - (c * x + e * y) - delta],
    ];
    Jacobian {
        matrix,
        eigenvalues: eigenvalues_closed_form(&matrix),
    }
}

/// Coefficients `(a, b, c)` of the monic characteristic polynomial
/// `l^3 + a l^2 + b l + c`.
pub fn char_poly(m: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0] + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    (-tr, minors, -det)
}

/// Discriminant of the characteristic polynomial. Negative means one real
/// eigenvalue and a complex-conjugate pair.
pub fn char_poly_discriminant(m: &[[f64; 3]; 3]) -> f64 {
    let (a, b, c) = char_poly(m);
    18.0 * a * b * c - 4.0 * a.powi(3) * c + a * a * b * b - 4.0 * b.powi(3) - 27.0 * c * c
}

/// Roots of `x^3 + a x^2 + b x + c`, real roots first in ascending order,
/// then the complex pair with positive imaginary part first.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a.powi(3) / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let d = q * q / 4.0 + p.powi(3) / 27.0;
    let poly = |x: Complex64| ((x + a) * x + b) * x + c;
    let dpoly = |x: Complex64| (3.0 * x + 2.0 * a) * x + b;
    let polish = |mut x: Complex64| {
        for _ in 0..3 {
            let dp = dpoly(x);
            if dp.norm() < 1e-300 {
                break;
            }
            let step = poly(x) / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            x -= step;
        }
        x
    };

    if d <= 0.0 {
        // Three real roots.
        let mut r = if p == 0.0 {
            [shift; 3]
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            let tau = 2.0 * std::f64::consts::PI / 3.0;
            [
                m * theta.cos() + shift,
                m * (theta - tau).cos() + shift,
                m * (theta - 2.0 * tau).cos() + shift,
            ]
        };
        for x in &mut r {
            *x = polish(Complex64::new(*x, 0.0)).re;
        }
        r.sort_by(|x, y| x.total_cmp(y));
        return r.map(|x| Complex64::new(x, 0.0));
    }

    let sd = d.sqrt();
    let t = (-q / 2.0 + sd).cbrt() + (-q / 2.0 - sd).cbrt();
    let x0 = polish(Complex64::new(t + shift, 0.0)).re;
    // Deflate: x^2 + (a + x0) x + (b + (a + x0) x0).
    let bq = a + x0;
    let cq = b + bq * x0;
    let disc = bq * bq - 4.0 * cq;
    let (re, im) = (-bq / 2.0, (-disc).max(0.0).sqrt() / 2.0);
    let z1 = polish(Complex64::new(re, im));
    [Complex64::new(x0, 0.0), z1, z1.conj()]
}

pub fn eigenvalues_closed_form(m: &[[f64; 3]; 3]) -> [Complex64; 3] {
    let (a, b, c) = char_poly(m);
    cubic_roots(a, b, c)
}

/// Eigenvalues from nalgebra's iterative Schur decomposition, ordered like
/// `cubic_roots`.
pub fn eigenvalues_iterative(m: &[[f64; 3]; 3]) -> [Complex64; 3] {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    let ev = mat.complex_eigenvalues();
    let mut v: Vec<Complex64> = ev.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    v.sort_by(|x, y| {
        let real = |z: &Complex64| z.im.abs() <= EPS_EIG * (1.0 + z.norm());
        (real(y), x.re, -x.im)
            .partial_cmp(&(real(x), y.re, -y.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    [v[0], v[1], v[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    StableNode,
    StableFocusNode,
    /// Real eigenvalues of both signs. A source with only positive real
    /// eigenvalues also lands here.
    Saddle,
    UnstableFocusNode,
}

pub fn classify_stability(eigenvalues: &[Complex64; 3]) -> StabilityClass {
    let complex = eigenvalues.iter().any(|z| z.im.abs() > EPS_EIG);
    let stable = eigenvalues.iter().all(|z| z.re < 0.0);
    match (complex, stable) {
        (false, true) => StabilityClass::StableNode,
        (true, true) => StabilityClass::StableFocusNode,
        (false, false) => StabilityClass::Saddle,
        (true, false) => StabilityClass::UnstableFocusNode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub point: [f64; 3],
    pub residual: f64,
    pub jacobian: Jacobian,
    pub stability: StabilityClass,
}

impl Equilibrium {
    fn accept(p: &ForcedParams, point: [f64; 3]) -> Option<Self> {
        if point.iter().any(|v| !v.is_finite() || *v < ORTHANT_TOL) {
            return None;
        }
        let residual = reduced_residual(p, point);
        if residual >= RESIDUAL_TOL {
            return None;
        }
        let jacobian = jacobian_reduced(point, p);
        Some(Equilibrium {
            point,
            residual,
            jacobian,
            stability: classify_stability(&jacobian.eigenvalues),
        })
    }
}

/// The one-, two- and three-item equilibria; `None` where the closed form has
/// no real value in the physical orthant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcedEquilibria {
    pub one_s: Option<Equilibrium>,
    pub two_s: Option<Equilibrium>,
    pub three_s: Option<Equilibrium>,
}

fn sqrt_nonneg(x: f64) -> Option<f64> {
    (x >= 0.0).then(|| x.sqrt())
}

/// `S_a` of the one-item equilibrium `(S_a, 0, 0)`.
pub fn one_item_coordinate(p: &ForcedParams) -> f64 {
    let ForcedParams {
        gamma_p: gp,
        gamma_d: gd,
        delta,
        rho,
        ..
    } = *p;
    (-delta + rho + (4.0 * delta * rho * gd / gp + (delta - rho).powi(2)).sqrt()) / (2.0 * gd)
}

/// Candidates `(S_b, S_c, 0)` for both signs of the square root.
fn two_item_candidates(p: &ForcedParams) -> Vec<[f64; 3]> {
    let ForcedParams {
        gamma_p: gp,
        gamma_d: gd,
        delta,
        c,
        e,
        rho,
    } = *p;
    let den = gd * gd - c * e;
    let Some(root) = sqrt_nonneg((c - gd).powi(2) * (delta - rho).powi(2) + 4.0 * (gd / gp) * den * delta * rho) else {
        return Vec::new();
    };
    let g1 = root / (2.0 * den);
    [g1, -g1]
        .iter()
        .map(|&g| {
            let sb = (c - gd) * (delta - rho) / (2.0 * den) + g;
            let sc = (c * e + (e - 2.0 * gd) * gd) * (delta - rho) / (2.0 * gd * den) - (e / gd) * g;
            [sb, sc, 0.0]
        })
        .collect()
}

/// Candidates `(S_d, S_e, S_f)` for both signs of the square root.
fn three_item_candidates(p: &ForcedParams) -> Vec<[f64; 3]> {
    let ForcedParams {
        gamma_p: gp,
        gamma_d: gd,
        delta,
        c,
        e,
        rho,
    } = *p;
    let quad = c * c + e * e + gd * gd - e * gd - c * e - c * gd;
    let m1 = quad * (delta - rho) * gp;
    let m2 = 2.0 * gp * (c.powi(3) + e.powi(3) + gd.powi(3) - 3.0 * c * e * gd) * (c * e - gd * gd);
    let Some(root) = sqrt_nonneg(m1 * m1 - 2.0 * delta * rho * m2) else {
        return Vec::new();
    };
    [root, -root]
        .iter()
        .map(|&sq| {
            let sd = (c * e - gd * gd) * (-m1 + sq) / m2;
            let se = -(m1 * ((c * c - e * gd) - 2.0 * (gd * gd - c * e)) + (c * c - e * gd) * sq) / m2;
            let sf = -(m1 * ((e * e - c * gd) - 2.0 * (gd * gd - c * e)) + (e * e - c * gd) * sq) / m2;
            [sd, se, sf]
        })
        .collect()
}

pub fn forced_equilibria(p: &ForcedParams) -> ForcedEquilibria {
    let first = |cands: Vec<[f64; 3]>| cands.into_iter().find_map(|pt| Equilibrium::accept(p, pt));
    ForcedEquilibria {
        one_s: Equilibrium::accept(p, [one_item_coordinate(p), 0.0, 0.0]),
        two_s: first(two_item_candidates(p)),
        three_s: first(three_item_candidates(p)),
    }
}

/// Critical coupling strengths of the forced system.
///
/// * `delta_c1`: below it the expanding eigenvalue of 1S is positive.
/// * `delta_c2`: 3S becomes stable below it (2S loses stability).
/// * `delta_c3`: the 3S eigenvalues change from a complex pair (below) to real.
/// * `delta_c4`: Hopf point of the forced 3S focus; 0 if the driven unit is
///   in the coexistence regime, so the focus is stable down to `delta = 0`.
/// * `delta_c5`: upper end of 1S/2S bistability above `delta_c1`; only
///   searched outside the unique-correspondence region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalCouplings {
    pub delta_c1: Option<f64>,
    pub delta_c2: Option<f64>,
    pub delta_c3: Option<f64>,
    pub delta_c4: Option<f64>,
    pub delta_c5: Option<f64>,
    /// True for `gamma_d > gamma_p`, where each delta interval maps to a
    /// single stable equilibrium.
    pub unique_region: bool,
}

impl CriticalCouplings {
    /// `delta_c4 < delta_c3 < delta_c2 < delta_c1`, with `delta_c4 = 0`
    /// counting as below.
    pub fn ordered(&self) -> bool {
        match (self.delta_c1, self.delta_c2, self.delta_c3, self.delta_c4) {
            (Some(c1), Some(c2), Some(c3), Some(c4)) => c4 < c3 && c3 < c2 && c2 < c1,
            _ => false,
        }
    }
}

/// Depends only on `e` among the competition rates; `c` is accepted for a
/// uniform signature with `delta_c2`.
pub fn delta_c1(gamma_p: f64, gamma_d: f64, _c: f64, e: f64, rho: f64) -> Option<f64> {
    let k = e - gamma_d;
    let root = sqrt_nonneg(e * e - 4.0 * gamma_p * k)?;
    let v = rho * (1.0 - e / (2.0 * gamma_p * k) * (e - root));
    v.is_finite().then_some(v)
}

pub fn delta_c2(gamma_p: f64, gamma_d: f64, c: f64, e: f64, rho: f64) -> Option<f64> {
    let quad = c * c + e * e + gamma_d * gamma_d - e * gamma_d - c * e - c * gamma_d;
    let g2 = 2.0 * (e - gamma_d) * quad * gamma_p / (e * e - c * gamma_d).powi(2);
    let root = sqrt_nonneg(1.0 - 2.0 * g2)?;
    let v = rho * (1.0 - (1.0 - root) / g2);
    v.is_finite().then_some(v)
}

/// Bisection for a sign change of `f` in `[lo, hi]` where `f(lo)` and
/// `f(hi)` have opposite signs.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const SCAN_POINTS: usize = 400;

/// Scans `[lo, hi]` for the last sign change of `f` (values `None` skipped)
/// and refines it by bisection.
fn last_sign_change<F: Fn(f64) -> Option<f64>>(f: F, lo: f64, hi: f64) -> Option<f64> {
    let xs: Vec<f64> = (0..=SCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / SCAN_POINTS as f64).collect();
    let vals: Vec<Option<f64>> = xs.iter().map(|&x| f(x)).collect();
    for i in (0..SCAN_POINTS).rev() {
        if let (Some(a), Some(b)) = (vals[i], vals[i + 1]) {
            if (a < 0.0) != (b < 0.0) {
                let g = |x: f64| f(x).unwrap_or(a);
                return Some(bisect(g, xs[i], xs[i + 1], DELTA_TOL));
            }
        }
    }
    None
}

fn three_s_at(p: &ForcedParams, delta: f64) -> Option<Equilibrium> {
    forced_equilibria(&p.with_delta(delta)).three_s
}

pub fn critical_couplings(gamma_p: f64, gamma_d: f64, c: f64, e: f64, rho: f64) -> Result<CriticalCouplings> {
    let base = ForcedParams::new(gamma_p, gamma_d, 0.0, c, e, rho)?;
    let c1 = delta_c1(gamma_p, gamma_d, c, e, rho);
    let c2 = delta_c2(gamma_p, gamma_d, c, e, rho);

    let (c3, c4) = match c2 {
        Some(c2) if c2 > 0.0 => {
            let disc = |d: f64| three_s_at(&base, d).map(|eq| char_poly_discriminant(&eq.jacobian.matrix));
            let c3 = last_sign_change(disc, DELTA_TOL, c2 - DELTA_TOL);
            let c4 = c3.and_then(|c3| {
                let pair_re = |d: f64| {
                    three_s_at(&base, d)
                        .filter(|eq| char_poly_discriminant(&eq.jacobian.matrix) < 0.0)
                        .map(|eq| eq.jacobian.eigenvalues[1].re)
                };
                match pair_re(DELTA_TOL) {
                    Some(re) if re < 0.0 => Some(0.0),
                    Some(_) => last_sign_change(pair_re, DELTA_TOL, c3),
                    None => None,
                }
            });
            (c3, c4)
        }
        _ => (None, None),
    };

    let unique_region = gamma_d > gamma_p;
    let c5 = match (unique_region, c1) {
        (false, Some(c1)) => {
            let two_stable = |d: f64| {
                let stable = forced_equilibria(&base.with_delta(d))
                    .two_s
                    .is_some_and(|eq| eq.jacobian.eigenvalues.iter().all(|z| z.re < 0.0));
                Some(if stable { -1.0 } else { 1.0 })
            };
            if two_stable(c1) == Some(-1.0) {
                last_sign_change(two_stable, c1, c1 + 2.0 * rho)
            } else {
                None
            }
        }
        _ => None,
    };

    Ok(CriticalCouplings {
        delta_c1: c1,
        delta_c2: c2,
        delta_c3: c3,
        delta_c4: c4,
        delta_c5: c5,
        unique_region,
    })
}

/// One row of a parameter-plane scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub gamma_p: f64,
    pub gamma_d: f64,
    pub couplings: CriticalCouplings,
}

/// Critical couplings on an `n x n` grid spanning both ranges inclusively.
pub fn scan_critical_couplings(
    gamma_p: (f64, f64),
    gamma_d: (f64, f64),
    n: usize,
    c: f64,
    e: f64,
    rho: f64,
) -> Result<Vec<ScanRow>> {
    let at = |(lo, hi): (f64, f64), i: usize| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (gp, gd) = (at(gamma_p, i), at(gamma_d, j));
            rows.push(ScanRow {
                gamma_p: gp,
                gamma_d: gd,
                couplings: critical_couplings(gp, gd, c, e, rho)?,
            });
        }
    }
    Ok(rows)
}

/// CSV with columns `gamma_p,gamma_d,delta_c1,delta_c2,delta_c3,delta_c4`;
/// absent values are empty fields.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut out: W) -> Result<()> {
    writeln!(out, "gamma_p,gamma_d,delta_c1,delta_c2,delta_c3,delta_c4")?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10}"));
    for r in rows {
        let k = &r.couplings;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.gamma_p,
            r.gamma_d,
            fmt(k.delta_c1),
            fmt(k.delta_c2),
            fmt(k.delta_c3),
            fmt(k.delta_c4)
        )?;
    }
    Ok(())
}

/// Number of forced equilibria of the `n`-th unit of a chain and of a full
/// pacemaker cycle: `(n (n + 1) / 2, 3 n (n + 1) / 2)`.
pub fn proliferation_count(n: u64) -> (u64, u64) {
    let per_saddle = n * (n + 1) / 2;
    (per_saddle, 3 * per_saddle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Label {
    OneS,
    TwoS,
    ThreeS,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::OneS, Label::TwoS, Label::ThreeS];

    pub fn name(&self) -> &'static str {
        match self {
            Label::OneS => "1S",
            Label::TwoS => "2S",
            Label::ThreeS => "3S",
        }
    }
}

/// A unit may follow an upstream unit in equilibrium `from` with equilibrium
/// `to` only if `to` has at least as many dominating items.
pub fn transition_allowed(from: Label, to: Label) -> bool {
    from <= to
}

/// Labels reachable at each chain depth, starting from a single 1S at depth 1.
/// `levels[d - 1]` is the label multiset of depth `d`, one entry per branch.
pub fn enumerate_reachable_labels(n: usize) -> Vec<Vec<Label>> {
    let mut levels: Vec<Vec<Label>> = Vec::with_capacity(n);
    if n == 0 {
        return levels;
    }
    levels.push(vec![Label::OneS]);
    for _ in 1..n {
        let next = levels
            .last()
            .expect("non-empty")
            .iter()
            .flat_map(|&from| Label::ALL.into_iter().filter(move |&to| transition_allowed(from, to)))
            .collect();
        levels.push(next);
    }
    levels
}

/// Decay rates bounding the hierarchy regimes of a 9-item unit: below
/// `gamma_c` items within a group oscillate against each other, between
/// `gamma_c` and `gamma_g` only whole groups oscillate, above `gamma_g` the
/// unit rests at the coexistence point. `None` marks a boundary the bisection could not bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfGammas {
    pub gamma_c: Option<f64>,
    pub gamma_g: Option<f64>,
}

/// Tolerance in gamma for [`find_hopf_gamma_nine`].
pub const HOPF_GAMMA_TOL: f64 = 1e-2;

/// Length of each single-unit probe run.
const HOPF_PROBE_T: f64 = 3000.0;

fn hopf_probe(kinetics: &Kinetics, gamma: f64, sigma: f64) -> Result<(bool, bool)> {
    use crate::analysis::{classify_regime, hierarchy_level, Regime, Thresholds};
    use crate::integrate::{initial_condition_uniform, simulate_with, IntegratorConfig, Recorder, Scheme, Setup};
    use crate::topology::{CouplingMatrix, ParameterField, TopologyTag};

    let dt = IntegratorConfig::default_dt(kinetics.items());
    let scheme = if sigma > 0.0 { Scheme::EulerMaruyama } else { Scheme::Rk4 };
    let stride = (0.2 / dt).round() as u64;
    let config = IntegratorConfig::new(dt, HOPF_PROBE_T, stride, scheme, 1)?;
    let params = ParameterField::uniform(1, gamma)?.with_sigma(sigma)?;
    let setup = Setup::new(TopologyTag::Single, CouplingMatrix::empty(1), params, *kinetics, config);
    let recorder = Recorder::all().from_time(HOPF_PROBE_T / 2.0);
    let traj = simulate_with(&setup, &initial_condition_uniform(1, kinetics.items(), 1), recorder)?;
    let window = 0..traj.frames();
    let th = Thresholds::for_driven(kinetics.rho, gamma);
    let regime = classify_regime(&traj, 0, window.clone(), &th);
    let within = hierarchy_level(&traj, 0, window, &th).within_group;
    let oscillating = regime.label != Regime::Ce && regime.amplitude > th.amp;
    Ok((oscillating && within > th.amp, oscillating))
}

fn bisect_predicate<F>(pred: F, lo: f64, hi: f64) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<bool>,
{
    // The predicate holds at the low end and fails at the high end.
    for widen in [0.0, 0.2] {
        let (mut a, mut b) = ((lo - widen).max(0.05), hi + widen);
        if !pred(a)? || pred(b)? {
            continue;
        }
        while b - a > HOPF_GAMMA_TOL {
            let m = 0.5 * (a + b);
            if pred(m)? {
                a = m;
            } else {
                b = m;
            }
        }
        return Ok(Some(0.5 * (a + b)));
    }
    Ok(None)
}

/// Locates the hierarchy-collapse and global-coexistence decay rates of a
/// 9-item unit by bisection on long single-unit runs with noise `sigma_probe`.
/// `gamma_c` is where the within-group amplitude vanishes, `gamma_g` where
/// all oscillation stops. A bracket whose ends do not straddle the change is
/// widened once before the boundary is reported missing.
pub fn find_hopf_gamma_nine(kinetics: &Kinetics, sigma_probe: f64) -> Result<HopfGammas> {
    if kinetics.items() != 9 {
        return Err(Error::config("kinetics", "Hopf search needs 9-item kinetics"));
    }
    let gamma_c = bisect_predicate(|g| Ok(hopf_probe(kinetics, g, sigma_probe)?.0), 0.8, 1.5)?;
    let gamma_g = bisect_predicate(|g| Ok(hopf_probe(kinetics, g, sigma_probe)?.1), gamma_c.unwrap_or(0.8), 1.6)?;
    Ok(HopfGammas { gamma_c, gamma_g })
}
