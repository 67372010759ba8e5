//! One-dimensional oscillatory potential `φ(x) = x + h(Nx)/N^{1+α}` with
//! `F = −φ′`, and the turning-time separation it produces.
//!
//! Every built-in `h` is a finite sine series, so differences
//! `h(u) − h(u − b)` are evaluated through
//! `sin(mu) − sin(m(u−b)) = 2 cos(m(u − b/2)) sin(mb/2)` and never cancel.

use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::flow::{verlet_step, PhaseState, Verlet};
use crate::force::ForceField;
use crate::quadrature::{integrate, QuadOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// `h ≡ 0`, the ballistic control.
    Zero,
    Sine,
    /// `sin u + ½ sin 2u`.
    SineTwo,
    /// `(8/π²) Σ_{m odd ≤ 5} (−1)^{(m−1)/2} sin(mu)/m²`, a C² triangle wave.
    SmoothTriangle,
}

impl Shape {
    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::Zero => "zero",
            Shape::Sine => "sine",
            Shape::SineTwo => "sine-two",
            Shape::SmoothTriangle => "smooth-triangle",
        }
    }

    fn terms(&self) -> Vec<(f64, f64)> {
        match self {
            Shape::Zero => vec![],
            Shape::Sine => vec![(1.0, 1.0)],
            Shape::SineTwo => vec![(1.0, 1.0), (2.0, 0.5)],
            Shape::SmoothTriangle => [1.0f64, 3.0, 5.0]
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    (m, sign * 8.0 / (PI * PI * m * m))
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Shape::Zero),
            "sine" => Ok(Shape::Sine),
            "sine-two" => Ok(Shape::SineTwo),
            "smooth-triangle" => Ok(Shape::SmoothTriangle),
            other => Err(Error::param(
                "shape",
                format!("unknown shape `{other}` (zero | sine | sine-two | smooth-triangle)"),
            )),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// The oscillation profile `h = amplitude · shape`, 2π-periodic with
/// `h(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Oscillation {
    pub shape: Shape,
    pub amplitude: f64,
    #[serde(skip)]
    terms: Vec<(f64, f64)>,
}

impl Oscillation {
    pub fn new(shape: Shape, amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::param("amplitude", "must be finite"));
        }
        let terms = shape.terms().into_iter().map(|(m, c)| (m, c * amplitude)).collect();
        Ok(Self { shape, amplitude, terms })
    }

    pub fn zero() -> Self {
        Self::new(Shape::Zero, 0.0).unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn value(&self, u: f64) -> f64 {
        self.terms.iter().map(|&(m, c)| c * (m * u).sin()).sum()
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.terms.iter().map(|&(m, c)| c * m * (m * u).cos()).sum()
    }

    /// `(h(u) − h(u − b)) / b`, exact at `b = 0`.
    pub fn mean_slope(&self, u: f64, b: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(m, c)| c * m * (m * (u - 0.5 * b)).cos() * sinc(0.5 * m * b))
            .sum()
    }

    /// Upper bound for `sup |h|`.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|&(_, c)| c.abs()).sum()
    }

    /// Upper bound for `sup |h′|`.
    pub fn slope_bound(&self) -> f64 {
        self.terms.iter().map(|&(m, c)| (c * m).abs()).sum()
    }

    fn max_harmonic(&self) -> f64 {
        self.terms.iter().map(|&(m, _)| m).fold(0.0, f64::max)
    }
}

/// Number of grid points of the monotonicity certificate.
pub const MONOTONE_GRID: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillatoryPotential {
    pub n: u64,
    pub alpha: f64,
    pub h: Oscillation,
    /// `N^{−α}`.
    #[serde(skip)]
    scale: f64,
}

impl OscillatoryPotential {
    /// Validates the parameters and certifies `φ′ ≥ 1/2` on a fine grid.
    pub fn new(n: u64, alpha: f64, h: Oscillation) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "frequency must be at least 1"));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::param("alpha", format!("must lie in (0, 1/2), got {alpha}")));
        }
        let pot = Self {
            n,
            alpha,
            h,
            scale: (n as f64).powf(-alpha),
        };
        let min_slope = pot.min_slope_on_grid();
        if min_slope < 0.5 {
            return Err(Error::NotMonotone { n, min_slope });
        }
        Ok(pot)
    }

    pub fn frequency(&self) -> f64 {
        self.n as f64
    }

    /// `min φ′` over `MONOTONE_GRID` points of one period of `h(N·)`.
    pub fn min_slope_on_grid(&self) -> f64 {
        (0..MONOTONE_GRID)
            .map(|j| 1.0 + self.scale * self.h.derivative(TAU * j as f64 / MONOTONE_GRID as f64))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn phi(&self, x: f64) -> f64 {
        let n = self.frequency();
        x + self.scale * self.h.value(n * x) / n
    }

    pub fn dphi(&self, x: f64) -> f64 {
        1.0 + self.scale * self.h.derivative(self.frequency() * x)
    }

    /// `(φ(hi) − φ(lo)) / (hi − lo)`, evaluated without cancellation.
    pub fn mean_slope(&self, lo: f64, hi: f64) -> f64 {
        let n = self.frequency();
        1.0 + self.scale * self.h.mean_slope(n * hi, n * (hi - lo))
    }

    /// Solves `φ(x) = target` by bisection (`φ` is strictly increasing).
    pub fn inverse_phi(&self, target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::Bracket(format!("non-finite target {target}")));
        }
        if self.phi(target) == target {
            return Ok(target);
        }
        let spread = self.scale * self.h.sup_bound() / self.frequency() + 8.0 * f64::EPSILON * (1.0 + target.abs());
        let (mut lo, mut hi) = (target - spread, target + spread);
        if !(self.phi(lo) <= target && self.phi(hi) >= target) {
            return Err(Error::Bracket(format!("[{lo}, {hi}] does not bracket φ = {target}")));
        }
        loop {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            let value = self.phi(mid);
            if value == target {
                return Ok(mid);
            }
            if value < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = if (self.phi(lo) - target).abs() <= (self.phi(hi) - target).abs() {
            lo
        } else {
            hi
        };
        let residual = (self.phi(root) - target).abs();
        if residual > 1e-12 {
            return Err(Error::Bracket(format!("root residual {residual:e} above 1e-12")));
        }
        Ok(root)
    }

    /// `(v² + 2φ(x))`, the doubled energy.
    pub fn doubled_energy(&self, x: f64, v: f64) -> f64 {
        v * v + 2.0 * self.phi(x)
    }
}

impl ForceField for OscillatoryPotential {
    fn dim(&self) -> usize {
        1
    }
    fn force_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = -self.dphi(x[0]);
    }
    fn potential(&self, x: &[f64]) -> Option<f64> {
        Some(self.phi(x[0]))
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(1.0 + self.scale * self.h.slope_bound())
    }
}

/// Starting point with zero energy, `v² + 2φ(x) = 0`.
pub fn initial_position(pot: &OscillatoryPotential, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param("v", format!("speed must be positive, got {v}")));
    }
    pot.inverse_phi(-0.5 * v * v)
}

/// Travel time and its quadrature error estimate from `x` to the turning
/// point `y_t` where `φ(y_t)` equals the trajectory energy.
///
/// With `y = y_t − w²` the integrand `1/√(2(φ(y_t) − φ(y)))` becomes
/// `√(2/q(w))`, `q` the mean slope of `φ` over `[y, y_t]`, which is bounded
/// below by 1/2.
fn travel_time(pot: &OscillatoryPotential, x: f64, y_t: f64, tol: f64, refine: usize) -> Result<(f64, f64)> {
    let width = (y_t - x).sqrt();
    if !(width > 0.0) {
        return Err(Error::param("v", "trajectory has no room to decelerate"));
    }
    let phase = pot.h.max_harmonic() * pot.frequency() * width * width;
    let panels = ((phase / PI).ceil() as usize + 4).saturating_mul(refine.max(1));
    let opts = QuadOptions::with_tolerance(tol, tol).panels(panels);
    let res = integrate(|w| (2.0 / pot.mean_slope(y_t - w * w, y_t)).sqrt(), 0.0, width, opts)?;
    Ok((res.value, res.error))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TurningData {
    /// Speed at `x`.
    pub v: f64,
    pub x: f64,
    /// First time the velocity vanishes.
    pub t0: f64,
    /// Position where it vanishes.
    pub turning_point: f64,
    /// `N · turning_point`.
    pub eta: f64,
    pub quad_error: f64,
}

/// Default relative tolerance for a single turning time.
pub const TURNING_TOL: f64 = 1e-8;

/// Turning time of the zero-energy trajectory started with speed `v`.
/// Its turning point is `φ^{-1}(0) = 0`.
pub fn turning_time(pot: &OscillatoryPotential, v: f64, tol: f64) -> Result<TurningData> {
    turning_time_refined(pot, v, tol, 1)
}

/// As [`turning_time`] with `refine` times the initial quadrature panels.
pub fn turning_time_refined(pot: &OscillatoryPotential, v: f64, tol: f64, refine: usize) -> Result<TurningData> {
    let x = initial_position(pot, v)?;
    let (t0, quad_error) = travel_time(pot, x, 0.0, tol, refine)?;
    Ok(TurningData {
        v,
        x,
        t0,
        turning_point: 0.0,
        eta: 0.0,
        quad_error,
    })
}

/// Turning data of the trajectory from `(x, v + δ)`, `x` the zero-energy
/// start for speed `v`. Its turning point solves `2φ(x₀^δ) = δ² + 2vδ`.
pub fn shifted_turning(pot: &OscillatoryPotential, v: f64, delta: f64, tol: f64) -> Result<TurningData> {
    if !(delta > 0.0 && delta < v) {
        return Err(Error::param("delta", format!("need 0 < δ < v, got δ = {delta}, v = {v}")));
    }
    let x = initial_position(pot, v)?;
    let c_delta = delta * delta + 2.0 * v * delta;
    let y_t = pot.inverse_phi(0.5 * c_delta)?;
    let (t0, quad_error) = travel_time(pot, x, y_t, tol, 1)?;
    Ok(TurningData {
        v: v + delta,
        x,
        t0,
        turning_point: y_t,
        eta: pot.frequency() * y_t,
        quad_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AEta {
    pub eta: f64,
    pub value: f64,
    pub quad_error: f64,
    /// Bound on the neglected part of the integral beyond `−z_max`.
    pub tail_bound: f64,
}

/// Default truncation of the `A(η)` integral.
pub const Z_MAX: f64 = 1e4;

/// `A(η) = ∫_{−∞}^0 (h(z) − h(z+η) + h(η)) / (−2z)^{3/2} dz`.
///
/// With `z = −u²/2` the integrand becomes
/// `(S(η, u²/2) − S(0, u²/2)) / 2`, `S(u, b)` the mean slope of `h` over
/// `[u − b, u]`. The constant part of the tail past `u = √(2 z_max)` is
/// added exactly (`h(η)/U`); the zero-mean remainder is bounded by
/// `4π sup|h| U^{−3}` after one integration by parts.
pub fn a_eta(h: &Oscillation, eta: f64, z_max: f64, tol: f64) -> Result<AEta> {
    if !(z_max > 0.0 && z_max.is_finite()) {
        return Err(Error::param("z_max", format!("must be positive, got {z_max}")));
    }
    let u_max = (2.0 * z_max).sqrt();
    let tail_bound = 4.0 * PI * h.sup_bound() / (u_max * u_max * u_max);
    if tail_bound > tol {
        return Err(Error::TailTooLarge { bound: tail_bound, tolerance: tol });
    }
    if h.is_zero() || eta == 0.0 {
        return Ok(AEta {
            eta,
            value: 0.0,
            quad_error: 0.0,
            tail_bound,
        });
    }
    let phase = h.max_harmonic() * z_max;
    let panels = (phase / PI).ceil() as usize + 4;
    let budget = (tol - tail_bound).max(0.25 * tol);
    let res = integrate(
        |u| {
            let b = 0.5 * u * u;
            0.5 * (h.mean_slope(eta, b) - h.mean_slope(0.0, b))
        },
        0.0,
        u_max,
        QuadOptions::with_tolerance(budget, 1e-12).panels(panels),
    )?;
    Ok(AEta {
        eta,
        value: res.value + h.value(eta) / u_max,
        quad_error: res.error,
        tail_bound,
    })
}

/// Points of the `η` grid searched by [`certify_window`].
pub const WINDOW_GRID: usize = 256;
/// Minimum `|A|` inside the certified window.
pub const WINDOW_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowCertificate {
    pub threshold: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
    /// Midpoint of the window; the scan steers `η` here.
    pub anchor: f64,
    pub max_abs: f64,
    /// `(η, A(η))` on the search grid.
    pub grid: Vec<(f64, f64)>,
}

/// Evaluates `A` on `points` equispaced `η ∈ [0, 2π)` and returns the widest
/// run of consecutive grid points with `|A| ≥ threshold`.
pub fn certify_window(h: &Oscillation, threshold: f64, points: usize, z_max: f64) -> Result<WindowCertificate> {
    if points < 2 {
        return Err(Error::param("grid", "need at least two grid points"));
    }
    let grid: Vec<(f64, f64)> = (0..points)
        .into_par_iter()
        .map(|j| {
            let eta = TAU * j as f64 / points as f64;
            a_eta(h, eta, z_max, 1e-4).map(|a| (eta, a.value))
        })
        .collect::<Result<_>>()?;
    let max_abs = grid.iter().map(|g| g.1.abs()).fold(0.0, f64::max);
    let (mut best, mut start) = (None::<(usize, usize)>, None::<usize>);
    for j in 0..=points {
        let inside = j < points && grid[j].1.abs() >= threshold;
        match (inside, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| j - s > b - a + 1) {
                    best = Some((s, j - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (lo, hi) = best.ok_or(Error::NoAdmissibleWindow { threshold, max_abs })?;
    let (eta_lo, eta_hi) = (grid[lo].0, grid[hi].0);
    Ok(WindowCertificate {
        threshold,
        eta_lo,
        eta_hi,
        anchor: 0.5 * (eta_lo + eta_hi),
        max_abs,
        grid,
    })
}

/// How the initial speed is chosen for each `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedSelection {
    /// Steer the realized `η = N x₀^δ` to `anchor`, requiring it to stay in
    /// `[lo, hi]`.
    Pinned { anchor: f64, lo: f64, hi: f64 },
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSpec {
    pub h: Oscillation,
    pub alpha: f64,
    pub n_list: Vec<u64>,
    pub speed: SpeedSelection,
    /// Absolute and relative tolerance of every turning-time quadrature.
    pub quad_tol: f64,
    pub z_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub n: u64,
    pub delta: f64,
    pub v: f64,
    pub t0: f64,
    pub t0_delta: f64,
    pub separation: f64,
    pub eta: f64,
    pub a_eta: f64,
    /// `separation / N^{−(1/2+α)}`.
    pub ratio: f64,
    /// Sum of the two quadrature error estimates.
    pub quadrature_tol: f64,
}

/// Speed for which the shifted turning point lands at `η/N` when `δ = 1/N`:
/// `δ² + 2vδ = 2φ(η/N)`.
pub fn pinned_speed(pot: &OscillatoryPotential, eta: f64) -> f64 {
    let n = pot.frequency();
    n * pot.phi(eta / n) - 0.5 / n
}

fn scan_row(spec: &ScanSpec, n: u64) -> Result<ScanRow> {
    let pot = OscillatoryPotential::new(n, spec.alpha, spec.h.clone())?;
    let nf = n as f64;
    let delta = 1.0 / nf;
    let (v, shifted) = match spec.speed {
        SpeedSelection::Fixed(v) => (v, shifted_turning(&pot, v, delta, spec.quad_tol)?),
        SpeedSelection::Pinned { anchor, lo, hi } => {
            let mut v = pinned_speed(&pot, anchor);
            let mut attempt = 0;
            loop {
                let s = shifted_turning(&pot, v, delta, spec.quad_tol)?;
                if (lo..=hi).contains(&s.eta) {
                    break (v, s);
                }
                attempt += 1;
                if attempt == 3 {
                    return Err(Error::EtaEscaped { n, v, eta: s.eta, lo, hi });
                }
                // dη/dv ≈ N δ / φ′ ≈ 1
                v += anchor - s.eta;
            }
        }
    };
    let base = turning_time(&pot, v, spec.quad_tol)?;
    let a = if spec.h.is_zero() {
        0.0
    } else {
        a_eta(&spec.h, shifted.eta, spec.z_max, 1e-4)?.value
    };
    let separation = (shifted.t0 - base.t0).abs();
    Ok(ScanRow {
        n,
        delta,
        v,
        t0: base.t0,
        t0_delta: shifted.t0,
        separation,
        eta: shifted.eta,
        a_eta: a,
        ratio: separation * nf.powf(0.5 + spec.alpha),
        quadrature_tol: base.quad_error + shifted.quad_error,
    })
}

/// One row per `N` with `δ = 1/N`; rows are independent and run in parallel.
pub fn separation_scan(spec: &ScanSpec) -> Result<Vec<ScanRow>> {
    if spec.n_list.is_empty() {
        return Err(Error::param("n_list", "need at least one N"));
    }
    if !(spec.quad_tol > 0.0) {
        return Err(Error::param("quad_tol", "must be positive"));
    }
    spec.n_list.par_iter().map(|&n| scan_row(spec, n)).collect()
}

/// True when every row's quadrature error sits below 1% of the smallest
/// separation in the table.
pub fn quadrature_budget_ok(rows: &[ScanRow]) -> bool {
    let smallest = rows.iter().map(|r| r.separation).fold(f64::INFINITY, f64::min);
    rows.iter().all(|r| r.quadrature_tol <= 1e-2 * smallest)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    pub used: usize,
    pub excluded: Vec<u64>,
}

/// Least squares of `log separation` against `log N`.
pub fn fit_separation_exponent(rows: &[ScanRow]) -> Result<SeparationFit> {
    let (mut xs, mut ys, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        if r.separation > 0.0 && r.separation.is_finite() {
            xs.push((r.n as f64).ln());
            ys.push(r.separation.ln());
        } else {
            excluded.push(r.n);
        }
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientData {
            usable: xs.len(),
            required: 4,
            excluded: excluded.len(),
        });
    }
    let fit = least_squares(&xs, &ys)?;
    Ok(SeparationFit {
        slope: fit.slope,
        intercept: fit.intercept,
        residual_norm: fit.residual_norm,
        used: fit.points,
        excluded,
    })
}

/// Turning time found by integrating the flow itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventTurning {
    pub h: f64,
    pub t0: f64,
    /// `max_t |V² + 2φ(X) − (v² + 2φ(x))|` up to the turning step.
    pub energy_drift: f64,
    pub steps: usize,
}

/// Runs Verlet from `(x, v)` until `V` changes sign, then bisects on the
/// length of the final partial step.
pub fn event_turning_time(pot: &OscillatoryPotential, x: f64, v: f64, h: f64) -> Result<EventTurning> {
    if !(v > 0.0) {
        return Err(Error::param("v", "speed must be positive"));
    }
    let e0 = pot.doubled_energy(x, v);
    let max_steps = ((2.0 * v + 4.0) / h).ceil() as usize;
    let mut stepper = Verlet::new(pot, PhaseState::new(vec![x], vec![v]), h)?;
    let mut drift = 0.0f64;
    loop {
        let before = stepper.state().clone();
        stepper.step()?;
        let s = stepper.state();
        drift = drift.max((pot.doubled_energy(s.x[0], s.v[0]) - e0).abs());
        if s.v[0] <= 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if verlet_step(pot, &before, mid).v[0] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let steps = stepper.steps_taken();
            return Ok(EventTurning {
                h,
                t0: (steps - 1) as f64 * h + 0.5 * (lo + hi),
                energy_drift: drift,
                steps,
            });
        }
        if stepper.steps_taken() >= max_steps {
            return Err(Error::param("v", "velocity did not change sign within the step budget"));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PostTurnDiagnostic {
    pub horizon: f64,
    pub sup_separation: f64,
    pub turning_gap: f64,
}

/// Integrates `(x, v)` and `(x, v + δ)` to `T = 3v` and reports
/// `sup_t |X − X^δ|` next to `|t₀ − t₀^δ|`.
pub fn post_turn_diagnostic(pot: &OscillatoryPotential, v: f64, delta: f64, h: f64) -> Result<PostTurnDiagnostic> {
    let x = initial_position(pot, v)?;
    let horizon = 3.0 * v;
    let steps = (horizon / h).ceil() as usize;
    let mut a = Verlet::new(pot, PhaseState::new(vec![x], vec![v]), h)?;
    let mut b = Verlet::new(pot, PhaseState::new(vec![x], vec![v + delta]), h)?;
    let mut sup = 0.0f64;
    for _ in 0..steps {
        a.step()?;
        b.step()?;
        sup = sup.max((a.state().x[0] - b.state().x[0]).abs());
    }
    let t0 = turning_time(pot, v, TURNING_TOL)?.t0;
    let t0d = shifted_turning(pot, v, delta, TURNING_TOL)?.t0;
    Ok(PostTurnDiagnostic {
        horizon: steps as f64 * h,
        sup_separation: sup,
        turning_gap: (t0 - t0d).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: u64) -> OscillatoryPotential {
        OscillatoryPotential::new(n, 0.25, Oscillation::new(Shape::Sine, 1.0).unwrap()).unwrap()
    }

    fn ballistic() -> OscillatoryPotential {
        OscillatoryPotential::new(1, 0.25, Oscillation::zero()).unwrap()
    }

    #[test]
    fn shapes_vanish_at_zero_and_are_periodic() {
        for shape in [Shape::Zero, Shape::Sine, Shape::SineTwo, Shape::SmoothTriangle] {
            let h = Oscillation::new(shape, 1.3).unwrap();
            assert_eq!(h.value(0.0), 0.0);
            for j in 0..50 {
                let u = -7.0 + 0.31 * j as f64;
                assert!((h.value(u + TAU) - h.value(u)).abs() < 1e-12);
                let b = 0.01 * j as f64 + 1e-3;
                let direct = (h.value(u) - h.value(u - b)) / b;
                assert!((h.mean_slope(u, b) - direct).abs() < 1e-10);
            }
            assert_eq!(shape.as_str().parse::<Shape>().unwrap(), shape);
        }
    }

    #[test]
    fn smooth_triangle_is_near_a_triangle() {
        let h = Oscillation::new(Shape::SmoothTriangle, 1.0).unwrap();
        assert!((h.value(PI / 2.0) - 1.0).abs() < 0.1);
        assert!((h.value(-PI / 2.0) + 1.0).abs() < 0.1);
    }

    #[test]
    fn monotonicity_certificate() {
        let big = Oscillation::new(Shape::Sine, 4.0).unwrap();
        assert!(matches!(
            OscillatoryPotential::new(2, 0.25, big.clone()),
            Err(Error::NotMonotone { n: 2, .. })
        ));
        assert!(OscillatoryPotential::new(4096, 0.25, big).is_ok());
        assert!(OscillatoryPotential::new(8, 0.5, Oscillation::zero()).is_err());
        assert!(OscillatoryPotential::new(0, 0.25, Oscillation::zero()).is_err());
    }

    #[test]
    fn ballistic_initial_position_is_exact() {
        let pot = ballistic();
        for v in [0.1, 1.0, 2.5, 1e-6] {
            assert_eq!(initial_position(&pot, v).unwrap(), -0.5 * v * v);
        }
        assert!(initial_position(&pot, 0.0).is_err());
    }

    #[test]
    fn sine_initial_position() {
        let pot = sine(64);
        let x = initial_position(&pot, 1.0).unwrap();
        assert!((pot.phi(x) + 0.5).abs() <= 1e-12);
        assert!((x + 0.5).abs() <= 2.0 / 64f64.powf(1.25));
    }

    #[test]
    fn ballistic_turning_times() {
        let pot = ballistic();
        for v in [0.5, 1.0, 3.0] {
            let t = turning_time(&pot, v, 1e-10).unwrap();
            assert!((t.t0 - v).abs() <= 1e-14 * v);
            let delta = 0.01;
            let s = shifted_turning(&pot, v, delta, 1e-10).unwrap();
            assert!((s.turning_point - 0.5 * (delta * delta + 2.0 * v * delta)).abs() <= 1e-16);
            assert!((s.t0 - (v + delta)).abs() <= 1e-14 * v);
        }
    }

    #[test]
    fn turning_time_is_converged() {
        let pot = sine(256);
        let a = turning_time(&pot, 2.0, TURNING_TOL).unwrap();
        let b = turning_time_refined(&pot, 2.0, TURNING_TOL, 2).unwrap();
        assert!((a.t0 - b.t0).abs() <= 1e-8 * a.t0);
    }

    #[test]
    fn shift_continuity() {
        let pot = sine(64);
        let t = turning_time(&pot, 1.5, 1e-12).unwrap();
        let s = shifted_turning(&pot, 1.5, 1e-8, 1e-12).unwrap();
        assert!((t.t0 - s.t0).abs() <= 1e-6);
        assert!(shifted_turning(&pot, 1.5, 2.0, 1e-10).is_err());
    }

    fn sine_closed_form(eta: f64) -> f64 {
        0.5 * PI.sqrt() * (eta.sin() + eta.cos() - 1.0)
    }

    #[test]
    fn a_eta_matches_the_sine_closed_form() {
        let h = Oscillation::new(Shape::Sine, 1.0).unwrap();
        for j in 0..16 {
            let eta = TAU * j as f64 / 16.0;
            let a = a_eta(&h, eta, Z_MAX, 1e-5).unwrap();
            assert!(
                (a.value - sine_closed_form(eta)).abs() <= a.tail_bound + 1e-8,
                "eta = {eta}: {} vs {}",
                a.value,
                sine_closed_form(eta)
            );
        }
    }

    #[test]
    fn a_eta_trivial_cases() {
        let h = Oscillation::new(Shape::SineTwo, 1.0).unwrap();
        assert_eq!(a_eta(&h, 0.0, Z_MAX, 1e-4).unwrap().value, 0.0);
        assert_eq!(a_eta(&Oscillation::zero(), 1.3, Z_MAX, 1e-4).unwrap().value, 0.0);
        assert!(matches!(a_eta(&h, 1.0, 10.0, 1e-6), Err(Error::TailTooLarge { .. })));
        for eta in [0.4, 2.0, 5.1] {
            let a = a_eta(&h, eta, 2e3, 1e-3).unwrap().value;
            let b = a_eta(&h, eta + TAU, 2e3, 1e-3).unwrap().value;
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn sine_window_is_the_negative_lobe() {
        let h = Oscillation::new(Shape::Sine, 1.0).unwrap();
        let w = certify_window(&h, WINDOW_THRESHOLD, WINDOW_GRID, 2e3).unwrap();
        assert!((w.anchor - 1.25 * PI).abs() < 0.05, "{}", w.anchor);
        assert!(w.grid.iter().all(|&(e, a)| !(w.eta_lo..=w.eta_hi).contains(&e) || a <= -0.1));
        assert!(matches!(
            certify_window(&Oscillation::zero(), 0.1, 16, 2e3),
            Err(Error::NoAdmissibleWindow { .. })
        ));
    }

    #[test]
    fn pinned_speed_lands_on_the_anchor() {
        let pot = sine(512);
        let anchor = 1.25 * PI;
        let v = pinned_speed(&pot, anchor);
        let s = shifted_turning(&pot, v, 1.0 / 512.0, 1e-10).unwrap();
        assert!((s.eta - anchor).abs() < 1e-9);
    }

    #[test]
    fn ballistic_scan_has_slope_minus_one() {
        let spec = ScanSpec {
            h: Oscillation::zero(),
            alpha: 0.25,
            n_list: vec![64, 128, 256, 512, 1024],
            speed: SpeedSelection::Fixed(2.0),
            quad_tol: 1e-10,
            z_max: Z_MAX,
        };
        let rows = separation_scan(&spec).unwrap();
        for r in &rows {
            assert!((r.separation - r.delta).abs() <= 1e-12);
        }
        let fit = fit_separation_exponent(&rows).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-10);
        assert!(fit_separation_exponent(&rows[..1]).is_err());
    }

    #[test]
    fn power_law_table_fit() {
        let rows: Vec<ScanRow> = [64u64, 128, 256, 512]
            .iter()
            .map(|&n| ScanRow {
                n,
                delta: 1.0 / n as f64,
                v: 1.0,
                t0: 1.0,
                t0_delta: 1.0,
                separation: (n as f64).powf(-0.75),
                eta: 0.0,
                a_eta: 0.0,
                ratio: 1.0,
                quadrature_tol: 0.0,
            })
            .collect();
        let fit = fit_separation_exponent(&rows).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-10);
    }

    #[test]
    fn separation_matches_the_a_scale() {
        let h = Oscillation::new(Shape::Sine, 1.0).unwrap();
        let anchor = 1.25 * PI;
        let spec = ScanSpec {
            h,
            alpha: 0.25,
            n_list: vec![256],
            speed: SpeedSelection::Pinned {
                anchor,
                lo: anchor - 1.0,
                hi: anchor + 1.0,
            },
            quad_tol: 1e-10,
            z_max: Z_MAX,
        };
        let row = separation_scan(&spec).unwrap()[0];
        let scaled = row.ratio / row.a_eta.abs();
        assert!((0.2..=5.0).contains(&scaled), "{scaled}");
    }

    #[test]
    fn event_detection_ballistic() {
        let pot = ballistic();
        let ev = event_turning_time(&pot, -0.5, 1.0, 1e-3).unwrap();
        assert!((ev.t0 - 1.0).abs() < 1e-12);
        assert!(ev.energy_drift < 1e-12);
    }

    #[test]
    fn post_turn_diagnostic_runs() {
        let pot = sine(64);
        let d = post_turn_diagnostic(&pot, 2.0, 1.0 / 64.0, 1e-4).unwrap();
        assert!(d.sup_separation > 0.0 && d.turning_gap > 0.0);
        assert!((d.horizon - 6.0).abs() < 1e-3);
    }
}
