//! Velocity-Verlet integration of `x' = v, v' = F(x)` and discrete
//! diagnostics of the flow map (volume preservation, reversibility,
//! semigroup property, domain containment).

use crate::error::{Error, Result};
use crate::force::ForceField;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// States with `|x|` or `|v|` above this are treated as a blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(x.len(), v.len(), "position and velocity dimensions differ");
        Self { x, v }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite())
    }

    /// Euclidean norm in `R^{2d}`.
    pub fn norm(&self) -> f64 {
        self.x.iter().chain(&self.v).map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Euclidean distance in `R^{2d}`.
    pub fn distance(&self, other: &PhaseState) -> f64 {
        self.x
            .iter()
            .chain(&self.v)
            .zip(other.x.iter().chain(&other.v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn reversed(&self) -> PhaseState {
        PhaseState::new(self.x.clone(), self.v.iter().map(|c| -c).collect())
    }

    fn escaped(&self) -> bool {
        let big = |s: &[f64]| s.iter().map(|c| c * c).sum::<f64>() > BLOWUP_LIMIT * BLOWUP_LIMIT;
        !self.is_finite() || big(&self.x) || big(&self.v)
    }
}

/// Step size, horizon and sampling stride. The step is shrunk on
/// construction so that the horizon is an integer number of steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowParams {
    h: f64,
    horizon: f64,
    record_stride: usize,
    steps: usize,
}

impl FlowParams {
    pub fn new(h: f64, horizon: f64, record_stride: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", format!("must be positive, got {h}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
        }
        if h > horizon {
            return Err(Error::param("h", format!("step {h} exceeds horizon {horizon}")));
        }
        if record_stride == 0 {
            return Err(Error::param("record_stride", "must be at least 1"));
        }
        let ratio = horizon / h;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= 1e-9 * nearest { nearest } else { ratio.ceil() } as usize;
        Ok(Self {
            h: horizon / steps as f64,
            horizon,
            record_stride,
            steps,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn record_stride(&self) -> usize {
        self.record_stride
    }

    /// Same horizon and stride, half the step.
    pub fn halved(&self) -> FlowParams {
        FlowParams {
            h: self.horizon / (2 * self.steps) as f64,
            steps: 2 * self.steps,
            ..*self
        }
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<FlowParams> {
        FlowParams::new(self.h, horizon, self.record_stride)
    }
}

/// `min(1e-3, 0.1 / k_max)` where `k_max = 2πK/L` is the largest angular
/// wavenumber in the field.
pub fn default_step(max_angular_wavenumber: f64) -> f64 {
    if max_angular_wavenumber > 0.0 {
        (0.1 / max_angular_wavenumber).min(1e-3)
    } else {
        1e-3
    }
}

/// In-place velocity-Verlet stepper. The force at the current position is
/// cached, so each step costs one force evaluation.
pub struct Verlet<'a, F: ForceField + ?Sized> {
    field: &'a F,
    h: f64,
    state: PhaseState,
    force: Vec<f64>,
    steps: usize,
}

impl<'a, F: ForceField + ?Sized> Verlet<'a, F> {
    pub fn new(field: &'a F, state: PhaseState, h: f64) -> Result<Self> {
        if field.dim() != state.dim() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                got: state.dim(),
            });
        }
        let mut force = vec![0.0; state.dim()];
        field.force_into(&state.x, &mut force);
        Ok(Self {
            field,
            h,
            state,
            force,
            steps: 0,
        })
    }

    pub fn state(&self) -> &PhaseState {
        &self.state
    }

    pub fn into_state(self) -> PhaseState {
        self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.h
    }

    /// Force at the current position.
    pub fn force(&self) -> &[f64] {
        &self.force
    }

    /// Advances one step without checking for blow-up.
    pub fn advance(&mut self) {
        let half = 0.5 * self.h;
        for ((x, v), f) in self.state.x.iter_mut().zip(self.state.v.iter_mut()).zip(&self.force) {
            *v += half * f;
            *x += self.h * *v;
        }
        self.field.force_into(&self.state.x, &mut self.force);
        for (v, f) in self.state.v.iter_mut().zip(&self.force) {
            *v += half * f;
        }
        self.steps += 1;
    }

    pub fn step(&mut self) -> Result<()> {
        self.advance();
        if self.state.escaped() {
            return Err(Error::BlowUp {
                time: self.time(),
                limit: BLOWUP_LIMIT,
            });
        }
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// One velocity-Verlet step:
/// `v½ = v + (h/2)F(x)`, `x' = x + h v½`, `v' = v½ + (h/2)F(x')`.
pub fn verlet_step<F: ForceField + ?Sized>(field: &F, state: &PhaseState, h: f64) -> PhaseState {
    let mut f = field.force(&state.x);
    let mut x = state.x.clone();
    let mut v = state.v.clone();
    for ((xi, vi), fi) in x.iter_mut().zip(v.iter_mut()).zip(&f) {
        *vi += 0.5 * h * fi;
        *xi += h * *vi;
    }
    field.force_into(&x, &mut f);
    for (vi, fi) in v.iter_mut().zip(&f) {
        *vi += 0.5 * h * fi;
    }
    PhaseState::new(x, v)
}

/// Advances `state` by `steps` Verlet steps of size `h`.
pub fn flow_steps<F: ForceField + ?Sized>(field: &F, state: &PhaseState, h: f64, steps: usize) -> Result<PhaseState> {
    let mut stepper = Verlet::new(field, state.clone(), h)?;
    stepper.run(steps)?;
    Ok(stepper.into_state())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    /// Whether every recorded state lies in `region` (closed box).
    pub fn stays_within(&self, region: &PhaseBox) -> bool {
        self.states.iter().all(|s| region.contains(s))
    }

    /// CSV with header `t,x_1..x_d,v_1..v_d`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.states.first().map_or(0, PhaseState::dim);
        let mut out = String::from("t");
        for j in 1..=d {
            write!(out, ",x_{j}").unwrap();
        }
        for j in 1..=d {
            write!(out, ",v_{j}").unwrap();
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t:.16e}").unwrap();
            for c in s.x.iter().chain(&s.v) {
                write!(out, ",{c:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Integrates from `state0` over `[0, T]`, recording every `record_stride` steps.
pub fn integrate<F: ForceField + ?Sized>(field: &F, state0: &PhaseState, params: &FlowParams) -> Result<Trajectory> {
    if !state0.is_finite() {
        return Err(Error::BlowUp {
            time: 0.0,
            limit: BLOWUP_LIMIT,
        });
    }
    let mut stepper = Verlet::new(field, state0.clone(), params.h())?;
    let samples = params.steps() / params.record_stride() + 1;
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples);
    times.push(0.0);
    states.push(state0.clone());
    for n in 1..=params.steps() {
        stepper.step()?;
        if n % params.record_stride() == 0 {
            times.push(n as f64 * params.h());
            states.push(stepper.state().clone());
        }
    }
    Ok(Trajectory { times, states })
}

/// `|v|²/2 + φ(x)`.
pub fn energy<F: ForceField + ?Sized>(field: &F, state: &PhaseState) -> Result<f64> {
    let phi = field.potential(&state.x).ok_or(Error::NotGradient)?;
    Ok(0.5 * state.v.iter().map(|c| c * c).sum::<f64>() + phi)
}

/// `1e-5 (1 + |state|)`: central-difference perturbation balancing
/// truncation against round-off.
pub fn default_fd_eps(state: &PhaseState) -> f64 {
    1e-5 * (1.0 + state.norm())
}

/// Determinant of the central-difference Jacobian of the one-step map.
pub fn jacobian_determinant<F: ForceField + ?Sized>(field: &F, state: &PhaseState, h: f64, fd_eps: f64) -> Result<f64> {
    if !(fd_eps > 0.0 && fd_eps.is_finite()) {
        return Err(Error::param("fd_eps", format!("must be positive, got {fd_eps}")));
    }
    let d = state.dim();
    if field.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: d,
        });
    }
    let n = 2 * d;
    let shifted = |i: usize, delta: f64| {
        let mut s = state.clone();
        if i < d {
            s.x[i] += delta;
        } else {
            s.v[i - d] += delta;
        }
        s
    };
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        let plus = shifted(col, fd_eps);
        let minus = shifted(col, -fd_eps);
        let a = verlet_step(field, &plus, h);
        let b = verlet_step(field, &minus, h);
        for (row, (pa, pb)) in a.x.iter().chain(&a.v).zip(b.x.iter().chain(&b.v)).enumerate() {
            jac[(row, col)] = (pa - pb) / (2.0 * fd_eps);
        }
    }
    Ok(jac.determinant())
}

fn steps_for(name: &'static str, t: f64, h: f64) -> Result<usize> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::param(name, format!("must be a nonnegative time, got {t}")));
    }
    let n = (t / h).round();
    if (n * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::param(name, format!("{t} is not a multiple of the step {h}")));
    }
    Ok(n as usize)
}

/// Distance in `R^{2d}` between `Φ_{t+s}(state)` and `Φ_s(Φ_t(state))`.
pub fn semigroup_residual<F: ForceField + ?Sized>(field: &F, state: &PhaseState, t: f64, s: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::param("h", format!("must be positive, got {h}")));
    }
    let nt = steps_for("t", t, h)?;
    let ns = steps_for("s", s, h)?;
    let direct = flow_steps(field, state, h, nt + ns)?;
    let composed = flow_steps(field, &flow_steps(field, state, h, nt)?, h, ns)?;
    Ok(direct.distance(&composed))
}

/// Axis-aligned box of initial conditions: positions × velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
}

impl PhaseBox {
    pub fn new(x_lo: Vec<f64>, x_hi: Vec<f64>, v_lo: Vec<f64>, v_hi: Vec<f64>) -> Result<Self> {
        let d = x_lo.len();
        if d == 0 || x_hi.len() != d || v_lo.len() != d || v_hi.len() != d {
            return Err(Error::param("omega", "corner vectors must share a nonzero dimension"));
        }
        let ordered = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).all(|(a, b)| a.is_finite() && b.is_finite() && a <= b);
        if !ordered(&x_lo, &x_hi) || !ordered(&v_lo, &v_hi) {
            return Err(Error::param("omega", "lower corner must not exceed upper corner"));
        }
        Ok(Self { x_lo, x_hi, v_lo, v_hi })
    }

    /// `[0,1]^{2d}`.
    pub fn unit(dim: usize) -> Self {
        Self {
            x_lo: vec![0.0; dim],
            x_hi: vec![1.0; dim],
            v_lo: vec![0.0; dim],
            v_hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.x_lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.x_lo
            .iter()
            .zip(&self.x_hi)
            .chain(self.v_lo.iter().zip(&self.v_hi))
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn contains(&self, s: &PhaseState) -> bool {
        let inside = |lo: &[f64], hi: &[f64], p: &[f64]| lo.iter().zip(hi).zip(p).all(|((a, b), c)| a <= c && c <= b);
        inside(&self.x_lo, &self.x_hi, &s.x) && inside(&self.v_lo, &self.v_hi, &s.v)
    }

    pub fn contains_box(&self, other: &PhaseBox) -> bool {
        let within = |lo: &[f64], hi: &[f64], olo: &[f64], ohi: &[f64]| {
            lo.iter().zip(olo).all(|(a, b)| a <= b) && hi.iter().zip(ohi).all(|(a, b)| a >= b)
        };
        within(&self.x_lo, &self.x_hi, &other.x_lo, &other.x_hi) && within(&self.v_lo, &self.v_hi, &other.v_lo, &other.v_hi)
    }

    /// Maps a point of `[0,1]^{2d}` (positions first) into the box.
    pub fn map_unit(&self, u: &[f64]) -> PhaseState {
        let d = self.dim();
        let x = (0..d).map(|j| self.x_lo[j] + u[j] * (self.x_hi[j] - self.x_lo[j])).collect();
        let v = (0..d).map(|j| self.v_lo[j] + u[d + j] * (self.v_hi[j] - self.v_lo[j])).collect();
        PhaseState::new(x, v)
    }

    /// Largest position extent over the axes.
    pub fn position_extent(&self) -> f64 {
        self.x_lo.iter().zip(&self.x_hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    fn max_speed(&self, axis: usize) -> f64 {
        self.v_lo[axis].abs().max(self.v_hi[axis].abs())
    }
}

/// Enlarges `omega` so that every trajectory started within distance 1 of
/// it stays inside over `[0, T]` when `|F| ≤ A`: velocities by `A T + 1`,
/// positions by `|v_j|_max T + A T²/2 + 1` on each axis.
pub fn inflate_domain(omega: &PhaseBox, sup_force: f64, horizon: f64) -> Result<PhaseBox> {
    if !(sup_force >= 0.0 && sup_force.is_finite()) {
        return Err(Error::param("A", format!("must be nonnegative, got {sup_force}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::param("T", format!("must be nonnegative, got {horizon}")));
    }
    let d = omega.dim();
    let dv = sup_force * horizon + 1.0;
    let mut out = omega.clone();
    for j in 0..d {
        let dx = omega.max_speed(j) * horizon + 0.5 * sup_force * horizon * horizon + 1.0;
        out.x_lo[j] -= dx;
        out.x_hi[j] += dx;
        out.v_lo[j] -= dv;
        out.v_hi[j] += dv;
    }
    Ok(out)
}

/// Torus side `4 · extent(Ω″)` where `Ω″` is `omega` inflated twice.
pub fn safe_period(omega: &PhaseBox, sup_force: f64, horizon: f64) -> Result<f64> {
    let outer = inflate_domain(&inflate_domain(omega, sup_force, horizon)?, sup_force, horizon)?;
    Ok(4.0 * outer.position_extent())
}
