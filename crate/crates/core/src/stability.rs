//! Trajectory-stability functionals.
//!
//! For a base trajectory `(X, V)` and one started at `(x + δ₁, v + δ₂)`,
//!
//! ```text
//! A_δ(t) = |δ|² + sup_{s≤t} |X_s − X_s^δ|² + ∫_0^t |V_s − V_s^δ|² ds
//! Q_δ(T) = ∬_Ω log(1 + (A_δ(T) − |δ|²) / |δ|²) dx dv
//! ```
//!
//! The supremum is taken over the integrator steps and the integral uses the
//! trapezoid rule on the same steps.

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::fit::{least_squares, LinearFit};
use crate::flow::{FlowParams, PhaseBox, PhaseState, Verlet};
use crate::force::ForceField;
use crate::rng;
use crate::sampling;
use crate::sum::{compensated_sum, CompensatedSum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Direction of the initial shift; the actual shift is `|δ| · direction`.
/// The joint norm of `(dx, dv)` must not exceed 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftDirection {
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
}

impl ShiftDirection {
    pub fn new(dx: Vec<f64>, dv: Vec<f64>) -> Result<Self> {
        if dx.len() != dv.len() || dx.is_empty() {
            return Err(Error::param("shift", "position and velocity parts must share a nonzero dimension"));
        }
        let norm = dx.iter().chain(&dv).map(|c| c * c).sum::<f64>().sqrt();
        if !(norm <= 1.0 + 1e-12) {
            return Err(Error::param("shift", format!("direction norm {norm} exceeds 1")));
        }
        Ok(Self { dx, dv })
    }

    /// `(e₁, e₁)/√2`: equal position and velocity shifts along the first axis.
    pub fn diagonal(dim: usize) -> Self {
        let mut dx = vec![0.0; dim];
        dx[0] = std::f64::consts::FRAC_1_SQRT_2;
        Self { dx: dx.clone(), dv: dx }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dx: vec![0.0; dim],
            dv: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dx.len()
    }

    pub fn pair(&self, base: PhaseState, delta_norm: f64) -> Result<PerturbedPair> {
        PerturbedPair::new(
            base,
            self.dx.iter().map(|c| c * delta_norm).collect(),
            self.dv.iter().map(|c| c * delta_norm).collect(),
            delta_norm,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedPair {
    pub base: PhaseState,
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
    pub delta_norm: f64,
}

impl PerturbedPair {
    pub fn new(base: PhaseState, dx: Vec<f64>, dv: Vec<f64>, delta_norm: f64) -> Result<Self> {
        if !(delta_norm > 0.0 && delta_norm.is_finite()) {
            return Err(Error::param("delta", format!("|δ| must be positive, got {delta_norm}")));
        }
        if dx.len() != base.dim() || dv.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: dx.len(),
            });
        }
        let norm = dx.iter().chain(&dv).map(|c| c * c).sum::<f64>().sqrt();
        if norm > delta_norm * (1.0 + 1e-12) {
            return Err(Error::param(
                "delta",
                format!("shift norm {norm} exceeds |δ| = {delta_norm}"),
            ));
        }
        Ok(Self {
            base,
            dx,
            dv,
            delta_norm,
        })
    }

    pub fn shifted(&self) -> PhaseState {
        PhaseState::new(
            self.base.x.iter().zip(&self.dx).map(|(a, b)| a + b).collect(),
            self.base.v.iter().zip(&self.dv).map(|(a, b)| a + b).collect(),
        )
    }
}

/// Running divergence statistics of one pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DivergenceTotals {
    pub sup_x_sq: f64,
    pub int_v_sq: f64,
}

impl DivergenceTotals {
    /// `log(1 + (sup + ∫) / |δ|²)`.
    pub fn log_integrand(&self, delta_norm: f64) -> f64 {
        ((self.sup_x_sq + self.int_v_sq) / (delta_norm * delta_norm)).ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceRecord {
    pub delta_norm: f64,
    pub times: Vec<f64>,
    pub sup_x_sq: Vec<f64>,
    pub int_v_sq: Vec<f64>,
    pub a_delta: Vec<f64>,
}

impl DivergenceRecord {
    pub fn final_totals(&self) -> DivergenceTotals {
        DivergenceTotals {
            sup_x_sq: *self.sup_x_sq.last().unwrap(),
            int_v_sq: *self.int_v_sq.last().unwrap(),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Integrates `base` and every `base + shift` in lockstep, updating the
/// running totals after each step. `observe` sees the step index and the
/// totals after that step (step 0 is the initial state).
fn track_shifts<F, O>(
    field: &F,
    base: &PhaseState,
    shifts: &[(Vec<f64>, Vec<f64>)],
    params: &FlowParams,
    mut observe: O,
) -> Result<Vec<DivergenceTotals>>
where
    F: ForceField + ?Sized,
    O: FnMut(usize, &[DivergenceTotals]),
{
    let h = params.h();
    let mut reference = Verlet::new(field, base.clone(), h)?;
    let mut others = shifts
        .iter()
        .map(|(dx, dv)| {
            let s = PhaseState::new(
                base.x.iter().zip(dx).map(|(a, b)| a + b).collect(),
                base.v.iter().zip(dv).map(|(a, b)| a + b).collect(),
            );
            Verlet::new(field, s, h)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut totals: Vec<DivergenceTotals> = others
        .iter()
        .map(|o| DivergenceTotals {
            sup_x_sq: sq_dist(&reference.state().x, &o.state().x),
            int_v_sq: 0.0,
        })
        .collect();
    let mut prev_v_sq: Vec<f64> = others
        .iter()
        .map(|o| sq_dist(&reference.state().v, &o.state().v))
        .collect();
    observe(0, &totals);
    for n in 1..=params.steps() {
        reference.step()?;
        for ((other, tot), prev) in others.iter_mut().zip(totals.iter_mut()).zip(prev_v_sq.iter_mut()) {
            other.step()?;
            let dx2 = sq_dist(&reference.state().x, &other.state().x);
            let dv2 = sq_dist(&reference.state().v, &other.state().v);
            tot.sup_x_sq = tot.sup_x_sq.max(dx2);
            tot.int_v_sq += 0.5 * h * (*prev + dv2);
            *prev = dv2;
        }
        observe(n, &totals);
    }
    Ok(totals)
}

/// Runs both members of `pair` over `[0, T]` and records `A_δ(t)` every
/// `record_stride` steps (the statistics themselves are updated every step).
pub fn divergence_record<F: ForceField + ?Sized>(field: &F, pair: &PerturbedPair, params: &FlowParams) -> Result<DivergenceRecord> {
    let delta_sq = pair.delta_norm * pair.delta_norm;
    let samples = params.steps() / params.record_stride() + 1;
    let mut rec = DivergenceRecord {
        delta_norm: pair.delta_norm,
        times: Vec::with_capacity(samples),
        sup_x_sq: Vec::with_capacity(samples),
        int_v_sq: Vec::with_capacity(samples),
        a_delta: Vec::with_capacity(samples),
    };
    let stride = params.record_stride();
    let h = params.h();
    track_shifts(field, &pair.base, &[(pair.dx.clone(), pair.dv.clone())], params, |n, t| {
        if n % stride == 0 {
            rec.times.push(n as f64 * h);
            rec.sup_x_sq.push(t[0].sup_x_sq);
            rec.int_v_sq.push(t[0].int_v_sq);
            rec.a_delta.push(delta_sq + t[0].sup_x_sq + t[0].int_v_sq);
        }
    })?;
    Ok(rec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Tensor-product midpoint rule; `count` must be a perfect `2d`-th power.
    Grid,
    /// Additive-recurrence quasi-random points with a seeded offset.
    LowDiscrepancy,
    Pseudorandom,
}

impl std::str::FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Sampling::Grid),
            "low-discrepancy" => Ok(Sampling::LowDiscrepancy),
            "pseudorandom" => Ok(Sampling::Pseudorandom),
            other => Err(Error::param(
                "sampling",
                format!("unknown sampling `{other}` (grid | low-discrepancy | pseudorandom)"),
            )),
        }
    }
}

impl Sampling {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sampling::Grid => "grid",
            Sampling::LowDiscrepancy => "low-discrepancy",
            Sampling::Pseudorandom => "pseudorandom",
        }
    }
}

/// Deterministic sampling plan for the initial-condition box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub omega: PhaseBox,
    pub sampling: Sampling,
    pub count: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    /// 512 low-discrepancy points in `[0,1]^{2d}`.
    pub fn default_for(dim: usize, seed: u64) -> Self {
        Self {
            omega: PhaseBox::unit(dim),
            sampling: Sampling::LowDiscrepancy,
            count: 512,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn points(&self) -> Result<Vec<PhaseState>> {
        if self.count == 0 {
            return Err(Error::param("count", "ensemble needs at least one member"));
        }
        let dims = 2 * self.dim();
        let unit = match self.sampling {
            Sampling::Grid => {
                let per_axis = sampling::exact_root(self.count, dims).ok_or_else(|| {
                    Error::param(
                        "count",
                        format!("grid sampling needs a perfect {dims}-th power, got {}", self.count),
                    )
                })?;
                sampling::grid_midpoints(per_axis, dims)
            }
            Sampling::LowDiscrepancy => {
                let mut rng = rng::stream(self.seed, rng::STREAM_ENSEMBLE);
                sampling::kronecker_points(self.count, dims, &mut rng)
            }
            Sampling::Pseudorandom => {
                let mut rng = rng::stream(self.seed, rng::STREAM_ENSEMBLE);
                sampling::uniform_points(self.count, dims, &mut rng)
            }
        };
        Ok(unit.iter().map(|u| self.omega.map_unit(u)).collect())
    }

    /// Quadrature weight of each member, `|Ω| / count`.
    pub fn weight(&self) -> f64 {
        self.omega.volume() / self.count as f64
    }
}

fn member_error(index: usize, state: &PhaseState, err: Error) -> Error {
    Error::EnsembleMember {
        index,
        x: state.x.clone(),
        v: state.v.clone(),
        source: Box::new(err),
    }
}

fn check_shift(field_dim: usize, ensemble: &EnsembleSpec, shift: &ShiftDirection) -> Result<()> {
    if ensemble.dim() != field_dim {
        return Err(Error::DimensionMismatch {
            expected: field_dim,
            got: ensemble.dim(),
        });
    }
    if shift.dim() != field_dim {
        return Err(Error::DimensionMismatch {
            expected: field_dim,
            got: shift.dim(),
        });
    }
    Ok(())
}

/// `Q_δ(T)` for each `|δ|` in `deltas`, sharing one base trajectory per member.
pub fn q_delta_many<F: ForceField + ?Sized>(
    field: &F,
    ensemble: &EnsembleSpec,
    shift: &ShiftDirection,
    deltas: &[f64],
    params: &FlowParams,
) -> Result<Vec<f64>> {
    check_shift(field.dim(), ensemble, shift)?;
    if let Some(&bad) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::param("delta", format!("|δ| must be positive, got {bad}")));
    }
    let points = ensemble.points()?;
    let shifts: Vec<(Vec<f64>, Vec<f64>)> = deltas
        .iter()
        .map(|&d| {
            (
                shift.dx.iter().map(|c| c * d).collect(),
                shift.dv.iter().map(|c| c * d).collect(),
            )
        })
        .collect();
    let per_member: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let totals = track_shifts(field, p, &shifts, params, |_, _| {}).map_err(|e| member_error(i, p, e))?;
            Ok(totals.iter().zip(deltas).map(|(t, &d)| t.log_integrand(d)).collect())
        })
        .collect::<Result<_>>()?;
    let weight = ensemble.weight();
    Ok((0..deltas.len())
        .map(|j| weight * compensated_sum(per_member.iter().map(|m| m[j])))
        .collect())
}

/// `Q_δ(T)` by ensemble quadrature over `Ω` (mean × |Ω|, or the midpoint
/// rule for grids). The horizon is `params.horizon()`.
pub fn q_delta<F: ForceField + ?Sized>(
    field: &F,
    ensemble: &EnsembleSpec,
    shift: &ShiftDirection,
    delta: f64,
    params: &FlowParams,
) -> Result<f64> {
    Ok(q_delta_many(field, ensemble, shift, &[delta], params)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub delta: f64,
    pub q: f64,
    /// `Q_δ / log(1/|δ|)`.
    pub q_over_log: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub samples: usize,
    pub h: f64,
    pub seed: u64,
}

/// Largest admissible `|δ|`.
pub const MAX_DELTA: f64 = 0.367_879_441_171_442_33; // 1/e

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::param("deltas", "need at least one value"));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("deltas", "must be strictly decreasing"));
    }
    if let Some(&bad) = deltas.iter().find(|d| !(**d > 0.0 && **d < MAX_DELTA)) {
        return Err(Error::param("deltas", format!("every |δ| must lie in (0, 1/e), got {bad}")));
    }
    Ok(())
}

/// `Q_δ(T)` over a decreasing list of `|δ|` with a shared ensemble and a
/// fixed shift direction.
pub fn q_scaling_study<F: ForceField + ?Sized>(
    field: &F,
    ensemble: &EnsembleSpec,
    shift: &ShiftDirection,
    deltas: &[f64],
    params: &FlowParams,
) -> Result<ScalingTable> {
    check_deltas(deltas)?;
    let qs = q_delta_many(field, ensemble, shift, deltas, params)?;
    let rows = deltas
        .iter()
        .zip(qs)
        .map(|(&delta, q)| ScalingRow {
            delta,
            q,
            q_over_log: q / (1.0 / delta).ln(),
        })
        .collect();
    Ok(ScalingTable {
        rows,
        samples: ensemble.count,
        h: params.h(),
        seed: ensemble.seed,
    })
}

/// Maximum relative change allowed between `Q` at `h` and at `h/2`.
pub const STEP_GATE_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateRow {
    pub delta: f64,
    pub q_h: f64,
    pub q_half: f64,
    pub rel_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepGate {
    pub rows: Vec<GateRow>,
    pub max_rel_change: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Recomputes every row of `table` at half the step and compares.
pub fn step_robustness<F: ForceField + ?Sized>(
    field: &F,
    ensemble: &EnsembleSpec,
    shift: &ShiftDirection,
    table: &ScalingTable,
    params: &FlowParams,
) -> Result<StepGate> {
    let deltas: Vec<f64> = table.rows.iter().map(|r| r.delta).collect();
    let halved = q_delta_many(field, ensemble, shift, &deltas, &params.halved())?;
    let rows: Vec<GateRow> = table
        .rows
        .iter()
        .zip(halved)
        .map(|(r, q_half)| {
            let scale = r.q.abs().max(q_half.abs());
            GateRow {
                delta: r.delta,
                q_h: r.q,
                q_half,
                rel_change: if scale > 0.0 { (r.q - q_half).abs() / scale } else { 0.0 },
            }
        })
        .collect();
    let max_rel_change = rows.iter().map(|r| r.rel_change).fold(0.0, f64::max);
    Ok(StepGate {
        rows,
        max_rel_change,
        threshold: STEP_GATE_THRESHOLD,
        passed: max_rel_change < STEP_GATE_THRESHOLD,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogExponentFit {
    /// Slope of `log Q` against `log log(1/|δ|)`.
    pub exponent: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    pub used: usize,
    /// `|δ|` values of rows left out (nonpositive `Q`, or `|δ| ≥ 1`).
    pub excluded: Vec<f64>,
}

/// Least-squares fit of `log Q = p log log(1/|δ|) + c`.
pub fn fit_log_exponent(rows: &[ScalingRow]) -> Result<LogExponentFit> {
    let (mut xs, mut ys, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        if r.q > 0.0 && r.delta > 0.0 && r.delta < 1.0 && r.q.is_finite() {
            xs.push((1.0 / r.delta).ln().ln());
            ys.push(r.q.ln());
        } else {
            excluded.push(r.delta);
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            usable: xs.len(),
            required: 3,
            excluded: excluded.len(),
        });
    }
    let LinearFit {
        slope,
        intercept,
        residual_norm,
        points,
    } = least_squares(&xs, &ys)?;
    Ok(LogExponentFit {
        exponent: slope,
        intercept,
        residual_norm,
        used: points,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CauchyRow {
    pub n_lo: u32,
    pub n_hi: u32,
    /// Ensemble mean of `sup_t |ΔX| + (∫|ΔV|²)^{1/2}`.
    pub distance: f64,
}

/// Distances between the flows of consecutive spectral truncations
/// `F_{n_i}`, `F_{n_{i+1}}`, all started from the same ensemble.
pub fn mollification_cauchy_study(
    field: &SpectralField,
    cutoffs: &[u32],
    ensemble: &EnsembleSpec,
    params: &FlowParams,
) -> Result<Vec<CauchyRow>> {
    if cutoffs.len() < 2 {
        return Err(Error::param("cutoffs", "need at least two cutoffs"));
    }
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("cutoffs", "must be strictly increasing"));
    }
    if ensemble.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: ensemble.dim(),
        });
    }
    let fields: Vec<SpectralField> = cutoffs.iter().map(|&n| field.mollify(n)).collect();
    let points = ensemble.points()?;
    let h = params.h();
    let pairs = cutoffs.len() - 1;
    let per_member: Vec<Vec<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let run = || -> Result<Vec<f64>> {
                let mut steppers = fields
                    .iter()
                    .map(|f| Verlet::new(f, p.clone(), h))
                    .collect::<Result<Vec<_>>>()?;
                let mut sup_x = vec![0.0f64; pairs];
                let mut int_v = vec![0.0f64; pairs];
                let mut prev_v = vec![0.0f64; pairs];
                for _ in 0..params.steps() {
                    for s in steppers.iter_mut() {
                        s.step()?;
                    }
                    for j in 0..pairs {
                        let (a, b) = (steppers[j].state(), steppers[j + 1].state());
                        sup_x[j] = sup_x[j].max(sq_dist(&a.x, &b.x).sqrt());
                        let dv2 = sq_dist(&a.v, &b.v);
                        int_v[j] += 0.5 * h * (prev_v[j] + dv2);
                        prev_v[j] = dv2;
                    }
                }
                Ok(sup_x.iter().zip(&int_v).map(|(s, i)| s + i.sqrt()).collect())
            };
            run().map_err(|e| member_error(i, p, e))
        })
        .collect::<Result<_>>()?;
    Ok((0..pairs)
        .map(|j| {
            let mut acc = CompensatedSum::new();
            acc.extend(per_member.iter().map(|m| m[j]));
            CauchyRow {
                n_lo: cutoffs[j],
                n_hi: cutoffs[j + 1],
                distance: acc.value() / points.len() as f64,
            }
        })
        .collect())
}
