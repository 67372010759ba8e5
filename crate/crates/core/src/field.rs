//! Band-limited periodic force fields given by finite Fourier sums.
//!
//! A field on the torus `[0, L)^d` is stored as a table of wavevectors
//! `k ∈ Z^d` and complex vector coefficients `α(k) ∈ C^d`:
//!
//! ```text
//! F(x) = Σ_k α(k) exp(2πi k·x / L)
//! ```
//!
//! Tables are Hermitian (`α(-k) = conj α(k)`), so the sum is real. Gradient
//! fields additionally carry the scalar potential coefficients `φ̂(k)` with
//! `α(k) = -i (2π/L) k φ̂(k)`, i.e. `F = -∇φ`.

use crate::error::{Error, Result};
use crate::force::ForceField;
use crate::rng;
use crate::sum::CompensatedSum;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::cmp::Ordering;
use std::f64::consts::PI;

/// Default extra spectral decay on top of `s + d/2`.
pub const DEFAULT_DECAY_MARGIN: f64 = 0.05;

/// Relative tolerance used when validating symmetry and gradient structure
/// of tables read from outside.
const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub k: Vec<i32>,
    pub coeff: Vec<Complex64>,
}

impl Mode {
    pub fn new(k: Vec<i32>, coeff: Vec<Complex64>) -> Self {
        Self { k, coeff }
    }

    /// Euclidean norm of the coefficient vector in `C^d`.
    pub fn magnitude(&self) -> f64 {
        self.coeff.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    fn is_zero_wavevector(&self) -> bool {
        self.k.iter().all(|&c| c == 0)
    }

    fn norm_sqr_k(&self) -> i64 {
        self.k.iter().map(|&c| c as i64 * c as i64).sum()
    }
}

/// Requested regularity of a synthesized field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityTarget {
    /// Sobolev exponent the field must belong to.
    pub s: f64,
    /// Extra decay `ε > 0` beyond the borderline rate.
    pub decay_margin: f64,
    /// Largest wavenumber per axis, `|k|_∞ ≤ cutoff`.
    pub cutoff: u32,
    /// Target value of the sup-norm certificate `Σ|α(k)|`.
    pub amplitude: f64,
}

impl RegularityTarget {
    pub fn new(s: f64, cutoff: u32, amplitude: f64) -> Self {
        Self {
            s,
            decay_margin: DEFAULT_DECAY_MARGIN,
            cutoff,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::param("s", format!("must be positive, got {}", self.s)));
        }
        if !(self.decay_margin > 0.0 && self.decay_margin.is_finite()) {
            return Err(Error::param(
                "decay_margin",
                format!("must be positive, got {}", self.decay_margin),
            ));
        }
        if self.cutoff < 1 {
            return Err(Error::param("cutoff", "must be at least 1 (no mode fits otherwise)"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(
                "amplitude",
                format!("must be positive, got {}", self.amplitude),
            ));
        }
        Ok(())
    }

    /// Exponent `p` of the magnitude law `|α(k)| ∝ |2πk/L|^{-p}`.
    pub fn decay_exponent(&self, dim: usize) -> f64 {
        self.s + dim as f64 / 2.0 + self.decay_margin
    }
}

/// Half-space representative used for evaluation: `F = α(0) + Σ 2 Re(α(k) e^{iθ})`.
#[derive(Clone, Debug, Default)]
struct EvalTable {
    max_axis: usize,
    constant: Vec<f64>,
    ks: Vec<i32>,
    coeffs: Vec<Complex64>,
    potential: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct SpectralField {
    dim: usize,
    period: f64,
    modes: Vec<Mode>,
    potential: Option<Vec<Complex64>>,
    sup_bound: f64,
    table: EvalTable,
}

thread_local! {
    static PHASES: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

fn lex_cmp(a: &[i32], b: &[i32]) -> Ordering {
    a.cmp(b)
}

fn is_positive_half(k: &[i32]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

fn check_dim(dim: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::param("dim", format!("must be 1, 2 or 3, got {dim}")));
    }
    Ok(())
}

fn check_period(period: f64) -> Result<()> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::param("period", format!("must be positive, got {period}")));
    }
    Ok(())
}

impl SpectralField {
    /// Builds a field from a mode table, validating Hermitian symmetry and,
    /// when `is_gradient` is set, the potential structure.
    pub fn from_modes(dim: usize, period: f64, mut modes: Vec<Mode>, is_gradient: bool) -> Result<Self> {
        check_dim(dim)?;
        check_period(period)?;
        for m in &modes {
            if m.k.len() != dim || m.coeff.len() != dim {
                return Err(Error::InvalidField(format!(
                    "mode {:?} has {} coefficients for dimension {dim}",
                    m.k,
                    m.coeff.len()
                )));
            }
            if m.coeff.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::InvalidField(format!("mode {:?} has a non-finite coefficient", m.k)));
            }
        }
        modes.sort_by(|a, b| lex_cmp(&a.k, &b.k));
        if let Some(w) = modes.windows(2).find(|w| w[0].k == w[1].k) {
            return Err(Error::InvalidField(format!("duplicate wavevector {:?}", w[0].k)));
        }
        let scale = modes.iter().map(Mode::magnitude).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let tol = STRUCTURE_TOL * scale;

        for m in &modes {
            let neg: Vec<i32> = m.k.iter().map(|c| -c).collect();
            let partner = modes
                .binary_search_by(|p| lex_cmp(&p.k, &neg))
                .map(|i| &modes[i])
                .map_err(|_| Error::InvalidField(format!("wavevector {:?} has no partner {:?}", m.k, neg)))?;
            for (a, b) in m.coeff.iter().zip(&partner.coeff) {
                if (a - b.conj()).norm() > tol {
                    return Err(Error::InvalidField(format!(
                        "Hermitian symmetry fails at k = {:?}",
                        m.k
                    )));
                }
            }
        }

        let potential = if is_gradient {
            let wave = 2.0 * PI / period;
            let mut phi = Vec::with_capacity(modes.len());
            for m in &modes {
                if m.is_zero_wavevector() {
                    if m.magnitude() > tol {
                        return Err(Error::InvalidField("gradient field with nonzero mean force".into()));
                    }
                    phi.push(Complex64::new(0.0, 0.0));
                    continue;
                }
                let (j, kj) = m
                    .k
                    .iter()
                    .enumerate()
                    .max_by_key(|(_, c)| c.unsigned_abs())
                    .map(|(j, &c)| (j, c))
                    .unwrap();
                // α_j = -i w k_j φ̂  =>  φ̂ = i α_j / (w k_j)
                let p = Complex64::i() * m.coeff[j] / (wave * kj as f64);
                for (c, &kc) in m.coeff.iter().zip(&m.k) {
                    let expected = -Complex64::i() * wave * kc as f64 * p;
                    if (c - expected).norm() > tol {
                        return Err(Error::InvalidField(format!(
                            "coefficient at k = {:?} is not parallel to k",
                            m.k
                        )));
                    }
                }
                phi.push(p);
            }
            Some(phi)
        } else {
            None
        };

        Ok(Self::assemble(dim, period, modes, potential))
    }

    fn assemble(dim: usize, period: f64, modes: Vec<Mode>, potential: Option<Vec<Complex64>>) -> Self {
        let mut bound = CompensatedSum::new();
        for m in &modes {
            bound.add(m.magnitude());
        }
        let mut table = EvalTable {
            max_axis: 0,
            constant: vec![0.0; dim],
            ..EvalTable::default()
        };
        for (i, m) in modes.iter().enumerate() {
            table.max_axis = table
                .max_axis
                .max(m.k.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0));
            if m.is_zero_wavevector() {
                for (c, a) in table.constant.iter_mut().zip(&m.coeff) {
                    *c = a.re;
                }
            } else if is_positive_half(&m.k) {
                table.ks.extend_from_slice(&m.k);
                table.coeffs.extend(m.coeff.iter().map(|c| 2.0 * c));
                if let Some(phi) = &potential {
                    table.potential.push(2.0 * phi[i]);
                }
            }
        }
        Self {
            dim,
            period,
            modes,
            potential,
            sup_bound: bound.value(),
            table,
        }
    }

    /// The zero field (empty table).
    pub fn zero(dim: usize, period: f64, is_gradient: bool) -> Result<Self> {
        Self::from_modes(dim, period, Vec::new(), is_gradient)
    }

    /// Builds a gradient field from scalar potential coefficients `φ̂(k)`.
    /// The table must be Hermitian and must not contain `k = 0`.
    pub fn from_potential(dim: usize, period: f64, potential: Vec<(Vec<i32>, Complex64)>) -> Result<Self> {
        let wave = 2.0 * PI / period;
        let modes = potential
            .into_iter()
            .map(|(k, p)| {
                let coeff = k.iter().map(|&kc| -Complex64::i() * wave * kc as f64 * p).collect();
                Mode::new(k, coeff)
            })
            .collect();
        Self::from_modes(dim, period, modes, true)
    }

    /// Synthesizes a field with `|α(k)| = c |2πk/L|^{-(s + d/2 + ε)}` for every
    /// `0 < |k|_∞ ≤ K`, i.i.d. uniform phases drawn from `seed`, and `c`
    /// chosen so that `Σ|α(k)|` equals the target amplitude.
    ///
    /// Gradient fields draw the phase of `φ̂(k)` and derive `α(k)` from it;
    /// other fields in `d > 1` also draw a random real unit direction.
    pub fn synthesize(target: &RegularityTarget, dim: usize, period: f64, seed: u64, gradient: bool) -> Result<Self> {
        target.validate()?;
        check_dim(dim)?;
        check_period(period)?;
        let mut rng = rng::stream(seed, rng::STREAM_FIELD);
        let cutoff = target.cutoff as i32;
        let wave = 2.0 * PI / period;
        let p = target.decay_exponent(dim);

        // Positive half-space wavevectors in lexicographic order.
        let side = (2 * cutoff + 1) as usize;
        let mut half = Vec::new();
        for idx in 0..side.pow(dim as u32) {
            let mut rem = idx;
            let mut k = vec![0i32; dim];
            for axis in (0..dim).rev() {
                k[axis] = (rem % side) as i32 - cutoff;
                rem /= side;
            }
            if is_positive_half(&k) {
                half.push(k);
            }
        }

        struct Draw {
            k: Vec<i32>,
            raw: f64,
            phase: f64,
            direction: Vec<f64>,
        }
        let draws: Vec<Draw> = half
            .into_iter()
            .map(|k| {
                let knorm = wave * (k.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
                let phase = 2.0 * PI * rng.random::<f64>();
                let direction = if gradient || dim == 1 {
                    vec![1.0]
                } else {
                    loop {
                        let u: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                        let r2: f64 = u.iter().map(|c| c * c).sum();
                        if r2 > 1e-6 && r2 <= 1.0 {
                            let r = r2.sqrt();
                            break u.into_iter().map(|c| c / r).collect();
                        }
                    }
                };
                Draw {
                    k,
                    raw: knorm.powf(-p),
                    phase,
                    direction,
                }
            })
            .collect();

        let mut total = CompensatedSum::new();
        for d in &draws {
            total.add(2.0 * d.raw);
        }
        let scale = target.amplitude / total.value();

        let mut modes = Vec::with_capacity(2 * draws.len());
        for d in &draws {
            let magnitude = scale * d.raw;
            let unit_phase = Complex64::from_polar(1.0, d.phase);
            let coeff: Vec<Complex64> = if gradient {
                let knorm = wave * (d.k.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
                let phi = unit_phase * (magnitude / knorm);
                d.k.iter().map(|&kc| -Complex64::i() * wave * kc as f64 * phi).collect()
            } else {
                d.direction.iter().map(|u| unit_phase * (magnitude * u)).collect()
            };
            let neg_k: Vec<i32> = d.k.iter().map(|c| -c).collect();
            let neg_coeff = coeff.iter().map(|c| c.conj()).collect();
            modes.push(Mode::new(d.k.clone(), coeff));
            modes.push(Mode::new(neg_k, neg_coeff));
        }
        modes.sort_by(|a, b| lex_cmp(&a.k, &b.k));

        let potential = gradient.then(|| {
            modes
                .iter()
                .map(|m| {
                    let (j, kj) = m
                        .k
                        .iter()
                        .enumerate()
                        .max_by_key(|(_, c)| c.unsigned_abs())
                        .map(|(j, &c)| (j, c))
                        .unwrap();
                    Complex64::i() * m.coeff[j] / (wave * kj as f64)
                })
                .collect()
        });
        Ok(Self::assemble(dim, period, modes, potential))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_gradient(&self) -> bool {
        self.potential.is_some()
    }

    /// Potential coefficients aligned with [`modes`](Self::modes).
    pub fn potential_coefficients(&self) -> Option<&[Complex64]> {
        self.potential.as_deref()
    }

    /// `Σ_k |α(k)|`, an upper bound for `sup |F|`.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// Largest Euclidean wavenumber `|k|` present in the table.
    pub fn max_wavenumber(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| (m.norm_sqr_k() as f64).sqrt())
            .fold(0.0, f64::max)
    }

    /// `2π max|k| / L`.
    pub fn max_angular_wavenumber(&self) -> f64 {
        std::f64::consts::TAU * self.max_wavenumber() / self.period
    }

    /// Largest `|k_j|` over all modes and axes.
    pub fn max_axis_wavenumber(&self) -> usize {
        self.table.max_axis
    }

    /// Fills `phases` with `exp(2πi m x_j / L)` for `m = 0..=max_axis` on each axis.
    fn axis_phases(&self, x: &[f64], phases: &mut Vec<Complex64>) {
        let stride = self.table.max_axis + 1;
        phases.clear();
        phases.resize(self.dim * stride, Complex64::new(1.0, 0.0));
        for (j, &xj) in x.iter().enumerate() {
            let u = xj / self.period;
            let frac = u - u.floor();
            let (s, c) = (2.0 * PI * frac).sin_cos();
            let z = Complex64::new(c, s);
            let row = &mut phases[j * stride..(j + 1) * stride];
            for m in 1..stride {
                // Re-anchor periodically so the recurrence error stays at a few ulps.
                row[m] = if m % 64 == 0 {
                    let (s, c) = (2.0 * PI * frac * m as f64).sin_cos();
                    Complex64::new(c, s)
                } else {
                    row[m - 1] * z
                };
            }
        }
    }

    fn mode_phase(&self, k: &[i32], phases: &[Complex64]) -> Complex64 {
        let stride = self.table.max_axis + 1;
        let mut acc = Complex64::new(1.0, 0.0);
        for (j, &kj) in k.iter().enumerate() {
            let p = phases[j * stride + kj.unsigned_abs() as usize];
            acc *= if kj < 0 { p.conj() } else { p };
        }
        acc
    }

    /// Evaluates `F(x)` into `out`.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        out.copy_from_slice(&self.table.constant);
        if self.table.potential.is_empty() && self.table.coeffs.is_empty() {
            return;
        }
        PHASES.with(|cell| {
            let mut phases = cell.borrow_mut();
            self.axis_phases(x, &mut phases);
            let d = self.dim;
            for (k, coeff) in self.table.ks.chunks_exact(d).zip(self.table.coeffs.chunks_exact(d)) {
                let e = self.mode_phase(k, &phases);
                for (o, a) in out.iter_mut().zip(coeff) {
                    *o += a.re * e.re - a.im * e.im;
                }
            }
        });
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.evaluate_into(x, &mut out);
        out
    }

    /// The complete complex mode sum over every stored wavevector, evaluated
    /// mode by mode. Its imaginary part is the round-off residue that
    /// [`evaluate`](Self::evaluate) discards.
    pub fn mode_sum(&self, x: &[f64]) -> Vec<Complex64> {
        let wave = 2.0 * PI / self.period;
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for m in &self.modes {
            let theta: f64 = m.k.iter().zip(x).map(|(&k, &xj)| wave * k as f64 * xj).sum();
            let e = Complex64::from_polar(1.0, theta);
            for (o, a) in out.iter_mut().zip(&m.coeff) {
                *o += a * e;
            }
        }
        out
    }

    /// `φ(x)` for gradient fields (`F = -∇φ`, zero-mean potential).
    pub fn evaluate_potential(&self, x: &[f64]) -> Result<f64> {
        if self.potential.is_none() {
            return Err(Error::NotGradient);
        }
        if self.table.potential.is_empty() {
            return Ok(0.0);
        }
        Ok(PHASES.with(|cell| {
            let mut phases = cell.borrow_mut();
            self.axis_phases(x, &mut phases);
            let mut acc = 0.0;
            for (k, p) in self.table.ks.chunks_exact(self.dim).zip(&self.table.potential) {
                let e = self.mode_phase(k, &phases);
                acc += p.re * e.re - p.im * e.im;
            }
            acc
        }))
    }

    /// `( Σ_{k≠0} |2πk/L|^{2s} |α(k)|² )^{1/2}`.
    pub fn sobolev_seminorm(&self, s: f64) -> f64 {
        let wave = 2.0 * PI / self.period;
        let mut acc = CompensatedSum::new();
        for m in &self.modes {
            if m.is_zero_wavevector() {
                continue;
            }
            let knorm = wave * (m.norm_sqr_k() as f64).sqrt();
            acc.add(knorm.powf(2.0 * s) * m.coeff.iter().map(|c| c.norm_sqr()).sum::<f64>());
        }
        acc.value().max(0.0).sqrt()
    }

    /// Sharp spectral truncation: keeps the modes with `|k| ≤ n`.
    pub fn mollify(&self, n: u32) -> SpectralField {
        let limit = n as i64 * n as i64;
        let mut modes = Vec::new();
        let mut potential = self.potential.as_ref().map(|_| Vec::new());
        for (i, m) in self.modes.iter().enumerate() {
            if m.norm_sqr_k() <= limit {
                modes.push(m.clone());
                if let (Some(out), Some(src)) = (potential.as_mut(), self.potential.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        Self::assemble(self.dim, self.period, modes, potential)
    }

    /// Largest violation of `α(-k) = conj α(k)` and of `Im α(0) = 0` over the table.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in &self.modes {
            let neg: Vec<i32> = m.k.iter().map(|c| -c).collect();
            match self.modes.binary_search_by(|p| lex_cmp(&p.k, &neg)) {
                Ok(i) => {
                    for (a, b) in m.coeff.iter().zip(&self.modes[i].coeff) {
                        worst = worst.max((a - b.conj()).norm());
                    }
                }
                Err(_) => return f64::INFINITY,
            }
        }
        worst
    }

    pub fn to_document(&self) -> FieldDocument {
        FieldDocument {
            dim: self.dim,
            period: self.period,
            sup_bound: self.sup_bound,
            is_gradient: self.is_gradient(),
            modes: self
                .modes
                .iter()
                .map(|m| ModeDocument {
                    k: m.k.clone(),
                    re: m.coeff.iter().map(|c| c.re).collect(),
                    im: m.coeff.iter().map(|c| c.im).collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &FieldDocument) -> Result<Self> {
        let modes = doc
            .modes
            .iter()
            .map(|m| {
                if m.re.len() != m.im.len() {
                    return Err(Error::InvalidField(format!("mode {:?}: re/im length mismatch", m.k)));
                }
                Ok(Mode::new(
                    m.k.clone(),
                    m.re.iter().zip(&m.im).map(|(&r, &i)| Complex64::new(r, i)).collect(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let field = Self::from_modes(doc.dim, doc.period, modes, doc.is_gradient)?;
        if doc.sup_bound < field.sup_bound * (1.0 - 1e-12) {
            return Err(Error::InvalidField(format!(
                "recorded sup_bound {} is below the certificate {}",
                doc.sup_bound, field.sup_bound
            )));
        }
        Ok(field)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("field documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FieldDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

impl ForceField for SpectralField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn force_into(&self, x: &[f64], out: &mut [f64]) {
        self.evaluate_into(x, out)
    }
    fn potential(&self, x: &[f64]) -> Option<f64> {
        self.evaluate_potential(x).ok()
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.sup_bound)
    }
}

/// On-disk form of a [`SpectralField`]. Modes are sorted lexicographically by `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDocument {
    pub dim: usize,
    pub period: f64,
    pub sup_bound: f64,
    pub is_gradient: bool,
    pub modes: Vec<ModeDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDocument {
    pub k: Vec<i32>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// One-dimensional field sampled on a uniform periodic grid and evaluated
/// by cubic (Catmull–Rom) interpolation. Faster than the mode sum for large
/// tables but only approximates the field, so the correctness studies never
/// use it.
#[derive(Clone, Debug)]
pub struct GriddedField {
    period: f64,
    samples: Vec<f64>,
    sup_bound: f64,
}

impl GriddedField {
    pub fn from_spectral(field: &SpectralField, points: usize) -> Result<Self> {
        if field.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: field.dim(),
            });
        }
        if points < 4 {
            return Err(Error::param("points", "need at least 4 grid points"));
        }
        let dx = field.period() / points as f64;
        let samples = (0..points).map(|i| field.evaluate(&[i as f64 * dx])[0]).collect();
        Ok(Self {
            period: field.period(),
            samples,
            sup_bound: field.sup_bound(),
        })
    }
}

impl ForceField for GriddedField {
    fn dim(&self) -> usize {
        1
    }
    fn force_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.samples.len();
        let u = x[0] / self.period;
        let pos = (u - u.floor()) * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let t = pos - i as f64;
        let at = |j: isize| self.samples[j.rem_euclid(n as isize) as usize];
        let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
        out[0] = p1
            + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(self.sup_bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn cosine_field(period: f64, amplitude: f64) -> SpectralField {
        let half = Complex64::new(amplitude / 2.0, 0.0);
        SpectralField::from_modes(
            1,
            period,
            vec![Mode::new(vec![1], vec![half]), Mode::new(vec![-1], vec![half])],
            false,
        )
        .unwrap()
    }

    #[test]
    fn single_pair_synthesis_is_a_cosine() {
        let target = RegularityTarget::new(0.95, 1, 1.0);
        let f = SpectralField::synthesize(&target, 1, 3.0, 11, false).unwrap();
        assert_eq!(f.modes().len(), 2);
        assert_abs_diff_eq!(f.sup_bound(), 1.0, epsilon = 1e-15);
        let a = f.modes()[1].coeff[0];
        let theta = a.arg();
        for i in 0..50 {
            let x = i as f64 * 0.0731;
            let expected = (2.0 * PI * x / 3.0 + theta).cos();
            assert_abs_diff_eq!(f.evaluate(&[x])[0], expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let target = RegularityTarget::new(0.8, 6, 2.0);
        for (dim, gradient) in [(1, false), (2, false), (2, true), (3, true)] {
            let a = SpectralField::synthesize(&target, dim, 5.0, 42, gradient).unwrap();
            let b = SpectralField::synthesize(&target, dim, 5.0, 42, gradient).unwrap();
            assert_eq!(a.modes(), b.modes());
            let c = SpectralField::synthesize(&target, dim, 5.0, 43, gradient).unwrap();
            assert_ne!(a.modes(), c.modes());
        }
    }

    #[test]
    fn synthesis_rejects_bad_targets() {
        let mut t = RegularityTarget::new(0.95, 0, 1.0);
        assert!(SpectralField::synthesize(&t, 1, 1.0, 0, false).is_err());
        t.cutoff = 4;
        t.amplitude = 0.0;
        assert!(SpectralField::synthesize(&t, 1, 1.0, 0, false).is_err());
        t.amplitude = 1.0;
        assert!(SpectralField::synthesize(&t, 4, 1.0, 0, false).is_err());
        assert!(SpectralField::synthesize(&t, 1, -1.0, 0, false).is_err());
    }

    #[test]
    fn magnitudes_follow_the_decay_law() {
        let target = RegularityTarget::new(0.95, 16, 1.0);
        let f = SpectralField::synthesize(&target, 2, 4.0, 5, false).unwrap();
        let p = target.decay_exponent(2);
        let wave = 2.0 * PI / 4.0;
        let ratio = |m: &Mode| m.magnitude() * (wave * (m.norm_sqr_k() as f64).sqrt()).powf(p);
        let c0 = ratio(&f.modes()[0]);
        for m in f.modes() {
            assert!((ratio(m) / c0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluation_basics() {
        let f = cosine_field(2.0, 1.0);
        assert_abs_diff_eq!(f.evaluate(&[0.0])[0], 1.0, epsilon = 1e-15);
        let z = SpectralField::zero(2, 1.0, false).unwrap();
        assert_eq!(z.evaluate(&[0.3, 0.4]), vec![0.0, 0.0]);
    }

    #[test]
    fn evaluation_is_periodic_and_residue_is_tiny() {
        let target = RegularityTarget::new(0.95, 12, 1.0);
        let f = SpectralField::synthesize(&target, 2, 3.0, 9, false).unwrap();
        let mut rng = rng::stream(1, rng::STREAM_TEST);
        for _ in 0..50 {
            let x = [rng.random::<f64>() * 10.0 - 5.0, rng.random::<f64>() * 10.0 - 5.0];
            let a = f.evaluate(&x);
            let b = f.evaluate(&[x[0] + 3.0, x[1]]);
            let c = f.evaluate(&[x[0], x[1] - 3.0]);
            for j in 0..2 {
                assert!((a[j] - b[j]).abs() <= 1e-12);
                assert!((a[j] - c[j]).abs() <= 1e-12);
            }
            let full = f.mode_sum(&x);
            for j in 0..2 {
                assert!(full[j].im.abs() <= 1e-12 * f.sup_bound());
                assert!((full[j].re - a[j]).abs() <= 1e-12 * f.sup_bound());
            }
        }
    }

    #[test]
    fn sup_bound_dominates_grid_maximum() {
        let target = RegularityTarget::new(0.95, 64, 1.0);
        let f = SpectralField::synthesize(&target, 1, 2.0 * PI, 3, false).unwrap();
        let n = 1 << 12;
        let max = (0..n)
            .map(|i| f.evaluate(&[2.0 * PI * i as f64 / n as f64])[0].abs())
            .fold(0.0, f64::max);
        assert!(max <= f.sup_bound());
        assert!(max > 0.1 * f.sup_bound());
    }

    #[test]
    fn potential_matches_force_by_central_differences() {
        let target = RegularityTarget::new(0.95, 24, 1.0);
        let f = SpectralField::synthesize(&target, 1, 5.0, 17, true).unwrap();
        let mut rng = rng::stream(2, rng::STREAM_TEST);
        let xs: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 5.0).collect();
        let max_err = |step: f64| {
            xs.iter()
                .map(|&x| {
                    let fd = -(f.evaluate_potential(&[x + step]).unwrap() - f.evaluate_potential(&[x - step]).unwrap())
                        / (2.0 * step);
                    (fd - f.evaluate(&[x])[0]).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!(max_err(1e-5) <= 1e-6);
        let ratio = max_err(2e-3) / max_err(1e-3);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn potential_in_two_dimensions() {
        let target = RegularityTarget::new(0.9, 5, 1.0);
        let f = SpectralField::synthesize(&target, 2, 2.0, 23, true).unwrap();
        let x = [0.37, 1.21];
        let h = 1e-5;
        let force = f.evaluate(&x);
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = -(f.evaluate_potential(&xp).unwrap() - f.evaluate_potential(&xm).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(fd, force[j], epsilon = 1e-7);
        }
    }

    #[test]
    fn potential_special_cases() {
        let cos_phi = SpectralField::from_potential(
            1,
            2.0 * PI,
            vec![(vec![1], Complex64::new(0.5, 0.0)), (vec![-1], Complex64::new(0.5, 0.0))],
        )
        .unwrap();
        assert_abs_diff_eq!(cos_phi.evaluate_potential(&[0.0]).unwrap(), 1.0, epsilon = 1e-15);
        // F = -φ' = sin x
        assert_abs_diff_eq!(cos_phi.evaluate(&[PI / 2.0])[0], 1.0, epsilon = 1e-15);

        let zero = SpectralField::zero(1, 1.0, true).unwrap();
        assert_eq!(zero.evaluate_potential(&[0.4]).unwrap(), 0.0);

        let not_grad = cosine_field(1.0, 1.0);
        assert!(matches!(not_grad.evaluate_potential(&[0.0]), Err(Error::NotGradient)));
    }

    #[test]
    fn gradient_structure_is_validated() {
        // α not parallel to k in 2-D.
        let c = Complex64::new(0.0, 1.0);
        let modes = vec![
            Mode::new(vec![1, 0], vec![c, c]),
            Mode::new(vec![-1, 0], vec![c.conj(), c.conj()]),
        ];
        assert!(SpectralField::from_modes(2, 1.0, modes.clone(), false).is_ok());
        assert!(SpectralField::from_modes(2, 1.0, modes, true).is_err());
    }

    #[test]
    fn hermitian_symmetry_is_enforced() {
        let modes = vec![
            Mode::new(vec![1], vec![Complex64::new(1.0, 1.0)]),
            Mode::new(vec![-1], vec![Complex64::new(1.0, 1.0)]),
        ];
        assert!(SpectralField::from_modes(1, 1.0, modes, false).is_err());
        let lonely = vec![Mode::new(vec![2], vec![Complex64::new(1.0, 0.0)])];
        assert!(SpectralField::from_modes(1, 1.0, lonely, false).is_err());
        let imaginary_mean = vec![Mode::new(vec![0], vec![Complex64::new(1.0, 0.5)])];
        assert!(SpectralField::from_modes(1, 1.0, imaginary_mean, false).is_err());

        let target = RegularityTarget::new(0.8, 4, 1.0);
        for dim in 1..=3 {
            for gradient in [false, true] {
                let f = SpectralField::synthesize(&target, dim, 1.5, 8, gradient).unwrap();
                assert_eq!(f.hermitian_defect(), 0.0);
                assert_eq!(f.mollify(2).hermitian_defect(), 0.0);
            }
        }
    }

    #[test]
    fn seminorm_two_term_sum() {
        let f = cosine_field(2.0 * PI, 3.0);
        for s in [0.25, 0.75, 1.5] {
            assert_abs_diff_eq!(f.sobolev_seminorm(s), 3.0 / 2f64.sqrt(), epsilon = 1e-14);
        }
        assert_eq!(SpectralField::zero(1, 1.0, false).unwrap().sobolev_seminorm(0.75), 0.0);
    }

    #[test]
    fn seminorm_is_monotone_in_s_for_unit_or_larger_wavenumbers() {
        let target = RegularityTarget::new(0.95, 32, 1.0);
        let f = SpectralField::synthesize(&target, 1, 2.0 * PI, 4, false).unwrap();
        let mut last = 0.0;
        for s in [0.1, 0.5, 0.75, 0.95, 1.2, 1.5] {
            let v = f.sobolev_seminorm(s);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn mollify_edge_cases() {
        let target = RegularityTarget::new(0.95, 8, 1.0);
        let f = SpectralField::synthesize(&target, 2, 1.0, 3, true).unwrap();
        let m0 = f.mollify(0);
        assert!(m0.modes().iter().all(|m| m.k.iter().all(|&c| c == 0)));
        assert_eq!(m0.evaluate(&[0.2, 0.9]), vec![0.0, 0.0]);
        let same = f.mollify(12);
        assert_eq!(same.modes(), f.modes());
        assert!(same.is_gradient());
        let m3 = f.mollify(3);
        assert!(m3.max_wavenumber() <= 3.0);
        assert!(m3.sup_bound() < f.sup_bound());
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let target = RegularityTarget::new(0.95, 5, 1.0);
        let f = SpectralField::synthesize(&target, 2, 2.5, 77, true).unwrap();
        let text = f.to_json();
        let g = SpectralField::from_json(&text).unwrap();
        assert_eq!(g.modes(), f.modes());
        assert!(g.is_gradient());
        assert_eq!(g.to_json(), text);
        assert!(SpectralField::from_json("{\"dim\":1}").is_err());
    }

    #[test]
    fn gridded_field_converges_to_the_mode_sum() {
        let target = RegularityTarget::new(0.95, 16, 1.0);
        let f = SpectralField::synthesize(&target, 1, 1.0, 6, false).unwrap();
        let err = |points| {
            let g = GriddedField::from_spectral(&f, points).unwrap();
            (0..200)
                .map(|i| {
                    let x = [i as f64 * 0.00731];
                    (g.force(&x)[0] - f.evaluate(&x)[0]).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!(err(1024) < err(256));
        assert!(err(1024) < 1e-3);
    }
}
