//! Subcommand bodies. Each reads its keys from a [`Config`], writes its
//! results into a [`RunDir`] and finishes with a manifest.

use crate::config::{bad, Config};
use crate::error::CliError;
use crate::output::{csv, num, RunDir};
use roughflow::counterexample::{
    certify_window, event_turning_time, fit_separation_exponent, initial_position, post_turn_diagnostic,
    quadrature_budget_ok, separation_scan, Oscillation, OscillatoryPotential, ScanSpec, Shape, SpeedSelection,
};
use roughflow::error::Error as CoreError;
use roughflow::field::{RegularityTarget, SpectralField};
use roughflow::flow::{default_step, energy, integrate, safe_period, FlowParams, PhaseBox, PhaseState};
use roughflow::stability::{
    fit_log_exponent, mollification_cauchy_study, q_scaling_study, step_robustness, EnsembleSpec, Sampling,
    ShiftDirection,
};
use serde_json::json;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Flow,
    Qdelta,
    Counterexample,
    Mollify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Flow => "flow",
            Command::Qdelta => "qdelta",
            Command::Counterexample => "counterexample",
            Command::Mollify => "mollify",
        }
    }
}

/// Rewrites a core precondition error so it names the config key.
fn keyed(err: CoreError, keys: &[(&str, &str)]) -> CliError {
    match err {
        CoreError::InvalidParameter { name, reason } => match keys.iter().find(|(n, _)| *n == name) {
            Some((_, key)) => bad(key, reason),
            None => CliError::Core(CoreError::InvalidParameter { name, reason }),
        },
        other => CliError::Core(other),
    }
}

fn vector(cfg: &mut Config, key: &str, dim: usize, default: f64) -> Result<Vec<f64>, CliError> {
    let v = cfg.f64_list(key, vec![default; dim])?;
    if v.len() != dim {
        return Err(bad(key, format!("expected {dim} entries, got {}", v.len())));
    }
    Ok(v)
}

fn phase_box(cfg: &mut Config, dim: usize) -> Result<PhaseBox, CliError> {
    let x_lo = vector(cfg, "ensemble.x_lo", dim, 0.0)?;
    let x_hi = vector(cfg, "ensemble.x_hi", dim, 1.0)?;
    let v_lo = vector(cfg, "ensemble.v_lo", dim, 0.0)?;
    let v_hi = vector(cfg, "ensemble.v_hi", dim, 1.0)?;
    PhaseBox::new(x_lo, x_hi, v_lo, v_hi).map_err(|e| match e {
        CoreError::InvalidParameter { reason, .. } => bad("ensemble.x_lo", reason),
        other => other.into(),
    })
}

fn ensemble(cfg: &mut Config, omega: PhaseBox, seed: u64) -> Result<EnsembleSpec, CliError> {
    let count = cfg.usize_in("ensemble.count", 512, 1, usize::MAX)?;
    let sampling: Sampling = cfg
        .string("ensemble.sampling", "low-discrepancy")?
        .parse()
        .map_err(|e: CoreError| bad("ensemble.sampling", e))?;
    let spec = EnsembleSpec {
        omega,
        sampling,
        count,
        seed,
    };
    spec.points().map_err(|e| keyed(e, &[("count", "ensemble.count")]))?;
    Ok(spec)
}

/// Field shared by the flow studies: read from `field.file` or synthesized
/// from the `field.*` keys. The default period keeps every trajectory
/// started in `omega` away from the periodic images over `horizon`.
fn field(cfg: &mut Config, seed: u64, omega: &PhaseBox, horizon: f64) -> Result<SpectralField, CliError> {
    if let Some(path) = cfg.opt_string("field.file")? {
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let f = SpectralField::from_json(&text).map_err(|e| bad("field.file", e))?;
        if f.dim() != omega.dim() {
            return Err(bad("field.file", format!("field has d = {}, config has d = {}", f.dim(), omega.dim())));
        }
        return Ok(f);
    }
    synthesize(cfg, seed, omega, horizon)
}

fn synthesize(cfg: &mut Config, seed: u64, omega: &PhaseBox, horizon: f64) -> Result<SpectralField, CliError> {
    let target = RegularityTarget {
        s: cfg.positive("field.s", 0.95)?,
        decay_margin: cfg.positive("field.decay_margin", 0.05)?,
        cutoff: cfg.usize_in("field.cutoff", 64, 1, 1 << 20)? as u32,
        amplitude: cfg.positive("field.amplitude", 1.0)?,
    };
    let gradient = cfg.bool("field.gradient", false)?;
    let period = match cfg.opt_f64("field.period")? {
        Some(p) if p > 0.0 => p,
        Some(p) => return Err(bad("field.period", format!("must be positive, got {p}"))),
        None => {
            let p = safe_period(omega, target.amplitude, horizon)?;
            cfg.f64("field.period", p)?
        }
    };
    SpectralField::synthesize(&target, omega.dim(), period, seed, gradient).map_err(|e| {
        keyed(
            e,
            &[
                ("s", "field.s"),
                ("decay_margin", "field.decay_margin"),
                ("cutoff", "field.cutoff"),
                ("amplitude", "field.amplitude"),
            ],
        )
    })
}

fn flow_params(cfg: &mut Config, field: &SpectralField, horizon: f64) -> Result<FlowParams, CliError> {
    let h = cfg.positive("flow.h", default_step(field.max_angular_wavenumber()))?;
    let stride = cfg.usize_in("flow.stride", 1, 1, usize::MAX)?;
    FlowParams::new(h, horizon, stride).map_err(|e| keyed(e, &[("h", "flow.h"), ("horizon", "flow.horizon")]))
}

/// Shared prologue: seed, horizon, box, field.
fn setup(cfg: &mut Config, dim_default: usize) -> Result<(u64, f64, PhaseBox, SpectralField), CliError> {
    let seed = cfg.u64("seed", 0)?;
    let horizon = cfg.positive("flow.horizon", 2.0)?;
    let dim = cfg.usize_in("field.dim", dim_default, 1, 3)?;
    let omega = phase_box(cfg, dim)?;
    let f = field(cfg, seed, &omega, horizon)?;
    Ok((seed, horizon, omega, f))
}

pub fn run(command: Command, cfg: &mut Config, out: &Path) -> Result<(), CliError> {
    let mut dir = RunDir::create(out)?;
    let result = match command {
        Command::Synth => synth(cfg, &mut dir),
        Command::Flow => flow(cfg, &mut dir),
        Command::Qdelta => qdelta(cfg, &mut dir),
        Command::Counterexample => counterexample(cfg, &mut dir),
        Command::Mollify => mollify(cfg, &mut dir),
    };
    // Config problems abort before anything is written; numerical gates
    // still leave their partial results and a manifest behind.
    match result {
        Err(e @ CliError::Config(_)) => Err(e),
        other => {
            dir.finish(command.name(), cfg.resolved())?;
            other
        }
    }
}

fn synth(cfg: &mut Config, dir: &mut RunDir) -> Result<(), CliError> {
    let seed = cfg.u64("seed", 0)?;
    let horizon = cfg.positive("flow.horizon", 2.0)?;
    let dim = cfg.usize_in("field.dim", 1, 1, 3)?;
    let omega = phase_box(cfg, dim)?;
    let f = dir.stage("synthesize", || synthesize(cfg, seed, &omega, horizon))?;
    cfg.finish()?;
    let s = cfg.resolved()["field.s"].as_f64().unwrap_or(0.95);
    dir.write("field.json", &format!("{}\n", f.to_json()))?;
    dir.write_json(
        "summary.json",
        &json!({
            "modes": f.modes().len(),
            "period": f.period(),
            "sup_bound": f.sup_bound(),
            "sobolev_seminorm": f.sobolev_seminorm(s),
            "max_angular_wavenumber": f.max_angular_wavenumber(),
        }),
    )
}

fn flow(cfg: &mut Config, dir: &mut RunDir) -> Result<(), CliError> {
    let (_, horizon, omega, f) = setup(cfg, 1)?;
    let params = flow_params(cfg, &f, horizon)?;
    let x = vector(cfg, "flow.x", omega.dim(), 0.5)?;
    let v = vector(cfg, "flow.v", omega.dim(), 0.5)?;
    cfg.finish()?;
    let state = PhaseState::new(x, v);
    let traj = dir.stage("integrate", || integrate(&f, &state, &params))?;
    dir.write("trajectory.csv", &traj.to_csv())?;
    let drift = if f.is_gradient() {
        let e0 = energy(&f, &state)?;
        let mut worst = 0.0f64;
        for s in &traj.states {
            worst = worst.max((energy(&f, s)? - e0).abs());
        }
        Some(worst)
    } else {
        None
    };
    dir.write_json(
        "summary.json",
        &json!({
            "h": params.h(),
            "steps": params.steps(),
            "final": traj.last(),
            "energy_drift": drift,
        }),
    )
}

fn default_deltas() -> Vec<f64> {
    (3..=10).map(|p| 10f64.powf(-(p as f64) / 2.0)).collect()
}

fn qdelta(cfg: &mut Config, dir: &mut RunDir) -> Result<(), CliError> {
    let (seed, horizon, omega, f) = setup(cfg, 1)?;
    let params = flow_params(cfg, &f, horizon)?;
    let ens = ensemble(cfg, omega, seed)?;
    let deltas = cfg.f64_list("qdelta.deltas", default_deltas())?;
    let d = f.dim();
    let shift = match (cfg.opt_f64_list("shift.dx")?, cfg.opt_f64_list("shift.dv")?) {
        (None, None) => ShiftDirection::diagonal(d),
        (dx, dv) => ShiftDirection::new(dx.unwrap_or(vec![0.0; d]), dv.unwrap_or(vec![0.0; d])).map_err(|e| bad("shift.dx", e))?,
    };
    if shift.dim() != d {
        return Err(bad("shift.dx", format!("expected {d} entries")));
    }
    cfg.finish()?;

    let table = dir
        .stage("scaling", || q_scaling_study(&f, &ens, &shift, &deltas, &params))
        .map_err(|e| keyed(e, &[("deltas", "qdelta.deltas")]))?;
    let rows = table.rows.iter().map(|r| {
        vec![
            num(r.delta),
            num(r.q),
            num(r.q_over_log),
            table.samples.to_string(),
            num(table.h),
            table.seed.to_string(),
        ]
    });
    dir.write("qdelta.csv", &csv(&["delta", "Q", "Q_over_log", "n_samples", "h", "seed"], rows))?;

    let gate = dir.stage("step-gate", || step_robustness(&f, &ens, &shift, &table, &params))?;
    let rows = gate
        .rows
        .iter()
        .map(|r| vec![num(r.delta), num(r.q_h), num(r.q_half), num(r.rel_change)]);
    dir.write("gate.csv", &csv(&["delta", "Q_h", "Q_half_h", "rel_change"], rows))?;
    if !gate.passed {
        dir.write_json("summary.json", &json!({ "valid": false, "gate": gate }))?;
        return Err(CliError::Gate(format!(
            "halving h changed Q by {:.3e} (threshold {:.0e}); reduce flow.h",
            gate.max_rel_change, gate.threshold
        )));
    }
    let fit = fit_log_exponent(&table.rows)?;
    let first = table.rows[0].q_over_log;
    let bounded = table.rows.iter().all(|r| r.q_over_log <= 1.5 * first);
    dir.write_json(
        "summary.json",
        &json!({ "valid": true, "gate": gate, "fit": fit, "q_over_log_bounded": bounded }),
    )
}

fn counterexample(cfg: &mut Config, dir: &mut RunDir) -> Result<(), CliError> {
    let shape: Shape = cfg.string("ce.shape", "sine")?.parse().map_err(|e: CoreError| bad("ce.shape", e))?;
    let amplitude = cfg.f64("ce.amplitude", 1.0)?;
    let alpha = cfg.f64("ce.alpha", 0.25)?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(bad("ce.alpha", format!("must lie in (0, 1/2), got {alpha}")));
    }
    let n_list = cfg.u64_list("ce.n_list", (6..=13).map(|p| 1u64 << p).collect())?;
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(bad("ce.n_list", "needs at least one N, all ≥ 1"));
    }
    let quad_tol = cfg.positive("ce.quad_tol", 1e-10)?;
    let z_max = cfg.positive("ce.z_max", 1e4)?;
    let threshold = cfg.positive("ce.threshold", 0.1)?;
    let grid = cfg.usize_in("ce.grid", 256, 2, 1 << 16)?;
    let fixed_v = cfg.opt_f64("ce.v")?;
    if let Some(v) = fixed_v {
        if !(v > 0.0) {
            return Err(bad("ce.v", format!("must be positive, got {v}")));
        }
    }
    let check_h = cfg.opt_f64("ce.check_h")?;
    if check_h.is_some_and(|h| !(h > 0.0)) {
        return Err(bad("ce.check_h", "must be positive"));
    }
    let diagnostic_h = cfg.opt_f64("ce.diagnostic_h")?;
    if diagnostic_h.is_some_and(|h| !(h > 0.0)) {
        return Err(bad("ce.diagnostic_h", "must be positive"));
    }
    cfg.finish()?;
    let h = Oscillation::new(shape, amplitude).map_err(|e| bad("ce.amplitude", e))?;

    let (speed, window) = match fixed_v {
        Some(v) => (SpeedSelection::Fixed(v), None),
        None => {
            let cert = dir.stage("window", || certify_window(&h, threshold, grid, z_max));
            let cert = match cert {
                Ok(c) => c,
                Err(CoreError::NoAdmissibleWindow { threshold, max_abs }) => {
                    // Recompute the grid for the diagnostics file.
                    let rows = (0..grid).map(|j| {
                        let eta = std::f64::consts::TAU * j as f64 / grid as f64;
                        let a = roughflow::counterexample::a_eta(&h, eta, z_max, 1e-4).map(|a| a.value).unwrap_or(f64::NAN);
                        vec![num(eta), num(a)]
                    });
                    dir.write("window.csv", &csv(&["eta", "A_eta"], rows))?;
                    return Err(CliError::Gate(format!(
                        "no η window with |A| ≥ {threshold}: max |A| on the grid is {max_abs:.3e} (see window.csv)"
                    )));
                }
                Err(e) => return Err(e.into()),
            };
            let rows = cert.grid.iter().map(|&(eta, a)| vec![num(eta), num(a)]);
            dir.write("window.csv", &csv(&["eta", "A_eta"], rows))?;
            (
                SpeedSelection::Pinned {
                    anchor: cert.anchor,
                    lo: cert.eta_lo,
                    hi: cert.eta_hi,
                },
                Some(cert),
            )
        }
    };
    let spec = ScanSpec {
        h: h.clone(),
        alpha,
        n_list,
        speed,
        quad_tol,
        z_max,
    };
    let rows = dir.stage("scan", || separation_scan(&spec))?;
    let body = rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            num(r.delta),
            num(r.t0),
            num(r.t0_delta),
            num(r.separation),
            num(r.eta),
            num(r.a_eta),
            num(r.ratio),
            num(r.quadrature_tol),
        ]
    });
    dir.write(
        "scan.csv",
        &csv(
            &["N", "delta", "t0", "t0_delta", "separation", "eta", "A_eta", "ratio", "quadrature_tol"],
            body,
        ),
    )?;

    let mut checks = None;
    if let Some(step) = check_h {
        let results = dir.stage("event-check", || {
            rows.iter()
                .map(|r| {
                    let pot = OscillatoryPotential::new(r.n, alpha, h.clone())?;
                    let x = initial_position(&pot, r.v)?;
                    let ev = event_turning_time(&pot, x, r.v, step)?;
                    Ok(vec![
                        r.n.to_string(),
                        num(step),
                        num(ev.t0),
                        num(r.t0),
                        num((ev.t0 - r.t0).abs()),
                        num(ev.energy_drift),
                    ])
                })
                .collect::<Result<Vec<_>, CoreError>>()
        })?;
        let worst = results.iter().map(|r| r[5].parse::<f64>().unwrap()).fold(0.0, f64::max);
        dir.write(
            "checks.csv",
            &csv(&["N", "h", "t0_event", "t0_quadrature", "discrepancy", "energy_drift"], results),
        )?;
        checks = Some(json!({ "h": step, "max_energy_drift": worst }));
    }

    let mut diagnostics = Vec::new();
    if let Some(step) = diagnostic_h {
        for r in &rows {
            let pot = OscillatoryPotential::new(r.n, alpha, h.clone())?;
            diagnostics.push(json!({ "n": r.n, "post_turn": post_turn_diagnostic(&pot, r.v, r.delta, step)? }));
        }
    }

    let mut summary = json!({
        "shape": shape.as_str(),
        "amplitude": amplitude,
        "alpha": alpha,
        "expected_slope": -(0.5 + alpha),
        "speed": speed,
        "window": window.as_ref().map(|w| json!({
            "eta_lo": w.eta_lo, "eta_hi": w.eta_hi, "anchor": w.anchor,
            "threshold": w.threshold, "max_abs": w.max_abs,
        })),
        "event_check": checks,
        "post_turn": diagnostics,
    });
    if !quadrature_budget_ok(&rows) {
        summary["fit"] = json!(null);
        dir.write_json("summary.json", &summary)?;
        return Err(CliError::Gate(
            "quadrature error exceeds 1% of the smallest separation; tighten ce.quad_tol".into(),
        ));
    }
    match fit_separation_exponent(&rows) {
        Ok(fit) => {
            summary["fit"] = json!(fit);
            dir.write_json("summary.json", &summary)
        }
        Err(e) => {
            summary["fit"] = json!(null);
            dir.write_json("summary.json", &summary)?;
            Err(CliError::Gate(format!("fit refused: {e}")))
        }
    }
}

fn mollify(cfg: &mut Config, dir: &mut RunDir) -> Result<(), CliError> {
    let (seed, horizon, omega, f) = setup(cfg, 1)?;
    let params = flow_params(cfg, &f, horizon)?;
    let ens = ensemble(cfg, omega, seed)?;
    let cutoffs = cfg.u64_list("mollify.cutoffs", vec![8, 16, 32, 64, 128])?;
    if cutoffs.iter().any(|&c| c > u32::MAX as u64) {
        return Err(bad("mollify.cutoffs", "entries must fit in 32 bits"));
    }
    let cutoffs: Vec<u32> = cutoffs.into_iter().map(|c| c as u32).collect();
    cfg.finish()?;
    let rows = dir
        .stage("cauchy", || mollification_cauchy_study(&f, &cutoffs, &ens, &params))
        .map_err(|e| keyed(e, &[("cutoffs", "mollify.cutoffs")]))?;
    let body = rows
        .iter()
        .map(|r| vec![r.n_lo.to_string(), r.n_hi.to_string(), num(r.distance)]);
    dir.write("cauchy.csv", &csv(&["n_lo", "n_hi", "distance"], body))?;
    let decreasing = rows.windows(2).all(|w| w[1].distance < w[0].distance);
    dir.write_json("summary.json", &json!({ "rows": rows, "strictly_decreasing": decreasing }))
}
