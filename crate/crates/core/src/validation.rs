//! The acceptance suite: eleven numbered checks run against one system.
//!
//! Criteria that concern dimensionless mathematics (1, 3, 4, 10) ignore the
//! system; the others use it, in reduced units for the propagation checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::Result;
use crate::lindblad::{
    alignment_signal, apply_dissipator, build_dissipator, build_dissipator_with_orders, centrifuge_state,
    extract_decay_rate, isotropic_state, propagate_with, BasisLayout, CoherentGenerator, PropagationOptions,
    RotorState, MIN_Q_ORDER, MIN_SPHERE_ORDER,
};
use crate::mathkit::gamma_real;
use crate::params::{KappaMode, SystemSpec};
use crate::rates::{
    a_coefficient, closed_form_constant, gamma_closed_form, gamma_numeric, sweep_rates, AmplitudeBackend, RateMethod,
};
use crate::scattering::{
    forward_amplitude_linearized, forward_amplitude_spectral, forward_prefactor, radial_sine_integral,
    radial_sine_squared_integral, scalar_optical_theorem, schiff_amplitude_full, C64,
};

/// Closed-form constant recomputed by an independent script (mpmath, 30 digits).
pub const CLOSED_FORM_CONSTANT_REFERENCE: f64 = 0.561_951_028_726_8;
pub const A20_REFERENCE: f64 = 1.531_800;

#[derive(Clone, Debug, Default)]
pub struct ValidationOptions {
    /// Perturb the closed-form constant by one part in 10^3 (negative control).
    pub corrupt_constant: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
    pub seconds: f64,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CriterionResult> {
        self.criteria.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, id: u8) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            let _ = writeln!(
                s,
                "[{}] {:>2} {:<32} {} ({:.2} s)",
                if c.passed { "PASS" } else { "FAIL" },
                c.id,
                c.name,
                c.detail,
                c.seconds
            );
        }
        let n = self.criteria.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{n}/{} criteria passed in {:.1} s", self.criteria.len(), self.seconds);
        s
    }
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "closed-form prefactor"),
    (2, "closed form vs quadrature"),
    (3, "large-j asymptote"),
    (4, "small-j guard values"),
    (5, "isotropic stationarity"),
    (6, "block population conservation"),
    (7, "propagator-rate consistency"),
    (8, "scalar eikonal self-consistency"),
    (9, "linearization error scaling"),
    (10, "radial integral table"),
    (11, "degenerate anisotropy null"),
];

type Outcome = Result<(bool, String)>;

/// Runs one criterion by number.
pub fn run_criterion(id: u8, spec: &SystemSpec, opts: &ValidationOptions) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
    let start = Instant::now();
    let out = match id {
        1 => closed_form_prefactor(spec, opts),
        2 => closed_form_vs_quadrature(spec),
        3 => asymptote(spec),
        4 => guard_values(),
        5 => stationarity(spec),
        6 => population_conservation(spec),
        7 => propagator_rates(spec),
        8 => eikonal_consistency(spec),
        9 => linearization_scaling(spec),
        10 => radial_table(),
        11 => anisotropy_null(spec),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_validation(spec: &SystemSpec, opts: &ValidationOptions) -> ValidationReport {
    let start = Instant::now();
    let criteria: Vec<CriterionResult> = CRITERIA.iter().map(|c| run_criterion(c.0, spec, opts)).collect();
    ValidationReport {
        passed: criteria.iter().all(|c| c.passed),
        criteria,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}

/// gamma / A on the system with density, thermal momentum and van der Waals
/// groups all scaled to one, compared with Gamma(13/5) Gamma(3/5)^2
/// sqrt(pi) / 10 built from gamma_real.
fn closed_form_prefactor(spec: &SystemSpec, opts: &ValidationOptions) -> Outcome {
    let _ = spec;
    let unit = SystemSpec::reference();
    let independent = gamma_real(2.6)? * gamma_real(0.6)?.powi(2) * PI.sqrt() / 10.0;
    let mut worst: f64 = rel(independent, CLOSED_FORM_CONSTANT_REFERENCE);
    let mut measured = f64::NAN;
    for (j, jp) in [(2, 0), (10, 8), (40, 38), (7, 3)] {
        let r = gamma_closed_form(j, jp, &unit);
        let mut ratio = r.gamma / r.a_coefficient;
        if opts.corrupt_constant {
            ratio *= 1.0 + 1e-3;
        }
        measured = ratio;
        worst = worst.max(rel(ratio, independent));
    }
    worst = worst.max(rel(closed_form_constant(), independent));
    Ok((
        worst <= 1e-9,
        format!("gamma/A = {measured:.13}, reference {CLOSED_FORM_CONSTANT_REFERENCE}, max rel dev {worst:.2e}"),
    ))
}

fn closed_form_vs_quadrature(spec: &SystemSpec) -> Outcome {
    let mut s = spec.with_kappa(KappaMode::Half);
    s.numerics.quad_order_q = 48;
    s.numerics.quad_order_sphere = 302;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for j in [4, 6, 10, 14, 20] {
        let cf = gamma_closed_form(j, j - 2, &s).gamma;
        let num = gamma_numeric(j, j - 2, &s, AmplitudeBackend::Linearized)?.gamma;
        let d = if cf == 0.0 { num.abs() } else { rel(num, cf) };
        worst = worst.max(d);
        parts.push(format!("{j}:{d:.1e}"));
    }
    Ok((worst <= 5e-3, format!("max rel dev {worst:.2e} [{}]", parts.join(" "))))
}

fn asymptote(spec: &SystemSpec) -> Outcome {
    let scaled = 500.0 * a_coefficient(500, 498) / 6.0;
    let sweep_spec = if gamma_closed_form(10, 8, spec).gamma > 0.0 {
        spec.clone()
    } else {
        SystemSpec::reference()
    };
    let table = sweep_rates(200..=1000, &sweep_spec, RateMethod::ClosedForm)?;
    let slope = table.log_log_slope(200..=1000).unwrap_or(f64::NAN);
    Ok((
        (0.99..=1.01).contains(&scaled) && (slope + 1.0).abs() <= 0.05,
        format!("500 A/6 = {scaled:.6}, slope over [200, 1000] = {slope:.4}"),
    ))
}

fn guard_values() -> Outcome {
    let a00 = a_coefficient(0, 0);
    let a20 = a_coefficient(2, 0);
    Ok((
        a00 == 0.0 && (a20 - A20_REFERENCE).abs() <= 1e-5,
        format!("A00 = {a00}, A20 = {a20:.8}"),
    ))
}

fn stationarity(spec: &SystemSpec) -> Outcome {
    let (s, _) = spec.normalized();
    let lo = s.numerics.j_min;
    let hi = s.numerics.j_max.min(lo + 16);
    let layout = BasisLayout::new(lo, hi)?;
    let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, MIN_Q_ORDER, MIN_SPHERE_ORDER)?;
    let scale = dis.jump_scale();
    let n = (hi - lo + 1) as f64;
    let uniform: BTreeMap<u32, f64> = (lo..=hi).map(|j| (j, 1.0 / n)).collect();
    let top = BTreeMap::from([(hi, 1.0)]);
    let z: f64 = (lo..=hi).map(|j| 0.7f64.powi((j - lo) as i32)).sum();
    let geometric: BTreeMap<u32, f64> = (lo..=hi).map(|j| (j, 0.7f64.powi((j - lo) as i32) / z)).collect();
    let mut worst: f64 = 0.0;
    for pops in [uniform, top, geometric] {
        let rho = isotropic_state(&layout, &pops)?;
        let d = apply_dissipator(&dis, &rho)?;
        worst = worst.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok((
        worst <= 1e-10 * scale,
        format!("max |D rho_iso| = {worst:.2e}, bound {:.2e} (j {lo}..={hi}, D = {})", 1e-10 * scale, layout.dim()),
    ))
}

fn step_for(h: &CoherentGenerator, t_final: f64, min_steps: f64) -> f64 {
    let by_phase = if h.spectral_range > 0.0 { 0.05 / h.spectral_range } else { f64::INFINITY };
    by_phase.min(t_final / min_steps)
}

fn population_conservation(spec: &SystemSpec) -> Outcome {
    let (s, _) = spec.normalized();
    let lo = s.numerics.j_min.max(8).min(s.numerics.j_max);
    let hi = s.numerics.j_max.min(lo + 4);
    let layout = BasisLayout::new(lo, hi)?;
    let dis = build_dissipator(&s, &layout, AmplitudeBackend::Linearized)?;
    let h = CoherentGenerator::with_gas_shift(&s, &layout, AmplitudeBackend::Linearized)?;

    let slowest = (lo..=hi)
        .flat_map(|j| (lo..j).map(move |jp| (j, jp)))
        .map(|(j, jp)| gamma_closed_form(j, jp, &s).gamma)
        .fold(f64::INFINITY, f64::min);
    let t_final = if slowest.is_finite() && slowest > 0.0 { 3.0 / slowest } else { 10.0 };

    let levels = (hi - lo + 1) as f64;
    let coeffs: BTreeMap<u32, C64> = (lo..=hi)
        .map(|j| (j, C64::from_polar(1.0 / levels.sqrt(), 0.7 * j as f64)))
        .collect();
    let rho = centrifuge_state(&layout, &coeffs)?;
    let dt = step_for(&h, t_final, 200.0);
    let opts = PropagationOptions {
        record_every: 10,
        tol_trace: s.numerics.tol_trace,
        ..PropagationOptions::default()
    };
    let traj = propagate_with(&rho, &dis, &h, t_final, dt, &opts)?;
    let mut drift: f64 = 0.0;
    for j in lo..=hi {
        let p0 = rho.block_population(j)?;
        for st in &traj.states {
            drift = drift.max((st.block_population(j)? - p0).abs());
        }
    }
    Ok((
        drift <= 1e-8 && layout.dim() <= 200,
        format!(
            "max block drift {drift:.2e} over t = {t_final:.3} ({} steps, D = {}, min eig {:.1e})",
            traj.steps,
            layout.dim(),
            traj.min_eigenvalue()
        ),
    ))
}

/// Fits over t <= 0.02/gamma, where the relative change of the
/// time-dependent short-time corrections stays far below the 2% target.
fn propagator_rates(spec: &SystemSpec) -> Outcome {
    let (s, _) = spec.normalized();
    let s = s.with_kappa(KappaMode::Half);
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, jp) in [(10u32, 8u32), (12, 10)] {
        let layout = BasisLayout::new(jp, j)?;
        let dis = build_dissipator(&s, &layout, AmplitudeBackend::Linearized)?;
        let h = CoherentGenerator::with_gas_shift(&s, &layout, AmplitudeBackend::Linearized)?;
        let c = C64::from(0.5f64.sqrt());
        let rho = centrifuge_state(&layout, &BTreeMap::from([(j, c), (jp, c)]))?;
        let gamma = gamma_closed_form(j, jp, &s).gamma;
        if gamma == 0.0 {
            let traj = propagate_with(&rho, &dis, &h, 1.0, step_for(&h, 1.0, 40.0), &PropagationOptions::default())?;
            let moved = (traj.last().coherence(j, jp)?.norm() - 0.5).abs();
            ok &= moved <= 1e-12;
            parts.push(format!("({j},{jp}) gamma = 0, |rho| change {moved:.1e}"));
            continue;
        }
        let t_fit = 0.02 / gamma;
        let traj = propagate_with(&rho, &dis, &h, t_fit, step_for(&h, t_fit, 40.0), &PropagationOptions::default())?;
        let coh: Vec<(f64, f64)> = traj
            .states
            .iter()
            .map(|st| Ok((st.time, st.coherence(j, jp)?.norm())))
            .collect::<Result<_>>()?;
        let sig: Vec<(f64, f64)> = traj
            .states
            .iter()
            .map(|st| Ok((st.time, alignment_signal(st, j)?)))
            .collect::<Result<_>>()?;
        let fc = extract_decay_rate(&coh)?.rate;
        let fs = extract_decay_rate(&sig)?.rate;
        let (dc, ds) = (rel(fc, gamma), rel(fs, 2.0 * gamma));
        ok &= dc <= 0.02 && ds <= 0.02;
        parts.push(format!("({j},{jp}) coherence {dc:.1e} signal {ds:.1e}"));
    }
    Ok((ok, format!("rel dev {}", parts.join(", "))))
}

fn eikonal_consistency(spec: &SystemSpec) -> Outcome {
    let iso = spec.with_aniso_ratio(0.0);
    let q = iso.q_th();
    let ot = scalar_optical_theorem(q, &iso, iso.numerics.b_max, iso.numerics.b_nodes)?;
    let z = Vector3::z();
    let forward = schiff_amplitude_full(0, q, &z, &z, &iso)?;
    let closed = forward_prefactor(q, &iso) * (2.0 * PI);
    let im_dev = rel(forward.amplitude.entries[(0, 0)].im, closed.im);
    let ot_ok = (ot.ratio - 1.0).abs() <= 0.02;
    let im_ok = im_dev <= 0.01;
    Ok((
        ot_ok && im_ok,
        format!(
            "optical theorem sigma_el/sigma_tot = {:.4} ({}), with saturated-core absorption {:.4}; forward Im rel dev {im_dev:.1e} ({})",
            ot.ratio,
            if ot_ok { "ok" } else { "outside 2%" },
            ot.ratio_with_absorption,
            if im_ok { "ok" } else { "outside 1%" },
        ),
    ))
}

fn linearization_scaling(spec: &SystemSpec) -> Outcome {
    let n = Vector3::new(0.5, 0.1, 0.8).normalize();
    let q = spec.q_th();
    let dev = |eps: f64| -> Result<f64> {
        let s = spec.with_aniso_ratio(1.5 * eps);
        let lin = forward_amplitude_linearized(6, q, &n, &s)?;
        let spe = forward_amplitude_spectral(6, q, &n, &s)?;
        Ok((&lin.entries - &spe.entries).iter().map(|z| z.norm()).fold(0.0, f64::max))
    };
    let ratio = dev(0.04)? / dev(0.02)?;
    Ok(((ratio / 4.0 - 1.0).abs() <= 0.2, format!("error ratio {ratio:.4} for eps 0.02 -> 0.04")))
}

fn radial_table() -> Outcome {
    let g = gamma_real(0.6)?;
    let i1 = radial_sine_integral(1.0)?;
    let i2 = radial_sine_squared_integral(1.0)?;
    let e1 = 0.5 * g * (0.3 * PI).cos();
    let e2 = 0.25 * g * (0.3 * PI).sin();
    let (d1, d2) = ((i1 - e1).abs(), (i2 - e2).abs());
    Ok((
        d1 <= 1e-6 && d2 <= 1e-6,
        format!("sine {i1:.9} (dev {d1:.1e}), sine^2 {i2:.9} (dev {d2:.1e})"),
    ))
}

fn anisotropy_null(spec: &SystemSpec) -> Outcome {
    let (s, _) = spec.normalized();
    let s = s.with_aniso_ratio(0.0);
    let mut worst_rate: f64 = 0.0;
    for (j, jp) in [(2, 0), (10, 8), (7, 3)] {
        worst_rate = worst_rate.max(gamma_closed_form(j, jp, &s).gamma.abs());
        worst_rate = worst_rate.max(gamma_numeric(j, jp, &s, AmplitudeBackend::Linearized)?.gamma.abs());
    }
    let layout = BasisLayout::new(0, 6)?;
    let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, MIN_Q_ORDER, MIN_SPHERE_ORDER)?;
    let coeffs: BTreeMap<u32, C64> = (0..=6).map(|j| (j, C64::from_polar((1.0f64 / 7.0).sqrt(), j as f64))).collect();
    let rho: RotorState = centrifuge_state(&layout, &coeffs)?;
    let action = apply_dissipator(&dis, &rho)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let action_rel = action / dis.jump_scale().max(f64::MIN_POSITIVE);
    let mut ident: f64 = 0.0;
    for (j, n) in [(3, Vector3::new(0.3, -0.4, 0.866)), (8, Vector3::new(1.0, 0.0, 0.0))] {
        let n = n.normalize();
        ident = ident.max(forward_amplitude_linearized(j, s.q_th(), &n, &s)?.identity_defect());
        ident = ident.max(forward_amplitude_spectral(j, s.q_th(), &n, &s)?.identity_defect());
    }
    Ok((
        worst_rate == 0.0 && action_rel <= 1e-13 && ident <= 1e-14,
        format!("max |gamma| = {worst_rate:e}, dissipator action / scale = {action_rel:.1e}, identity defect {ident:.1e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_constant_fails_only_criterion_one() {
        let spec = SystemSpec::reference();
        let bad = ValidationOptions { corrupt_constant: true };
        assert!(!run_criterion(1, &spec, &bad).passed);
        assert!(run_criterion(1, &spec, &ValidationOptions::default()).passed);
        assert!(run_criterion(4, &spec, &bad).passed);
    }

    #[test]
    fn text_report_has_one_line_per_criterion() {
        let spec = SystemSpec::reference();
        let report = ValidationReport {
            passed: true,
            criteria: vec![run_criterion(4, &spec, &ValidationOptions::default()), run_criterion(10, &spec, &ValidationOptions::default())],
            seconds: 0.0,
        };
        let text = report.to_text();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("[PASS]  4"));
    }

    #[test]
    fn unknown_criterion_fails() {
        assert!(!run_criterion(42, &SystemSpec::reference(), &ValidationOptions::default()).passed);
    }
}
