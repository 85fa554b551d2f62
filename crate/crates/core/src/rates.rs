//! Decoherence and alignment-decay rates, the gas-induced energy shift and
//! the coherence oscillation frequency.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkit::{assoc_legendre2, gamma_real, gamma_three_fifths, half_line_gaussian, sphere, QuadratureRule};
use crate::params::SystemSpec;
use crate::scattering::{
    forward_prefactor, forward_shape_linearized, forward_shape_spectral, forward_shape_top_column, kappa_with,
    CircleAverage, CMatrix, C64,
};

/// Relative change under order doubling above which a quadrature result
/// is flagged as unconverged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    ClosedForm,
    Quadrature,
}

impl RateMethod {
    pub fn tag(self) -> &'static str {
        match self {
            RateMethod::ClosedForm => "closed_form",
            RateMethod::Quadrature => "quadrature",
        }
    }
}

impl std::str::FromStr for RateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(RateMethod::ClosedForm),
            "quadrature" => Ok(RateMethod::Quadrature),
            other => Err(Error::Config(format!("unknown rate method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeBackend {
    Linearized,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub j: u32,
    pub j_prime: u32,
    pub gamma: f64,
    pub method: RateMethod,
    pub a_coefficient: f64,
    /// (q order, sphere nodes) of a quadrature result.
    pub orders: Option<(usize, usize)>,
    pub relative_change: Option<f64>,
    pub converged: bool,
}

fn legendre_sq_guarded(k: u32, x: f64) -> f64 {
    // out-of-range arguments correspond to empty m-sums
    assoc_legendre2(k, x).map(|v| v * v).unwrap_or(0.0)
}

/// The rotational-state factor A_{jj'} of the closed-form rate.
pub fn a_coefficient(j: u32, j_prime: u32) -> f64 {
    let diff = crate::mathkit::p2m(0, level_arg(2.0 * j as f64, j)) - crate::mathkit::p2m(0, level_arg(2.0 * j_prime as f64, j_prime));
    diff * diff + (reorientation_terms(j) + reorientation_terms(j_prime))
}

fn level_arg(num: f64, j: u32) -> f64 {
    num / (2.0 * j as f64 + 1.0)
}

/// The P_2^1 and P_2^2 terms of A belonging to one level.
fn reorientation_terms(j: u32) -> f64 {
    let jf = j as f64;
    legendre_sq_guarded(1, level_arg(2.0 * jf - 1.0, j)) / 6.0 + legendre_sq_guarded(2, level_arg(2.0 * jf - 2.0, j)) / 24.0
}

/// Gamma(13/5) Gamma(3/5)^2 sqrt(pi) / 10.
pub fn closed_form_constant() -> f64 {
    gamma_real(2.6).expect("positive") * gamma_three_fifths().powi(2) * PI.sqrt() / 10.0
}

/// Everything in the closed-form rate except A_{jj'}.
pub fn closed_form_scale(spec: &SystemSpec) -> f64 {
    let hbar = spec.hbar();
    let mu = spec.mu();
    let qt = spec.q_th();
    let groups = PI.sqrt() * spec.density() * qt.powi(3) / (10.0 * mu * hbar * hbar);
    let aniso = (spec.molecule.aniso_ratio() / 30.0).powi(2);
    let vdw = (3.0 * PI * mu * spec.gas.c6 / (8.0 * hbar * qt)).powf(0.8);
    gamma_real(2.6).expect("positive") * gamma_three_fifths().powi(2) * groups * aniso * vdw
}

pub fn gamma_closed_form(j: u32, j_prime: u32, spec: &SystemSpec) -> RateResult {
    let a = a_coefficient(j, j_prime);
    RateResult {
        j,
        j_prime,
        gamma: closed_form_scale(spec) * a,
        method: RateMethod::ClosedForm,
        a_coefficient: a,
        orders: None,
        relative_change: None,
        converged: true,
    }
}

/// \int dq q^p nu_th(q) w(q) on the half-line rule, with q = q_th x.
fn thermal_moment<F: Fn(f64) -> f64>(p: i32, rule: &QuadratureRule<f64>, spec: &SystemSpec, weight: F) -> f64 {
    let qt = spec.q_th();
    let sum: f64 = rule.iter().map(|(&x, w)| w * x.powi(p) * weight(qt * x)).sum();
    sum * qt.powi(p + 1) / (PI.sqrt() * qt).powi(3)
}

/// \int dq q^3 nu_th(q) |F-prefactor(q)|^2.
pub(crate) fn rate_q_moment(spec: &SystemSpec, q_order: usize) -> f64 {
    let rule = half_line_gaussian(q_order);
    thermal_moment(3, &rule, spec, |q| forward_prefactor(q, spec).norm_sqr())
}

/// \int dq q^2 nu_th(q) Re F-prefactor(q).
pub(crate) fn shift_q_moment(spec: &SystemSpec, q_order: usize) -> f64 {
    let rule = half_line_gaussian(q_order);
    thermal_moment(2, &rule, spec, |q| forward_prefactor(q, spec).re)
}

/// Bracketed integrand of the rate at one incidence direction, given the
/// (m, j) column entries of each shape matrix for m = j, j-1, j-2, ...
fn bracket(col_j: &[C64], col_jp: &[C64], same: bool) -> f64 {
    let first = if same { 0.0 } else { (col_j[0] - col_jp[0]).norm_sqr() };
    first + col_j[1..].iter().map(|z| z.norm_sqr()).sum::<f64>() + col_jp[1..].iter().map(|z| z.norm_sqr()).sum::<f64>()
}

fn top_column(m: &CMatrix) -> Vec<C64> {
    let d = m.nrows();
    (0..d).map(|k| m[(d - 1 - k, d - 1)]).collect()
}

fn direction_integral(j: u32, j_prime: u32, spec: &SystemSpec, backend: AmplitudeBackend, nodes: &QuadratureRule<Vector3<f64>>) -> Result<f64> {
    let r = spec.molecule.aniso_ratio();
    let mode = spec.numerics.kappa_mode;
    let (kj, kjp) = (kappa_with(j, mode), kappa_with(j_prime, mode));
    let mut acc = 0.0;
    for (n, w) in nodes.iter() {
        let b = match backend {
            AmplitudeBackend::Linearized => {
                let cj = forward_shape_top_column(j, n, r, kj);
                let cjp = forward_shape_top_column(j_prime, n, r, kjp);
                let lj = (2 * j as usize + 1).min(3);
                let ljp = (2 * j_prime as usize + 1).min(3);
                bracket(&cj[..lj], &cjp[..ljp], j == j_prime)
            }
            AmplitudeBackend::Spectral => {
                let sj = forward_shape_spectral(j, n, spec)?;
                let sjp = forward_shape_spectral(j_prime, n, spec)?;
                bracket(&top_column(&sj), &top_column(&sjp), j == j_prime)
            }
        };
        acc += w * 2.0 * PI * b;
    }
    Ok(acc)
}

fn gamma_numeric_at(j: u32, j_prime: u32, spec: &SystemSpec, backend: AmplitudeBackend, q_order: usize, sphere_order: usize) -> Result<f64> {
    let qm = rate_q_moment(spec, q_order);
    let angular = direction_integral(j, j_prime, spec, backend, &sphere(sphere_order))?;
    Ok(spec.density() / (2.0 * spec.mu()) * qm * angular)
}

/// Direct quadrature of the rate integral over thermal momenta and
/// incidence directions, with the outgoing direction reduced to the
/// forward peak. Orders come from the spec; the result is recomputed with
/// each order doubled to set the convergence flag.
pub fn gamma_numeric(j: u32, j_prime: u32, spec: &SystemSpec, backend: AmplitudeBackend) -> Result<RateResult> {
    let qo = spec.numerics.quad_order_q;
    let so = spec.numerics.quad_order_sphere;
    let base = gamma_numeric_at(j, j_prime, spec, backend, qo, so)?;
    let dq = gamma_numeric_at(j, j_prime, spec, backend, 2 * qo, so)?;
    let ds = gamma_numeric_at(j, j_prime, spec, backend, qo, 2 * so)?;
    let scale = base.abs().max(f64::MIN_POSITIVE);
    let change = ((dq - base).abs().max((ds - base).abs())) / scale;
    let change = if base == 0.0 && dq == 0.0 && ds == 0.0 { 0.0 } else { change };
    Ok(RateResult {
        j,
        j_prime,
        gamma: base,
        method: RateMethod::Quadrature,
        a_coefficient: a_coefficient(j, j_prime),
        orders: Some((qo, sphere(so).len())),
        relative_change: Some(change),
        converged: change <= CONVERGENCE_TOL,
    })
}

/// Gamma_j = 2 gamma_{j, j-2}, the decay rate of the alignment signal.
/// The returned `gamma` field holds Gamma_j.
pub fn signal_decay_rate(j: u32, spec: &SystemSpec) -> Result<RateResult> {
    if j < 2 {
        return Err(Error::Domain(format!("alignment signal needs j >= 2, got {j}")));
    }
    let mut r = gamma_closed_form(j, j - 2, spec);
    r.gamma *= 2.0;
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct EnergyShift {
    pub j: u32,
    /// Hermitian (2j+1) x (2j+1) block of H_g in energy units.
    pub matrix: CMatrix,
    pub relative_change: f64,
    pub converged: bool,
}

fn shift_at(j: u32, spec: &SystemSpec, backend: AmplitudeBackend, q_order: usize, sphere_order: usize) -> Result<CMatrix> {
    let d = 2 * j as usize + 1;
    let mut acc = CMatrix::zeros(d, d);
    for (n, w) in sphere(sphere_order).iter() {
        let s = match backend {
            AmplitudeBackend::Linearized => forward_shape_linearized(j, n, spec, CircleAverage::Analytic),
            AmplitudeBackend::Spectral => forward_shape_spectral(j, n, spec)?,
        };
        acc += s * C64::from(w);
    }
    let hbar = spec.hbar();
    let coeff = -2.0 * PI * hbar * hbar * spec.density() / spec.mu() * shift_q_moment(spec, q_order);
    Ok(acc * C64::from(coeff))
}

/// Gas-induced energy shift on the j block. The real part of the forward
/// amplitude is taken as its hermitian part, which for the phase-times-
/// hermitian structure is Re(prefactor) times the direction factor.
pub fn energy_shift_matrix(j: u32, spec: &SystemSpec, backend: AmplitudeBackend) -> Result<EnergyShift> {
    let qo = spec.numerics.quad_order_q;
    let so = spec.numerics.quad_order_sphere;
    let base = shift_at(j, spec, backend, qo, so)?;
    let fine = shift_at(j, spec, backend, 2 * qo, 2 * so)?;
    let scale = base.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let change = (&fine - &base).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    Ok(EnergyShift {
        j,
        matrix: base,
        relative_change: change,
        converged: change <= CONVERGENCE_TOL,
    })
}

/// Delta_{jj'} = (E_j - E_j')/hbar + (<jj|H_g|jj> - <j'j'|H_g|j'j'>)/hbar,
/// the free rotor spectrum plus the gas shift of the two stretched states.
pub fn delta_frequency(j: u32, j_prime: u32, spec: &SystemSpec) -> Result<f64> {
    let hbar = spec.hbar();
    let free = (spec.rotational_energy(j) - spec.rotational_energy(j_prime)) / hbar;
    if j == j_prime {
        return Ok(free);
    }
    let hj = energy_shift_matrix(j, spec, AmplitudeBackend::Linearized)?;
    let hjp = energy_shift_matrix(j_prime, spec, AmplitudeBackend::Linearized)?;
    let dj = 2 * j as usize;
    let djp = 2 * j_prime as usize;
    Ok(free + (hj.matrix[(dj, dj)].re - hjp.matrix[(djp, djp)].re) / hbar)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub j: u32,
    pub j_prime: u32,
    pub gamma: f64,
    pub gamma_signal: f64,
    pub a_coeff: f64,
    pub method: RateMethod,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Gamma_j strictly decreases beyond the row where it peaks.
    pub monotone_beyond_max: bool,
}

impl RateTable {
    pub fn peak_j(&self) -> Option<u32> {
        self.rows
            .iter()
            .max_by(|a, b| a.gamma_signal.total_cmp(&b.gamma_signal))
            .map(|r| r.j)
    }

    /// Least-squares slope of ln Gamma_j against ln j over rows in `range`.
    pub fn log_log_slope(&self, range: RangeInclusive<u32>) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| range.contains(&r.j) && r.gamma_signal > 0.0)
            .map(|r| ((r.j as f64).ln(), r.gamma_signal.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

fn rate_row(j: u32, spec: &SystemSpec, method: RateMethod) -> Result<RateRow> {
    let r = match method {
        RateMethod::ClosedForm => gamma_closed_form(j, j - 2, spec),
        RateMethod::Quadrature => gamma_numeric(j, j - 2, spec, AmplitudeBackend::Linearized)?,
    };
    Ok(RateRow {
        j,
        j_prime: j - 2,
        gamma: r.gamma,
        gamma_signal: 2.0 * r.gamma,
        a_coeff: r.a_coefficient,
        method,
        converged: r.converged,
    })
}

/// Alignment-decay rates Gamma_j = 2 gamma_{j,j-2} over `j_range`.
pub fn sweep_rates(j_range: RangeInclusive<u32>, spec: &SystemSpec, method: RateMethod) -> Result<RateTable> {
    let (lo, hi) = (*j_range.start(), *j_range.end());
    if lo < 2 || lo > hi {
        return Err(Error::Domain(format!("sweep range {lo}..={hi} must satisfy 2 <= j_min <= j_max")));
    }
    let js: Vec<u32> = (lo..=hi).collect();
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<RateRow>> = {
        use rayon::prelude::*;
        js.par_iter().map(|&j| rate_row(j, spec, method)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<RateRow>> = js.iter().map(|&j| rate_row(j, spec, method)).collect();
    let rows = rows?;

    let peak = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.gamma_signal.total_cmp(&b.1.gamma_signal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let monotone_beyond_max = rows[peak..].windows(2).all(|w| w[1].gamma_signal < w[0].gamma_signal);
    Ok(RateTable { rows, monotone_beyond_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{GasSpec, KappaMode, MoleculeSpec, NumericsSpec, UnitSystem};

    const C_EXACT: f64 = 0.561_951_028_726_8;

    fn reference() -> SystemSpec {
        SystemSpec::reference()
    }

    #[test]
    fn a_coefficient_guard_values() {
        assert_eq!(a_coefficient(0, 0), 0.0);
        assert!((a_coefficient(2, 0) - 1.5318).abs() < 1e-12);
        // term by term: 0.9216 + 0.3456 + 0 + 0.2646 + 0
        let p2 = 0.5 * (3.0 * 0.64 - 1.0);
        let terms = (p2 + 0.5f64).powi(2) + (3.0 * 0.6 * 0.8f64).powi(2) / 6.0 + (3.0 * (1.0 - 0.16f64)).powi(2) / 24.0;
        assert!((a_coefficient(2, 0) - terms).abs() < 1e-14);
        assert!((a_coefficient(10, 8) - 0.547_605_386_634_775_8).abs() < 1e-12);
        assert!((a_coefficient(12, 10) - 0.463_715_942_248_754).abs() < 1e-12);
        assert!((a_coefficient(1, 0) - 0.967_592_592_592_592_6).abs() < 1e-12);
    }

    #[test]
    fn a_coefficient_asymptote() {
        let v = 500.0 * a_coefficient(500, 498) / 6.0;
        assert!((v - 0.99825).abs() < 1e-4, "{v}");
    }

    #[test]
    fn closed_form_constant_value() {
        assert!((closed_form_constant() - C_EXACT).abs() < 1e-12);
        let r = gamma_closed_form(10, 8, &reference());
        assert!((r.gamma / r.a_coefficient - C_EXACT).abs() < 1e-12);
        assert!((r.gamma - 0.307_727_410_355_76).abs() < 1e-11);
        assert!((signal_decay_rate(10, &reference()).unwrap().gamma - 0.615_454_820_711_52).abs() < 1e-11);
        assert!((gamma_closed_form(12, 10, &reference()).gamma - 0.260_585_650_783_72).abs() < 1e-11);
    }

    #[test]
    fn signal_rate_guard() {
        assert!(signal_decay_rate(1, &reference()).is_err());
    }

    #[test]
    fn closed_form_zero_without_anisotropy() {
        let spec = reference().with_aniso_ratio(0.0);
        assert_eq!(gamma_closed_form(10, 8, &spec).gamma, 0.0);
    }

    #[test]
    fn temperature_scaling() {
        let hot = reference();
        let mut gas = hot.gas.clone();
        gas.temperature /= 4.0;
        let cold = SystemSpec::new(UnitSystem::Normalized, hot.molecule.clone(), gas, hot.numerics.clone()).unwrap();
        assert!((cold.q_th() - 0.5).abs() < 1e-15);
        let ratio = gamma_closed_form(10, 8, &hot).gamma / gamma_closed_form(10, 8, &cold).gamma;
        assert!((ratio - 2f64.powf(2.2)).abs() < 1e-10 * ratio);
    }

    #[test]
    fn numeric_matches_closed_form_with_half_kappa() {
        let spec = reference().with_kappa(KappaMode::Half);
        for (j, jp) in [(10, 8), (4, 2), (12, 10)] {
            let num = gamma_numeric(j, jp, &spec, AmplitudeBackend::Linearized).unwrap();
            let cf = gamma_closed_form(j, jp, &spec);
            assert!(num.converged);
            assert!(((num.gamma - cf.gamma) / cf.gamma).abs() < 1e-9, "{} vs {}", num.gamma, cf.gamma);
        }
    }

    #[test]
    fn numeric_equal_levels_drops_difference_term() {
        let spec = reference().with_kappa(KappaMode::Half);
        let num = gamma_numeric(6, 6, &spec, AmplitudeBackend::Linearized).unwrap();
        let cf = gamma_closed_form(6, 6, &spec);
        assert!(((num.gamma - cf.gamma) / cf.gamma).abs() < 1e-9);
    }

    #[test]
    fn numeric_zero_without_anisotropy() {
        let spec = reference().with_aniso_ratio(0.0);
        let r = gamma_numeric(10, 8, &spec, AmplitudeBackend::Linearized).unwrap();
        assert_eq!(r.gamma, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn spectral_rates_close_to_linearized_for_weak_anisotropy() {
        let mut spec = reference().with_aniso_ratio(1.5 * 0.02);
        spec.numerics.quad_order_sphere = 26;
        let lin = gamma_numeric(4, 2, &spec, AmplitudeBackend::Linearized).unwrap();
        let spe = gamma_numeric(4, 2, &spec, AmplitudeBackend::Spectral).unwrap();
        assert!(((spe.gamma - lin.gamma) / lin.gamma).abs() < 0.05);
    }

    #[test]
    fn exact_and_half_kappa_converge_at_large_j() {
        let spec = reference();
        for j in [25, 40, 80] {
            let exact = gamma_numeric(j, j - 2, &spec, AmplitudeBackend::Linearized).unwrap().gamma;
            let half = gamma_numeric(j, j - 2, &spec.with_kappa(KappaMode::Half), AmplitudeBackend::Linearized)
                .unwrap()
                .gamma;
            assert!(((exact - half) / half).abs() <= 0.01, "j = {j}");
        }
    }

    #[test]
    fn rates_scale_with_density_and_anisotropy() {
        let spec = reference();
        let g0 = gamma_closed_form(8, 6, &spec).gamma;
        let mut gas = spec.gas.clone();
        gas.density = Some(3.0);
        let dense = SystemSpec::new(spec.units, spec.molecule.clone(), gas, spec.numerics.clone()).unwrap();
        assert!((gamma_closed_form(8, 6, &dense).gamma / g0 - 3.0).abs() < 1e-12);
        let weak = spec.with_aniso_ratio(15.0);
        assert!((gamma_closed_form(8, 6, &weak).gamma / g0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn energy_shift_structure() {
        let mut spec = reference();
        spec.numerics.quad_order_sphere = 50;
        let iso = spec.with_aniso_ratio(0.0);
        let s2 = energy_shift_matrix(2, &iso, AmplitudeBackend::Linearized).unwrap();
        let s5 = energy_shift_matrix(5, &iso, AmplitudeBackend::Linearized).unwrap();
        let s = s2.matrix[(0, 0)].re;
        assert!(s < 0.0);
        assert!((s5.matrix[(3, 3)].re - s).abs() < 1e-14 * s.abs());

        let an = energy_shift_matrix(4, &spec, AmplitudeBackend::Linearized).unwrap();
        let m = &an.matrix;
        let diag = m[(0, 0)].norm();
        for r in 0..9 {
            for c in 0..9 {
                assert!((m[(r, c)] - m[(c, r)].conj()).norm() < 1e-14 * diag);
                if r != c {
                    assert!(m[(r, c)].norm() <= 1e-12 * diag);
                }
            }
        }
    }

    #[test]
    fn energy_shift_spectral_is_diagonal() {
        let mut spec = reference().with_aniso_ratio(0.1);
        spec.numerics.quad_order_sphere = 26;
        let an = energy_shift_matrix(3, &spec, AmplitudeBackend::Spectral).unwrap();
        let diag = an.matrix[(0, 0)].norm();
        for r in 0..7 {
            for c in 0..7 {
                if r != c {
                    assert!(an.matrix[(r, c)].norm() <= 1e-10 * diag);
                }
            }
        }
    }

    #[test]
    fn delta_frequency_free_rotor() {
        let spec = reference().with_aniso_ratio(0.0);
        assert_eq!(delta_frequency(3, 3, &spec).unwrap(), 0.0);
        let d = delta_frequency(2, 0, &spec).unwrap();
        let free = 6.0 / (2.0 * spec.molecule.moment_of_inertia);
        assert!((d - free).abs() < 1e-12);
    }

    #[test]
    fn sweep_closed_form() {
        let spec = reference();
        let t = sweep_rates(10..=200, &spec, RateMethod::ClosedForm).unwrap();
        assert_eq!(t.rows.len(), 191);
        assert!(t.rows.iter().all(|r| r.gamma_signal > 0.0));
        assert!(t.monotone_beyond_max);
        let t = sweep_rates(200..=1000, &spec, RateMethod::ClosedForm).unwrap();
        let slope = t.log_log_slope(200..=1000).unwrap();
        assert!((slope + 1.0).abs() < 0.05, "{slope}");
        assert!(sweep_rates(1..=4, &spec, RateMethod::ClosedForm).is_err());
    }

    #[test]
    fn sweep_quadrature_agrees_with_closed_form() {
        let spec = reference().with_kappa(KappaMode::Half);
        let cf = sweep_rates(4..=20, &spec, RateMethod::ClosedForm).unwrap();
        let qd = sweep_rates(4..=20, &spec, RateMethod::Quadrature).unwrap();
        for (a, b) in cf.rows.iter().zip(&qd.rows) {
            assert!(((a.gamma - b.gamma) / a.gamma).abs() < 0.005);
        }
    }

    #[test]
    fn si_rates_match_normalized() {
        let amu = 1.660_539_066_60e-27;
        let a3 = 1e-30;
        let molecule = MoleculeSpec::new(28.0 * amu, 1.4e-46, 1.74 * a3, 0.70 * a3).unwrap();
        let gas = GasSpec::with_density(28.0 * amu, 295.0, 2.5e25, 1.3e-77);
        let si = SystemSpec::new(UnitSystem::Si, molecule, gas, NumericsSpec::default()).unwrap();
        let (n, scales) = si.normalized();
        let direct = gamma_closed_form(30, 28, &si).gamma;
        let via = scales.rate(gamma_closed_form(30, 28, &n).gamma);
        assert!(((direct - via) / direct).abs() < 1e-12);
        let num = gamma_numeric(30, 28, &si, AmplitudeBackend::Linearized).unwrap().gamma;
        let num_n = scales.rate(gamma_numeric(30, 28, &n, AmplitudeBackend::Linearized).unwrap().gamma);
        assert!(((num - num_n) / num).abs() < 1e-10);
    }

    proptest::proptest! {
        #[test]
        fn a_coefficient_symmetric(j in 0u32..400, jp in 0u32..400) {
            proptest::prop_assert_eq!(a_coefficient(j, jp), a_coefficient(jp, j));
            proptest::prop_assert!(a_coefficient(j, jp) >= 0.0);
        }

        #[test]
        fn gamma_non_negative(j in 2u32..200, ratio in 0.0f64..50.0) {
            let spec = SystemSpec::reference().with_aniso_ratio(ratio);
            proptest::prop_assert!(gamma_closed_form(j, j - 2, &spec).gamma >= 0.0);
        }
    }
}
