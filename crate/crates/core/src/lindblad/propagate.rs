use serde::Serialize;

use super::dissipator::{apply_raw, DissipatorSet, Triplets};
use super::state::{max_abs, BasisLayout, RotorState};
use crate::error::{Error, Result};
use crate::params::SystemSpec;
use crate::rates::{energy_shift_matrix, AmplitudeBackend};
use crate::scattering::{CMatrix, C64};

/// Largest allowed dt times the spectral range of H/hbar.
pub const MAX_PHASE_PER_STEP: f64 = 0.1;
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Largest dimension accepted by the exact Liouvillian path.
pub const EXACT_MAX_DIM: usize = 60;

/// (H + H_g)/hbar on a layout, stored sparsely.
#[derive(Clone, Debug)]
pub struct CoherentGenerator {
    pub layout: BasisLayout,
    entries: Triplets,
    /// max minus min eigenvalue of (H + H_g)/hbar.
    pub spectral_range: f64,
}

impl CoherentGenerator {
    /// Free rotor spectrum only.
    pub fn free(spec: &SystemSpec, layout: &BasisLayout) -> Self {
        let hbar = spec.hbar();
        let mut entries = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (j, off, n) in layout.blocks() {
            let e = spec.rotational_energy(j) / hbar;
            lo = lo.min(e);
            hi = hi.max(e);
            for i in off..off + n {
                entries.push((i, i, C64::from(e)));
            }
        }
        Self {
            layout: layout.clone(),
            entries,
            spectral_range: hi - lo,
        }
    }

    /// Free rotor spectrum plus the gas-induced shift of every block.
    pub fn with_gas_shift(spec: &SystemSpec, layout: &BasisLayout, backend: AmplitudeBackend) -> Result<Self> {
        let hbar = spec.hbar();
        let mut entries = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (j, off, n) in layout.blocks() {
            let shift = energy_shift_matrix(j, spec, backend)?;
            let e = spec.rotational_energy(j);
            let mut block = shift.matrix / C64::from(hbar);
            for i in 0..n {
                block[(i, i)] += C64::from(e / hbar);
            }
            let herm = (&block + block.adjoint()) * C64::from(0.5);
            for ev in nalgebra::SymmetricEigen::new(herm).eigenvalues.iter() {
                lo = lo.min(*ev);
                hi = hi.max(*ev);
            }
            for c in 0..n {
                for r in 0..n {
                    let v = block[(r, c)];
                    if v != C64::new(0.0, 0.0) {
                        entries.push((off + r, off + c, v));
                    }
                }
            }
        }
        Ok(Self {
            layout: layout.clone(),
            entries,
            spectral_range: hi - lo,
        })
    }
}

/// -i [G, rho] for sparse G, column-major.
fn add_commutator(g: &Triplets, rho: &[C64], d: usize, out: &mut [C64]) {
    let mi = C64::new(0.0, -1.0);
    for k in 0..d {
        let col = k * d;
        for &(r, c, v) in g {
            out[col + r] += mi * v * rho[col + c];
        }
    }
    for &(l, k, v) in g {
        let f = -mi * v;
        let (dst, src) = (k * d, l * d);
        for i in 0..d {
            out[dst + i] += f * rho[src + i];
        }
    }
}

fn generator(h: &CoherentGenerator, dis: &DissipatorSet, rho: &CMatrix) -> CMatrix {
    let d = rho.nrows();
    let mut out = if dis.is_empty() { CMatrix::zeros(d, d) } else { apply_raw(dis, rho) };
    add_commutator(&h.entries, rho.as_slice(), d, out.as_mut_slice());
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct PropagationOptions {
    /// Keep every n-th state (the initial and final states are always kept).
    pub record_every: usize,
    /// Minimum-eigenvalue diagnostic period in steps.
    pub eig_every: usize,
    pub tol_trace: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            eig_every: 50,
            tol_trace: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<RotorState>,
    /// Smallest eigenvalue of each recorded state, where a diagnostic ran.
    pub state_min_eigenvalues: Vec<Option<f64>>,
    /// (time, smallest eigenvalue) at the diagnostic steps.
    pub min_eigenvalues: Vec<(f64, f64)>,
    pub steps: usize,
    pub dt: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &RotorState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalues.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalue diagnostic nearest to time `t`.
    pub fn min_eigenvalue_near(&self, t: f64) -> f64 {
        self.min_eigenvalues
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|p| p.1)
            .unwrap_or(f64::NAN)
    }
}

/// Fixed-step classical RK4 integration of
/// d rho/dt = -i [H + H_g, rho]/hbar + D rho.
///
/// The step is t_final / ceil(t_final / dt), never larger than `dt`.
pub fn propagate_with(
    rho0: &RotorState,
    dis: &DissipatorSet,
    h: &CoherentGenerator,
    t_final: f64,
    dt: f64,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    if rho0.layout != dis.layout || rho0.layout != h.layout {
        return Err(Error::Layout("state, dissipator and Hamiltonian layouts differ".into()));
    }
    if !(dt > 0.0 && t_final >= 0.0) {
        return Err(Error::Domain(format!("need dt > 0 and t_final >= 0, got dt = {dt}, t_final = {t_final}")));
    }
    let phase = dt * h.spectral_range;
    if phase > MAX_PHASE_PER_STEP {
        return Err(Error::StepSize(phase));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let step = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let record_every = opts.record_every.max(1);
    let eig_every = opts.eig_every.max(1);

    let tr0 = rho0.trace().re;
    let mut rho = rho0.matrix.clone();
    let mut t = rho0.time;
    let mut states = vec![rho0.clone()];
    let first = rho0.min_eigenvalue();
    let mut min_eigs = vec![(t, first)];
    let mut state_eigs = vec![Some(first)];
    let (mut max_tr, mut max_h) = (0.0f64, rho0.hermiticity_defect());
    let half = C64::from(0.5 * step);
    let full = C64::from(step);
    let sixth = C64::from(step / 6.0);

    for n in 1..=steps {
        let k1 = generator(h, dis, &rho);
        let k2 = generator(h, dis, &(&rho + &k1 * half));
        let k3 = generator(h, dis, &(&rho + &k2 * half));
        let k4 = generator(h, dis, &(&rho + &k3 * full));
        rho += (k1 + (k2 + k3) * C64::from(2.0) + k4) * sixth;
        t = rho0.time + n as f64 * step;

        let drift = (rho.trace().re - tr0).abs();
        max_tr = max_tr.max(drift);
        if drift > opts.tol_trace {
            return Err(Error::TraceDrift {
                drift,
                tol: opts.tol_trace,
                t,
            });
        }
        let herm = max_abs(&(&rho - rho.adjoint()));
        max_h = max_h.max(herm);
        if herm > HERMITICITY_TOL {
            return Err(Error::HermiticityDrift(herm));
        }
        let snapshot = || RotorState {
            layout: rho0.layout.clone(),
            matrix: rho.clone(),
            time: t,
        };
        let eig = (n % eig_every == 0 || n == steps).then(|| snapshot().min_eigenvalue());
        if let Some(e) = eig {
            min_eigs.push((t, e));
        }
        if n % record_every == 0 || n == steps {
            states.push(snapshot());
            state_eigs.push(eig);
        }
    }
    Ok(Trajectory {
        states,
        state_min_eigenvalues: state_eigs,
        min_eigenvalues: min_eigs,
        steps,
        dt: step,
        max_trace_drift: max_tr,
        max_hermiticity_drift: max_h,
    })
}

/// [`propagate_with`] with the gas-shifted Hamiltonian of the linearized
/// backend, the trace tolerance of `spec.numerics` and every step recorded.
pub fn propagate(rho0: &RotorState, dis: &DissipatorSet, spec: &SystemSpec, t_final: f64, dt: f64) -> Result<Trajectory> {
    let h = CoherentGenerator::with_gas_shift(spec, &rho0.layout, AmplitudeBackend::Linearized)?;
    let opts = PropagationOptions {
        tol_trace: spec.numerics.tol_trace,
        ..PropagationOptions::default()
    };
    propagate_with(rho0, dis, &h, t_final, dt, &opts)
}

/// Matrix of the full generator acting on column-stacked density matrices.
pub fn liouvillian_matrix(h: &CoherentGenerator, dis: &DissipatorSet) -> Result<CMatrix> {
    let d = h.layout.dim();
    if d > EXACT_MAX_DIM {
        return Err(Error::Layout(format!("exact Liouvillian limited to D <= {EXACT_MAX_DIM}, got {d}")));
    }
    let mut l = CMatrix::zeros(d * d, d * d);
    for col in 0..d * d {
        let mut e = CMatrix::zeros(d, d);
        e.as_mut_slice()[col] = C64::from(1.0);
        let g = generator(h, dis, &e);
        l.column_mut(col).copy_from_slice(g.as_slice());
    }
    Ok(l)
}

/// rho(t) = exp(L t) rho(0) by dense matrix exponentiation, for small bases.
pub fn propagate_exact(rho0: &RotorState, dis: &DissipatorSet, h: &CoherentGenerator, t: f64) -> Result<RotorState> {
    let d = rho0.dim();
    let l = liouvillian_matrix(h, dis)?;
    let prop = (l * C64::from(t)).exp();
    let v = nalgebra::DVector::from_column_slice(rho0.matrix.as_slice());
    let out = prop * v;
    RotorState::new(rho0.layout.clone(), CMatrix::from_column_slice(d, d, out.as_slice()), rho0.time + t)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    /// Root-mean-square residual of ln(value).
    pub residual: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 5;

/// Least-squares slope of -ln(value) against time.
///
/// Requires at least five samples at strictly increasing times and
/// positive values.
pub fn extract_decay_rate(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(&(t, v)) = samples.iter().find(|s| !(s.1 > 0.0) || !s.1.is_finite()) {
        return Err(Error::Fit(format!("non-positive sample {v} at t = {t}")));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Fit("sample times must be strictly increasing".into()));
    }
    let n = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1.ln()).sum::<f64>() / n;
    let stt: f64 = samples.iter().map(|s| (s.0 - mt).powi(2)).sum();
    let sty: f64 = samples.iter().map(|s| (s.0 - mt) * (s.1.ln() - my)).sum();
    let slope = sty / stt;
    let residual = (samples
        .iter()
        .map(|s| (s.1.ln() - my - slope * (s.0 - mt)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        residual,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::dissipator::build_dissipator_with_orders;
    use crate::lindblad::state::{alignment_signal, centrifuge_state, isotropic_state};
    use crate::params::KappaMode;
    use crate::rates::gamma_closed_form;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn spec() -> SystemSpec {
        let mut s = SystemSpec::reference().with_kappa(KappaMode::Half);
        s.numerics.quad_order_sphere = 26;
        s.numerics.quad_order_q = 24;
        s
    }

    #[test]
    fn fit_exact_exponential() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.1, (-2.0 * i as f64 * 0.1).exp())).collect();
        let f = extract_decay_rate(&s).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-10);
        assert!(f.residual < 1e-12);
        let c: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 0.7)).collect();
        assert!(extract_decay_rate(&c).unwrap().rate.abs() < 1e-15);
    }

    #[test]
    fn fit_noisy_exponential() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(21);
        let s: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.25;
                (t, (-0.3 * t).exp() * (1.0 + 1e-3 * rng.gen_range(-1.0..1.0)))
            })
            .collect();
        let f = extract_decay_rate(&s).unwrap();
        assert!((f.rate - 0.3).abs() < 0.003);
    }

    #[test]
    fn fit_preconditions() {
        assert!(extract_decay_rate(&[(0.0, 1.0), (1.0, 0.5)]).is_err());
        let bad: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, if i == 3 { 0.0 } else { 1.0 })).collect();
        assert!(extract_decay_rate(&bad).is_err());
        let unordered: Vec<(f64, f64)> = (0..6).map(|i| (1.0, 1.0 + i as f64)).collect();
        assert!(extract_decay_rate(&unordered).is_err());
    }

    #[test]
    fn unitary_evolution_keeps_purity() {
        let s = spec();
        let layout = BasisLayout::new(8, 12).unwrap();
        let h = CoherentGenerator::free(&s, &layout);
        let c = C64::from(0.5f64.sqrt());
        let rho = centrifuge_state(&layout, &BTreeMap::from([(8, c), (12, c)])).unwrap();
        let traj = propagate_with(&rho, &DissipatorSet::empty(&layout), &h, 20.0, 0.02, &PropagationOptions::default()).unwrap();
        assert!((traj.last().purity() - 1.0).abs() < 1e-8);
        // the coherence rotates at (E_12 - E_8)/hbar
        let z = traj.last().coherence(12, 8).unwrap();
        let w = (s.rotational_energy(12) - s.rotational_energy(8)) / s.hbar();
        assert!((z - C64::from_polar(0.5, -w * 20.0)).norm() < 1e-7);
    }

    #[test]
    fn step_size_guard() {
        let s = spec();
        let layout = BasisLayout::new(2, 12).unwrap();
        let h = CoherentGenerator::free(&s, &layout);
        let rho = isotropic_state(&layout, &BTreeMap::from([(2, 1.0)])).unwrap();
        let err = propagate_with(&rho, &DissipatorSet::empty(&layout), &h, 1.0, 0.5, &PropagationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::StepSize(_)));
        assert!(err.to_string().contains("step-size violation"));
    }

    #[test]
    fn isotropic_state_stays_put() {
        let s = spec();
        let layout = BasisLayout::new(9, 12).unwrap();
        let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, 24, 26).unwrap();
        let rho = isotropic_state(&layout, &BTreeMap::from([(9, 0.25), (10, 0.25), (11, 0.25), (12, 0.25)])).unwrap();
        let traj = propagate(&rho, &dis, &s, 3.0, 0.05).unwrap();
        assert!(max_abs(&(&traj.last().matrix - &rho.matrix)) <= 1e-8);
    }

    #[test]
    fn coherence_follows_closed_form_rate() {
        let s = spec();
        let layout = BasisLayout::new(10, 12).unwrap();
        let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, 24, 26).unwrap();
        let c = C64::from(0.5f64.sqrt());
        let rho = centrifuge_state(&layout, &BTreeMap::from([(10, c), (12, c)])).unwrap();
        let gamma = gamma_closed_form(12, 10, &s).gamma;
        let t_fit = 0.02 / gamma;
        let traj = propagate(&rho, &dis, &s, t_fit, t_fit / 20.0).unwrap();
        let coh: Vec<(f64, f64)> = traj.states.iter().map(|st| (st.time, st.coherence(12, 10).unwrap().norm())).collect();
        let fit = extract_decay_rate(&coh).unwrap();
        assert!(((fit.rate - gamma) / gamma).abs() < 0.02, "{} vs {gamma}", fit.rate);
        let sig: Vec<(f64, f64)> = traj.states.iter().map(|st| (st.time, alignment_signal(st, 12).unwrap())).collect();
        let fit = extract_decay_rate(&sig).unwrap();
        assert!(((fit.rate - 2.0 * gamma) / (2.0 * gamma)).abs() < 0.02);
    }

    #[test]
    fn rk4_matches_exact_liouvillian() {
        let s = spec();
        let layout = BasisLayout::new(1, 3).unwrap();
        let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, 24, 26).unwrap();
        let h = CoherentGenerator::with_gas_shift(&s, &layout, AmplitudeBackend::Linearized).unwrap();
        let c = C64::from(0.5f64.sqrt());
        let rho = centrifuge_state(&layout, &BTreeMap::from([(1, c), (3, c)])).unwrap();
        let t = 0.5;
        let exact = propagate_exact(&rho, &dis, &h, t).unwrap();
        let traj = propagate_with(&rho, &dis, &h, t, 0.002, &PropagationOptions::default()).unwrap();
        assert!(max_abs(&(&exact.matrix - &traj.last().matrix)) < 1e-8);
        assert!(traj.min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn block_populations_conserved_and_purity_decreases() {
        let s = spec();
        let layout = BasisLayout::new(4, 7).unwrap();
        let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, 24, 26).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        let mut coeffs: BTreeMap<u32, C64> = (4..=7).map(|j| (j, C64::new(rng.gen(), rng.gen()))).collect();
        let n: f64 = coeffs.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        coeffs.values_mut().for_each(|z| *z /= n);
        let rho = centrifuge_state(&layout, &coeffs).unwrap();
        let traj = propagate(&rho, &dis, &s, 4.0, 0.02).unwrap();
        for j in 4..=7 {
            let p0 = rho.block_population(j).unwrap();
            for st in &traj.states {
                assert!((st.block_population(j).unwrap() - p0).abs() <= 1e-8);
            }
        }
        let pur: Vec<f64> = traj.states.iter().map(|s| s.purity()).collect();
        assert!(pur.windows(2).all(|w| w[1] <= w[0] + 1e-8));
        assert!(traj.min_eigenvalue() >= -1e-9);
    }
}
