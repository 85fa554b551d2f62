//! Browser bindings for the superrotor demo page. Everything runs on the
//! normalized reference system with an adjustable anisotropy ratio.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use superrotor::lindblad::{
    build_dissipator_with_orders, centrifuge_state, propagate_with, BasisLayout, CoherentGenerator, PropagationOptions,
};
use superrotor::params::SystemSpec;
use superrotor::rates::{gamma_closed_form, AmplitudeBackend};
use superrotor::scattering::{forward_amplitude_linearized, C64};
use wasm_bindgen::prelude::*;

const MAX_DEMO_J: u32 = 24;

fn spec(aniso_ratio: f64) -> Result<SystemSpec, String> {
    if !aniso_ratio.is_finite() || aniso_ratio < 0.0 {
        return Err(format!("anisotropy ratio must be finite and non-negative, got {aniso_ratio}"));
    }
    Ok(SystemSpec::reference().with_aniso_ratio(aniso_ratio))
}

/// Signal decay rates Gamma_j = 2 gamma_{j,j-2} for j = 2..=j_max.
pub fn signal_rates(j_max: u32, aniso_ratio: f64) -> Result<Vec<f64>, String> {
    if j_max < 2 {
        return Err("j_max must be at least 2".into());
    }
    let s = spec(aniso_ratio)?;
    Ok((2..=j_max).map(|j| 2.0 * gamma_closed_form(j, j - 2, &s).gamma).collect())
}

/// Frobenius norm of the forward amplitude at q_th on an n_theta x n_phi grid, row-major in theta.
pub fn amplitude_map(j: u32, aniso_ratio: f64, n_theta: usize, n_phi: usize) -> Result<Vec<f64>, String> {
    if j > MAX_DEMO_J || n_theta == 0 || n_phi == 0 || n_theta * n_phi > 40_000 {
        return Err("grid or j out of range".into());
    }
    let s = spec(aniso_ratio)?;
    let q = s.q_th();
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for it in 0..n_theta {
        let th = PI * (it as f64 + 0.5) / n_theta as f64;
        for ip in 0..n_phi {
            let ph = 2.0 * PI * (ip as f64 + 0.5) / n_phi as f64;
            let n = Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let f = forward_amplitude_linearized(j, q, &n, &s).map_err(|e| e.to_string())?;
            out.push(f.entries.norm());
        }
    }
    Ok(out)
}

/// Two-level superposition of j and j-2 propagated for `lifetimes` / gamma.
/// Returns triples (t, |rho_{j,j-2}|, exp(-gamma t) / 2).
pub fn coherence_trace(j: u32, aniso_ratio: f64, lifetimes: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(2..=MAX_DEMO_J).contains(&j) || !(lifetimes > 0.0 && lifetimes <= 10.0) || !(2..=2000).contains(&samples) {
        return Err("j, lifetimes or samples out of range".into());
    }
    let s = spec(aniso_ratio)?;
    let err = |e: superrotor::Error| e.to_string();
    let gamma = gamma_closed_form(j, j - 2, &s).gamma;
    let t_final = if gamma > 0.0 { lifetimes / gamma } else { lifetimes };
    let layout = BasisLayout::new(j - 2, j).map_err(err)?;
    let dis = build_dissipator_with_orders(&s, &layout, AmplitudeBackend::Linearized, 24, 26).map_err(err)?;
    let h = CoherentGenerator::with_gas_shift(&s, &layout, AmplitudeBackend::Linearized).map_err(err)?;
    let c = C64::from(0.5f64.sqrt());
    let rho = centrifuge_state(&layout, &BTreeMap::from([(j, c), (j - 2, c)])).map_err(err)?;
    let by_phase = if h.spectral_range > 0.0 { 0.05 / h.spectral_range } else { f64::INFINITY };
    let dt = by_phase.min(t_final / (4 * samples) as f64);
    let steps = (t_final / dt).ceil() as usize;
    let opts = PropagationOptions {
        record_every: (steps / samples).max(1),
        eig_every: usize::MAX,
        ..PropagationOptions::default()
    };
    let traj = propagate_with(&rho, &dis, &h, t_final, dt, &opts).map_err(err)?;
    let mut out = Vec::with_capacity(3 * traj.states.len());
    for st in &traj.states {
        out.push(st.time);
        out.push(st.coherence(j, j - 2).map_err(err)?.norm());
        out.push(0.5 * (-gamma * st.time).exp());
    }
    Ok(out)
}

#[wasm_bindgen(js_name = signalRates)]
pub fn signal_rates_js(j_max: u32, aniso_ratio: f64) -> Result<Vec<f64>, JsError> {
    signal_rates(j_max, aniso_ratio).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = amplitudeMap)]
pub fn amplitude_map_js(j: u32, aniso_ratio: f64, n_theta: usize, n_phi: usize) -> Result<Vec<f64>, JsError> {
    amplitude_map(j, aniso_ratio, n_theta, n_phi).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = coherenceTrace)]
pub fn coherence_trace_js(j: u32, aniso_ratio: f64, lifetimes: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    coherence_trace(j, aniso_ratio, lifetimes, samples).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_grow_then_fall() {
        let r = signal_rates(60, 30.0).unwrap();
        assert_eq!(r.len(), 59);
        assert!(r.iter().all(|g| *g >= 0.0));
        assert!(r[58] < r.iter().cloned().fold(0.0, f64::max));
        assert!(signal_rates(1, 30.0).is_err());
        assert!(signal_rates(10, -1.0).is_err());
    }

    #[test]
    fn isotropic_map_is_flat() {
        let m = amplitude_map(3, 0.0, 4, 8).unwrap();
        assert!(m.iter().all(|x| (x / m[0] - 1.0).abs() < 1e-12));
        let a = amplitude_map(3, 30.0, 4, 8).unwrap();
        assert!(a.iter().any(|x| (x / a[0] - 1.0).abs() > 1e-3));
    }

    #[test]
    fn coherence_tracks_exponential() {
        let v = coherence_trace(6, 30.0, 0.05, 10).unwrap();
        assert_eq!(v.len() % 3, 0);
        for row in v.chunks(3) {
            assert!((row[1] / row[2] - 1.0).abs() < 5e-3, "{row:?}");
        }
        assert!(coherence_trace(1, 30.0, 1.0, 10).is_err());
    }
}
