use std::f64::consts::PI;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::Serialize;

use super::state::{max_abs, BasisLayout, RotorState};
use crate::error::{Error, Result};
use crate::mathkit::sphere;
use crate::params::SystemSpec;
use crate::rates::{rate_q_moment, AmplitudeBackend};
use crate::scattering::{forward_shape_linearized, forward_shape_spectral, CircleAverage, CMatrix, C64};

pub const MIN_Q_ORDER: usize = 24;
pub const MIN_SPHERE_ORDER: usize = 26;

/// Relative change of the dissipator action under order doubling above
/// which the set is flagged as unconverged.
pub const DISSIPATOR_TOL: f64 = 1e-3;

/// Independent partial sums over jumps; fixed so the reduction order does
/// not depend on the number of worker threads.
const REDUCTION_CHUNKS: usize = 8;

/// Sparse (row, column, value) entries.
pub type Triplets = Vec<(usize, usize, C64)>;

#[derive(Clone, Debug)]
pub struct Jump {
    pub weight: f64,
    pub direction: Vector3<f64>,
    pub entries: Triplets,
}

/// Weighted jump operators, one per incidence direction of the sphere
/// rule. Each operator is the direct sum over j of the forward-amplitude
/// direction factors; the thermal momentum integral is carried by the
/// weights because the forward amplitude factorizes into a momentum part
/// and a direction part.
#[derive(Clone, Debug)]
pub struct DissipatorSet {
    pub layout: BasisLayout,
    pub jumps: Vec<Jump>,
    /// sum_k w_k L_k^dagger L_k
    pub(crate) k_entries: Triplets,
    /// Unit-weight operators with the same sandwich sum as `jumps`.
    kraus: Option<Vec<Triplets>>,
    pub backend: AmplitudeBackend,
    pub q_order: usize,
    pub sphere_nodes: usize,
    pub relative_change: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipatorInfo {
    pub jumps: usize,
    /// Operators actually applied after compression.
    pub operators: usize,
    pub q_order: usize,
    pub sphere_nodes: usize,
    pub relative_change: Option<f64>,
    pub converged: bool,
}

impl DissipatorSet {
    /// An empty set: purely coherent evolution.
    pub fn empty(layout: &BasisLayout) -> Self {
        Self {
            layout: layout.clone(),
            jumps: Vec::new(),
            k_entries: Vec::new(),
            kraus: None,
            backend: AmplitudeBackend::Linearized,
            q_order: 0,
            sphere_nodes: 0,
            relative_change: None,
            converged: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    /// max_k w_k max|L_k|^2, the natural scale of the dissipator action.
    pub fn jump_scale(&self) -> f64 {
        self.jumps
            .iter()
            .map(|j| j.weight * j.entries.iter().map(|e| e.2.norm_sqr()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    pub fn info(&self) -> DissipatorInfo {
        DissipatorInfo {
            jumps: self.jumps.len(),
            operators: self.kraus.as_ref().map_or(self.jumps.len(), Vec::len),
            q_order: self.q_order,
            sphere_nodes: self.sphere_nodes,
            relative_change: self.relative_change,
            converged: self.converged,
        }
    }
}

fn dense_to_triplets(m: &CMatrix, offset: usize, out: &mut Triplets) {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != C64::new(0.0, 0.0) {
                out.push((offset + r, offset + c, v));
            }
        }
    }
}

/// Dissipator at explicit quadrature orders, without the convergence check.
pub fn build_dissipator_with_orders(
    spec: &SystemSpec,
    layout: &BasisLayout,
    backend: AmplitudeBackend,
    q_order: usize,
    sphere_order: usize,
) -> Result<DissipatorSet> {
    let mut set = assemble(spec, layout, backend, q_order, sphere_order)?;
    set.kraus = Some(compress(&set.jumps));
    Ok(set)
}

/// Rewrites sum_k w_k L_k rho L_k^dagger with the fewest operators.
///
/// With x_k = sqrt(w_k) vec(L_k) and G = X^dagger X = V diag(lambda) V^dagger,
/// the columns X v_i of nonzero lambda_i give the same sum X X^dagger.
fn compress(jumps: &[Jump]) -> Vec<Triplets> {
    let mut pattern = BTreeMap::new();
    for j in jumps {
        for &(r, c, _) in &j.entries {
            let n = pattern.len();
            pattern.entry((r, c)).or_insert(n);
        }
    }
    let p = pattern.len();
    let k = jumps.len();
    if k == 0 || p == 0 {
        return Vec::new();
    }
    let mut x = DMatrix::<C64>::zeros(p, k);
    for (col, j) in jumps.iter().enumerate() {
        let s = j.weight.sqrt();
        for &(r, c, v) in &j.entries {
            x[(pattern[&(r, c)], col)] += v * s;
        }
    }
    let gram = x.adjoint() * &x;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 1e-15 * top).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keys: Vec<(usize, usize)> = {
        let mut v = vec![(0, 0); p];
        for (&rc, &i) in &pattern {
            v[i] = rc;
        }
        v
    };
    order
        .into_iter()
        .map(|i| {
            let col = &x * eig.eigenvectors.column(i);
            keys.iter()
                .zip(col.iter())
                .filter(|(_, v)| **v != C64::new(0.0, 0.0))
                .map(|(&(r, c), &v)| (r, c, v))
                .collect()
        })
        .collect()
}

fn assemble(
    spec: &SystemSpec,
    layout: &BasisLayout,
    backend: AmplitudeBackend,
    q_order: usize,
    sphere_order: usize,
) -> Result<DissipatorSet> {
    if q_order < MIN_Q_ORDER || sphere_order < MIN_SPHERE_ORDER {
        return Err(Error::Config(format!(
            "dissipator quadrature orders (q {q_order}, sphere {sphere_order}) below minima ({MIN_Q_ORDER}, {MIN_SPHERE_ORDER})"
        )));
    }
    let q_moment = rate_q_moment(spec, q_order);
    let prefactor = 2.0 * PI * spec.density() / spec.mu() * q_moment;
    let rule = sphere(sphere_order);

    let mut jumps = Vec::with_capacity(rule.len());
    let mut k_blocks: Vec<CMatrix> = layout.blocks().map(|(_, _, n)| CMatrix::zeros(n, n)).collect();
    for (n, w) in rule.iter() {
        let weight = prefactor * w;
        let mut entries = Vec::new();
        for (b, (j, off, _)) in layout.blocks().enumerate() {
            let shape = match backend {
                AmplitudeBackend::Linearized => forward_shape_linearized(j, n, spec, CircleAverage::Analytic),
                AmplitudeBackend::Spectral => forward_shape_spectral(j, n, spec)?,
            };
            k_blocks[b] += shape.adjoint() * &shape * C64::from(weight);
            dense_to_triplets(&shape, off, &mut entries);
        }
        jumps.push(Jump {
            weight,
            direction: *n,
            entries,
        });
    }
    let mut k_entries = Vec::new();
    for (b, (_, off, _)) in layout.blocks().enumerate() {
        dense_to_triplets(&k_blocks[b], off, &mut k_entries);
    }
    Ok(DissipatorSet {
        layout: layout.clone(),
        jumps,
        k_entries,
        kraus: None,
        backend,
        q_order,
        sphere_nodes: rule.len(),
        relative_change: None,
        converged: true,
    })
}

/// Deterministic full-rank test state used by the convergence check.
fn probe_state(d: usize) -> CMatrix {
    let a = CMatrix::from_fn(d, d, |r, c| {
        let x = (r * 31 + c * 17 + 1) as f64;
        C64::new((0.37 * x).sin(), (0.91 * x).cos())
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

fn probe_coherent(layout: &BasisLayout) -> CMatrix {
    let d = layout.dim();
    let mut psi = nalgebra::DVector::<C64>::zeros(d);
    let blocks: Vec<_> = layout.blocks().collect();
    let amp = C64::from(1.0 / (blocks.len() as f64).sqrt());
    for (j, _, _) in blocks {
        psi[layout.stretched(j).expect("in layout")] = amp;
    }
    &psi * psi.adjoint()
}

/// Dissipator at the orders of `spec.numerics`, rebuilt with both orders
/// doubled to measure the change of its action on probe states.
pub fn build_dissipator(spec: &SystemSpec, layout: &BasisLayout, backend: AmplitudeBackend) -> Result<DissipatorSet> {
    let qo = spec.numerics.quad_order_q;
    let so = spec.numerics.quad_order_sphere;
    let mut base = build_dissipator_with_orders(spec, layout, backend, qo, so)?;
    let fine = assemble(spec, layout, backend, 2 * qo, 2 * so)?;
    let mut change: f64 = 0.0;
    for probe in [probe_state(layout.dim()), probe_coherent(layout)] {
        let a = apply_raw(&base, &probe);
        let b = apply_raw(&fine, &probe);
        let scale = max_abs(&b);
        if scale > 1e-14 * base.jump_scale().max(f64::MIN_POSITIVE) {
            change = change.max(max_abs(&(&a - &b)) / scale);
        }
    }
    base.relative_change = Some(change);
    base.converged = change <= DISSIPATOR_TOL;
    Ok(base)
}

/// out += w L rho L^dagger, with `tmp` as scratch. Column-major storage.
fn add_sandwich(entries: &Triplets, w: f64, rho: &[C64], d: usize, tmp: &mut [C64], out: &mut [C64]) {
    tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
    for k in 0..d {
        let col = k * d;
        for &(r, c, v) in entries {
            tmp[col + r] += v * rho[col + c];
        }
    }
    for &(k, l, v) in entries {
        let f = v.conj() * w;
        let (dst, src) = (k * d, l * d);
        for i in 0..d {
            out[dst + i] += f * tmp[src + i];
        }
    }
}

fn chunk_sum(ops: &[(f64, &Triplets)], rho: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    let mut tmp = vec![C64::new(0.0, 0.0); d * d];
    for (w, e) in ops {
        add_sandwich(e, *w, rho, d, &mut tmp, &mut out);
    }
    out
}

pub(crate) fn apply_raw(set: &DissipatorSet, rho: &CMatrix) -> CMatrix {
    let d = rho.nrows();
    let src = rho.as_slice();
    let ops: Vec<(f64, &Triplets)> = match &set.kraus {
        Some(k) => k.iter().map(|e| (1.0, e)).collect(),
        None => set.jumps.iter().map(|j| (j.weight, &j.entries)).collect(),
    };
    let chunk = ops.len().div_ceil(REDUCTION_CHUNKS).max(1);
    let chunks: Vec<&[(f64, &Triplets)]> = ops.chunks(chunk).collect();

    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<C64>> = {
        use rayon::prelude::*;
        chunks.par_iter().map(|c| chunk_sum(c, src, d)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<C64>> = chunks.iter().map(|c| chunk_sum(c, src, d)).collect();

    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    // -1/2 (K rho + rho K)
    for k in 0..d {
        let col = k * d;
        for &(r, c, v) in &set.k_entries {
            out[col + r] -= v * src[col + c] * 0.5;
        }
    }
    for &(l, k, v) in &set.k_entries {
        let f = v * 0.5;
        let (dst, s) = (k * d, l * d);
        for i in 0..d {
            out[dst + i] -= f * src[s + i];
        }
    }
    CMatrix::from_vec(d, d, out)
}

/// sum_k w_k [L_k rho L_k^dagger - 1/2 {L_k^dagger L_k, rho}].
pub fn apply_dissipator(set: &DissipatorSet, rho: &RotorState) -> Result<CMatrix> {
    if rho.layout != set.layout {
        return Err(Error::Layout(format!(
            "state layout {}..={} does not match dissipator layout {}..={}",
            rho.layout.j_min, rho.layout.j_max, set.layout.j_min, set.layout.j_max
        )));
    }
    Ok(apply_raw(set, &rho.matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::state::{centrifuge_state, isotropic_state};
    use crate::params::KappaMode;
    use crate::rates::{gamma_closed_form, gamma_numeric};
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn small_spec() -> SystemSpec {
        let mut s = SystemSpec::reference();
        s.numerics.quad_order_sphere = 26;
        s.numerics.quad_order_q = 24;
        s
    }

    fn random_state(layout: &BasisLayout, seed: u64) -> RotorState {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let d = layout.dim();
        let a = CMatrix::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        RotorState::new(layout.clone(), rho / tr, 0.0).unwrap()
    }

    #[test]
    fn isotropic_anisotropy_gives_null_dissipator() {
        let spec = small_spec().with_aniso_ratio(0.0);
        let layout = BasisLayout::new(1, 4).unwrap();
        let set = build_dissipator(&spec, &layout, AmplitudeBackend::Linearized).unwrap();
        let rho = random_state(&layout, 1);
        let out = apply_dissipator(&set, &rho).unwrap();
        assert!(max_abs(&out) <= 1e-13 * set.jump_scale(), "{}", max_abs(&out) / set.jump_scale());
    }

    #[test]
    fn isotropic_states_are_stationary() {
        let spec = small_spec();
        let layout = BasisLayout::new(2, 6).unwrap();
        let set = build_dissipator(&spec, &layout, AmplitudeBackend::Linearized).unwrap();
        assert!(set.converged, "{:?}", set.relative_change);
        for pops in [
            BTreeMap::from([(2, 1.0)]),
            BTreeMap::from([(3, 0.5), (6, 0.5)]),
            (2..=6).map(|j| (j, 0.2)).collect(),
        ] {
            let rho = isotropic_state(&layout, &pops).unwrap();
            let out = apply_dissipator(&set, &rho).unwrap();
            assert!(max_abs(&out) <= 1e-10 * set.jump_scale());
        }
    }

    #[test]
    fn trace_free_block_preserving_and_hermitian() {
        let spec = small_spec();
        let layout = BasisLayout::new(2, 5).unwrap();
        let set = build_dissipator_with_orders(&spec, &layout, AmplitudeBackend::Linearized, 24, 26).unwrap();
        for seed in 0..4 {
            let rho = random_state(&layout, seed);
            let out = apply_dissipator(&set, &rho).unwrap();
            let scale = max_abs(&out);
            assert!(out.trace().norm() <= 1e-12 * scale.max(1.0));
            assert!(max_abs(&(&out - out.adjoint())) <= 1e-13 * scale.max(1.0));
            let d = RotorState::new(layout.clone(), out, 0.0).unwrap();
            for j in 2..=5 {
                assert!(d.block_population(j).unwrap().abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn coherence_decays_at_the_quadrature_rate() {
        let spec = small_spec().with_kappa(KappaMode::Half);
        let layout = BasisLayout::new(8, 10).unwrap();
        let set = build_dissipator(&spec, &layout, AmplitudeBackend::Linearized).unwrap();
        let c = C64::from(0.5f64.sqrt());
        let rho = centrifuge_state(&layout, &BTreeMap::from([(10, c), (8, c)])).unwrap();
        let out = apply_dissipator(&set, &rho).unwrap();
        let (a, b) = (layout.stretched(10).unwrap(), layout.stretched(8).unwrap());
        let rate = -(out[(a, b)] / rho.matrix[(a, b)]);
        let numeric = gamma_numeric(10, 8, &spec, AmplitudeBackend::Linearized).unwrap().gamma;
        assert!(((rate.re - numeric) / numeric).abs() < 1e-9, "{rate} vs {numeric}");
        assert!(rate.im.abs() < 1e-12 * numeric);
        let cf = gamma_closed_form(10, 8, &spec).gamma;
        assert!(((rate.re - cf) / cf).abs() < 0.02);
    }

    #[test]
    fn spectral_backend_properties() {
        let spec = small_spec().with_aniso_ratio(0.3);
        let layout = BasisLayout::new(1, 3).unwrap();
        let set = build_dissipator_with_orders(&spec, &layout, AmplitudeBackend::Spectral, 24, 26).unwrap();
        let iso = isotropic_state(&layout, &BTreeMap::from([(1, 0.5), (3, 0.5)])).unwrap();
        assert!(max_abs(&apply_dissipator(&set, &iso).unwrap()) <= 1e-10 * set.jump_scale());
        let rho = random_state(&layout, 9);
        assert!(apply_dissipator(&set, &rho).unwrap().trace().norm() < 1e-12);
    }

    #[test]
    fn compression_preserves_action() {
        let layout = BasisLayout::new(3, 6).unwrap();
        for backend in [AmplitudeBackend::Linearized, AmplitudeBackend::Spectral] {
            let mut spec = small_spec();
            spec = spec.with_aniso_ratio(3.0);
            let full = assemble(&spec, &layout, backend, 24, 60).unwrap();
            let packed = build_dissipator_with_orders(&spec, &layout, backend, 24, 60).unwrap();
            assert!(packed.info().operators < full.jumps.len());
            let rho = random_state(&layout, 5);
            let a = apply_raw(&full, &rho.matrix);
            let b = apply_raw(&packed, &rho.matrix);
            assert!(max_abs(&(&a - &b)) <= 1e-13 * full.jump_scale(), "{backend:?}");
        }
        // the linearized shape is quadratic in the direction: rank at most 9
        let lin = build_dissipator_with_orders(&small_spec(), &layout, AmplitudeBackend::Linearized, 24, 302).unwrap();
        assert!(lin.info().operators <= 9, "{}", lin.info().operators);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let spec = small_spec();
        let set = build_dissipator_with_orders(&spec, &BasisLayout::new(1, 2).unwrap(), AmplitudeBackend::Linearized, 24, 26).unwrap();
        let rho = random_state(&BasisLayout::new(1, 3).unwrap(), 0);
        assert!(matches!(apply_dissipator(&set, &rho), Err(Error::Layout(_))));
        assert!(build_dissipator_with_orders(&spec, &BasisLayout::new(1, 2).unwrap(), AmplitudeBackend::Linearized, 8, 26).is_err());
    }
}
