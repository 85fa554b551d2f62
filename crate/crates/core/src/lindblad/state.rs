use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::{CMatrix, C64};

/// Truncated |j m> basis for j_min <= j <= j_max, ordered by j and then m
/// ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLayout {
    pub j_min: u32,
    pub j_max: u32,
    offsets: Vec<usize>,
    dim: usize,
}

impl BasisLayout {
    pub fn new(j_min: u32, j_max: u32) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::Layout(format!("j_min = {j_min} exceeds j_max = {j_max}")));
        }
        let mut offsets = Vec::with_capacity((j_max - j_min + 1) as usize);
        let mut dim = 0;
        for j in j_min..=j_max {
            offsets.push(dim);
            dim += 2 * j as usize + 1;
        }
        Ok(Self {
            j_min,
            j_max,
            offsets,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, j: u32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    pub fn offset(&self, j: u32) -> Option<usize> {
        self.contains(j).then(|| self.offsets[(j - self.j_min) as usize])
    }

    pub fn index(&self, j: u32, m: i64) -> Option<usize> {
        let off = self.offset(j)?;
        (m.unsigned_abs() <= j as u64).then(|| off + (m + j as i64) as usize)
    }

    /// Flat index of the stretched state |j j>.
    pub fn stretched(&self, j: u32) -> Result<usize> {
        self.index(j, j as i64)
            .ok_or_else(|| Error::Layout(format!("j = {j} outside layout {}..={}", self.j_min, self.j_max)))
    }

    /// (j, offset, block size) for every block.
    pub fn blocks(&self) -> impl Iterator<Item = (u32, usize, usize)> + '_ {
        (self.j_min..=self.j_max).map(move |j| (j, self.offsets[(j - self.j_min) as usize], 2 * j as usize + 1))
    }
}

#[derive(Clone, Debug)]
pub struct RotorState {
    pub layout: BasisLayout,
    pub matrix: CMatrix,
    pub time: f64,
}

const NORM_TOL: f64 = 1e-10;

impl RotorState {
    pub fn new(layout: BasisLayout, matrix: CMatrix, time: f64) -> Result<Self> {
        if matrix.nrows() != layout.dim() || matrix.ncols() != layout.dim() {
            return Err(Error::Layout(format!(
                "matrix is {}x{}, layout needs {}",
                matrix.nrows(),
                matrix.ncols(),
                layout.dim()
            )));
        }
        Ok(Self { layout, matrix, time })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr rho^2 = sum |rho_ab|^2 for hermitian rho
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::from(0.5);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Tr_j rho, the population of block j.
    pub fn block_population(&self, j: u32) -> Result<f64> {
        let off = self
            .layout
            .offset(j)
            .ok_or_else(|| Error::Layout(format!("j = {j} outside layout")))?;
        Ok((off..off + 2 * j as usize + 1).map(|i| self.matrix[(i, i)].re).sum())
    }

    /// <j j| rho |j' j'>.
    pub fn coherence(&self, j: u32, j_prime: u32) -> Result<C64> {
        Ok(self.matrix[(self.layout.stretched(j)?, self.layout.stretched(j_prime)?)])
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Pure superposition sum_j c_j |j j> of stretched states.
pub fn centrifuge_state(layout: &BasisLayout, coefficients: &BTreeMap<u32, C64>) -> Result<RotorState> {
    let norm: f64 = coefficients.values().map(|c| c.norm_sqr()).sum();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::State(format!("coefficients have sum |c_j|^2 = {norm}, expected 1")));
    }
    let d = layout.dim();
    let mut psi = nalgebra::DVector::<C64>::zeros(d);
    for (&j, &c) in coefficients {
        psi[layout.stretched(j)?] = c;
    }
    RotorState::new(layout.clone(), &psi * psi.adjoint(), 0.0)
}

/// sum_j p_j / (2j+1) sum_m |j m><j m|.
pub fn isotropic_state(layout: &BasisLayout, populations: &BTreeMap<u32, f64>) -> Result<RotorState> {
    if let Some((j, p)) = populations.iter().find(|(_, &p)| !(p >= 0.0)) {
        return Err(Error::State(format!("population of j = {j} is {p}")));
    }
    let total: f64 = populations.values().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::State(format!("populations sum to {total}, expected 1")));
    }
    let d = layout.dim();
    let mut rho = CMatrix::zeros(d, d);
    for (&j, &p) in populations {
        let off = layout
            .offset(j)
            .ok_or_else(|| Error::Layout(format!("j = {j} outside layout {}..={}", layout.j_min, layout.j_max)))?;
        let size = 2 * j as usize + 1;
        for i in off..off + size {
            rho[(i, i)] = C64::from(p / size as f64);
        }
    }
    RotorState::new(layout.clone(), rho, 0.0)
}

/// Illustrative centrifuge profile: real amplitudes
/// c_j proportional to exp(-(j - center)^2 / (4 width^2)) on the levels of
/// the layout that share the parity of `center`.
pub fn gaussian_coefficients(layout: &BasisLayout, center: u32, width: f64) -> Result<BTreeMap<u32, C64>> {
    if !(width > 0.0) {
        return Err(Error::State(format!("width must be positive, got {width}")));
    }
    let raw: Vec<(u32, f64)> = (layout.j_min..=layout.j_max)
        .filter(|j| j % 2 == center % 2)
        .map(|j| {
            let x = (j as f64 - center as f64) / width;
            (j, (-0.25 * x * x).exp())
        })
        .collect();
    let norm = raw.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
    if raw.is_empty() || norm == 0.0 {
        return Err(Error::State("no level of the layout matches the requested parity".into()));
    }
    Ok(raw.into_iter().map(|(j, a)| (j, C64::from(a / norm))).collect())
}

/// |<j j| rho |j-2, j-2>|^2, proportional to the Raman alignment signal.
pub fn alignment_signal(rho: &RotorState, j: u32) -> Result<f64> {
    if j < 2 {
        return Err(Error::Layout(format!("alignment signal needs j >= 2, got {j}")));
    }
    Ok(rho.coherence(j, j - 2)?.norm_sqr())
}
