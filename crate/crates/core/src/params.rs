//! Physical system description, configuration loading and the thermal
//! momentum distribution.
//!
//! Every formula downstream is written with explicit hbar, k_B, mu and q_th,
//! so it is valid in any consistent unit system. [`SystemSpec::normalized`]
//! maps a system description onto units with hbar = mu = q_th = k_B = 1, which
//! is where all front ends do their arithmetic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const HBAR_SI: f64 = 1.054_571_817e-34;
pub const K_B_SI: f64 = 1.380_649e-23;

/// Relative tolerance on p_g = n_g k_B T when both are supplied.
pub const GAS_STATE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitSystem {
    /// kg, m, s, J, K, Pa; C_6 in J m^6.
    Si,
    /// hbar = k_B = 1; all other values in any consistent set.
    Normalized,
}

impl UnitSystem {
    pub fn hbar(self) -> f64 {
        match self {
            UnitSystem::Si => HBAR_SI,
            UnitSystem::Normalized => 1.0,
        }
    }

    pub fn k_b(self) -> f64 {
        match self {
            UnitSystem::Si => K_B_SI,
            UnitSystem::Normalized => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// sqrt(j(j+1) / ((2j-1)(2j+3))) as it appears in the coupling matrix.
    #[default]
    Exact,
    /// The large-j value 1/2 implied by the closed-form rate.
    Half,
}

fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub mass: f64,
    pub moment_of_inertia: f64,
    pub alpha_mean: f64,
    pub alpha_aniso: f64,
    /// epsilon = 2 Delta-alpha / (3 alpha-bar)
    pub anisotropy: f64,
}

impl MoleculeSpec {
    pub fn new(mass: f64, moment_of_inertia: f64, alpha_mean: f64, alpha_aniso: f64) -> Result<Self> {
        require_positive("molecule.mass", mass)?;
        require_positive("molecule.moment_of_inertia", moment_of_inertia)?;
        require_positive("molecule.alpha_mean", alpha_mean)?;
        if !alpha_aniso.is_finite() {
            return Err(Error::Config(format!("molecule.alpha_aniso must be finite, got {alpha_aniso}")));
        }
        Ok(Self {
            mass,
            moment_of_inertia,
            alpha_mean,
            alpha_aniso,
            anisotropy: 2.0 * alpha_aniso / (3.0 * alpha_mean),
        })
    }

    /// Delta-alpha / alpha-bar.
    pub fn aniso_ratio(&self) -> f64 {
        self.alpha_aniso / self.alpha_mean
    }

    /// Copy with the anisotropy ratio Delta-alpha / alpha-bar replaced.
    pub fn with_aniso_ratio(&self, ratio: f64) -> Self {
        Self::new(self.mass, self.moment_of_inertia, self.alpha_mean, ratio * self.alpha_mean)
            .expect("ratio is finite")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasSpec {
    pub mass: f64,
    pub temperature: f64,
    pub density: Option<f64>,
    pub pressure: Option<f64>,
    pub c6: f64,
}

impl GasSpec {
    pub fn with_density(mass: f64, temperature: f64, density: f64, c6: f64) -> Self {
        Self {
            mass,
            temperature,
            density: Some(density),
            pressure: None,
            c6,
        }
    }

    fn validate(&self) -> Result<()> {
        require_positive("gas.mass", self.mass)?;
        require_positive("gas.temperature", self.temperature)?;
        require_positive("gas.c6", self.c6)?;
        if let Some(n) = self.density {
            require_positive("gas.density", n)?;
        }
        if let Some(p) = self.pressure {
            require_positive("gas.pressure", p)?;
        }
        if self.density.is_none() && self.pressure.is_none() {
            return Err(Error::Config("gas: one of `density` or `pressure` is required".into()));
        }
        Ok(())
    }

    /// Number density, derived from the pressure when only that is given.
    pub fn resolved_density(&self, k_b: f64) -> Result<f64> {
        self.validate()?;
        let kt = k_b * self.temperature;
        match (self.density, self.pressure) {
            (Some(n), Some(p)) => {
                let expected = n * kt;
                let mismatch = ((p - expected) / expected).abs();
                if mismatch > GAS_STATE_TOL {
                    return Err(Error::InconsistentGas {
                        pressure: p,
                        expected,
                        mismatch,
                    });
                }
                Ok(n)
            }
            (Some(n), None) => Ok(n),
            (None, Some(p)) => Ok(p / kt),
            (None, None) => unreachable!("validated above"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalContext {
    pub reduced_mass: f64,
    pub thermal_momentum: f64,
    pub density: f64,
}

/// Reduced mass and thermal momentum q_th = sqrt(2 mu k_B T).
pub fn derive_thermal(mol: &MoleculeSpec, gas: &GasSpec, units: UnitSystem) -> Result<ThermalContext> {
    let density = gas.resolved_density(units.k_b())?;
    let reduced_mass = gas.mass * mol.mass / (gas.mass + mol.mass);
    let thermal_momentum = (2.0 * reduced_mass * units.k_b() * gas.temperature).sqrt();
    Ok(ThermalContext {
        reduced_mass: require_positive("reduced mass", reduced_mass)?,
        thermal_momentum: require_positive("thermal momentum", thermal_momentum)?,
        density,
    })
}

/// Thermal distribution of relative momenta,
/// exp(-q^2/q_th^2) / (sqrt(pi) q_th)^3.
pub fn nu_th(q: f64, ctx: &ThermalContext) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::Domain(format!("nu_th requires q >= 0, got {q}")));
    }
    let qt = ctx.thermal_momentum;
    let x = q / qt;
    Ok((-x * x).exp() / (PI.sqrt() * qt).powi(3))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSpec {
    pub j_min: u32,
    pub j_max: u32,
    pub quad_order_q: usize,
    pub quad_order_sphere: usize,
    pub quad_order_circle: usize,
    /// Outer impact parameter in units of the van der Waals length
    /// b_0(q) = a(q)^(1/5).
    pub b_max: f64,
    pub b_nodes: usize,
    pub tol_trace: f64,
    pub tol_fit: f64,
    pub kappa_mode: KappaMode,
}

impl Default for NumericsSpec {
    fn default() -> Self {
        Self {
            j_min: 0,
            j_max: 40,
            quad_order_q: 48,
            quad_order_sphere: 302,
            quad_order_circle: 32,
            b_max: 40.0,
            b_nodes: 256,
            tol_trace: 1e-8,
            tol_fit: 0.02,
            kappa_mode: KappaMode::Exact,
        }
    }
}

impl NumericsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.j_min > self.j_max {
            return Err(Error::Config(format!(
                "numerics: j_min = {} exceeds j_max = {}",
                self.j_min, self.j_max
            )));
        }
        for (name, n) in [
            ("quad_order_q", self.quad_order_q),
            ("quad_order_sphere", self.quad_order_sphere),
            ("quad_order_circle", self.quad_order_circle),
            ("b_nodes", self.b_nodes),
        ] {
            if n < 4 {
                return Err(Error::Config(format!("numerics.{name} = {n} must be >= 4")));
            }
        }
        for (name, t) in [("tol_trace", self.tol_trace), ("tol_fit", self.tol_fit)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("numerics.{name} = {t} must lie in (0, 1)")));
            }
        }
        if !(self.b_max > 1.0 && self.b_max.is_finite()) {
            return Err(Error::Config(format!("numerics.b_max = {} must exceed 1", self.b_max)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub units: UnitSystem,
    pub molecule: MoleculeSpec,
    pub gas: GasSpec,
    pub numerics: NumericsSpec,
    pub thermal: ThermalContext,
}

impl SystemSpec {
    pub fn new(units: UnitSystem, molecule: MoleculeSpec, gas: GasSpec, numerics: NumericsSpec) -> Result<Self> {
        numerics.validate()?;
        let thermal = derive_thermal(&molecule, &gas, units)?;
        Ok(Self {
            units,
            molecule,
            gas,
            numerics,
            thermal,
        })
    }

    /// Reference system with every group of the closed-form rate equal to
    /// one: hbar = mu = q_th = n_g = 1, C_6 = 8/(3 pi), Delta-alpha/alpha-bar = 30.
    /// The moment of inertia (50) only sets the free rotor spectrum.
    pub fn reference() -> Self {
        let molecule = MoleculeSpec::new(2.0, 50.0, 1.0, 30.0).expect("valid");
        let gas = GasSpec::with_density(2.0, 0.5, 1.0, 8.0 / (3.0 * PI));
        let numerics = NumericsSpec {
            j_max: 1000,
            ..NumericsSpec::default()
        };
        Self::new(UnitSystem::Normalized, molecule, gas, numerics).expect("valid")
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar()
    }

    pub fn k_b(&self) -> f64 {
        self.units.k_b()
    }

    pub fn mu(&self) -> f64 {
        self.thermal.reduced_mass
    }

    pub fn q_th(&self) -> f64 {
        self.thermal.thermal_momentum
    }

    pub fn density(&self) -> f64 {
        self.thermal.density
    }

    /// E_j = hbar^2 j (j + 1) / 2I.
    pub fn rotational_energy(&self, j: u32) -> f64 {
        let j = j as f64;
        self.hbar().powi(2) * j * (j + 1.0) / (2.0 * self.molecule.moment_of_inertia)
    }

    /// a(q) = 3 pi mu C_6 / (8 hbar q), the eikonal phase at b = 1.
    pub fn eikonal_strength(&self, q: f64) -> f64 {
        3.0 * PI * self.mu() * self.gas.c6 / (8.0 * self.hbar() * q)
    }

    pub fn with_molecule(&self, molecule: MoleculeSpec) -> Self {
        Self::new(self.units, molecule, self.gas.clone(), self.numerics.clone()).expect("valid")
    }

    pub fn with_aniso_ratio(&self, ratio: f64) -> Self {
        self.with_molecule(self.molecule.with_aniso_ratio(ratio))
    }

    pub fn with_numerics(&self, numerics: NumericsSpec) -> Result<Self> {
        Self::new(self.units, self.molecule.clone(), self.gas.clone(), numerics)
    }

    pub fn with_kappa(&self, kappa_mode: KappaMode) -> Self {
        let mut s = self.clone();
        s.numerics.kappa_mode = kappa_mode;
        s
    }

    pub fn scales(&self) -> Scales {
        let mass = self.mu();
        let momentum = self.q_th();
        let length = self.hbar() / momentum;
        let energy = momentum * momentum / mass;
        Scales {
            mass,
            momentum,
            length,
            energy,
            time: self.hbar() / energy,
        }
    }

    /// The same system in units with hbar = mu = q_th = k_B = 1, together
    /// with the scales that map results back.
    pub fn normalized(&self) -> (SystemSpec, Scales) {
        let s = self.scales();
        let kt = self.k_b() * self.gas.temperature;
        let vol = s.length.powi(3);
        let molecule = MoleculeSpec::new(
            self.molecule.mass / s.mass,
            self.molecule.moment_of_inertia / (s.mass * s.length * s.length),
            self.molecule.alpha_mean / vol,
            self.molecule.alpha_aniso / vol,
        )
        .expect("scaled values stay positive");
        let gas = GasSpec {
            mass: self.gas.mass / s.mass,
            temperature: kt / s.energy,
            density: self.gas.density.map(|n| n * vol),
            pressure: self.gas.pressure.map(|p| p * vol / s.energy),
            c6: self.gas.c6 / (s.energy * s.length.powi(6)),
        };
        let spec = SystemSpec::new(UnitSystem::Normalized, molecule, gas, self.numerics.clone())
            .expect("normalized spec is valid");
        (spec, s)
    }
}

/// Conversion factors from normalized units (hbar = mu = q_th = 1) to the
/// units of the originating system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub mass: f64,
    pub momentum: f64,
    pub length: f64,
    pub energy: f64,
    pub time: f64,
}

impl Scales {
    pub fn rate(&self, normalized: f64) -> f64 {
        normalized / self.time
    }

    pub fn energy(&self, normalized: f64) -> f64 {
        normalized * self.energy
    }

    pub fn length(&self, normalized: f64) -> f64 {
        normalized * self.length
    }

    /// Inverse of [`SystemSpec::normalized`].
    pub fn restore(&self, normalized: &SystemSpec, units: UnitSystem) -> Result<SystemSpec> {
        let vol = self.length.powi(3);
        let m = &normalized.molecule;
        let molecule = MoleculeSpec::new(
            m.mass * self.mass,
            m.moment_of_inertia * self.mass * self.length * self.length,
            m.alpha_mean * vol,
            m.alpha_aniso * vol,
        )?;
        let g = &normalized.gas;
        let gas = GasSpec {
            mass: g.mass * self.mass,
            temperature: g.temperature * self.energy / units.k_b(),
            density: g.density.map(|n| n / vol),
            pressure: g.pressure.map(|p| p * self.energy / vol),
            c6: g.c6 * self.energy * self.length.powi(6),
        };
        SystemSpec::new(units, molecule, gas, normalized.numerics.clone())
    }
}

// ---------------------------------------------------------------------------
// configuration documents

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsDoc {
    system: UnitSystem,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MoleculeDoc {
    mass: f64,
    moment_of_inertia: Option<f64>,
    rotational_constant: Option<f64>,
    alpha_mean: f64,
    alpha_aniso: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GasDoc {
    mass: f64,
    temperature: f64,
    density: Option<f64>,
    pressure: Option<f64>,
    c6: f64,
}

const TOP_LEVEL_KEYS: [&str; 5] = ["description", "units", "molecule", "gas", "numerics"];

fn section<T: for<'de> Deserialize<'de>>(doc: &serde_json::Map<String, Value>, name: &str) -> Result<T> {
    let value = doc
        .get(name)
        .ok_or_else(|| Error::Config(format!("missing mandatory section `{name}`")))?;
    serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("{name}: {e}")))
}

/// Parse a JSON configuration document into a resolved [`SystemSpec`].
///
/// Top-level sections: `units`, `molecule`, `gas`, optional `numerics` and
/// an optional free-text `description`. Unknown keys are rejected.
pub fn load_config(text: &str) -> Result<SystemSpec> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed document: {e}")))?;
    let doc = value
        .as_object()
        .ok_or_else(|| Error::Config("top level must be an object".into()))?;
    if let Some(k) = doc.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown top-level key `{k}`")));
    }
    if let Some(d) = doc.get("description") {
        if !d.is_string() {
            return Err(Error::Config("description: expected a string".into()));
        }
    }

    let units: UnitsDoc = section(doc, "units")?;
    let units = units.system;
    let mol: MoleculeDoc = section(doc, "molecule")?;
    let gas: GasDoc = section(doc, "gas")?;
    let numerics: NumericsSpec = match doc.get("numerics") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("numerics: {e}")))?,
        None => NumericsSpec::default(),
    };

    let hbar = units.hbar();
    let inertia = match (mol.moment_of_inertia, mol.rotational_constant) {
        (Some(i), None) => i,
        (None, Some(b)) => hbar * hbar / (2.0 * require_positive("molecule.rotational_constant", b)?),
        (Some(i), Some(b)) => {
            let derived = hbar * hbar / (2.0 * require_positive("molecule.rotational_constant", b)?);
            if ((i - derived) / derived).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "molecule: moment_of_inertia {i} disagrees with rotational_constant (implies {derived})"
                )));
            }
            i
        }
        (None, None) => {
            return Err(Error::Config(
                "molecule: one of `moment_of_inertia` or `rotational_constant` is required".into(),
            ))
        }
    };
    let molecule = MoleculeSpec::new(mol.mass, inertia, mol.alpha_mean, mol.alpha_aniso)?;
    let gas = GasSpec {
        mass: gas.mass,
        temperature: gas.temperature,
        density: gas.density,
        pressure: gas.pressure,
        c6: gas.c6,
    };
    SystemSpec::new(units, molecule, gas, numerics)
}
