//! Second-order Legendre functions and the real gamma function.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Associated Legendre function P_2^k(x) for k in {0, 1, 2}.
///
/// The magnitude convention is used (no Condon-Shortley phase):
/// P_2^1(x) = 3x sqrt(1 - x^2) and P_2^2(x) = 3 (1 - x^2). Every caller
/// squares the result, so the phase never shows up in a physical quantity.
pub fn assoc_legendre2(k: u32, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("P_2^{k} evaluated at x = {x}, outside [-1, 1]")));
    }
    match k {
        0 => Ok(0.5 * (3.0 * x * x - 1.0)),
        1 => Ok(3.0 * x * (1.0 - x * x).sqrt()),
        2 => Ok(3.0 * (1.0 - x * x)),
        _ => Err(Error::Domain(format!("P_2^{k} requested; only k = 0, 1, 2 exist"))),
    }
}

/// `assoc_legendre2` for arguments that are known to be in range.
pub(crate) fn p2m(k: u32, x: f64) -> f64 {
    debug_assert!(x.abs() <= 1.0 + 1e-15);
    let x = x.clamp(-1.0, 1.0);
    match k {
        0 => 0.5 * (3.0 * x * x - 1.0),
        1 => 3.0 * x * (1.0 - x * x).sqrt(),
        _ => 3.0 * (1.0 - x * x),
    }
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Real gamma function for x > 0.
pub fn gamma_real(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_real requires finite x > 0, got {x}")));
    }
    Ok(gamma_positive(x))
}

fn gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
        return PI / ((PI * x).sin() * gamma_positive(1.0 - x));
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
}

/// Gamma(3/5), used by every forward-amplitude prefactor.
pub fn gamma_three_fifths() -> f64 {
    gamma_positive(0.6)
}
