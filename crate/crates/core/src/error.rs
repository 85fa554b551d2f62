use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("inconsistent gas state: pressure {pressure} vs n_g k_B T = {expected} (relative mismatch {mismatch:.3e})")]
    InconsistentGas {
        pressure: f64,
        expected: f64,
        mismatch: f64,
    },

    #[error("non-positive physical quantity: {name} = {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("unknown quadrature domain `{0}`")]
    UnknownDomain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("anisotropy too large for fractional-power branch: eigenvalue of 1 + B is {0:.6}")]
    FractionalBranch(f64),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("step-size violation: dt * max|Delta| = {0:.4} exceeds 0.1")]
    StepSize(f64),

    #[error("trace drift {drift:.3e} exceeded tolerance {tol:.1e} at t = {t}")]
    TraceDrift { drift: f64, tol: f64, t: f64 },

    #[error("hermiticity drift {0:.3e} exceeded 1e-10")]
    HermiticityDrift(f64),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
