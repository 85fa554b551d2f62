//! Special functions and quadrature rules.

mod quadrature;
mod special;

pub use quadrature::{
    circle, gauss_legendre, gauss_legendre_on, half_line_gaussian, make_rule, sphere,
    sphere_dims, Domain, QuadratureRule, Rule, HALF_LINE_CUTOFF, MIN_ORDER,
};
pub use special::{assoc_legendre2, gamma_real, gamma_three_fifths};

pub(crate) use special::p2m;
