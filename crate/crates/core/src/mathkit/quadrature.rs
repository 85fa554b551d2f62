//! Quadrature rules on the interval, the Gaussian-weighted half line, the
//! unit circle and the unit sphere.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the discretised half-line measure; exp(-100) is far below
/// double precision relative to the bulk.
pub const HALF_LINE_CUTOFF: f64 = 10.0;

pub const MIN_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// [-1, 1], unit weight.
    Interval,
    /// [0, inf) with weight exp(-x^2) folded into the weights.
    HalfLineGaussian,
    /// Angles on [0, 2 pi).
    Circle,
    /// Directions on the unit sphere.
    Sphere,
}

impl Domain {
    /// Total measure of the domain: what the weights must sum to.
    pub fn measure(self) -> f64 {
        match self {
            Domain::Interval => 2.0,
            Domain::HalfLineGaussian => 0.5 * PI.sqrt(),
            Domain::Circle => 2.0 * PI,
            Domain::Sphere => 4.0 * PI,
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(Domain::Interval),
            "half_line_gaussian" | "half_line" => Ok(Domain::HalfLineGaussian),
            "circle" => Ok(Domain::Circle),
            "sphere" => Ok(Domain::Sphere),
            other => Err(Error::UnknownDomain(other.to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureRule<N> {
    pub domain: Domain,
    pub nodes: Vec<N>,
    pub weights: Vec<f64>,
}

impl<N> QuadratureRule<N> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&N, f64)> + '_ {
        self.nodes.iter().zip(self.weights.iter().copied())
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl QuadratureRule<f64> {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(&x, w)| w * f(x)).sum()
    }
}

impl QuadratureRule<Vector3<f64>> {
    pub fn integrate<F: FnMut(&Vector3<f64>) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(n, w)| w * f(n)).sum()
    }
}

/// A rule produced from a string domain tag.
#[derive(Clone, Debug)]
pub enum Rule {
    Scalar(QuadratureRule<f64>),
    Sphere(QuadratureRule<Vector3<f64>>),
}

impl Rule {
    pub fn domain(&self) -> Domain {
        match self {
            Rule::Scalar(r) => r.domain,
            Rule::Sphere(r) => r.domain,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        match self {
            Rule::Scalar(r) => r.weight_sum(),
            Rule::Sphere(r) => r.weight_sum(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Rule::Scalar(r) => r.len(),
            Rule::Sphere(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn make_rule(domain: &str, order: usize) -> Result<Rule> {
    let domain: Domain = domain.parse()?;
    check_order(order)?;
    Ok(match domain {
        Domain::Interval => Rule::Scalar(gauss_legendre(order)),
        Domain::HalfLineGaussian => Rule::Scalar(half_line_gaussian(order)),
        Domain::Circle => Rule::Scalar(circle(order)),
        Domain::Sphere => Rule::Sphere(sphere(order)),
    })
}

fn check_order(order: usize) -> Result<()> {
    if order < MIN_ORDER {
        return Err(Error::Domain(format!(
            "quadrature order {order} below minimum {MIN_ORDER}"
        )));
    }
    Ok(())
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(order: usize) -> QuadratureRule<f64> {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule {
        domain: Domain::Interval,
        nodes,
        weights,
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(order: usize, a: f64, b: f64) -> QuadratureRule<f64> {
    let base = gauss_legendre(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    QuadratureRule {
        domain: Domain::Interval,
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| half * w).collect(),
    }
}

/// Gauss rule for int_0^inf f(x) exp(-x^2) dx.
///
/// The recurrence coefficients of the polynomials orthogonal under
/// exp(-x^2) on the half line are generated by the Stieltjes procedure on
/// a fine discretisation of that measure (Gauss-Legendre on [0, 10]); the
/// nodes and weights then follow from the Jacobi matrix. Weights sum to
/// sqrt(pi)/2 at every order, and the rule is exact for polynomials of
/// degree 2n - 1.
pub fn half_line_gaussian(order: usize) -> QuadratureRule<f64> {
    let n = order.max(1);
    let fine = gauss_legendre_on(4 * n + 200, 0.0, HALF_LINE_CUTOFF);
    let xs = fine.nodes;
    let ws: Vec<f64> = xs.iter().zip(&fine.weights).map(|(x, w)| w * (-x * x).exp()).collect();
    let m = xs.len();

    // orthonormal Stieltjes recurrence on the discrete measure
    let mu0: f64 = ws.iter().sum();
    let mut alpha = vec![0.0; n];
    let mut off = vec![0.0; n];
    let mut q_prev = vec![0.0; m];
    let mut q = vec![1.0 / mu0.sqrt(); m];
    for k in 0..n {
        alpha[k] = (0..m).map(|i| ws[i] * xs[i] * q[i] * q[i]).sum();
        if k + 1 == n {
            break;
        }
        let r: Vec<f64> = (0..m)
            .map(|i| (xs[i] - alpha[k]) * q[i] - if k == 0 { 0.0 } else { off[k - 1] * q_prev[i] })
            .collect();
        let nr = (0..m).map(|i| ws[i] * r[i] * r[i]).sum::<f64>().sqrt();
        off[k] = nr;
        q_prev = std::mem::replace(&mut q, r.iter().map(|v| v / nr).collect());
    }

    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = alpha[k];
        if k + 1 < n {
            jacobi[(k, k + 1)] = off[k];
            jacobi[(k + 1, k)] = off[k];
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    QuadratureRule {
        domain: Domain::HalfLineGaussian,
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Uniform trapezoid rule on the circle (angles).
pub fn circle(order: usize) -> QuadratureRule<f64> {
    let n = order.max(1);
    let w = 2.0 * PI / n as f64;
    QuadratureRule {
        domain: Domain::Circle,
        nodes: (0..n).map(|k| k as f64 * w).collect(),
        weights: vec![w; n],
    }
}

/// Polar and azimuthal node counts used for a requested sphere node count.
///
/// The product rule has `n_theta` Gauss nodes in cos(theta) and
/// `2 n_theta` uniform azimuths, so its size is the smallest such product
/// that is at least `order`.
pub fn sphere_dims(order: usize) -> (usize, usize) {
    let n_theta = ((order as f64 / 2.0).sqrt().ceil() as usize).max(2);
    (n_theta, 2 * n_theta)
}

/// Product Gauss(cos theta) x uniform(phi) rule on the unit sphere.
pub fn sphere(order: usize) -> QuadratureRule<Vector3<f64>> {
    let (n_theta, n_phi) = sphere_dims(order);
    let polar = gauss_legendre(n_theta);
    let azimuth = circle(n_phi);
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (&ct, wt) in polar.iter() {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for (&phi, wp) in azimuth.iter() {
            nodes.push(Vector3::new(st * phi.cos(), st * phi.sin(), ct));
            weights.push(wt * wp);
        }
    }
    QuadratureRule {
        domain: Domain::Sphere,
        nodes,
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::gamma_real;

    #[test]
    fn weights_sum_to_domain_measure() {
        for order in [4, 5, 8, 17, 48, 96] {
            for tag in ["interval", "half_line_gaussian", "circle", "sphere"] {
                let rule = make_rule(tag, order).unwrap();
                let m = rule.domain().measure();
                assert!(
                    (rule.weight_sum() - m).abs() < 1e-12,
                    "{tag} order {order}: {} vs {m}",
                    rule.weight_sum()
                );
            }
        }
    }

    #[test]
    fn interval_exactness() {
        let rule = gauss_legendre(8);
        let v = rule.integrate(|x| x.powi(6));
        assert!((v - 2.0 / 7.0).abs() < 1e-14);
        // degree 15 is the limit for 8 nodes
        let v = rule.integrate(|x| x.powi(14));
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn circle_periodic_exactness() {
        let rule = circle(16);
        let v = rule.integrate(|p| p.cos().powi(2));
        assert!((v - PI).abs() < 1e-12);
    }

    #[test]
    fn half_line_gamma_moment() {
        let rule = half_line_gaussian(48);
        let v = rule.integrate(|q| q.powf(21.0 / 5.0));
        let exact = 0.5 * gamma_real(13.0 / 5.0).unwrap();
        assert!(((v - exact) / exact).abs() < 1e-8, "{v} vs {exact}");
    }

    #[test]
    fn sphere_polynomial_moments() {
        let rule = sphere(26);
        assert_eq!(rule.len(), 32);
        let v = rule.integrate(|n| n.z * n.z);
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-13);
        let v = rule.integrate(|n| n.x.powi(2) * n.y.powi(2));
        assert!((v - 4.0 * PI / 15.0).abs() < 1e-13);
        let v = rule.integrate(|n| n.x * n.z);
        assert!(v.abs() < 1e-14);
        let rule = sphere(302);
        assert_eq!(rule.len(), 338);
    }

    #[test]
    fn rejects_unknown_domain_and_low_order() {
        assert!(matches!(make_rule("torus", 8), Err(Error::UnknownDomain(_))));
        assert!(make_rule("interval", 3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn interval_exact_to_degree_2n_minus_1(n in 4usize..40, k in 0usize..8) {
            let rule = gauss_legendre(n);
            let deg = (2 * n - 1).min(2 * k);
            let v = rule.integrate(|x| x.powi(deg as i32));
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            proptest::prop_assert!((v - exact).abs() < 1e-13);
        }
    }
}
