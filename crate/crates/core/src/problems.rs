//! Manufactured solutions with analytic derivatives.

use crate::error::{Error, Result};
use crate::geometry::{Point, Vector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub trait ExactSolution: Send + Sync {
    fn name(&self) -> String;
    fn value(&self, p: &Point) -> f64;
    fn gradient(&self, p: &Point) -> Vector;
    fn laplacian(&self, p: &Point) -> f64;
    /// `Δ²u`, the right-hand side `f`.
    fn bilaplacian(&self, p: &Point) -> f64;
    /// Total degree when the solution is a polynomial.
    fn polynomial_degree(&self) -> Option<usize> {
        None
    }
}

/// `sin²(πx) sin²(πy)`; it and its normal derivative vanish on the
/// boundary of the unit square.
#[derive(Clone, Copy, Debug, Default)]
pub struct SinSquared;

impl SinSquared {
    /// `s = sin²(πt)` and its first, second and fourth derivatives.
    fn parts(t: f64) -> [f64; 4] {
        let (s2, c2) = (2.0 * PI * t).sin_cos();
        let s = (PI * t).sin();
        [s * s, PI * s2, 2.0 * PI * PI * c2, -8.0 * PI.powi(4) * c2]
    }
}

impl ExactSolution for SinSquared {
    fn name(&self) -> String {
        "sin^2(pi x) sin^2(pi y)".into()
    }
    fn value(&self, p: &Point) -> f64 {
        Self::parts(p.x)[0] * Self::parts(p.y)[0]
    }
    fn gradient(&self, p: &Point) -> Vector {
        let (x, y) = (Self::parts(p.x), Self::parts(p.y));
        Vector::new(x[1] * y[0], x[0] * y[1])
    }
    fn laplacian(&self, p: &Point) -> f64 {
        let (x, y) = (Self::parts(p.x), Self::parts(p.y));
        x[2] * y[0] + x[0] * y[2]
    }
    fn bilaplacian(&self, p: &Point) -> f64 {
        let (x, y) = (Self::parts(p.x), Self::parts(p.y));
        x[3] * y[0] + 2.0 * x[2] * y[2] + x[0] * y[3]
    }
}

/// `sum c x^a y^b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<(f64, usize, usize)>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, usize, usize)>) -> Self {
        Polynomial { terms }
    }

    /// `x(1-x) y(1-y)`, whose bilaplacian is 8.
    pub fn bubble() -> Self {
        Self::new(vec![(1.0, 1, 1), (-1.0, 2, 1), (-1.0, 1, 2), (1.0, 2, 2)])
    }

    /// `Re (x + iy)^4 = x^4 - 6x²y² + y^4`, harmonic and so biharmonic.
    pub fn harmonic_quartic() -> Self {
        Self::new(vec![(1.0, 4, 0), (-6.0, 2, 2), (1.0, 0, 4)])
    }

    pub fn dx(&self) -> Self {
        Self::new(
            self.terms
                .iter()
                .filter(|t| t.1 > 0)
                .map(|&(c, a, b)| (c * a as f64, a - 1, b))
                .collect(),
        )
    }

    pub fn dy(&self) -> Self {
        Self::new(
            self.terms
                .iter()
                .filter(|t| t.2 > 0)
                .map(|&(c, a, b)| (c * b as f64, a, b - 1))
                .collect(),
        )
    }

    pub fn lap(&self) -> Self {
        let mut t = self.dx().dx().terms;
        t.extend(self.dy().dy().terms);
        Self::new(t)
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.terms
            .iter()
            .map(|&(c, a, b)| c * p.x.powi(a as i32) * p.y.powi(b as i32))
            .sum()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| t.0 != 0.0)
            .map(|t| t.1 + t.2)
            .max()
            .unwrap_or(0)
    }
}

impl ExactSolution for Polynomial {
    fn name(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(c, a, b)| format!("{c} x^{a} y^{b}"))
            .collect();
        parts.join(" + ")
    }
    fn value(&self, p: &Point) -> f64 {
        self.eval(p)
    }
    fn gradient(&self, p: &Point) -> Vector {
        Vector::new(self.dx().eval(p), self.dy().eval(p))
    }
    fn laplacian(&self, p: &Point) -> f64 {
        self.lap().eval(p)
    }
    fn bilaplacian(&self, p: &Point) -> f64 {
        self.lap().lap().eval(p)
    }
    fn polynomial_degree(&self) -> Option<usize> {
        Some(self.degree())
    }
}

/// Looks up a named solution: `example1` (sin²-product) or `example2`
/// (the polynomial bubble).
pub fn by_name(name: &str) -> Result<Box<dyn ExactSolution>> {
    match name {
        "example1" | "sin2" => Ok(Box::new(SinSquared)),
        "example2" | "bubble" => Ok(Box::new(Polynomial::bubble())),
        "harmonic4" => Ok(Box::new(Polynomial::harmonic_quartic())),
        _ => Err(Error::Config(format!("unknown problem `{name}`"))),
    }
}
