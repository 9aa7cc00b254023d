//! Gauss-Legendre rules on segments and composite rules on polygons.

use crate::geometry::Point;
use crate::mesh::Cell;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Rule on the reference triangle `(0,0), (1,0), (0,1)` as
/// `(xi, eta, weight)`; weights sum to 1/2.
pub fn reference_triangle_rule(degree: usize) -> Vec<(f64, f64, f64)> {
    match degree {
        0 | 1 => vec![(1.0 / 3.0, 1.0 / 3.0, 0.5)],
        2 => {
            let w = 1.0 / 6.0;
            vec![
                (1.0 / 6.0, 1.0 / 6.0, w),
                (2.0 / 3.0, 1.0 / 6.0, w),
                (1.0 / 6.0, 2.0 / 3.0, w),
            ]
        }
        3..=5 => {
            // Radon's seven-point rule
            let s = 15f64.sqrt();
            let mut r = vec![(1.0 / 3.0, 1.0 / 3.0, 0.5 * 9.0 / 40.0)];
            for (a, w) in [((6.0 - s) / 21.0, (155.0 - s) / 1200.0), ((6.0 + s) / 21.0, (155.0 + s) / 1200.0)] {
                let b = 1.0 - 2.0 * a;
                for (x, y) in [(a, a), (b, a), (a, b)] {
                    r.push((x, y, 0.5 * w));
                }
            }
            r
        }
        q => collapsed_rule(q),
    }
}

/// Gauss product rule on the square collapsed onto the triangle.
fn collapsed_rule(q: usize) -> Vec<(f64, f64, f64)> {
    let nu = (q + 2).div_ceil(2);
    let nv = (q + 1).div_ceil(2);
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let mut r = Vec::with_capacity(nu * nv);
    for (u, wu) in xu.iter().zip(&wu) {
        let u = 0.5 * (u + 1.0);
        for (v, wv) in xv.iter().zip(&wv) {
            let v = 0.5 * (v + 1.0);
            r.push((u, v * (1.0 - u), 0.25 * wu * wv * (1.0 - u)));
        }
    }
    r
}

pub fn triangle_quadrature(t: &[Point; 3], degree: usize) -> QuadRule {
    let mut q = QuadRule {
        points: Vec::new(),
        weights: Vec::new(),
        degree,
    };
    push_triangle(&mut q, t, &reference_triangle_rule(degree));
    q
}

fn push_triangle(q: &mut QuadRule, t: &[Point; 3], rule: &[(f64, f64, f64)]) {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let jac = (e1.x * e2.y - e1.y * e2.x).abs();
    for &(s, r, w) in rule {
        q.points.push(t[0] + e1 * s + e2 * r);
        q.weights.push(w * jac);
    }
}

/// Composite rule over the cell's sub-triangulation.
pub fn cell_rule(cell: &Cell, degree: usize) -> QuadRule {
    polygon_rule(&cell.triangles, degree)
}

pub fn polygon_rule(triangles: &[[Point; 3]], degree: usize) -> QuadRule {
    let rule = reference_triangle_rule(degree);
    let mut q = QuadRule {
        points: Vec::with_capacity(rule.len() * triangles.len()),
        weights: Vec::with_capacity(rule.len() * triangles.len()),
        degree,
    };
    for t in triangles {
        push_triangle(&mut q, t, &rule);
    }
    q
}

/// Gauss-Legendre rule on the segment `ab` with `ceil((degree+1)/2)` nodes.
pub fn face_rule(a: &Point, b: &Point, degree: usize) -> QuadRule {
    let n = (degree + 1).div_ceil(2).max(1);
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a).norm();
    QuadRule {
        points: x.iter().map(|t| a + (b - a) * (0.5 * (t + 1.0))).collect(),
        weights: w.iter().map(|w| w * half).collect(),
        degree: 2 * n - 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn binom(n: usize, k: usize) -> f64 {
        factorial(n) / (factorial(k) * factorial(n - k))
    }

    /// Exact integral of `x^a y^b` over a triangle by expanding the affine
    /// map and using `int_ref s^m t^n = m! n! / (m+n+2)!`.
    fn exact_monomial(t: &[Point; 3], a: usize, b: usize) -> f64 {
        let (p0, e1, e2) = (t[0], t[1] - t[0], t[2] - t[0]);
        let jac = (e1.x * e2.y - e1.y * e2.x).abs();
        // coefficients of x^a as polynomial in (s, t): c[i][j] s^i t^j
        let expand = |c0: f64, c1: f64, c2: f64, k: usize| {
            let mut out = vec![vec![0.0; k + 1]; k + 1];
            for i in 0..=k {
                for j in 0..=k - i {
                    let m = factorial(k) / (factorial(i) * factorial(j) * factorial(k - i - j));
                    out[i][j] += m * c1.powi(i as i32) * c2.powi(j as i32) * c0.powi((k - i - j) as i32);
                }
            }
            out
        };
        let xa = expand(p0.x, e1.x, e2.x, a);
        let yb = expand(p0.y, e1.y, e2.y, b);
        let mut total = 0.0;
        for (i1, row1) in xa.iter().enumerate() {
            for (j1, c1) in row1.iter().enumerate() {
                for (i2, row2) in yb.iter().enumerate() {
                    for (j2, c2) in row2.iter().enumerate() {
                        let (m, n) = (i1 + i2, j1 + j2);
                        total += c1 * c2 * factorial(m) * factorial(n) / factorial(m + n + 2);
                    }
                }
            }
        }
        total * jac
    }

    #[test]
    fn oracle_matches_known_values() {
        let t = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!((exact_monomial(&t, 0, 0) - 0.5).abs() < 1e-15);
        assert!((exact_monomial(&t, 1, 0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((exact_monomial(&t, 1, 1) - 1.0 / 24.0).abs() < 1e-15);
        let _ = binom(4, 2);
    }

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for k in 0..2 * n {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact_up_to_degree() {
        let t = [Point::new(0.3, -0.2), Point::new(1.7, 0.4), Point::new(0.1, 1.1)];
        for q in 0..=16 {
            let rule = triangle_quadrature(&t, q);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=q {
                for b in 0..=q - a {
                    let got = rule.integrate(|p| p.x.powi(a as i32) * p.y.powi(b as i32));
                    let exact = exact_monomial(&t, a, b);
                    assert!(
                        (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                        "q={q} a={a} b={b}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn unit_square_separable_integral() {
        let tris = [
            [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)],
            [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)],
        ];
        let q = polygon_rule(&tris, 3);
        assert!((q.integrate(|p| p.x * p.x * p.y) - 1.0 / 6.0).abs() < 1e-15);
        assert!((q.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hexagon_x4y4_matches_symbolic_fan() {
        let hex: Vec<Point> = (0..6)
            .map(|k| {
                let t = PI / 3.0 * k as f64;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        let o = Point::origin();
        let fan: Vec<[Point; 3]> = (0..6).map(|k| [o, hex[k], hex[(k + 1) % 6]]).collect();
        let exact: f64 = fan.iter().map(|t| exact_monomial(t, 4, 4)).sum();
        // ear-clipped sub-triangulation, not the fan
        let tris: Vec<[Point; 3]> = crate::triangulate::ear_clip(&hex)
            .unwrap()
            .iter()
            .map(|t| [hex[t[0]], hex[t[1]], hex[t[2]]])
            .collect();
        let got = polygon_rule(&tris, 8).integrate(|p| p.x.powi(4) * p.y.powi(4));
        assert!((got - exact).abs() < 1e-10 * exact, "{got} vs {exact}");
    }

    #[test]
    fn face_rule_exactness() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 0.0);
        let r = face_rule(&a, &b, 3);
        assert_eq!(r.len(), 2);
        assert!((r.integrate(|p| p.x.powi(3)) - 0.25).abs() < 1e-15);
        let r = face_rule(&a, &b, 7);
        assert_eq!(r.len(), 4);
        assert!((r.integrate(|p| p.x.powi(6)) - 1.0 / 7.0).abs() < 1e-15);
        let l = face_rule(&Point::new(1.0, 2.0), &Point::new(4.0, 6.0), 0);
        assert!((l.total_weight() - 5.0).abs() < 1e-14);
        assert!(l.points.iter().all(|p| p.x > 1.0 && p.x < 4.0));
    }

    #[test]
    fn retriangulation_invariance() {
        let poly = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.1),
            Point::new(2.4, 1.3),
            Point::new(1.0, 2.0),
            Point::new(-0.3, 1.1),
        ];
        let f = |p: &Point| p.x.powi(3) * p.y - 2.0 * p.y.powi(4) + p.x * p.y;
        let vals: Vec<f64> = (0..5)
            .map(|s| {
                let tris: Vec<[Point; 3]> = crate::triangulate::ear_clip_from(&poly, s)
                    .unwrap()
                    .iter()
                    .map(|t| [poly[t[0]], poly[t[1]], poly[t[2]]])
                    .collect();
                polygon_rule(&tris, 4).integrate(f)
            })
            .collect();
        for v in &vals {
            assert!((v - vals[0]).abs() < 1e-12 * vals[0].abs().max(1.0));
        }
    }
}
