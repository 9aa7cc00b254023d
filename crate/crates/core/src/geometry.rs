//! Planar geometry primitives used by the mesh generators and the
//! face-simplex construction.
//!
//! Polygons are plain slices of points; unless stated otherwise they are
//! expected to be counter-clockwise and simple.

use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

#[inline]
pub fn cross(a: &Vector, b: &Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of the triangle `(a, b, c)`.
#[inline]
pub fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    cross(&(b - a), &(c - a))
}

pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = &poly[i];
        let b = &poly[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * orient(&t[0], &t[1], &t[2])
}

pub fn polygon_centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    // shift to the first vertex to limit cancellation
    let o = poly[0];
    for i in 0..n {
        let a = poly[i] - o;
        let b = poly[(i + 1) % n] - o;
        let w = a.x * b.y - b.x * a.y;
        a2 += w;
        cx += (a.x + b.x) * w;
        cy += (a.y + b.y) * w;
    }
    Point::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
}

pub fn diameter(pts: &[Point]) -> f64 {
    let mut d2: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d2 = d2.max((pts[i] - pts[j]).norm_squared());
        }
    }
    d2.sqrt()
}

pub fn bounding_box(pts: &[Point]) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Drops vertices at which the boundary continues straight on.
pub fn remove_collinear(poly: &[Point], rel_eps: f64) -> Vec<usize> {
    let scale = diameter_bbox(poly);
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    loop {
        let n = idx.len();
        if n <= 3 {
            return idx;
        }
        let mut removed = false;
        for k in 0..n {
            let a = poly[idx[(k + n - 1) % n]];
            let b = poly[idx[k]];
            let c = poly[idx[(k + 1) % n]];
            let ab = b - a;
            let bc = c - b;
            if cross(&ab, &bc).abs() <= rel_eps * scale * (ab.norm() + bc.norm())
                && ab.dot(&bc) > 0.0
            {
                idx.remove(k);
                removed = true;
                break;
            }
        }
        if !removed {
            return idx;
        }
    }
}

fn diameter_bbox(pts: &[Point]) -> f64 {
    let (lo, hi) = bounding_box(pts);
    (hi - lo).norm()
}

/// Convexity test for a counter-clockwise polygon. Straight angles count as convex.
pub fn is_convex(poly: &[Point]) -> bool {
    let n = poly.len();
    let scale = diameter_bbox(poly);
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        orient(&a, &b, &c) >= -1e-12 * scale * scale
    })
}

/// Even-odd point location. Points on the boundary may go either way.
pub fn point_in_polygon(p: &Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_squared();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / l2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub fn distance_to_boundary(p: &Point, poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| point_segment_distance(p, &poly[i], &poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Signed distance: positive inside.
pub fn signed_distance(p: &Point, poly: &[Point]) -> f64 {
    let d = distance_to_boundary(p, poly);
    if point_in_polygon(p, poly) {
        d
    } else {
        -d
    }
}

/// True when the open segments `ab` and `cd` cross at a single interior point.
pub fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point, eps: f64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

/// True when the closed segments `ab` and `cd` share at least one point.
pub fn segments_touch(a: &Point, b: &Point, c: &Point, d: &Point, eps: f64) -> bool {
    if segments_cross(a, b, c, d, eps) {
        return true;
    }
    point_segment_distance(a, c, d) <= eps
        || point_segment_distance(b, c, d) <= eps
        || point_segment_distance(c, a, b) <= eps
        || point_segment_distance(d, a, b) <= eps
}

/// Returns a pair of non-adjacent edges that touch, if any.
pub fn find_self_intersection(poly: &[Point]) -> Option<(usize, usize)> {
    let n = poly.len();
    if n < 4 {
        return None;
    }
    let eps = 1e-12 * diameter_bbox(poly);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_touch(&a, &b, &c, &d, eps) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Separating-axis test on the open interiors of two triangles.
pub fn triangles_overlap(t1: &[Point; 3], t2: &[Point; 3], eps: f64) -> bool {
    for tri in [t1, t2] {
        for k in 0..3 {
            let e = tri[(k + 1) % 3] - tri[k];
            let axis = Vector::new(-e.y, e.x);
            let (mut lo1, mut hi1) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut lo2, mut hi2) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in t1 {
                let s = axis.dot(&p.coords);
                lo1 = lo1.min(s);
                hi1 = hi1.max(s);
            }
            for p in t2 {
                let s = axis.dot(&p.coords);
                lo2 = lo2.min(s);
                hi2 = hi2.max(s);
            }
            let tol = eps * axis.norm();
            if hi1 <= lo2 + tol || hi2 <= lo1 + tol {
                return false;
            }
        }
    }
    true
}

fn strictly_inside_triangle(p: &Point, t: &[Point; 3], eps: f64) -> bool {
    let o = orient(&t[0], &t[1], &t[2]).signum();
    (0..3).all(|k| {
        let a = t[k];
        let b = t[(k + 1) % 3];
        o * orient(&a, &b, p) > eps * (b - a).norm()
    })
}

/// Containment of the triangle `(a, b, apex)` in a simple polygon, where
/// `ab` is a piece of the polygon boundary traversed counter-clockwise.
///
/// Conservative: configurations where the triangle edges graze polygon
/// vertices are rejected.
pub fn face_triangle_in_polygon(a: &Point, b: &Point, apex: &Point, poly: &[Point]) -> bool {
    let scale = diameter_bbox(poly);
    let eps = 1e-10 * scale;
    if orient(a, b, apex) <= eps * (b - a).norm() {
        return false;
    }
    let area_eps = 1e-12 * scale * scale;
    let tri = [*a, *b, *apex];
    let n = poly.len();
    for i in 0..n {
        let v = poly[i];
        let w = poly[(i + 1) % n];
        if segments_cross(a, apex, &v, &w, area_eps)
            || segments_cross(b, apex, &v, &w, area_eps)
        {
            return false;
        }
        if strictly_inside_triangle(&v, &tri, eps) {
            return false;
        }
        // a polygon vertex sitting on an open side edge of the triangle
        for (s, e) in [(a, apex), (b, apex)] {
            if (v - s).norm() > eps
                && (v - e).norm() > eps
                && point_segment_distance(&v, s, e) <= eps
            {
                return false;
            }
        }
    }
    let centroid = Point::from((a.coords + b.coords + apex.coords) / 3.0);
    if !point_in_polygon(&centroid, poly) {
        return false;
    }
    let apex_ok = point_in_polygon(apex, poly) || distance_to_boundary(apex, poly) <= eps;
    apex_ok
}

/// Largest inscribed circle of a convex polygon by enumerating triples of
/// active edge constraints of the Chebyshev-center linear program.
pub fn chebyshev_center_convex(poly: &[Point]) -> (Point, f64) {
    let n = poly.len();
    let mut normals = Vec::with_capacity(n);
    for i in 0..n {
        let e = poly[(i + 1) % n] - poly[i];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let nrm = Vector::new(e.y, -e.x) / len;
        normals.push((nrm, nrm.dot(&poly[i].coords)));
    }
    let m = normals.len();
    let scale = diameter_bbox(poly);
    let mut best = (polygon_centroid(poly), f64::NEG_INFINITY);
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let rows = [normals[i], normals[j], normals[k]];
                let mat = Matrix3::new(
                    rows[0].0.x, rows[0].0.y, 1.0, rows[1].0.x, rows[1].0.y, 1.0, rows[2].0.x,
                    rows[2].0.y, 1.0,
                );
                let rhs = Vector3::new(rows[0].1, rows[1].1, rows[2].1);
                let Some(sol) = mat.lu().solve(&rhs) else {
                    continue;
                };
                let (x, r) = (Point::new(sol[0], sol[1]), sol[2]);
                if !r.is_finite() || r <= best.1 {
                    continue;
                }
                let feasible = normals
                    .iter()
                    .all(|(nv, d)| nv.dot(&x.coords) + r <= d + 1e-12 * scale);
                if feasible {
                    best = (x, r);
                }
            }
        }
    }
    best
}

#[derive(Clone, Copy)]
struct Probe {
    center: Point,
    half: f64,
    dist: f64,
    potential: f64,
}

impl PartialEq for Probe {
    fn eq(&self, other: &Self) -> bool {
        self.potential == other.potential
    }
}
impl Eq for Probe {}
impl PartialOrd for Probe {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Probe {
    fn cmp(&self, other: &Self) -> Ordering {
        self.potential.total_cmp(&other.potential)
    }
}

/// Pole of inaccessibility (quadtree branch and bound) for general simple
/// polygons; `precision` is absolute.
pub fn polylabel(poly: &[Point], precision: f64) -> (Point, f64) {
    let (lo, hi) = bounding_box(poly);
    let size = (hi.x - lo.x).min(hi.y - lo.y);
    let mk = |c: Point, half: f64| {
        let d = signed_distance(&c, poly);
        Probe {
            center: c,
            half,
            dist: d,
            potential: d + half * std::f64::consts::SQRT_2,
        }
    };
    let mut heap = BinaryHeap::new();
    let half = 0.5 * size.max(1e-300);
    let mut x = lo.x;
    while x < hi.x {
        let mut y = lo.y;
        while y < hi.y {
            heap.push(mk(Point::new(x + half, y + half), half));
            y += 2.0 * half;
        }
        x += 2.0 * half;
    }
    let mut best = mk(polygon_centroid(poly), 0.0);
    let bb = mk(Point::from((lo.coords + hi.coords) * 0.5), 0.0);
    if bb.dist > best.dist {
        best = bb;
    }
    let mut budget = 2_000_000usize;
    while let Some(cell) = heap.pop() {
        if cell.dist > best.dist {
            best = cell;
        }
        if cell.potential - best.dist <= precision || budget == 0 {
            continue;
        }
        budget -= 1;
        let h = 0.5 * cell.half;
        for (dx, dy) in [(-h, -h), (h, -h), (-h, h), (h, h)] {
            heap.push(mk(Point::new(cell.center.x + dx, cell.center.y + dy), h));
        }
    }
    (best.center, best.dist)
}

/// Center and radius of the largest disc inside a simple polygon.
pub fn inscribed_circle(poly: &[Point]) -> (Point, f64) {
    let keep = remove_collinear(poly, 1e-12);
    let reduced: Vec<Point> = keep.iter().map(|&i| poly[i]).collect();
    if reduced.len() <= 24 && is_convex(&reduced) {
        chebyshev_center_convex(&reduced)
    } else {
        let (lo, hi) = bounding_box(poly);
        let h = (hi - lo).norm();
        polylabel(&reduced, 1e-5 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]
    }

    #[test]
    fn area_and_centroid_of_square() {
        let sq = square();
        assert!((signed_area(&sq) - 1.0).abs() < 1e-15);
        let c = polygon_centroid(&sq);
        assert!((c - Point::new(0.5, 0.5)).norm() < 1e-15);
        assert!((diameter(&sq) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn inradius_of_equilateral_triangle() {
        let s = 2.0;
        let tri = vec![
            Point::new(0.0, 0.0),
            Point::new(s, 0.0),
            Point::new(0.5 * s, 0.5 * s * 3f64.sqrt()),
        ];
        let (_, r) = inscribed_circle(&tri);
        assert!((r - s / (2.0 * 3f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn polylabel_matches_chebyshev_on_convex_hexagon() {
        let hex: Vec<Point> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        let (_, r_exact) = chebyshev_center_convex(&hex);
        let (_, r_pl) = polylabel(&hex, 1e-9);
        assert!((r_exact - 3f64.sqrt() / 2.0).abs() < 1e-14);
        assert!((r_exact - r_pl).abs() < 1e-8);
    }

    #[test]
    fn triangle_overlap_touching_is_not_overlap() {
        let t1 = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 0.5)];
        let t2 = [Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.5, 0.5)];
        assert!(!triangles_overlap(&t1, &t2, 1e-12));
        let t3 = [Point::new(0.2, 0.0), Point::new(1.0, 0.0), Point::new(0.5, 0.6)];
        assert!(triangles_overlap(&t1, &t3, 1e-12));
    }

    #[test]
    fn face_triangle_containment_in_l_shape() {
        let l = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        // bottom edge with apex at the far corner passes outside the notch
        assert!(!face_triangle_in_polygon(&l[0], &l[1], &Point::new(1.0, 2.0), &l));
        assert!(face_triangle_in_polygon(&l[0], &l[1], &Point::new(1.0, 1.0), &l));
        assert!(face_triangle_in_polygon(&l[0], &l[1], &Point::new(0.5, 1.2), &l));
        // side edge through the reflex corner grazes it: rejected
        assert!(!face_triangle_in_polygon(&l[0], &l[1], &Point::new(0.5, 1.5), &l));
    }

    #[test]
    fn self_intersection_detected() {
        let bow = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(find_self_intersection(&bow).is_some());
        assert!(find_self_intersection(&square()).is_none());
    }
}
