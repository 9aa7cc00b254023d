//! Ear-clipping triangulation of simple polygons.

use crate::geometry::{bounding_box, orient, point_segment_distance, remove_collinear, Point};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoEarFound {
    pub remaining: usize,
}

/// Triangulates a counter-clockwise simple polygon.
///
/// Straight-angle vertices are skipped, so an `n`-gon with `k` of them
/// yields `n - k - 2` triangles. Returned indices refer to `poly`.
pub fn ear_clip(poly: &[Point]) -> Result<Vec<[usize; 3]>, NoEarFound> {
    ear_clip_from(poly, 0)
}

/// Same as [`ear_clip`] but starts the ear search at vertex `start`,
/// which gives a different (equally valid) triangulation.
pub fn ear_clip_from(poly: &[Point], start: usize) -> Result<Vec<[usize; 3]>, NoEarFound> {
    let mut ring = remove_collinear(poly, 1e-13);
    if ring.len() < 3 {
        return Err(NoEarFound { remaining: ring.len() });
    }
    let n0 = ring.len();
    ring.rotate_left(start % n0);
    let (lo, hi) = bounding_box(poly);
    let scale = (hi - lo).norm();
    let eps = 1e-13 * scale;

    let mut tris = Vec::with_capacity(ring.len().saturating_sub(2));
    let mut cursor = 0usize;
    while ring.len() > 3 {
        let n = ring.len();
        let mut clipped = false;
        for step in 0..n {
            let k = (cursor + step) % n;
            let ia = ring[(k + n - 1) % n];
            let ib = ring[k];
            let ic = ring[(k + 1) % n];
            if is_ear(poly, &ring, ia, ib, ic, eps) {
                tris.push([ia, ib, ic]);
                ring.remove(k);
                cursor = if k == 0 { 0 } else { k - 1 };
                clipped = true;
                break;
            }
        }
        if clipped {
            continue;
        }
        // a clip may leave a straight angle behind; dropping it keeps the region
        let mut dropped = false;
        for k in 0..n {
            let a = poly[ring[(k + n - 1) % n]];
            let b = poly[ring[k]];
            let c = poly[ring[(k + 1) % n]];
            if orient(&a, &b, &c).abs() <= eps * (c - a).norm() && (b - a).dot(&(c - b)) > 0.0 {
                ring.remove(k);
                dropped = true;
                break;
            }
        }
        if !dropped {
            return Err(NoEarFound { remaining: ring.len() });
        }
    }
    let (a, b, c) = (poly[ring[0]], poly[ring[1]], poly[ring[2]]);
    if orient(&a, &b, &c) > 0.0 {
        tris.push([ring[0], ring[1], ring[2]]);
    } else if orient(&a, &b, &c).abs() > eps * scale {
        return Err(NoEarFound { remaining: 3 });
    }
    Ok(tris)
}

fn is_ear(poly: &[Point], ring: &[usize], ia: usize, ib: usize, ic: usize, eps: f64) -> bool {
    let (a, b, c) = (poly[ia], poly[ib], poly[ic]);
    if orient(&a, &b, &c) <= eps * (c - a).norm() {
        return false;
    }
    for &iv in ring {
        if iv == ia || iv == ib || iv == ic {
            continue;
        }
        let v = poly[iv];
        if (v - a).norm() <= eps || (v - b).norm() <= eps || (v - c).norm() <= eps {
            // pinched vertex coinciding with a corner; only the diagonal matters
            continue;
        }
        let inside = orient(&a, &b, &v) >= -eps * (b - a).norm()
            && orient(&b, &c, &v) >= -eps * (c - b).norm()
            && orient(&c, &a, &v) >= -eps * (a - c).norm();
        if inside || point_segment_distance(&v, &c, &a) <= eps {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{signed_area, triangle_area};

    fn area_of(poly: &[Point], tris: &[[usize; 3]]) -> f64 {
        tris.iter()
            .map(|t| triangle_area(&[poly[t[0]], poly[t[1]], poly[t[2]]]))
            .sum()
    }

    #[test]
    fn convex_quad_gives_two_triangles() {
        let q = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.1),
            Point::new(1.8, 1.0),
            Point::new(0.2, 0.9),
        ];
        let t = ear_clip(&q).unwrap();
        assert_eq!(t.len(), 2);
        assert!((area_of(&q, &t) - signed_area(&q)).abs() < 1e-14);
    }

    #[test]
    fn regular_hexagon_side_one() {
        let hex: Vec<Point> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                Point::new(t.cos(), t.sin())
            })
            .collect();
        let t = ear_clip(&hex).unwrap();
        assert_eq!(t.len(), 4);
        let exact = 3.0 * 3f64.sqrt() / 2.0;
        assert!((area_of(&hex, &t) - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn l_shape_all_positive() {
        let l = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        for start in 0..6 {
            let t = ear_clip_from(&l, start).unwrap();
            assert_eq!(t.len(), 4);
            for tri in &t {
                assert!(triangle_area(&[l[tri[0]], l[tri[1]], l[tri[2]]]) > 0.0);
            }
            assert!((area_of(&l, &t) - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn collinear_vertices_are_skipped() {
        // unit square with midpoints on every edge
        let p = vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.5),
            Point::new(1.0, 1.0),
            Point::new(0.5, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 0.5),
        ];
        let t = ear_clip(&p).unwrap();
        assert_eq!(t.len(), 2);
        assert!((area_of(&p, &t) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn comb_polygon() {
        // staircase comb with many reflex vertices
        let mut p = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        for k in (0..10).rev() {
            let x = k as f64;
            p.push(Point::new(x + 1.0, 2.0));
            p.push(Point::new(x + 0.5, 1.0));
        }
        p.push(Point::new(0.0, 2.0));
        let t = ear_clip(&p).unwrap();
        assert!((area_of(&p, &t) - signed_area(&p)).abs() < 1e-12);
        assert!(t
            .iter()
            .all(|tri| triangle_area(&[p[tri[0]], p[tri[1]], p[tri[2]]]) > 0.0));
    }
}
