use super::FlatSimplex;
use crate::geometry::{bounding_box, face_triangle_in_polygon, orient, triangles_overlap, Point};

/// How many polygon vertices are tried as apex for a face the incenter
/// cannot see.
const MAX_VERTEX_CANDIDATES: usize = 96;

/// Assigns to each face `(a, b)` (counter-clockwise along `poly`) a
/// triangle inside the polygon with `ab` as a side, such that the
/// triangles are pairwise disjoint. Candidates: fans from the incenter and
/// the centroid, and for non-star-shaped cells the incenter fan completed
/// either by visible vertices or by small apexes above the face midpoints.
/// The one with the largest minimum height wins.
///
/// On failure returns the index of a face for which no apex exists.
pub fn assign_face_simplices(
    poly: &[Point],
    faces: &[(Point, Point)],
    centroid: Point,
    incenter: Point,
) -> Result<Vec<FlatSimplex>, usize> {
    let mut best: Option<Vec<FlatSimplex>> = None;
    for apex in [incenter, centroid] {
        if let Some(fan) = fan_from(poly, faces, apex) {
            best = pick(best, fan);
        }
    }
    // a fan can succeed with a grazing apex, so the hybrids always compete
    let far = hybrid(poly, faces, incenter, centroid, true);
    let near = hybrid(poly, faces, incenter, centroid, false);
    if best.is_none() {
        if let (Err(i), Err(_)) = (&far, &near) {
            return Err(*i);
        }
    }
    for cand in [far, near].into_iter().flatten() {
        best = pick(best, cand);
    }
    best.ok_or(0)
}

fn min_height(s: &[FlatSimplex]) -> f64 {
    s.iter().map(|t| t.height).fold(f64::INFINITY, f64::min)
}

/// Relative band within which two minimum heights count as equal.
const TIE_RTOL: f64 = 1e-9;

fn total_height(s: &[FlatSimplex]) -> f64 {
    s.iter().map(|t| t.height).sum()
}

/// Larger minimum height wins; near-ties go to the larger total height, so
/// rounding noise cannot flip the choice.
fn pick(best: Option<Vec<FlatSimplex>>, cand: Vec<FlatSimplex>) -> Option<Vec<FlatSimplex>> {
    let Some(b) = best else { return Some(cand) };
    let (mb, mc) = (min_height(&b), min_height(&cand));
    let keep = if (mb - mc).abs() <= TIE_RTOL * mb.max(mc) {
        total_height(&b) >= total_height(&cand)
    } else {
        mb > mc
    };
    Some(if keep { b } else { cand })
}

fn height(a: &Point, b: &Point, apex: &Point) -> f64 {
    orient(a, b, apex) / (b - a).norm()
}

fn fan_from(poly: &[Point], faces: &[(Point, Point)], apex: Point) -> Option<Vec<FlatSimplex>> {
    faces
        .iter()
        .map(|(a, b)| {
            face_triangle_in_polygon(a, b, &apex, poly).then(|| FlatSimplex {
                apex,
                height: height(a, b, &apex),
            })
        })
        .collect()
}

fn hybrid(
    poly: &[Point],
    faces: &[(Point, Point)],
    incenter: Point,
    centroid: Point,
    use_vertices: bool,
) -> Result<Vec<FlatSimplex>, usize> {
    let mut apexes = Vec::with_capacity(faces.len());
    for (i, (a, b)) in faces.iter().enumerate() {
        let tallest = |x: Option<Point>, y: Option<Point>| match (x, y) {
            (Some(p), Some(q)) => Some(if height(a, b, &q) > height(a, b, &p) { q } else { p }),
            (p, q) => p.or(q),
        };
        let inc = face_triangle_in_polygon(a, b, &incenter, poly).then_some(incenter);
        let probe = inward_probe(poly, a, b);
        let mut found = tallest(inc, probe);
        if use_vertices && inc.is_none() {
            let mut cands: Vec<(f64, Point)> = poly
                .iter()
                .chain([&centroid])
                .map(|c| (height(a, b, c), *c))
                .filter(|(h, _)| *h > 0.0)
                .collect();
            // near-ties are broken by position along the face, which is
            // independent of labels and rigid motions
            let quantum = 1e-9 * (b - a).norm();
            let along = |c: &Point| (c - a).dot(&(b - a));
            cands.sort_by(|x, y| {
                let (qx, qy) = ((x.0 / quantum).round(), (y.0 / quantum).round());
                qy.total_cmp(&qx).then(along(&x.1).total_cmp(&along(&y.1)))
            });
            cands.truncate(MAX_VERTEX_CANDIDATES);
            let vertex = cands
                .iter()
                .find(|(_, c)| face_triangle_in_polygon(a, b, c, poly))
                .map(|&(_, c)| c);
            found = tallest(found, vertex);
        }
        match found {
            Some(c) if height(a, b, &c) > 0.0 => apexes.push(c),
            _ => return Err(i),
        }
    }
    let heights: Vec<f64> = faces.iter().zip(&apexes).map(|((a, b), c)| height(a, b, c)).collect();

    let mids: Vec<Point> = faces.iter().map(|(a, b)| nalgebra::center(a, b)).collect();
    let tri = |i: usize, t: f64| -> [Point; 3] {
        let (a, b) = faces[i];
        [a, b, mids[i] + (apexes[i] - mids[i]) * t]
    };
    let scale = {
        let (lo, hi) = bounding_box(poly);
        (hi - lo).norm()
    };
    let eps = 1e-12 * scale;

    // Each face pulls its apex towards its midpoint on its own: in every
    // overlapping pair the taller triangle is halved, so a conflict only
    // costs the faces involved in it.
    let mut t = vec![1.0; faces.len()];
    let mut shrunk = vec![false; faces.len()];
    loop {
        let tris: Vec<[Point; 3]> = (0..faces.len()).map(|i| tri(i, t[i])).collect();
        let pairs = overlapping_pairs(&tris, eps);
        if pairs.is_empty() {
            break;
        }
        let mut halve = vec![false; faces.len()];
        for (i, j) in pairs {
            let (hi, hj) = (t[i] * heights[i], t[j] * heights[j]);
            if hi >= hj {
                halve[i] = true;
            }
            if hj >= hi {
                halve[j] = true;
            }
        }
        for (i, h) in halve.into_iter().enumerate() {
            if h {
                t[i] *= 0.5;
                shrunk[i] = true;
                if t[i] < 1e-12 {
                    return Err(i);
                }
            }
        }
    }
    // Win back part of each halving against the halved state of all other
    // faces, then undo the gains of any two grown triangles that clash.
    // Triangles shrink monotonically in `t`, so the result stays disjoint,
    // and no step depends on the order of the faces.
    let base = t.clone();
    let base_tris: Vec<[Point; 3]> = (0..faces.len()).map(|i| tri(i, base[i])).collect();
    for i in (0..faces.len()).filter(|&i| shrunk[i]) {
        let (mut lo, mut hi) = (base[i], (2.0 * base[i]).min(1.0));
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            let cand = tri(i, mid);
            let clash = (0..faces.len()).any(|j| j != i && triangles_overlap(&cand, &base_tris[j], eps));
            if clash {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        t[i] = lo;
    }
    let grown: Vec<[Point; 3]> = (0..faces.len()).map(|i| tri(i, t[i])).collect();
    for (i, j) in overlapping_pairs(&grown, eps) {
        t[i] = base[i];
        t[j] = base[j];
    }
    Ok(faces
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let apex = tri(i, t[i])[2];
            FlatSimplex {
                apex,
                height: height(a, b, &apex),
            }
        })
        .collect())
}

/// Small isosceles apex above the face midpoint, shrunk until it fits.
fn inward_probe(poly: &[Point], a: &Point, b: &Point) -> Option<Point> {
    let e = b - a;
    let n = nalgebra::Vector2::new(-e.y, e.x);
    let m = nalgebra::center(a, b);
    let mut s = 0.5;
    while s > 1e-6 {
        let c = m + n * s;
        if face_triangle_in_polygon(a, b, &c, poly) {
            return Some(c);
        }
        s *= 0.5;
    }
    None
}

/// Index pairs of overlapping triangles. A sweep over x-extents limits the
/// exact tests to triangles whose boxes intersect.
fn overlapping_pairs(tris: &[[Point; 3]], eps: f64) -> Vec<(usize, usize)> {
    let mut boxes: Vec<(f64, f64, f64, f64, usize)> = tris
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (lo, hi) = bounding_box(t);
            (lo.x, hi.x, lo.y, hi.y, i)
        })
        .collect();
    boxes.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out = Vec::new();
    for i in 0..boxes.len() {
        let (_, xi1, yi0, yi1, ti) = boxes[i];
        for &(xj0, _, yj0, yj1, tj) in &boxes[i + 1..] {
            if xj0 >= xi1 {
                break;
            }
            if yj0 >= yi1 || yi0 >= yj1 {
                continue;
            }
            if triangles_overlap(&tris[ti], &tris[tj], eps) {
                out.push((ti.min(tj), ti.max(tj)));
            }
        }
    }
    out
}
