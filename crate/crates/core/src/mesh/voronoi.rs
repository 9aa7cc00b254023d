//! Bounded Voronoi diagrams with Lloyd relaxation.

use super::PolyMesh;
use crate::error::{Error, Result};
use crate::geometry::{polygon_centroid, signed_area, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect {
            min: Point::new(x0, y0),
            max: Point::new(x1, y1),
        }
    }

    pub fn unit_square() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    fn corners(&self) -> Vec<Point> {
        vec![
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }
}

/// A generated mesh plus notes on any regeneration that took place.
#[derive(Clone, Debug)]
pub struct Generated {
    pub mesh: PolyMesh,
    pub diagnostics: Vec<String>,
}

/// Keeps the part of `poly` on the side of the bisector of `s` and `t`
/// that contains `s`.
fn clip_bisector(poly: &[Point], s: &Point, t: &Point) -> Vec<Point> {
    let d = t - s;
    let m = nalgebra::center(s, t);
    let c = d.dot(&m.coords);
    let side = |p: &Point| d.dot(&p.coords) - c;
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (fp, fq) = (side(&p), side(&q));
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let r = fp / (fp - fq);
            out.push(p + (q - p) * r);
        }
    }
    out
}

struct SeedGrid {
    nx: usize,
    ny: usize,
    bw: f64,
    bh: f64,
    origin: Point,
    buckets: Vec<Vec<usize>>,
}

impl SeedGrid {
    fn new(domain: &Rect, seeds: &[Point]) -> Self {
        let n = seeds.len().max(1) as f64;
        let aspect = domain.width() / domain.height();
        let nx = ((n * aspect).sqrt().ceil() as usize).max(1);
        let ny = ((n / aspect).sqrt().ceil() as usize).max(1);
        let bw = domain.width() / nx as f64;
        let bh = domain.height() / ny as f64;
        let mut g = SeedGrid {
            nx,
            ny,
            bw,
            bh,
            origin: domain.min,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, s) in seeds.iter().enumerate() {
            let (bx, by) = g.bucket(s);
            g.buckets[by * nx + bx].push(i);
        }
        g
    }

    fn bucket(&self, p: &Point) -> (usize, usize) {
        let bx = ((p.x - self.origin.x) / self.bw).floor().max(0.0) as usize;
        let by = ((p.y - self.origin.y) / self.bh).floor().max(0.0) as usize;
        (bx.min(self.nx - 1), by.min(self.ny - 1))
    }
}

/// Voronoi cells of `seeds` clipped to `domain`, in seed order.
pub fn voronoi_cells(domain: &Rect, seeds: &[Point]) -> Vec<Vec<Point>> {
    let grid = SeedGrid::new(domain, seeds);
    let step = grid.bw.min(grid.bh);
    let max_ring = grid.nx.max(grid.ny);
    seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut poly = domain.corners();
            let (bx, by) = grid.bucket(s);
            for r in 0..=max_ring {
                let (x0, x1) = (bx.saturating_sub(r), (bx + r).min(grid.nx - 1));
                let (y0, y1) = (by.saturating_sub(r), (by + r).min(grid.ny - 1));
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        if x.abs_diff(bx).max(y.abs_diff(by)) != r {
                            continue;
                        }
                        for &j in &grid.buckets[y * grid.nx + x] {
                            if j != i {
                                poly = clip_bisector(&poly, s, &seeds[j]);
                            }
                        }
                    }
                }
                // seeds beyond ring r are at least r*step away; they cannot
                // cut a cell whose farthest point is closer than half that
                let reach = poly.iter().map(|p| (p - s).norm()).fold(0.0, f64::max);
                if r as f64 * step >= 2.0 * reach {
                    break;
                }
            }
            poly
        })
        .collect()
}

/// Merges nearly coincident vertices and snaps them onto the domain sides.
fn weld(domain: &Rect, polys: &[Vec<Point>]) -> (Vec<Point>, Vec<Vec<usize>>) {
    let tol = 1e-10 * domain.width().max(domain.height());
    let snap = |v: f64, lo: f64, hi: f64| {
        if (v - lo).abs() <= tol {
            lo
        } else if (v - hi).abs() <= tol {
            hi
        } else {
            v
        }
    };
    let key = |p: &Point| ((p.x / (4.0 * tol)).round() as i64, (p.y / (4.0 * tol)).round() as i64);
    let mut vertices: Vec<Point> = Vec::new();
    let mut lookup: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut loops = Vec::with_capacity(polys.len());
    for poly in polys {
        let mut lp: Vec<usize> = Vec::with_capacity(poly.len());
        for p in poly {
            let p = Point::new(
                snap(p.x, domain.min.x, domain.max.x),
                snap(p.y, domain.min.y, domain.max.y),
            );
            let (kx, ky) = key(&p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(ids) = lookup.get(&(kx + dx, ky + dy)) {
                        if let Some(&id) = ids.iter().find(|&&id| (vertices[id] - p).norm() <= tol) {
                            found = Some(id);
                            break 'search;
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                vertices.push(p);
                lookup.entry((kx, ky)).or_default().push(vertices.len() - 1);
                vertices.len() - 1
            });
            if lp.is_empty() || (lp.last() != Some(&id) && lp[0] != id) {
                lp.push(id);
            }
        }
        loops.push(lp);
    }
    (vertices, loops)
}

fn dedupe_seeds(domain: &Rect, seeds: &mut [Point], rng: &mut ChaCha8Rng, log: &mut Vec<String>) {
    let tol = 1e-9 * domain.width().max(domain.height());
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.sort_by(|&a, &b| seeds[a].x.total_cmp(&seeds[b].x));
    for w in 0..order.len() {
        for v in w + 1..order.len() {
            let (i, j) = (order[w], order[v]);
            if seeds[j].x - seeds[i].x > tol {
                break;
            }
            if (seeds[j] - seeds[i]).norm() <= tol {
                let jitter = 1e-6 * domain.width().min(domain.height());
                seeds[j].x = (seeds[j].x + rng.random_range(-jitter..jitter))
                    .clamp(domain.min.x, domain.max.x);
                seeds[j].y = (seeds[j].y + rng.random_range(-jitter..jitter))
                    .clamp(domain.min.y, domain.max.y);
                log.push(format!("seeds {i} and {j} coincide; jittered seed {j}"));
            }
        }
    }
}

/// Clipped Voronoi mesh of `n_cells` random seeds after `lloyd_iters`
/// centroidal relaxation sweeps. Deterministic in `seed`.
pub fn generate_voronoi(
    domain: Rect,
    n_cells: usize,
    lloyd_iters: usize,
    seed: u64,
) -> Result<Generated> {
    if n_cells == 0 {
        return Err(Error::InvalidMesh("n_cells must be at least 1".into()));
    }
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(Error::InvalidMesh("domain rectangle has no area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds: Vec<Point> = (0..n_cells)
        .map(|_| {
            Point::new(
                rng.random_range(domain.min.x..domain.max.x),
                rng.random_range(domain.min.y..domain.max.y),
            )
        })
        .collect();
    let mut log = Vec::new();

    for _ in 0..lloyd_iters {
        dedupe_seeds(&domain, &mut seeds, &mut rng, &mut log);
        let cells = voronoi_cells(&domain, &seeds);
        for (s, c) in seeds.iter_mut().zip(&cells) {
            if c.len() >= 3 && signed_area(c) > 0.0 {
                *s = polygon_centroid(c);
            }
        }
    }

    const ATTEMPTS: usize = 5;
    let mut last_err = None;
    for attempt in 0..ATTEMPTS {
        dedupe_seeds(&domain, &mut seeds, &mut rng, &mut log);
        let cells = voronoi_cells(&domain, &seeds);
        let (vertices, loops) = weld(&domain, &cells);
        match PolyMesh::from_cells(vertices, loops) {
            Ok(mesh) => {
                for d in &log {
                    log::warn!("voronoi: {d}");
                }
                return Ok(Generated {
                    mesh,
                    diagnostics: log,
                });
            }
            Err(e) => {
                log.push(format!("attempt {attempt}: {e}; regenerating with jitter"));
                let jitter = 1e-7 * domain.width().min(domain.height());
                for s in &mut seeds {
                    s.x = (s.x + rng.random_range(-jitter..jitter)).clamp(domain.min.x, domain.max.x);
                    s.y = (s.y + rng.random_range(-jitter..jitter)).clamp(domain.min.y, domain.max.y);
                }
                last_err = Some(e);
            }
        }
    }
    Err(Error::InvalidMesh(format!(
        "voronoi generation failed after {ATTEMPTS} attempts: {}; log: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default(),
        log.join("; ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FaceTag;

    #[test]
    fn single_seed_gives_the_square() {
        for seed in [0, 1, 99] {
            let g = generate_voronoi(Rect::unit_square(), 1, 0, seed).unwrap();
            assert_eq!(g.mesh.n_cells(), 1);
            assert_eq!(g.mesh.n_faces(), 4);
            assert!(g.mesh.faces().iter().all(|f| f.tag == FaceTag::Dirichlet));
            assert!((g.mesh.total_area() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn brute_force_oracle_on_cells() {
        // every sample point belongs to the cell of its nearest seed
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dom = Rect::unit_square();
        let seeds: Vec<Point> = (0..40)
            .map(|_| Point::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let cells = voronoi_cells(&dom, &seeds);
        let total: f64 = cells.iter().map(|c| signed_area(c)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for _ in 0..500 {
            let p = Point::new(rng.random::<f64>(), rng.random::<f64>());
            let nearest = (0..seeds.len())
                .min_by(|&a, &b| (seeds[a] - p).norm().total_cmp(&(seeds[b] - p).norm()))
                .unwrap();
            assert!(crate::geometry::point_in_polygon(&p, &cells[nearest]));
        }
    }

    #[test]
    fn coincident_seeds_are_logged() {
        let dom = Rect::unit_square();
        let mut seeds = vec![Point::new(0.3, 0.3), Point::new(0.3, 0.3), Point::new(0.7, 0.6)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut log = Vec::new();
        dedupe_seeds(&dom, &mut seeds, &mut rng, &mut log);
        assert_eq!(log.len(), 1);
        assert!(seeds[0] != seeds[1]);
    }
}
