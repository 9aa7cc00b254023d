//! Structured triangulations and their agglomeration into polygonal meshes.

use super::voronoi::{Generated, Rect};
use super::{FaceRecord, PolyMesh};
use crate::error::{Error, Result};
use crate::geometry::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, VecDeque};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagonal {
    /// Every square split along the same diagonal.
    Uniform,
    /// Diagonal direction alternates in a checkerboard pattern.
    Alternating,
}

/// `nx * ny` squares, each cut into two triangles.
pub fn structured_triangles(domain: Rect, nx: usize, ny: usize, diag: Diagonal) -> Result<PolyMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh("grid needs at least one square".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // exact endpoints so the boundary is the rectangle itself
            let x = if i == nx {
                domain.max.x
            } else {
                domain.min.x + domain.width() * i as f64 / nx as f64
            };
            let y = if j == ny {
                domain.max.y
            } else {
                domain.min.y + domain.height() * j as f64 / ny as f64
            };
            vertices.push(Point::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut loops = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let flip = diag == Diagonal::Alternating && (i + j) % 2 == 1;
            if flip {
                loops.push(vec![a, b, d]);
                loops.push(vec![b, c, d]);
            } else {
                loops.push(vec![a, b, c]);
                loops.push(vec![a, c, d]);
            }
        }
    }
    PolyMesh::from_cells(vertices, loops)
}

struct Dual<'a> {
    fine: &'a PolyMesh,
    adj: Vec<Vec<usize>>,
    vertex_cells: Vec<Vec<usize>>,
}

impl<'a> Dual<'a> {
    fn new(fine: &'a PolyMesh) -> Self {
        let adj = (0..fine.n_cells()).map(|k| fine.neighbours(k)).collect();
        let mut vertex_cells = vec![Vec::new(); fine.vertices().len()];
        for (k, c) in fine.cells().iter().enumerate() {
            for &v in &c.vertices {
                vertex_cells[v].push(k);
            }
        }
        // faces may end at hanging vertices that are not loop vertices
        for f in fine.faces() {
            for &v in &f.vertices {
                for k in f.cells() {
                    if !vertex_cells[v].contains(&k) {
                        vertex_cells[v].push(k);
                    }
                }
            }
        }
        Dual {
            fine,
            adj,
            vertex_cells,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn farthest_point_seeds(&self, n_target: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let cents: Vec<Point> = self.fine.cells().iter().map(|c| c.centroid).collect();
        let mut seeds = vec![rng.random_range(0..self.n())];
        let mut dist: Vec<f64> = cents.iter().map(|c| (c - cents[seeds[0]]).norm()).collect();
        while seeds.len() < n_target {
            let next = (0..self.n())
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("non-empty");
            seeds.push(next);
            for (d, c) in dist.iter_mut().zip(&cents) {
                *d = d.min((c - cents[next]).norm());
            }
        }
        seeds
    }

    /// Multi-source breadth-first accretion from the seeds.
    fn grow(&self, seeds: &[usize]) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        for (a, &s) in seeds.iter().enumerate() {
            label[s] = a;
            queue.push_back(s);
        }
        while let Some(k) = queue.pop_front() {
            for &nb in &self.adj[k] {
                if label[nb] == usize::MAX {
                    label[nb] = label[k];
                    queue.push_back(nb);
                }
            }
        }
        label
    }

    /// Moves every seed to the member cell nearest its aggregate's centroid.
    fn recentre(&self, label: &[usize], n_agg: usize) -> Vec<usize> {
        let mut acc = vec![(0.0, 0.0, 0.0); n_agg];
        for (k, c) in self.fine.cells().iter().enumerate() {
            let e = &mut acc[label[k]];
            e.0 += c.area * c.centroid.x;
            e.1 += c.area * c.centroid.y;
            e.2 += c.area;
        }
        let targets: Vec<Point> = acc.iter().map(|e| Point::new(e.0 / e.2, e.1 / e.2)).collect();
        let mut best = vec![(f64::INFINITY, usize::MAX); n_agg];
        for (k, c) in self.fine.cells().iter().enumerate() {
            let d = (c.centroid - targets[label[k]]).norm();
            if d < best[label[k]].0 {
                best[label[k]] = (d, k);
            }
        }
        best.into_iter().map(|b| b.1).collect()
    }

    /// Whether the cells labelled `agg` reachable from `start` number `size`.
    fn connected(&self, label: &[usize], agg: usize, start: usize, size: usize) -> bool {
        let mut seen = HashMap::with_capacity(size);
        seen.insert(start, ());
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for &nb in &self.adj[k] {
                if label[nb] == agg && seen.insert(nb, ()).is_none() {
                    stack.push(nb);
                }
            }
        }
        seen.len() == size
    }

    /// Oriented boundary edges `(from, to)` of every aggregate.
    fn boundaries(&self, label: &[usize], n_agg: usize) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); n_agg];
        for f in self.fine.faces() {
            let [a, b] = f.vertices;
            let l = label[f.left];
            match f.right.map(|r| label[r]) {
                Some(r) if r == l => {}
                Some(r) => {
                    out[l].push((a, b));
                    out[r].push((b, a));
                }
                None => out[l].push((a, b)),
            }
        }
        out
    }

    /// Every defect: vertices where an aggregate touches itself, and
    /// aggregates whose boundary is not a single loop.
    fn defects(&self, label: &[usize], n_agg: usize) -> Vec<Defect> {
        let mut out = Vec::new();
        for (agg, edges) in self.boundaries(label, n_agg).iter().enumerate() {
            let mut next: HashMap<usize, usize> = HashMap::with_capacity(edges.len());
            let mut pinched = false;
            for &(a, b) in edges {
                if next.insert(a, b).is_some() {
                    out.push(Defect::Pinch { agg, vertex: a });
                    pinched = true;
                }
            }
            if pinched {
                continue;
            }
            let Some(start) = edges.iter().map(|e| e.0).min() else {
                continue;
            };
            let mut v = start;
            let mut steps = 0;
            loop {
                v = next[&v];
                steps += 1;
                if v == start {
                    break;
                }
            }
            if steps != edges.len() {
                out.push(Defect::Hole { agg });
            }
        }
        out
    }

    /// Reassigns the cells around a pinch vertex so the aggregate's two
    /// sides meet through a face. Returns false if no admissible move exists.
    fn repair_pinch(&self, label: &mut [usize], sizes: &mut [usize], agg: usize, vertex: usize) -> bool {
        let around = &self.vertex_cells[vertex];
        let local_adj = |c: usize| -> Vec<usize> {
            self.adj[c]
                .iter()
                .copied()
                .filter(|nb| around.contains(nb) && self.share_face_at(c, *nb, vertex))
                .collect()
        };
        let mine: Vec<usize> = around.iter().copied().filter(|&c| label[c] == agg).collect();
        let Some(&start) = mine.first() else {
            return false;
        };
        // local component of `start` among the aggregate's cells
        let mut comp = vec![start];
        let mut i = 0;
        while i < comp.len() {
            for nb in local_adj(comp[i]) {
                if label[nb] == agg && !comp.contains(&nb) {
                    comp.push(nb);
                }
            }
            i += 1;
        }
        // shortest bridge through foreign cells to another local component
        let mut prev: HashMap<usize, usize> = HashMap::new();
        let mut queue: VecDeque<usize> = comp.iter().copied().collect();
        let mut bridge = None;
        'bfs: while let Some(c) = queue.pop_front() {
            for nb in local_adj(c) {
                if comp.contains(&nb) || prev.contains_key(&nb) {
                    continue;
                }
                prev.insert(nb, c);
                if label[nb] == agg {
                    bridge = Some(nb);
                    break 'bfs;
                }
                queue.push_back(nb);
            }
        }
        let Some(end) = bridge else {
            return false;
        };
        let mut path = Vec::new();
        let mut c = prev[&end];
        while !comp.contains(&c) {
            path.push(c);
            c = prev[&c];
        }
        let saved: Vec<(usize, usize)> = path.iter().map(|&c| (c, label[c])).collect();
        let relabel = |label: &mut [usize], sizes: &mut [usize], c: usize, to: usize| {
            sizes[label[c]] -= 1;
            sizes[to] += 1;
            label[c] = to;
        };
        for &c in &path {
            relabel(label, sizes, c, agg);
        }
        let mut donors: Vec<usize> = saved.iter().map(|s| s.1).collect();
        donors.sort_unstable();
        donors.dedup();
        let ok = donors.iter().all(|&d| {
            if sizes[d] == 0 {
                return false;
            }
            // any remaining cell of the donor next to the path
            let start = path
                .iter()
                .flat_map(|&c| self.adj[c].iter().copied())
                .find(|&nb| label[nb] == d);
            start.is_some_and(|s| self.connected(label, d, s, sizes[d]))
        });
        if !ok {
            for (c, l) in saved {
                relabel(label, sizes, c, l);
            }
        }
        ok
    }

    fn share_face_at(&self, a: usize, b: usize, vertex: usize) -> bool {
        self.fine.cell(a).faces.iter().any(|&f| {
            let face = self.fine.face(f);
            face.cells().any(|k| k == b) && face.vertices.contains(&vertex)
        })
    }

    fn partition(&self, n_target: usize, rng: &mut ChaCha8Rng) -> std::result::Result<Vec<usize>, String> {
        let mut seeds = self.farthest_point_seeds(n_target, rng);
        let mut label = self.grow(&seeds);
        for _ in 0..3 {
            seeds = self.recentre(&label, n_target);
            let mut dedup = seeds.clone();
            dedup.sort_unstable();
            dedup.dedup();
            if dedup.len() != seeds.len() {
                break;
            }
            label = self.grow(&seeds);
        }
        let mut sizes = vec![0; n_target];
        for &l in &label {
            sizes[l] += 1;
        }
        // repairs are local, so each round fixes every pinch it can
        const MAX_ROUNDS: usize = 64;
        for _ in 0..MAX_ROUNDS {
            let defects = self.defects(&label, n_target);
            if defects.is_empty() {
                return Ok(label);
            }
            let mut progressed = false;
            for d in &defects {
                match *d {
                    Defect::Hole { agg } => return Err(format!("aggregate {agg} encloses a hole")),
                    Defect::Pinch { agg, vertex } => {
                        progressed |= self.repair_pinch(&mut label, &mut sizes, agg, vertex);
                    }
                }
            }
            if !progressed {
                let Defect::Pinch { agg, vertex } = defects[0] else { unreachable!() };
                return Err(format!("aggregate {agg} pinched at vertex {vertex}"));
            }
        }
        Err("pinch repair did not terminate".into())
    }
}

enum Defect {
    Pinch { agg: usize, vertex: usize },
    Hole { agg: usize },
}

/// Merges the cells of `fine` into `n_target` connected polygons grown by
/// breadth-first accretion on the dual graph. Faces between merged cells
/// disappear; the remaining fine faces are kept as they are, so coarse
/// cells may carry many short collinear faces.
pub fn agglomerate(fine: &PolyMesh, n_target: usize, seed: u64) -> Result<Generated> {
    let n = fine.n_cells();
    if n_target == 0 || n_target > n {
        return Err(Error::Agglomeration(format!(
            "target {n_target} outside 1..={n}"
        )));
    }
    if n_target == n {
        return Ok(Generated {
            mesh: fine.clone(),
            diagnostics: Vec::new(),
        });
    }
    let dual = Dual::new(fine);
    let mut diagnostics = Vec::new();
    const ATTEMPTS: u64 = 8;
    for attempt in 0..ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        match dual.partition(n_target, &mut rng) {
            Ok(label) => {
                let mesh = build_coarse(fine, &dual, &label, n_target)?;
                for d in &diagnostics {
                    log::warn!("agglomerate: {d}");
                }
                return Ok(Generated { mesh, diagnostics });
            }
            Err(msg) => diagnostics.push(format!("attempt {attempt}: {msg}; regrowing")),
        }
    }
    Err(Error::Agglomeration(diagnostics.join("; ")))
}

fn build_coarse(fine: &PolyMesh, dual: &Dual<'_>, label: &[usize], n_agg: usize) -> Result<PolyMesh> {
    // number aggregates by their smallest fine cell
    let mut first = vec![usize::MAX; n_agg];
    for (k, &l) in label.iter().enumerate() {
        first[l] = first[l].min(k);
    }
    let mut order: Vec<usize> = (0..n_agg).collect();
    order.sort_by_key(|&a| first[a]);
    let mut new_id = vec![0; n_agg];
    for (i, &a) in order.iter().enumerate() {
        new_id[a] = i;
    }
    let label: Vec<usize> = label.iter().map(|&l| new_id[l]).collect();

    let mut loops = Vec::with_capacity(n_agg);
    for edges in dual.boundaries(&label, n_agg) {
        let next: HashMap<usize, usize> = edges.iter().copied().collect();
        let start = edges.iter().map(|e| e.0).min().expect("aggregate has a boundary");
        let mut lp = vec![start];
        let mut v = next[&start];
        while v != start {
            lp.push(v);
            v = next[&v];
        }
        loops.push(lp);
    }

    let mut remap = vec![usize::MAX; fine.vertices().len()];
    let mut vertices = Vec::new();
    for lp in &mut loops {
        for v in lp.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = vertices.len();
                vertices.push(fine.vertices()[*v]);
            }
            *v = remap[*v];
        }
    }
    let records = fine
        .faces()
        .iter()
        .filter(|f| f.right.is_none_or(|r| label[r] != label[f.left]))
        .map(|f| FaceRecord {
            vertices: [remap[f.vertices[0]], remap[f.vertices[1]]],
            left: label[f.left],
            right: f.right.map(|r| label[r]),
            tag: f.tag,
        })
        .collect();
    PolyMesh::from_parts(vertices, loops, records)
}
