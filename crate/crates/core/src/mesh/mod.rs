//! Polygonal meshes: data model, construction from vertex loops, and the
//! geometric quantities consumed by the penalty and analysis layers.

mod agglomerate;
mod io;
mod metrics;
mod simplices;
mod voronoi;

pub use agglomerate::{agglomerate, structured_triangles, Diagonal};
pub use io::{read_mesh, read_mesh_file, write_mesh, write_mesh_file};
pub use metrics::{cell_shape_constant, compute_metrics, MeshMetrics};
pub use simplices::assign_face_simplices;
pub use voronoi::{generate_voronoi, voronoi_cells, Generated, Rect};

use crate::error::{Error, Result};
use crate::geometry::{self, Point, Vector};
use crate::triangulate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceTag {
    Interior,
    Dirichlet,
}

impl FaceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FaceTag::Interior => "interior",
            FaceTag::Dirichlet => "dirichlet",
        }
    }
}

/// Triangle inside a cell that has a face of the cell as one of its sides.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatSimplex {
    pub apex: Point,
    /// Distance from the apex to the line through the face.
    pub height: f64,
}

/// Topological face description, as stored in mesh files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceRecord {
    /// Endpoints, counter-clockwise with respect to `left`.
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    pub tag: FaceTag,
}

#[derive(Clone, Debug)]
pub struct Face {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    pub tag: FaceTag,
    pub measure: f64,
    /// Unit normal pointing out of `left`.
    pub normal: Vector,
    simplices: [Option<FlatSimplex>; 2],
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.left).chain(self.right)
    }

    /// 0 for the left cell, 1 for the right cell.
    pub fn side_of(&self, cell: usize) -> Option<usize> {
        if cell == self.left {
            Some(0)
        } else if self.right == Some(cell) {
            Some(1)
        } else {
            None
        }
    }

    /// Outward unit normal relative to `cell`.
    pub fn normal_for(&self, cell: usize) -> Vector {
        match self.side_of(cell) {
            Some(0) => self.normal,
            Some(_) => -self.normal,
            None => panic!("cell {cell} is not adjacent to this face"),
        }
    }

    pub fn simplex_for(&self, cell: usize) -> FlatSimplex {
        let side = self
            .side_of(cell)
            .unwrap_or_else(|| panic!("cell {cell} is not adjacent to this face"));
        self.simplices[side].expect("face simplices are assigned at construction")
    }

    pub fn record(&self) -> FaceRecord {
        FaceRecord {
            vertices: self.vertices,
            left: self.left,
            right: self.right,
            tag: self.tag,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    /// Counter-clockwise vertex loop.
    pub vertices: Vec<usize>,
    pub faces: Vec<usize>,
    pub area: f64,
    pub diameter: f64,
    /// Radius of the largest inscribed disc.
    pub inradius: f64,
    pub centroid: Point,
    pub incenter: Point,
    pub bbox: (Point, Point),
    /// Sub-triangulation covering the cell, each triangle counter-clockwise.
    pub triangles: Vec<[Point; 3]>,
}

#[derive(Clone, Debug)]
pub struct PolyMesh {
    vertices: Vec<Point>,
    cells: Vec<Cell>,
    faces: Vec<Face>,
}

impl PolyMesh {
    pub const DIM: usize = 2;

    pub fn dimension(&self) -> usize {
        Self::DIM
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn cell(&self, k: usize) -> &Cell {
        &self.cells[k]
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn polygon(&self, k: usize) -> Vec<Point> {
        self.cells[k].vertices.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn face_endpoints(&self, f: usize) -> (Point, Point) {
        let [a, b] = self.faces[f].vertices;
        (self.vertices[a], self.vertices[b])
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    pub fn h_max(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    pub fn h_mean(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().map(|c| c.diameter).sum::<f64>() / self.cells.len() as f64
    }

    /// Neighbouring cells across interior faces, sorted.
    pub fn neighbours(&self, k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.cells[k]
            .faces
            .iter()
            .filter_map(|&f| {
                let face = &self.faces[f];
                match face.side_of(k) {
                    Some(0) => face.right,
                    Some(_) => Some(face.left),
                    None => None,
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn face_records(&self) -> Vec<FaceRecord> {
        self.faces.iter().map(Face::record).collect()
    }

    /// Scales the mesh about the origin; the result is rebuilt from scratch.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.transformed(|p| Point::from(p.coords * s))
    }

    /// Applies a map to every vertex (orientation-preserving maps only).
    pub fn transformed(&self, map: impl Fn(&Point) -> Point) -> Result<Self> {
        let verts = self.vertices.iter().map(map).collect();
        let loops = self.cells.iter().map(|c| c.vertices.clone()).collect();
        Self::from_parts(verts, loops, self.face_records())
    }

    /// Builds a mesh from vertex loops, deriving faces. A vertex of one cell
    /// lying inside an edge of another splits that edge (hanging node).
    pub fn from_cells(vertices: Vec<Point>, loops: Vec<Vec<usize>>) -> Result<Self> {
        let loops = orient_loops(&vertices, loops)?;
        let faces = derive_faces(&vertices, &loops)?;
        Self::from_parts(vertices, loops, faces)
    }

    /// Builds a mesh from vertex loops and explicit face records.
    pub fn from_parts(
        vertices: Vec<Point>,
        loops: Vec<Vec<usize>>,
        records: Vec<FaceRecord>,
    ) -> Result<Self> {
        for (k, lp) in loops.iter().enumerate() {
            if lp.len() < 3 {
                return Err(Error::InvalidMesh(format!("cell {k} has fewer than 3 vertices")));
            }
            if let Some(&v) = lp.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("cell {k} references vertex {v}")));
            }
            let poly: Vec<Point> = lp.iter().map(|&v| vertices[v]).collect();
            if let Some((a, b)) = geometry::find_self_intersection(&poly) {
                return Err(Error::SelfIntersecting {
                    cell: k,
                    edge_a: a,
                    edge_b: b,
                });
            }
            if geometry::signed_area(&poly) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {k} is not counter-clockwise or has zero area"
                )));
            }
        }

        let mut cells: Vec<Cell> = loops
            .into_par_iter()
            .enumerate()
            .map(|(k, lp)| build_cell(k, &vertices, lp))
            .collect::<Result<_>>()?;

        let mut faces = Vec::with_capacity(records.len());
        for (f, rec) in records.into_iter().enumerate() {
            let [a, b] = rec.vertices;
            if a >= vertices.len() || b >= vertices.len() || a == b {
                return Err(Error::InvalidMesh(format!("face {f} has bad endpoints")));
            }
            let n_cells = cells.len();
            if rec.left >= n_cells || rec.right.is_some_and(|r| r >= n_cells || r == rec.left) {
                return Err(Error::InvalidMesh(format!("face {f} has bad adjacency")));
            }
            match (rec.right, rec.tag) {
                (None, FaceTag::Dirichlet) | (Some(_), FaceTag::Interior) => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "face {f}: tag {:?} inconsistent with adjacency",
                        rec.tag
                    )))
                }
            }
            let e = vertices[b] - vertices[a];
            let measure = e.norm();
            cells[rec.left].faces.push(f);
            if let Some(r) = rec.right {
                cells[r].faces.push(f);
            }
            faces.push(Face {
                vertices: rec.vertices,
                left: rec.left,
                right: rec.right,
                tag: rec.tag,
                measure,
                normal: Vector::new(e.y, -e.x) / measure,
                simplices: [None, None],
            });
        }

        let mut mesh = PolyMesh {
            vertices,
            cells,
            faces,
        };
        mesh.check_face_cover()?;
        mesh.assign_simplices()?;
        Ok(mesh)
    }

    /// Every cell's faces must lie on its boundary, run along it in the
    /// loop direction, and add up to its perimeter.
    fn check_face_cover(&self) -> Result<()> {
        for (k, cell) in self.cells.iter().enumerate() {
            let poly = self.polygon(k);
            let n = poly.len();
            let perimeter: f64 = (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).sum();
            let tol = 1e-9 * cell.diameter;
            let mut covered = 0.0;
            for &f in &cell.faces {
                let face = &self.faces[f];
                let (a, b) = self.face_endpoints(f);
                let dir = if face.side_of(k) == Some(0) { b - a } else { a - b };
                let on_edge = (0..n).any(|i| {
                    let (p, q) = (poly[i], poly[(i + 1) % n]);
                    geometry::point_segment_distance(&a, &p, &q) <= tol
                        && geometry::point_segment_distance(&b, &p, &q) <= tol
                        && dir.dot(&(q - p)) > 0.0
                });
                if !on_edge {
                    return Err(Error::InvalidMesh(format!(
                        "face {f} does not run along the boundary of cell {k} in loop order"
                    )));
                }
                covered += face.measure;
            }
            if (covered - perimeter).abs() > 1e-10 * perimeter {
                return Err(Error::InvalidMesh(format!(
                    "faces of cell {k} cover {covered} of perimeter {perimeter}"
                )));
            }
        }
        Ok(())
    }

    fn assign_simplices(&mut self) -> Result<()> {
        let per_cell: Vec<Vec<FlatSimplex>> = (0..self.cells.len())
            .into_par_iter()
            .map(|k| {
                let cell = &self.cells[k];
                let poly = self.polygon(k);
                let segs: Vec<(Point, Point)> = cell
                    .faces
                    .iter()
                    .map(|&f| {
                        let (a, b) = self.face_endpoints(f);
                        if self.faces[f].side_of(k) == Some(0) {
                            (a, b)
                        } else {
                            (b, a)
                        }
                    })
                    .collect();
                assign_face_simplices(&poly, &segs, cell.centroid, cell.incenter).map_err(|i| {
                    Error::ZeroHeightSimplex {
                        cell: k,
                        face: cell.faces[i],
                    }
                })
            })
            .collect::<Result<_>>()?;
        for (k, simplices) in per_cell.into_iter().enumerate() {
            for (&f, s) in self.cells[k].faces.iter().zip(simplices) {
                let side = self.faces[f].side_of(k).expect("adjacent");
                self.faces[f].simplices[side] = Some(s);
            }
        }
        Ok(())
    }
}

fn build_cell(k: usize, vertices: &[Point], lp: Vec<usize>) -> Result<Cell> {
    let poly: Vec<Point> = lp.iter().map(|&v| vertices[v]).collect();
    let tris = triangulate::ear_clip(&poly).map_err(|e| Error::Triangulation {
        cell: k,
        remaining: e.remaining,
    })?;
    let triangles = tris
        .iter()
        .map(|t| [poly[t[0]], poly[t[1]], poly[t[2]]])
        .collect();
    let (incenter, inradius) = geometry::inscribed_circle(&poly);
    Ok(Cell {
        area: geometry::signed_area(&poly),
        diameter: geometry::diameter(&poly),
        inradius,
        centroid: geometry::polygon_centroid(&poly),
        incenter,
        bbox: geometry::bounding_box(&poly),
        triangles,
        faces: Vec::new(),
        vertices: lp,
    })
}

fn orient_loops(vertices: &[Point], loops: Vec<Vec<usize>>) -> Result<Vec<Vec<usize>>> {
    loops
        .into_iter()
        .enumerate()
        .map(|(k, mut lp)| {
            if lp.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("cell {k} references a missing vertex")));
            }
            let poly: Vec<Point> = lp.iter().map(|&v| vertices[v]).collect();
            if geometry::signed_area(&poly) < 0.0 {
                lp.reverse();
            }
            Ok(lp)
        })
        .collect()
}

/// Uniform bucket grid over points for segment proximity queries.
struct PointGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointGrid {
    fn new(points: &[Point], ids: &[usize], cell: f64) -> Self {
        let sel: Vec<Point> = ids.iter().map(|&i| points[i]).collect();
        let (lo, hi) = geometry::bounding_box(&sel);
        let cell = cell.max(1e-300);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).min(1 << 12);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).min(1 << 12);
        let cell = ((hi.x - lo.x) / nx as f64).max((hi.y - lo.y) / ny as f64).max(cell);
        let mut grid = PointGrid {
            origin: lo,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for &i in ids {
            let (bx, by) = grid.bucket(&points[i]);
            grid.buckets[by * nx + bx].push(i);
        }
        grid
    }

    fn bucket(&self, p: &Point) -> (usize, usize) {
        let bx = ((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize;
        let by = ((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize;
        (bx.min(self.nx - 1), by.min(self.ny - 1))
    }

    fn near_segment(&self, a: &Point, b: &Point, pad: f64) -> impl Iterator<Item = usize> + '_ {
        let lo = Point::new(a.x.min(b.x) - pad, a.y.min(b.y) - pad);
        let hi = Point::new(a.x.max(b.x) + pad, a.y.max(b.y) + pad);
        let (x0, y0) = self.bucket(&lo);
        let (x1, y1) = self.bucket(&hi);
        (y0..=y1).flat_map(move |by| {
            (x0..=x1).flat_map(move |bx| self.buckets[by * self.nx + bx].iter().copied())
        })
    }
}

fn derive_faces(vertices: &[Point], loops: &[Vec<usize>]) -> Result<Vec<FaceRecord>> {
    let mut used: Vec<usize> = loops.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let n_edges: usize = loops.iter().map(Vec::len).sum();
    let total_len: f64 = loops
        .iter()
        .flat_map(|lp| {
            (0..lp.len()).map(move |i| (vertices[lp[(i + 1) % lp.len()]] - vertices[lp[i]]).norm())
        })
        .sum();
    let mean_len = total_len / n_edges.max(1) as f64;
    let grid = PointGrid::new(vertices, &used, mean_len);

    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pending: Vec<(usize, usize, usize, Option<usize>)> = Vec::new();
    for (k, lp) in loops.iter().enumerate() {
        let n = lp.len();
        for i in 0..n {
            let (ia, ib) = (lp[i], lp[(i + 1) % n]);
            let (a, b) = (vertices[ia], vertices[ib]);
            let e = b - a;
            let len2 = e.norm_squared();
            let tol = 1e-10 * len2.sqrt();
            // vertices of other cells sitting inside this edge
            let mut splits: Vec<(f64, usize)> = grid
                .near_segment(&a, &b, tol)
                .filter(|&v| v != ia && v != ib)
                .filter_map(|v| {
                    let p = vertices[v];
                    let t = (p - a).dot(&e) / len2;
                    (t > 1e-12 && t < 1.0 - 1e-12 && geometry::cross(&e, &(p - a)).abs() <= tol * len2.sqrt())
                        .then_some((t, v))
                })
                .collect();
            splits.sort_by(|x, y| x.0.total_cmp(&y.0));
            let chain: Vec<usize> = std::iter::once(ia)
                .chain(splits.into_iter().map(|(_, v)| v))
                .chain(std::iter::once(ib))
                .collect();
            for w in chain.windows(2) {
                let (u, v) = (w[0], w[1]);
                let key = (u.min(v), u.max(v));
                match index.get(&key) {
                    None => {
                        index.insert(key, pending.len());
                        pending.push((u, v, k, None));
                    }
                    Some(&slot) => {
                        let entry = &mut pending[slot];
                        if entry.3.is_some() || entry.0 != v || entry.2 == k {
                            return Err(Error::InvalidMesh(format!(
                                "edge ({u}, {v}) is shared inconsistently (cells {} and {k})",
                                entry.2
                            )));
                        }
                        entry.3 = Some(k);
                    }
                }
            }
        }
    }
    Ok(pending
        .into_iter()
        .map(|(u, v, left, right)| FaceRecord {
            vertices: [u, v],
            left,
            right,
            tag: if right.is_some() {
                FaceTag::Interior
            } else {
                FaceTag::Dirichlet
            },
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn unit_square_mesh() -> PolyMesh {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        PolyMesh::from_cells(v, vec![vec![0, 1, 2, 3]]).unwrap()
    }

    /// Two unit squares side by side: [0,1]x[0,1] and [1,2]x[0,1].
    pub fn two_squares() -> PolyMesh {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 1.0),
        ];
        PolyMesh::from_cells(v, vec![vec![0, 1, 4, 3], vec![1, 2, 5, 4]]).unwrap()
    }

    #[test]
    fn single_square_has_four_boundary_faces() {
        let m = unit_square_mesh();
        assert_eq!(m.n_faces(), 4);
        assert!(m.faces().iter().all(|f| f.tag == FaceTag::Dirichlet));
        let c = m.cell(0);
        assert!((c.area - 1.0).abs() < 1e-15);
        assert!((c.inradius - 0.5).abs() < 1e-14);
        assert_eq!(c.triangles.len(), 2);
    }

    #[test]
    fn shared_face_normals_are_antiparallel() {
        let m = two_squares();
        assert_eq!(m.n_faces(), 7);
        let shared: Vec<_> = m.faces().iter().filter(|f| !f.is_boundary()).collect();
        assert_eq!(shared.len(), 1);
        let f = shared[0];
        let n0 = f.normal_for(0);
        let n1 = f.normal_for(1);
        assert!((n0 + n1).norm() < 1e-15);
        assert!((n0 - Vector::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hanging_node_splits_the_long_edge() {
        // big cell [0,2]x[0,1] below two unit squares on top
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 2.0),
            Point::new(1.0, 2.0),
            Point::new(2.0, 2.0),
        ];
        let loops = vec![vec![0, 1, 2, 4], vec![4, 3, 6, 5], vec![3, 2, 7, 6]];
        let m = PolyMesh::from_cells(v, loops).unwrap();
        // bottom cell: bottom, right, and the top edge split in two + left
        assert_eq!(m.cell(0).faces.len(), 5);
        assert_eq!(m.cell(0).vertices.len(), 4);
        let interior = m.faces().iter().filter(|f| !f.is_boundary()).count();
        assert_eq!(interior, 3);
    }

    #[test]
    fn clockwise_loops_are_reoriented() {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ];
        let m = PolyMesh::from_cells(v, vec![vec![0, 1, 2, 3]]).unwrap();
        assert!(m.cell(0).area > 0.0);
        assert_eq!(m.cell(0).vertices, vec![3, 2, 1, 0]);
    }

    #[test]
    fn self_intersecting_cell_is_named() {
        // bow-tie with unequal lobes
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        match PolyMesh::from_cells(v, vec![vec![0, 1, 2, 3]]) {
            Err(Error::SelfIntersecting { cell: 0, .. }) => {}
            other => panic!("expected self-intersection error, got {other:?}"),
        }
    }
}
