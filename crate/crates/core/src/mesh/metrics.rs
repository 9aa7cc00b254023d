use super::PolyMesh;
use serde::{Deserialize, Serialize};

/// Observed mesh regularity constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshMetrics {
    /// Largest number of faces of any cell.
    pub c_f: usize,
    /// Largest ratio of diameter to inradius.
    pub c_r: f64,
    /// Largest `h / height` over all face simplices.
    pub c_s: f64,
    /// Largest ratio of `(p+1)(p+d)/h` across a shared face.
    pub theta: f64,
}

/// `max_F h_κ |F| / (d |κ_F|)` over the faces of one cell, which in 2D is
/// `h_κ` over the smallest assigned simplex height.
pub fn cell_shape_constant(mesh: &PolyMesh, cell: usize) -> f64 {
    let c = mesh.cell(cell);
    c.faces
        .iter()
        .map(|&f| c.diameter / mesh.face(f).simplex_for(cell).height)
        .fold(0.0, f64::max)
}

pub fn compute_metrics(mesh: &PolyMesh, degrees: &[usize]) -> MeshMetrics {
    assert_eq!(degrees.len(), mesh.n_cells(), "one degree per cell");
    let d = mesh.dimension() as f64;
    let c_f = mesh.cells().iter().map(|c| c.faces.len()).max().unwrap_or(0);
    let c_r = mesh
        .cells()
        .iter()
        .map(|c| c.diameter / c.inradius)
        .fold(0.0, f64::max);
    let c_s = (0..mesh.n_cells())
        .map(|k| cell_shape_constant(mesh, k))
        .fold(0.0, f64::max);
    let q = |k: usize| {
        let p = degrees[k] as f64;
        (p + 1.0) * (p + d) / mesh.cell(k).diameter
    };
    let theta = mesh
        .faces()
        .iter()
        .filter_map(|f| f.right.map(|r| (f.left, r)))
        .map(|(l, r)| {
            let ratio = q(l) / q(r);
            ratio.max(1.0 / ratio)
        })
        .fold(1.0, f64::max);
    MeshMetrics {
        c_f,
        c_r,
        c_s,
        theta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::mesh::tests::{two_squares, unit_square_mesh};

    #[test]
    fn unit_square_constants() {
        let m = unit_square_mesh();
        let mm = compute_metrics(&m, &[2]);
        assert_eq!(mm.c_f, 4);
        // h = sqrt 2, optimal height 1/2
        assert!((mm.c_s - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((mm.c_r - 2f64.sqrt() / 0.5).abs() < 1e-12);
    }

    #[test]
    fn equilateral_ratio_is_two_root_three() {
        let s = 1.7;
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(s, 0.0),
            Point::new(0.5 * s, 0.5 * 3f64.sqrt() * s),
        ];
        let m = PolyMesh::from_cells(v, vec![vec![0, 1, 2]]).unwrap();
        let mm = compute_metrics(&m, &[2]);
        assert_eq!(mm.c_f, 3);
        // inradius s/(2 sqrt 3), diameter s
        let oracle = s / (s / (2.0 * 3f64.sqrt()));
        assert!((mm.c_r - oracle).abs() < 1e-12);
        assert!((mm.c_r - 2.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_has_unit_theta() {
        let m = two_squares();
        assert_eq!(compute_metrics(&m, &[3, 3]).theta, 1.0);
        let mm = compute_metrics(&m, &[2, 3]);
        assert!((mm.theta - 20.0 / 12.0).abs() < 1e-14);
    }
}
