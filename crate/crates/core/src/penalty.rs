//! Face penalty functions for the two stability regimes.

use crate::error::{Error, Result};
use crate::mesh::PolyMesh;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Cells with a bounded number of faces; penalties built from the trace
    /// inverse constant of the assigned face simplices.
    Bounded,
    /// Any number of faces per cell; penalties from `(p+1)(p+d)/h`.
    Arbitrary,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounded" => Ok(Regime::Bounded),
            "arbitrary" => Ok(Regime::Arbitrary),
            _ => Err(Error::Config(format!("unknown penalty regime `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyParams {
    pub regime: Regime,
    pub c_sigma: f64,
    pub c_tau: f64,
    pub c_inv1: f64,
    pub c_inv2: f64,
    /// Take the sharper `p^{2(d-1)}` branch of the inverse constant.
    pub p_coverable: bool,
    /// Allow the arbitrary-face regime outside `p in {2, 3}`.
    pub allow_any_degree: bool,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            regime: Regime::Bounded,
            c_sigma: 10.0,
            c_tau: 10.0,
            c_inv1: 1.0,
            c_inv2: 1.0,
            p_coverable: true,
            allow_any_degree: false,
        }
    }
}

impl PenaltyParams {
    pub fn with_regime(regime: Regime) -> Self {
        PenaltyParams {
            regime,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PenaltyField {
    pub regime: Regime,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub c_sigma: f64,
    pub c_tau: f64,
    pub c_inv1: f64,
    pub c_inv2: f64,
    pub p_coverable: Vec<bool>,
}

impl PenaltyField {
    /// `(sigma, tau)` on face `f`.
    pub fn on_face(&self, f: usize) -> Result<(f64, f64)> {
        match (self.sigma.get(f), self.tau.get(f)) {
            (Some(&s), Some(&t)) => Ok((s, t)),
            _ => Err(Error::MissingPenalty(f)),
        }
    }

    /// Same field with both penalties multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.sigma.iter_mut().for_each(|s| *s *= factor);
        out.tau.iter_mut().for_each(|t| *t *= factor);
        out
    }
}

/// Inverse-inequality constant of `cell` for face `face`:
/// `C_inv1 * min(|κ|/|κ_F|, p^{2(d-1)})` when the cell is p-coverable and
/// `C_inv1 * |κ|/|κ_F|` otherwise, with `κ_F` the assigned face simplex.
pub fn inverse_constant(mesh: &PolyMesh, cell: usize, face: usize, p: usize, c_inv1: f64, coverable: bool) -> f64 {
    let c = mesh.cell(cell);
    let f = mesh.face(face);
    let simplex_area = 0.5 * f.simplex_for(cell).height * f.measure;
    let ratio = c.area / simplex_area;
    let d = mesh.dimension() as i32;
    if coverable {
        c_inv1 * ratio.min((p as f64).powi(2 * (d - 1)))
    } else {
        c_inv1 * ratio
    }
}

pub fn penalties_bounded(mesh: &PolyMesh, degrees: &[usize], params: &PenaltyParams) -> PenaltyField {
    assert_eq!(degrees.len(), mesh.n_cells());
    let coverable = vec![params.p_coverable; mesh.n_cells()];
    let (sigma, tau) = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let (mut s, mut t) = (0.0f64, 0.0f64);
            for k in f.cells() {
                let c = mesh.cell(k);
                let p = degrees[k] as f64;
                let cinv = inverse_constant(mesh, k, fi, degrees[k], params.c_inv1, coverable[k]);
                let trace = cinv * p * p * f.measure / c.area;
                let h1 = params.c_inv2 * p.powi(4) / (c.diameter * c.diameter);
                s = s.max(trace * h1);
                t = t.max(trace);
            }
            (params.c_sigma * s, params.c_tau * t)
        })
        .unzip();
    PenaltyField {
        regime: Regime::Bounded,
        sigma,
        tau,
        c_sigma: params.c_sigma,
        c_tau: params.c_tau,
        c_inv1: params.c_inv1,
        c_inv2: params.c_inv2,
        p_coverable: coverable,
    }
}

pub fn penalties_arbitrary(mesh: &PolyMesh, degrees: &[usize], params: &PenaltyParams) -> Result<PenaltyField> {
    assert_eq!(degrees.len(), mesh.n_cells());
    if !params.allow_any_degree {
        if let Some((cell, &degree)) = degrees.iter().enumerate().find(|(_, &p)| !(2..=3).contains(&p)) {
            return Err(Error::UnsupportedDegree { cell, degree });
        }
    }
    let d = mesh.dimension() as f64;
    let q = |k: usize| {
        let p = degrees[k] as f64;
        (p + 1.0) * (p + d) / mesh.cell(k).diameter
    };
    let (sigma, tau) = mesh
        .faces()
        .iter()
        .map(|f| {
            let n = f.cells().count() as f64;
            let s: f64 = f.cells().map(|k| q(k).powi(3)).sum::<f64>() / n;
            let t: f64 = f.cells().map(q).sum::<f64>() / n;
            (params.c_sigma * s, params.c_tau * t)
        })
        .unzip();
    Ok(PenaltyField {
        regime: Regime::Arbitrary,
        sigma,
        tau,
        c_sigma: params.c_sigma,
        c_tau: params.c_tau,
        c_inv1: params.c_inv1,
        c_inv2: params.c_inv2,
        p_coverable: vec![params.p_coverable; mesh.n_cells()],
    })
}

pub fn compute_penalties(mesh: &PolyMesh, degrees: &[usize], params: &PenaltyParams) -> Result<PenaltyField> {
    match params.regime {
        Regime::Bounded => Ok(penalties_bounded(mesh, degrees, params)),
        Regime::Arbitrary => penalties_arbitrary(mesh, degrees, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::{two_squares, unit_square_mesh};

    fn unit_consts(regime: Regime) -> PenaltyParams {
        PenaltyParams {
            regime,
            c_sigma: 1.0,
            c_tau: 1.0,
            ..PenaltyParams::default()
        }
    }

    #[test]
    fn bounded_unit_square_hand_values() {
        // C_INV = min(1 / 0.25, 2^2) = 4; trace factor 4*4*1/1 = 16;
        // sigma = 16 * 16 / 2 = 128, tau = 16
        let m = unit_square_mesh();
        let pf = penalties_bounded(&m, &[2], &unit_consts(Regime::Bounded));
        for f in 0..4 {
            assert!((pf.sigma[f] - 128.0).abs() < 1e-12);
            assert!((pf.tau[f] - 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arbitrary_hand_values() {
        // h = 1: a square of side 1/sqrt 2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = unit_square_mesh().scaled(s).unwrap();
        let pf = penalties_arbitrary(&m, &[2], &unit_consts(Regime::Arbitrary)).unwrap();
        assert!((pf.sigma[0] - 1728.0).abs() < 1e-9);
        assert!((pf.tau[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn arbitrary_rejects_high_degree() {
        let m = unit_square_mesh();
        let err = penalties_arbitrary(&m, &[4], &PenaltyParams::with_regime(Regime::Arbitrary));
        assert!(matches!(err, Err(Error::UnsupportedDegree { cell: 0, degree: 4 })));
        let mut p = PenaltyParams::with_regime(Regime::Arbitrary);
        p.allow_any_degree = true;
        assert!(penalties_arbitrary(&m, &[4], &p).is_ok());
    }

    #[test]
    fn scaling_exponents() {
        let m = unit_square_mesh();
        for regime in [Regime::Bounded, Regime::Arbitrary] {
            let base = compute_penalties(&m, &[3], &PenaltyParams::with_regime(regime)).unwrap();
            for s in [0.5, 3.0] {
                let ms = m.scaled(s).unwrap();
                let pf = compute_penalties(&ms, &[3], &PenaltyParams::with_regime(regime)).unwrap();
                assert!((pf.tau[0] / base.tau[0] - 1.0 / s).abs() < 1e-12);
                assert!((pf.sigma[0] / base.sigma[0] - s.powi(-3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn congruent_neighbours_match_single_cell() {
        let m = two_squares();
        let one = unit_square_mesh();
        let pf = penalties_bounded(&m, &[2, 2], &PenaltyParams::default());
        let p1 = penalties_bounded(&one, &[2], &PenaltyParams::default());
        let shared = m.faces().iter().position(|f| !f.is_boundary()).unwrap();
        assert!((pf.sigma[shared] - p1.sigma[0]).abs() < 1e-12 * p1.sigma[0]);
    }
}
