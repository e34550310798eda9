//! Interface-tracking refinement of the micro meshes: prediction on the old
//! mesh, projection onto the union with the predicted mesh, correction there.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{interpolate, union, Field, TriMesh};
use crate::phasefield::{solve_phasefield, ChemistryParams, MicroStats, SolverKnobs};

/// Refinement depth cap (bisection rounds).
const MAX_DEPTH: usize = 24;

/// Which coarse elements count as part of the transition zone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MarkRule {
    /// The cell mean of the field lies in the band.
    #[default]
    Mean,
    /// The field takes some value of the band inside the cell.
    Range,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroAdaptConfig {
    pub theta_r: f64,
    /// Target size inside the band, measured by the shortest element edge.
    pub h_min: f64,
    pub rule: MarkRule,
}

impl MicroAdaptConfig {
    /// Band `[theta_r lambda, 1 - theta_r lambda]` of phase-field values to resolve.
    pub fn band(&self, lambda: f64) -> (f64, f64) {
        (self.theta_r * lambda, 1.0 - self.theta_r * lambda)
    }

    pub fn violations(&self, lambda: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.theta_r > 0.0 && self.theta_r < 1.0 / (2.0 * lambda)) {
            v.push(format!("theta_r = {} must lie in (0, 1/(2 lambda))", self.theta_r));
        }
        if !(self.h_min > 0.0) {
            v.push(format!("h_min = {} must be positive", self.h_min));
        }
        v
    }
}

/// Min and max of a P1 field over every coarse element (exact for the
/// piecewise linear field).
pub fn coarse_ranges(coarse: &TriMesh, phi: &Field) -> Result<Vec<(f64, f64)>> {
    let mut r = vec![(f64::INFINITY, f64::NEG_INFINITY); coarse.n_elems()];
    let m = &phi.mesh;
    for t in 0..m.n_elems() {
        let c = coarse
            .ancestor_of(m.ids[t])
            .ok_or_else(|| Error::Genealogy("micro mesh does not refine the coarse mesh".into()))?;
        for v in phi.nodal(t) {
            r[c].0 = r[c].0.min(v);
            r[c].1 = r[c].1.max(v);
        }
    }
    Ok(r)
}

/// Cellwise means of a P1 field on the coarse mesh.
pub fn coarse_means(coarse: &TriMesh, phi: &Field) -> Result<Vec<f64>> {
    let mut s = vec![0.0; coarse.n_elems()];
    let m = &phi.mesh;
    for t in 0..m.n_elems() {
        let c = coarse
            .ancestor_of(m.ids[t])
            .ok_or_else(|| Error::Genealogy("micro mesh does not refine the coarse mesh".into()))?;
        s[c] += phi.elem_mean(t) * m.areas[t];
    }
    for (c, v) in s.iter_mut().enumerate() {
        *v /= coarse.areas[c];
    }
    Ok(s)
}

/// Coarse elements in the transition zone of `phi`.
pub fn mark_band(coarse: &TriMesh, phi: &Field, band: (f64, f64), rule: MarkRule) -> Result<Vec<usize>> {
    let hit: Vec<bool> = match rule {
        MarkRule::Mean => coarse_means(coarse, phi)?
            .iter()
            .map(|&m| band.0 <= m && m <= band.1)
            .collect(),
        MarkRule::Range => coarse_ranges(coarse, phi)?
            .iter()
            .map(|&(lo, hi)| hi >= band.0 && lo <= band.1)
            .collect(),
    };
    Ok((0..hit.len()).filter(|&c| hit[c]).collect())
}

/// Bisects descendants of the marked coarse elements until the shortest
/// edge of each is at most `h_min`.
pub fn refine_band(coarse: &TriMesh, marked: &[usize], h_min: f64) -> Result<TriMesh> {
    let mut flag = vec![false; coarse.n_elems()];
    for &c in marked {
        flag[c] = true;
    }
    let mut cur = coarse.clone();
    for _ in 0..MAX_DEPTH {
        let todo: Vec<usize> = (0..cur.n_elems())
            .filter(|&t| cur.min_edge(t) > h_min * (1.0 + 1e-12))
            .filter(|&t| coarse.ancestor_of(cur.ids[t]).is_some_and(|c| flag[c]))
            .collect();
        if todo.is_empty() {
            return Ok(cur);
        }
        cur = cur.bisect(&todo)?;
    }
    let h = (0..cur.n_elems())
        .filter(|&t| coarse.ancestor_of(cur.ids[t]).is_some_and(|c| flag[c]))
        .map(|t| cur.min_edge(t))
        .fold(0.0, f64::max);
    Err(Error::Mesh(format!(
        "refinement depth cap {MAX_DEPTH} reached with h = {h:.4e} > h_min = {h_min:.4e}"
    )))
}

/// Mesh resolving the band of `phi`, built from the coarse mesh.
pub fn adapted_mesh(coarse: &TriMesh, phi: &Field, cfg: &MicroAdaptConfig, lambda: f64) -> Result<TriMesh> {
    let marked = mark_band(coarse, phi, cfg.band(lambda), cfg.rule)?;
    refine_band(coarse, &marked, cfg.h_min)
}

/// Result of the adaptive first iteration of a time step.
#[derive(Clone, Debug)]
pub struct Adapted {
    /// Previous-time phase field transferred to the new mesh.
    pub prev: Field,
    /// New phase field on the new mesh.
    pub phi: Field,
    pub prediction: MicroStats,
    pub correction: MicroStats,
}

/// Prediction, projection and correction for one micro cell. `prev` is the
/// previous-time field on the previous mesh; the new mesh is built from
/// `coarse` and returned through the fields of the result.
pub fn micro_adapt(
    coarse: &TriMesh,
    prev: &Field,
    u: f64,
    dt: f64,
    knobs: &SolverKnobs,
    params: &ChemistryParams,
    cfg: &MicroAdaptConfig,
) -> Result<Adapted> {
    let (pred, prediction) = solve_phasefield(prev, prev, u, dt, knobs, params)?;
    let star = Arc::new(adapted_mesh(coarse, &pred, cfg, params.lambda)?);
    let joint = Arc::new(union(&prev.mesh, &star)?);
    let prev_r = interpolate(prev, &joint)?;
    let (phi_r, correction) = solve_phasefield(&prev_r, &prev_r, u, dt, knobs, params)?;
    Ok(Adapted {
        prev: interpolate(&prev_r, &star)?,
        phi: interpolate(&phi_r, &star)?,
        prediction,
        correction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Family;
    use crate::phasefield::{InitialShape, Profile};

    const CFG: MicroAdaptConfig = MicroAdaptConfig {
        theta_r: 2.0,
        h_min: 0.08 / 3.0,
        rule: MarkRule::Range,
    };

    #[test]
    fn mean_rule_marks_a_subset() {
        let coarse = TriMesh::unit_cell(10).unwrap();
        let phi = InitialShape::Circle { porosity: 0.5 }.field(Arc::new(coarse.clone()), Profile::Diffuse, 0.08);
        let band = CFG.band(0.08);
        let mean = mark_band(&coarse, &phi, band, MarkRule::Mean).unwrap();
        let range = mark_band(&coarse, &phi, band, MarkRule::Range).unwrap();
        assert!(!mean.is_empty() && mean.len() < range.len());
        assert!(mean.iter().all(|c| range.contains(c)));
        let wide = mark_band(&coarse, &phi, (0.02, 0.98), MarkRule::Mean).unwrap();
        let narrow = mark_band(&coarse, &phi, (0.4, 0.6), MarkRule::Mean).unwrap();
        assert!(narrow.len() < mean.len() && mean.len() < wide.len());
    }

    #[test]
    fn flat_field_is_not_refined() {
        let coarse = Arc::new(TriMesh::unit_cell(10).unwrap());
        let one = Field::constant(coarse.clone(), Family::P1, 1.0);
        let p = ChemistryParams::default();
        let out = micro_adapt(&coarse, &one, p.u_eq, 0.01, &SolverKnobs::default(), &p, &CFG).unwrap();
        assert_eq!(out.phi.mesh.n_elems(), 200);
        assert!(out.phi.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn band_reaches_target_diameter() {
        let coarse = TriMesh::unit_cell(10).unwrap();
        let phi = InitialShape::Circle { porosity: 0.5 }.field(Arc::new(coarse.clone()), Profile::Diffuse, 0.08);
        let m = adapted_mesh(&coarse, &phi, &CFG, 0.08).unwrap();
        // four bisections of the coarse right triangles: legs of 0.025
        let shortest = (0..m.n_elems()).map(|t| m.min_edge(t)).fold(f64::INFINITY, f64::min);
        assert!((shortest - 0.025).abs() < 1e-12, "{shortest}");
        let fine = Arc::new(m);
        let phi = InitialShape::Circle { porosity: 0.5 }.field(fine.clone(), Profile::Diffuse, 0.08);
        let (lo, hi) = CFG.band(0.08);
        for t in 0..fine.n_elems() {
            let n = phi.nodal(t);
            let (a, b) = (n.iter().cloned().fold(1.0, f64::min), n.iter().cloned().fold(0.0, f64::max));
            if b >= lo && a <= hi {
                assert!(fine.min_edge(t) <= CFG.h_min, "element {t} of size {}", fine.min_edge(t));
            }
        }
    }

    #[test]
    fn adaptive_step_tracks_the_interface() {
        let p = ChemistryParams::default();
        let coarse = TriMesh::unit_cell(10).unwrap();
        let shape = InitialShape::Circle { porosity: 0.5 };
        let m0 = Arc::new(adapted_mesh(&coarse, &shape.field(Arc::new(coarse.clone()), Profile::Diffuse, 0.08), &CFG, 0.08).unwrap());
        let mut phi = shape.field(m0, Profile::Diffuse, 0.08);
        for _ in 0..3 {
            let out = micro_adapt(&coarse, &phi, 0.0, 0.01, &SolverKnobs::default(), &p, &CFG).unwrap();
            assert!(out.phi.values.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(Arc::ptr_eq(&out.phi.mesh, &out.prev.mesh));
            // the 0.5 contour sits in refined elements
            let m = &out.phi.mesh;
            for t in 0..m.n_elems() {
                let n = out.phi.nodal(t);
                let crosses = n.iter().any(|&v| v <= 0.5) && n.iter().any(|&v| v >= 0.5);
                if crosses {
                    assert!(m.min_edge(t) <= CFG.h_min);
                }
            }
            assert!(out.phi.integral() > phi.integral());
            phi = out.phi;
        }
    }

    #[test]
    fn coarse_means_of_constant() {
        let coarse = TriMesh::unit_cell(4).unwrap();
        let fine = Arc::new(coarse.refine_marked(&[0, 3, 7]).unwrap());
        let f = Field::constant(fine, Family::P1, 0.3);
        assert!(coarse_means(&coarse, &f).unwrap().iter().all(|v| (v - 0.3).abs() < 1e-14));
    }
}
