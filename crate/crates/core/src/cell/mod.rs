//! Periodic cell problems for the effective diffusion and permeability tensors.

mod diffusion;
mod permeability;

pub use diffusion::{solve_diffusion_cell, DiffusionCell};
pub use permeability::{solve_permeability_cell, PermeabilityCell};

use crate::error::Result;
use crate::mesh::Field;
use crate::phasefield::{porosity, ChemistryParams};

pub type Mat2 = [[f64; 2]; 2];

/// Drag coefficient g(phi, lambda) = 10 K (1 - phi) / (lambda (phi + 10)) with K = 25.
pub fn drag(phi: f64, lambda: f64) -> f64 {
    const K: f64 = 25.0;
    10.0 * K * (1.0 - phi) / (lambda * (phi + 10.0))
}

/// Porosity and effective tensors of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveTensors {
    pub porosity: f64,
    pub a: Mat2,
    /// `None` when the permeability solve was skipped.
    pub k: Option<Mat2>,
}

/// Porosity, diffusion tensor and (optionally) permeability of the phase field.
pub fn effective_update(
    phi: &Field,
    params: &ChemistryParams,
    mu_f: f64,
    with_permeability: bool,
) -> Result<EffectiveTensors> {
    let a = solve_diffusion_cell(phi, params.delta)?.a;
    let k = if with_permeability {
        Some(solve_permeability_cell(phi, params.delta, mu_f, params.lambda)?.k)
    } else {
        None
    };
    Ok(EffectiveTensors {
        porosity: porosity(phi),
        a,
        k,
    })
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigs(a: &Mat2) -> [f64; 2] {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let d = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[1][0]).max(0.0).sqrt();
    [m - d, m + d]
}

pub(crate) fn inv3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    Some(inv)
}

pub(crate) fn mat3_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};

    use super::permeability::assemble;
    use super::*;
    use crate::mesh::{bary_mid, Family, TriMesh};
    use crate::phasefield::{InitialShape, Profile};

    const DELTA: f64 = 1e-4;
    const LAMBDA: f64 = 0.08;

    fn cell(n: usize) -> Arc<TriMesh> {
        TriMesh::unit_cell(n).unwrap().into_arc()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn drag_values() {
        assert_eq!(drag(1.0, LAMBDA), 0.0);
        assert!((drag(0.0, LAMBDA) - 312.5).abs() < 1e-12);
        assert!((drag(0.5, LAMBDA) - 148.80952380952382).abs() < 1e-10);
        let mut last = f64::INFINITY;
        for i in 0..=20 {
            let g = drag(i as f64 / 20.0, LAMBDA);
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn inverse_3x3() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let i = inv3(&m).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| m[r][k] * i[k][c]).sum();
                assert!((v - if r == c { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fluid_cell_gives_scaled_identity() {
        let m = cell(6);
        let d = solve_diffusion_cell(&Field::constant(m, Family::P1, 1.0), DELTA).unwrap();
        assert!((d.a[0][0] - (1.0 + DELTA)).abs() < 1e-12);
        assert!((d.a[1][1] - (1.0 + DELTA)).abs() < 1e-12);
        assert!(d.a[0][1].abs() < 1e-12);
        assert!(d.omega.iter().flatten().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn mineral_cell_tensors() {
        let m = cell(6);
        let phi = Field::constant(m, Family::P1, 0.0);
        let d = solve_diffusion_cell(&phi, DELTA).unwrap();
        assert!(rel(d.a[0][0], DELTA) < 1e-9 && rel(d.a[1][1], DELTA) < 1e-9);
        let k = solve_permeability_cell(&phi, DELTA, 1.0, LAMBDA).unwrap();
        let expect = DELTA * DELTA / drag(0.0, LAMBDA);
        assert!((expect - 3.2e-11).abs() < 1e-20);
        assert!(rel(k.k[0][0], expect) < 1e-6 && rel(k.k[1][1], expect) < 1e-6);
        assert!(k.k[0][1].abs() < 1e-6 * expect);
    }

    #[test]
    fn fluid_cell_permeability_is_rejected() {
        let phi = Field::constant(cell(4), Family::P1, 1.0);
        assert!(solve_permeability_cell(&phi, DELTA, 1.0, LAMBDA).is_err());
    }

    fn laminate(n: usize, a: f64, b: f64) -> Field {
        let m = cell(n);
        let vals = (0..m.n_elems())
            .map(|t| if m.centroid(t)[0] < 0.0 { a } else { b } - DELTA)
            .collect();
        Field::new(m, Family::P0, vals).unwrap()
    }

    #[test]
    fn laminate_means() {
        let (a, b) = (DELTA, 1.0 + DELTA);
        for n in [4, 10, 30] {
            let d = solve_diffusion_cell(&laminate(n, a, b), DELTA).unwrap();
            assert!(rel(d.a[0][0], 2.0 * a * b / (a + b)) < 1e-8, "{:?}", d.a);
            assert!(rel(d.a[1][1], 0.5 * (a + b)) < 1e-8);
            assert!(d.a[0][1].abs() < 1e-10);
        }
    }

    fn circle_phase(n: usize) -> Field {
        InitialShape::Circle { porosity: 0.5 }.field(cell(n), Profile::Diffuse, LAMBDA)
    }

    #[test]
    fn circle_is_isotropic() {
        let phi = circle_phase(24);
        let t = effective_update(&phi, &ChemistryParams::default(), 1.0, true).unwrap();
        let k = t.k.unwrap();
        assert!(rel(t.a[1][1], t.a[0][0]) < 1e-3, "{:?}", t.a);
        assert!(t.a[0][1].abs() < 1e-3 * t.a[0][0]);
        assert!(rel(k[1][1], k[0][0]) < 1e-3, "{k:?}");
        assert!(k[0][1].abs() < 1e-3 * k[0][0] && k[1][0].abs() < 1e-3 * k[0][0]);
        let e = sym_eigs(&t.a);
        assert!(e[0] >= DELTA * (1.0 - 1e-6));
        let voigt = phi.integral() + DELTA;
        assert!(e[1] <= voigt);
    }

    #[test]
    fn rectangles_are_anisotropic() {
        let p = ChemistryParams::default();
        let wide = InitialShape::Rect {
            x0: -0.4,
            x1: 0.4,
            y0: -0.3,
            y1: 0.3,
        };
        let tall = InitialShape::Rect {
            x0: -0.3,
            x1: 0.3,
            y0: -0.4,
            y1: 0.4,
        };
        let kl = effective_update(&wide.field(cell(20), Profile::Sharp, LAMBDA), &p, 1.0, true)
            .unwrap()
            .k
            .unwrap();
        let kr = effective_update(&tall.field(cell(20), Profile::Sharp, LAMBDA), &p, 1.0, true)
            .unwrap()
            .k
            .unwrap();
        assert!(kl[0][0] > 1.5 * kl[1][1], "{kl:?}");
        assert!(kr[1][1] > 1.5 * kr[0][0], "{kr:?}");
        assert!(kl[0][1].abs() < 1e-6 * kl[0][0]);
        assert!(rel(kl[0][0], kr[1][1]) < 1e-6 && rel(kl[1][1], kr[0][0]) < 1e-6);
    }

    #[test]
    fn zero_mean_constraints() {
        let phi = circle_phase(12);
        let d = solve_diffusion_cell(&phi, DELTA).unwrap();
        let k = solve_permeability_cell(&phi, DELTA, 1.0, LAMBDA).unwrap();
        let m = &phi.mesh;
        for s in 0..2 {
            let om: f64 = (0..m.n_elems()).map(|t| d.omega[s][t] * m.areas[t]).sum();
            let pi: f64 = (0..m.n_elems()).map(|t| k.pi[s][t] * m.areas[t]).sum();
            assert!(om.abs() <= 1e-10 && pi.abs() <= 1e-10, "{om} {pi}");
        }
    }

    #[test]
    fn diffusion_matches_dense_mixed_oracle() {
        let phi = circle_phase(6);
        let m = &phi.mesh;
        let (ne, nt) = (m.n_edges(), m.n_elems());
        let n = ne + nt + 1;
        let hyb = solve_diffusion_cell(&phi, DELTA).unwrap();
        for s in 0..2 {
            let mut a = DMatrix::<f64>::zeros(n, n);
            let mut f = DVector::<f64>::zeros(n);
            let mut mom = vec![[[0.0; 2]; 3]; nt];
            for t in 0..nt {
                let p = m.points(t);
                let area = m.areas[t];
                let c = m.centroid(t);
                let sg = m.elem_signs[t];
                let ee = m.elem_edges[t];
                for k in 0..3 {
                    mom[t][k] = [0.5 * (c[0] - p[k][0]), 0.5 * (c[1] - p[k][1])];
                }
                for q in 0..3 {
                    let l = bary_mid(q);
                    let x = [
                        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
                    ];
                    let w = area / 3.0 / (phi.eval(t, l) + DELTA);
                    for k in 0..3 {
                        for j in 0..3 {
                            let tk = [(x[0] - p[k][0]) / (2.0 * area), (x[1] - p[k][1]) / (2.0 * area)];
                            let tj = [(x[0] - p[j][0]) / (2.0 * area), (x[1] - p[j][1]) / (2.0 * area)];
                            a[(ee[k], ee[j])] += w * sg[k] * sg[j] * (tk[0] * tj[0] + tk[1] * tj[1]);
                        }
                    }
                }
                for k in 0..3 {
                    a[(ee[k], ne + t)] += sg[k];
                    a[(ne + t, ee[k])] += sg[k];
                    f[ee[k]] += sg[k] * mom[t][k][s];
                }
                a[(ne + t, n - 1)] = area;
                a[(n - 1, ne + t)] = area;
            }
            let x = a.lu().solve(&f).unwrap();
            let mut col = [0.0; 2];
            for t in 0..nt {
                for k in 0..3 {
                    let sk = m.elem_signs[t][k] * x[m.elem_edges[t][k]];
                    col[0] += sk * mom[t][k][0];
                    col[1] += sk * mom[t][k][1];
                }
            }
            assert!((col[s] - hyb.a[s][s]).abs() < 1e-10 * hyb.a[s][s].abs().max(1.0));
            let o = 1 - s;
            assert!((col[o] - hyb.a[o][s]).abs() < 1e-10);
            for t in 0..nt {
                assert!((x[ne + t] - hyb.omega[s][t]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn permeability_matches_dense_saddle_oracle() {
        let phi = circle_phase(6);
        let m = &phi.mesh;
        let sd = assemble(&phi, DELTA, 1.0, LAMBDA).unwrap();
        let nv = 2 * m.n_edges();
        let nt = m.n_elems();
        let n = nv + nt + 1;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let dense_a = {
            let mut d = DMatrix::<f64>::zeros(nv, nv);
            for j in 0..nv {
                let mut e = vec![0.0; nv];
                e[j] = 1.0;
                let col = sd.a.apply(&e);
                for i in 0..nv {
                    d[(i, j)] = col[i];
                }
            }
            d
        };
        a.view_mut((0, 0), (nv, nv)).copy_from(&dense_a);
        for (t, row) in sd.b.iter().enumerate() {
            for &(i, c) in row {
                a[(i, nv + t)] += c;
                a[(nv + t, i)] += c;
            }
            a[(nv + t, n - 1)] = m.areas[t];
            a[(n - 1, nv + t)] = m.areas[t];
        }
        let lu = a.lu();
        let it = solve_permeability_cell(&phi, DELTA, 1.0, LAMBDA).unwrap();
        for s in 0..2 {
            let mut f = DVector::<f64>::zeros(n);
            for i in 0..nv {
                f[i] = sd.f[s][i];
            }
            let x = lu.solve(&f).unwrap();
            for c in 0..2 {
                let kd: f64 = (0..nt)
                    .map(|t| m.areas[t] / 3.0 * m.elem_edges[t].iter().map(|&e| x[2 * e + c]).sum::<f64>())
                    .sum();
                let scale = it.k[s][s].abs();
                assert!((kd - it.k[c][s]).abs() < 1e-7 * scale, "{kd} {:?}", it.k);
            }
            for t in 0..nt {
                let scale = it.pi[s].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!((x[nv + t] - it.pi[s][t]).abs() < 1e-6 * scale.max(1e-12));
            }
        }
    }

    #[test]
    fn diffusion_is_lipschitz_in_phi() {
        let base = circle_phase(16);
        let a0 = solve_diffusion_cell(&base, DELTA).unwrap().a;
        let bump = |eps: f64| {
            let mut f = base.clone();
            for (i, v) in f.values.iter_mut().enumerate() {
                // vanishes at 0 and 1, so the perturbed field stays in bounds
                *v += eps * 4.0 * *v * (1.0 - *v) * (((i * 7919) % 13) as f64 / 6.0 - 1.0);
            }
            f
        };
        let mut ratios: Vec<f64> = Vec::new();
        for eps in [1e-2, 5e-3, 2.5e-3] {
            let f = bump(eps);
            let a1 = solve_diffusion_cell(&f, DELTA).unwrap().a;
            let da = ((a1[0][0] - a0[0][0]).powi(2) + (a1[1][1] - a0[1][1]).powi(2) + 2.0 * (a1[0][1] - a0[0][1]).powi(2)).sqrt();
            let dphi = crate::phasefield::l2_diff(&base.mesh, &f.values, &base.values);
            let r = da / dphi;
            if let Some(&prev) = ratios.last() {
                assert!(r <= 1.5 * prev, "{r} vs {prev}");
            }
            ratios.push(r);
        }
        let c = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(c.is_finite() && c < 10.0, "{ratios:?}");
    }
}
