//! Permeability cell problem: Stokes-Brinkman on the periodic cell with
//! nonconforming linear velocity and cellwise pressure.
//!
//! The unknown is `W = phi_delta w`, which turns the viscous term into a plain
//! vector Laplacian:
//!
//! ```text
//! mu (grad W, grad v) + (g / phi_delta^2 W, v) + (Pi, div v) = (e_s, v)
//! (div W, q) = 0,   int Pi = 0,   K_rs = int W^s_r
//! ```
//!
//! The saddle point is solved by an augmented Lagrangian iteration whose
//! velocity block is SPD, so a single sparse Cholesky factor serves all
//! iterations and both load cases.

use super::{drag, Mat2};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Triplets};
use crate::mesh::{bary_mid, Field, TriMesh};

/// Penalty scale relative to the local velocity-block diagonal.
const PENALTY: f64 = 1e3;
const MAX_ITERS: usize = 200;
const DIV_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct PermeabilityCell {
    pub k: Mat2,
    /// W^s at edge midpoints: `[load case][component][edge]`.
    pub w: [[Vec<f64>; 2]; 2],
    /// Cellwise Pi^s, zero mean.
    pub pi: [Vec<f64>; 2],
    pub iters: [usize; 2],
    /// Final relative divergence residual per load case.
    pub residual: [f64; 2],
}

/// Assembled saddle-point data, shared with the dense oracle in the tests.
pub(crate) struct Saddle {
    /// Velocity block, dofs `2 e + c`.
    pub a: Triplets,
    /// Divergence rows: per element, (dof, coefficient) of int_T div.
    pub b: Vec<[(usize, f64); 6]>,
    /// Loads for e_1 and e_2.
    pub f: [Vec<f64>; 2],
    /// Diagonal of the velocity block.
    pub diag: Vec<f64>,
}

pub(crate) fn assemble(phi: &Field, delta: f64, mu_f: f64, lambda: f64) -> Result<Saddle> {
    let mesh = &*phi.mesh;
    let ne = mesh.n_edges();
    let n = 2 * ne;
    let mut a = Triplets::with_capacity(n, 18 * mesh.n_elems());
    let mut b = Vec::with_capacity(mesh.n_elems());
    let mut f = [vec![0.0; n], vec![0.0; n]];
    let mut diag = vec![0.0; n];
    let mut total_drag = 0.0;
    for t in 0..mesh.n_elems() {
        let ee = mesh.elem_edges[t];
        let area = mesh.areas[t];
        let nrm = [0, 1, 2].map(|k| mesh.scaled_normal(t, k));
        for k in 0..3 {
            for l in 0..3 {
                let v = mu_f * (nrm[k][0] * nrm[l][0] + nrm[k][1] * nrm[l][1]) / area;
                a.add(2 * ee[k], 2 * ee[l], v);
                a.add(2 * ee[k] + 1, 2 * ee[l] + 1, v);
                if k == l {
                    diag[2 * ee[k]] += v;
                    diag[2 * ee[k] + 1] += v;
                }
            }
            let ph = phi.eval(t, bary_mid(k));
            let pd = ph + delta;
            if pd <= 0.0 {
                return Err(Error::Bounds(format!("phi_delta = {pd} <= 0 in element {t}")));
            }
            let d = area / 3.0 * drag(ph, lambda) / (pd * pd);
            total_drag += d;
            a.add(2 * ee[k], 2 * ee[k], d);
            a.add(2 * ee[k] + 1, 2 * ee[k] + 1, d);
            diag[2 * ee[k]] += d;
            diag[2 * ee[k] + 1] += d;
            f[0][2 * ee[k]] += area / 3.0;
            f[1][2 * ee[k] + 1] += area / 3.0;
        }
        let mut row = [(0, 0.0); 6];
        for k in 0..3 {
            row[2 * k] = (2 * ee[k], nrm[k][0]);
            row[2 * k + 1] = (2 * ee[k] + 1, nrm[k][1]);
        }
        b.push(row);
    }
    if total_drag <= 0.0 {
        return Err(Error::Linear {
            stage: "permeability cell",
            msg: "no drag anywhere in the cell: the Stokes problem with constant forcing has no periodic solution".into(),
        });
    }
    Ok(Saddle { a, b, f, diag })
}

fn divergence(b: &[[(usize, f64); 6]], w: &[f64]) -> Vec<f64> {
    b.iter()
        .map(|row| row.iter().map(|&(i, c)| c * w[i]).sum())
        .collect()
}

/// Solves both permeability cell problems for the phase field `phi`
/// (P1 or P0).
pub fn solve_permeability_cell(phi: &Field, delta: f64, mu_f: f64, lambda: f64) -> Result<PermeabilityCell> {
    let mesh: &TriMesh = &phi.mesh;
    if !mesh.is_periodic() {
        return Err(Error::Mesh("cell problems need a periodic mesh".into()));
    }
    if mu_f <= 0.0 {
        return Err(Error::Bounds(format!("mu_f must be positive (got {mu_f})")));
    }
    let Saddle { mut a, b, f, diag } = assemble(phi, delta, mu_f, lambda)?;
    let ne = mesh.n_edges();

    // element penalty weights: local velocity-block diagonal over |e|^2
    let r: Vec<f64> = (0..mesh.n_elems())
        .map(|t| {
            let ee = mesh.elem_edges[t];
            let dmean = ee.iter().map(|&e| diag[2 * e]).sum::<f64>() / 3.0;
            let h2 = (0..3)
                .map(|k| {
                    let n = mesh.scaled_normal(t, k);
                    n[0] * n[0] + n[1] * n[1]
                })
                .sum::<f64>()
                / 3.0;
            PENALTY * dmean / h2
        })
        .collect();
    for (t, row) in b.iter().enumerate() {
        for &(i, ci) in row {
            for &(j, cj) in row {
                a.add(i, j, r[t] * ci * cj);
            }
        }
    }
    let chol = Cholesky::factor(&a, "permeability cell")?;

    let mut out_w: [[Vec<f64>; 2]; 2] = Default::default();
    let mut out_pi: [Vec<f64>; 2] = Default::default();
    let mut iters = [0; 2];
    let mut residual = [0.0; 2];
    let mut k = [[0.0; 2]; 2];
    for s in 0..2 {
        let mut p = vec![0.0; mesh.n_elems()];
        let mut w;
        let mut it = 0;
        loop {
            let mut rhs = f[s].clone();
            for (t, row) in b.iter().enumerate() {
                for &(i, c) in row {
                    rhs[i] -= c * p[t];
                }
            }
            w = chol.solve(&rhs);
            let div = divergence(&b, &w);
            let scale: f64 = b
                .iter()
                .map(|row| row.iter().map(|&(i, c)| (c * w[i]).abs()).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            let rel = dot(&div, &div).sqrt() / scale.max(f64::MIN_POSITIVE);
            it += 1;
            for t in 0..p.len() {
                p[t] += r[t] * div[t];
            }
            if rel <= DIV_TOL {
                residual[s] = rel;
                break;
            }
            if it >= MAX_ITERS || !rel.is_finite() {
                return Err(Error::NotConverged {
                    what: "permeability augmented Lagrangian",
                    iters: it,
                    last: rel,
                    history: vec![rel],
                });
            }
        }
        iters[s] = it;
        let vol: f64 = mesh.areas.iter().sum();
        let mean = (0..p.len()).map(|t| p[t] * mesh.areas[t]).sum::<f64>() / vol;
        out_pi[s] = p.iter().map(|v| v - mean).collect();
        for c in 0..2 {
            out_w[s][c] = (0..ne).map(|e| w[2 * e + c]).collect();
            // integral of a CR field: midpoint rule per element
            k[c][s] = (0..mesh.n_elems())
                .map(|t| {
                    mesh.areas[t] / 3.0 * mesh.elem_edges[t].iter().map(|&e| w[2 * e + c]).sum::<f64>()
                })
                .sum();
        }
    }
    Ok(PermeabilityCell {
        k,
        w: out_w,
        pi: out_pi,
        iters,
        residual,
    })
}
