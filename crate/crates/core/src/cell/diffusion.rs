//! Diffusion cell problem with lowest-order face-flux elements.
//!
//! For s = 1, 2 find the flux `sigma = phi_delta (grad omega + e_s)` with
//! `div sigma = 0`, periodic, `omega` of zero mean. The mixed system is
//! hybridized: fluxes and the cellwise `omega` are eliminated element by
//! element, leaving an SPD system for the edge traces of `omega`.

use super::{inv3, mat3_vec, Mat2};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Triplets};
use crate::mesh::{bary_mid, Field, TriMesh};

#[derive(Clone, Debug)]
pub struct DiffusionCell {
    /// Effective diffusion tensor (symmetrized).
    pub a: Mat2,
    /// Cellwise omega^s, zero mean.
    pub omega: [Vec<f64>; 2],
    /// Normal fluxes of sigma^s per edge, canonical orientation.
    pub flux: [Vec<f64>; 2],
    /// |A12 - A21| before symmetrization.
    pub asymmetry: f64,
}

/// Local data of one element: flux-space inverse mass, w = M^-1 d, alpha = d.w,
/// the load vectors for e_1 and e_2 and the flux-to-integral map.
struct Local {
    minv: [[f64; 3]; 3],
    w: [f64; 3],
    alpha: f64,
    load: [[f64; 3]; 2],
    /// Integral over T of the basis function tau_k: (c - p_k) / 2.
    moment: [[f64; 2]; 3],
}

fn local(mesh: &TriMesh, t: usize, phi: &Field, delta: f64) -> Result<Local> {
    let p = mesh.points(t);
    let area = mesh.areas[t];
    let c = mesh.centroid(t);
    let mut m = [[0.0; 3]; 3];
    for j in 0..3 {
        let x = [
            0.5 * (p[(j + 1) % 3][0] + p[(j + 2) % 3][0]),
            0.5 * (p[(j + 1) % 3][1] + p[(j + 2) % 3][1]),
        ];
        let coef = phi.eval(t, bary_mid(j)) + delta;
        if coef <= 0.0 {
            return Err(Error::Bounds(format!("phi_delta = {coef} <= 0 in element {t}")));
        }
        let wq = area / 3.0 / coef;
        let tau: Vec<[f64; 2]> = (0..3)
            .map(|k| [(x[0] - p[k][0]) / (2.0 * area), (x[1] - p[k][1]) / (2.0 * area)])
            .collect();
        for k in 0..3 {
            for l in 0..3 {
                m[k][l] += wq * (tau[k][0] * tau[l][0] + tau[k][1] * tau[l][1]);
            }
        }
    }
    let minv = inv3(&m).ok_or_else(|| Error::Linear {
        stage: "diffusion cell",
        msg: format!("singular local mass in element {t}"),
    })?;
    let w = mat3_vec(&minv, &[1.0; 3]);
    let alpha = w.iter().sum();
    let moment = [0, 1, 2].map(|k| [0.5 * (c[0] - p[k][0]), 0.5 * (c[1] - p[k][1])]);
    let load = [0, 1].map(|s| [0, 1, 2].map(|k| moment[k][s]));
    Ok(Local {
        minv,
        w,
        alpha,
        load,
        moment,
    })
}

impl Local {
    fn schur(&self) -> [[f64; 3]; 3] {
        let mut s = self.minv;
        for (k, row) in s.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v -= self.w[k] * self.w[l] / self.alpha;
            }
        }
        s
    }
}

/// Solves both diffusion cell problems for the coefficient `phi + delta`.
/// `phi` may be P1 (the phase field) or P0 (cellwise data).
pub fn solve_diffusion_cell(phi: &Field, delta: f64) -> Result<DiffusionCell> {
    let mesh = &*phi.mesh;
    if !mesh.is_periodic() {
        return Err(Error::Mesh("cell problems need a periodic mesh".into()));
    }
    let ne = mesh.n_edges();
    let locals = (0..mesh.n_elems())
        .map(|t| local(mesh, t, phi, delta))
        .collect::<Result<Vec<_>>>()?;

    // edge 0 carries the pinned trace
    let idx = |e: usize| e.checked_sub(1);
    let n = ne - 1;
    let mut a = Triplets::with_capacity(n, 9 * mesh.n_elems());
    let mut rhs = [vec![0.0; n], vec![0.0; n]];
    for (t, loc) in locals.iter().enumerate() {
        let s = loc.schur();
        let ee = mesh.elem_edges[t];
        for k in 0..3 {
            let Some(i) = idx(ee[k]) else { continue };
            for l in 0..3 {
                if let Some(j) = idx(ee[l]) {
                    a.add(i, j, s[k][l]);
                }
            }
            for (sd, r) in rhs.iter_mut().enumerate() {
                r[i] -= (0..3).map(|l| s[k][l] * loc.load[sd][l]).sum::<f64>();
            }
        }
    }
    if n == 0 {
        return Err(Error::Mesh("cell mesh too coarse".into()));
    }
    let chol = Cholesky::factor(&a, "diffusion cell")?;
    let sols = chol.solve_many(&[&rhs[0], &rhs[1]]);

    let mut tensor = [[0.0; 2]; 2];
    let mut omega = [vec![0.0; mesh.n_elems()], vec![0.0; mesh.n_elems()]];
    let mut flux = [vec![0.0; ne], vec![0.0; ne]];
    for sd in 0..2 {
        let lam = |e: usize| idx(e).map_or(0.0, |i| sols[sd][i]);
        for (t, loc) in locals.iter().enumerate() {
            let ee = mesh.elem_edges[t];
            let g = [0, 1, 2].map(|k| loc.load[sd][k] + lam(ee[k]));
            let om = (0..3).map(|k| loc.w[k] * g[k]).sum::<f64>() / loc.alpha;
            let sflux = mat3_vec(&loc.schur(), &g);
            omega[sd][t] = om;
            for k in 0..3 {
                tensor[0][sd] += sflux[k] * loc.moment[k][0];
                tensor[1][sd] += sflux[k] * loc.moment[k][1];
                // both neighbours agree up to solver precision
                flux[sd][ee[k]] = sflux[k] * mesh.elem_signs[t][k];
            }
        }
        let mean: f64 = (0..mesh.n_elems()).map(|t| omega[sd][t] * mesh.areas[t]).sum();
        let vol: f64 = mesh.areas.iter().sum();
        for v in omega[sd].iter_mut() {
            *v -= mean / vol;
        }
    }
    let asymmetry = (tensor[0][1] - tensor[1][0]).abs();
    if asymmetry > 1e-8 {
        return Err(Error::Linear {
            stage: "diffusion cell",
            msg: format!("effective tensor asymmetry {asymmetry:.3e} exceeds 1e-8"),
        });
    }
    let off = 0.5 * (tensor[0][1] + tensor[1][0]);
    tensor[0][1] = off;
    tensor[1][0] = off;
    Ok(DiffusionCell {
        a: tensor,
        omega,
        flux,
        asymmetry,
    })
}
