//! Macro-scale Darcy flow and reactive transport with lowest-order
//! face-flux mixed elements.
//!
//! Flux unknowns are total normal fluxes through edges in the canonical
//! edge orientation; scalar unknowns are cellwise constants. Dirichlet data
//! enter weakly through the flux equation, zero-Neumann edges carry no flux
//! unknown.

mod boundary;

pub use boundary::{Bc, BoundaryData, Segment};

use crate::cell::Mat2;
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Triplets};
use crate::mesh::{bary_mid, Family, Field, TriMesh, NONE};

/// Relative asymmetry above which a tensor is reported before symmetrization.
const ASYM_WARN: f64 = 1e-6;

/// Macro solution at one time level.
#[derive(Clone, Debug)]
pub struct MacroState {
    /// Concentration, P0.
    pub u: Field,
    /// Pressure, P0.
    pub p: Field,
    /// Darcy flux, RT0 (edge fluxes).
    pub q: Field,
    /// Elementwise porosity.
    pub porosity: Vec<f64>,
}

impl MacroState {
    /// Constant state with no flow.
    pub fn uniform(mesh: &std::sync::Arc<TriMesh>, u: f64, porosity: Vec<f64>) -> MacroState {
        MacroState {
            u: Field::constant(mesh.clone(), Family::P0, u),
            p: Field::constant(mesh.clone(), Family::P0, 0.0),
            q: Field::constant(mesh.clone(), Family::RT0, 0.0),
            porosity,
        }
    }
}

/// Symmetrizes `k`, warning when the asymmetry is noticeable, and checks
/// positive definiteness.
fn checked_inverse(k: &Mat2, t: usize, what: &str) -> Result<Mat2> {
    let asym = (k[0][1] - k[1][0]).abs();
    let scale = k[0][0].abs().max(k[1][1].abs());
    if asym > ASYM_WARN * scale {
        log::warn!("{what} in element {t}: relative asymmetry {:.2e}, symmetrized", asym / scale);
    }
    let off = 0.5 * (k[0][1] + k[1][0]);
    let det = k[0][0] * k[1][1] - off * off;
    if !(k[0][0] > 0.0 && det > 0.0) || !det.is_finite() {
        return Err(Error::Linear {
            stage: "macro assembly",
            msg: format!("{what} in element {t} is not positive definite: {k:?}"),
        });
    }
    Ok([[k[1][1] / det, -off / det], [-off / det, k[0][0] / det]])
}

/// Local mass of the flux basis weighted by the constant tensor `b`:
/// `int_T b tau_k . tau_l` with `tau_k = (x - p_k) / (2|T|)`. The midpoint
/// rule is exact for the quadratic integrand.
pub(crate) fn flux_mass(mesh: &TriMesh, t: usize, b: &Mat2) -> [[f64; 3]; 3] {
    let p = mesh.points(t);
    let area = mesh.areas[t];
    let mut m = [[0.0; 3]; 3];
    for q in 0..3 {
        let l = bary_mid(q);
        let x = [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ];
        let tau = [0, 1, 2].map(|k| [(x[0] - p[k][0]) / (2.0 * area), (x[1] - p[k][1]) / (2.0 * area)]);
        for k in 0..3 {
            let bt = [
                b[0][0] * tau[k][0] + b[0][1] * tau[k][1],
                b[1][0] * tau[k][0] + b[1][1] * tau[k][1],
            ];
            for l in 0..3 {
                m[k][l] += area / 3.0 * (bt[0] * tau[l][0] + bt[1] * tau[l][1]);
            }
        }
    }
    m
}

/// Numbering of the flux unknowns: Neumann edges get none.
struct FluxDofs {
    idx: Vec<Option<usize>>,
    n: usize,
}

impl FluxDofs {
    fn new(mesh: &TriMesh, bcs: &[Bc]) -> FluxDofs {
        let mut n = 0;
        let idx = bcs
            .iter()
            .enumerate()
            .map(|(e, bc)| {
                if mesh.edges[e].is_boundary() && *bc == Bc::Neumann {
                    None
                } else {
                    n += 1;
                    Some(n - 1)
                }
            })
            .collect();
        FluxDofs { idx, n }
    }
}

/// Assembles the mixed block shared by flow and transport:
/// `(b sigma, v) - (s, div v) = -<s_D, v.n>` and the divergence rows
/// `int_T div sigma`, scaled by `div_scale`.
fn assemble_mixed(
    mesh: &TriMesh,
    binv: &[Mat2],
    bcs: &[Bc],
    dofs: &FluxDofs,
    div_scale: f64,
    a: &mut Triplets,
    rhs: &mut [f64],
) {
    let nf = dofs.n;
    for t in 0..mesh.n_elems() {
        let m = flux_mass(mesh, t, &binv[t]);
        let ee = mesh.elem_edges[t];
        let sg = mesh.elem_signs[t];
        for k in 0..3 {
            let Some(i) = dofs.idx[ee[k]] else { continue };
            for l in 0..3 {
                if let Some(j) = dofs.idx[ee[l]] {
                    a.add(i, j, sg[k] * sg[l] * m[k][l]);
                }
            }
            a.add(i, nf + t, -sg[k]);
            a.add(nf + t, i, div_scale * sg[k]);
            if let Bc::Dirichlet(v) = bcs[ee[k]] {
                if mesh.edges[ee[k]].is_boundary() {
                    rhs[i] -= sg[k] * v;
                }
            }
        }
    }
}

/// Maximum over elements of |int_T div q| / |T|.
pub fn max_divergence(mesh: &TriMesh, q: &[f64]) -> f64 {
    (0..mesh.n_elems())
        .map(|t| {
            let d: f64 = (0..3).map(|k| mesh.elem_signs[t][k] * q[mesh.elem_edges[t][k]]).sum();
            (d / mesh.areas[t]).abs()
        })
        .fold(0.0, f64::max)
}

/// Value of the flux field at every element centroid.
pub fn centroid_velocity(mesh: &TriMesh, q: &[f64]) -> Vec<[f64; 2]> {
    (0..mesh.n_elems())
        .map(|t| {
            let c = mesh.centroid(t);
            let p = mesh.points(t);
            let mut v = [0.0; 2];
            for k in 0..3 {
                let s = mesh.elem_signs[t][k] * q[mesh.elem_edges[t][k]] / (2.0 * mesh.areas[t]);
                v[0] += s * (c[0] - p[k][0]);
                v[1] += s * (c[1] - p[k][1]);
            }
            v
        })
        .collect()
}

/// Mixed Darcy flow `div q = 0`, `q = -K grad p`. Returns the cellwise
/// pressure and the edge fluxes.
pub fn solve_flow(mesh: &TriMesh, k: &[Mat2], bc: &BoundaryData) -> Result<(Vec<f64>, Vec<f64>)> {
    if k.len() != mesh.n_elems() {
        return Err(Error::Mesh(format!("{} permeability tensors for {} elements", k.len(), mesh.n_elems())));
    }
    let kinv = k
        .iter()
        .enumerate()
        .map(|(t, k)| checked_inverse(k, t, "permeability"))
        .collect::<Result<Vec<_>>>()?;
    let bcs = bc.per_edge(mesh);
    let dofs = FluxDofs::new(mesh, &bcs);
    let nt = mesh.n_elems();
    let gauge = !bcs
        .iter()
        .enumerate()
        .any(|(e, b)| mesh.edges[e].is_boundary() && matches!(b, Bc::Dirichlet(_)));
    let n = dofs.n + nt + usize::from(gauge);
    let mut a = Triplets::with_capacity(n, 16 * nt);
    let mut rhs = vec![0.0; n];
    assemble_mixed(mesh, &kinv, &bcs, &dofs, -1.0, &mut a, &mut rhs);
    if gauge {
        // Lagrange multiplier pinning the mean pressure
        for t in 0..nt {
            a.add(dofs.n + t, n - 1, mesh.areas[t]);
            a.add(n - 1, dofs.n + t, mesh.areas[t]);
        }
    }
    let x = lu_solve(&a, &rhs, "macro flow")?;
    let q = dofs.idx.iter().map(|i| i.map_or(0.0, |i| x[i])).collect();
    let p = x[dofs.n..dofs.n + nt].to_vec();
    Ok((p, q))
}

/// One implicit step of
/// `phi_n (u - u*) + dt div(q u) - dt D div(A grad u) = phi_old (u_old - u*)`.
#[derive(Clone, Copy, Debug)]
pub struct Transport<'a> {
    pub por_new: &'a [f64],
    pub por_old: &'a [f64],
    pub u_old: &'a [f64],
    /// Darcy edge fluxes, `None` without flow.
    pub q: Option<&'a [f64]>,
    pub a: &'a [Mat2],
    pub dt: f64,
    pub d: f64,
    pub u_star: f64,
}

/// Solves the transport step; returns the cellwise concentration.
///
/// Advection is upwinded per edge. Inflow through a Dirichlet edge carries
/// the boundary value; inflow through a Neumann edge carries the cell value.
pub fn solve_transport(mesh: &TriMesh, pr: &Transport, bc: &BoundaryData) -> Result<Vec<f64>> {
    let nt = mesh.n_elems();
    for (name, v) in [("por_new", pr.por_new), ("por_old", pr.por_old), ("u_old", pr.u_old)] {
        if v.len() != nt {
            return Err(Error::Mesh(format!("{name} has {} values for {nt} elements", v.len())));
        }
    }
    if let Some((t, &ph)) = pr.por_new.iter().chain(pr.por_old).enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::Bounds(format!("porosity {ph} outside (0, 1] at index {t}")));
    }
    if !(pr.dt > 0.0) || !(pr.d > 0.0) {
        return Err(Error::Bounds(format!("dt = {} and D = {} must be positive", pr.dt, pr.d)));
    }
    let binv = pr
        .a
        .iter()
        .enumerate()
        .map(|(t, a)| checked_inverse(&[[pr.d * a[0][0], pr.d * a[0][1]], [pr.d * a[1][0], pr.d * a[1][1]]], t, "diffusion"))
        .collect::<Result<Vec<_>>>()?;
    let bcs = bc.per_edge(mesh);
    let dofs = FluxDofs::new(mesh, &bcs);
    let nf = dofs.n;
    let n = nf + nt;
    let mut a = Triplets::with_capacity(n, 22 * nt);
    let mut rhs = vec![0.0; n];
    assemble_mixed(mesh, &binv, &bcs, &dofs, pr.dt, &mut a, &mut rhs);
    for t in 0..nt {
        let area = mesh.areas[t];
        a.add(nf + t, nf + t, pr.por_new[t] * area);
        rhs[nf + t] = area * (pr.por_old[t] * (pr.u_old[t] - pr.u_star) + pr.por_new[t] * pr.u_star);
        let Some(q) = pr.q else { continue };
        for k in 0..3 {
            let e = mesh.elem_edges[t][k];
            let out = mesh.elem_signs[t][k] * q[e];
            if out >= 0.0 {
                a.add(nf + t, nf + t, pr.dt * out);
                continue;
            }
            let [e0, e1] = mesh.edges[e].elems;
            let nb = if e0 == t { e1 } else { e0 };
            if nb != NONE {
                a.add(nf + t, nf + nb, pr.dt * out);
            } else if let Bc::Dirichlet(v) = bcs[e] {
                rhs[nf + t] -= pr.dt * out * v;
            } else {
                a.add(nf + t, nf + t, pr.dt * out);
            }
        }
    }
    let x = lu_solve(&a, &rhs, "macro transport")?;
    Ok(x[nf..].to_vec())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::mesh::{Rect, Side};

    const I: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

    fn strip(nx: usize, ny: usize) -> Arc<TriMesh> {
        TriMesh::uniform(Rect::new(0.0, 0.0, 1.0, 0.5).unwrap(), nx, ny, false)
            .unwrap()
            .into_arc()
    }

    fn lr(left: f64, right: f64) -> BoundaryData {
        BoundaryData::sides([Bc::Dirichlet(left), Bc::Dirichlet(right), Bc::Neumann, Bc::Neumann])
    }

    #[test]
    fn flux_mass_of_identity_is_spd_and_exact() {
        let m = strip(2, 1);
        for t in 0..m.n_elems() {
            let fm = flux_mass(&m, t, &I);
            // tau_k . tau_k integrated in closed form through the vertex differences
            let p = m.points(t);
            let area = m.areas[t];
            let c = m.centroid(t);
            for k in 0..3 {
                let mut exact = 0.0;
                // int |x - p_k|^2 = |T| (|c - p_k|^2 + (sum |p_i - c|^2) / 12)
                let spread: f64 = p.iter().map(|v| (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2)).sum();
                exact += area * ((c[0] - p[k][0]).powi(2) + (c[1] - p[k][1]).powi(2) + spread / 12.0);
                exact /= 4.0 * area * area;
                assert!((fm[k][k] - exact).abs() < 1e-12, "{} {}", fm[k][k], exact);
            }
        }
    }

    #[test]
    fn linear_pressure_is_exact() {
        let m = strip(8, 4);
        let k = vec![I; m.n_elems()];
        let (p, q) = solve_flow(&m, &k, &lr(0.25, 0.0)).unwrap();
        assert!(max_divergence(&m, &q) < 1e-10);
        for t in 0..m.n_elems() {
            let x = m.centroid(t)[0];
            assert!((p[t] - 0.25 * (1.0 - x)).abs() < 1e-10, "{} {}", p[t], x);
        }
        for (e, edge) in m.edges.iter().enumerate() {
            let [a, b] = [m.vertices[edge.v[0]], m.vertices[edge.v[1]]];
            // canonical normal is the tangent rotated clockwise
            let nx = b[1] - a[1];
            assert!((q[e] - 0.25 * nx).abs() < 1e-10, "edge {e}: {} vs {}", q[e], 0.25 * nx);
        }
        for v in centroid_velocity(&m, &q) {
            assert!((v[0] - 0.25).abs() < 1e-10 && v[1].abs() < 1e-10, "{v:?}");
        }
    }

    #[test]
    fn closed_domain_has_no_flow() {
        let m = strip(4, 2);
        let k = vec![I; m.n_elems()];
        let (p, q) = solve_flow(&m, &k, &BoundaryData::default()).unwrap();
        assert!(q.iter().all(|v| v.abs() < 1e-14));
        assert!(p.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn two_layer_darcy() {
        let m = strip(8, 2);
        let (k1, k2) = (1.0, 0.1);
        let k: Vec<Mat2> = (0..m.n_elems())
            .map(|t| {
                let c = if m.centroid(t)[0] < 0.5 { k1 } else { k2 };
                [[c, 0.0], [0.0, 3.0 * c]]
            })
            .collect();
        let (p, q) = solve_flow(&m, &k, &lr(0.25, 0.0)).unwrap();
        // series resistance: q1 = dp / (0.5 / k1 + 0.5 / k2)
        let q1 = 0.25 / (0.5 / k1 + 0.5 / k2);
        let pm = 0.25 - q1 * 0.5 / k1;
        for (e, edge) in m.edges.iter().enumerate() {
            let [a, b] = [m.vertices[edge.v[0]], m.vertices[edge.v[1]]];
            assert!((q[e] - q1 * (b[1] - a[1])).abs() < 1e-10);
        }
        for t in 0..m.n_elems() {
            let x = m.centroid(t)[0];
            let exact = if x < 0.5 { 0.25 - q1 * x / k1 } else { pm - q1 * (x - 0.5) / k2 };
            assert!((p[t] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_permeability_rejected() {
        let m = strip(1, 1);
        let k = vec![[[1.0, 2.0], [2.0, 1.0]]; m.n_elems()];
        assert!(solve_flow(&m, &k, &lr(1.0, 0.0)).is_err());
    }

    fn transport<'a>(por: &'a [f64], u: &'a [f64], a: &'a [Mat2], q: Option<&'a [f64]>) -> Transport<'a> {
        Transport {
            por_new: por,
            por_old: por,
            u_old: u,
            q,
            a,
            dt: 0.01,
            d: 1.0,
            u_star: 1.0,
        }
    }

    #[test]
    fn constants_are_preserved() {
        let m = strip(8, 4);
        let nt = m.n_elems();
        let por = vec![0.6; nt];
        let u = vec![0.5; nt];
        let a = vec![[[0.3, 0.05], [0.05, 0.2]]; nt];
        let k = vec![I; nt];
        let bc = lr(0.5, 0.5);
        let un = solve_transport(&m, &transport(&por, &u, &a, None), &bc).unwrap();
        assert!(un.iter().all(|v| (v - 0.5).abs() < 1e-12));
        let (_, q) = solve_flow(&m, &k, &lr(0.25, 0.0)).unwrap();
        let un = solve_transport(&m, &transport(&por, &u, &a, Some(&q)), &bc).unwrap();
        assert!(un.iter().all(|v| (v - 0.5).abs() < 1e-12));
        let closed = solve_transport(&m, &transport(&por, &u, &a, None), &BoundaryData::default()).unwrap();
        assert!(closed.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn porosity_growth_releases_solute() {
        // closed domain, uniform dissolution: phi_n (u - u*) = phi_o (u_o - u*)
        let m = strip(2, 2);
        let nt = m.n_elems();
        let u = vec![0.5; nt];
        let a = vec![I; nt];
        let (po, pn) = (vec![0.5; nt], vec![0.6; nt]);
        let pr = Transport {
            por_new: &pn,
            por_old: &po,
            ..transport(&po, &u, &a, None)
        };
        let un = solve_transport(&m, &pr, &BoundaryData::default()).unwrap();
        let exact = 1.0 + 0.5 * (0.5 - 1.0) / 0.6;
        assert!(un.iter().all(|v| (v - exact).abs() < 1e-12));
    }

    /// Dense assembly of the mixed transport system written out directly.
    fn dense_transport(m: &TriMesh, a: f64, pr: &Transport, ud: f64) -> Vec<f64> {
        let ne = m.n_edges();
        let nt = m.n_elems();
        let dirichlet = |e: usize| m.edges[e].side == Some(Side::Left);
        let n = ne + nt;
        let mut mat = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for e in 0..ne {
            if m.edges[e].is_boundary() && !dirichlet(e) {
                mat[(e, e)] = 1.0;
            }
        }
        for t in 0..nt {
            let p = m.points(t);
            let area = m.areas[t];
            let ee = m.elem_edges[t];
            let s = m.elem_signs[t];
            // 3-point edge-midpoint rule, written independently
            let mids = [0, 1, 2].map(|k| {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                [(p[i][0] + p[j][0]) / 2.0, (p[i][1] + p[j][1]) / 2.0]
            });
            for k in 0..3 {
                let fixed = m.edges[ee[k]].is_boundary() && !dirichlet(ee[k]);
                if fixed {
                    continue;
                }
                for l in 0..3 {
                    let mut v = 0.0;
                    for x in mids {
                        let tk = [(x[0] - p[k][0]) / (2.0 * area), (x[1] - p[k][1]) / (2.0 * area)];
                        let tl = [(x[0] - p[l][0]) / (2.0 * area), (x[1] - p[l][1]) / (2.0 * area)];
                        v += area / 3.0 / (pr.d * a) * (tk[0] * tl[0] + tk[1] * tl[1]);
                    }
                    mat[(ee[k], ee[l])] += s[k] * s[l] * v;
                }
                mat[(ee[k], ne + t)] -= s[k];
                mat[(ne + t, ee[k])] += pr.dt * s[k];
                if dirichlet(ee[k]) {
                    rhs[ee[k]] -= s[k] * ud;
                }
            }
            mat[(ne + t, ne + t)] += pr.por_new[t] * area;
            rhs[ne + t] = area * (pr.por_old[t] * (pr.u_old[t] - pr.u_star) + pr.por_new[t] * pr.u_star);
        }
        let x = mat.lu().solve(&rhs).unwrap();
        x.as_slice()[ne..].to_vec()
    }

    #[test]
    fn transport_matches_dense_oracle() {
        let m = strip(4, 2);
        let nt = m.n_elems();
        assert!(nt <= 32);
        let a = 0.37;
        let ten = vec![[[a, 0.0], [0.0, a]]; nt];
        let u: Vec<f64> = (0..nt).map(|t| 0.1 + 0.8 * ((t * 37) % 11) as f64 / 11.0).collect();
        let po: Vec<f64> = (0..nt).map(|t| 0.4 + 0.02 * t as f64 % 0.5).collect();
        let pn: Vec<f64> = po.iter().map(|p| p + 0.01).collect();
        let pr = Transport {
            por_new: &pn,
            por_old: &po,
            ..transport(&po, &u, &ten, None)
        };
        let bc = BoundaryData::sides([Bc::Dirichlet(0.2), Bc::Neumann, Bc::Neumann, Bc::Neumann]);
        let got = solve_transport(&m, &pr, &bc).unwrap();
        let want = dense_transport(&m, a, &pr, 0.2);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} {w}");
        }
    }

    #[test]
    fn corner_sink_stays_in_bounds() {
        let m = strip(40, 20);
        let nt = m.n_elems();
        let bc = BoundaryData {
            segments: vec![
                Segment::new(Side::Left, 0.0, 0.1, Bc::Dirichlet(0.0)),
                Segment::new(Side::Bottom, 0.0, 0.1, Bc::Dirichlet(0.0)),
            ],
        };
        let por = vec![0.5; nt];
        let a = vec![[[0.2, 0.0], [0.0, 0.2]]; nt];
        let mut u = vec![0.5; nt];
        for _ in 0..5 {
            u = solve_transport(&m, &transport(&por, &u, &a, None), &bc).unwrap();
            let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo >= -1e-8 && hi <= 0.5 + 1e-8, "{lo} {hi}");
        }
        let corner = m.locate([0.01, 0.01]).unwrap().0;
        assert!(u[corner] < 0.25);
    }
}
