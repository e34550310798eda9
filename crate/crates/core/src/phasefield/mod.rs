//! Micro-scale phase-field evolution on the periodic unit cell.
//!
//! The phase field is continuous piecewise linear. One multi-scale
//! iteration solves
//!
//! ```text
//! (1 + Lc) <phi, psi> + dt gamma <grad phi, grad psi> - dt/lambda^2 <F_-(phi, u), psi>
//!     = <phi_prev + dt/lambda^2 F_+(phi_prev, u) + Lc phi_outer, psi>
//! ```
//!
//! by the L-scheme: F_-(phi) is replaced by `F_-(phi_{j-1}) - L (phi - phi_{j-1})`.
//! All mass terms are lumped, which makes the system matrix an M-matrix on
//! the right-triangle meshes produced by bisection; the discrete solution
//! then inherits the [0, 1] bounds.

mod chem;
mod init;

use std::sync::Arc;

pub use chem::{
    dfdphi, double_well_prime, f_split, lipschitz_bound_f1, lipschitz_constants, micro_dt_bound,
    nonlinearity, reaction_rate, sup_dfdphi, sup_dfminus, ChemistryParams,
};
pub use init::{InitialShape, Profile};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Triplets};
use crate::mesh::{Family, Field, TriMesh};

/// Choice of the L-scheme linearization parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinPolicy {
    /// max(|2 lambda f(u) + 8 gamma|, |2 lambda f(u) - 8 gamma|), updated with u.
    Dynamic,
    /// Fixed value.
    Fixed(f64),
    /// sup over [0,1] of |dF_-/dphi| at the current u.
    Safe,
}

impl LinPolicy {
    pub fn value(&self, u: f64, p: &ChemistryParams) -> f64 {
        match *self {
            LinPolicy::Dynamic => lipschitz_bound_f1(u, p),
            LinPolicy::Fixed(l) => l,
            LinPolicy::Safe => sup_dfminus(u, p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverKnobs {
    pub l_coup: f64,
    pub l_lin: LinPolicy,
    pub tol_mu: f64,
    pub max_micro_iters: usize,
    /// Largest admissible excursion outside [0, 1] before clamping.
    pub bound_tol: f64,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        Self {
            l_coup: 1e-4,
            l_lin: LinPolicy::Dynamic,
            tol_mu: 1e-8,
            max_micro_iters: 500,
            bound_tol: 1e-9,
        }
    }
}

/// Outcome of one nonlinear micro solve.
#[derive(Clone, Debug, Default)]
pub struct MicroStats {
    pub iters: usize,
    /// eps_mu per iteration.
    pub history: Vec<f64>,
    /// Largest clamp applied to bring the result into [0, 1].
    pub clamp: f64,
}

/// Exact integral of the phase field over the cell.
pub fn porosity(phi: &Field) -> f64 {
    phi.integral()
}

/// Lumped P1 mass per degree of freedom.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.n_dofs];
    for t in 0..mesh.n_elems() {
        for &v in &mesh.triangles[t] {
            m[mesh.vertex_dof[v]] += mesh.areas[t] / 3.0;
        }
    }
    m
}

/// P1 stiffness matrix with periodic dofs merged.
pub fn stiffness(mesh: &TriMesh, scale: f64, out: &mut Triplets) {
    for t in 0..mesh.n_elems() {
        let g = mesh.grad_bary(t);
        let d = mesh.triangles[t].map(|v| mesh.vertex_dof[v]);
        let a = mesh.areas[t] * scale;
        for i in 0..3 {
            for j in 0..3 {
                out.add(d[i], d[j], a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
            }
        }
    }
}

/// Exact L2 norm of the P1 difference `a - b` on `mesh`.
pub fn l2_diff(mesh: &TriMesh, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.n_elems() {
        let e = mesh.triangles[t].map(|v| {
            let d = mesh.vertex_dof[v];
            a[d] - b[d]
        });
        let sum = e[0] + e[1] + e[2];
        s += mesh.areas[t] / 12.0 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + sum * sum);
    }
    s.sqrt()
}

/// Factored L-scheme operator for fixed (phi_prev, phi_outer, u, dt).
pub struct LScheme {
    mesh: Arc<TriMesh>,
    mass: Vec<f64>,
    chol: Cholesky,
    /// M (phi_prev + tau F_+(phi_prev) + Lc phi_outer), lumped.
    base: Vec<f64>,
    tau: f64,
    l_lin: f64,
    u: f64,
    params: ChemistryParams,
}

impl LScheme {
    pub fn new(
        prev: &Field,
        outer: &Field,
        u: f64,
        dt: f64,
        knobs: &SolverKnobs,
        params: &ChemistryParams,
    ) -> Result<Self> {
        let mesh = prev.mesh.clone();
        if !Arc::ptr_eq(&mesh, &outer.mesh) && mesh.ids != outer.mesh.ids {
            return Err(Error::Mesh("phase fields live on different meshes".into()));
        }
        if prev.family != Family::P1 || outer.family != Family::P1 {
            return Err(Error::Mesh("phase fields must be P1".into()));
        }
        let tau = dt / (params.lambda * params.lambda);
        let l_lin = knobs.l_lin.value(u, params);
        let mass = lumped_mass(&mesh);
        let n = mesh.n_dofs;
        let mut a = Triplets::with_capacity(n, 9 * mesh.n_elems() + n);
        let diag = 1.0 + knobs.l_coup + tau * l_lin;
        for (i, m) in mass.iter().enumerate() {
            a.add(i, i, diag * m);
        }
        stiffness(&mesh, dt * params.gamma, &mut a);
        let chol = Cholesky::factor(&a, "phase field")?;
        let base = (0..n)
            .map(|i| {
                let p = prev.values[i];
                mass[i] * (p + tau * f_split(p, u, params).0 + knobs.l_coup * outer.values[i])
            })
            .collect();
        Ok(Self {
            mesh,
            mass,
            chol,
            base,
            tau,
            l_lin,
            u,
            params: *params,
        })
    }

    pub fn l_lin(&self) -> f64 {
        self.l_lin
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    /// One linear iteration from the inner iterate `inner`.
    pub fn step(&self, inner: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = (0..inner.len())
            .map(|i| {
                let p = inner[i];
                let fm = f_split(p, self.u, &self.params).1;
                self.base[i] + self.mass[i] * self.tau * (fm + self.l_lin * p)
            })
            .collect();
        self.chol.solve(&rhs)
    }
}

/// A single L-scheme linear solve.
pub fn lscheme_step(
    prev: &Field,
    outer: &Field,
    inner: &Field,
    u: f64,
    dt: f64,
    knobs: &SolverKnobs,
    params: &ChemistryParams,
) -> Result<Field> {
    let op = LScheme::new(prev, outer, u, dt, knobs, params)?;
    Field::new(prev.mesh.clone(), Family::P1, op.step(&inner.values))
}

/// Iterates the L-scheme from `outer` until eps_mu <= tol_mu, then checks the
/// [0, 1] bounds and clamps.
pub fn solve_phasefield(
    prev: &Field,
    outer: &Field,
    u: f64,
    dt: f64,
    knobs: &SolverKnobs,
    params: &ChemistryParams,
) -> Result<(Field, MicroStats)> {
    let op = LScheme::new(prev, outer, u, dt, knobs, params)?;
    let mesh = op.mesh().clone();
    let mut cur = outer.values.clone();
    let mut stats = MicroStats::default();
    loop {
        let next = op.step(&cur);
        let eps = l2_diff(&mesh, &next, &cur);
        stats.iters += 1;
        stats.history.push(eps);
        cur = next;
        if eps <= knobs.tol_mu {
            break;
        }
        if stats.iters >= knobs.max_micro_iters || !eps.is_finite() {
            return Err(Error::NotConverged {
                what: "phase-field L-scheme",
                iters: stats.iters,
                last: eps,
                history: stats.history,
            });
        }
    }
    for v in cur.iter_mut() {
        let c = v.clamp(0.0, 1.0);
        stats.clamp = stats.clamp.max((c - *v).abs());
        *v = c;
    }
    if stats.clamp > knobs.bound_tol {
        return Err(Error::Bounds(format!(
            "phase field left [0,1] by {:.3e} (tolerance {:.1e})",
            stats.clamp, knobs.bound_tol
        )));
    }
    Ok((Field::new(mesh, Family::P1, cur)?, stats))
}
