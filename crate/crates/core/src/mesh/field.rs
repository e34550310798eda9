use std::sync::Arc;

use super::TriMesh;
use crate::error::{Error, Result};

/// Finite element family of a [`Field`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Piecewise constant, one value per element.
    P0,
    /// Continuous piecewise linear, one value per vertex dof.
    P1,
    /// Lowest-order face flux, one normal flux per edge (canonical orientation).
    RT0,
    /// Nonconforming linear, one value per edge midpoint.
    CR,
}

impl Family {
    pub fn n_dofs(self, mesh: &TriMesh) -> usize {
        match self {
            Family::P0 => mesh.n_elems(),
            Family::P1 => mesh.n_dofs,
            Family::RT0 | Family::CR => mesh.n_edges(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Field {
    pub mesh: Arc<TriMesh>,
    pub family: Family,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Arc<TriMesh>, family: Family, values: Vec<f64>) -> Result<Self> {
        let n = family.n_dofs(&mesh);
        if values.len() != n {
            return Err(Error::Mesh(format!(
                "{family:?} field needs {n} coefficients, got {}",
                values.len()
            )));
        }
        Ok(Self {
            mesh,
            family,
            values,
        })
    }

    pub fn constant(mesh: Arc<TriMesh>, family: Family, c: f64) -> Self {
        let n = family.n_dofs(&mesh);
        Self {
            mesh,
            family,
            values: vec![c; n],
        }
    }

    /// Nodal interpolant of `f` (P1).
    pub fn from_fn(mesh: Arc<TriMesh>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut values = vec![f64::NAN; mesh.n_dofs];
        for (v, p) in mesh.vertices.iter().enumerate() {
            let d = mesh.vertex_dof[v];
            if values[d].is_nan() {
                values[d] = f(*p);
            }
        }
        Self {
            mesh,
            family: Family::P1,
            values,
        }
    }

    /// P1 coefficients at the three vertices of element `t`.
    #[inline]
    pub fn nodal(&self, t: usize) -> [f64; 3] {
        debug_assert_eq!(self.family, Family::P1);
        self.mesh.triangles[t].map(|v| self.values[self.mesh.vertex_dof[v]])
    }

    /// Value inside element `t` at barycentric coordinates `l`.
    pub fn eval(&self, t: usize, l: [f64; 3]) -> f64 {
        match self.family {
            Family::P0 => self.values[t],
            Family::P1 => {
                let v = self.nodal(t);
                l[0] * v[0] + l[1] * v[1] + l[2] * v[2]
            }
            Family::CR => {
                let e = self.mesh.elem_edges[t];
                (0..3).map(|k| (1.0 - 2.0 * l[k]) * self.values[e[k]]).sum()
            }
            Family::RT0 => panic!("eval of a flux field needs a direction"),
        }
    }

    pub fn elem_mean(&self, t: usize) -> f64 {
        match self.family {
            Family::P0 => self.values[t],
            Family::P1 => self.nodal(t).iter().sum::<f64>() / 3.0,
            Family::CR => self.mesh.elem_edges[t].iter().map(|&e| self.values[e]).sum::<f64>() / 3.0,
            Family::RT0 => panic!("flux fields have no scalar mean"),
        }
    }

    pub fn elem_means(&self) -> Vec<f64> {
        (0..self.mesh.n_elems()).map(|t| self.elem_mean(t)).collect()
    }

    /// Exact integral over the mesh domain.
    pub fn integral(&self) -> f64 {
        (0..self.mesh.n_elems())
            .map(|t| self.mesh.areas[t] * self.elem_mean(t))
            .sum()
    }

    /// Exact L2 norm (P0, P1).
    pub fn l2_norm(&self) -> f64 {
        (0..self.mesh.n_elems())
            .map(|t| match self.family {
                Family::P0 => self.mesh.areas[t] * self.values[t].powi(2),
                Family::P1 => {
                    let v = self.nodal(t);
                    let s = v[0] + v[1] + v[2];
                    self.mesh.areas[t] / 12.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + s * s)
                }
                _ => panic!("l2_norm is defined for P0/P1 only"),
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Values at mesh vertices (P1 expanded over periodic copies).
    pub fn vertex_values(&self) -> Vec<f64> {
        self.mesh.vertex_dof.iter().map(|&d| self.values[d]).collect()
    }
}
