//! Initial phase fields on the unit cell (mineral = 0, fluid = 1).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::mesh::{Field, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialShape {
    /// Centered circular grain; radius from the sharp area `1 - porosity`.
    Circle { porosity: f64 },
    /// Axis-aligned mineral rectangle `[x0, x1] x [y0, y1]`.
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Spatially constant field.
    Uniform(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// {0, 1} indicator, mineral closed.
    Sharp,
    /// Equilibrium tanh-type profile 1 / (1 + exp(-4 d / lambda)).
    Diffuse,
}

impl InitialShape {
    pub fn radius(porosity: f64) -> f64 {
        ((1.0 - porosity) / PI).sqrt()
    }

    /// Signed distance to the mineral boundary, positive in the fluid.
    pub fn signed_distance(&self, y: [f64; 2]) -> f64 {
        match *self {
            InitialShape::Circle { porosity } => y[0].hypot(y[1]) - Self::radius(porosity),
            InitialShape::Rect { x0, x1, y0, y1 } => {
                let dx = (x0 - y[0]).max(y[0] - x1);
                let dy = (y0 - y[1]).max(y[1] - y1);
                if dx > 0.0 || dy > 0.0 {
                    dx.max(0.0).hypot(dy.max(0.0))
                } else {
                    dx.max(dy)
                }
            }
            InitialShape::Uniform(_) => f64::INFINITY,
        }
    }

    pub fn value(&self, y: [f64; 2], profile: Profile, lambda: f64) -> f64 {
        if let InitialShape::Uniform(c) = *self {
            return c;
        }
        let d = self.signed_distance(y);
        match profile {
            Profile::Sharp => {
                if d <= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Profile::Diffuse => 1.0 / (1.0 + (-4.0 * d / lambda).exp()),
        }
    }

    pub fn field(&self, mesh: Arc<TriMesh>, profile: Profile, lambda: f64) -> Field {
        Field::from_fn(mesh, |y| self.value(y, profile, lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_distance() {
        let r = InitialShape::Rect {
            x0: -0.4,
            x1: 0.4,
            y0: -0.3,
            y1: 0.3,
        };
        assert!((r.signed_distance([0.0, 0.0]) + 0.3).abs() < 1e-15);
        assert!((r.signed_distance([0.5, 0.0]) - 0.1).abs() < 1e-15);
        assert_eq!(r.value([0.4, 0.3], Profile::Sharp, 0.08), 0.0);
        assert_eq!(r.value([0.45, 0.3], Profile::Sharp, 0.08), 1.0);
    }

    #[test]
    fn circle_radius() {
        assert!((InitialShape::radius(0.5) - 0.3989422804).abs() < 1e-9);
        let c = InitialShape::Circle { porosity: 0.5 };
        let r = InitialShape::radius(0.5);
        assert!((c.value([r, 0.0], Profile::Diffuse, 0.08) - 0.5).abs() < 1e-12);
    }
}
