use crate::mesh::{Side, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bc {
    Dirichlet(f64),
    /// Zero normal flux.
    Neumann,
}

/// Condition on the part of a side whose coordinate along the side
/// (y for left/right, x for bottom/top) lies in `[from, to]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub side: Side,
    pub from: f64,
    pub to: f64,
    pub bc: Bc,
}

impl Segment {
    pub fn new(side: Side, from: f64, to: f64, bc: Bc) -> Segment {
        Segment { side, from, to, bc }
    }

    pub fn whole(side: Side, bc: Bc) -> Segment {
        Segment::new(side, f64::NEG_INFINITY, f64::INFINITY, bc)
    }
}

/// Boundary conditions of one unknown. Edges not covered by any segment
/// are zero-Neumann; the first matching segment wins.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryData {
    pub segments: Vec<Segment>,
}

impl BoundaryData {
    /// One condition per side, in the order left, right, bottom, top.
    pub fn sides(bcs: [Bc; 4]) -> BoundaryData {
        let sides = [Side::Left, Side::Right, Side::Bottom, Side::Top];
        BoundaryData {
            segments: sides.iter().zip(bcs).map(|(&s, bc)| Segment::whole(s, bc)).collect(),
        }
    }

    pub fn has_dirichlet(&self) -> bool {
        self.segments.iter().any(|s| matches!(s.bc, Bc::Dirichlet(_)))
    }

    /// Condition of every edge; interior edges report `Neumann`.
    pub fn per_edge(&self, mesh: &TriMesh) -> Vec<Bc> {
        (0..mesh.n_edges())
            .map(|e| {
                let Some(side) = mesh.edges[e].side else {
                    return Bc::Neumann;
                };
                let mid = mesh.edge_midpoint(e);
                let s = match side {
                    Side::Left | Side::Right => mid[1],
                    Side::Bottom | Side::Top => mid[0],
                };
                self.segments
                    .iter()
                    .find(|seg| seg.side == side && seg.from <= s && s <= seg.to)
                    .map_or(Bc::Neumann, |seg| seg.bc)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    #[test]
    fn corner_segments() {
        let m = TriMesh::uniform(Rect::new(0.0, 0.0, 1.0, 0.5).unwrap(), 40, 20, false).unwrap();
        let bc = BoundaryData {
            segments: vec![
                Segment::new(Side::Left, 0.0, 0.1, Bc::Dirichlet(0.0)),
                Segment::new(Side::Bottom, 0.0, 0.1, Bc::Dirichlet(0.0)),
            ],
        };
        let per = bc.per_edge(&m);
        let n = per.iter().filter(|b| **b == Bc::Dirichlet(0.0)).count();
        assert_eq!(n, 8);
        let len: f64 = (0..m.n_edges()).filter(|&e| per[e] != Bc::Neumann).map(|e| m.edge_length(e)).sum();
        assert!((len - 0.2).abs() < 1e-12);
    }
}
