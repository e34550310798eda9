//! Conforming triangulations of axis-aligned rectangles and of the periodic
//! unit cell `Y = [-0.5, 0.5]^2`.
//!
//! Vertices sit on an integer lattice: a root quad has side `2^LATTICE_SHIFT`
//! lattice units, so every bisection midpoint is exact and vertices can be
//! compared by key instead of by coordinate tolerance. Triangles are stored
//! as `[a, b, c]` (counter-clockwise) with `a` the newest vertex, so the
//! refinement edge is always the edge opposite local vertex 0.
//!
//! Every element carries an [`ElemId`] (root triangle, level, bisection path);
//! this genealogy is what `union`, `project` and `locate` work on.

mod field;
mod refine;
mod transfer;

use std::collections::HashMap;
use std::sync::Arc;

pub use field::{Family, Field};
pub use transfer::{interpolate, project, union};

use crate::error::{Error, Result};

pub const LATTICE_SHIFT: u32 = 24;
const UNIT: i64 = 1 << LATTICE_SHIFT;
pub const NONE: usize = usize::MAX;

pub type Key = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub lx: f64,
    pub ly: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, lx: f64, ly: f64) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::Mesh(format!("degenerate rectangle {lx} x {ly}")));
        }
        Ok(Self { x0, y0, lx, ly })
    }

    pub fn unit_cell() -> Self {
        Self {
            x0: -0.5,
            y0: -0.5,
            lx: 1.0,
            ly: 1.0,
        }
    }
}

/// The uniform root triangulation every mesh of a family descends from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootGrid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub periodic: bool,
}

impl RootGrid {
    fn period(&self) -> Key {
        [self.nx as i64 * UNIT, self.ny as i64 * UNIT]
    }

    fn wrap(&self, k: Key) -> Key {
        if self.periodic {
            let p = self.period();
            [k[0].rem_euclid(p[0]), k[1].rem_euclid(p[1])]
        } else {
            k
        }
    }

    fn coords(&self, k: Key) -> [f64; 2] {
        let hx = self.rect.lx / self.nx as f64;
        let hy = self.rect.ly / self.ny as f64;
        [
            self.rect.x0 + (k[0] as f64 / UNIT as f64) * hx,
            self.rect.y0 + (k[1] as f64 / UNIT as f64) * hy,
        ]
    }

    /// Vertex keys of root triangle `r`, newest vertex first.
    fn root_triangle(&self, r: u32) -> [Key; 3] {
        let q = (r / 2) as usize;
        let (i, j) = ((q % self.nx) as i64, (q / self.nx) as i64);
        let p = |di: i64, dj: i64| [(i + di) * UNIT, (j + dj) * UNIT];
        let slash = (i + j) % 2 == 0;
        match (slash, r % 2) {
            (true, 0) => [p(1, 0), p(1, 1), p(0, 0)],
            (true, _) => [p(0, 1), p(0, 0), p(1, 1)],
            (false, 0) => [p(0, 0), p(1, 0), p(0, 1)],
            (false, _) => [p(1, 1), p(0, 1), p(1, 0)],
        }
    }

    /// Canonical (wrapped start, displacement) key of the edge p-q and
    /// whether p->q runs along the canonical direction.
    fn edge_key(&self, p: Key, q: Key) -> ((Key, Key), bool) {
        let d = [q[0] - p[0], q[1] - p[1]];
        if d > [0, 0] {
            ((self.wrap(p), d), true)
        } else {
            ((self.wrap(q), [-d[0], -d[1]]), false)
        }
    }
}

/// Element genealogy: root triangle, bisection level and path bits
/// (bit `l` is the child index taken at level `l + 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElemId {
    pub root: u32,
    pub level: u8,
    pub path: u64,
}

impl ElemId {
    pub fn root(r: u32) -> Self {
        Self {
            root: r,
            level: 0,
            path: 0,
        }
    }

    pub fn child(self, c: u64) -> Self {
        debug_assert!(self.level < 63);
        Self {
            root: self.root,
            level: self.level + 1,
            path: self.path | (c << self.level),
        }
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| self.ancestor(self.level - 1))
    }

    pub fn ancestor(self, level: u8) -> Self {
        debug_assert!(level <= self.level);
        let mask = if level == 0 { 0 } else { (1u64 << level) - 1 };
        Self {
            root: self.root,
            level,
            path: self.path & mask,
        }
    }

    /// Ancestor-or-self test.
    pub fn contains(self, other: ElemId) -> bool {
        self.root == other.root && self.level <= other.level && other.ancestor(self.level) == self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoints, oriented along the canonical direction.
    pub v: [usize; 2],
    /// Adjacent elements (`NONE` for the missing side of a boundary edge).
    pub elems: [usize; 2],
    /// Boundary side for non-periodic meshes.
    pub side: Option<Side>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.side.is_some()
    }
}

/// Pairing of opposite boundary vertices on a periodic mesh. Both maps are
/// involutions; `x[v]` is the partner across the left/right faces.
#[derive(Clone, Debug, Default)]
pub struct PeriodicMap {
    pub x: Vec<Option<usize>>,
    pub y: Vec<Option<usize>>,
}

impl PeriodicMap {
    pub fn is_empty(&self) -> bool {
        self.x.iter().chain(&self.y).all(Option::is_none)
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub grid: RootGrid,
    keys: Vec<Key>,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub ids: Vec<ElemId>,
    pub edges: Vec<Edge>,
    /// Edge `k` of a triangle is opposite local vertex `k`.
    pub elem_edges: Vec<[usize; 3]>,
    /// +1 where the local edge `(k+1) -> (k+2)` runs along the canonical direction.
    pub elem_signs: Vec<[f64; 3]>,
    /// Degree of freedom of each vertex for continuous fields (periodic
    /// copies share one).
    pub vertex_dof: Vec<usize>,
    pub n_dofs: usize,
    pub periodic_map: PeriodicMap,
    pub areas: Vec<f64>,
    pub h_max: f64,
    pub h_min: f64,
    index: HashMap<ElemId, usize>,
}

impl TriMesh {
    /// Structured criss-cross mesh of `nx` x `ny` quads, two triangles each.
    pub fn uniform(rect: Rect, nx: usize, ny: usize, periodic: bool) -> Result<TriMesh> {
        Rect::new(rect.x0, rect.y0, rect.lx, rect.ly)?;
        if nx == 0 || ny == 0 {
            return Err(Error::Mesh("need at least one quad per side".into()));
        }
        let grid = RootGrid {
            rect,
            nx,
            ny,
            periodic,
        };
        let elems = (0..(2 * nx * ny) as u32)
            .map(|r| (ElemId::root(r), grid.root_triangle(r)))
            .collect();
        Self::from_elems(grid, elems)
    }

    /// `n` x `n` periodic mesh of the unit cell.
    pub fn unit_cell(n: usize) -> Result<TriMesh> {
        Self::uniform(Rect::unit_cell(), n, n, true)
    }

    pub(crate) fn from_elems(grid: RootGrid, elems: Vec<(ElemId, [Key; 3])>) -> Result<TriMesh> {
        let mut vmap: HashMap<Key, usize> = HashMap::with_capacity(elems.len());
        let mut dmap: HashMap<Key, usize> = HashMap::with_capacity(elems.len());
        let mut emap: HashMap<(Key, Key), usize> = HashMap::with_capacity(2 * elems.len());
        let mut keys = Vec::new();
        let mut vertex_dof = Vec::new();
        let mut triangles = Vec::with_capacity(elems.len());
        let mut ids = Vec::with_capacity(elems.len());
        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_keys: Vec<(Key, Key)> = Vec::new();
        let mut elem_edges = Vec::with_capacity(elems.len());
        let mut elem_signs = Vec::with_capacity(elems.len());
        let mut index = HashMap::with_capacity(elems.len());

        for (t, (id, tk)) in elems.iter().enumerate() {
            let mut tri = [0usize; 3];
            for (l, k) in tk.iter().enumerate() {
                tri[l] = *vmap.entry(*k).or_insert_with(|| {
                    keys.push(*k);
                    let nd = dmap.len();
                    vertex_dof.push(*dmap.entry(grid.wrap(*k)).or_insert(nd));
                    keys.len() - 1
                });
            }
            let mut ee = [0usize; 3];
            let mut ss = [0.0; 3];
            for l in 0..3 {
                let (p, q) = (tri[(l + 1) % 3], tri[(l + 2) % 3]);
                let (ek, fwd) = grid.edge_key(keys[p], keys[q]);
                let e = *emap.entry(ek).or_insert_with(|| {
                    edges.push(Edge {
                        v: if fwd { [p, q] } else { [q, p] },
                        elems: [NONE, NONE],
                        side: None,
                    });
                    edge_keys.push(ek);
                    edges.len() - 1
                });
                let slot = if edges[e].elems[0] == NONE { 0 } else { 1 };
                if edges[e].elems[slot] != NONE {
                    return Err(Error::Mesh(format!("edge shared by more than two elements ({id:?})")));
                }
                edges[e].elems[slot] = t;
                ee[l] = e;
                ss[l] = if fwd { 1.0 } else { -1.0 };
            }
            triangles.push(tri);
            ids.push(*id);
            elem_edges.push(ee);
            elem_signs.push(ss);
            if index.insert(*id, t).is_some() {
                return Err(Error::Mesh(format!("duplicate element {id:?}")));
            }
        }

        let vertices: Vec<[f64; 2]> = keys.iter().map(|k| grid.coords(*k)).collect();
        let period = grid.period();
        for (e, edge) in edges.iter_mut().enumerate() {
            if edge.elems[1] != NONE {
                continue;
            }
            if grid.periodic {
                return Err(Error::Mesh(format!("periodic mesh has unmatched edge {e}")));
            }
            let (a, b) = (keys[edge.v[0]], keys[edge.v[1]]);
            edge.side = Some(if a[0] == 0 && b[0] == 0 {
                Side::Left
            } else if a[0] == period[0] && b[0] == period[0] {
                Side::Right
            } else if a[1] == 0 && b[1] == 0 {
                Side::Bottom
            } else if a[1] == period[1] && b[1] == period[1] {
                Side::Top
            } else {
                return Err(Error::Mesh(format!("nonconforming mesh: interior edge {e} has one element")));
            });
        }

        let mut periodic_map = PeriodicMap::default();
        if grid.periodic {
            periodic_map.x = vec![None; keys.len()];
            periodic_map.y = vec![None; keys.len()];
            for (v, k) in keys.iter().enumerate() {
                for (axis, map) in [(0usize, &mut periodic_map.x), (1, &mut periodic_map.y)] {
                    let partner = if k[axis] == 0 {
                        let mut p = *k;
                        p[axis] = period[axis];
                        Some(p)
                    } else if k[axis] == period[axis] {
                        let mut p = *k;
                        p[axis] = 0;
                        Some(p)
                    } else {
                        None
                    };
                    if let Some(p) = partner {
                        map[v] = Some(*vmap.get(&p).ok_or_else(|| {
                            Error::Mesh(format!("periodic trace mismatch at vertex {v}"))
                        })?);
                    }
                }
            }
        }

        let mut mesh = TriMesh {
            grid,
            keys,
            vertices,
            triangles,
            ids,
            edges,
            elem_edges,
            elem_signs,
            n_dofs: dmap.len(),
            vertex_dof,
            periodic_map,
            areas: Vec::new(),
            h_max: 0.0,
            h_min: f64::INFINITY,
            index,
        };
        mesh.areas = (0..mesh.n_elems()).map(|t| mesh.signed_area(t)).collect();
        if let Some(t) = mesh.areas.iter().position(|&a| a <= 0.0) {
            return Err(Error::Mesh(format!("element {t} has nonpositive area")));
        }
        for t in 0..mesh.n_elems() {
            let d = mesh.diameter(t);
            mesh.h_max = mesh.h_max.max(d);
            mesh.h_min = mesh.h_min.min(d);
        }
        Ok(mesh)
    }

    pub fn n_elems(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.grid.periodic
    }

    pub fn key(&self, v: usize) -> Key {
        self.keys[v]
    }

    pub fn elem_keys(&self, t: usize) -> [Key; 3] {
        self.triangles[t].map(|v| self.keys[v])
    }

    pub fn find(&self, id: ElemId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Index of the element of this mesh that equals or contains `id`.
    pub fn ancestor_of(&self, id: ElemId) -> Option<usize> {
        (0..=id.level).rev().find_map(|l| self.find(id.ancestor(l)))
    }

    pub fn points(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.points(t);
        (0..3)
            .map(|k| dist(p[(k + 1) % 3], p[(k + 2) % 3]))
            .fold(0.0, f64::max)
    }

    pub fn min_edge(&self, t: usize) -> f64 {
        let p = self.points(t);
        (0..3)
            .map(|k| dist(p[(k + 1) % 3], p[(k + 2) % 3]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].v;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].v.map(|v| self.vertices[v]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Gradients of the three barycentric coordinates on element `t`.
    pub fn grad_bary(&self, t: usize) -> [[f64; 2]; 3] {
        let p = self.points(t);
        let two_a = 2.0 * self.areas[t];
        let mut g = [[0.0; 2]; 3];
        for k in 0..3 {
            let (b, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            g[k] = [(b[1] - c[1]) / two_a, (c[0] - b[0]) / two_a];
        }
        g
    }

    /// Outward unit normal times length of local edge `k` (opposite vertex `k`).
    pub fn scaled_normal(&self, t: usize, k: usize) -> [f64; 2] {
        let p = self.points(t);
        let (b, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        [c[1] - b[1], b[0] - c[0]]
    }

    /// Barycentric coordinates of `x` with respect to element `t`.
    pub fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        bary(self.points(t), x)
    }

    /// Elements whose closure contains a vertex, grouped per vertex.
    pub fn vertex_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }

    /// Refines every marked element twice (four children each), plus the
    /// conformity closure.
    pub fn refine_marked(&self, marked: &[usize]) -> Result<TriMesh> {
        refine::refine_marked(self, marked)
    }

    /// One newest-vertex bisection of every marked element, plus closure.
    pub fn bisect(&self, marked: &[usize]) -> Result<TriMesh> {
        refine::bisect(self, marked)
    }

    /// Element containing `x` (wrapped into the cell for periodic meshes)
    /// and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        transfer::locate(self, x)
    }

    pub fn into_arc(self) -> Arc<TriMesh> {
        Arc::new(self)
    }

    /// Legacy-VTK unstructured grid with optional cell and point data.
    pub fn write_vtk<W: std::io::Write>(
        &self,
        w: &mut W,
        cell_data: &[(&str, &[f64])],
        point_data: &[(&str, &[f64])],
    ) -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "twoscale mesh")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", self.n_vertices())?;
        for p in &self.vertices {
            writeln!(w, "{} {} 0", p[0], p[1])?;
        }
        writeln!(w, "CELLS {} {}", self.n_elems(), 4 * self.n_elems())?;
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "CELL_TYPES {}", self.n_elems())?;
        for _ in 0..self.n_elems() {
            writeln!(w, "5")?;
        }
        if !cell_data.is_empty() {
            writeln!(w, "CELL_DATA {}", self.n_elems())?;
            for (name, vals) in cell_data {
                write_scalars(w, name, vals)?;
            }
        }
        if !point_data.is_empty() {
            writeln!(w, "POINT_DATA {}", self.n_vertices())?;
            for (name, vals) in point_data {
                write_scalars(w, name, vals)?;
            }
        }
        Ok(())
    }
}

fn write_scalars<W: std::io::Write>(w: &mut W, name: &str, vals: &[f64]) -> std::io::Result<()> {
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in vals {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Barycentric coordinates of the midpoint of local edge `k`.
pub fn bary_mid(k: usize) -> [f64; 3] {
    let mut l = [0.5; 3];
    l[k] = 0.0;
    l
}

pub(crate) fn bary(p: [[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = p;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (x[1] - a[1]) * (c[0] - a[0])) / det;
    let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cell_counts() {
        let m = TriMesh::unit_cell(10).unwrap();
        assert_eq!(m.n_elems(), 200);
        assert_eq!(m.n_dofs, 100);
        assert_eq!(m.n_edges(), 300);
        assert!((m.h_max - 0.1414213562373095).abs() < 1e-12);
        let m = TriMesh::unit_cell(60).unwrap();
        assert_eq!(m.n_elems(), 7200);
        assert!((m.h_max - 2.36e-2).abs() < 1e-4);
    }

    #[test]
    fn single_quad() {
        let m = TriMesh::uniform(Rect::new(0.0, 0.0, 1.0, 1.0).unwrap(), 1, 1, false).unwrap();
        assert_eq!(m.n_elems(), 2);
        for a in &m.areas {
            assert!((a - 0.5).abs() < 1e-15);
        }
        assert_eq!(m.edges.iter().filter(|e| e.is_boundary()).count(), 4);
    }

    #[test]
    fn degenerate_rect_rejected() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(TriMesh::uniform(Rect::unit_cell(), 0, 3, false).is_err());
    }

    #[test]
    fn one_by_one_torus() {
        let m = TriMesh::unit_cell(1).unwrap();
        assert_eq!(m.n_dofs, 1);
        assert_eq!(m.n_edges(), 3);
        for e in &m.edges {
            assert!(e.elems.iter().all(|&t| t != NONE));
        }
    }

    #[test]
    fn periodic_map_involution() {
        let m = TriMesh::unit_cell(4).unwrap().refine_marked(&[0, 7, 31]).unwrap();
        for map in [&m.periodic_map.x, &m.periodic_map.y] {
            for (v, p) in map.iter().enumerate() {
                if let Some(p) = p {
                    assert_eq!(map[*p], Some(v));
                    assert_ne!(*p, v);
                    assert_eq!(m.vertex_dof[*p], m.vertex_dof[v]);
                }
            }
        }
    }

    #[test]
    fn scaled_normals_are_outward() {
        let m = TriMesh::unit_cell(3).unwrap();
        for t in 0..m.n_elems() {
            let c = m.centroid(t);
            let p = m.points(t);
            for k in 0..3 {
                let n = m.scaled_normal(t, k);
                let mid = [
                    0.5 * (p[(k + 1) % 3][0] + p[(k + 2) % 3][0]),
                    0.5 * (p[(k + 1) % 3][1] + p[(k + 2) % 3][1]),
                ];
                assert!(n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) > 0.0);
            }
        }
    }

    #[test]
    fn elem_id_genealogy() {
        let r = ElemId::root(3);
        let g = r.child(1).child(0).child(1);
        assert_eq!(g.level, 3);
        assert_eq!(g.parent().unwrap().parent().unwrap(), r.child(1));
        assert!(r.contains(g));
        assert!(!r.child(0).contains(g));
        assert!(g.contains(g));
    }

    #[test]
    fn vtk_dump_has_sections() {
        let m = TriMesh::unit_cell(2).unwrap();
        let mut buf = Vec::new();
        let cd = vec![1.0; m.n_elems()];
        m.write_vtk(&mut buf, &[("a", &cd)], &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("POINTS 9 double"));
        assert!(s.contains("CELLS 8 32"));
        assert!(s.contains("CELL_DATA 8"));
    }
}
