//! Mesh union, field transfer and point location over shared genealogy.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::refine::children;
use super::{bary, ElemId, Family, Field, Key, TriMesh};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Triplets};

fn check_family(a: &TriMesh, b: &TriMesh) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Genealogy(format!(
            "root grids differ: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    Ok(())
}

/// True when every element of `fine` lies inside an element of `coarse`.
pub fn refines(fine: &TriMesh, coarse: &TriMesh) -> bool {
    fine.grid == coarse.grid && fine.ids.iter().all(|&id| coarse.ancestor_of(id).is_some())
}

/// Coarsest common refinement of two meshes of the same family.
pub fn union(a: &TriMesh, b: &TriMesh) -> Result<TriMesh> {
    check_family(a, b)?;
    if refines(a, b) {
        return Ok(a.clone());
    }
    if refines(b, a) {
        return Ok(b.clone());
    }
    let mut all: HashMap<ElemId, [Key; 3]> = HashMap::with_capacity(a.n_elems() + b.n_elems());
    let mut strict: HashSet<ElemId> = HashSet::new();
    for m in [a, b] {
        for t in 0..m.n_elems() {
            let id = m.ids[t];
            all.entry(id).or_insert_with(|| m.elem_keys(t));
            for l in 0..id.level {
                strict.insert(id.ancestor(l));
            }
        }
    }
    let mut leaves: Vec<(ElemId, [Key; 3])> = all
        .into_iter()
        .filter(|(id, _)| !strict.contains(id))
        .collect();
    leaves.sort_by_key(|(id, _)| *id);
    TriMesh::from_elems(a.grid, leaves)
}

/// Maps `field` onto `dst`: exact when `dst` refines the source mesh,
/// L2-orthogonal projection otherwise. Supports P0 and P1.
pub fn project(field: &Field, dst: &Arc<TriMesh>) -> Result<Field> {
    let src = &field.mesh;
    check_family(src, dst)?;
    if Arc::ptr_eq(src, dst) {
        return Ok(field.clone());
    }
    if refines(dst, src) {
        return match field.family {
            Family::P0 => {
                let values = dst
                    .ids
                    .iter()
                    .map(|&id| field.values[src.ancestor_of(id).unwrap()])
                    .collect();
                Field::new(dst.clone(), Family::P0, values)
            }
            Family::P1 => interpolate(field, dst),
            f => Err(Error::Mesh(format!("projection of {f:?} fields is not supported"))),
        };
    }
    let u = union(src, dst)?;
    match field.family {
        Family::P0 => {
            let mut acc = vec![0.0; dst.n_elems()];
            for t in 0..u.n_elems() {
                let s = src.ancestor_of(u.ids[t]).unwrap();
                let d = dst.ancestor_of(u.ids[t]).unwrap();
                acc[d] += u.areas[t] * field.values[s];
            }
            for (d, a) in acc.iter_mut().enumerate() {
                *a /= dst.areas[d];
            }
            Field::new(dst.clone(), Family::P0, acc)
        }
        Family::P1 => {
            let n = dst.n_dofs;
            let mut rhs = vec![0.0; n];
            for t in 0..u.n_elems() {
                let s = src.ancestor_of(u.ids[t]).unwrap();
                let d = dst.ancestor_of(u.ids[t]).unwrap();
                let p = u.points(t);
                let sp = src.points(s);
                let dp = dst.points(d);
                let dd = dst.triangles[d].map(|v| dst.vertex_dof[v]);
                let w = u.areas[t] / 3.0;
                for k in 0..3 {
                    let x = [
                        0.5 * (p[(k + 1) % 3][0] + p[(k + 2) % 3][0]),
                        0.5 * (p[(k + 1) % 3][1] + p[(k + 2) % 3][1]),
                    ];
                    let fv = field.eval(s, bary(sp, x));
                    let l = bary(dp, x);
                    for j in 0..3 {
                        rhs[dd[j]] += w * fv * l[j];
                    }
                }
            }
            let mass = p1_mass(dst);
            let values = Cholesky::factor(&mass, "projection")?.solve(&rhs);
            Field::new(dst.clone(), Family::P1, values)
        }
        f => Err(Error::Mesh(format!("projection of {f:?} fields is not supported"))),
    }
}

/// Nodal interpolation of a P1 field onto `dst` (exact on shared vertices;
/// bound preserving).
pub fn interpolate(field: &Field, dst: &Arc<TriMesh>) -> Result<Field> {
    if field.family != Family::P1 {
        return Err(Error::Mesh("interpolation needs a P1 field".into()));
    }
    let src = &field.mesh;
    check_family(src, dst)?;
    let mut values = vec![f64::NAN; dst.n_dofs];
    let mut by_key: Option<HashMap<Key, usize>> = None;
    for t in 0..dst.n_elems() {
        let tri = dst.triangles[t];
        if tri.iter().all(|&v| !values[dst.vertex_dof[v]].is_nan()) {
            continue;
        }
        match src.ancestor_of(dst.ids[t]) {
            Some(s) => {
                let sp = src.points(s);
                for &v in &tri {
                    let d = dst.vertex_dof[v];
                    if values[d].is_nan() {
                        values[d] = field.eval(s, bary(sp, dst.vertices[v]));
                    }
                }
            }
            None => {
                let map = by_key.get_or_insert_with(|| {
                    (0..src.n_vertices()).map(|v| (src.key(v), v)).collect()
                });
                for &v in &tri {
                    let d = dst.vertex_dof[v];
                    if values[d].is_nan() {
                        let sv = map.get(&dst.key(v)).ok_or_else(|| {
                            Error::Genealogy("destination vertex missing from the finer source".into())
                        })?;
                        values[d] = field.values[src.vertex_dof[*sv]];
                    }
                }
            }
        }
    }
    Field::new(dst.clone(), Family::P1, values)
}

/// Consistent P1 mass matrix (periodic dofs merged).
pub fn p1_mass(mesh: &TriMesh) -> Triplets {
    let mut m = Triplets::with_capacity(mesh.n_dofs, 9 * mesh.n_elems());
    for t in 0..mesh.n_elems() {
        let d = mesh.triangles[t].map(|v| mesh.vertex_dof[v]);
        let a = mesh.areas[t];
        for i in 0..3 {
            for j in 0..3 {
                m.add(d[i], d[j], if i == j { a / 6.0 } else { a / 12.0 });
            }
        }
    }
    m
}

pub(super) fn locate(mesh: &TriMesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
    let g = &mesh.grid;
    let hx = g.rect.lx / g.nx as f64;
    let hy = g.rect.ly / g.ny as f64;
    let mut fx = (x[0] - g.rect.x0) / hx;
    let mut fy = (x[1] - g.rect.y0) / hy;
    if g.periodic {
        fx = fx.rem_euclid(g.nx as f64);
        fy = fy.rem_euclid(g.ny as f64);
    } else if fx < -1e-9 || fy < -1e-9 || fx > g.nx as f64 + 1e-9 || fy > g.ny as f64 + 1e-9 {
        return None;
    }
    let i = (fx.floor() as usize).min(g.nx - 1);
    let j = (fy.floor() as usize).min(g.ny - 1);
    let (u, v) = (fx - i as f64, fy - j as f64);
    let slash = (i + j) % 2 == 0;
    let second = if slash { v > u } else { u + v > 1.0 };
    let r = (2 * (j * g.nx + i) + second as usize) as u32;
    let xw = [g.rect.x0 + fx * hx, g.rect.y0 + fy * hy];

    let mut id = ElemId::root(r);
    let mut keys = g.root_triangle(r);
    loop {
        if let Some(t) = mesh.find(id) {
            return Some((t, bary(mesh.points(t), xw)));
        }
        if id.level >= 62 {
            return None;
        }
        let ch = children(id, keys);
        let score = |k: &[Key; 3]| {
            let l = bary(k.map(|p| g.coords(p)), xw);
            l[0].min(l[1]).min(l[2])
        };
        let pick = if score(&ch[0].1) >= score(&ch[1].1) { 0 } else { 1 };
        (id, keys) = ch[pick];
    }
}
