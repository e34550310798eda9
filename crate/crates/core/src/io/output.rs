//! CSV tables and legacy-VTK snapshots.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::macroscale::centroid_velocity;

use super::driver::{CellRow, ErrorRow, RunReport, Snapshot, SweepRow};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn row<I: IntoIterator<Item = String>>(w: &mut csv::Writer<File>, r: I) -> Result<()> {
    w.write_record(r).map_err(csv_err)
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

/// Per-step summary rows.
pub fn write_steps(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    row(
        &mut w,
        [
            "n", "t", "iters", "mean_micro_iters", "micro_solves", "active", "active_fraction", "frozen", "u_min",
            "u_max", "por_min", "por_max", "mean_micro_elems",
        ]
        .map(String::from),
    )?;
    for s in &report.steps {
        row(
            &mut w,
            [
                s.n.to_string(),
                fmt(s.t),
                s.iters.to_string(),
                fmt(s.mean_micro_iters),
                s.micro_solves.to_string(),
                s.n_active.to_string(),
                fmt(s.n_active as f64 / report.n_points as f64),
                s.n_frozen.to_string(),
                fmt(s.u_min),
                fmt(s.u_max),
                fmt(s.por_min),
                fmt(s.por_max),
                fmt(s.mean_micro_elems),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// eps_M of every coupling iteration.
pub fn write_convergence(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, ["n", "t", "i", "eps_M"].map(String::from))?;
    for s in &report.steps {
        for (i, e) in s.eps.iter().enumerate() {
            row(&mut w, [s.n.to_string(), fmt(s.t), (i + 1).to_string(), fmt(*e)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Percentage of steps each macro element was active.
pub fn write_activity(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    row(&mut w, ["elem", "x", "y", "active_steps", "percent"].map(String::from))?;
    let steps = report.steps.len();
    for (t, &a) in report.activity.iter().enumerate() {
        let c = if report.single_cell { [0.0, 0.0] } else { report.macro_mesh.centroid(t) };
        let pct = if steps == 0 { 0.0 } else { 100.0 * a as f64 / steps as f64 };
        row(&mut w, [t.to_string(), fmt(c[0]), fmt(c[1]), a.to_string(), fmt(pct)])?;
    }
    w.flush()?;
    Ok(())
}

/// Column averages over the macro mesh columns.
pub fn write_profile(report: &RunReport, s: &Snapshot, path: &Path) -> Result<()> {
    let m = &report.macro_mesh;
    let nx = report.nx.max(1);
    let (x0, lx) = {
        let xs = m.vertices.iter().map(|v| v[0]);
        let lo = xs.clone().fold(f64::INFINITY, f64::min);
        (lo, xs.fold(f64::NEG_INFINITY, f64::max) - lo)
    };
    const COLS: usize = 9;
    let mut sums = vec![[0.0; COLS]; nx];
    let mut area = vec![0.0; nx];
    let vel = centroid_velocity(m, &s.q);
    let has_k = s.k.iter().all(Option::is_some);
    for t in 0..m.n_elems() {
        let c = m.centroid(t);
        let j = (((c[0] - x0) / lx * nx as f64).floor() as usize).min(nx - 1);
        let k = s.k[t].unwrap_or([[f64::NAN; 2]; 2]);
        let vals = [s.u[t], s.p[t], s.porosity[t], s.a[t][0][0], s.a[t][1][1], k[0][0], k[1][1], vel[t][0], vel[t][1]];
        let w = m.areas[t];
        area[j] += w;
        for (acc, v) in sums[j].iter_mut().zip(vals) {
            *acc += w * v;
        }
    }
    let mut w = writer(path)?;
    row(
        &mut w,
        ["x", "u", "p", "porosity", "A11", "A22", "K11", "K22", "qx", "qy"].map(String::from),
    )?;
    for j in 0..nx {
        let mut r = vec![fmt(x0 + (j as f64 + 0.5) * lx / nx as f64)];
        for (c, v) in sums[j].iter().enumerate() {
            let val = v / area[j];
            r.push(if (c == 5 || c == 6) && !has_k { String::new() } else { fmt(val) });
        }
        row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

/// Macro fields as VTK cell data.
pub fn write_macro_vtk(report: &RunReport, s: &Snapshot, path: &Path) -> Result<()> {
    let m = &report.macro_mesh;
    let comp = |f: &dyn Fn(usize) -> f64| (0..m.n_elems()).map(f).collect::<Vec<f64>>();
    let vel = centroid_velocity(m, &s.q);
    let mut data: Vec<(String, Vec<f64>)> = vec![
        ("u".into(), s.u.clone()),
        ("p".into(), s.p.clone()),
        ("porosity".into(), s.porosity.clone()),
        ("A11".into(), comp(&|t| s.a[t][0][0])),
        ("A12".into(), comp(&|t| s.a[t][0][1])),
        ("A22".into(), comp(&|t| s.a[t][1][1])),
        ("qx".into(), comp(&|t| vel[t][0])),
        ("qy".into(), comp(&|t| vel[t][1])),
    ];
    if s.k.iter().all(Option::is_some) {
        let k = |i: usize, j: usize| comp(&|t| s.k[t].unwrap()[i][j]);
        data.push(("K11".into(), k(0, 0)));
        data.push(("K12".into(), k(0, 1)));
        data.push(("K22".into(), k(1, 1)));
        data.push(("log10_K11".into(), comp(&|t| s.k[t].unwrap()[0][0].log10())));
    }
    let refs: Vec<(&str, &[f64])> = data.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    let mut f = BufWriter::new(File::create(path)?);
    m.write_vtk(&mut f, &refs, &[])?;
    Ok(())
}

/// Every file of a run; returns the paths written.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let mut put = |name: String| {
        let p = dir.join(name);
        out.push(p.clone());
        p
    };
    write_steps(report, &put("steps.csv".into()))?;
    write_convergence(report, &put("convergence.csv".into()))?;
    if !report.single_cell {
        write_activity(report, &put("activity.csv".into()))?;
    }
    for s in &report.snapshots {
        if !report.single_cell {
            write_macro_vtk(report, s, &put(format!("macro_{:04}.vtk", s.n)))?;
            write_profile(report, s, &put(format!("profile_{:04}.csv", s.n)))?;
        }
        for (k, (x, phi)) in s.micro.iter().enumerate() {
            let name = if report.single_cell {
                format!("cell_{:04}.vtk", s.n)
            } else {
                format!("micro_p{k}_{:04}.vtk", s.n)
            };
            let path = put(name);
            let mut f = BufWriter::new(File::create(&path)?);
            let vals = phi.vertex_values();
            phi.mesh.write_vtk(&mut f, &[], &[("phi", &vals)])?;
            log::debug!("micro field at {x:?} written to {}", path.display());
        }
    }
    Ok(out)
}

/// Table of comparison rows, one per label.
pub fn write_errors(rows: &[(String, ErrorRow)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    if let Some((_, first)) = rows.first() {
        row(&mut w, std::iter::once("value".to_string()).chain(first.header().iter().map(|s| s.to_string())))?;
    }
    for (label, r) in rows {
        row(&mut w, std::iter::once(label.clone()).chain(r.values().into_iter().map(fmt)))?;
    }
    w.flush()?;
    Ok(())
}

/// One summary row per sweep value.
pub fn write_sweep(key: &str, rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    row(
        &mut w,
        [key, "steps", "mean_coupling_iters", "mean_micro_iters", "mean_active", "mean_micro_elems", "seconds"]
            .map(String::from),
    )?;
    for r in rows {
        let rep = &r.report;
        let iters = rep.steps.iter().map(|s| s.iters as f64).sum::<f64>() / rep.steps.len().max(1) as f64;
        row(
            &mut w,
            [
                r.value.clone(),
                rep.steps.len().to_string(),
                fmt(iters),
                fmt(rep.mean_micro_iters()),
                fmt(rep.mean_active()),
                fmt(rep.mean_elements()),
                format!("{:.3}", rep.elapsed.as_secs_f64()),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cells(rows: &[CellRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    row(
        &mut w,
        ["cell", "elements", "porosity", "A11", "A12", "A22", "K11", "K12", "K22"].map(String::from),
    )?;
    for c in rows {
        let k = c.k.map(|k| [k[0][0], k[0][1], k[1][1]].map(fmt)).unwrap_or_default();
        row(
            &mut w,
            [c.label.clone(), c.elements.to_string(), fmt(c.porosity), fmt(c.a[0][0]), fmt(c.a[0][1]), fmt(c.a[1][1])]
                .into_iter()
                .chain(k),
        )?;
    }
    w.flush()?;
    Ok(())
}
