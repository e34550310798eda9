//! Experiment drivers: runs, reference comparisons, parameter sweeps and
//! single-cell tensor evaluation.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::cell::{effective_update, Mat2};
use crate::coupling::{coupling_dt_condition, MicroState, Simulation, StepStats};
use crate::error::{Error, Result};
use crate::mesh::{Field, TriMesh};

use super::config::SimConfig;

/// Committed state at one time level.
#[derive(Clone, Debug)]
pub struct Level {
    pub n: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub porosity: Vec<f64>,
    pub n_active: usize,
    pub mean_micro_elems: f64,
    /// Phase field of a single-cell run.
    pub phi: Option<Field>,
}

/// Field output at one time level.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub n: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub porosity: Vec<f64>,
    pub a: Vec<Mat2>,
    pub k: Vec<Option<Mat2>>,
    /// Micro fields at the probe points (the single cell for cell runs).
    pub micro: Vec<([f64; 2], Field)>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub single_cell: bool,
    pub macro_mesh: Arc<TriMesh>,
    pub nx: usize,
    pub dt: f64,
    pub n_points: usize,
    pub steps: Vec<StepStats>,
    /// Levels 0 to N.
    pub levels: Vec<Level>,
    pub snapshots: Vec<Snapshot>,
    /// Steps each point was active.
    pub activity: Vec<usize>,
    pub elapsed: Duration,
}

impl RunReport {
    /// Average active count over the steps.
    pub fn mean_active(&self) -> f64 {
        mean(self.steps.iter().map(|s| s.n_active as f64))
    }

    /// Average micro element count per point over levels 1 to N.
    pub fn mean_elements(&self) -> f64 {
        mean(self.levels.iter().skip(1).map(|l| l.mean_micro_elems))
    }

    /// Micro iterations per solve over the whole run.
    pub fn mean_micro_iters(&self) -> f64 {
        let solves: usize = self.steps.iter().map(|s| s.micro_solves).sum();
        let iters: f64 = self.steps.iter().map(|s| s.mean_micro_iters * s.micro_solves as f64).sum();
        if solves == 0 {
            0.0
        } else {
            iters / solves as f64
        }
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn level(sim: &Simulation) -> Level {
    let np = sim.micro.len();
    Level {
        n: sim.n,
        t: sim.t,
        u: sim.u.clone(),
        porosity: sim.porosity.clone(),
        n_active: sim.active.n_active(),
        mean_micro_elems: sim.micro.iter().map(|m| m.phi.mesh.n_elems() as f64).sum::<f64>() / np as f64,
        phi: sim.problem.fixed_u.map(|_| sim.micro[0].phi.clone()),
    }
}

fn snapshot(sim: &Simulation, probes: &[[f64; 2]]) -> Snapshot {
    let micro = if sim.problem.fixed_u.is_some() {
        vec![([0.0, 0.0], sim.micro[0].phi.clone())]
    } else {
        probes
            .iter()
            .filter_map(|&x| sim.problem.macro_mesh.locate(x).map(|(t, _)| (x, sim.micro[t].phi.clone())))
            .collect()
    };
    Snapshot {
        n: sim.n,
        t: sim.t,
        u: sim.u.clone(),
        p: sim.p.clone(),
        q: sim.q.clone(),
        porosity: sim.porosity.clone(),
        a: sim.micro.iter().map(|m: &MicroState| m.a).collect(),
        k: sim.micro.iter().map(|m| m.k).collect(),
        micro,
    }
}

/// Runs the configured problem and collects the report in memory.
pub fn simulate(cfg: &SimConfig) -> Result<RunReport> {
    let start = Instant::now();
    let pb = cfg.problem.clone();
    if let Some(e) = cfg.estimates {
        let v = coupling_dt_condition(pb.dt, e.m, &pb.params, e.c_u, e.c_a, e.a_m, e.phi_m, e.u_bar);
        if v < 1.0 {
            log::info!("coupling time-step condition holds for the given estimates ({v:.3e} < 1)");
        } else {
            log::warn!("coupling time-step condition fails for the given estimates ({v:.3e} >= 1)");
        }
    }
    let n_steps = pb.n_steps();
    let snap_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|t| (t / pb.dt).round() as usize)
        .chain([0, n_steps])
        .collect();
    let mut sim = Simulation::new(pb)?;
    let mut report = RunReport {
        single_cell: cfg.is_single_cell(),
        macro_mesh: sim.problem.macro_mesh.clone(),
        nx: cfg.nx,
        dt: sim.problem.dt,
        n_points: sim.micro.len(),
        steps: Vec::with_capacity(n_steps),
        levels: vec![level(&sim)],
        snapshots: vec![snapshot(&sim, &cfg.probe_points)],
        activity: Vec::new(),
        elapsed: Duration::ZERO,
    };
    while !sim.is_done() {
        let s = sim.step()?;
        log::info!(
            "step {}/{n_steps} t={:.4} iters={} active={} u=[{:.4e}, {:.6}] porosity=[{:.4}, {:.4}]",
            s.n,
            s.t,
            s.iters,
            s.n_active,
            s.u_min,
            s.u_max,
            s.por_min,
            s.por_max
        );
        report.steps.push(s);
        report.levels.push(level(&sim));
        if snap_steps.contains(&sim.n) {
            report.snapshots.push(snapshot(&sim, &cfg.probe_points));
        }
    }
    report.activity = sim.activity.clone();
    report.elapsed = start.elapsed();
    Ok(report)
}

/// Errors of a run against a reference run.
#[derive(Clone, Debug, PartialEq)]
pub enum ErrorRow {
    /// Single-cell comparison of the phase field.
    Micro {
        elements: f64,
        pct_elements: f64,
        e_phi: f64,
        pct_e_phi: f64,
    },
    /// Macro comparison of concentration and porosity.
    Macro {
        active: f64,
        pct_active: f64,
        e_u: f64,
        pct_e_u: f64,
        e_por: f64,
        pct_e_por: f64,
    },
}

impl ErrorRow {
    pub fn header(&self) -> &'static [&'static str] {
        match self {
            ErrorRow::Micro { .. } => &["elements", "pct_elements", "E_phi", "pct_E_phi"],
            ErrorRow::Macro { .. } => &["active", "pct_active", "E_u", "pct_E_u", "E_por", "pct_E_por"],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            ErrorRow::Micro {
                elements,
                pct_elements,
                e_phi,
                pct_e_phi,
            } => vec![elements, pct_elements, e_phi, pct_e_phi],
            ErrorRow::Macro {
                active,
                pct_active,
                e_u,
                pct_e_u,
                e_por,
                pct_e_por,
            } => vec![active, pct_active, e_u, pct_e_u, e_por, pct_e_por],
        }
    }
}

/// Space-time L2 norm `sqrt(sum_n dt sum_T w_T e_T^2)` over levels 1 to N.
pub fn space_time_l2(dt: f64, weights: &[f64], errs: &[Vec<f64>]) -> f64 {
    errs.iter()
        .map(|e| dt * e.iter().zip(weights).map(|(x, w)| w * x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Nodal values of `phi` at the dofs of `target`, found by point location.
pub fn point_interpolate(phi: &Field, target: &Arc<TriMesh>) -> Result<Field> {
    let mut values = vec![f64::NAN; target.n_dofs];
    for (v, x) in target.vertices.iter().enumerate() {
        let d = target.vertex_dof[v];
        if values[d].is_nan() {
            let (t, l) = phi
                .mesh
                .locate(*x)
                .ok_or_else(|| Error::Mesh(format!("point {x:?} outside the source mesh")))?;
            values[d] = phi.eval(t, l);
        }
    }
    Field::new(target.clone(), crate::mesh::Family::P1, values)
}

/// Exact squared L2 norm of a P1 field.
fn p1_norm2(f: &Field) -> f64 {
    let m = &f.mesh;
    (0..m.n_elems())
        .map(|t| {
            let e = f.nodal(t);
            let s = e[0] + e[1] + e[2];
            m.areas[t] / 12.0 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + s * s)
        })
        .sum()
}

fn pct(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}

/// Table columns of `run` measured against `reference`.
pub fn compare(run: &RunReport, reference: &RunReport) -> Result<ErrorRow> {
    if run.single_cell != reference.single_cell {
        return Err(Error::Config(vec!["a single-cell run needs a single-cell reference".into()]));
    }
    if run.levels.len() != reference.levels.len() || (run.dt - reference.dt).abs() > 1e-14 {
        return Err(Error::Config(vec![format!(
            "time grids differ: {} levels at dt = {} against {} levels at dt = {}",
            run.levels.len(),
            run.dt,
            reference.levels.len(),
            reference.dt
        )]));
    }
    let dt = run.dt;
    if run.single_cell {
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        let mut ref_elems = 0.0;
        for (a, r) in run.levels.iter().zip(&reference.levels).skip(1) {
            let (Some(pa), Some(pr)) = (&a.phi, &r.phi) else {
                return Err(Error::Config(vec!["single-cell levels without phase fields".into()]));
            };
            let ph = point_interpolate(pa, &pr.mesh)?;
            let diff = Field::new(
                pr.mesh.clone(),
                crate::mesh::Family::P1,
                pr.values.iter().zip(&ph.values).map(|(x, y)| x - y).collect(),
            )?;
            err2 += dt * p1_norm2(&diff);
            ref2 += dt * p1_norm2(pr);
            ref_elems += pr.mesh.n_elems() as f64;
        }
        let steps = (run.levels.len() - 1).max(1) as f64;
        let elements = run.mean_elements();
        let e_phi = err2.sqrt();
        return Ok(ErrorRow::Micro {
            elements,
            pct_elements: pct(elements, ref_elems / steps),
            e_phi,
            pct_e_phi: pct(e_phi, ref2.sqrt()),
        });
    }
    let (ma, mr) = (&run.macro_mesh, &reference.macro_mesh);
    let same = ma.n_elems() == mr.n_elems()
        && ma.vertices.len() == mr.vertices.len()
        && ma.vertices.iter().zip(&mr.vertices).all(|(p, q)| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    if !same {
        return Err(Error::Config(vec!["macro domains or meshes differ".into()]));
    }
    let w = &mr.areas;
    let diffs = |f: fn(&Level) -> &Vec<f64>| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        run.levels
            .iter()
            .zip(&reference.levels)
            .skip(1)
            .map(|(a, r)| (f(a).iter().zip(f(r)).map(|(x, y)| y - x).collect(), f(r).clone()))
            .unzip()
    };
    let (du, ur) = diffs(|l| &l.u);
    let (dp, pr) = diffs(|l| &l.porosity);
    let (e_u, e_por) = (space_time_l2(dt, w, &du), space_time_l2(dt, w, &dp));
    let active = run.mean_active();
    Ok(ErrorRow::Macro {
        active,
        pct_active: pct(active, reference.n_points as f64),
        e_u,
        pct_e_u: pct(e_u, space_time_l2(dt, w, &ur)),
        e_por,
        pct_e_por: pct(e_por, space_time_l2(dt, w, &pr)),
    })
}

pub fn error_study(cfg: &SimConfig, reference: &SimConfig) -> Result<ErrorRow> {
    let r = simulate(reference)?;
    compare(&simulate(cfg)?, &r)
}

/// One sweep entry.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: String,
    pub report: RunReport,
    pub errors: Option<ErrorRow>,
}

/// Runs `cfg` once per value of `key`; with a reference every run is also
/// compared against it.
pub fn sweep(cfg: &SimConfig, key: &str, values: &[String], reference: Option<&RunReport>) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|v| {
            let c = cfg.with_override(key, v)?;
            let report = simulate(&c)?;
            let errors = reference.map(|r| compare(&report, r)).transpose()?;
            Ok(SweepRow {
                value: v.clone(),
                report,
                errors,
            })
        })
        .collect()
}

/// Effective quantities of one initial cell.
#[derive(Clone, Debug)]
pub struct CellRow {
    pub label: String,
    pub elements: usize,
    pub porosity: f64,
    pub a: Mat2,
    /// `None` when the cell has no mineral to drag against.
    pub k: Option<Mat2>,
}

/// Porosity and both tensors for every distinct initial phase field of the
/// configuration, on its initial micro mesh.
pub fn cell_report(cfg: &SimConfig) -> Result<Vec<CellRow>> {
    let pb = &cfg.problem;
    let shapes = match pb.initial {
        crate::coupling::InitialPhase::Uniform(s) => vec![("cell".to_string(), s)],
        crate::coupling::InitialPhase::Split { left, right, .. } => {
            vec![("left".to_string(), left), ("right".to_string(), right)]
        }
    };
    shapes
        .into_iter()
        .map(|(label, shape)| {
            let mesh = match &pb.micro_adapt {
                Some(c) => {
                    let f = shape.field(pb.coarse.clone(), pb.profile, pb.params.lambda);
                    Arc::new(crate::adapt::adapted_mesh(&pb.coarse, &f, c, pb.params.lambda)?)
                }
                None => pb.coarse.clone(),
            };
            let phi = shape.field(mesh.clone(), pb.profile, pb.params.lambda);
            let e = match effective_update(&phi, &pb.params, pb.mu_f, true) {
                Ok(e) => e,
                Err(err) => {
                    log::warn!("{label}: permeability skipped: {err}");
                    effective_update(&phi, &pb.params, pb.mu_f, false)?
                }
            };
            Ok(CellRow {
                label,
                elements: mesh.n_elems(),
                porosity: e.porosity,
                a: e.a,
                k: e.k,
            })
        })
        .collect()
}
