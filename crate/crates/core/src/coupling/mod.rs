//! The multi-scale fixed-point iteration and the outer time loop.
//!
//! Each time step: update the active set, then iterate
//! (micro solve + cell problems at active points, copy to inactive points,
//! macro solves) until the porosity change drops below `tol_m`.

mod fanout;

pub use fanout::{fan_out, Execution};

use std::sync::Arc;

use crate::adapt::{coarse_means, micro_adapt, ActiveSet, MicroAdaptConfig, Snapshot};
use crate::cell::{effective_update, Mat2};
use crate::error::{Error, Result};
use crate::macroscale::{solve_flow, solve_transport, BoundaryData, MacroState, Transport};
use crate::mesh::{Family, Field, TriMesh};
use crate::phasefield::{
    lipschitz_constants, micro_dt_bound, solve_phasefield, ChemistryParams, InitialShape, Profile, SolverKnobs,
};

/// Micro data carried by one macro point.
#[derive(Clone, Debug)]
pub struct MicroState {
    pub phi: Field,
    pub porosity: f64,
    pub a: Mat2,
    pub k: Option<Mat2>,
}

/// How the active macro points are chosen.
#[derive(Clone, Debug)]
pub enum MacroPolicy {
    /// Every point solves its own cell problems.
    All,
    /// Distance-driven activation.
    Adaptive { c_r: f64, c_c: f64, big_lambda: f64 },
    /// Prescribed active points and association.
    Fixed(ActiveSet),
}

/// Initial phase field per macro point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialPhase {
    Uniform(InitialShape),
    /// `left` for centroids with x < `x_split`, `right` otherwise.
    Split { x_split: f64, left: InitialShape, right: InitialShape },
}

impl InitialPhase {
    fn shape(&self, x: [f64; 2]) -> InitialShape {
        match *self {
            InitialPhase::Uniform(s) => s,
            InitialPhase::Split { x_split, left, right } => {
                if x[0] < x_split {
                    left
                } else {
                    right
                }
            }
        }
    }
}

/// Everything a run needs.
#[derive(Clone, Debug)]
pub struct Problem {
    pub params: ChemistryParams,
    pub knobs: SolverKnobs,
    pub dt: f64,
    pub t_end: f64,
    pub tol_m: f64,
    pub max_coupling_iters: usize,
    /// Porosity at which a point stops evolving.
    pub phi_cap: f64,
    pub mu_f: f64,
    pub macro_mesh: Arc<TriMesh>,
    /// Uniform micro mesh every micro mesh descends from.
    pub coarse: Arc<TriMesh>,
    pub micro_adapt: Option<MicroAdaptConfig>,
    pub initial: InitialPhase,
    pub profile: Profile,
    pub u_init: f64,
    pub flow: bool,
    pub p_bc: BoundaryData,
    pub u_bc: BoundaryData,
    pub policy: MacroPolicy,
    pub execution: Execution,
    /// Single micro cell at a prescribed concentration instead of the
    /// macro problem.
    pub fixed_u: Option<f64>,
}

impl Problem {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn n_points(&self) -> usize {
        if self.fixed_u.is_some() {
            1
        } else {
            self.macro_mesh.n_elems()
        }
    }

    fn weights(&self) -> Vec<f64> {
        if self.fixed_u.is_some() {
            vec![1.0]
        } else {
            self.macro_mesh.areas.clone()
        }
    }

    fn point_location(&self, x: usize) -> [f64; 2] {
        if self.fixed_u.is_some() {
            [0.0, 0.0]
        } else {
            self.macro_mesh.centroid(x)
        }
    }

    /// Startup diagnostics on the time step. Never fatal.
    pub fn dt_diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.params;
        for u in [0.0, p.u_eq, p.u_star] {
            let bound = micro_dt_bound(u, self.knobs.l_coup, p);
            if self.dt > bound {
                out.push(format!(
                    "dt = {} exceeds the micro maximum-principle bound {bound:.4} at u = {u}",
                    self.dt
                ));
            }
        }
        let (m1, m2) = lipschitz_constants(p, p.u_star);
        let m = m1.max(m2);
        if self.knobs.l_coup <= 6.0 * m {
            out.push(format!(
                "L_coup = {:.1e} is below the 6 M = {:.3} of the convergence theory; convergence is not guaranteed a priori",
                self.knobs.l_coup,
                6.0 * m
            ));
        }
        out
    }
}

/// Left-hand side of the coupling contraction condition for user-supplied
/// estimates of the unknown constants; the theory asks for a value below 1.
#[allow(clippy::too_many_arguments)]
pub fn coupling_dt_condition(
    dt: f64,
    m: f64,
    p: &ChemistryParams,
    c_u: f64,
    c_a: f64,
    a_m: f64,
    phi_m: f64,
    u_bar: f64,
) -> f64 {
    let l2 = p.lambda * p.lambda;
    m * p.d * c_u * c_u * c_a * c_a / (2.0 * l2 * a_m * phi_m) * dt * dt
        + m / l2 * (u_bar * u_bar / (2.0 * phi_m * phi_m) + 3.0) * dt
}

/// L2(Omega) norm of the difference of two cellwise porosities.
pub fn coupling_error(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-time-step summary.
#[derive(Clone, Debug, Default)]
pub struct StepStats {
    pub n: usize,
    pub t: f64,
    pub iters: usize,
    /// eps_M per coupling iteration.
    pub eps: Vec<f64>,
    /// Micro L-scheme iterations per solve, averaged over the step.
    pub mean_micro_iters: f64,
    pub micro_solves: usize,
    pub n_active: usize,
    pub n_frozen: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub por_min: f64,
    pub por_max: f64,
    /// Mean micro element count over points.
    pub mean_micro_elems: f64,
}

/// State of a run at a committed time level.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub problem: Problem,
    pub n: usize,
    pub t: f64,
    pub micro: Vec<MicroState>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub porosity: Vec<f64>,
    pub active: ActiveSet,
    /// Number of steps each point was active.
    pub activity: Vec<usize>,
    means: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

struct PointResult {
    prev: Option<Field>,
    state: MicroState,
    iters: usize,
    solves: usize,
}

impl Simulation {
    pub fn new(problem: Problem) -> Result<Simulation> {
        let np = problem.n_points();
        let mut cache: Vec<(InitialShape, MicroState)> = Vec::new();
        let mut micro = Vec::with_capacity(np);
        for x in 0..np {
            let shape = problem.initial.shape(problem.point_location(x));
            if let Some((_, s)) = cache.iter().find(|(sh, _)| *sh == shape) {
                micro.push(s.clone());
                continue;
            }
            let mesh = match &problem.micro_adapt {
                Some(cfg) => {
                    let on_coarse = shape.field(problem.coarse.clone(), problem.profile, problem.params.lambda);
                    Arc::new(crate::adapt::adapted_mesh(&problem.coarse, &on_coarse, cfg, problem.params.lambda)?)
                }
                None => problem.coarse.clone(),
            };
            let phi = shape.field(mesh, problem.profile, problem.params.lambda);
            let eff = effective_update(&phi, &problem.params, problem.mu_f, problem.flow)?;
            let s = MicroState {
                phi,
                porosity: eff.porosity,
                a: eff.a,
                k: eff.k,
            };
            cache.push((shape, s.clone()));
            micro.push(s);
        }
        let porosity: Vec<f64> = micro.iter().map(|m| m.porosity).collect();
        let means = micro
            .iter()
            .map(|m| coarse_means(&problem.coarse, &m.phi))
            .collect::<Result<Vec<_>>>()?;
        let active = match &problem.policy {
            MacroPolicy::All => ActiveSet::all(np),
            MacroPolicy::Adaptive { .. } => ActiveSet::new(np),
            MacroPolicy::Fixed(s) => {
                if s.len() != np {
                    return Err(Error::Config(vec![format!(
                        "fixed active set has {} points, the run has {np}",
                        s.len()
                    )]));
                }
                s.clone()
            }
        };
        let u0 = problem.fixed_u.unwrap_or(problem.u_init);
        let nq = if problem.fixed_u.is_some() { 0 } else { problem.macro_mesh.n_edges() };
        let weights = problem.weights();
        for msg in problem.dt_diagnostics() {
            log::warn!("{msg}");
        }
        Ok(Simulation {
            n: 0,
            t: 0.0,
            micro,
            u: vec![u0; np],
            p: vec![0.0; np],
            q: vec![0.0; nq],
            porosity,
            active,
            activity: vec![0; np],
            means,
            weights,
            problem,
        })
    }

    pub fn is_done(&self) -> bool {
        self.n >= self.problem.n_steps()
    }

    /// Macro fields as mesh fields (macro runs only).
    pub fn macro_state(&self) -> Option<MacroState> {
        if self.problem.fixed_u.is_some() {
            return None;
        }
        let m = &self.problem.macro_mesh;
        Some(MacroState {
            u: Field::new(m.clone(), Family::P0, self.u.clone()).ok()?,
            p: Field::new(m.clone(), Family::P0, self.p.clone()).ok()?,
            q: Field::new(m.clone(), Family::RT0, self.q.clone()).ok()?,
            porosity: self.porosity.clone(),
        })
    }

    fn update_active_set(&mut self) {
        if let MacroPolicy::Adaptive { c_r, c_c, big_lambda } = self.problem.policy {
            if c_r == 0.0 {
                // a zero tolerance activates every point
                self.active = ActiveSet::all(self.u.len());
                return;
            }
            let means = &self.means;
            let f = |i: usize| means[i].as_slice();
            let snap = Snapshot {
                u: &self.u,
                source: &self.active.assoc.clone(),
                means: &f,
                areas: &self.problem.coarse.areas,
            };
            self.active.accumulate(&snap, self.problem.dt, big_lambda);
            self.active.update(c_r, c_c);
        }
    }

    fn solve_point(&self, x: usize, i: usize, prev: &Field, outer: &Field, u: f64) -> Result<PointResult> {
        let pb = &self.problem;
        let (prev_new, phi, iters, solves) = match (&pb.micro_adapt, i) {
            (Some(cfg), 1) => {
                let a = micro_adapt(&pb.coarse, prev, u, pb.dt, &pb.knobs, &pb.params, cfg)
                    .map_err(|e| e.at(x, self.n + 1, "micro adaptivity"))?;
                (Some(a.prev), a.phi, a.prediction.iters + a.correction.iters, 2)
            }
            _ => {
                let (phi, st) = solve_phasefield(prev, outer, u, pb.dt, &pb.knobs, &pb.params)
                    .map_err(|e| e.at(x, self.n + 1, "phase field"))?;
                (None, phi, st.iters, 1)
            }
        };
        let eff = effective_update(&phi, &pb.params, pb.mu_f, pb.flow).map_err(|e| e.at(x, self.n + 1, "cell problems"))?;
        Ok(PointResult {
            prev: prev_new,
            state: MicroState {
                phi,
                porosity: eff.porosity,
                a: eff.a,
                k: eff.k,
            },
            iters,
            solves,
        })
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<StepStats> {
        let n = self.n + 1;
        self.update_active_set();
        let pb = &self.problem;
        let np = self.u.len();
        let frozen: Vec<bool> = self.micro.iter().map(|m| m.porosity >= pb.phi_cap).collect();
        let work: Vec<usize> = (0..np).filter(|&x| self.active.active[x] && !frozen[x]).collect();
        let mut prev: Vec<Field> = self.micro.iter().map(|m| m.phi.clone()).collect();
        let mut cur = self.micro.clone();
        let mut u_it = self.u.clone();
        let mut por_it = self.porosity.clone();
        let (mut p_it, mut q_it) = (self.p.clone(), self.q.clone());
        let mut stats = StepStats {
            n,
            t: self.t + pb.dt,
            n_active: self.active.n_active(),
            n_frozen: frozen.iter().filter(|&&f| f).count(),
            ..Default::default()
        };
        let mut micro_iters = 0;
        for i in 1.. {
            let results = fan_out(pb.execution, &work, |&x| self.solve_point(x, i, &prev[x], &cur[x].phi, u_it[x]));
            for (&x, r) in work.iter().zip(results) {
                let r = r?;
                if let Some(f) = r.prev {
                    prev[x] = f;
                }
                cur[x] = r.state;
                micro_iters += r.iters;
                stats.micro_solves += r.solves;
            }
            for x in 0..np {
                let a = self.active.assoc[x];
                if a != x {
                    cur[x] = cur[a].clone();
                }
            }
            let por: Vec<f64> = cur.iter().map(|m| m.porosity).collect();
            let eps = coupling_error(&self.weights, &por, &por_it);
            por_it = por;
            if pb.fixed_u.is_none() {
                let mesh = &pb.macro_mesh;
                if pb.flow {
                    let k = cur
                        .iter()
                        .map(|m| m.k.ok_or_else(|| Error::Config(vec!["flow needs permeabilities".into()])))
                        .collect::<Result<Vec<_>>>()?;
                    let (p, q) = solve_flow(mesh, &k, &pb.p_bc).map_err(|e| e.at(0, n, "macro flow"))?;
                    p_it = p;
                    q_it = q;
                }
                let a: Vec<Mat2> = cur.iter().map(|m| m.a).collect();
                let tr = Transport {
                    por_new: &por_it,
                    por_old: &self.porosity,
                    u_old: &self.u,
                    q: pb.flow.then_some(q_it.as_slice()),
                    a: &a,
                    dt: pb.dt,
                    d: pb.params.d,
                    u_star: pb.params.u_star,
                };
                u_it = solve_transport(mesh, &tr, &pb.u_bc).map_err(|e| e.at(0, n, "macro transport"))?;
            }
            stats.eps.push(eps);
            stats.iters = i;
            log::info!(
                "n={n} i={i} eps_M={eps:.3e} active={} mean_micro_iters={:.2}",
                stats.n_active,
                micro_iters as f64 / stats.micro_solves.max(1) as f64
            );
            if !eps.is_finite() {
                return Err(Error::NotConverged {
                    what: "multi-scale iteration",
                    iters: i,
                    last: eps,
                    history: stats.eps,
                });
            }
            // a prescribed concentration leaves nothing to couple
            if eps < pb.tol_m || pb.fixed_u.is_some() {
                break;
            }
            if i >= pb.max_coupling_iters {
                log::error!("eps_M history at step {n}: {:?}", stats.eps);
                return Err(Error::NotConverged {
                    what: "multi-scale iteration",
                    iters: i,
                    last: eps,
                    history: stats.eps,
                });
            }
        }
        for x in 0..np {
            if self.active.active[x] {
                self.activity[x] += 1;
                self.means[x] = coarse_means(&pb.coarse, &cur[x].phi)?;
            }
        }
        for x in 0..np {
            let a = self.active.assoc[x];
            if a != x {
                self.means[x] = self.means[a].clone();
            }
        }
        stats.mean_micro_iters = micro_iters as f64 / stats.micro_solves.max(1) as f64;
        stats.mean_micro_elems = cur.iter().map(|m| m.phi.mesh.n_elems() as f64).sum::<f64>() / np as f64;
        self.micro = cur;
        self.u = u_it;
        self.p = p_it;
        self.q = q_it;
        self.porosity = por_it;
        self.n = n;
        self.t = stats.t;
        let minmax = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        (stats.u_min, stats.u_max) = minmax(&self.u);
        (stats.por_min, stats.por_max) = minmax(&self.porosity);
        Ok(stats)
    }
}
