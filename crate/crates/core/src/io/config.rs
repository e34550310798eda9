//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::adapt::{ActiveSet, MarkRule, MicroAdaptConfig};
use crate::coupling::{Execution, InitialPhase, MacroPolicy, Problem};
use crate::error::{Error, Result};
use crate::macroscale::{Bc, BoundaryData, Segment};
use crate::mesh::{Rect, Side, TriMesh};
use crate::phasefield::{ChemistryParams, InitialShape, LinPolicy, Profile, SolverKnobs};

/// Every accepted key with its default; `None` marks a required key.
const KEYS: &[(&str, Option<&str>)] = &[
    ("D", None),
    ("u_star", None),
    ("u_eq", None),
    ("gamma", None),
    ("lambda", None),
    ("delta", None),
    ("k_reaction", Some("1")),
    ("dt", None),
    ("T", None),
    ("tol_M", None),
    ("tol_mu", None),
    ("l_coup", None),
    ("l_lin", Some("dynamic")),
    ("max_coupling_iters", Some("200")),
    ("max_micro_iters", Some("500")),
    ("bound_tol", Some("1e-9")),
    ("mode", Some("macro")),
    ("single_cell_u", Some("")),
    ("domain", Some("0 0 1 0.5")),
    ("macro_nx", Some("")),
    ("macro_ny", Some("")),
    ("micro_n", None),
    ("micro_adaptive", Some("true")),
    ("theta_r", Some("2")),
    ("h_min", Some("")),
    ("mark_rule", Some("mean")),
    ("active_policy", Some("adaptive")),
    ("Lambda", Some("0.1")),
    ("C_r", Some("0")),
    ("C_c", Some("0.2")),
    ("phi_max", None),
    ("mu_f", Some("1")),
    ("flow", Some("false")),
    ("u_init", Some("")),
    ("u_left", Some("neumann")),
    ("u_right", Some("neumann")),
    ("u_bottom", Some("neumann")),
    ("u_top", Some("neumann")),
    ("p_left", Some("neumann")),
    ("p_right", Some("neumann")),
    ("p_bottom", Some("neumann")),
    ("p_top", Some("neumann")),
    ("phi_init", None),
    ("phi_init_right", Some("")),
    ("phi_split", Some("")),
    ("phi_profile", Some("diffuse")),
    ("execution", Some("parallel")),
    ("output_dir", Some("out")),
    ("snapshot_times", Some("")),
    ("probe_points", Some("")),
    ("estimate_M", Some("")),
    ("estimate_C_u", Some("")),
    ("estimate_C_A", Some("")),
    ("estimate_a_m", Some("")),
    ("estimate_phi_m", Some("")),
    ("estimate_u_bar", Some("")),
];

/// Raw entries: key -> (line, value).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Entries(pub BTreeMap<String, (usize, String)>);

impl Entries {
    /// Parses the text; syntax errors stop at the first bad line.
    pub fn parse(text: &str) -> Result<Entries> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `key = value`, found `{body}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line,
                    msg: format!("invalid key `{k}`"),
                });
            }
            if let Some((first, _)) = map.insert(k.to_string(), (line, v.to_string())) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{k}` (first set on line {first})"),
                });
            }
        }
        Ok(Entries(map))
    }

    /// Replaces or adds a value (line 0 marks an override).
    pub fn set(&mut self, key: &str, value: &str) {
        self.0.insert(key.to_string(), (0, value.to_string()));
    }
}

/// Estimates of the constants of the coupling time-step condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtEstimates {
    pub m: f64,
    pub c_u: f64,
    pub c_a: f64,
    pub a_m: f64,
    pub phi_m: f64,
    pub u_bar: f64,
}

/// A validated run configuration.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub problem: Problem,
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    /// Macro locations whose micro fields are written with each snapshot.
    pub probe_points: Vec<[f64; 2]>,
    pub estimates: Option<DtEstimates>,
    pub entries: Entries,
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    SimConfig::from_entries(Entries::parse(&text)?)
}

/// Collects value errors so that all of them are reported together.
struct Reader<'a> {
    entries: &'a Entries,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        match self.entries.0.get(key) {
            Some((_, v)) => v,
            None => KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d).unwrap_or(""),
        }
    }

    fn fail(&mut self, key: &str, msg: impl std::fmt::Display) {
        let required = KEYS.iter().any(|(k, d)| *k == key && d.is_none());
        match self.entries.0.get(key) {
            // already reported as missing
            None if required => {}
            Some((line, _)) if *line > 0 => self.errors.push(format!("line {line}: {key}: {msg}")),
            _ => self.errors.push(format!("{key}: {msg}")),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key).to_string();
        if v.is_empty() {
            return None;
        }
        match v.parse() {
            Ok(x) => Some(x),
            Err(e) => {
                self.fail(key, format!("cannot parse `{v}`: {e}"));
                None
            }
        }
    }

    /// A value that must be present; a placeholder keeps validation going.
    fn get<T: FromStr>(&mut self, key: &str, placeholder: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key).unwrap_or(placeholder)
    }

    fn with<T>(&mut self, key: &str, placeholder: T, f: impl FnOnce(&str) -> std::result::Result<T, String>) -> T {
        let v = self.raw(key).to_string();
        match f(&v) {
            Ok(x) => x,
            Err(e) => {
                self.fail(key, e);
                placeholder
            }
        }
    }
}

fn numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|w| w.parse::<f64>().map_err(|e| format!("`{w}`: {e}")))
        .collect()
}

fn parse_shape(s: &str) -> std::result::Result<InitialShape, String> {
    let mut w = s.split_whitespace();
    let kind = w.next().unwrap_or("");
    let rest = numbers(&w.collect::<Vec<_>>().join(" "))?;
    match (kind, rest.as_slice()) {
        ("circle", &[porosity]) if (0.0..=1.0).contains(&porosity) => Ok(InitialShape::Circle { porosity }),
        ("rect", &[x0, x1, y0, y1]) if x0 < x1 && y0 < y1 => Ok(InitialShape::Rect { x0, x1, y0, y1 }),
        ("uniform", &[c]) if (0.0..=1.0).contains(&c) => Ok(InitialShape::Uniform(c)),
        _ => Err(format!(
            "expected `circle <porosity>`, `rect <x0> <x1> <y0> <y1>` or `uniform <value>`, found `{s}`"
        )),
    }
}

/// `neumann`, `dirichlet <v>` or `dirichlet <v> on <from> <to>`, several
/// separated by `;`.
fn parse_bc(side: Side, s: &str) -> std::result::Result<Vec<Segment>, String> {
    let mut out = Vec::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let w: Vec<&str> = part.split_whitespace().collect();
        let (bc, rest) = match w.as_slice() {
            ["neumann", rest @ ..] => (Bc::Neumann, rest),
            ["dirichlet", v, rest @ ..] => (Bc::Dirichlet(v.parse().map_err(|e| format!("`{v}`: {e}"))?), rest),
            _ => return Err(format!("expected `neumann` or `dirichlet <value>`, found `{part}`")),
        };
        let seg = match rest {
            [] => Segment::whole(side, bc),
            ["on", a, b] => {
                let r = numbers(&format!("{a} {b}"))?;
                if r[0] >= r[1] {
                    return Err(format!("empty segment [{}, {}]", r[0], r[1]));
                }
                Segment::new(side, r[0], r[1], bc)
            }
            _ => return Err(format!("trailing `{}` (segments read `on <from> <to>`)", rest.join(" "))),
        };
        out.push(seg);
    }
    Ok(out)
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(format!("expected true or false, found `{s}`")),
    }
}

/// Bottom row of the macro mesh is active; every other element copies the
/// active element closest in x, then in y.
pub fn bottom_row_set(mesh: &TriMesh, domain: &Rect, ny: usize) -> Result<ActiveSet> {
    let hy = domain.ly / ny as f64;
    let c: Vec<[f64; 2]> = (0..mesh.n_elems()).map(|t| mesh.centroid(t)).collect();
    let active: Vec<bool> = c.iter().map(|p| p[1] < domain.y0 + hy).collect();
    let act: Vec<usize> = (0..c.len()).filter(|&t| active[t]).collect();
    let assoc = (0..c.len())
        .map(|t| {
            if active[t] {
                return t;
            }
            let key = |b: usize| ((c[t][0] - c[b][0]).abs(), (c[t][1] - c[b][1]).abs());
            let mut best = act[0];
            for &b in &act[1..] {
                let (kb, kbest) = (key(b), key(best));
                if kb.0 < kbest.0 - 1e-12 || ((kb.0 - kbest.0).abs() <= 1e-12 && kb.1 < kbest.1) {
                    best = b;
                }
            }
            best
        })
        .collect();
    ActiveSet::fixed(active, assoc)
}

impl SimConfig {
    pub fn from_entries(entries: Entries) -> Result<SimConfig> {
        let mut errors = Vec::new();
        for (k, (line, _)) in &entries.0 {
            if !KEYS.iter().any(|(name, _)| name == k) {
                errors.push(format!("line {line}: unknown key `{k}`"));
            }
        }
        for (k, d) in KEYS {
            if d.is_none() && !entries.0.contains_key(*k) {
                errors.push(format!("missing required key `{k}`"));
            }
        }
        let mut r = Reader {
            entries: &entries,
            errors: Vec::new(),
        };
        let params = ChemistryParams {
            d: r.get("D", 1.0),
            u_star: r.get("u_star", 1.0),
            u_eq: r.get("u_eq", 0.5),
            k: r.get("k_reaction", 1.0),
            gamma: r.get("gamma", 0.01),
            lambda: r.get("lambda", 0.08),
            delta: r.get("delta", 1e-4),
        };
        let dt: f64 = r.get("dt", 0.01);
        let t_end: f64 = r.get("T", 0.0);
        let tol_m: f64 = r.get("tol_M", 1e-6);
        let tol_mu: f64 = r.get("tol_mu", 1e-8);
        let l_coup: f64 = r.get("l_coup", 0.0);
        let l_lin = r.with("l_lin", LinPolicy::Dynamic, |s| match s {
            "dynamic" => Ok(LinPolicy::Dynamic),
            "safe" => Ok(LinPolicy::Safe),
            v => v
                .parse()
                .map(LinPolicy::Fixed)
                .map_err(|_| format!("expected dynamic, safe or a number, found `{v}`")),
        });
        let knobs = SolverKnobs {
            l_coup,
            l_lin,
            tol_mu,
            max_micro_iters: r.get("max_micro_iters", 500),
            bound_tol: r.get("bound_tol", 1e-9),
        };
        let max_coupling_iters = r.get("max_coupling_iters", 200);
        let single = r.with("mode", false, |s| match s {
            "macro" => Ok(false),
            "single_cell" => Ok(true),
            _ => Err(format!("expected macro or single_cell, found `{s}`")),
        });
        let fixed_u: Option<f64> = r.opt("single_cell_u");
        let domain = r.with("domain", Rect::new(0.0, 0.0, 1.0, 0.5).unwrap(), |s| {
            let v = numbers(s)?;
            if v.len() != 4 {
                return Err("expected `<x0> <y0> <width> <height>`".into());
            }
            Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
        });
        let nx: Option<usize> = r.opt("macro_nx");
        let ny: Option<usize> = r.opt("macro_ny");
        let micro_n: usize = r.get("micro_n", 10);
        let adaptive = r.with("micro_adaptive", true, parse_bool);
        let theta_r: f64 = r.get("theta_r", 2.0);
        let h_min: f64 = r.opt("h_min").unwrap_or(params.lambda / 3.0);
        let rule = r.with("mark_rule", MarkRule::Mean, |s| match s {
            "mean" => Ok(MarkRule::Mean),
            "range" => Ok(MarkRule::Range),
            _ => Err(format!("expected mean or range, found `{s}`")),
        });
        let big_lambda: f64 = r.get("Lambda", 0.1);
        let c_r: f64 = r.get("C_r", 0.0);
        let c_c: f64 = r.get("C_c", 0.2);
        let policy_name = r.raw("active_policy").to_string();
        let phi_cap: f64 = r.get("phi_max", 1.0);
        let mu_f: f64 = r.get("mu_f", 1.0);
        let flow = r.with("flow", false, parse_bool);
        let u_init: f64 = r.opt("u_init").unwrap_or(params.u_eq);
        let mut bcs = |prefix: &str| {
            let mut segs = Vec::new();
            for (name, side) in [
                ("left", Side::Left),
                ("right", Side::Right),
                ("bottom", Side::Bottom),
                ("top", Side::Top),
            ] {
                segs.extend(r.with(&format!("{prefix}_{name}"), Vec::new(), |s| parse_bc(side, s)));
            }
            BoundaryData { segments: segs }
        };
        let u_bc = bcs("u");
        let p_bc = bcs("p");
        let left = r.with("phi_init", InitialShape::Uniform(1.0), parse_shape);
        let right = r.with("phi_init_right", None, |s| {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_shape(s).map(Some)
            }
        });
        let x_split: Option<f64> = r.opt("phi_split");
        let profile = r.with("phi_profile", Profile::Diffuse, |s| match s {
            "diffuse" => Ok(Profile::Diffuse),
            "sharp" => Ok(Profile::Sharp),
            _ => Err(format!("expected diffuse or sharp, found `{s}`")),
        });
        let execution = r.with("execution", Execution::Parallel, |s| match s {
            "parallel" => Ok(Execution::Parallel),
            "sequential" => Ok(Execution::Sequential),
            _ => Err(format!("expected parallel or sequential, found `{s}`")),
        });
        let output_dir = PathBuf::from(r.raw("output_dir"));
        let snapshot_times = r.with("snapshot_times", Vec::new(), numbers);
        let probe_points = r.with("probe_points", Vec::new(), |s| {
            s.split(';')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| match numbers(p)?.as_slice() {
                    &[x, y] => Ok([x, y]),
                    _ => Err(format!("expected `<x> <y>` pairs separated by `;`, found `{p}`")),
                })
                .collect()
        });
        let est: Vec<Option<f64>> = ["M", "C_u", "C_A", "a_m", "phi_m", "u_bar"]
            .iter()
            .map(|k| r.opt(&format!("estimate_{k}")))
            .collect();
        errors.append(&mut r.errors);

        // invariants
        errors.extend(params.violations());
        if !(dt > 0.0) {
            errors.push(format!("dt = {dt} must be positive"));
        }
        if !(t_end >= 0.0) {
            errors.push(format!("T = {t_end} must be nonnegative"));
        } else if dt > 0.0 && ((t_end / dt) - (t_end / dt).round()).abs() > 1e-9 * (t_end / dt).max(1.0) {
            errors.push(format!("T = {t_end} is not a multiple of dt = {dt}"));
        }
        if !(tol_m > 0.0) {
            errors.push(format!("tol_M = {tol_m} must be positive"));
        }
        if !(tol_mu > 0.0) {
            errors.push(format!("tol_mu = {tol_mu} must be positive"));
        }
        if !(tol_mu < tol_m) {
            errors.push(format!("tol_mu = {tol_mu} must be smaller than tol_M = {tol_m}"));
        }
        if !(l_coup >= 0.0) {
            errors.push(format!("l_coup = {l_coup} must be nonnegative"));
        }
        if micro_n == 0 {
            errors.push("micro_n must be positive".into());
        }
        let adapt_cfg = MicroAdaptConfig { theta_r, h_min, rule };
        if adaptive {
            errors.extend(adapt_cfg.violations(params.lambda));
        }
        if !(phi_cap > 0.0 && phi_cap <= 1.0) {
            errors.push(format!("phi_max = {phi_cap} must lie in (0, 1]"));
        }
        if !(mu_f > 0.0) {
            errors.push(format!("mu_f = {mu_f} must be positive"));
        }
        if !(c_r >= 0.0) {
            errors.push(format!("C_r = {c_r} must be nonnegative"));
        }
        if !(c_c > 0.0 && c_c <= 1.0) {
            errors.push(format!("C_c = {c_c} must lie in (0, 1]"));
        }
        if !(big_lambda >= 0.0) {
            errors.push(format!("Lambda = {big_lambda} must be nonnegative"));
        }
        if single && fixed_u.is_none() {
            errors.push("single_cell mode needs single_cell_u".into());
        }
        if !single && (nx.is_none() || ny.is_none()) {
            errors.push("macro mode needs macro_nx and macro_ny".into());
        }
        if nx == Some(0) || ny == Some(0) {
            errors.push("macro_nx and macro_ny must be positive".into());
        }
        if right.is_some() != x_split.is_some() {
            errors.push("phi_init_right and phi_split go together".into());
        }
        if flow && !p_bc.has_dirichlet() && !single {
            log::warn!("flow with pure Neumann pressure data: the mean pressure is fixed to zero");
        }
        if snapshot_times.iter().any(|&t| t < 0.0 || t > t_end + 1e-12) {
            errors.push(format!("snapshot_times must lie in [0, T], found {snapshot_times:?}"));
        }
        let estimates = match est.as_slice() {
            [Some(m), Some(c_u), Some(c_a), Some(a_m), Some(phi_m), Some(u_bar)] => Some(DtEstimates {
                m: *m,
                c_u: *c_u,
                c_a: *c_a,
                a_m: *a_m,
                phi_m: *phi_m,
                u_bar: *u_bar,
            }),
            v if v.iter().all(Option::is_none) => None,
            _ => {
                errors.push("the estimate_* keys must be given all together".into());
                None
            }
        };
        let (nx, ny) = (nx.unwrap_or(1).max(1), ny.unwrap_or(1).max(1));
        let macro_mesh = if errors.is_empty() && !single {
            match TriMesh::uniform(domain, nx, ny, false) {
                Ok(m) => Some(m.into_arc()),
                Err(e) => {
                    errors.push(e.to_string());
                    None
                }
            }
        } else {
            None
        };
        let policy = match policy_name.as_str() {
            "all" => Some(MacroPolicy::All),
            "adaptive" => Some(MacroPolicy::Adaptive { c_r, c_c, big_lambda }),
            "bottom_row" => match &macro_mesh {
                Some(m) => match bottom_row_set(m, &domain, ny) {
                    Ok(s) => Some(MacroPolicy::Fixed(s)),
                    Err(e) => {
                        errors.push(e.to_string());
                        None
                    }
                },
                None => Some(MacroPolicy::All),
            },
            other => {
                errors.push(format!("active_policy: expected adaptive, all or bottom_row, found `{other}`"));
                None
            }
        };
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let coarse = TriMesh::unit_cell(micro_n)?.into_arc();
        let initial = match (right, x_split) {
            (Some(right), Some(x_split)) => InitialPhase::Split { x_split, left, right },
            _ => InitialPhase::Uniform(left),
        };
        let macro_mesh = macro_mesh.unwrap_or_else(|| Arc::new(TriMesh::unit_cell(1).expect("single cell mesh")));
        let problem = Problem {
            params,
            knobs,
            dt,
            t_end,
            tol_m,
            max_coupling_iters,
            phi_cap,
            mu_f,
            macro_mesh,
            coarse,
            micro_adapt: adaptive.then_some(adapt_cfg),
            initial,
            profile,
            u_init,
            flow,
            p_bc,
            u_bc,
            policy: policy.expect("policy checked above"),
            execution,
            fixed_u: if single { fixed_u } else { None },
        };
        let mut snapshot_times = snapshot_times;
        snapshot_times.sort_by(f64::total_cmp);
        Ok(SimConfig {
            problem,
            domain,
            nx,
            ny,
            output_dir,
            snapshot_times,
            probe_points,
            estimates,
            entries,
        })
    }

    /// The same configuration with `key` replaced.
    pub fn with_override(&self, key: &str, value: &str) -> Result<SimConfig> {
        let mut e = self.entries.clone();
        e.set(key, value);
        SimConfig::from_entries(e)
    }

    pub fn is_single_cell(&self) -> bool {
        self.problem.fixed_u.is_some()
    }
}
