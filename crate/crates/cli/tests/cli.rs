use std::path::Path;
use std::process::{Command, Output};

const CELL: &str = "
D = 1
u_star = 1
u_eq = 0.5
gamma = 0.01
lambda = 0.08
delta = 1e-4
dt = 0.01
T = 0.02
tol_M = 1e-6
tol_mu = 1e-8
l_coup = 0
mode = single_cell
single_cell_u = 0
micro_n = 8
phi_max = 0.9686
phi_init = circle 0.5
";

fn twoscale(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_twoscale"));
    c.args(args).env("RUST_LOG", "warn");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_the_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "cell.cfg", CELL);
    let out = d.path().join("out");
    let o = twoscale(&["run", &cfg, "--output", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["steps.csv", "convergence.csv", "cell_0000.vtk", "cell_0002.vtk"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let steps = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 3);
}

#[test]
fn configuration_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    let empty = write(d.path(), "empty.cfg", "");
    let o = twoscale(&["run", &empty], &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("u_star") && e.contains("phi_init"), "{e}");

    let bad = write(d.path(), "bad.cfg", &format!("{CELL}colour = blue\ndt 0.1\n"));
    let o = twoscale(&["run", &bad], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 19"), "{}", stderr(&o));

    let o = twoscale(&["run", &d.path().join("missing.cfg").to_string_lossy()], &[]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write(d.path(), "cell.cfg", CELL);
    let o = twoscale(&["run", &cfg], &[("TWOSCALE_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "cell.cfg", &format!("{CELL}max_micro_iters = 1\n"));
    let o = twoscale(&["run", &cfg, "--output", d.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sweep_and_errors() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "cell.cfg", &format!("{CELL}micro_adaptive = true\n"));
    let reference = write(d.path(), "ref.cfg", &CELL.replace("micro_n = 8", "micro_n = 16"));
    let out = d.path().join("sweep");
    let o = twoscale(
        &["sweep", &cfg, "--key", "theta_r", "--values", "1,2", "--reference", &reference, "--output", out.to_str().unwrap()],
        &[("TWOSCALE_THREADS", "1")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("theta_r,"));
    assert_eq!(std::fs::read_to_string(out.join("errors.csv")).unwrap().lines().count(), 3);
    assert!(out.join("theta_r=2").join("steps.csv").exists());

    let o = twoscale(&["sweep", &cfg, "--key", "theta_r", "--values", "1,100"], &[]);
    assert_eq!(o.status.code(), Some(2));

    let table = d.path().join("errors.csv");
    let o = twoscale(&["errors", &cfg, &reference, "--output", table.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("E_phi"));
    assert_eq!(std::fs::read_to_string(table).unwrap().lines().count(), 2);
}

#[test]
fn cell_reports_tensors() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let cfg = write(d.path(), "cell.cfg", &format!("{CELL}output_dir = {}\n", out.display()));
    let o = twoscale(&["cell", &cfg], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
}
