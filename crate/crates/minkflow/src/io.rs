//! Persistence and the command-line entry points: body files (JSON header
//! plus 17-significant-digit decimal samples, bit-faithful round trips),
//! trajectory CSV, summary JSON, and OBJ mesh export of embedded surfaces.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::SupportField;
use crate::config::{self, BuiltRun, ConfigError, Mode};
use crate::flow::{self, DiagnosticRow, Termination, Trajectory};
use crate::minkowski;
use crate::sphere::SphereGrid;
use crate::verify::{self, CheckResult};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] crate::error::GridError),
    #[error(transparent)]
    Body(#[from] crate::error::BodyError),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct BodyFile {
    n: usize,
    n_theta: usize,
    n_phi: usize,
    symmetric: bool,
    provenance: String,
    samples: Vec<f64>,
}

/// Write a body file: JSON with row-major support samples printed with 17
/// significant digits so that reading them back is bit-exact.
pub fn write_body(body: &SupportField, path: &Path, provenance: &str) -> Result<(), IoError> {
    let grid = body.grid();
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"n\": {},\n", grid.dim()));
    out.push_str(&format!("  \"n_theta\": {},\n", grid.n_theta()));
    out.push_str(&format!("  \"n_phi\": {},\n", grid.n_phi()));
    out.push_str(&format!("  \"symmetric\": {},\n", body.is_symmetric()));
    out.push_str(&format!(
        "  \"provenance\": {},\n",
        serde_json::to_string(provenance)?
    ));
    out.push_str("  \"samples\": [\n");
    let vals = body.values();
    for (i, v) in vals.iter().enumerate() {
        let sep = if i + 1 == vals.len() { "" } else { "," };
        out.push_str(&format!("    {:.16e}{}\n", v, sep));
    }
    out.push_str("  ]\n}\n");
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a body file, rebuilding its grid from the header.
pub fn read_body(path: &Path) -> Result<SupportField, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: BodyFile = serde_json::from_str(&text)?;
    let grid = SphereGrid::build(file.n, file.n_theta, file.n_phi)?;
    if file.samples.len() != grid.node_count() {
        return Err(IoError::Format(format!(
            "expected {} samples, found {}",
            grid.node_count(),
            file.samples.len()
        )));
    }
    Ok(SupportField::new(grid, file.samples, file.symmetric)?)
}

/// Read per-node samples (a body file reused as a scalar-field container)
/// and check they match the given grid.
pub fn read_samples(path: &Path, grid: &Arc<SphereGrid>) -> Result<Vec<f64>, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: BodyFile = serde_json::from_str(&text)?;
    if file.n != grid.dim()
        || file.n_theta != grid.n_theta()
        || (file.n == 2 && file.n_phi != grid.n_phi())
        || file.samples.len() != grid.node_count()
    {
        return Err(IoError::Format(format!(
            "sample file is {}x{} on S^{}, expected {} nodes on S^{}",
            file.n_theta,
            file.n_phi,
            file.n,
            grid.node_count(),
            grid.dim()
        )));
    }
    Ok(file.samples)
}

/// Trajectory CSV with the mandatory header
/// t,dt,eta,J,Z0,residual,lambda_min,u_min,u_max.
pub fn write_trajectory_csv(rows: &[DiagnosticRow], path: &Path) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,dt,eta,J,Z0,residual,lambda_min,u_min,u_max")?;
    for r in rows {
        writeln!(
            f,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.t, r.dt, r.eta, r.j, r.z0, r.residual, r.lambda_min, r.u_min, r.u_max
        )?;
    }
    Ok(())
}

/// Triangulated OBJ mesh of the embedded surface X = u x + grad u, with
/// faces from the structured grid (longitude wrap) plus two polar fans.
pub fn export_mesh(body: &SupportField, path: &Path) -> Result<(), IoError> {
    let grid = body.grid();
    if grid.dim() != 2 {
        return Err(IoError::Format(format!(
            "mesh export needs n = 2, got n = {}",
            grid.dim()
        )));
    }
    let grad = grid.gradient(body.values())?;
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    let mut out = String::new();
    for j in 0..nt {
        for k in 0..np {
            let i = grid.index(j, k);
            let x = grid.node(i);
            let et = grid.e_theta(j, k);
            let ep = grid.e_phi(k);
            let u = body.values()[i];
            let (gt, gp) = (grad.theta[i], grad.phi[i]);
            let p = [
                u * x[0] + gt * et[0] + gp * ep[0],
                u * x[1] + gt * et[1] + gp * ep[1],
                u * x[2] + gt * et[2] + gp * ep[2],
            ];
            out.push_str(&format!("v {:.12e} {:.12e} {:.12e}\n", p[0], p[1], p[2]));
        }
    }
    let vid = |j: usize, k: usize| j * np + (k % np) + 1;
    for j in 0..nt - 1 {
        for k in 0..np {
            let (a, b, c, d) = (vid(j, k), vid(j, k + 1), vid(j + 1, k + 1), vid(j + 1, k));
            out.push_str(&format!("f {a} {d} {c}\n"));
            out.push_str(&format!("f {a} {c} {b}\n"));
        }
    }
    // Polar fans close the offset rows over the poles.
    for k in 1..np - 1 {
        out.push_str(&format!("f {} {} {}\n", vid(0, 0), vid(0, k), vid(0, k + 1)));
        out.push_str(&format!(
            "f {} {} {}\n",
            vid(nt - 1, 0),
            vid(nt - 1, k + 1),
            vid(nt - 1, k)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct GridSummary {
    n: usize,
    n_theta: usize,
    n_phi: usize,
}

impl GridSummary {
    fn of(grid: &SphereGrid) -> Self {
        Self {
            n: grid.dim(),
            n_theta: grid.n_theta(),
            n_phi: grid.n_phi(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FlowSummary {
    mode: &'static str,
    regime: String,
    alpha: f64,
    beta: f64,
    status: String,
    steps: usize,
    t_final: f64,
    c: f64,
    residual: f64,
    j_final: f64,
    z0_final: f64,
    u_min: f64,
    u_max: f64,
    monotonicity_violations: usize,
    eta_violations: usize,
    u_bound_violations: usize,
    grid: GridSummary,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
}

#[derive(Debug, Serialize)]
struct LpSummary {
    mode: &'static str,
    p: f64,
    regime: String,
    status: String,
    steps: usize,
    c: f64,
    flow_residual: f64,
    lp_residual: f64,
    unique_up_to_dilation: bool,
    recovery_error: Option<f64>,
    grid: GridSummary,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct VerifySummary {
    mode: &'static str,
    all_pass: bool,
    samples: usize,
    results: Vec<CheckResult>,
    grid: GridSummary,
    seed: u64,
}

fn write_summary<T: Serialize>(summary: &T, dir: &Path) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    std::fs::write(dir.join("summary.json"), bytes)?;
    Ok(())
}

fn status_exit(status: Termination) -> i32 {
    match status {
        Termination::Converged | Termination::Extinguished => 0,
        Termination::MaxSteps => 2,
        Termination::StepFailure => 3,
    }
}

fn write_run_outputs(
    traj: &Trajectory,
    built: &BuiltRun,
    provenance: &str,
) -> Result<(), IoError> {
    std::fs::create_dir_all(&built.out_dir)?;
    write_trajectory_csv(&traj.rows, &built.out_dir.join("trajectory.csv"))?;
    write_body(
        traj.final_body(),
        &built.out_dir.join("final_body.json"),
        provenance,
    )?;
    if built.export_mesh && built.grid.dim() == 2 {
        export_mesh(traj.final_body(), &built.out_dir.join("final_body.obj"))?;
    }
    Ok(())
}

fn load_and_build(
    config_path: &Path,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
    expect: Mode,
) -> Result<BuiltRun, ConfigError> {
    let (cfg, text) = config::load(config_path)?;
    if cfg.mode != expect {
        return Err(ConfigError {
            message: "config mode does not match the requested command".to_string(),
            line: None,
        });
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    config::build(&cfg, &text, base, out_override, seed_override)
}

fn report_config_error(config_path: &Path, err: &ConfigError) -> i32 {
    eprintln!("{}: {}", config_path.display(), err);
    1
}

/// `minkflow flow`: run the (un)normalized flow, write trajectory CSV,
/// final body and summary. Exit 0 converged, 2 max_steps, 3 step_failure.
pub fn cmd_flow(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> i32 {
    let built = match load_and_build(config_path, out, seed, Mode::Flow) {
        Ok(b) => b,
        Err(e) => return report_config_error(config_path, &e),
    };
    let config = built.flow_config.as_ref().expect("flow mode");
    let result = if built.unnormalized {
        flow::run_unnormalized(config)
    } else {
        flow::run(config)
    };
    let traj = match result {
        Ok(t) => t,
        Err(e) => {
            eprintln!("flow failed: {e}");
            return 1;
        }
    };
    if let Err(e) = write_run_outputs(&traj, &built, "flow final body") {
        eprintln!("cannot write outputs: {e}");
        return 1;
    }
    let summary = FlowSummary {
        mode: "flow",
        regime: config.params.regime().label().to_string(),
        alpha: built.alpha,
        beta: built.beta,
        status: traj.status.as_str().to_string(),
        steps: traj.final_state.step,
        t_final: traj.final_state.t,
        c: traj.final_state.eta,
        residual: traj.final_state.residual,
        j_final: traj.final_state.j,
        z0_final: traj.final_state.z0,
        u_min: traj.final_state.u.u_min(),
        u_max: traj.final_state.u.u_max(),
        monotonicity_violations: traj.mono_violations,
        eta_violations: traj.eta_violations,
        u_bound_violations: traj.u_bound_violations,
        grid: GridSummary::of(&built.grid),
        seed: built.seed,
        note: (built.grid.dim() == 1)
            .then_some("n = 1 run: the convergence theory covers n >= 2; accepted for fast checks"),
    };
    if let Err(e) = write_summary(&summary, &built.out_dir) {
        eprintln!("cannot write summary: {e}");
        return 1;
    }
    println!(
        "flow: status {} after {} steps, c = {:.6}, residual = {:.3e}",
        traj.status.as_str(),
        traj.final_state.step,
        traj.final_state.eta,
        traj.final_state.residual
    );
    status_exit(traj.status)
}

/// `minkflow lp-solve`: solve u^{1-p} sigma_n = phi via the flow.
pub fn cmd_lp_solve(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> i32 {
    let built = match load_and_build(config_path, out, seed, Mode::LpSolve) {
        Ok(b) => b,
        Err(e) => return report_config_error(config_path, &e),
    };
    let problem = built.lp_problem.as_ref().expect("lp mode");
    let flow_config = built.flow_config.as_ref().expect("lp mode");
    let start = flow_config.initial.clone();
    let solved = minkowski::solve(problem, Some(start), |c| {
        c.dt_init = flow_config.dt_init;
        c.dt_min = flow_config.dt_min;
        c.dt_max = flow_config.dt_max;
        c.cfl_safety = flow_config.cfl_safety;
        c.tol_residual = flow_config.tol_residual;
        c.tol_j_rate = flow_config.tol_j_rate;
        c.max_steps = flow_config.max_steps;
        c.renormalize_every = flow_config.renormalize_every;
        c.symmetrize = flow_config.symmetrize;
        c.snapshot_every = flow_config.snapshot_every;
        c.convexity_eps = flow_config.convexity_eps;
    });
    let (body, report) = match solved {
        Ok(x) => x,
        Err(crate::error::SolverError::NotConverged { status, steps, residual }) => {
            eprintln!(
                "lp-solve did not converge: {status} after {steps} steps (residual {residual:.3e})"
            );
            return if status == "step_failure" { 3 } else { 2 };
        }
        Err(e) => {
            eprintln!("lp-solve failed: {e}");
            return 1;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&built.out_dir) {
        eprintln!("cannot create output dir: {e}");
        return 1;
    }
    if let Err(e) = write_body(&body, &built.out_dir.join("solution.json"), "lp solution") {
        eprintln!("cannot write solution: {e}");
        return 1;
    }
    if built.export_mesh && built.grid.dim() == 2 {
        if let Err(e) = export_mesh(&body, &built.out_dir.join("solution.obj")) {
            eprintln!("cannot write mesh: {e}");
            return 1;
        }
    }
    let recovery_error = built
        .lp_reference
        .as_ref()
        .and_then(|r| body.sup_distance(r).ok());
    let summary = LpSummary {
        mode: "lp-solve",
        p: problem.p,
        regime: problem.regime().label().to_string(),
        status: report.status.as_str().to_string(),
        steps: report.steps,
        c: report.c,
        flow_residual: report.flow_residual,
        lp_residual: report.lp_residual,
        unique_up_to_dilation: report.unique_up_to_dilation,
        recovery_error,
        grid: GridSummary::of(&built.grid),
        seed: built.seed,
    };
    if let Err(e) = write_summary(&summary, &built.out_dir) {
        eprintln!("cannot write summary: {e}");
        return 1;
    }
    println!(
        "lp-solve: p = {}, c = {:.6}, residual = {:.3e}{}",
        problem.p,
        report.c,
        report.lp_residual,
        if report.unique_up_to_dilation {
            " (unique up to dilation)"
        } else {
            ""
        }
    );
    0
}

/// `minkflow verify`: run the inequality/identity suites over seeded
/// random bodies. Exit 0 iff all checks pass, 4 otherwise.
pub fn cmd_verify(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> i32 {
    let built = match load_and_build(config_path, out, seed, Mode::Verify) {
        Ok(b) => b,
        Err(e) => return report_config_error(config_path, &e),
    };
    let results = match verify::run_suite(
        &built.grid,
        built.seed,
        built.verify_samples,
        &built.verify_checks,
        &built.verify_tols,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("verify failed to run: {e}");
            return 1;
        }
    };
    println!("check              samples  worst margin   tolerance  result");
    for r in &results {
        println!(
            "{:<18} {:>7}  {:>12.4e}  {:>10.1e}  {}",
            r.name,
            r.samples,
            r.worst_margin,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let all_pass = results.iter().all(|r| r.pass);
    let summary = VerifySummary {
        mode: "verify",
        all_pass,
        samples: built.verify_samples,
        results,
        grid: GridSummary::of(&built.grid),
        seed: built.seed,
    };
    if let Err(e) = std::fs::create_dir_all(&built.out_dir) {
        eprintln!("cannot create output dir: {e}");
        return 1;
    }
    if let Err(e) = write_summary(&summary, &built.out_dir) {
        eprintln!("cannot write summary: {e}");
        return 1;
    }
    if all_pass {
        0
    } else {
        4
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_shape, ShapeKind, DEFAULT_CONVEXITY_EPS};

    #[test]
    fn body_round_trip_is_bit_exact() {
        let g = SphereGrid::build(2, 16, 32).unwrap();
        let body = make_shape(
            &ShapeKind::Ellipsoid {
                semi_axes: [1.0, 1.1, 1.7],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("body.json");
        write_body(&body, &path, "test fixture").unwrap();
        let back = read_body(&path).unwrap();
        assert_eq!(back.values().len(), body.values().len());
        assert_eq!(back.is_symmetric(), body.is_symmetric());
        for (a, b) in body.values().iter().zip(back.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_header_is_exact() {
        let rows = vec![DiagnosticRow {
            t: 0.0,
            dt: 1e-3,
            eta: 1.0,
            j: 2.0,
            z0: 3.0,
            residual: 0.5,
            lambda_min: 1.0,
            u_min: 0.9,
            u_max: 1.1,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,dt,eta,J,Z0,residual,lambda_min,u_min,u_max"
        );
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn mesh_export_vertices_on_unit_sphere() {
        let g = SphereGrid::build(2, 16, 32).unwrap();
        let body = make_shape(&ShapeKind::Sphere { radius: 1.0 }, &g, DEFAULT_CONVEXITY_EPS)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.obj");
        export_mesh(&body, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut count = 0;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("v ") {
                let xs: Vec<f64> = rest
                    .split_whitespace()
                    .map(|s| s.parse().unwrap())
                    .collect();
                let r = (xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2]).sqrt();
                assert!((r - 1.0).abs() < 1e-10);
                count += 1;
            }
        }
        assert_eq!(count, g.node_count());
    }

    #[test]
    fn mesh_export_ellipsoid_residual_and_circle_rejection() {
        let g = SphereGrid::build(2, 32, 64).unwrap();
        let body = make_shape(
            &ShapeKind::Ellipsoid {
                semi_axes: [1.0, 1.0, 2.0],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.obj");
        export_mesh(&body, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("v ") {
                let xs: Vec<f64> = rest
                    .split_whitespace()
                    .map(|s| s.parse().unwrap())
                    .collect();
                // Implicit equation x^2 + y^2 + z^2/4 = 1.
                let q = xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2] / 4.0;
                assert!((q - 1.0).abs() < 5e-3, "implicit residual {}", q - 1.0);
            }
        }
        let g1 = SphereGrid::build(1, 32, 0).unwrap();
        let circle = make_shape(&ShapeKind::Sphere { radius: 1.0 }, &g1, DEFAULT_CONVEXITY_EPS)
            .unwrap();
        assert!(export_mesh(&circle, &dir.path().join("c.obj")).is_err());
    }
}
