//! Front end for the smooth L_p Minkowski problem u^{1-p} sigma_n = phi,
//! solved as the stationary state of the normalized flow with beta = 1 and
//! alpha = p, plus multi-start uniqueness probes.

use std::sync::Arc;

use rayon::prelude::*;

use crate::body::{CurvatureData, SupportField};
use crate::error::SolverError;
use crate::flow::{self, FlowConfig, Termination};
use crate::functionals::{sigma_pow, FlowParams, Regime};
use crate::sphere::SphereGrid;

/// An L_p Minkowski problem: find convex u with u^{1-p} sigma_n[W_u] = phi.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub p: f64,
    pub phi: Vec<f64>,
    grid: Arc<SphereGrid>,
    regime: Regime,
}

impl LpProblem {
    /// Validates the exponent range p in (-n-1, inf), positivity of phi,
    /// and the evenness requirement for p < n + 1.
    pub fn new(p: f64, phi: Vec<f64>, grid: Arc<SphereGrid>) -> Result<Self, SolverError> {
        let n = grid.dim() as f64;
        if !(p > -n - 1.0) || !p.is_finite() {
            return Err(SolverError::POutOfRange { p, lo: -n - 1.0 });
        }
        if p < n + 1.0 {
            let scale = phi.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
            let dev = grid.odd_deviation(&phi).map_err(crate::error::BodyError::Grid)?;
            if dev > 1e-12 * scale {
                return Err(SolverError::PhiNotEven { max_dev: dev });
            }
        }
        let params = FlowParams::new(p, 1.0, phi, &grid)?;
        // Exponent dictionary: with beta = 1, p < n+1 lands in regimes
        // A/B/C (even data) and p >= n+1 in regime D (general data).
        let regime = params.regime();
        debug_assert!(
            (p < n + 1.0) == regime.needs_symmetry(),
            "regime map out of sync: p = {p}, regime {regime:?}"
        );
        let phi = params.f;
        Ok(Self {
            p,
            phi,
            grid,
            regime,
        })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn flow_params(&self) -> FlowParams {
        FlowParams::new(self.p, 1.0, self.phi.clone(), &self.grid).expect("validated")
    }

    /// Flow options for the solve; `FlowConfig` built per start body.
    pub fn flow_config(&self, start: SupportField) -> FlowConfig {
        let mut config = FlowConfig::new(self.flow_params(), start);
        config.tol_residual = 1e-6;
        config.tol_j_rate = 1e-9;
        config.max_steps = 40_000;
        config
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Soliton constant c = eta at termination.
    pub c: f64,
    /// Flow soliton residual at termination.
    pub flow_residual: f64,
    /// sup |u^{1-p} sigma_n / phi - 1| of the returned body.
    pub lp_residual: f64,
    pub steps: usize,
    pub status: Termination,
    /// p = n + 1: the equation is scale invariant and the returned body is
    /// the volume-normalized representative.
    pub unique_up_to_dilation: bool,
}

/// Solve the problem by flowing `start` (default: unit sphere) to the
/// soliton and rescaling by c^{1/(1+n-p)} so that u^{1-p} sigma_n = phi.
pub fn solve(
    problem: &LpProblem,
    start: Option<SupportField>,
    tune: impl Fn(&mut FlowConfig),
) -> Result<(SupportField, SolveReport), SolverError> {
    let grid = problem.grid().clone();
    let n = grid.dim() as f64;
    let start = match start {
        Some(b) => b,
        None => SupportField::new(grid.clone(), vec![1.0; grid.node_count()], true)
            .map_err(SolverError::Body)?,
    };
    let mut config = problem.flow_config(start);
    tune(&mut config);
    let traj = flow::run(&config)?;
    if traj.status != Termination::Converged {
        return Err(SolverError::NotConverged {
            status: traj.status.as_str(),
            steps: traj.final_state.step,
            residual: traj.final_state.residual,
        });
    }
    let c = traj.final_state.eta;
    let at_dilation_invariant_exponent = problem.p == n + 1.0;
    let body = if at_dilation_invariant_exponent {
        traj.final_state.u.clone()
    } else {
        let s = c.powf(1.0 / (1.0 + n - problem.p));
        traj.final_state.u.scale(s).map_err(SolverError::Body)?
    };
    let lp_res = residual(&body, problem)?;
    Ok((
        body,
        SolveReport {
            c,
            flow_residual: traj.final_state.residual,
            lp_residual: lp_res,
            steps: traj.final_state.step,
            status: traj.status,
            unique_up_to_dilation: at_dilation_invariant_exponent,
        },
    ))
}

/// sup over nodes of |u^{1-p} sigma_n / phi - 1|.
pub fn residual(u: &SupportField, problem: &LpProblem) -> Result<f64, SolverError> {
    let curv = u
        .curvature(crate::body::DEFAULT_CONVEXITY_EPS)
        .map_err(SolverError::Body)?;
    Ok(residual_with_curvature(u, &curv, problem))
}

fn residual_with_curvature(u: &SupportField, curv: &CurvatureData, problem: &LpProblem) -> f64 {
    u.values()
        .iter()
        .zip(curv.sigma_n.iter())
        .zip(problem.phi.iter())
        .map(|((&uu, &s), &phi)| (uu.powf(1.0 - problem.p) * sigma_pow(s, 1.0) / phi - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Multi-start uniqueness probe report.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub p: f64,
    /// Pairwise sup-norm distances between final bodies (upper triangle,
    /// row-major order).
    pub pairwise: Vec<f64>,
    pub max_distance: f64,
    pub tolerance: f64,
    pub all_within_tolerance: bool,
}

/// Solve from every start and compare the final bodies pairwise. Refused
/// outside the proven uniqueness range p > 1. For p = n + 1 the bodies are
/// compared after dilation alignment (all solves return the
/// volume-normalized representative, so they are already aligned).
pub fn uniqueness_probe(
    problem: &LpProblem,
    starts: &[SupportField],
    tolerance: f64,
    tune: impl Fn(&mut FlowConfig) + Sync,
) -> Result<ProbeReport, SolverError> {
    if problem.p <= 1.0 {
        return Err(SolverError::ProbeRefused(problem.p));
    }
    let finals: Vec<Result<SupportField, SolverError>> = starts
        .par_iter()
        .map(|s| solve(problem, Some(s.clone()), &tune).map(|(b, _)| b))
        .collect();
    let finals: Result<Vec<SupportField>, SolverError> = finals.into_iter().collect();
    let finals = finals?;
    let mut pairwise = Vec::new();
    let mut max_distance: f64 = 0.0;
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            let d = finals[i].sup_distance(&finals[j]).map_err(SolverError::Body)?;
            max_distance = max_distance.max(d);
            pairwise.push(d);
        }
    }
    Ok(ProbeReport {
        p: problem.p,
        pairwise,
        max_distance,
        tolerance,
        all_within_tolerance: max_distance <= tolerance,
    })
}

/// Manufacture phi := u^{1-p} sigma_n[W_u] from a known body, so the body
/// solves the problem exactly (in the discrete operator).
pub fn manufactured_phi(body: &SupportField, p: f64) -> Result<Vec<f64>, SolverError> {
    let curv = body
        .curvature(crate::body::DEFAULT_CONVEXITY_EPS)
        .map_err(SolverError::Body)?;
    Ok(body
        .values()
        .iter()
        .zip(curv.sigma_n.iter())
        .map(|(&u, &s)| u.powf(1.0 - p) * s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_shape, ShapeKind, DEFAULT_CONVEXITY_EPS};

    fn grid2() -> Arc<SphereGrid> {
        SphereGrid::build(2, 16, 32).unwrap()
    }

    #[test]
    fn problem_validation() {
        let g = grid2();
        let ones = vec![1.0; g.node_count()];
        assert!(matches!(
            LpProblem::new(-3.0, ones.clone(), g.clone()),
            Err(SolverError::POutOfRange { .. })
        ));
        // Odd phi rejected below p = n + 1.
        let odd: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.1 * x[2]).collect();
        assert!(matches!(
            LpProblem::new(2.0, odd.clone(), g.clone()),
            Err(SolverError::PhiNotEven { .. })
        ));
        // The same phi is fine at p >= n + 1.
        assert!(LpProblem::new(3.0, odd, g.clone()).is_ok());
        // Regime dictionary.
        assert_eq!(LpProblem::new(0.0, ones.clone(), g.clone()).unwrap().regime(), Regime::C);
        assert_eq!(LpProblem::new(2.0, ones.clone(), g.clone()).unwrap().regime(), Regime::A);
        assert_eq!(LpProblem::new(-1.5, ones.clone(), g.clone()).unwrap().regime(), Regime::B);
        assert_eq!(LpProblem::new(4.0, ones, g).unwrap().regime(), Regime::D);
    }

    #[test]
    fn constant_phi_yields_unit_sphere() {
        let g = grid2();
        let problem = LpProblem::new(2.0, vec![1.0; g.node_count()], g.clone()).unwrap();
        let (body, report) = solve(&problem, None, |c| {
            c.tol_residual = 1e-8;
            c.tol_j_rate = 1e-10;
        })
        .unwrap();
        assert!((report.c - 1.0).abs() < 1e-6);
        let unit = make_shape(&ShapeKind::Sphere { radius: 1.0 }, &g, DEFAULT_CONVEXITY_EPS)
            .unwrap();
        assert!(body.sup_distance(&unit).unwrap() < 1e-6);
        assert!(report.lp_residual < 1e-6);
    }

    #[test]
    fn residual_is_scale_invariant_at_p_n_plus_one() {
        let g = grid2();
        let body = make_shape(
            &ShapeKind::Ellipsoid {
                semi_axes: [1.0, 1.0, 1.3],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap();
        let phi = manufactured_phi(&body, 3.0).unwrap();
        let problem = LpProblem::new(3.0, phi, g.clone()).unwrap();
        let r1 = residual(&body, &problem).unwrap();
        let r2 = residual(&body.scale(1.7).unwrap(), &problem).unwrap();
        assert!(r1 < 1e-12, "manufactured pair residual {r1}");
        assert!((r1 - r2).abs() < 1e-9, "scale changed the residual: {r1} vs {r2}");
    }

    #[test]
    fn probe_at_p_n_plus_one_aligns_dilations() {
        // phi = 1, starts at spheres of radius 1 and 2: solutions agree
        // after dilation alignment (both solves return the
        // volume-normalized representative).
        let g = grid2();
        let problem = LpProblem::new(3.0, vec![1.0; g.node_count()], g.clone()).unwrap();
        let starts = vec![
            make_shape(&ShapeKind::Sphere { radius: 1.0 }, &g, DEFAULT_CONVEXITY_EPS).unwrap(),
            make_shape(&ShapeKind::Sphere { radius: 2.0 }, &g, DEFAULT_CONVEXITY_EPS).unwrap(),
        ];
        let report = uniqueness_probe(&problem, &starts, 1e-8, |c| {
            c.tol_residual = 1e-9;
            c.tol_j_rate = 1e-11;
        })
        .unwrap();
        assert!(
            report.all_within_tolerance,
            "pairwise distances {:?}",
            report.pairwise
        );
    }

    #[test]
    fn probe_refuses_small_p() {
        let g = grid2();
        let problem = LpProblem::new(0.5, vec![1.0; g.node_count()], g).unwrap();
        let starts = Vec::new();
        assert!(matches!(
            uniqueness_probe(&problem, &starts, 1e-3, |_| {}),
            Err(SolverError::ProbeRefused(_))
        ));
    }

    #[test]
    fn round_trip_recovers_manufactured_body_p2() {
        let g = SphereGrid::build(2, 16, 32).unwrap();
        let target = make_shape(
            &ShapeKind::Ellipsoid {
                semi_axes: [1.0, 1.0, 1.3],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap();
        let phi = manufactured_phi(&target, 2.0).unwrap();
        let problem = LpProblem::new(2.0, phi, g).unwrap();
        let (body, report) = solve(&problem, None, |c| {
            c.tol_residual = 1e-7;
            c.tol_j_rate = 1e-9;
        })
        .unwrap();
        assert_eq!(report.status, Termination::Converged);
        let err = body.sup_distance(&target).unwrap();
        assert!(err < 5e-3, "recovery error {err}");
    }
}
