//! Time integration of the normalized flow
//! d_t u = -f u^alpha sigma_n^{-beta} + eta(t) u
//! with renormalization, adaptive explicit midpoint stepping, convexity
//! guarding, and convergence detection, plus the unnormalized companion
//! flow and the time rescaling between the two.
//!
//! Stability: the explicit midpoint scheme is limited by the colatitude
//! spacing through dt <= cfl * h_min^2 / D. The azimuthal direction would
//! impose a far smaller step near the poles (the spacing shrinks like
//! sin(theta) d_phi), so the azimuthal diffusion is treated implicitly:
//! each accepted increment is multiplied, rowwise and modewise, by
//! 1 / (1 + dt c_j s(m) / (sin(theta_j) d_phi)^2). The damping acts on the
//! increment only, hence stationary states of the discrete flow are fixed
//! points of the damped scheme bitwise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::body::{CurvatureData, SupportField};
use crate::error::FlowError;
use crate::functionals::{
    entropy_dissipation, eta, j_value, normalized_rhs, rho, sigma_pow, soliton_residual,
    FlowParams,
};
use crate::sphere::{sphere_area, SphereGrid};

/// Steps before the eta-boundedness monitor starts reporting.
const ETA_BURN_IN_STEPS: usize = 50;

/// Safety factor applied to the rowwise implicit damping coefficient.
const DAMP_COEFF_MARGIN: f64 = 1.3;

/// Rows whose azimuthal symbol is below this need no implicit damping.
const DAMP_SKIP_STRENGTH: f64 = 0.25;

/// Flow configuration: parameters, initial body, stepping and tolerances.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub params: FlowParams,
    pub initial: SupportField,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub tol_residual: f64,
    pub tol_j_rate: f64,
    pub max_steps: usize,
    /// Renormalize every k steps; 0 disables renormalization.
    pub renormalize_every: usize,
    pub symmetrize: bool,
    /// Keep a body snapshot every k steps; 0 keeps only initial and final.
    pub snapshot_every: usize,
    pub convexity_eps: f64,
    /// Unnormalized runs terminate when u_min falls below this.
    pub extinction_floor: f64,
}

impl FlowConfig {
    pub fn new(params: FlowParams, initial: SupportField) -> Self {
        let symmetrize = params.regime().needs_symmetry();
        Self {
            params,
            initial,
            dt_init: 1e-4,
            dt_min: 1e-13,
            dt_max: 1e-2,
            cfl_safety: 0.2,
            tol_residual: 1e-6,
            tol_j_rate: 1e-8,
            max_steps: 20_000,
            renormalize_every: 1,
            symmetrize,
            snapshot_every: 0,
            convexity_eps: crate::body::DEFAULT_CONVEXITY_EPS,
            extinction_floor: 0.1,
        }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.initial.grid()
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.tol_residual > 0.0 && self.tol_j_rate > 0.0 && self.convexity_eps > 0.0) {
            return Err(FlowError::BadConfig("tolerances must be positive".into()));
        }
        if !(self.dt_min < self.dt_init && self.dt_init <= self.dt_max) {
            return Err(FlowError::BadConfig(format!(
                "need dt_min < dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(FlowError::BadConfig(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.params.f.len() != self.grid().node_count() {
            return Err(FlowError::BadConfig(
                "speed weight and initial body live on different grids".into(),
            ));
        }
        if self.symmetrize {
            let grid = self.grid();
            let scale = self.params.f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            let f_dev = grid.odd_deviation(&self.params.f).map_err(crate::error::ParamsError::Grid)?;
            if f_dev > 1e-12 * scale.max(1.0) {
                return Err(FlowError::BadConfig(format!(
                    "symmetric mode needs an even speed weight f (odd deviation {f_dev:.3e})"
                )));
            }
            let u_dev = grid
                .odd_deviation(self.initial.values())
                .map_err(crate::error::ParamsError::Grid)?;
            if u_dev > 1e-12 * self.initial.u_max() {
                return Err(FlowError::BadConfig(format!(
                    "symmetric mode needs an origin-symmetric initial body (odd deviation {u_dev:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// State of the flow at one time, with cached curvature data.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: SupportField,
    pub t: f64,
    pub step: usize,
    pub dt: f64,
    pub eta: f64,
    pub j: f64,
    pub z0: f64,
    pub residual: f64,
    pub lambda_min: f64,
    curv: CurvatureData,
}

impl FlowState {
    pub fn curvature(&self) -> &CurvatureData {
        &self.curv
    }

    fn from_body(
        body: SupportField,
        curv: CurvatureData,
        t: f64,
        step: usize,
        dt: f64,
        params: &FlowParams,
    ) -> Self {
        let e = eta(&body, &curv, params);
        let j = j_value(&body, &curv, params);
        let usig: Vec<f64> = body
            .values()
            .iter()
            .zip(curv.sigma_n.iter())
            .map(|(&u, &s)| u * s)
            .collect();
        let z0 = body.grid().integrate(&usig).expect("matching grid");
        let residual = soliton_residual(&body, &curv, params);
        let lambda_min = curv.lambda_min_global();
        Self {
            u: body,
            t,
            step,
            dt,
            eta: e,
            j,
            z0,
            residual,
            lambda_min,
            curv,
        }
    }
}

/// One diagnostics row of a trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub dt: f64,
    pub eta: f64,
    pub j: f64,
    pub z0: f64,
    pub residual: f64,
    pub lambda_min: f64,
    pub u_min: f64,
    pub u_max: f64,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxSteps,
    StepFailure,
    /// Unnormalized runs only: u_min fell below the extinction floor.
    Extinguished,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxSteps => "max_steps",
            Termination::StepFailure => "step_failure",
            Termination::Extinguished => "extinguished",
        }
    }
}

/// Diagnostic time series plus periodic body snapshots.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticRow>,
    pub snapshots: Vec<(f64, SupportField)>,
    pub status: Termination,
    pub mono_violations: usize,
    pub eta_violations: usize,
    /// Steps after burn-in where u_max or 1/u_min exceeded twice the
    /// running historical bound (the C^0 estimates, monitored not proved).
    pub u_bound_violations: usize,
    pub final_state: FlowState,
}

impl Trajectory {
    pub fn final_body(&self) -> &SupportField {
        &self.final_state.u
    }
}

fn push_row(rows: &mut Vec<DiagnosticRow>, state: &FlowState) {
    rows.push(DiagnosticRow {
        t: state.t,
        dt: state.dt,
        eta: state.eta,
        j: state.j,
        z0: state.z0,
        residual: state.residual,
        lambda_min: state.lambda_min,
        u_min: state.u.u_min(),
        u_max: state.u.u_max(),
    });
}

/// Parabolic step bound dt = clamp(cfl * h_min^2 / max D, dt_min, dt_max)
/// with D = beta f u^alpha sigma_n^{-beta-1} lambda_max(cofactor).
pub fn choose_dt(state: &FlowState, config: &FlowConfig) -> f64 {
    let params = &config.params;
    let mut d_max = 0.0f64;
    for i in 0..state.u.values().len() {
        let u = state.u.values()[i];
        let s = state.curv.sigma_n[i];
        // lambda_max of the cofactor matrix equals lambda_max of W for
        // n = 2 and is 1 for n = 1.
        let lam = if state.u.grid().dim() == 2 {
            state.curv.lambda_max[i]
        } else {
            1.0
        };
        let d = params.beta
            * params.f[i]
            * u.powf(params.alpha)
            * sigma_pow(s, -params.beta - 1.0)
            * lam;
        d_max = d_max.max(d);
    }
    let h = state.u.grid().h_min();
    (config.cfl_safety * h * h / d_max).clamp(config.dt_min, config.dt_max)
}

/// Renormalize so that int u sigma_n dx = |S^n|; returns the scale factor.
pub fn renormalize(body: &SupportField, curv: &CurvatureData) -> Result<f64, FlowError> {
    let grid = body.grid();
    let usig: Vec<f64> = body
        .values()
        .iter()
        .zip(curv.sigma_n.iter())
        .map(|(&u, &s)| u * s)
        .collect();
    let vol = grid.integrate(&usig).map_err(crate::error::ParamsError::Grid)?;
    let n = grid.dim() as f64;
    Ok((sphere_area(grid.dim()) / vol).powf(1.0 / (n + 1.0)))
}

fn scale_curvature(curv: &mut CurvatureData, s: f64, n: usize) {
    let sn = if n == 2 { s * s } else { s };
    let sc = if n == 2 { s } else { 1.0 };
    for v in curv.w.tt.iter_mut() {
        *v *= s;
    }
    for v in curv.w.tp.iter_mut() {
        *v *= s;
    }
    for v in curv.w.pp.iter_mut() {
        *v *= s;
    }
    for v in curv.sigma_n.iter_mut() {
        *v *= sn;
    }
    for v in curv.lambda_min.iter_mut() {
        *v *= s;
    }
    for v in curv.lambda_max.iter_mut() {
        *v *= s;
    }
    for v in curv.cofactor.tt.iter_mut() {
        *v *= sc;
    }
    for v in curv.cofactor.tp.iter_mut() {
        *v *= sc;
    }
    for v in curv.cofactor.pp.iter_mut() {
        *v *= sc;
    }
}

/// Rowwise implicit damping of the azimuthal diffusion (n = 2 only).
struct AzimuthalDamper {
    /// cos(m phi_k), sin(m phi_k) for m = 0..=Nphi/2, row-major over k.
    cos_m: Vec<Vec<f64>>,
    sin_m: Vec<Vec<f64>>,
}

impl AzimuthalDamper {
    fn new(grid: &SphereGrid) -> Option<Self> {
        if grid.dim() != 2 {
            return None;
        }
        let np = grid.n_phi();
        let mut cos_m = Vec::with_capacity(np / 2 + 1);
        let mut sin_m = Vec::with_capacity(np / 2 + 1);
        for m in 0..=np / 2 {
            let mut c = Vec::with_capacity(np);
            let mut s = Vec::with_capacity(np);
            for k in 0..np {
                let ang = m as f64 * grid.longitude(k);
                c.push(ang.cos());
                s.push(ang.sin());
            }
            cos_m.push(c);
            sin_m.push(s);
        }
        Some(Self { cos_m, sin_m })
    }

    /// Azimuthal second-difference symbol of the row's stencil at mode m.
    fn symbol(grid: &SphereGrid, j: usize, m: usize) -> f64 {
        let ang = m as f64 * grid.d_phi();
        if grid.pole_zone_row(j) {
            (30.0 - 32.0 * ang.cos() + 2.0 * (2.0 * ang).cos()) / 12.0
        } else {
            2.0 - 2.0 * ang.cos()
        }
    }

    /// u_new = u_base + (I + tau L)^{-1} (u_raw - u_base), where L is the
    /// azimuthal part of the linearized operator with rowwise-frozen
    /// coefficient c_rows.
    fn apply(
        &self,
        grid: &SphereGrid,
        u_base: &[f64],
        u_raw: &mut [f64],
        tau: f64,
        c_rows: &[f64],
    ) {
        let np = grid.n_phi();
        let half = np / 2;
        let mut d = vec![0.0; np];
        for j in 0..grid.n_theta() {
            let sin_dphi = grid.sin_theta_row(j) * grid.d_phi();
            let denom_scale = tau * c_rows[j] / (sin_dphi * sin_dphi);
            if denom_scale * Self::symbol(grid, j, half) < DAMP_SKIP_STRENGTH {
                continue;
            }
            let row = j * np;
            for k in 0..np {
                d[k] = u_raw[row + k] - u_base[row + k];
            }
            for m in 1..=half {
                let gain = 1.0 / (1.0 + denom_scale * Self::symbol(grid, j, m));
                if gain > 0.999 {
                    continue;
                }
                let (mut a, mut b) = (0.0, 0.0);
                let (cm, sm) = (&self.cos_m[m], &self.sin_m[m]);
                for k in 0..np {
                    a += d[k] * cm[k];
                    b += d[k] * sm[k];
                }
                let norm = if m == half { 1.0 } else { 2.0 } / np as f64;
                let coeff = (gain - 1.0) * norm;
                for k in 0..np {
                    d[k] += coeff * (a * cm[k] + b * sm[k]);
                }
            }
            for k in 0..np {
                u_raw[row + k] = u_base[row + k] + d[k];
            }
        }
    }
}

/// Rowwise maximum of the azimuthal diffusion coefficient
/// beta f u^alpha sigma^{-beta-1} cof_pp, with a safety margin.
fn damping_coefficients(
    state: &FlowState,
    params: &FlowParams,
    grid: &SphereGrid,
) -> Vec<f64> {
    if grid.dim() != 2 {
        return Vec::new();
    }
    let np = grid.n_phi();
    let mut rows = vec![0.0f64; grid.n_theta()];
    for j in 0..grid.n_theta() {
        let mut worst = 0.0f64;
        for k in 0..np {
            let i = j * np + k;
            let u = state.u.values()[i];
            let s = state.curv.sigma_n[i];
            let c = params.beta
                * params.f[i]
                * u.powf(params.alpha)
                * sigma_pow(s, -params.beta - 1.0)
                * state.curv.cofactor.pp[i];
            worst = worst.max(c);
        }
        rows[j] = DAMP_COEFF_MARGIN * worst;
    }
    rows
}

struct Reject {
    node: usize,
    lambda_min: f64,
}

enum StepKind {
    Normalized,
    Unnormalized,
}

struct Engine<'a> {
    config: &'a FlowConfig,
    damper: Option<AzimuthalDamper>,
    kind: StepKind,
}

impl<'a> Engine<'a> {
    fn new(config: &'a FlowConfig, kind: StepKind) -> Self {
        Self {
            damper: AzimuthalDamper::new(config.grid()),
            config,
            kind,
        }
    }

    fn rhs(&self, body: &SupportField, curv: &CurvatureData) -> Vec<f64> {
        match self.kind {
            StepKind::Normalized => normalized_rhs(body, curv, &self.config.params),
            StepKind::Unnormalized => {
                let r = rho(body, curv, &self.config.params);
                body.values()
                    .iter()
                    .zip(r.iter())
                    .map(|(&u, &rr)| -rr * u)
                    .collect()
            }
        }
    }

    fn try_advance(&self, state: &FlowState, dt: f64) -> Result<FlowState, Reject> {
        let config = self.config;
        let grid = state.u.grid().clone();
        let params = &config.params;
        let u0 = state.u.values();

        let reject_nonpositive = |u: &[f64]| -> Option<Reject> {
            u.iter()
                .enumerate()
                .find(|(_, &v)| !(v > 0.0))
                .map(|(i, _)| Reject {
                    node: i,
                    lambda_min: f64::NEG_INFINITY,
                })
        };
        let reject_of = |err: &crate::error::BodyError| -> Reject {
            match err {
                crate::error::BodyError::NonConvex { node, lambda_min } => Reject {
                    node: *node,
                    lambda_min: *lambda_min,
                },
                crate::error::BodyError::NonPositiveSupport { node, .. } => Reject {
                    node: *node,
                    lambda_min: f64::NEG_INFINITY,
                },
                _ => Reject {
                    node: 0,
                    lambda_min: f64::NAN,
                },
            }
        };

        let c_rows = damping_coefficients(state, params, &grid);
        let damp = |raw: &mut Vec<f64>, tau: f64| {
            if let Some(d) = &self.damper {
                d.apply(&grid, u0, raw, tau, &c_rows);
            }
        };

        // Stage 1: half step. Bodies are rebuilt with the run's symmetry
        // mode, not the start body's flag: evolving a symmetric start in a
        // non-symmetric regime must not project onto even functions.
        let k1 = self.rhs(&state.u, &state.curv);
        let mut u_half: Vec<f64> = u0
            .iter()
            .zip(k1.iter())
            .map(|(&u, &k)| u + 0.5 * dt * k)
            .collect();
        damp(&mut u_half, 0.5 * dt);
        if let Some(r) = reject_nonpositive(&u_half) {
            return Err(r);
        }
        let body_half = SupportField::new(grid.clone(), u_half, config.symmetrize)
            .map_err(|e| reject_of(&e))?;
        let curv_half = body_half
            .curvature(config.convexity_eps)
            .map_err(|e| reject_of(&e))?;

        // Stage 2: full step with midpoint slope.
        let k2 = self.rhs(&body_half, &curv_half);
        let mut u_new: Vec<f64> = u0
            .iter()
            .zip(k2.iter())
            .map(|(&u, &k)| u + dt * k)
            .collect();
        damp(&mut u_new, dt);
        if config.symmetrize {
            u_new = grid.symmetrize(&u_new).expect("matching grid");
        }
        if let Some(r) = reject_nonpositive(&u_new) {
            return Err(r);
        }
        let body_new = SupportField::new(grid.clone(), u_new, config.symmetrize)
            .map_err(|e| reject_of(&e))?;
        let mut curv_new = body_new
            .curvature(config.convexity_eps)
            .map_err(|e| reject_of(&e))?;

        // Renormalization.
        let renormalize_due = matches!(self.kind, StepKind::Normalized)
            && config.renormalize_every > 0
            && (state.step + 1) % config.renormalize_every == 0;
        let body_final = if renormalize_due {
            let s = renormalize(&body_new, &curv_new).expect("validated grid");
            scale_curvature(&mut curv_new, s, grid.dim());
            body_new.scale(s).map_err(|e| reject_of(&e))?
        } else {
            body_new
        };

        Ok(FlowState::from_body(
            body_final,
            curv_new,
            state.t + dt,
            state.step + 1,
            dt,
            params,
        ))
    }

    fn step(&self, state: &mut FlowState) -> Result<(), FlowError> {
        let mut dt = choose_dt(state, self.config);
        loop {
            match self.try_advance(state, dt) {
                Ok(next) => {
                    *state = next;
                    return Ok(());
                }
                Err(reject) => {
                    dt *= 0.5;
                    if dt < self.config.dt_min {
                        return Err(FlowError::StepFailure {
                            t: state.t,
                            step: state.step,
                            dt,
                            node: reject.node,
                            lambda_min: reject.lambda_min,
                        });
                    }
                }
            }
        }
    }
}

/// Initial state: validated, optionally symmetrized and renormalized.
pub fn initial_state(config: &FlowConfig) -> Result<FlowState, FlowError> {
    config.validate()?;
    let grid = config.grid().clone();
    let mut u = config.initial.values().to_vec();
    if config.symmetrize {
        u = grid.symmetrize(&u).map_err(crate::error::ParamsError::Grid)?;
    }
    let body =
        SupportField::new(grid.clone(), u, config.symmetrize).map_err(FlowError::Body)?;
    let curv = body.curvature(config.convexity_eps).map_err(FlowError::Body)?;
    let (body, curv) = if config.renormalize_every > 0 {
        let s = renormalize(&body, &curv)?;
        let mut curv = curv;
        scale_curvature(&mut curv, s, grid.dim());
        (body.scale(s).map_err(FlowError::Body)?, curv)
    } else {
        (body, curv)
    };
    let mut state = FlowState::from_body(body, curv, 0.0, 0, config.dt_init, &config.params);
    state.dt = choose_dt(&state, config);
    Ok(state)
}

/// Advance one accepted step of the normalized flow (with rejection and
/// dt halving inside).
pub fn step(state: &mut FlowState, config: &FlowConfig) -> Result<(), FlowError> {
    Engine::new(config, StepKind::Normalized).step(state)
}

/// Advance one accepted step of the unnormalized flow d_t u = -f u^a s^-b.
pub fn unnormalized_step(state: &mut FlowState, config: &FlowConfig) -> Result<(), FlowError> {
    Engine::new(config, StepKind::Unnormalized).step(state)
}

fn run_loop(config: &FlowConfig, kind: StepKind) -> Result<Trajectory, FlowError> {
    let normalized = matches!(kind, StepKind::Normalized);
    let engine = Engine::new(config, kind);
    let mut state = initial_state(config)?;
    let direction = config.params.regime().monotonicity_direction();

    let mut rows = Vec::with_capacity(config.max_steps.min(1 << 20) + 1);
    push_row(&mut rows, &state);
    let mut snapshots = vec![(state.t, state.u.clone())];
    let mut mono_violations = 0usize;
    let mut eta_violations = 0usize;
    let mut u_bound_violations = 0usize;
    let mut eta_running_max = state.eta;
    let mut u_running_max = state.u.u_max();
    let mut u_inv_running_max = 1.0 / state.u.u_min();
    let mut status = Termination::MaxSteps;

    let mut prev_j = state.j;
    for _ in 0..config.max_steps {
        match engine.step(&mut state) {
            Ok(()) => {}
            Err(FlowError::StepFailure { .. }) => {
                status = Termination::StepFailure;
                break;
            }
            Err(e) => return Err(e),
        }
        push_row(&mut rows, &state);
        if config.snapshot_every > 0 && state.step % config.snapshot_every == 0 {
            snapshots.push((state.t, state.u.clone()));
        }

        // Monotonicity of J, with the discretization allowance.
        let tol_mono = 1e-8 * prev_j.abs() + 1e-10;
        let dj = state.j - prev_j;
        if direction * dj < -tol_mono {
            mono_violations += 1;
        }
        // Uniform-bound monitors for eta and for the C^0 estimates.
        if state.step > ETA_BURN_IN_STEPS {
            if state.eta > 2.0 * eta_running_max {
                eta_violations += 1;
            }
            if state.u.u_max() > 2.0 * u_running_max
                || 1.0 / state.u.u_min() > 2.0 * u_inv_running_max
            {
                u_bound_violations += 1;
            }
        }
        eta_running_max = eta_running_max.max(state.eta);
        u_running_max = u_running_max.max(state.u.u_max());
        u_inv_running_max = u_inv_running_max.max(1.0 / state.u.u_min());

        let j_rate = dj.abs() / state.dt;
        prev_j = state.j;

        if normalized && state.residual < config.tol_residual && j_rate < config.tol_j_rate {
            status = Termination::Converged;
            break;
        }
        if !normalized && state.u.u_min() < config.extinction_floor {
            status = Termination::Extinguished;
            break;
        }
    }

    if snapshots.last().map(|(t, _)| *t) != Some(state.t) {
        snapshots.push((state.t, state.u.clone()));
    }
    Ok(Trajectory {
        rows,
        snapshots,
        status,
        mono_violations,
        eta_violations,
        u_bound_violations,
        final_state: state,
    })
}

/// Run the normalized flow until convergence or a limit is reached.
pub fn run(config: &FlowConfig) -> Result<Trajectory, FlowError> {
    run_loop(config, StepKind::Normalized)
}

/// Run the unnormalized flow; terminates at the extinction floor.
pub fn run_unnormalized(config: &FlowConfig) -> Result<Trajectory, FlowError> {
    run_loop(config, StepKind::Unnormalized)
}

/// Map the times of an unnormalized trajectory to normalized time via
/// tau = int_0^t (|S^n| / V(s))^{(1 + n beta - alpha)/(n + 1)} ds,
/// using the recorded Z0 column (the running volume) and the trapezoid rule.
pub fn time_rescale(rows: &[DiagnosticRow], n: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let area = sphere_area(n);
    let e = (1.0 + n as f64 * beta - alpha) / (n as f64 + 1.0);
    let integrand: Vec<f64> = rows.iter().map(|r| (area / r.z0).powf(e)).collect();
    let mut tau = Vec::with_capacity(rows.len());
    let mut acc = 0.0;
    for i in 0..rows.len() {
        if i > 0 {
            acc += 0.5 * (integrand[i] + integrand[i - 1]) * (rows[i].t - rows[i - 1].t);
        }
        tau.push(acc);
    }
    tau
}

/// Regime-C dissipation for trajectory-level checks.
pub fn dissipation(state: &FlowState, params: &FlowParams) -> f64 {
    entropy_dissipation(&state.u, &state.curv, params)
}
