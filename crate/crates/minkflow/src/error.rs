//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while constructing or using a sphere grid.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GridError {
    #[error("invalid dimension n = {0}; only n = 1 and n = 2 are supported")]
    InvalidDimension(usize),
    #[error("resolution too small: {axis} = {got}, need at least {min}")]
    ResolutionTooSmall {
        axis: &'static str,
        got: usize,
        min: usize,
    },
    #[error("{axis} = {got} must be even (antipodal pairing requires evenness)")]
    OddCount { axis: &'static str, got: usize },
    #[error("field length {got} does not match grid node count {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// Errors raised by convex-body operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BodyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("support function is not positive at node {node}: u = {value}")]
    NonPositiveSupport { node: usize, value: f64 },
    #[error("body is not uniformly convex at node {node}: lambda_min = {lambda_min}")]
    NonConvex { node: usize, lambda_min: f64 },
    #[error("radial graph is not convex at node {node}: det hbar = {det}")]
    NonConvexRadial { node: usize, det: f64 },
    #[error("no grid node faces direction {node} (internal error)")]
    DegenerateDirection { node: usize },
    #[error("shape parameters invalid: {0}")]
    BadShape(String),
    #[error("mixed operation expects exactly {expected} matrix arguments, got {got}")]
    WrongArity { expected: usize, got: usize },
}

/// Errors raised while validating flow parameters (alpha, beta, f).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParamsError {
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("speed weight f must be positive everywhere; f = {value} at node {node}")]
    NonPositiveSpeed { node: usize, value: f64 },
    #[error("alpha = 1 - beta is excluded (alpha = {alpha}, beta = {beta})")]
    ExcludedBoundary { alpha: f64, beta: f64 },
    #[error("(alpha, beta) = ({alpha}, {beta}) lies outside every admissible regime")]
    OutsideRegimes { alpha: f64, beta: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Errors raised by the flow engine.
#[derive(Debug, Clone, Error)]
pub enum FlowError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error("invalid flow configuration: {0}")]
    BadConfig(String),
    #[error("time step underflow at t = {t} (step {step}): dt = {dt} < dt_min; worst node {node}, lambda_min = {lambda_min}")]
    StepFailure {
        t: f64,
        step: usize,
        dt: f64,
        node: usize,
        lambda_min: f64,
    },
    #[error("support function fell below extinction floor {floor} at t = {t} (u_min = {u_min})")]
    Extinction { t: f64, u_min: f64, floor: f64 },
}

/// Errors raised by the L_p Minkowski front end.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("p = {p} is out of range; the solver accepts p in (-n-1, +inf) = ({lo}, +inf), open at the left endpoint")]
    POutOfRange { p: f64, lo: f64 },
    #[error("phi must be even (origin-symmetric data) when p < n + 1; max odd deviation {max_dev}")]
    PhiNotEven { max_dev: f64 },
    #[error("uniqueness probe refused: p = {0} is outside the proven uniqueness range p > 1")]
    ProbeRefused(f64),
    #[error("flow did not converge: terminated with status {status} after {steps} steps (residual {residual})")]
    NotConverged {
        status: &'static str,
        steps: usize,
        residual: f64,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Params(#[from] ParamsError),
}
