//! Batch verification of the inequality and identity oracles over seeded
//! random convex bodies: Alexandrov-Fenchel, its gradient-form special
//! case, Blaschke-Santalo, the polar curvature identity, the Z_{1/beta}
//! derivative identity, and the Hoelder ladder.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{
    make_shape, mixed_volume, polar_identity_residual, PolyTerm, ShapeKind, SupportField,
    DEFAULT_CONVEXITY_EPS,
};
use crate::error::BodyError;
use crate::functionals::{dzp_identity_residual, z_p, FlowParams};
use crate::sphere::{sphere_area, SphereGrid};

/// Names of the individual checks, in suite order.
pub const CHECK_NAMES: [&str; 6] = ["af", "af-gradient", "blaschke-santalo", "polar", "dzp", "holder"];

/// Result of one check over a batch of sampled bodies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    /// Worst signed margin over the batch; negative means violation.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Per-check tolerances. A tolerance of zero makes the check fail on
/// quadrature error, by design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyTolerances {
    pub af: f64,
    pub af_gradient: f64,
    pub blaschke_santalo: f64,
    pub polar: f64,
    pub dzp: f64,
    pub holder: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            af: 1e-6,
            af_gradient: 1e-6,
            blaschke_santalo: 1e-3,
            polar: 5e-3,
            dzp: 1e-2,
            holder: 1e-9,
        }
    }
}

impl VerifyTolerances {
    pub fn uniform(tol: f64) -> Self {
        Self {
            af: tol,
            af_gradient: tol,
            blaschke_santalo: tol,
            polar: tol,
            dzp: tol,
            holder: tol,
        }
    }
}

/// Basis of even perturbation monomials up to degree 4.
fn even_modes() -> Vec<PolyTerm> {
    let mut modes = Vec::new();
    let degree2 = [[2, 0, 0], [0, 2, 0], [0, 0, 2], [1, 1, 0], [1, 0, 1], [0, 1, 1]];
    for powers in degree2 {
        modes.push(PolyTerm {
            coeff: 1.0,
            powers,
        });
    }
    let degree4 = [[4, 0, 0], [0, 0, 4], [2, 2, 0], [2, 0, 2], [1, 1, 2], [3, 1, 0]];
    for powers in degree4 {
        modes.push(PolyTerm {
            coeff: 1.0,
            powers,
        });
    }
    modes
}

/// Random origin-symmetric convex perturbation of the unit ball. The
/// amplitude is reduced until the convexity check passes.
pub fn random_even_body(
    grid: &Arc<SphereGrid>,
    rng: &mut impl Rng,
    amplitude: f64,
) -> Result<SupportField, BodyError> {
    let basis = even_modes();
    let raw: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm: f64 = raw.iter().map(|c| c.abs()).sum::<f64>().max(1e-12);
    let mut eps = amplitude;
    for _ in 0..30 {
        let modes: Vec<PolyTerm> = basis
            .iter()
            .zip(raw.iter())
            .map(|(t, &c)| PolyTerm {
                coeff: c / norm,
                powers: t.powers,
            })
            .collect();
        let shape = ShapeKind::Perturbed {
            base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
            eps,
            modes,
        };
        match make_shape(&shape, grid, DEFAULT_CONVEXITY_EPS) {
            Ok(body) => return Ok(body),
            Err(_) => eps *= 0.7,
        }
    }
    make_shape(&ShapeKind::Sphere { radius: 1.0 }, grid, DEFAULT_CONVEXITY_EPS)
}

/// Random general (not necessarily even) convex body: a random even body
/// translated by a small random offset.
pub fn random_body(
    grid: &Arc<SphereGrid>,
    rng: &mut impl Rng,
    amplitude: f64,
) -> Result<SupportField, BodyError> {
    let even = random_even_body(grid, rng, amplitude)?;
    let offset: [f64; 3] = [
        rng.gen_range(-0.15..0.15),
        rng.gen_range(-0.15..0.15),
        if grid.dim() == 2 {
            rng.gen_range(-0.15..0.15)
        } else {
            0.0
        },
    ];
    let shifted: Vec<f64> = even
        .values()
        .iter()
        .zip(grid.nodes().iter())
        .map(|(&u, x)| u + x[0] * offset[0] + x[1] * offset[1] + x[2] * offset[2])
        .collect();
    SupportField::new(grid.clone(), shifted, false)
}

/// Random low-order test function (any parity, sign-indefinite).
fn random_psi(grid: &SphereGrid, rng: &mut impl Rng) -> Vec<f64> {
    let c0 = rng.gen_range(-1.0..1.0);
    let c: [f64; 3] = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ];
    let q: [f64; 3] = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ];
    grid.nodes()
        .iter()
        .map(|x| {
            c0 + c[0] * x[0]
                + c[1] * x[1]
                + c[2] * x[2]
                + q[0] * x[0] * x[1]
                + q[1] * x[1] * x[2]
                + q[2] * (x[2] * x[2] - 1.0 / 3.0)
        })
        .collect()
}

fn seeded(seed: u64, check: u64, sample: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (check << 32) ^ sample.wrapping_mul(0x9E37_79B9))
}

/// Alexandrov-Fenchel: V(v,u,..)^2 >= V(v,v,u,..) V(u,..,u), normalized by
/// the left-hand side. Returns the signed margin.
pub fn af_margin(v: &SupportField, u: &SupportField) -> Result<f64, BodyError> {
    let grid = u.grid();
    let n = grid.dim();
    let mut us = vec![u; n];
    let vuu = mixed_volume(v, &us)?;
    us[0] = v;
    let vvu = mixed_volume(v, &us)?;
    let uuu = mixed_volume(u, &vec![u; n])?;
    Ok((vuu * vuu - vvu * uuu) / (vuu * vuu).max(1e-300))
}

/// Gradient form of Alexandrov-Fenchel:
/// (int u psi sigma_n)^2 >= |S^n| (int u sigma_n psi^2 - int u^2 s^{ij} psi_i psi_j).
pub fn af_gradient_margin(body: &SupportField, psi: &[f64]) -> Result<f64, BodyError> {
    let grid = body.grid();
    let curv = body.curvature(DEFAULT_CONVEXITY_EPS)?;
    let gpsi = grid.gradient(psi)?;
    let u = body.values();
    let n = grid.node_count();
    let mut upsig = vec![0.0; n];
    let mut upsig2 = vec![0.0; n];
    let mut grad_term = vec![0.0; n];
    for i in 0..n {
        upsig[i] = u[i] * psi[i] * curv.sigma_n[i];
        upsig2[i] = u[i] * psi[i] * psi[i] * curv.sigma_n[i];
        grad_term[i] = if grid.dim() == 1 {
            u[i] * u[i] * curv.cofactor.tt[i] * gpsi.theta[i] * gpsi.theta[i]
        } else {
            u[i] * u[i]
                * (curv.cofactor.tt[i] * gpsi.theta[i] * gpsi.theta[i]
                    + 2.0 * curv.cofactor.tp[i] * gpsi.theta[i] * gpsi.phi[i]
                    + curv.cofactor.pp[i] * gpsi.phi[i] * gpsi.phi[i])
        };
    }
    let rhs = grid.integrate(&upsig)?.powi(2);
    let lhs = sphere_area(grid.dim()) * (grid.integrate(&upsig2)? - grid.integrate(&grad_term)?);
    Ok((rhs - lhs) / rhs.abs().max(lhs.abs()).max(1e-300))
}

/// Blaschke-Santalo ratio vol(O) vol(O*) / vol(B_1)^2 for an even body,
/// with the dual volume through the exact identity r* = 1/u.
pub fn blaschke_santalo_ratio(body: &SupportField) -> Result<f64, BodyError> {
    let grid = body.grid();
    let n = grid.dim() as i32;
    let vol = body.volume()?;
    let dual_integrand: Vec<f64> = body.values().iter().map(|u| u.powi(-(n + 1))).collect();
    let vol_dual = grid.integrate(&dual_integrand)?;
    let ball = sphere_area(grid.dim());
    Ok(vol * vol_dual / (ball * ball))
}

/// Hoelder ladder margin for a random triple p < q < s, normalized by Z_0.
fn holder_margin(body: &SupportField, params: &FlowParams, rng: &mut impl Rng) -> Result<f64, BodyError> {
    let curv = body.curvature(DEFAULT_CONVEXITY_EPS)?;
    let mut exps = [
        rng.gen_range(-2.0..3.0),
        rng.gen_range(-2.0..3.0),
        rng.gen_range(-2.0..3.0),
    ];
    exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let [p, q, s] = exps;
    if s - p < 1e-3 || q - p < 1e-4 || s - q < 1e-4 {
        return Ok(0.0);
    }
    let z0 = z_p(0.0, body, &curv, params);
    let zp = z_p(p, body, &curv, params) / z0;
    let zq = z_p(q, body, &curv, params) / z0;
    let zs = z_p(s, body, &curv, params) / z0;
    let bound = zp.powf((s - q) / (s - p)) * zs.powf((q - p) / (s - p));
    Ok((bound - zq) / bound.max(1e-300))
}

fn run_check(
    name: &str,
    grid: &Arc<SphereGrid>,
    seed: u64,
    samples: usize,
    tolerance: f64,
    check_idx: u64,
) -> Result<CheckResult, BodyError> {
    let margins: Vec<Result<f64, BodyError>> = (0..samples)
        .into_par_iter()
        .map(|s| -> Result<f64, BodyError> {
            let mut rng = seeded(seed, check_idx, s as u64);
            match name {
                "af" => {
                    let u = random_even_body(grid, &mut rng, 0.1)?;
                    let v = random_body(grid, &mut rng, 0.1)?;
                    af_margin(&v, &u)
                }
                "af-gradient" => {
                    let u = random_even_body(grid, &mut rng, 0.1)?;
                    let psi = random_psi(grid, &mut rng);
                    af_gradient_margin(&u, &psi)
                }
                "blaschke-santalo" => {
                    let u = random_even_body(grid, &mut rng, 0.1)?;
                    // Margin convention: tolerance - (ratio - 1) >= 0.
                    Ok(1.0 - blaschke_santalo_ratio(&u)?)
                }
                "polar" => {
                    let u = random_even_body(grid, &mut rng, 0.05)?;
                    Ok(-polar_identity_residual(&u)?)
                }
                "dzp" => {
                    let u = random_even_body(grid, &mut rng, 0.1)?;
                    let params = FlowParams::constant(1.0, 1.0, 1.0, grid)
                        .expect("regime A parameters");
                    Ok(-dzp_identity_residual(&u, &params, DEFAULT_CONVEXITY_EPS, 1e-4)?)
                }
                "holder" => {
                    let u = random_even_body(grid, &mut rng, 0.12)?;
                    let params = FlowParams::constant(1.0, 1.0, 1.0, grid)
                        .expect("regime A parameters");
                    holder_margin(&u, &params, &mut rng)
                }
                other => panic!("unknown check {other}"),
            }
        })
        .collect();
    let mut worst = f64::INFINITY;
    for m in margins {
        worst = worst.min(m?);
    }
    Ok(CheckResult {
        name: name.to_string(),
        samples,
        worst_margin: worst,
        tolerance,
        pass: worst >= -tolerance,
    })
}

/// Run the selected checks (all of `CHECK_NAMES` when `checks` is empty).
pub fn run_suite(
    grid: &Arc<SphereGrid>,
    seed: u64,
    samples: usize,
    checks: &[String],
    tols: &VerifyTolerances,
) -> Result<Vec<CheckResult>, BodyError> {
    let selected: Vec<&str> = if checks.is_empty() {
        CHECK_NAMES.to_vec()
    } else {
        CHECK_NAMES
            .iter()
            .copied()
            .filter(|n| checks.iter().any(|c| c == n))
            .collect()
    };
    let mut results = Vec::new();
    for (idx, name) in selected.iter().enumerate() {
        let tol = match *name {
            "af" => tols.af,
            "af-gradient" => tols.af_gradient,
            "blaschke-santalo" => tols.blaschke_santalo,
            "polar" => tols.polar,
            "dzp" => tols.dzp,
            "holder" => tols.holder,
            _ => unreachable!(),
        };
        results.push(run_check(name, grid, seed, samples, tol, idx as u64)?);
    }
    Ok(results)
}
