//! The scalar quantities tracked along the flow: the speed density rho,
//! the normalization eta(t), the one-parameter family Z_p, the monotone
//! functional J, and the identity checks built from them.

use serde::{Deserialize, Serialize};

use crate::body::{CurvatureData, SupportField};
use crate::error::ParamsError;
use crate::sphere::{sphere_area, SphereGrid};

/// Exponent regime of the flow speed f u^alpha sigma_n^{-beta}.
///
/// A: alpha > 1 - beta (J = Z_{1/beta} non-increasing);
/// B: 1 - n beta - 2 beta < alpha < 1 - beta (J non-decreasing);
/// C: alpha = 0, beta = 1 (entropy functional, non-increasing);
/// D: alpha >= 1 + n beta (Z_{1/beta} branch, no symmetry required).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    A,
    B,
    C,
    D,
}

impl Regime {
    /// Case split by (alpha, beta) for dimension n. `None` when the pair
    /// is outside every admissible regime (including alpha = 1 - beta).
    pub fn classify(alpha: f64, beta: f64, n: usize) -> Option<Regime> {
        if !(beta > 0.0) {
            return None;
        }
        let nf = n as f64;
        if alpha == 0.0 && beta == 1.0 {
            Some(Regime::C)
        } else if alpha >= 1.0 + nf * beta {
            Some(Regime::D)
        } else if alpha == 1.0 - beta {
            None
        } else if alpha > 1.0 - beta {
            Some(Regime::A)
        } else if alpha > 1.0 - nf * beta - 2.0 * beta {
            Some(Regime::B)
        } else {
            None
        }
    }

    /// Requires origin-symmetric data (initial body and even f).
    pub fn needs_symmetry(self) -> bool {
        !matches!(self, Regime::D)
    }

    /// Sign of dJ/dt along the flow: -1 non-increasing, +1 non-decreasing.
    pub fn monotonicity_direction(self) -> f64 {
        match self {
            Regime::B => 1.0,
            _ => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::A => "A",
            Regime::B => "B",
            Regime::C => "C",
            Regime::D => "D",
        }
    }
}

/// Validated flow exponents and anisotropy weight.
#[derive(Debug, Clone)]
pub struct FlowParams {
    pub alpha: f64,
    pub beta: f64,
    /// Positive weight f sampled on the grid.
    pub f: Vec<f64>,
    regime: Regime,
}

impl FlowParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        f: Vec<f64>,
        grid: &SphereGrid,
    ) -> Result<Self, ParamsError> {
        if !(beta > 0.0) {
            return Err(ParamsError::NonPositiveBeta(beta));
        }
        if f.len() != grid.node_count() {
            return Err(ParamsError::Grid(crate::error::GridError::SizeMismatch {
                expected: grid.node_count(),
                got: f.len(),
            }));
        }
        for (i, &v) in f.iter().enumerate() {
            if !(v > 0.0) {
                return Err(ParamsError::NonPositiveSpeed { node: i, value: v });
            }
        }
        let regime = match Regime::classify(alpha, beta, grid.dim()) {
            Some(r) => r,
            None => {
                if alpha == 1.0 - beta {
                    return Err(ParamsError::ExcludedBoundary { alpha, beta });
                }
                return Err(ParamsError::OutsideRegimes { alpha, beta });
            }
        };
        Ok(Self {
            alpha,
            beta,
            f,
            regime,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Constant-weight convenience constructor (f = value).
    pub fn constant(
        alpha: f64,
        beta: f64,
        value: f64,
        grid: &SphereGrid,
    ) -> Result<Self, ParamsError> {
        Self::new(alpha, beta, vec![value; grid.node_count()], grid)
    }
}

/// sigma^{-beta} through exp(-beta log sigma); sigma > 0 is guaranteed by
/// the convexity guard upstream.
#[inline]
pub(crate) fn sigma_pow(sigma: f64, exponent: f64) -> f64 {
    (exponent * sigma.ln()).exp()
}

/// Speed density rho = f u^{alpha-1} sigma_n^{-beta}, nodewise.
pub fn rho(body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> Vec<f64> {
    body.values()
        .iter()
        .zip(curv.sigma_n.iter())
        .zip(params.f.iter())
        .map(|((&u, &s), &f)| f * u.powf(params.alpha - 1.0) * sigma_pow(s, -params.beta))
        .collect()
}

/// Normalization speed eta = int f u^alpha sigma_n^{1-beta} dx / |S^n|,
/// with the exact sphere area in the denominator.
pub fn eta(body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> f64 {
    let grid = body.grid();
    let integrand: Vec<f64> = body
        .values()
        .iter()
        .zip(curv.sigma_n.iter())
        .zip(params.f.iter())
        .map(|((&u, &s), &f)| f * u.powf(params.alpha) * sigma_pow(s, 1.0 - params.beta))
        .collect();
    grid.integrate(&integrand).expect("matching grid") / sphere_area(grid.dim())
}

/// Z_p = int u sigma_n rho^p dx. Z_0 is the volume int u sigma_n dx.
pub fn z_p(p: f64, body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> f64 {
    let grid = body.grid();
    let r = rho(body, curv, params);
    let integrand: Vec<f64> = body
        .values()
        .iter()
        .zip(curv.sigma_n.iter())
        .zip(r.iter())
        .map(|((&u, &s), &rr)| u * s * rr.powf(p))
        .collect();
    grid.integrate(&integrand).expect("matching grid")
}

/// The monotone functional J: Z_{1/beta} in regimes A, B and D;
/// the entropy int f log u dx / int f dx - log(int u sigma_n dx) / (n+1)
/// in regime C.
pub fn j_value(body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> f64 {
    match params.regime {
        Regime::C => {
            let grid = body.grid();
            let n = grid.dim() as f64;
            let flogu: Vec<f64> = body
                .values()
                .iter()
                .zip(params.f.iter())
                .map(|(&u, &f)| f * u.ln())
                .collect();
            let usig: Vec<f64> = body
                .values()
                .iter()
                .zip(curv.sigma_n.iter())
                .map(|(&u, &s)| u * s)
                .collect();
            let int_f = grid.integrate(&params.f).expect("matching grid");
            grid.integrate(&flogu).expect("matching grid") / int_f
                - grid.integrate(&usig).expect("matching grid").ln() / (n + 1.0)
        }
        _ => z_p(1.0 / params.beta, body, curv, params),
    }
}

/// Soliton residual sup |rho / c - 1| with c = Z_1 / Z_0, the volume
/// weighted mean of rho. On the normalized trajectory Z_0 = |S^n| and c
/// coincides with eta; the ratio form makes the residual scale invariant,
/// so every sphere is an exact soliton.
pub fn soliton_residual(body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> f64 {
    let c = z_p(1.0, body, curv, params) / z_p(0.0, body, curv, params);
    rho(body, curv, params)
        .iter()
        .map(|r| (r / c - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Right-hand side of the normalized flow, -rho u + eta u, evaluated
/// nodewise. Shared by the engine and the derivative identity check.
pub fn normalized_rhs(body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> Vec<f64> {
    let e = eta(body, curv, params);
    rho(body, curv, params)
        .iter()
        .zip(body.values().iter())
        .map(|(&r, &u)| (e - r) * u)
        .collect()
}

/// Dissipation integral of the regime-C entropy:
/// dJ/dt = - int u^{-1} sigma_n (f sigma_n^{-1} - eta u)^2 dx / int f dx.
pub fn entropy_dissipation(body: &SupportField, curv: &CurvatureData, params: &FlowParams) -> f64 {
    let grid = body.grid();
    let e = eta(body, curv, params);
    let integrand: Vec<f64> = body
        .values()
        .iter()
        .zip(curv.sigma_n.iter())
        .zip(params.f.iter())
        .map(|((&u, &s), &f)| {
            let d = f / s - e * u;
            s / u * d * d
        })
        .collect();
    let int_f = grid.integrate(&params.f).expect("matching grid");
    -grid.integrate(&integrand).expect("matching grid") / int_f
}

/// Closed-form derivative of Z_{1/beta} along the normalized flow:
/// dZ_{1/beta}/dt = ((1 - alpha - beta)/beta) (Z_{1+1/beta} - Z_1 Z_{1/beta} / |S^n|).
pub fn dz_one_over_beta_closed_form(
    body: &SupportField,
    curv: &CurvatureData,
    params: &FlowParams,
) -> f64 {
    let area = sphere_area(body.grid().dim());
    let p = 1.0 / params.beta;
    let z1 = z_p(1.0, body, curv, params);
    let zp = z_p(p, body, curv, params);
    let zp1 = z_p(1.0 + p, body, curv, params);
    (1.0 - params.alpha - params.beta) / params.beta * (zp1 - z1 * zp / area)
}

/// Relative discrepancy between a centered finite difference of Z_{1/beta}
/// across one small flow step and the closed-form derivative.
///
/// The probe steps are pure explicit-midpoint updates of the normalized
/// flow (no renormalization or stabilization), of size +-dt/2.
pub fn dzp_identity_residual(
    body: &SupportField,
    params: &FlowParams,
    eps_convex: f64,
    dt: f64,
) -> Result<f64, crate::error::BodyError> {
    let p = 1.0 / params.beta;
    let curv = body.curvature(eps_convex)?;
    let half = 0.5 * dt;

    let grid = body.grid().clone();
    let probe = |sign: f64| -> Result<f64, crate::error::BodyError> {
        let h = sign * half;
        let k1 = normalized_rhs(body, &curv, params);
        let u_mid: Vec<f64> = body
            .values()
            .iter()
            .zip(k1.iter())
            .map(|(&u, &k)| u + 0.5 * h * k)
            .collect();
        let mid = SupportField::new(grid.clone(), u_mid, false)?;
        let curv_mid = mid.curvature(eps_convex)?;
        let k2 = normalized_rhs(&mid, &curv_mid, params);
        let u_new: Vec<f64> = body
            .values()
            .iter()
            .zip(k2.iter())
            .map(|(&u, &k)| u + h * k)
            .collect();
        let stepped = SupportField::new(grid.clone(), u_new, false)?;
        let curv_new = stepped.curvature(eps_convex)?;
        Ok(z_p(p, &stepped, &curv_new, params))
    };

    let z_plus = probe(1.0)?;
    let z_minus = probe(-1.0)?;
    let fd = (z_plus - z_minus) / dt;
    let cf = dz_one_over_beta_closed_form(body, &curv, params);
    let scale = z_p(1.0 + p, body, &curv, params).abs().max(1e-300);
    Ok((fd - cf).abs() / cf.abs().max(1e-10 * scale))
}
