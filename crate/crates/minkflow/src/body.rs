//! Support-function representation of convex bodies and the curvature
//! quantities built from it: the radii matrix W_u = Hess u + u I, its
//! elementary symmetric function sigma_n and cofactor matrix, radial and
//! polar-dual conversions, mixed volumes, and analytic shape constructors.
//!
//! Volume convention: Vol(Omega) = int u sigma_n dx = int r^{n+1} dxi,
//! without the 1/(n+1) normalization common elsewhere. With it the unit
//! ball has volume |S^n| and the normalized flow pins int u sigma_n = |S^n|.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::BodyError;
use crate::sphere::{SphereGrid, SymMatrixField};

/// Default guard for the uniform-convexity check: lambda_min must exceed it.
pub const DEFAULT_CONVEXITY_EPS: f64 = 1e-8;

/// Monomial term c * x1^p0 * x2^p1 * x3^p2 of a spherical polynomial.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolyTerm {
    pub coeff: f64,
    pub powers: [u32; 3],
}

impl PolyTerm {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let mut v = self.coeff;
        for a in 0..3 {
            for _ in 0..self.powers[a] {
                v *= x[a];
            }
        }
        v
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    /// Even monomials are invariant under x -> -x.
    pub fn is_even(&self) -> bool {
        self.degree() % 2 == 0
    }
}

/// Evaluate a polynomial (sum of terms) at every grid node.
pub fn eval_polynomial(grid: &SphereGrid, terms: &[PolyTerm]) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| terms.iter().map(|t| t.eval(x)).sum())
        .collect()
}

/// Sampled support function of a convex body.
#[derive(Debug, Clone)]
pub struct SupportField {
    grid: Arc<SphereGrid>,
    u: Vec<f64>,
    symmetric: bool,
}

impl SupportField {
    /// Wrap samples as a support field. Positivity is checked; when
    /// `symmetric` is set the samples are symmetrized so that
    /// u(x) = u(-x) holds exactly nodewise.
    pub fn new(grid: Arc<SphereGrid>, u: Vec<f64>, symmetric: bool) -> Result<Self, BodyError> {
        if u.len() != grid.node_count() {
            return Err(BodyError::Grid(crate::error::GridError::SizeMismatch {
                expected: grid.node_count(),
                got: u.len(),
            }));
        }
        let u = if symmetric { grid.symmetrize(&u)? } else { u };
        for (i, &v) in u.iter().enumerate() {
            if !(v > 0.0) {
                return Err(BodyError::NonPositiveSupport { node: i, value: v });
            }
        }
        Ok(Self { grid, u, symmetric })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.u
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn u_min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn u_max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Replace the samples, keeping grid and symmetry flag.
    pub fn with_values(&self, u: Vec<f64>) -> Result<Self, BodyError> {
        Self::new(self.grid.clone(), u, self.symmetric)
    }

    /// Dilate by s > 0.
    pub fn scale(&self, s: f64) -> Result<Self, BodyError> {
        self.with_values(self.u.iter().map(|v| v * s).collect())
    }

    /// Sup-norm distance to another body on the same grid.
    pub fn sup_distance(&self, other: &Self) -> Result<f64, BodyError> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.node_count() != other.grid.node_count()
        {
            return Err(BodyError::GridMismatch);
        }
        Ok(self
            .u
            .iter()
            .zip(other.u.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Curvature radii matrix, eigenvalues, sigma_n and cofactor matrix.
    /// Fails with the offending node when lambda_min <= eps_convex anywhere.
    pub fn curvature(&self, eps_convex: f64) -> Result<CurvatureData, BodyError> {
        let grid = &self.grid;
        let hess = grid.covariant_hessian(&self.u)?;
        let count = grid.node_count();
        let n = grid.dim();

        let mut w = hess;
        for i in 0..count {
            w.tt[i] += self.u[i];
            if n == 2 {
                w.pp[i] += self.u[i];
            }
        }

        let mut sigma_n = vec![0.0; count];
        let mut lambda_min = vec![0.0; count];
        let mut lambda_max = vec![0.0; count];
        let mut cof_tt = vec![0.0; count];
        let mut cof_tp = vec![0.0; count];
        let mut cof_pp = vec![0.0; count];

        if n == 1 {
            for i in 0..count {
                sigma_n[i] = w.tt[i];
                lambda_min[i] = w.tt[i];
                lambda_max[i] = w.tt[i];
                cof_tt[i] = 1.0;
            }
        } else {
            for i in 0..count {
                let (a, c, b) = (w.tt[i], w.tp[i], w.pp[i]);
                sigma_n[i] = a * b - c * c;
                let mean = 0.5 * (a + b);
                let disc = (0.25 * (a - b) * (a - b) + c * c).sqrt();
                lambda_min[i] = mean - disc;
                lambda_max[i] = mean + disc;
                cof_tt[i] = b;
                cof_tp[i] = -c;
                cof_pp[i] = a;
            }
        }

        let mut worst = (0usize, f64::INFINITY);
        for i in 0..count {
            if lambda_min[i] < worst.1 {
                worst = (i, lambda_min[i]);
            }
        }
        if worst.1 <= eps_convex {
            return Err(BodyError::NonConvex {
                node: worst.0,
                lambda_min: worst.1,
            });
        }

        Ok(CurvatureData {
            w,
            sigma_n,
            lambda_min,
            lambda_max,
            cofactor: SymMatrixField {
                tt: cof_tt,
                tp: if n == 2 { cof_tp } else { Vec::new() },
                pp: if n == 2 { cof_pp } else { Vec::new() },
            },
        })
    }

    /// Volume in the convention of this crate, int u sigma_n dx
    /// (no 1/(n+1) factor; the unit ball has volume |S^n|).
    pub fn volume(&self) -> Result<f64, BodyError> {
        let curv = self.curvature(DEFAULT_CONVEXITY_EPS)?;
        let integrand: Vec<f64> = self
            .u
            .iter()
            .zip(curv.sigma_n.iter())
            .map(|(u, s)| u * s)
            .collect();
        Ok(self.grid.integrate(&integrand)?)
    }

    /// Volume through the radial route, int r^{n+1} dxi. Agrees with
    /// `volume` within discretization tolerance; used as a cross-check.
    pub fn volume_via_radial(&self) -> Result<f64, BodyError> {
        let rf = radial_from_support(self)?;
        let n = self.grid.dim();
        let integrand: Vec<f64> = rf.r.iter().map(|r| r.powi(n as i32 + 1)).collect();
        Ok(self.grid.integrate(&integrand)?)
    }

    /// Polar dual body: u*(xi) = 1 / r(xi) on the same grid.
    pub fn dual(&self) -> Result<SupportField, BodyError> {
        let rf = radial_from_support(self)?;
        let u_star: Vec<f64> = rf.r.iter().map(|r| 1.0 / r).collect();
        SupportField::new(self.grid.clone(), u_star, self.symmetric)
    }
}

/// Per-node curvature quantities of a support field.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    /// Radii matrix W_u = Hess u + u I.
    pub w: SymMatrixField,
    /// det W (n = 2) or W itself (n = 1).
    pub sigma_n: Vec<f64>,
    /// Smallest eigenvalue per node.
    pub lambda_min: Vec<f64>,
    /// Largest eigenvalue per node (equals lambda_min for n = 1).
    pub lambda_max: Vec<f64>,
    /// Cofactor matrix d(sigma_n)/dW.
    pub cofactor: SymMatrixField,
}

impl CurvatureData {
    pub fn lambda_min_global(&self) -> f64 {
        self.lambda_min.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Sampled radial function r(xi), indexed by the radial direction.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<SphereGrid>,
    pub r: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<SphereGrid>, r: Vec<f64>) -> Result<Self, BodyError> {
        if r.len() != grid.node_count() {
            return Err(BodyError::Grid(crate::error::GridError::SizeMismatch {
                expected: grid.node_count(),
                got: r.len(),
            }));
        }
        for (i, &v) in r.iter().enumerate() {
            if !(v > 0.0) {
                return Err(BodyError::NonPositiveSupport { node: i, value: v });
            }
        }
        Ok(Self { grid, r })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
}

/// Radial function from the support function:
/// r(xi) = min over nodes x with <x, xi> > 0 of u(x) / <x, xi>,
/// refined by a local quadratic fit around the discrete minimizer.
pub fn radial_from_support(body: &SupportField) -> Result<RadialField, BodyError> {
    let grid = body.grid();
    let u = body.values();
    let nodes = grid.nodes();
    let count = grid.node_count();
    let n = grid.dim();

    let r: Vec<Result<f64, BodyError>> = (0..count)
        .into_par_iter()
        .map(|t| {
            let xi = nodes[t];
            let mut best = f64::INFINITY;
            let mut best_idx = usize::MAX;
            for l in 0..count {
                let x = nodes[l];
                let dot = x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2];
                if dot > 1e-9 {
                    let f = u[l] / dot;
                    if f < best {
                        best = f;
                        best_idx = l;
                    }
                }
            }
            if best_idx == usize::MAX {
                return Err(BodyError::DegenerateDirection { node: t });
            }
            let f_at = |j: isize, k: isize| -> f64 {
                let pid = phys_index(grid, j, k);
                let x = nodes[pid];
                let dot = x[0] * xi[0] + x[1] * xi[1] + x[2] * xi[2];
                u[pid] / dot
            };
            if n == 1 {
                let i0 = best_idx as isize;
                let nt = grid.n_theta() as isize;
                let fm = {
                    let l = (i0 - 1).rem_euclid(nt) as usize;
                    let x = nodes[l];
                    u[l] / (x[0] * xi[0] + x[1] * xi[1])
                };
                let fp = {
                    let l = (i0 + 1).rem_euclid(nt) as usize;
                    let x = nodes[l];
                    u[l] / (x[0] * xi[0] + x[1] * xi[1])
                };
                let f0 = best;
                let curv = fp - 2.0 * f0 + fm;
                if curv > 0.0 {
                    let num = fp - fm;
                    Ok(f0 - num * num / (8.0 * curv))
                } else {
                    Ok(f0)
                }
            } else {
                let j0 = (best_idx / grid.n_phi()) as isize;
                let k0 = (best_idx % grid.n_phi()) as isize;
                let f0 = best;
                let dth = grid.d_theta();
                let dph = grid.d_phi();
                let fpt = f_at(j0 + 1, k0);
                let fmt = f_at(j0 - 1, k0);
                let fpp = f_at(j0, k0 + 1);
                let fmp = f_at(j0, k0 - 1);
                let gt = (fpt - fmt) / (2.0 * dth);
                let gp = (fpp - fmp) / (2.0 * dph);
                let htt = (fpt - 2.0 * f0 + fmt) / (dth * dth);
                let hpp = (fpp - 2.0 * f0 + fmp) / (dph * dph);
                let htp = (f_at(j0 + 1, k0 + 1) - f_at(j0 + 1, k0 - 1) - f_at(j0 - 1, k0 + 1)
                    + f_at(j0 - 1, k0 - 1))
                    / (4.0 * dth * dph);
                let det = htt * hpp - htp * htp;
                if htt > 0.0 && det > 0.0 {
                    // Newton step of the quadratic model, clamped to a cell.
                    let mut st = -(hpp * gt - htp * gp) / det;
                    let mut sp = -(htt * gp - htp * gt) / det;
                    st = st.clamp(-dth, dth);
                    sp = sp.clamp(-dph, dph);
                    Ok(f0
                        + gt * st
                        + gp * sp
                        + 0.5 * (htt * st * st + 2.0 * htp * st * sp + hpp * sp * sp))
                } else {
                    Ok(f0)
                }
            }
        })
        .collect();

    let r: Result<Vec<f64>, BodyError> = r.into_iter().collect();
    RadialField::new(grid.clone(), r?)
}

/// Physical node index for (possibly ghost) row/column coordinates.
fn phys_index(grid: &SphereGrid, j: isize, k: isize) -> usize {
    let nt = grid.n_theta() as isize;
    let np = grid.n_phi() as isize;
    let (jj, mut kk) = if j < 0 {
        (-j - 1, k + np / 2)
    } else if j >= nt {
        (2 * nt - 1 - j, k + np / 2)
    } else {
        (j, k)
    };
    kk = kk.rem_euclid(np);
    (jj * np + kk) as usize
}

/// Gauss curvature K(xi) of a radial graph, from
/// g_ij = r^2 d_ij + r_i r_j and
/// hbar_ij = (-r r_ij + 2 r_i r_j + r^2 d_ij) / sqrt(r^2 + |grad r|^2).
pub fn gauss_from_radial(rf: &RadialField) -> Result<Vec<f64>, BodyError> {
    let grid = rf.grid();
    let n = grid.dim();
    let grad = grid.gradient(&rf.r)?;
    let hess = grid.covariant_hessian(&rf.r)?;
    let count = grid.node_count();
    let mut k_out = vec![0.0; count];
    for i in 0..count {
        let r = rf.r[i];
        let gsq = grad.norm_sq(i);
        let w = r * r + gsq;
        if n == 1 {
            let num = -r * hess.tt[i] + 2.0 * grad.theta[i] * grad.theta[i] + r * r;
            if num <= 0.0 {
                return Err(BodyError::NonConvexRadial { node: i, det: num });
            }
            k_out[i] = num / (w * w.sqrt());
        } else {
            let (rt, rp) = (grad.theta[i], grad.phi[i]);
            let ntt = -r * hess.tt[i] + 2.0 * rt * rt + r * r;
            let ntp = -r * hess.tp[i] + 2.0 * rt * rp;
            let npp = -r * hess.pp[i] + 2.0 * rp * rp + r * r;
            let det_num = ntt * npp - ntp * ntp;
            if det_num <= 0.0 {
                return Err(BodyError::NonConvexRadial {
                    node: i,
                    det: det_num,
                });
            }
            // det g = r^2 (r^2 + |grad r|^2); det hbar = det_num / w.
            k_out[i] = det_num / (r * r * w * w);
        }
    }
    Ok(k_out)
}

/// Max over matched polar pairs of |u^{n+2} u*^{n+2} / (K K*) - 1|.
///
/// The pairing is nodewise: for grid direction x, the contact point
/// p = u x + grad u has |p| = sqrt(u^2 + |grad u|^2), its polar partner is
/// p* = x / u(x) with p . p* = 1, so u*(at the dual's normal) = 1/|p| and
/// K* is the radial-chart curvature of the dual's radial function 1/u at x.
pub fn polar_identity_residual(body: &SupportField) -> Result<f64, BodyError> {
    let grid = body.grid();
    let n = grid.dim() as i32;
    let u = body.values();
    let curv = body.curvature(DEFAULT_CONVEXITY_EPS)?;
    let grad = grid.gradient(u)?;
    let r_star: Vec<f64> = u.iter().map(|v| 1.0 / v).collect();
    let k_star = gauss_from_radial(&RadialField::new(grid.clone(), r_star)?)?;
    let mut worst: f64 = 0.0;
    for i in 0..grid.node_count() {
        let r_contact = (u[i] * u[i] + grad.norm_sq(i)).sqrt();
        let u_star = 1.0 / r_contact;
        let k = 1.0 / curv.sigma_n[i];
        let lhs = u[i].powi(n + 2) * u_star.powi(n + 2) / (k * k_star[i]);
        worst = worst.max((lhs - 1.0).abs());
    }
    Ok(worst)
}

/// Complete polarization of sigma_n evaluated nodewise on n matrix fields.
/// For n = 2: sigma_2(A, B) = (tr A tr B - tr(AB)) / 2; for n = 1: A.
pub fn mixed_sigma(grid: &SphereGrid, mats: &[&SymMatrixField]) -> Result<Vec<f64>, BodyError> {
    let n = grid.dim();
    if mats.len() != n {
        return Err(BodyError::WrongArity {
            expected: n,
            got: mats.len(),
        });
    }
    let count = grid.node_count();
    for m in mats {
        if m.tt.len() != count {
            return Err(BodyError::Grid(crate::error::GridError::SizeMismatch {
                expected: count,
                got: m.tt.len(),
            }));
        }
    }
    if n == 1 {
        return Ok(mats[0].tt.clone());
    }
    let (a, b) = (mats[0], mats[1]);
    Ok((0..count)
        .map(|i| 0.5 * (a.tt[i] * b.pp[i] + a.pp[i] * b.tt[i]) - a.tp[i] * b.tp[i])
        .collect())
}

/// Mixed volume V_{n+1}(u1; b_1, ..., b_n) = int u1 sigma_n[W_1, ..., W_n] dx.
/// All arguments must be uniformly convex on the same grid.
pub fn mixed_volume(u1: &SupportField, bodies: &[&SupportField]) -> Result<f64, BodyError> {
    let grid = u1.grid();
    let n = grid.dim();
    if bodies.len() != n {
        return Err(BodyError::WrongArity {
            expected: n,
            got: bodies.len(),
        });
    }
    for b in bodies {
        if !Arc::ptr_eq(grid, b.grid()) {
            return Err(BodyError::GridMismatch);
        }
    }
    let curvs: Vec<CurvatureData> = bodies
        .iter()
        .map(|b| b.curvature(DEFAULT_CONVEXITY_EPS))
        .collect::<Result<_, _>>()?;
    let mats: Vec<&SymMatrixField> = curvs.iter().map(|c| &c.w).collect();
    let ms = mixed_sigma(grid, &mats)?;
    let integrand: Vec<f64> = u1.values().iter().zip(ms.iter()).map(|(u, s)| u * s).collect();
    Ok(grid.integrate(&integrand)?)
}

/// Analytic shape constructors used as fixtures and initial data.
#[derive(Debug, Clone)]
pub enum ShapeKind {
    Sphere {
        radius: f64,
    },
    /// u(x) = sqrt(a^2 x1^2 + b^2 x2^2 + c^2 x3^2); the third axis is
    /// ignored for n = 1.
    Ellipsoid {
        semi_axes: [f64; 3],
    },
    /// u = u_base + eps * sum of polynomial modes.
    Perturbed {
        base: Box<ShapeKind>,
        eps: f64,
        modes: Vec<PolyTerm>,
    },
    /// u = u_base + <x, offset>: the same body translated by `offset`.
    Translate {
        base: Box<ShapeKind>,
        offset: [f64; 3],
    },
}

impl ShapeKind {
    fn eval(&self, grid: &SphereGrid) -> Result<(Vec<f64>, bool), BodyError> {
        match self {
            ShapeKind::Sphere { radius } => {
                if !(*radius > 0.0) {
                    return Err(BodyError::BadShape(format!("sphere radius {radius}")));
                }
                Ok((vec![*radius; grid.node_count()], true))
            }
            ShapeKind::Ellipsoid { semi_axes } => {
                let [a, b, c] = *semi_axes;
                if !(a > 0.0 && b > 0.0 && (grid.dim() == 1 || c > 0.0)) {
                    return Err(BodyError::BadShape(format!(
                        "ellipsoid semi-axes {semi_axes:?}"
                    )));
                }
                let u = grid
                    .nodes()
                    .iter()
                    .map(|x| {
                        (a * a * x[0] * x[0] + b * b * x[1] * x[1] + c * c * x[2] * x[2]).sqrt()
                    })
                    .collect();
                Ok((u, true))
            }
            ShapeKind::Perturbed { base, eps, modes } => {
                let (mut u, base_sym) = base.eval(grid)?;
                for (i, &x) in grid.nodes().iter().enumerate() {
                    let q: f64 = modes.iter().map(|t| t.eval(x)).sum();
                    u[i] += eps * q;
                }
                let sym = base_sym && modes.iter().all(|t| t.is_even());
                Ok((u, sym))
            }
            ShapeKind::Translate { base, offset } => {
                let (mut u, base_sym) = base.eval(grid)?;
                for (i, &x) in grid.nodes().iter().enumerate() {
                    u[i] += x[0] * offset[0] + x[1] * offset[1] + x[2] * offset[2];
                }
                let sym = base_sym && offset.iter().all(|&v| v == 0.0);
                Ok((u, sym))
            }
        }
    }
}

/// Build a support field from a shape description; the result must pass the
/// positivity and uniform-convexity checks.
pub fn make_shape(
    kind: &ShapeKind,
    grid: &Arc<SphereGrid>,
    eps_convex: f64,
) -> Result<SupportField, BodyError> {
    let (u, symmetric) = kind.eval(grid)?;
    let body = SupportField::new(grid.clone(), u, symmetric)?;
    body.curvature(eps_convex)?;
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::sphere_area;
    use std::f64::consts::PI;

    fn grid2(nt: usize, np: usize) -> Arc<SphereGrid> {
        SphereGrid::build(2, nt, np).unwrap()
    }

    fn sphere_body(grid: &Arc<SphereGrid>, radius: f64) -> SupportField {
        make_shape(&ShapeKind::Sphere { radius }, grid, DEFAULT_CONVEXITY_EPS).unwrap()
    }

    fn ellipsoid_body(grid: &Arc<SphereGrid>, axes: [f64; 3]) -> SupportField {
        make_shape(
            &ShapeKind::Ellipsoid { semi_axes: axes },
            grid,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap()
    }

    #[test]
    fn unit_sphere_curvature_is_identity() {
        let g = grid2(16, 32);
        let body = sphere_body(&g, 1.0);
        let c = body.curvature(DEFAULT_CONVEXITY_EPS).unwrap();
        for i in 0..g.node_count() {
            assert_eq!(c.w.tt[i], 1.0);
            assert_eq!(c.w.tp[i], 0.0);
            assert_eq!(c.w.pp[i], 1.0);
            assert_eq!(c.sigma_n[i], 1.0);
            assert_eq!(c.lambda_min[i], 1.0);
            assert_eq!(c.lambda_max[i], 1.0);
        }
    }

    #[test]
    fn sphere_sigma_is_radius_power_n() {
        let g = grid2(16, 32);
        let rho = 1.7;
        let body = sphere_body(&g, rho);
        let c = body.curvature(DEFAULT_CONVEXITY_EPS).unwrap();
        for i in 0..g.node_count() {
            assert_eq!(c.sigma_n[i], rho * rho);
        }
        let g1 = SphereGrid::build(1, 32, 0).unwrap();
        let b1 = sphere_body(&g1, rho);
        let c1 = b1.curvature(DEFAULT_CONVEXITY_EPS).unwrap();
        for i in 0..g1.node_count() {
            assert!((c1.sigma_n[i] - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_equals_eigenvalue_product_and_euler_identity() {
        let g = grid2(16, 32);
        let body = ellipsoid_body(&g, [1.0, 1.2, 1.5]);
        let c = body.curvature(DEFAULT_CONVEXITY_EPS).unwrap();
        for i in 0..g.node_count() {
            let prod = c.lambda_min[i] * c.lambda_max[i];
            assert!((c.sigma_n[i] - prod).abs() <= 1e-10 * c.sigma_n[i].abs());
            let contracted = c.cofactor.tt[i] * c.w.tt[i]
                + 2.0 * c.cofactor.tp[i] * c.w.tp[i]
                + c.cofactor.pp[i] * c.w.pp[i];
            assert!((contracted - 2.0 * c.sigma_n[i]).abs() <= 1e-10 * c.sigma_n[i].abs());
        }
    }

    fn ellipsoid_sigma_error(nt: usize, np: usize, axes: [f64; 3]) -> f64 {
        let g = grid2(nt, np);
        let body = ellipsoid_body(&g, axes);
        let c = body.curvature(DEFAULT_CONVEXITY_EPS).unwrap();
        let abc2 = (axes[0] * axes[1] * axes[2]).powi(2);
        let mut worst: f64 = 0.0;
        for i in 0..g.node_count() {
            let u = body.values()[i];
            let exact = abc2 / u.powi(4);
            worst = worst.max((c.sigma_n[i] - exact).abs() / exact);
        }
        worst
    }

    #[test]
    fn ellipsoid_sigma_matches_closed_form() {
        // sigma_2 = (abc)^2 / u^4, second-order accurate.
        let e1 = ellipsoid_sigma_error(16, 32, [1.0, 1.0, 2.0]);
        let e2 = ellipsoid_sigma_error(32, 64, [1.0, 1.0, 2.0]);
        assert!(e2 < 2.5e-2, "relative error at 32x64: {e2}");
        assert!(e1 / e2 > 3.5, "refinement ratio {}", e1 / e2);
    }

    #[test]
    fn non_convex_body_is_rejected_with_offending_node() {
        let g = grid2(16, 32);
        let shape = ShapeKind::Perturbed {
            base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
            eps: 1.2,
            modes: vec![
                PolyTerm {
                    coeff: 1.0,
                    powers: [0, 0, 2],
                },
                PolyTerm {
                    coeff: -1.0 / 3.0,
                    powers: [0, 0, 0],
                },
            ],
        };
        match make_shape(&shape, &g, DEFAULT_CONVEXITY_EPS) {
            Err(BodyError::NonConvex { lambda_min, .. }) => assert!(lambda_min <= 0.0),
            other => panic!("expected NonConvex, got {other:?}"),
        }
    }

    #[test]
    fn perturbation_convexity_threshold_is_three_quarters() {
        // For u = 1 + eps (x3^2 - 1/3) the smallest radius is 1 - 4 eps / 3,
        // so convexity fails past eps = 3/4. Bisect the discrete threshold.
        let g = grid2(16, 32);
        let modes = vec![
            PolyTerm {
                coeff: 1.0,
                powers: [0, 0, 2],
            },
            PolyTerm {
                coeff: -1.0 / 3.0,
                powers: [0, 0, 0],
            },
        ];
        let convex_at = |eps: f64| {
            make_shape(
                &ShapeKind::Perturbed {
                    base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
                    eps,
                    modes: modes.clone(),
                },
                &g,
                DEFAULT_CONVEXITY_EPS,
            )
            .is_ok()
        };
        assert!(convex_at(0.5));
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if convex_at(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.70..0.80).contains(&lo), "threshold {lo}");
    }

    #[test]
    fn radial_of_sphere_is_constant() {
        let g = grid2(16, 32);
        let body = sphere_body(&g, 1.3);
        let rf = radial_from_support(&body).unwrap();
        for &r in &rf.r {
            assert!((r - 1.3).abs() < 1e-10);
        }
    }

    #[test]
    fn radial_of_ellipsoid_is_polar_reciprocal() {
        let g = grid2(32, 64);
        let axes = [1.0, 1.0, 2.0];
        let body = ellipsoid_body(&g, axes);
        let rf = radial_from_support(&body).unwrap();
        let mut worst: f64 = 0.0;
        for (i, &x) in g.nodes().iter().enumerate() {
            let exact = 1.0
                / (x[0] * x[0] / (axes[0] * axes[0])
                    + x[1] * x[1] / (axes[1] * axes[1])
                    + x[2] * x[2] / (axes[2] * axes[2]))
                .sqrt();
            worst = worst.max((rf.r[i] - exact).abs());
        }
        assert!(worst < 2e-3, "worst radial error {worst}");
    }

    #[test]
    fn radial_of_translated_ball_matches_geometry() {
        let g = grid2(32, 64);
        let body = make_shape(
            &ShapeKind::Translate {
                base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
                offset: [0.0, 0.0, 0.3],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap();
        assert!(!body.is_symmetric());
        let rf = radial_from_support(&body).unwrap();
        let mut worst: f64 = 0.0;
        for (i, &x) in g.nodes().iter().enumerate() {
            let exact = 0.3 * x[2] + (1.0 - 0.09 * (1.0 - x[2] * x[2])).sqrt();
            worst = worst.max((rf.r[i] - exact).abs());
        }
        assert!(worst < 2e-4, "worst radial error {worst}");
    }

    #[test]
    fn min_max_transfer_between_support_and_radial() {
        let g = grid2(32, 64);
        let body = ellipsoid_body(&g, [1.0, 1.1, 1.6]);
        let rf = radial_from_support(&body).unwrap();
        let r_min = rf.r.iter().copied().fold(f64::INFINITY, f64::min);
        let r_max = rf.r.iter().copied().fold(0.0, f64::max);
        assert!((r_min - body.u_min()).abs() < 5e-3);
        assert!((r_max - body.u_max()).abs() < 5e-3);
    }

    #[test]
    fn dual_of_sphere_and_ellipsoid() {
        let g = grid2(32, 64);
        let dual = sphere_body(&g, 2.0).dual().unwrap();
        for &v in dual.values() {
            assert!((v - 0.5).abs() < 1e-10);
        }
        let axes = [1.0, 1.0, 2.0];
        let dual_e = ellipsoid_body(&g, axes).dual().unwrap();
        let expect = ellipsoid_body(&g, [1.0, 1.0, 0.5]);
        assert!(dual_e.sup_distance(&expect).unwrap() < 2e-3);
    }

    #[test]
    fn double_dual_is_identity_within_tolerance() {
        let g = grid2(32, 64);
        let shape = ShapeKind::Perturbed {
            base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
            eps: 0.08,
            modes: vec![
                PolyTerm {
                    coeff: 1.0,
                    powers: [2, 0, 0],
                },
                PolyTerm {
                    coeff: -0.6,
                    powers: [0, 0, 2],
                },
            ],
        };
        let body = make_shape(&shape, &g, DEFAULT_CONVEXITY_EPS).unwrap();
        let back = body.dual().unwrap().dual().unwrap();
        assert!(body.sup_distance(&back).unwrap() < 5e-4);
    }

    #[test]
    fn gauss_from_radial_of_sphere() {
        let g = grid2(16, 32);
        let rf = RadialField::new(g.clone(), vec![1.5; g.node_count()]).unwrap();
        let k = gauss_from_radial(&rf).unwrap();
        for &v in &k {
            assert!((v - 1.5f64.powi(-2)).abs() < 1e-12);
        }
        let g1 = SphereGrid::build(1, 32, 0).unwrap();
        let rf1 = RadialField::new(g1.clone(), vec![2.0; g1.node_count()]).unwrap();
        for &v in &gauss_from_radial(&rf1).unwrap() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn polar_identity_on_spheres_is_exact() {
        let g = grid2(16, 32);
        for rho in [1.0, 0.7, 2.3] {
            let res = polar_identity_residual(&sphere_body(&g, rho)).unwrap();
            assert!(res < 1e-12, "rho = {rho}: residual {res}");
        }
    }

    fn perturbed_even_body(grid: &Arc<SphereGrid>, eps: f64) -> SupportField {
        make_shape(
            &ShapeKind::Perturbed {
                base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
                eps,
                modes: vec![
                    PolyTerm {
                        coeff: 1.0,
                        powers: [0, 0, 2],
                    },
                    PolyTerm {
                        coeff: 0.8,
                        powers: [1, 1, 0],
                    },
                    PolyTerm {
                        coeff: -0.5,
                        powers: [1, 0, 1],
                    },
                    PolyTerm {
                        coeff: -1.0 / 3.0,
                        powers: [0, 0, 0],
                    },
                ],
            },
            grid,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap()
    }

    #[test]
    fn polar_identity_residual_converges_second_order() {
        let r1 = polar_identity_residual(&perturbed_even_body(&grid2(16, 32), 0.05)).unwrap();
        let r2 = polar_identity_residual(&perturbed_even_body(&grid2(32, 64), 0.05)).unwrap();
        assert!(r2 < 5e-3, "residual at 32x64: {r2}");
        assert!(r1 / r2 > 2.5, "refinement ratio {}", r1 / r2);
    }

    #[test]
    fn mixed_volume_diagonal_and_spheres() {
        let g = grid2(16, 32);
        let b1 = sphere_body(&g, 1.4);
        let b2 = sphere_body(&g, 0.9);
        let diag = mixed_volume(&b1, &[&b1, &b1]).unwrap();
        assert!((diag - b1.volume().unwrap()).abs() < 1e-10);
        let v = mixed_volume(&b1, &[&b2, &b2]).unwrap();
        assert!((v - 4.0 * PI * 1.4 * 0.9 * 0.9).abs() < 1e-9);
    }

    #[test]
    fn alexandrov_fenchel_with_gap_and_equality_case() {
        let g = grid2(16, 32);
        let u = sphere_body(&g, 1.0);
        let v = ellipsoid_body(&g, [1.0, 1.0, 1.5]);
        let vuu = mixed_volume(&v, &[&u, &u]).unwrap();
        let vvu = mixed_volume(&v, &[&v, &u]).unwrap();
        let uuu = mixed_volume(&u, &[&u, &u]).unwrap();
        let gap = vuu * vuu - vvu * uuu;
        assert!(gap > 1e-2, "expected strict AF gap, got {gap}");

        // Equality case: v = a u + <x, w>.
        let veq = make_shape(
            &ShapeKind::Translate {
                base: Box::new(ShapeKind::Sphere { radius: 1.3 }),
                offset: [0.1, -0.05, 0.2],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        )
        .unwrap();
        let vuu = mixed_volume(&veq, &[&u, &u]).unwrap();
        let vvu = mixed_volume(&veq, &[&veq, &u]).unwrap();
        let rel = (vuu * vuu - vvu * uuu).abs() / (vuu * vuu);
        // The polarization identity behind the equality case holds to
        // discretization accuracy.
        assert!(rel < 2e-4, "equality case defect {rel}");
    }

    #[test]
    fn volume_conventions() {
        let g = grid2(32, 64);
        let ball = sphere_body(&g, 1.0);
        assert!((ball.volume().unwrap() - 4.0 * PI).abs() < 1e-10);
        let rho = 1.3;
        let b = sphere_body(&g, rho);
        assert!((b.volume().unwrap() - sphere_area(2) * rho.powi(3)).abs() < 1e-9);
        let e = ellipsoid_body(&g, [1.0, 1.0, 2.0]);
        let vol = e.volume().unwrap();
        assert!(
            (vol - 4.0 * PI * 2.0).abs() < 0.1,
            "ellipsoid volume {vol} vs {}",
            4.0 * PI * 2.0
        );
        let vol_r = e.volume_via_radial().unwrap();
        assert!((vol - vol_r).abs() < 0.1, "routes disagree: {vol} vs {vol_r}");
    }

    #[test]
    fn make_shape_basics() {
        let g = grid2(16, 32);
        let s = sphere_body(&g, 1.0);
        assert!(s.is_symmetric());
        assert_eq!(s.values()[0], 1.0);
        let e = ellipsoid_body(&g, [1.0, 1.0, 2.0]);
        for (i, &x) in g.nodes().iter().enumerate() {
            let expect = (x[0] * x[0] + x[1] * x[1] + 4.0 * x[2] * x[2]).sqrt();
            assert!((e.values()[i] - expect).abs() < 1e-14);
        }
        // Translating past the radius pushes the origin outside the body.
        let too_far = make_shape(
            &ShapeKind::Translate {
                base: Box::new(ShapeKind::Sphere { radius: 1.0 }),
                offset: [0.0, 0.0, 1.5],
            },
            &g,
            DEFAULT_CONVEXITY_EPS,
        );
        assert!(matches!(too_far, Err(BodyError::NonPositiveSupport { .. })));
    }

    #[test]
    fn blaschke_santalo_quick_check() {
        // vol(O) vol(O*) <= vol(B1)^2 with the duals evaluated through
        // r* = 1/u, which avoids conversion noise.
        let g = grid2(16, 32);
        let vol_ball_sq = (4.0 * PI) * (4.0 * PI);
        for body in [
            sphere_body(&g, 1.3),
            ellipsoid_body(&g, [1.0, 1.1, 1.4]),
            perturbed_even_body(&g, 0.05),
        ] {
            let vol = body.volume().unwrap();
            let dual_integrand: Vec<f64> =
                body.values().iter().map(|u| u.powi(-3)).collect();
            let vol_dual = g.integrate(&dual_integrand).unwrap();
            let ratio = vol * vol_dual / vol_ball_sq;
            assert!(ratio <= 1.0 + 1e-3, "BS ratio {ratio}");
        }
        let e = ellipsoid_body(&g, [1.0, 1.1, 1.4]);
        let vol = e.volume().unwrap();
        let dual_integrand: Vec<f64> = e.values().iter().map(|u| u.powi(-3)).collect();
        let ratio = vol * g.integrate(&dual_integrand).unwrap() / vol_ball_sq;
        assert!((ratio - 1.0).abs() < 1e-3, "ellipsoid BS ratio {ratio}");
    }
}
