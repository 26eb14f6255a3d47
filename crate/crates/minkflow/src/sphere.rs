//! Grids on S^1 and S^2, quadrature, and covariant differential operators.
//!
//! The n = 2 grid is a latitude-longitude layout with a half-cell colatitude
//! offset, so no node sits at a pole: theta_j = (j + 1/2) pi / Ntheta,
//! phi_k = 2 pi k / Nphi. Longitude wraps periodically; colatitude stencils
//! reaching past the offset boundary use the antipodal continuation
//! g(-theta, phi) = g(theta, phi + pi), which is exact for smooth fields on
//! the sphere. The n = 1 grid is uniform periodic angles.
//!
//! Derivatives are centered differences in the local orthonormal frame
//! {e_theta, e_phi} (n = 2) or {e_theta} (n = 1). Rows close to the poles
//! (sin theta < POLE_ZONE_SIN) use wider 4th-order centered stencils: the
//! 1/sin(theta) factors in the frame components amplify the phi truncation
//! error of 3-point stencils to first order on the pole-adjacent rows, and
//! the wider stencils restore a uniformly second-order operator.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::GridError;

/// The Ntheta/POLE_ZONE_DIVISOR rows nearest each pole use 4th-order
/// stencils. A row-count (rather than angle) threshold keeps the zone
/// boundary at the same colatitude across refinements, so convergence
/// rates are not polluted by boundary-row quantization.
const POLE_ZONE_DIVISOR: usize = 8;

/// Exact area of the unit sphere S^n for the supported dimensions.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Vector field in the local orthonormal frame. `phi` is empty when n = 1.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl VectorField {
    /// Pointwise squared norm |V|^2.
    pub fn norm_sq(&self, i: usize) -> f64 {
        let t = self.theta[i];
        if self.phi.is_empty() {
            t * t
        } else {
            let p = self.phi[i];
            t * t + p * p
        }
    }
}

/// Symmetric matrix field in the orthonormal frame; upper triangle stored,
/// so symmetry holds by construction. `tp` and `pp` are empty when n = 1.
#[derive(Debug, Clone)]
pub struct SymMatrixField {
    pub tt: Vec<f64>,
    pub tp: Vec<f64>,
    pub pp: Vec<f64>,
}

impl SymMatrixField {
    pub fn trace(&self, i: usize) -> f64 {
        if self.pp.is_empty() {
            self.tt[i]
        } else {
            self.tt[i] + self.pp[i]
        }
    }
}

/// Discretization of S^n (n = 1 or 2) with nodes, quadrature weights and
/// exact antipodal pairing.
#[derive(Debug)]
pub struct SphereGrid {
    n: usize,
    n_theta: usize,
    n_phi: usize,
    nodes: Vec<[f64; 3]>,
    quad_weights: Vec<f64>,
    antipode: Vec<usize>,
    h_min: f64,
    d_theta: f64,
    d_phi: f64,
    theta: Vec<f64>,
    sin_theta: Vec<f64>,
    cos_theta: Vec<f64>,
    phi: Vec<f64>,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
    /// Per colatitude row: true if the row uses 4th-order stencils.
    pole_zone: Vec<bool>,
}

impl SphereGrid {
    /// Build a grid on S^n. For n = 1 only `n_theta` is used.
    pub fn build(n: usize, n_theta: usize, n_phi: usize) -> Result<Arc<Self>, GridError> {
        match n {
            1 => Self::build_circle(n_theta),
            2 => Self::build_sphere(n_theta, n_phi),
            _ => Err(GridError::InvalidDimension(n)),
        }
    }

    fn build_circle(n_theta: usize) -> Result<Arc<Self>, GridError> {
        if n_theta < 8 {
            return Err(GridError::ResolutionTooSmall {
                axis: "n_theta",
                got: n_theta,
                min: 8,
            });
        }
        if n_theta % 2 != 0 {
            return Err(GridError::OddCount {
                axis: "n_theta",
                got: n_theta,
            });
        }
        let d_theta = 2.0 * PI / n_theta as f64;
        let mut nodes = vec![[0.0; 3]; n_theta];
        let mut theta = vec![0.0; n_theta];
        let half = n_theta / 2;
        for i in 0..n_theta {
            theta[i] = i as f64 * d_theta;
        }
        for i in 0..half {
            let (s, c) = theta[i].sin_cos();
            nodes[i] = [c, s, 0.0];
            // Antipodal nodes are exact negations by construction.
            nodes[i + half] = [-c, -s, 0.0];
        }
        let antipode = (0..n_theta).map(|i| (i + half) % n_theta).collect();
        let quad_weights = vec![d_theta; n_theta];
        Ok(Arc::new(Self {
            n: 1,
            n_theta,
            n_phi: 0,
            nodes,
            quad_weights,
            antipode,
            h_min: d_theta,
            d_theta,
            d_phi: 0.0,
            theta,
            sin_theta: Vec::new(),
            cos_theta: Vec::new(),
            phi: Vec::new(),
            cos_phi: Vec::new(),
            sin_phi: Vec::new(),
            pole_zone: Vec::new(),
        }))
    }

    fn build_sphere(n_theta: usize, n_phi: usize) -> Result<Arc<Self>, GridError> {
        if n_theta < 8 {
            return Err(GridError::ResolutionTooSmall {
                axis: "n_theta",
                got: n_theta,
                min: 8,
            });
        }
        if n_phi < 16 {
            return Err(GridError::ResolutionTooSmall {
                axis: "n_phi",
                got: n_phi,
                min: 16,
            });
        }
        if n_theta % 2 != 0 {
            return Err(GridError::OddCount {
                axis: "n_theta",
                got: n_theta,
            });
        }
        if n_phi % 2 != 0 {
            return Err(GridError::OddCount {
                axis: "n_phi",
                got: n_phi,
            });
        }
        let d_theta = PI / n_theta as f64;
        let d_phi = 2.0 * PI / n_phi as f64;

        // Angle tables are built for the lower half and mirrored, so that
        // sin_theta[j] == sin_theta[n_theta-1-j] and
        // cos_theta[j] == -cos_theta[n_theta-1-j] hold bitwise. Stencil
        // symmetry under the antipodal map then holds exactly.
        let mut theta = vec![0.0; n_theta];
        let mut sin_theta = vec![0.0; n_theta];
        let mut cos_theta = vec![0.0; n_theta];
        for j in 0..n_theta / 2 {
            let th = (j as f64 + 0.5) * d_theta;
            let (s, c) = th.sin_cos();
            theta[j] = th;
            sin_theta[j] = s;
            cos_theta[j] = c;
            theta[n_theta - 1 - j] = PI - th;
            sin_theta[n_theta - 1 - j] = s;
            cos_theta[n_theta - 1 - j] = -c;
        }
        let mut phi = vec![0.0; n_phi];
        let mut cos_phi = vec![0.0; n_phi];
        let mut sin_phi = vec![0.0; n_phi];
        for k in 0..n_phi {
            phi[k] = k as f64 * d_phi;
        }
        for k in 0..n_phi / 2 {
            let (s, c) = phi[k].sin_cos();
            cos_phi[k] = c;
            sin_phi[k] = s;
            cos_phi[k + n_phi / 2] = -c;
            sin_phi[k + n_phi / 2] = -s;
        }

        let count = n_theta * n_phi;
        let mut nodes = vec![[0.0; 3]; count];
        let mut antipode = vec![0usize; count];
        for j in 0..n_theta / 2 {
            for k in 0..n_phi {
                let x = [
                    sin_theta[j] * cos_phi[k],
                    sin_theta[j] * sin_phi[k],
                    cos_theta[j],
                ];
                let i = j * n_phi + k;
                nodes[i] = x;
                let ia = (n_theta - 1 - j) * n_phi + (k + n_phi / 2) % n_phi;
                nodes[ia] = [-x[0], -x[1], -x[2]];
            }
        }
        for j in 0..n_theta {
            for k in 0..n_phi {
                antipode[j * n_phi + k] = (n_theta - 1 - j) * n_phi + (k + n_phi / 2) % n_phi;
            }
        }

        // Quadrature: midpoint rule in value with the exact cell area
        // integral of sin(theta) d(theta) d(phi), so the weights sum to
        // 4 pi up to accumulated rounding only.
        let mut w_theta = vec![0.0; n_theta];
        for j in 0..n_theta / 2 {
            let w = (j as f64 * d_theta).cos() - ((j + 1) as f64 * d_theta).cos();
            w_theta[j] = w;
            w_theta[n_theta - 1 - j] = w;
        }
        let mut quad_weights = vec![0.0; count];
        for j in 0..n_theta {
            let w = w_theta[j] * d_phi;
            for k in 0..n_phi {
                quad_weights[j * n_phi + k] = w;
            }
        }

        let zone_rows = (n_theta / POLE_ZONE_DIVISOR).max(1);
        let pole_zone = (0..n_theta)
            .map(|j| j < zone_rows || j >= n_theta - zone_rows)
            .collect();

        Ok(Arc::new(Self {
            n: 2,
            n_theta,
            n_phi,
            nodes,
            quad_weights,
            antipode,
            h_min: d_theta.min(d_phi),
            d_theta,
            d_phi,
            theta,
            sin_theta,
            cos_theta,
            phi,
            cos_phi,
            sin_phi,
            pole_zone,
        }))
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }
    pub fn node(&self, i: usize) -> [f64; 3] {
        self.nodes[i]
    }
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }
    pub fn antipode(&self, i: usize) -> usize {
        self.antipode[i]
    }
    pub fn h_min(&self) -> f64 {
        self.h_min
    }
    pub fn d_theta(&self) -> f64 {
        self.d_theta
    }
    pub fn d_phi(&self) -> f64 {
        self.d_phi
    }
    pub fn sin_theta_row(&self, j: usize) -> f64 {
        self.sin_theta[j]
    }
    pub fn pole_zone_row(&self, j: usize) -> bool {
        self.pole_zone[j]
    }
    pub fn colatitude(&self, j: usize) -> f64 {
        self.theta[j]
    }
    pub fn longitude(&self, k: usize) -> f64 {
        self.phi[k]
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        debug_assert!(self.n == 2);
        j * self.n_phi + k
    }

    /// Orthonormal frame vector e_theta at row j, column k.
    pub fn e_theta(&self, j: usize, k: usize) -> [f64; 3] {
        [
            self.cos_theta[j] * self.cos_phi[k],
            self.cos_theta[j] * self.sin_phi[k],
            -self.sin_theta[j],
        ]
    }

    /// Orthonormal frame vector e_phi at column k (independent of row).
    pub fn e_phi(&self, k: usize) -> [f64; 3] {
        [-self.sin_phi[k], self.cos_phi[k], 0.0]
    }

    /// Tangent vector along the circle at node i (n = 1).
    pub fn e_tangent(&self, i: usize) -> [f64; 3] {
        let x = self.nodes[i];
        [-x[1], x[0], 0.0]
    }

    fn check_len(&self, g: &[f64]) -> Result<(), GridError> {
        if g.len() != self.node_count() {
            Err(GridError::SizeMismatch {
                expected: self.node_count(),
                got: g.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Fetch g at a (possibly ghost) row/column pair. Ghost rows past the
    /// colatitude boundary map through the antipodal continuation; columns
    /// wrap periodically.
    #[inline]
    pub fn fetch(&self, g: &[f64], j: isize, k: isize) -> f64 {
        let nt = self.n_theta as isize;
        let np = self.n_phi as isize;
        let (jj, mut kk) = if j < 0 {
            (-j - 1, k + np / 2)
        } else if j >= nt {
            (2 * nt - 1 - j, k + np / 2)
        } else {
            (j, k)
        };
        kk = kk.rem_euclid(np);
        g[(jj * np + kk) as usize]
    }

    /// Quadrature of a scalar field: sum of g_i * w_i.
    pub fn integrate(&self, g: &[f64]) -> Result<f64, GridError> {
        self.check_len(g)?;
        let mut acc = 0.0;
        for (gi, wi) in g.iter().zip(self.quad_weights.iter()) {
            acc += gi * wi;
        }
        Ok(acc)
    }

    /// Covariant gradient in the orthonormal frame.
    pub fn gradient(&self, g: &[f64]) -> Result<VectorField, GridError> {
        self.check_len(g)?;
        if self.n == 1 {
            let nt = self.n_theta as isize;
            let mut th = vec![0.0; self.n_theta];
            for i in 0..nt {
                let p = g[((i + 1).rem_euclid(nt)) as usize];
                let m = g[((i - 1).rem_euclid(nt)) as usize];
                th[i as usize] = (p - m) / (2.0 * self.d_theta);
            }
            return Ok(VectorField {
                theta: th,
                phi: Vec::new(),
            });
        }
        let mut th = vec![0.0; self.node_count()];
        let mut ph = vec![0.0; self.node_count()];
        for j in 0..self.n_theta {
            let o4 = self.pole_zone[j];
            let inv_sin = 1.0 / self.sin_theta[j];
            for k in 0..self.n_phi {
                let i = self.index(j, k);
                th[i] = self.d1_theta(g, j as isize, k as isize, o4);
                ph[i] = self.d1_phi(g, j as isize, k as isize, o4) * inv_sin;
            }
        }
        Ok(VectorField { theta: th, phi: ph })
    }

    /// Covariant Hessian in the orthonormal frame. For n = 2:
    /// H_tt = g_tt, H_tp = (g_tp - cot(theta) g_p) / sin(theta),
    /// H_pp = g_pp / sin^2(theta) + cot(theta) g_t.
    pub fn covariant_hessian(&self, g: &[f64]) -> Result<SymMatrixField, GridError> {
        self.check_len(g)?;
        if self.n == 1 {
            let nt = self.n_theta as isize;
            let h2 = self.d_theta * self.d_theta;
            let mut tt = vec![0.0; self.n_theta];
            for i in 0..nt {
                let p = g[((i + 1).rem_euclid(nt)) as usize];
                let m = g[((i - 1).rem_euclid(nt)) as usize];
                tt[i as usize] = ((p + m) - 2.0 * g[i as usize]) / h2;
            }
            return Ok(SymMatrixField {
                tt,
                tp: Vec::new(),
                pp: Vec::new(),
            });
        }
        let count = self.node_count();
        let mut tt = vec![0.0; count];
        let mut tp = vec![0.0; count];
        let mut pp = vec![0.0; count];
        for j in 0..self.n_theta {
            let o4 = self.pole_zone[j];
            let inv_sin = 1.0 / self.sin_theta[j];
            let cot = self.cos_theta[j] * inv_sin;
            for k in 0..self.n_phi {
                let i = self.index(j, k);
                let (ji, ki) = (j as isize, k as isize);
                let dt = self.d1_theta(g, ji, ki, o4);
                let dp = self.d1_phi(g, ji, ki, o4);
                let dtt = self.d2_theta(g, ji, ki, o4);
                let dpp = self.d2_phi(g, ji, ki, o4);
                let dtp = self.d1_theta_phi(g, ji, ki, o4);
                tt[i] = dtt;
                tp[i] = (dtp - cot * dp) * inv_sin;
                pp[i] = dpp * inv_sin * inv_sin + cot * dt;
            }
        }
        Ok(SymMatrixField { tt, tp, pp })
    }

    // The stencils below pair symmetric samples before any other
    // arithmetic: p1 - m1, p1 + m1, and so on. With the mirrored angle
    // tables this makes the operators bitwise equivariant under the
    // antipodal map and exactly zero on constant fields, including on the
    // wider pole-zone stencils.

    #[inline]
    fn d1_theta(&self, g: &[f64], j: isize, k: isize, o4: bool) -> f64 {
        let a1 = self.fetch(g, j + 1, k) - self.fetch(g, j - 1, k);
        if o4 {
            let a2 = self.fetch(g, j + 2, k) - self.fetch(g, j - 2, k);
            (8.0 * a1 - a2) / (12.0 * self.d_theta)
        } else {
            a1 / (2.0 * self.d_theta)
        }
    }

    #[inline]
    fn d2_theta(&self, g: &[f64], j: isize, k: isize, o4: bool) -> f64 {
        let h2 = self.d_theta * self.d_theta;
        let s1 = self.fetch(g, j + 1, k) + self.fetch(g, j - 1, k);
        let g0 = self.fetch(g, j, k);
        if o4 {
            let s2 = self.fetch(g, j + 2, k) + self.fetch(g, j - 2, k);
            ((16.0 * s1 - s2) - 30.0 * g0) / (12.0 * h2)
        } else {
            (s1 - 2.0 * g0) / h2
        }
    }

    #[inline]
    fn d1_phi(&self, g: &[f64], j: isize, k: isize, o4: bool) -> f64 {
        let a1 = self.fetch(g, j, k + 1) - self.fetch(g, j, k - 1);
        if o4 {
            let a2 = self.fetch(g, j, k + 2) - self.fetch(g, j, k - 2);
            (8.0 * a1 - a2) / (12.0 * self.d_phi)
        } else {
            a1 / (2.0 * self.d_phi)
        }
    }

    #[inline]
    fn d2_phi(&self, g: &[f64], j: isize, k: isize, o4: bool) -> f64 {
        let h2 = self.d_phi * self.d_phi;
        let s1 = self.fetch(g, j, k + 1) + self.fetch(g, j, k - 1);
        let g0 = self.fetch(g, j, k);
        if o4 {
            let s2 = self.fetch(g, j, k + 2) + self.fetch(g, j, k - 2);
            ((16.0 * s1 - s2) - 30.0 * g0) / (12.0 * h2)
        } else {
            (s1 - 2.0 * g0) / h2
        }
    }

    #[inline]
    fn d1_theta_phi(&self, g: &[f64], j: isize, k: isize, o4: bool) -> f64 {
        let dth = |kk: isize| self.d1_theta(g, j, kk, o4);
        let a1 = dth(k + 1) - dth(k - 1);
        if o4 {
            let a2 = dth(k + 2) - dth(k - 2);
            (8.0 * a1 - a2) / (12.0 * self.d_phi)
        } else {
            a1 / (2.0 * self.d_phi)
        }
    }

    /// Largest deviation from evenness: max |g(x) - g(-x)|.
    pub fn odd_deviation(&self, g: &[f64]) -> Result<f64, GridError> {
        self.check_len(g)?;
        let mut dev: f64 = 0.0;
        for i in 0..g.len() {
            dev = dev.max((g[i] - g[self.antipode[i]]).abs());
        }
        Ok(dev)
    }

    /// Even part (g(x) + g(-x)) / 2; makes evenness exact nodewise.
    pub fn symmetrize(&self, g: &[f64]) -> Result<Vec<f64>, GridError> {
        self.check_len(g)?;
        Ok((0..g.len())
            .map(|i| 0.5 * (g[i] + g[self.antipode[i]]))
            .collect())
    }

    /// Bilinear interpolation of a scalar field at a unit direction.
    pub fn interpolate(&self, g: &[f64], x: [f64; 3]) -> Result<f64, GridError> {
        self.check_len(g)?;
        if self.n == 1 {
            let ang = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
            let s = ang / self.d_theta;
            let i0 = s.floor() as isize;
            let frac = s - i0 as f64;
            let nt = self.n_theta as isize;
            let a = g[(i0.rem_euclid(nt)) as usize];
            let b = g[((i0 + 1).rem_euclid(nt)) as usize];
            return Ok(a * (1.0 - frac) + b * frac);
        }
        let th = x[2].clamp(-1.0, 1.0).acos();
        let ph = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
        let sj = th / self.d_theta - 0.5;
        let sk = ph / self.d_phi;
        let j0 = sj.floor() as isize;
        let k0 = sk.floor() as isize;
        let fj = sj - j0 as f64;
        let fk = sk - k0 as f64;
        let g00 = self.fetch(g, j0, k0);
        let g01 = self.fetch(g, j0, k0 + 1);
        let g10 = self.fetch(g, j0 + 1, k0);
        let g11 = self.fetch(g, j0 + 1, k0 + 1);
        Ok(g00 * (1.0 - fj) * (1.0 - fk)
            + g01 * (1.0 - fj) * fk
            + g10 * fj * (1.0 - fk)
            + g11 * fj * fk)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(nt: usize, np: usize) -> Arc<SphereGrid> {
        SphereGrid::build(2, nt, np).unwrap()
    }

    #[test]
    fn build_rejects_bad_arguments() {
        assert!(matches!(
            SphereGrid::build(3, 32, 64),
            Err(GridError::InvalidDimension(3))
        ));
        assert!(matches!(
            SphereGrid::build(2, 7, 64),
            Err(GridError::ResolutionTooSmall { .. })
        ));
        assert!(matches!(
            SphereGrid::build(2, 34, 15),
            Err(GridError::ResolutionTooSmall { .. })
        ));
        assert!(SphereGrid::build(2, 10, 18).is_ok());
        assert!(matches!(
            SphereGrid::build(2, 33, 64),
            Err(GridError::OddCount { .. })
        ));
        assert!(SphereGrid::build(1, 10, 0).is_ok());
        assert!(matches!(
            SphereGrid::build(1, 9, 0),
            Err(GridError::OddCount { .. })
        ));
    }

    #[test]
    fn circle_weights_sum_to_2pi() {
        let g = SphereGrid::build(1, 64, 0).unwrap();
        let total: f64 = g.quad_weights().iter().sum();
        assert!((total - 2.0 * PI).abs() < 1e-12);
        assert_eq!(g.node_count(), 64);
    }

    #[test]
    fn sphere_weights_sum_to_4pi() {
        let g = grid2(32, 64);
        assert_eq!(g.node_count(), 2048);
        let total: f64 = g.quad_weights().iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-3);
        // The exact-cell-area weights actually telescope to 4 pi.
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn nodes_are_unit_and_antipodes_exact() {
        for g in [grid2(16, 32), SphereGrid::build(1, 32, 0).unwrap()] {
            for i in 0..g.node_count() {
                let x = g.node(i);
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                assert!((r - 1.0).abs() < 1e-14);
                let a = g.antipode(i);
                assert_eq!(g.antipode(a), i, "antipode is an involution");
                let y = g.node(a);
                assert_eq!(y[0], -x[0]);
                assert_eq!(y[1], -x[1]);
                assert_eq!(y[2], -x[2]);
            }
        }
    }

    #[test]
    fn no_node_at_poles() {
        let g = grid2(16, 32);
        for i in 0..g.node_count() {
            assert!(g.node(i)[2].abs() < 1.0 - 1e-6);
        }
    }

    #[test]
    fn integrate_constants_and_x3_squared() {
        let g = grid2(32, 64);
        let ones = vec![1.0; g.node_count()];
        assert!((g.integrate(&ones).unwrap() - 4.0 * PI).abs() < 1e-12);
        let x3sq: Vec<f64> = g.nodes().iter().map(|x| x[2] * x[2]).collect();
        let val = g.integrate(&x3sq).unwrap();
        assert!((val - 4.0 * PI / 3.0).abs() < 5e-3, "got {val}");
    }

    #[test]
    fn integrate_circle_cosine() {
        let g = SphereGrid::build(1, 64, 0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.5 * x[0]).collect();
        assert!((g.integrate(&f).unwrap() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn degree_one_integrates_to_zero() {
        let g = grid2(16, 32);
        for v in [[1.0, 0.0, 0.0], [0.3, -0.7, 0.64]] {
            let f: Vec<f64> = g
                .nodes()
                .iter()
                .map(|x| x[0] * v[0] + x[1] * v[1] + x[2] * v[2])
                .collect();
            assert!(g.integrate(&f).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn integrate_rejects_size_mismatch() {
        let g = grid2(16, 32);
        assert!(matches!(
            g.integrate(&[1.0, 2.0]),
            Err(GridError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = grid2(16, 32);
        let f = vec![3.25; g.node_count()];
        let grad = g.gradient(&f).unwrap();
        for i in 0..g.node_count() {
            assert_eq!(grad.theta[i], 0.0);
            assert_eq!(grad.phi[i], 0.0);
        }
    }

    #[test]
    fn gradient_of_linear_function() {
        // |grad g|^2 + g^2 = |v|^2 pointwise for g = <x, v>.
        let g = grid2(32, 64);
        let v = [0.4, -0.2, 0.8];
        let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| x[0] * v[0] + x[1] * v[1] + x[2] * v[2])
            .collect();
        let grad = g.gradient(&f).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.node_count() {
            worst = worst.max((grad.norm_sq(i) + f[i] * f[i] - vv).abs());
        }
        assert!(worst < 5e-3, "worst deviation {worst}");
    }

    #[test]
    fn gradient_of_x3_matches_analytic() {
        let g = grid2(32, 64);
        let f: Vec<f64> = g.nodes().iter().map(|x| x[2]).collect();
        let grad = g.gradient(&f).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..g.n_theta() {
            for k in 0..g.n_phi() {
                let i = g.index(j, k);
                worst = worst.max((grad.theta[i] + g.sin_theta_row(j)).abs());
                worst = worst.max(grad.phi[i].abs());
            }
        }
        assert!(worst < 3e-3, "worst deviation {worst}");
    }

    /// Analytic covariant Hessian of g = x3^2 = cos^2(theta):
    /// H_tt = -2 cos(2 theta), H_tp = 0, H_pp = -2 cos^2(theta).
    fn x3sq_hessian_error(nt: usize, np: usize) -> f64 {
        let g = grid2(nt, np);
        let f: Vec<f64> = g.nodes().iter().map(|x| x[2] * x[2]).collect();
        let h = g.covariant_hessian(&f).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..g.n_theta() {
            let th = g.colatitude(j);
            for k in 0..g.n_phi() {
                let i = g.index(j, k);
                worst = worst.max((h.tt[i] + 2.0 * (2.0 * th).cos()).abs());
                worst = worst.max(h.tp[i].abs());
                worst = worst.max((h.pp[i] + 2.0 * th.cos() * th.cos()).abs());
            }
        }
        worst
    }

    #[test]
    fn hessian_of_x3_squared_converges_second_order() {
        let e1 = x3sq_hessian_error(16, 32);
        let e2 = x3sq_hessian_error(32, 64);
        let e3 = x3sq_hessian_error(64, 128);
        assert!(e1 / e2 > 3.5, "16->32 ratio {}", e1 / e2);
        assert!(e2 / e3 > 3.5, "32->64 ratio {}", e2 / e3);
    }

    fn linear_hessian_error(nt: usize, np: usize, v: [f64; 3]) -> f64 {
        let g = grid2(nt, np);
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| x[0] * v[0] + x[1] * v[1] + x[2] * v[2])
            .collect();
        let h = g.covariant_hessian(&f).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.node_count() {
            worst = worst.max((h.tt[i] + f[i]).abs());
            worst = worst.max(h.tp[i].abs());
            worst = worst.max((h.pp[i] + f[i]).abs());
        }
        worst
    }

    #[test]
    fn hessian_of_linear_is_minus_g_nodewise() {
        // H + gI = 0 for support functions of points, including the m = 1
        // content of v = e1 which exercises the pole-zone stencils.
        let v = [0.7, -0.3, 0.5];
        let e1 = linear_hessian_error(16, 32, v);
        let e2 = linear_hessian_error(32, 64, v);
        let e3 = linear_hessian_error(64, 128, v);
        assert!(e2 < 5e-3, "error at 32x64: {e2}");
        assert!(e1 / e2 > 3.5, "16->32 ratio {}", e1 / e2);
        assert!(e2 / e3 > 3.5, "32->64 ratio {}", e2 / e3);
    }

    #[test]
    fn hessian_of_constant_is_zero_exactly() {
        let g = grid2(16, 32);
        let f = vec![2.5; g.node_count()];
        let h = g.covariant_hessian(&f).unwrap();
        for i in 0..g.node_count() {
            assert_eq!(h.tt[i], 0.0);
            assert_eq!(h.tp[i], 0.0);
            assert_eq!(h.pp[i], 0.0);
        }
    }

    #[test]
    fn circle_hessian_of_cos() {
        let g = SphereGrid::build(1, 128, 0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| x[0]).collect();
        let h = g.covariant_hessian(&f).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.node_count() {
            worst = worst.max((h.tt[i] + f[i]).abs());
        }
        assert!(worst < 1e-3);
    }

    #[test]
    fn discrete_integration_by_parts() {
        // |int g Lap h - int h Lap g| <= C h^2 for smooth fields.
        let err = |nt: usize, np: usize| -> f64 {
            let g = grid2(nt, np);
            let a: Vec<f64> = g.nodes().iter().map(|x| (1.0 + x[2]).exp()).collect();
            let b: Vec<f64> = g.nodes().iter().map(|x| x[0] * x[0] - 0.5 * x[1]).collect();
            let ha = g.covariant_hessian(&a).unwrap();
            let hb = g.covariant_hessian(&b).unwrap();
            let lap_a: Vec<f64> = (0..g.node_count()).map(|i| ha.trace(i)).collect();
            let lap_b: Vec<f64> = (0..g.node_count()).map(|i| hb.trace(i)).collect();
            let lhs: Vec<f64> = (0..g.node_count()).map(|i| a[i] * lap_b[i]).collect();
            let rhs: Vec<f64> = (0..g.node_count()).map(|i| b[i] * lap_a[i]).collect();
            (g.integrate(&lhs).unwrap() - g.integrate(&rhs).unwrap()).abs()
        };
        let e1 = err(16, 32);
        let e2 = err(32, 64);
        assert!(e2 < 5e-2, "IBP defect {e2}");
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn antipodal_equivariance_is_exact_for_even_fields() {
        let g = grid2(16, 32);
        // Even field with full m-content: products of coordinates.
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| 1.0 + 0.3 * x[0] * x[2] + 0.2 * x[1] * x[1] + 0.1 * x[0] * x[1])
            .collect();
        let f = g.symmetrize(&f).unwrap();
        assert_eq!(g.odd_deviation(&f).unwrap(), 0.0);
        let grad = g.gradient(&f).unwrap();
        let hess = g.covariant_hessian(&f).unwrap();
        for i in 0..g.node_count() {
            let a = g.antipode(i);
            // Frame transport under the antipodal map: e_theta fixed,
            // e_phi negated.
            assert_eq!(grad.theta[a], -grad.theta[i]);
            assert_eq!(grad.phi[a], grad.phi[i]);
            assert_eq!(hess.tt[a], hess.tt[i]);
            assert_eq!(hess.tp[a], -hess.tp[i]);
            assert_eq!(hess.pp[a], hess.pp[i]);
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_fields() {
        let g = grid2(32, 64);
        let f: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.2 * x[2] * x[2]).collect();
        let x = [0.48, -0.6, 0.641_248_781_675_256_4f64];
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let x = [x[0] / r, x[1] / r, x[2] / r];
        let exact = 1.0 + 0.2 * x[2] * x[2];
        assert!((g.interpolate(&f, x).unwrap() - exact).abs() < 1e-3);
    }
}
