//! Euler fluxes, characteristic decompositions and the fast/slow flux partition.
//!
//! Characteristic fields are always ordered advective first, then `u - a`,
//! then `u + a`, so the fast/slow masks are fixed index sets: the first
//! `nvar - 2` fields are slow, the last two are fast.

use crate::error::Result;
use crate::state::{primitive_from_conserved, primitive_unchecked, Dir, PhysConstants, Primitive, MAX_VARS};

/// Dense matrix for up to four components; 1D uses the leading 3x3 block.
pub type Mat = [[f64; MAX_VARS]; MAX_VARS];

pub const ZERO_MAT: Mat = [[0.0; MAX_VARS]; MAX_VARS];

pub fn identity(nv: usize) -> Mat {
    let mut m = ZERO_MAT;
    for (k, row) in m.iter_mut().enumerate().take(nv) {
        row[k] = 1.0;
    }
    m
}

#[inline]
pub fn mat_vec(nv: usize, m: &Mat, x: &[f64]) -> [f64; MAX_VARS] {
    let mut y = [0.0; MAX_VARS];
    for r in 0..nv {
        let mut s = 0.0;
        for c in 0..nv {
            s += m[r][c] * x[c];
        }
        y[r] = s;
    }
    y
}

pub fn mat_mul(nv: usize, a: &Mat, b: &Mat) -> Mat {
    let mut out = ZERO_MAT;
    for r in 0..nv {
        for c in 0..nv {
            let mut s = 0.0;
            for k in 0..nv {
                s += a[r][k] * b[k][c];
            }
            out[r][c] = s;
        }
    }
    out
}

/// Number of advective (slow) characteristic fields.
#[inline]
pub fn advective_fields(nv: usize) -> usize {
    nv - 2
}

/// Right/left eigenvectors and wave speeds of the flux Jacobian in one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSystem {
    pub nvar: usize,
    /// Right eigenvectors as columns (X).
    pub right: Mat,
    /// Left eigenvectors as rows (X⁻¹).
    pub left: Mat,
    pub speeds: [f64; MAX_VARS],
}

impl EigenSystem {
    /// Builds `X diag(d) X⁻¹`.
    pub fn compose(&self, d: &[f64; MAX_VARS]) -> Mat {
        let nv = self.nvar;
        let mut out = ZERO_MAT;
        for r in 0..nv {
            for c in 0..nv {
                let mut s = 0.0;
                for k in 0..nv {
                    s += self.right[r][k] * d[k] * self.left[k][c];
                }
                out[r][c] = s;
            }
        }
        out
    }

    /// `X diag(d) X⁻¹ x` without forming the matrix.
    #[inline]
    pub fn apply_diag(&self, d: &[f64; MAX_VARS], x: &[f64]) -> [f64; MAX_VARS] {
        let nv = self.nvar;
        let mut w = [0.0; MAX_VARS];
        for k in 0..nv {
            let mut s = 0.0;
            for c in 0..nv {
                s += self.left[k][c] * x[c];
            }
            w[k] = d[k] * s;
        }
        let mut y = [0.0; MAX_VARS];
        for r in 0..nv {
            let mut s = 0.0;
            for k in 0..nv {
                s += self.right[r][k] * w[k];
            }
            y[r] = s;
        }
        y
    }

    /// Mask selecting the fast (acoustic) fields.
    pub fn fast_mask(&self) -> [f64; MAX_VARS] {
        let mut m = [0.0; MAX_VARS];
        for mk in m.iter_mut().take(self.nvar).skip(advective_fields(self.nvar)) {
            *mk = 1.0;
        }
        m
    }
}

/// Eigensystem from velocity, sound speed and total specific enthalpy.
///
/// Only these averages enter the eigenvectors, which lets the interface
/// dissipation use either arithmetic or Roe-averaged states.
pub fn eigensystem_from_averages(nv: usize, vel: [f64; 2], a: f64, h: f64, dir: Dir, gamma: f64) -> EigenSystem {
    let (u, v) = (vel[0], vel[1]);
    let b1 = (gamma - 1.0) / (a * a);
    let mut right = ZERO_MAT;
    let mut left = ZERO_MAT;
    let speeds;
    if nv == 3 {
        let b2 = 0.5 * b1 * u * u;
        // columns: u, u - a, u + a
        right[0] = [1.0, 1.0, 1.0, 0.0];
        right[1] = [u, u - a, u + a, 0.0];
        right[2] = [0.5 * u * u, h - u * a, h + u * a, 0.0];
        left[0] = [1.0 - b2, b1 * u, -b1, 0.0];
        left[1] = [0.5 * (b2 + u / a), -0.5 * (b1 * u + 1.0 / a), 0.5 * b1, 0.0];
        left[2] = [0.5 * (b2 - u / a), -0.5 * (b1 * u - 1.0 / a), 0.5 * b1, 0.0];
        speeds = [u, u - a, u + a, 0.0];
    } else {
        let (nx, ny) = match dir {
            Dir::X => (1.0, 0.0),
            Dir::Y => (0.0, 1.0),
        };
        let un = u * nx + v * ny;
        let ut = -u * ny + v * nx;
        let b2 = 0.5 * b1 * (u * u + v * v);
        // columns: entropy, shear, u_n - a, u_n + a
        right[0] = [1.0, 0.0, 1.0, 1.0];
        right[1] = [u, -ny, u - a * nx, u + a * nx];
        right[2] = [v, nx, v - a * ny, v + a * ny];
        right[3] = [0.5 * (u * u + v * v), ut, h - a * un, h + a * un];
        left[0] = [1.0 - b2, b1 * u, b1 * v, -b1];
        left[1] = [-ut, -ny, nx, 0.0];
        left[2] = [
            0.5 * (b2 + un / a),
            -0.5 * (b1 * u + nx / a),
            -0.5 * (b1 * v + ny / a),
            0.5 * b1,
        ];
        left[3] = [
            0.5 * (b2 - un / a),
            -0.5 * (b1 * u - nx / a),
            -0.5 * (b1 * v - ny / a),
            0.5 * b1,
        ];
        speeds = [un, un, un - a, un + a];
    }
    EigenSystem {
        nvar: nv,
        right,
        left,
        speeds,
    }
}

#[inline]
pub(crate) fn eigensystem_of_primitive(nv: usize, prim: &Primitive, dir: Dir, gamma: f64) -> EigenSystem {
    let a = (gamma * prim.p / prim.rho).sqrt();
    let h = a * a / (gamma - 1.0) + 0.5 * prim.speed_sq();
    eigensystem_from_averages(nv, prim.vel, a, h, dir, gamma)
}

/// Eigensystem of the flux Jacobian of state `q` in direction `dir`.
pub fn eigensystem(q: &[f64], dir: Dir, c: &PhysConstants) -> Result<EigenSystem> {
    let prim = primitive_from_conserved(q, c)?;
    Ok(eigensystem_of_primitive(q.len(), &prim, dir, c.gamma))
}

/// Normal flux in direction `dir`; `q` must be a valid state.
#[inline]
pub(crate) fn flux_unchecked(q: &[f64], dir: Dir, gamma: f64) -> [f64; MAX_VARS] {
    let prim = primitive_unchecked(q, gamma);
    let p = prim.p;
    if q.len() == 3 {
        let u = prim.vel[0];
        [q[1], q[1] * u + p, (q[2] + p) * u, 0.0]
    } else {
        let [u, v] = prim.vel;
        match dir {
            Dir::X => [q[1], q[1] * u + p, q[2] * u, (q[3] + p) * u],
            Dir::Y => [q[2], q[1] * v, q[2] * v + p, (q[3] + p) * v],
        }
    }
}

/// Euler flux `f` (x) or `h` (y) of a conserved state.
pub fn flux(q: &[f64], dir: Dir, c: &PhysConstants) -> Result<[f64; MAX_VARS]> {
    primitive_from_conserved(q, c)?;
    Ok(flux_unchecked(q, dir, c.gamma))
}

pub fn sound_speed(q: &[f64], c: &PhysConstants) -> Result<f64> {
    let prim = primitive_from_conserved(q, c)?;
    Ok((c.gamma * prim.p / prim.rho).sqrt())
}

/// Fast (acoustic) and slow (advective) parts of the flux Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionedJacobians {
    pub nvar: usize,
    pub fast: Mat,
    pub slow: Mat,
}

pub(crate) fn partition_of(eig: &EigenSystem) -> PartitionedJacobians {
    let nv = eig.nvar;
    let nadv = advective_fields(nv);
    let mut lf = [0.0; MAX_VARS];
    let mut ls = [0.0; MAX_VARS];
    for k in 0..nv {
        if k < nadv {
            ls[k] = eig.speeds[k];
        } else {
            lf[k] = eig.speeds[k];
        }
    }
    PartitionedJacobians {
        nvar: nv,
        fast: eig.compose(&lf),
        slow: eig.compose(&ls),
    }
}

pub fn partition_jacobians(q: &[f64], dir: Dir, c: &PhysConstants) -> Result<PartitionedJacobians> {
    Ok(partition_of(&eigensystem(q, dir, c)?))
}

/// Closed-form slow and fast 1D fluxes `(f_S, f_F)`.
pub fn split_flux_closed_form(q: &[f64], c: &PhysConstants) -> Result<([f64; 3], [f64; 3])> {
    let prim = primitive_from_conserved(&q[..3], c)?;
    let g = c.gamma;
    let k = (g - 1.0) / g;
    let (rho, u) = (prim.rho, prim.vel[0]);
    let slow = [k * rho * u, k * rho * u * u, 0.5 * k * rho * u * u * u];
    let f = flux_unchecked(&q[..3], Dir::X, g);
    let fast = [f[0] - slow[0], f[1] - slow[1], f[2] - slow[2]];
    Ok((slow, fast))
}

/// `A_F(q_freeze) q`: the fast flux linearized about a frozen state.
pub fn linearized_fast_flux(q_freeze: &[f64], q: &[f64], dir: Dir, c: &PhysConstants) -> Result<[f64; MAX_VARS]> {
    let part = partition_jacobians(q_freeze, dir, c)?;
    Ok(mat_vec(q.len(), &part.fast, q))
}

/// Exner pressure and potential temperature `(π, θ)`.
pub fn diagnostics_exner_theta(q: &[f64], c: &PhysConstants) -> Result<(f64, f64)> {
    let prim = primitive_from_conserved(q, c)?;
    Ok(exner_theta_of(&prim, c))
}

pub(crate) fn exner_theta_of(prim: &Primitive, c: &PhysConstants) -> (f64, f64) {
    let pi = (prim.p / c.p_ref).powf((c.gamma - 1.0) / c.gamma);
    let t = prim.p / (prim.rho * c.gas_constant);
    (pi, t / pi)
}

/// Pointwise source `(0, -ρ g, -ρ u·g)`; linear in the conserved state.
#[inline]
pub(crate) fn source_point(q: &[f64], gravity: [f64; 2]) -> [f64; MAX_VARS] {
    if q.len() == 3 {
        [0.0, -q[0] * gravity[0], -q[1] * gravity[0], 0.0]
    } else {
        [
            0.0,
            -q[0] * gravity[0],
            -q[0] * gravity[1],
            -(q[1] * gravity[0] + q[2] * gravity[1]),
        ]
    }
}

/// Jacobian of [`source_point`]; constant because gravity does not depend on the state.
pub fn source_jacobian(nv: usize, gravity: [f64; 2]) -> Mat {
    let mut s = ZERO_MAT;
    if nv == 3 {
        s[1][0] = -gravity[0];
        s[2][1] = -gravity[0];
    } else {
        s[1][0] = -gravity[0];
        s[2][0] = -gravity[1];
        s[3][1] = -gravity[0];
        s[3][2] = -gravity[1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::conserved_from_primitive;
    use proptest::prelude::*;

    fn c() -> PhysConstants {
        PhysConstants::nondimensional()
    }

    fn state(nv: usize, rho: f64, u: f64, v: f64, p: f64) -> Vec<f64> {
        let prim = Primitive { rho, vel: [u, v], p };
        conserved_from_primitive(&prim, nv - 2, &c())[..nv].to_vec()
    }

    /// Central finite-difference Jacobian of the flux; independent of the eigenvectors.
    fn fd_jacobian(q: &[f64], dir: Dir) -> Mat {
        let nv = q.len();
        let mut jac = ZERO_MAT;
        for col in 0..nv {
            let h = 1e-6 * q[col].abs().max(1.0);
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[col] += h;
            qm[col] -= h;
            let fp = flux(&qp, dir, &c()).unwrap();
            let fm = flux(&qm, dir, &c()).unwrap();
            for r in 0..nv {
                jac[r][col] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        jac
    }

    fn max_rel_diff(nv: usize, a: &Mat, b: &Mat) -> f64 {
        let scale = (0..nv)
            .flat_map(|r| (0..nv).map(move |c| (r, c)))
            .map(|(r, c)| b[r][c].abs())
            .fold(1e-300, f64::max);
        let mut d: f64 = 0.0;
        for r in 0..nv {
            for col in 0..nv {
                d = d.max((a[r][col] - b[r][col]).abs());
            }
        }
        d / scale
    }

    #[test]
    fn stationary_gas_flux() {
        let q = state(3, 1.0, 0.0, 0.0, 1.0 / 1.4);
        let f = flux(&q, Dir::X, &c()).unwrap();
        assert_eq!(f[0], 0.0);
        assert!((f[1] - 1.0 / 1.4).abs() < 1e-15);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn moving_gas_flux_matches_arithmetic() {
        let g = 1.4;
        let p = 1.0 / g;
        let q = state(3, 1.0, 0.2, 0.0, p);
        let e = p / (g - 1.0) + 0.5 * 0.04;
        let f = flux(&q, Dir::X, &c()).unwrap();
        assert!((f[0] - 0.2).abs() < 1e-15);
        assert!((f[1] - (0.04 + p)).abs() < 1e-15);
        assert!((f[2] - (e + p) * 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_normal_velocity_y_flux() {
        let q = state(4, 1.2, 0.3, 0.0, 0.9);
        let h = flux(&q, Dir::Y, &c()).unwrap();
        assert_eq!(h[0], 0.0);
        assert_eq!(h[1], 0.0);
        assert!((h[2] - 0.9).abs() < 1e-15);
        assert_eq!(h[3], 0.0);
    }

    #[test]
    fn sound_speed_examples() {
        assert!((sound_speed(&state(3, 1.0, 0.0, 0.0, 1.0 / 1.4), &c()).unwrap() - 1.0).abs() < 1e-15);
        assert!((sound_speed(&state(3, 1.4, 0.0, 0.0, 1.0), &c()).unwrap() - 1.0).abs() < 1e-15);
        let air = PhysConstants::atmosphere(300.0);
        let a0 = (air.gamma * air.gas_constant * air.t_ref).sqrt();
        assert!((a0 - 347.22).abs() < 5e-3);
        let bad = [1.0, 0.0, -1.0];
        assert!(sound_speed(&bad, &c()).is_err());
    }

    #[test]
    fn mach_point_two_speeds() {
        let q = state(3, 1.0, 0.2, 0.0, 1.0 / 1.4);
        let eig = eigensystem(&q, Dir::X, &c()).unwrap();
        let want = [0.2, -0.8, 1.2];
        for k in 0..3 {
            assert!((eig.speeds[k] - want[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn y_direction_zero_normal_speeds() {
        let q = state(4, 1.0, 0.4, 0.0, 1.0 / 1.4);
        let eig = eigensystem(&q, Dir::Y, &c()).unwrap();
        assert_eq!(eig.speeds[0], 0.0);
        assert_eq!(eig.speeds[1], 0.0);
        assert!((eig.speeds[2] + 1.0).abs() < 1e-14);
        assert!((eig.speeds[3] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stationary_eigensystem_diagonalizes_fd_jacobian() {
        let q = state(3, 1.0, 0.0, 0.0, 1.0 / 1.4);
        let eig = eigensystem(&q, Dir::X, &c()).unwrap();
        let a = eig.compose(&eig.speeds);
        assert!(max_rel_diff(3, &a, &fd_jacobian(&q, Dir::X)) < 1e-8);
    }

    #[test]
    fn slow_flux_at_rest_has_no_mass_flux() {
        let q = state(3, 1.0, 0.0, 0.0, 1.0 / 1.4);
        let part = partition_jacobians(&q, Dir::X, &c()).unwrap();
        let fs = mat_vec(3, &part.slow, &q);
        assert!(fs[0].abs() < 1e-16);
    }

    #[test]
    fn slow_flux_closed_values() {
        let g = 1.4;
        let k = (g - 1.0) / g;
        let q = state(3, 1.0, 0.2, 0.0, 1.0 / g);
        let part = partition_jacobians(&q, Dir::X, &c()).unwrap();
        let fs = mat_vec(3, &part.slow, &q);
        let want = [k * 0.2, k * 0.04, 0.5 * k * 0.008];
        for i in 0..3 {
            assert!((fs[i] - want[i]).abs() < 1e-14, "{i}: {} vs {}", fs[i], want[i]);
        }
    }

    #[test]
    fn closed_form_split_at_rest() {
        let p = 1.0 / 1.4;
        let q = state(3, 1.0, 0.0, 0.0, p);
        let (fs, ff) = split_flux_closed_form(&q, &c()).unwrap();
        assert_eq!(fs, [0.0, 0.0, 0.0]);
        assert_eq!(ff[0], 0.0);
        assert!((ff[1] - p).abs() < 1e-15);
        assert_eq!(ff[2], 0.0);
    }

    #[test]
    fn linearized_fast_flux_zero_vector() {
        let qf = state(3, 1.1, 0.3, 0.0, 0.8);
        let f = linearized_fast_flux(&qf, &[0.0, 0.0, 0.0], Dir::X, &c()).unwrap();
        assert_eq!(&f[..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn exner_theta_at_reference_pressure() {
        let air = PhysConstants::atmosphere(300.0);
        let rho = air.p_ref / (air.gas_constant * 290.0);
        let prim = Primitive {
            rho,
            vel: [0.0, 0.0],
            p: air.p_ref,
        };
        let q = conserved_from_primitive(&prim, 2, &air);
        let (pi, theta) = diagnostics_exner_theta(&q, &air).unwrap();
        assert!((pi - 1.0).abs() < 1e-15);
        assert!((theta - 290.0).abs() < 1e-10);
    }

    #[test]
    fn source_jacobian_matches_pointwise_source() {
        let g = [0.3, 9.8];
        let q = state(4, 1.2, 0.5, -0.2, 1.0);
        let s = source_point(&q, g);
        let sj = mat_vec(4, &source_jacobian(4, g), &q);
        for k in 0..4 {
            assert!((s[k] - sj[k]).abs() < 1e-14);
        }
        // uniform density, gravity along y
        assert!((s[2] + 1.2 * 9.8).abs() < 1e-14);
        assert!((s[3] + 1.2 * (0.5 * 0.3 - 0.2 * 9.8)).abs() < 1e-13);
    }

    fn valid_state(nv: usize) -> impl Strategy<Value = Vec<f64>> {
        (0.2f64..3.0, -1.5f64..1.5, -1.5f64..1.5, 0.2f64..3.0)
            .prop_map(move |(rho, u, v, p)| state(nv, rho, u, if nv == 3 { 0.0 } else { v }, p))
    }

    fn any_dir() -> impl Strategy<Value = Dir> {
        prop_oneof![Just(Dir::X), Just(Dir::Y)]
    }

    proptest! {
        #[test]
        fn eigenvectors_are_inverse(q in valid_state(4), dir in any_dir()) {
            let eig = eigensystem(&q, dir, &c()).unwrap();
            let prod = mat_mul(4, &eig.right, &eig.left);
            prop_assert!(max_rel_diff(4, &prod, &identity(4)) < 1e-12);
        }

        #[test]
        fn eigensystem_reproduces_fd_jacobian_1d(q in valid_state(3)) {
            let eig = eigensystem(&q, Dir::X, &c()).unwrap();
            let prod = mat_mul(3, &eig.right, &eig.left);
            prop_assert!(max_rel_diff(3, &prod, &identity(3)) < 1e-12);
            let a = eig.compose(&eig.speeds);
            prop_assert!(max_rel_diff(3, &a, &fd_jacobian(&q, Dir::X)) < 1e-8);
        }

        #[test]
        fn eigensystem_reproduces_fd_jacobian_2d(q in valid_state(4), dir in any_dir()) {
            let eig = eigensystem(&q, dir, &c()).unwrap();
            let a = eig.compose(&eig.speeds);
            prop_assert!(max_rel_diff(4, &a, &fd_jacobian(&q, dir)) < 1e-8);
        }

        #[test]
        fn partition_sums_to_jacobian(q in valid_state(4), dir in any_dir()) {
            let eig = eigensystem(&q, dir, &c()).unwrap();
            let part = partition_of(&eig);
            let a = eig.compose(&eig.speeds);
            let mut sum = ZERO_MAT;
            for r in 0..4 { for col in 0..4 { sum[r][col] = part.fast[r][col] + part.slow[r][col]; } }
            prop_assert!(max_rel_diff(4, &sum, &a) < 1e-12);
            prop_assert!(max_rel_diff(4, &sum, &fd_jacobian(&q, dir)) < 1e-8);
        }

        #[test]
        fn partition_eigenvalues(q in valid_state(4), dir in any_dir()) {
            let eig = eigensystem(&q, dir, &c()).unwrap();
            let part = partition_of(&eig);
            let to_na = |m: &Mat| nalgebra::Matrix4::from_fn(|r, col| m[r][col]);
            let mut slow: Vec<f64> = to_na(&part.slow).complex_eigenvalues().iter().map(|z| z.re).collect();
            let mut fast: Vec<f64> = to_na(&part.fast).complex_eigenvalues().iter().map(|z| z.re).collect();
            slow.sort_by(f64::total_cmp);
            fast.sort_by(f64::total_cmp);
            let un = eig.speeds[0];
            let a = 0.5 * (eig.speeds[3] - eig.speeds[2]);
            let mut want_slow = vec![un, un, 0.0, 0.0];
            let mut want_fast = vec![0.0, 0.0, un - a, un + a];
            want_slow.sort_by(f64::total_cmp);
            want_fast.sort_by(f64::total_cmp);
            for k in 0..4 {
                prop_assert!((slow[k] - want_slow[k]).abs() < 1e-6);
                prop_assert!((fast[k] - want_fast[k]).abs() < 1e-6);
            }
        }

        #[test]
        fn flux_is_homogeneous(q in valid_state(4), dir in any_dir()) {
            let eig = eigensystem(&q, dir, &c()).unwrap();
            let aq = mat_vec(4, &eig.compose(&eig.speeds), &q);
            let f = flux(&q, dir, &c()).unwrap();
            let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for k in 0..4 {
                prop_assert!((aq[k] - f[k]).abs() / scale < 1e-12);
            }
        }

        #[test]
        fn closed_form_split_matches_matrix_products(q in valid_state(3)) {
            let (fs, ff) = split_flux_closed_form(&q, &c()).unwrap();
            let part = partition_jacobians(&q, Dir::X, &c()).unwrap();
            let asq = mat_vec(3, &part.slow, &q);
            let afq = mat_vec(3, &part.fast, &q);
            let f = flux(&q, Dir::X, &c()).unwrap();
            let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for k in 0..3 {
                prop_assert!((fs[k] + ff[k] - f[k]).abs() / scale < 1e-15);
                prop_assert!((fs[k] - asq[k]).abs() / scale < 1e-12);
                prop_assert!((ff[k] - afq[k]).abs() / scale < 1e-12);
            }
            let lin = linearized_fast_flux(&q, &q, Dir::X, &c()).unwrap();
            for k in 0..3 {
                prop_assert!((lin[k] - ff[k]).abs() / scale < 1e-12);
            }
        }

        #[test]
        fn linearized_fast_flux_is_linear(
            qf in valid_state(4),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            x in proptest::collection::vec(-2.0f64..2.0, 4),
            y in proptest::collection::vec(-2.0f64..2.0, 4),
            dir in any_dir(),
        ) {
            let comb: Vec<f64> = (0..4).map(|k| a * x[k] + b * y[k]).collect();
            let lhs = linearized_fast_flux(&qf, &comb, dir, &c()).unwrap();
            let fx = linearized_fast_flux(&qf, &x, dir, &c()).unwrap();
            let fy = linearized_fast_flux(&qf, &y, dir, &c()).unwrap();
            for k in 0..4 {
                let rhs = a * fx[k] + b * fy[k];
                prop_assert!((lhs[k] - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
