//! Grids, conserved-variable fields, physical constants and ghost cells.
//!
//! Fields are stored structure-of-arrays: one contiguous block per
//! conserved component covering interior and ghost points. Krylov-side
//! vectors use a different, interleaved layout (see [`StateField::interior_vec`]).

use crate::error::{Error, Location, Result};

/// Ghost layers on each side; WENO5/CRWENO5 stencils reach two cells past an interface.
pub const GHOST_WIDTH: usize = 3;

/// Largest component count (2D: ρ, ρu, ρv, e).
pub const MAX_VARS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    pub gamma: f64,
    /// Specific gas constant, J/(kg K).
    pub gas_constant: f64,
    /// Gravitational force per unit mass; the momentum source is `-ρ g`.
    pub gravity: [f64; 2],
    /// Reference pressure p₀ used by the Exner pressure.
    pub p_ref: f64,
    /// Reference temperature T₀.
    pub t_ref: f64,
}

impl PhysConstants {
    /// γ = 1.4 with unit gas constant and reference values, no gravity.
    pub fn nondimensional() -> Self {
        PhysConstants {
            gamma: 1.4,
            gas_constant: 1.0,
            gravity: [0.0, 0.0],
            p_ref: 1.0,
            t_ref: 1.0,
        }
    }

    /// Dry air with gravity along -y (9.8 m/s²), p₀ = 1e5 Pa, R = 287.058.
    pub fn atmosphere(t_ref: f64) -> Self {
        PhysConstants {
            gamma: 1.4,
            gas_constant: 287.058,
            gravity: [0.0, 9.8],
            p_ref: 1.0e5,
            t_ref,
        }
    }

    /// Reference density `p₀ / (R T₀)`.
    pub fn rho_ref(&self) -> f64 {
        self.p_ref / (self.gas_constant * self.t_ref)
    }

    /// Magnitudes of the flux components in reference units: mass flux
    /// `ρ₀U`, momentum flux `p₀`, energy flux `p₀U` with `U = √(p₀/ρ₀)`.
    pub fn flux_scales(&self, nv: usize) -> [f64; MAX_VARS] {
        let u = (self.p_ref / self.rho_ref()).sqrt();
        let mut s = [self.p_ref; MAX_VARS];
        s[0] = self.rho_ref() * u;
        s[nv - 1] = self.p_ref * u;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::config(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if !(self.gas_constant > 0.0) {
            return Err(Error::config("gas constant must be positive"));
        }
        if !(self.p_ref > 0.0) {
            return Err(Error::config("reference pressure must be positive"));
        }
        Ok(())
    }

    pub fn has_gravity(&self) -> bool {
        self.gravity.iter().any(|g| *g != 0.0)
    }
}

/// Coordinate direction of a flux or grid line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    X,
    Y,
}

impl Dir {
    pub fn index(self) -> usize {
        match self {
            Dir::X => 0,
            Dir::Y => 1,
        }
    }

    pub fn all(dims: usize) -> &'static [Dir] {
        if dims == 1 {
            &[Dir::X]
        } else {
            &[Dir::X, Dir::Y]
        }
    }
}

/// Uniform Cartesian grid of cell centres `x_i = x0 + (i + 1/2) Δx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dims: usize,
    pub nx: usize,
    pub ny: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub ghost: usize,
}

impl Grid {
    pub fn one_d(n: usize, x0: f64, x1: f64) -> Result<Self> {
        let g = Grid {
            dims: 1,
            nx: n,
            ny: 1,
            x_range: (x0, x1),
            y_range: (0.0, 1.0),
            ghost: GHOST_WIDTH,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn two_d(nx: usize, ny: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        let g = Grid {
            dims: 2,
            nx,
            ny,
            x_range,
            y_range,
            ghost: GHOST_WIDTH,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.ghost < GHOST_WIDTH {
            return Err(Error::config("ghost width must be at least 3"));
        }
        if self.nx < 5 || (self.dims == 2 && self.ny < 5) {
            return Err(Error::config("grid lines need at least 5 points"));
        }
        if !(self.x_range.1 > self.x_range.0) || (self.dims == 2 && !(self.y_range.1 > self.y_range.0)) {
            return Err(Error::config("grid extents must be increasing"));
        }
        Ok(())
    }

    pub fn nvar(&self) -> usize {
        self.dims + 2
    }

    pub fn dx(&self) -> f64 {
        (self.x_range.1 - self.x_range.0) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        if self.dims == 1 {
            1.0
        } else {
            (self.y_range.1 - self.y_range.0) / self.ny as f64
        }
    }

    pub fn spacing(&self, dir: Dir) -> f64 {
        match dir {
            Dir::X => self.dx(),
            Dir::Y => self.dy(),
        }
    }

    pub fn min_spacing(&self) -> f64 {
        if self.dims == 1 {
            self.dx()
        } else {
            self.dx().min(self.dy())
        }
    }

    /// Cell volume (length in 1D, area in 2D).
    pub fn cell_volume(&self) -> f64 {
        if self.dims == 1 {
            self.dx()
        } else {
            self.dx() * self.dy()
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_range.0 + (i as f64 + 0.5) * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        if self.dims == 1 {
            0.0
        } else {
            self.y_range.0 + (j as f64 + 0.5) * self.dy()
        }
    }

    /// Number of interior points along `dir`.
    pub fn n_along(&self, dir: Dir) -> usize {
        match dir {
            Dir::X => self.nx,
            Dir::Y => self.ny,
        }
    }

    /// Number of grid lines running along `dir`.
    pub fn lines_along(&self, dir: Dir) -> usize {
        match dir {
            Dir::X => self.ny,
            Dir::Y => self.nx,
        }
    }

    pub fn nx_pad(&self) -> usize {
        self.nx + 2 * self.ghost
    }

    pub fn ny_pad(&self) -> usize {
        if self.dims == 1 {
            1
        } else {
            self.ny + 2 * self.ghost
        }
    }

    /// Ghost offset in y (zero in 1D).
    pub fn gy(&self) -> usize {
        if self.dims == 1 {
            0
        } else {
            self.ghost
        }
    }

    pub fn len_pad(&self) -> usize {
        self.nx_pad() * self.ny_pad()
    }

    pub fn n_interior(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index of a padded position.
    #[inline]
    pub fn pidx(&self, ip: usize, jp: usize) -> usize {
        jp * self.nx_pad() + ip
    }

    /// Flat padded index of interior point `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        self.pidx(i + self.ghost, j + self.gy())
    }

    /// Start and stride of grid line `line` along `dir`, in padded storage.
    /// The line has `n_along(dir) + 2 * ghost` entries.
    #[inline]
    pub fn line(&self, dir: Dir, line: usize) -> (usize, usize) {
        match dir {
            Dir::X => (self.pidx(0, line + self.gy()), 1),
            Dir::Y => (self.pidx(line + self.ghost, 0), self.nx_pad()),
        }
    }

    /// Interior point `(i, j)` of the cell at position `m` on line `line` along `dir`.
    #[inline]
    pub fn line_point(&self, dir: Dir, line: usize, m: usize) -> (usize, usize) {
        match dir {
            Dir::X => (m, line),
            Dir::Y => (line, m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Periodic,
    InviscidWall,
}

/// Boundary condition per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundarySpec {
    pub x_lo: BoundaryKind,
    pub x_hi: BoundaryKind,
    pub y_lo: BoundaryKind,
    pub y_hi: BoundaryKind,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        BoundarySpec {
            x_lo: BoundaryKind::Periodic,
            x_hi: BoundaryKind::Periodic,
            y_lo: BoundaryKind::Periodic,
            y_hi: BoundaryKind::Periodic,
        }
    }

    pub fn walls() -> Self {
        BoundarySpec {
            x_lo: BoundaryKind::InviscidWall,
            x_hi: BoundaryKind::InviscidWall,
            y_lo: BoundaryKind::InviscidWall,
            y_hi: BoundaryKind::InviscidWall,
        }
    }

    /// Periodic in x, walls at the bottom and top.
    pub fn channel() -> Self {
        BoundarySpec {
            x_lo: BoundaryKind::Periodic,
            x_hi: BoundaryKind::Periodic,
            y_lo: BoundaryKind::InviscidWall,
            y_hi: BoundaryKind::InviscidWall,
        }
    }

    pub fn sides(&self, dir: Dir) -> (BoundaryKind, BoundaryKind) {
        match dir {
            Dir::X => (self.x_lo, self.x_hi),
            Dir::Y => (self.y_lo, self.y_hi),
        }
    }

    pub fn is_periodic(&self, dir: Dir) -> bool {
        self.sides(dir).0 == BoundaryKind::Periodic
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        for &dir in Dir::all(dims) {
            let (lo, hi) = self.sides(dir);
            if (lo == BoundaryKind::Periodic) != (hi == BoundaryKind::Periodic) {
                return Err(Error::config(format!(
                    "periodic boundary along {dir:?} must be paired with a periodic opposite side"
                )));
            }
        }
        Ok(())
    }
}

/// Primitive variables of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    /// Velocity; the second entry is zero in 1D.
    pub vel: [f64; 2],
    pub p: f64,
}

impl Primitive {
    pub fn speed_sq(&self) -> f64 {
        self.vel[0] * self.vel[0] + self.vel[1] * self.vel[1]
    }
}

/// `(ρ, u, p)` from `(ρ, ρu[, ρv], e)`. The state length selects 1D or 2D.
pub fn primitive_from_conserved(q: &[f64], c: &PhysConstants) -> Result<Primitive> {
    primitive_at(q, c, Location { i: 0, j: 0 })
}

pub(crate) fn primitive_at(q: &[f64], c: &PhysConstants, location: Location) -> Result<Primitive> {
    let rho = q[0];
    if !(rho > 0.0) {
        return Err(Error::InvalidState {
            what: format!("non-positive density {rho}"),
            location,
        });
    }
    let prim = primitive_unchecked(q, c.gamma);
    if !(prim.p > 0.0) {
        return Err(Error::InvalidState {
            what: format!("non-positive pressure {}", prim.p),
            location,
        });
    }
    Ok(prim)
}

#[inline]
pub(crate) fn primitive_unchecked(q: &[f64], gamma: f64) -> Primitive {
    let rho = q[0];
    if q.len() == 3 {
        let u = q[1] / rho;
        Primitive {
            rho,
            vel: [u, 0.0],
            p: (gamma - 1.0) * (q[2] - 0.5 * rho * u * u),
        }
    } else {
        let u = q[1] / rho;
        let v = q[2] / rho;
        Primitive {
            rho,
            vel: [u, v],
            p: (gamma - 1.0) * (q[3] - 0.5 * rho * (u * u + v * v)),
        }
    }
}

/// Conserved state of length `dims + 2`.
pub fn conserved_from_primitive(prim: &Primitive, dims: usize, c: &PhysConstants) -> [f64; MAX_VARS] {
    let e = prim.p / (c.gamma - 1.0) + 0.5 * prim.rho * prim.speed_sq();
    if dims == 1 {
        [prim.rho, prim.rho * prim.vel[0], e, 0.0]
    } else {
        [prim.rho, prim.rho * prim.vel[0], prim.rho * prim.vel[1], e]
    }
}

/// Conserved variables on a grid, including ghost layers.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub grid: Grid,
    data: Vec<f64>,
}

impl StateField {
    pub fn zeros(grid: Grid) -> Self {
        StateField {
            data: vec![0.0; grid.nvar() * grid.len_pad()],
            grid,
        }
    }

    /// Builds a field from a primitive-state function of `(x, y)`.
    pub fn from_primitive_fn(grid: Grid, c: &PhysConstants, f: impl Fn(f64, f64) -> Primitive) -> Self {
        let mut field = StateField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let q = conserved_from_primitive(&f(grid.x(i), grid.y(j)), grid.dims, c);
                field.set_point(grid.idx(i, j), &q);
            }
        }
        field
    }

    pub fn nvar(&self) -> usize {
        self.grid.nvar()
    }

    pub fn comp(&self, k: usize) -> &[f64] {
        let n = self.grid.len_pad();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn comp_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.len_pad();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Conserved state at a padded index; unused trailing entries are zero.
    #[inline]
    pub fn point(&self, p: usize) -> [f64; MAX_VARS] {
        let n = self.grid.len_pad();
        let mut q = [0.0; MAX_VARS];
        for (k, qk) in q.iter_mut().enumerate().take(self.nvar()) {
            *qk = self.data[k * n + p];
        }
        q
    }

    #[inline]
    pub fn set_point(&mut self, p: usize, q: &[f64]) {
        let n = self.grid.len_pad();
        for k in 0..self.nvar() {
            self.data[k * n + p] = q[k];
        }
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.comp(k)[self.grid.idx(i, j)]
    }

    pub fn primitive(&self, i: usize, j: usize, c: &PhysConstants) -> Result<Primitive> {
        let q = self.point(self.grid.idx(i, j));
        primitive_at(&q[..self.nvar()], c, Location { i, j })
    }

    /// Checks ρ > 0 and p > 0 at every interior point.
    pub fn validate(&self, c: &PhysConstants) -> Result<()> {
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let q = self.point(self.grid.idx(i, j));
                if q[..self.nvar()].iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidState {
                        what: "non-finite value".into(),
                        location: Location { i, j },
                    });
                }
                self.primitive(i, j, c)?;
            }
        }
        Ok(())
    }

    /// Interior values interleaved point-major: `v[(j * nx + i) * nvar + k]`.
    pub fn interior_vec(&self) -> Vec<f64> {
        let g = self.grid;
        let nv = self.nvar();
        let mut out = vec![0.0; g.n_interior() * nv];
        for k in 0..nv {
            let c = self.comp(k);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    out[(j * g.nx + i) * nv + k] = c[g.idx(i, j)];
                }
            }
        }
        out
    }

    /// Inverse of [`interior_vec`](Self::interior_vec); ghosts are left untouched.
    pub fn set_interior(&mut self, v: &[f64]) {
        let g = self.grid;
        let nv = self.nvar();
        assert_eq!(v.len(), g.n_interior() * nv, "interior vector length mismatch");
        for k in 0..nv {
            let c = self.comp_mut(k);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    c[g.idx(i, j)] = v[(j * g.nx + i) * nv + k];
                }
            }
        }
    }

    pub fn from_interior(grid: Grid, v: &[f64]) -> Self {
        let mut f = StateField::zeros(grid);
        f.set_interior(v);
        f
    }

    /// `self += a * other` over all storage.
    pub fn axpy(&mut self, a: f64, other: &StateField) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    /// Midpoint-rule volume integral of each component over the interior.
    pub fn integrals(&self) -> Vec<f64> {
        let g = self.grid;
        (0..self.nvar())
            .map(|k| {
                let c = self.comp(k);
                let mut s = 0.0;
                for j in 0..g.ny {
                    for i in 0..g.nx {
                        s += c[g.idx(i, j)];
                    }
                }
                s * g.cell_volume()
            })
            .collect()
    }

    /// Populates ghost layers in place.
    ///
    /// Periodic sides copy from the opposite interior; inviscid walls mirror
    /// the interior and negate the wall-normal momentum. Both maps are linear
    /// in the conserved variables, so the same routine serves Krylov vectors.
    pub fn fill_ghosts(&mut self, bc: &BoundarySpec) -> Result<()> {
        let grid = self.grid;
        bc.validate(grid.dims)?;
        let nv = self.nvar();
        let gw = grid.ghost;
        for &dir in Dir::all(grid.dims) {
            let n = grid.n_along(dir);
            let (lo, hi) = bc.sides(dir);
            let normal = 1 + dir.index();
            for line in 0..grid.lines_along(dir) {
                let (base, stride) = grid.line(dir, line);
                for k in 0..nv {
                    let sign = if k == normal { -1.0 } else { 1.0 };
                    let c = self.comp_mut(k);
                    for m in 0..gw {
                        // low side ghost at gw-1-m, high side ghost at gw+n+m
                        let glo = base + (gw - 1 - m) * stride;
                        let ghi = base + (gw + n + m) * stride;
                        c[glo] = match lo {
                            BoundaryKind::Periodic => c[base + (gw + n - 1 - m) * stride],
                            BoundaryKind::InviscidWall => sign * c[base + (gw + m) * stride],
                        };
                        c[ghi] = match hi {
                            BoundaryKind::Periodic => c[base + (gw + m) * stride],
                            BoundaryKind::InviscidWall => sign * c[base + (gw + n - 1 - m) * stride],
                        };
                    }
                }
            }
        }
        Ok(())
    }
}

/// Returns a copy of `field` with its ghost layers populated.
pub fn fill_ghosts(field: &StateField, bc: &BoundarySpec) -> Result<StateField> {
    let mut out = field.clone();
    out.fill_ghosts(bc)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c() -> PhysConstants {
        PhysConstants::nondimensional()
    }

    #[test]
    fn zero_velocity_primitive() {
        let g = c().gamma;
        let p = 1.0 / g;
        let q = [1.0, 0.0, p / (g - 1.0)];
        let prim = primitive_from_conserved(&q, &c()).unwrap();
        assert!((prim.p - 1.0 / g).abs() < 1e-15);
        assert_eq!(prim.vel[0], 0.0);
    }

    #[test]
    fn primitive_round_trip() {
        let prim = Primitive {
            rho: 1.0,
            vel: [0.2, 0.0],
            p: 1.0 / 1.4,
        };
        let q = conserved_from_primitive(&prim, 1, &c());
        let back = primitive_from_conserved(&q[..3], &c()).unwrap();
        assert!((back.rho - 1.0).abs() < 1e-15);
        assert!((back.vel[0] - 0.2).abs() < 1e-15);
        assert!((back.p - prim.p).abs() / prim.p < 1e-14);
    }

    #[test]
    fn invalid_states_are_rejected() {
        assert!(matches!(
            primitive_from_conserved(&[-1.0, 0.0, 1.0], &c()),
            Err(Error::InvalidState { .. })
        ));
        // kinetic energy exceeds total energy
        assert!(matches!(
            primitive_from_conserved(&[1.0, 2.0, 1.0], &c()),
            Err(Error::InvalidState { .. })
        ));
    }

    #[test]
    fn field_validation_reports_location() {
        let grid = Grid::two_d(6, 5, (0.0, 1.0), (0.0, 1.0)).unwrap();
        let mut f = StateField::from_primitive_fn(grid, &c(), |_, _| Primitive {
            rho: 1.0,
            vel: [0.0, 0.0],
            p: 1.0,
        });
        let p = grid.idx(4, 2);
        f.comp_mut(0)[p] = 0.0;
        match f.validate(&c()) {
            Err(Error::InvalidState { location, .. }) => assert_eq!(location, Location { i: 4, j: 2 }),
            other => panic!("expected invalid state, got {other:?}"),
        }
    }

    #[test]
    fn uniform_periodic_ghosts() {
        let grid = Grid::one_d(8, 0.0, 1.0).unwrap();
        let mut f = StateField::from_primitive_fn(grid, &c(), |_, _| Primitive {
            rho: 1.3,
            vel: [0.1, 0.0],
            p: 0.7,
        });
        f.fill_ghosts(&BoundarySpec::periodic()).unwrap();
        let inside = f.point(grid.idx(0, 0));
        for p in 0..grid.len_pad() {
            assert_eq!(f.point(p), inside);
        }
    }

    #[test]
    fn wall_mirror_flips_normal_velocity() {
        let grid = Grid::one_d(8, 0.0, 1.0).unwrap();
        let mut f = StateField::from_primitive_fn(grid, &c(), |_, _| Primitive {
            rho: 1.0,
            vel: [0.3, 0.0],
            p: 1.0 / 1.4,
        });
        f.fill_ghosts(&BoundarySpec::walls()).unwrap();
        let ghost = f.point(grid.ghost - 1);
        let prim = primitive_from_conserved(&ghost[..3], &c()).unwrap();
        let inner = f.primitive(0, 0, &c()).unwrap();
        assert_eq!(prim.rho, inner.rho);
        assert_eq!(prim.vel[0], -0.3);
        assert_eq!(prim.p, inner.p);
    }

    #[test]
    fn periodic_wraparound_matches_reference_copy() {
        let n = 10;
        let grid = Grid::one_d(n, 0.0, 1.0).unwrap();
        let mut f = StateField::from_primitive_fn(grid, &c(), |x, _| Primitive {
            rho: 1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).sin(),
            vel: [0.1, 0.0],
            p: 1.0,
        });
        f.fill_ghosts(&BoundarySpec::periodic()).unwrap();
        let rho = f.comp(0);
        // reference: ghost j maps to interior (j mod n)
        for j in -3i64..0 {
            let wrapped = j.rem_euclid(n as i64) as usize;
            assert_eq!(rho[(grid.ghost as i64 + j) as usize], rho[grid.idx(wrapped, 0)]);
        }
        for j in n..n + 3 {
            assert_eq!(rho[grid.ghost + j], rho[grid.idx(j - n, 0)]);
        }
    }

    #[test]
    fn mismatched_periodic_pairing_is_config_error() {
        let grid = Grid::one_d(8, 0.0, 1.0).unwrap();
        let mut f = StateField::zeros(grid);
        let mut bc = BoundarySpec::periodic();
        bc.x_hi = BoundaryKind::InviscidWall;
        assert!(matches!(f.fill_ghosts(&bc), Err(Error::Config(_))));
    }

    #[test]
    fn fill_ghosts_is_idempotent_2d() {
        let grid = Grid::two_d(7, 6, (0.0, 1.0), (0.0, 2.0)).unwrap();
        let f = StateField::from_primitive_fn(grid, &c(), |x, y| Primitive {
            rho: 1.0 + 0.2 * x * y,
            vel: [x - 0.5, y * 0.3],
            p: 1.0 + 0.1 * y,
        });
        let once = fill_ghosts(&f, &BoundarySpec::channel()).unwrap();
        let twice = fill_ghosts(&once, &BoundarySpec::channel()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn interior_vec_round_trip() {
        let grid = Grid::two_d(5, 6, (0.0, 1.0), (0.0, 1.0)).unwrap();
        let f = StateField::from_primitive_fn(grid, &c(), |x, y| Primitive {
            rho: 1.0 + x,
            vel: [y, x],
            p: 2.0,
        });
        let v = f.interior_vec();
        let g = StateField::from_interior(grid, &v);
        assert_eq!(g.interior_vec(), v);
        assert_eq!(v[(2 * 5 + 3) * 4], f.get(0, 3, 2));
    }
}
