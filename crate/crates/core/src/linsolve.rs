//! Matrix-free GMRES for the implicit stage systems and the line
//! block-Jacobi preconditioner built from a first-order upwind fast operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{identity, mat_mul, source_jacobian, Mat, ZERO_MAT};
use crate::spatial::{Discretization, FastCache, FrozenOperator, Mode};
use crate::state::{BoundaryKind, Dir, StateField, GHOST_WIDTH, MAX_VARS};

/// A linear map on flat vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

/// Approximate inverse applied on the right.
pub trait Preconditioner {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        y.copy_from_slice(x);
        Ok(())
    }
}

/// Dense row-major matrix as an operator; mostly for tests and small problems.
pub struct DenseOperator {
    pub n: usize,
    pub data: Vec<f64>,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.data[r * self.n..(r + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmresConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig {
            tol_abs: 1e-10,
            tol_rel: 1e-10,
            restart: 30,
            max_iter: 500,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::config("solver tolerances must be positive"));
        }
        if self.restart == 0 || self.max_iter == 0 {
            return Err(Error::config("restart and max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Operator applications, including initial and restart residuals.
    pub operator_applications: usize,
    /// Residual norm after every iteration, starting with the initial residual.
    pub history: Vec<f64>,
    pub converged: bool,
    pub final_residual: f64,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
///
/// Converged means both `‖r_k‖ ≤ tol` and `‖r_k − r_{k−1}‖ ≤ tol` with
/// `tol = max(τ_r ‖r_0‖, τ_a)`. Since GMRES residuals satisfy
/// `r_{k−1} − r_k ⊥ r_k`, the difference norm is `√(‖r_{k−1}‖² − ‖r_k‖²)`.
/// `x` holds the initial guess on entry and the solution on exit.
pub fn gmres_solve(
    op: &dyn LinearOperator,
    precond: &dyn Preconditioner,
    rhs: &[f64],
    x: &mut [f64],
    cfg: &GmresConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let n = op.dim();
    if rhs.len() != n || x.len() != n {
        return Err(Error::config("GMRES vector length does not match the operator"));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite right-hand side in linear solve".into()));
    }
    let m = cfg.restart;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut applications = 0;
    op.apply(x, &mut r)?;
    applications += 1;
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut beta = norm(&r);
    let tol = (cfg.tol_rel * beta).max(cfg.tol_abs);
    let mut history = vec![beta];
    let mut iterations = 0;
    if beta <= tol {
        return Ok(SolveReport {
            iterations,
            operator_applications: applications,
            history,
            converged: true,
            final_residual: beta,
        });
    }
    let mut v: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    let mut z: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0; n]).collect();
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut prev = beta;
    loop {
        for (vi, ri) in v[0].iter_mut().zip(&r) {
            *vi = ri / beta;
        }
        g.iter_mut().for_each(|e| *e = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        let mut converged = false;
        let mut exact = false;
        for j in 0..m {
            precond.apply(&v[j], &mut z[j])?;
            op.apply(&z[j], &mut w)?;
            applications += 1;
            iterations += 1;
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + hn * hn).sqrt();
            if denom == 0.0 {
                return Err(Error::Numerical("GMRES Hessenberg column vanished".into()));
            }
            cs[j] = h[j][j] / denom;
            sn[j] = hn / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            let res = g[j + 1].abs();
            if !res.is_finite() {
                return Err(Error::Numerical("GMRES residual is not finite".into()));
            }
            history.push(res);
            k_used = j + 1;
            let diff = (prev * prev - res * res).max(0.0).sqrt();
            prev = res;
            // a vanishing new basis vector means the Krylov space is invariant: the solve is exact
            exact = hn <= 1e-14 * denom;
            if exact || (res <= tol && diff <= tol) {
                converged = true;
                break;
            }
            if iterations >= cfg.max_iter {
                break;
            }
            for (vk, wk) in v[j + 1].iter_mut().zip(&w) {
                *vk = wk / hn;
            }
        }
        // back substitution for y, then x += Z y
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (l, yl) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[l]) {
                *xi += yl * zi;
            }
        }
        if converged {
            let final_residual = if exact { 0.0 } else { *history.last().unwrap() };
            return Ok(SolveReport {
                iterations,
                operator_applications: applications,
                history,
                converged: true,
                final_residual,
            });
        }
        if iterations >= cfg.max_iter {
            let residual = *history.last().unwrap();
            return Err(Error::SolverDiverged {
                iterations,
                residual,
                history,
            });
        }
        op.apply(x, &mut r)?;
        applications += 1;
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        beta = norm(&r);
        if beta <= tol && (prev * prev - beta * beta).abs().sqrt() <= tol {
            return Ok(SolveReport {
                iterations,
                operator_applications: applications,
                history,
                converged: true,
                final_residual: beta,
            });
        }
    }
}

/// `v ↦ v − σ (F̂_F(v; Qⁿ, ω̄) + S v)` on interleaved interior vectors.
pub struct StageOperator<'a> {
    pub disc: &'a Discretization,
    pub frozen: &'a FrozenOperator,
    pub cache: &'a FastCache,
    pub sigma: f64,
}

impl StageOperator<'_> {
    /// `F̂_F v + S v` on an interleaved vector.
    pub fn implicit_rhs(&self, v: &[f64]) -> Result<Vec<f64>> {
        let field = StateField::from_interior(self.disc.grid, v);
        let mut t = self.disc.rhs(&field, Mode::Fast, self.frozen, Some(self.cache))?;
        if self.disc.phys.has_gravity() {
            t.axpy(1.0, &self.disc.source_term(&field));
        }
        Ok(t.interior_vec())
    }
}

impl LinearOperator for StageOperator<'_> {
    fn dim(&self) -> usize {
        self.disc.grid.n_interior() * self.disc.nvar()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if self.sigma == 0.0 {
            y.copy_from_slice(x);
            return Ok(());
        }
        let t = self.implicit_rhs(x)?;
        for ((yi, xi), ti) in y.iter_mut().zip(x).zip(&t) {
            *yi = xi - self.sigma * ti;
        }
        Ok(())
    }
}

/// Interface dissipation used in the first-order preconditioner operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondDissipation {
    /// `X |Λ_F| X⁻¹` at the interface state.
    #[default]
    CharacteristicAbs,
    /// The acoustic dissipation of the full scheme; makes the preconditioner
    /// exact for a first-order scheme in 1D.
    MatchScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    None,
    /// One block per x-line.
    #[default]
    BlockJacobi,
    /// One block covering the whole domain.
    Global,
}

/// Small dense LU with partial pivoting for `nv × nv` blocks.
#[derive(Debug, Clone, Copy)]
struct BlockLu {
    lu: Mat,
    perm: [usize; MAX_VARS],
}

impl BlockLu {
    fn factor(nv: usize, m: &Mat) -> Option<Self> {
        let mut lu = *m;
        let mut perm = [0, 1, 2, 3];
        let scale = (0..nv)
            .flat_map(|r| (0..nv).map(move |c| (r, c)))
            .map(|(r, c)| m[r][c].abs())
            .fold(0.0, f64::max);
        for col in 0..nv {
            let piv = (col..nv).max_by(|&a, &b| lu[a][col].abs().total_cmp(&lu[b][col].abs()))?;
            if !(lu[piv][col].abs() > 1e-14 * scale) {
                return None;
            }
            lu.swap(col, piv);
            perm.swap(col, piv);
            for r in col + 1..nv {
                let f = lu[r][col] / lu[col][col];
                lu[r][col] = f;
                for c in col + 1..nv {
                    lu[r][c] -= f * lu[col][c];
                }
            }
        }
        Some(BlockLu { lu, perm })
    }

    fn solve(&self, nv: usize, b: &[f64]) -> [f64; MAX_VARS] {
        let mut x = [0.0; MAX_VARS];
        for r in 0..nv {
            let mut s = b[self.perm[r]];
            for c in 0..r {
                s -= self.lu[r][c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..nv).rev() {
            let mut s = x[r];
            for c in r + 1..nv {
                s -= self.lu[r][c] * x[c];
            }
            x[r] = s / self.lu[r][r];
        }
        x
    }

    /// `M⁻¹ A` column by column.
    fn solve_mat(&self, nv: usize, a: &Mat) -> Mat {
        let mut out = ZERO_MAT;
        for c in 0..nv {
            let col: Vec<f64> = (0..nv).map(|r| a[r][c]).collect();
            let x = self.solve(nv, &col);
            for r in 0..nv {
                out[r][c] = x[r];
            }
        }
        out
    }
}

fn mat_sub_assign(nv: usize, a: &mut Mat, b: &Mat) {
    for r in 0..nv {
        for c in 0..nv {
            a[r][c] -= b[r][c];
        }
    }
}

fn mat_vec_sub(nv: usize, m: &Mat, x: &[f64], y: &mut [f64]) {
    for r in 0..nv {
        let mut s = 0.0;
        for c in 0..nv {
            s += m[r][c] * x[c];
        }
        y[r] -= s;
    }
}

/// Block tridiagonal system with optional periodic corner blocks, one per grid line.
///
/// Row `i` reads `lower[i] x_{i−1} + diag[i] x_i + upper[i] x_{i+1} = b_i`, where
/// for periodic lines `lower[0]` couples to the last unknown and
/// `upper[m−1]` to the first.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub nv: usize,
    pub lower: Vec<Mat>,
    pub diag: Vec<Mat>,
    pub upper: Vec<Mat>,
}

/// Factored form of [`BlockTridiagonal`]: block elimination with a fill column
/// (coupling to the last unknown) and a fill row (last equation).
#[derive(Debug, Clone)]
struct BlockFactor {
    nv: usize,
    piv: Vec<BlockLu>,
    mult: Vec<Mat>,
    upper: Vec<Mat>,
    fill: Vec<Mat>,
    last_mult: Vec<Mat>,
}

impl BlockTridiagonal {
    fn factor(&self, line: usize) -> Result<BlockFactor> {
        let nv = self.nv;
        let m = self.diag.len();
        let last = m - 1;
        let singular = |block| Error::SingularBlock { line, block };
        let mut piv = Vec::with_capacity(m);
        let mut mult = vec![ZERO_MAT; m];
        let mut upper = vec![ZERO_MAT; m];
        let mut fill = vec![ZERO_MAT; m];
        let mut last_mult = vec![ZERO_MAT; m];
        // row-last fill, one block per unknown
        let mut grow = vec![ZERO_MAT; m];
        grow[0] = self.upper[last];
        let mut dl = self.diag[last];
        for k in 0..nv {
            for c in 0..nv {
                grow[last - 1][k][c] += self.lower[last][k][c];
            }
        }
        fill[0] = self.lower[0];
        for k in 0..nv {
            for c in 0..nv {
                fill[last - 1][k][c] += self.upper[last - 1][k][c];
            }
        }
        let mut d = self.diag[0];
        for i in 0..last {
            let lu = BlockLu::factor(nv, &d).ok_or_else(|| singular(i))?;
            if i + 1 < last {
                upper[i] = self.upper[i];
            }
            // eliminate x_i from row i+1
            if i + 1 < last {
                let mi = mat_mul(nv, &self.lower[i + 1], &lu_inverse(nv, &lu));
                mult[i + 1] = mi;
                let mut next = self.diag[i + 1];
                mat_sub_assign(nv, &mut next, &mat_mul(nv, &mi, &upper[i]));
                let f = mat_mul(nv, &mi, &fill[i]);
                mat_sub_assign(nv, &mut fill[i + 1], &f);
                d = next;
            }
            // eliminate x_i from the last row
            let gi = mat_mul(nv, &grow[i], &lu_inverse(nv, &lu));
            last_mult[i] = gi;
            mat_sub_assign(nv, &mut dl, &mat_mul(nv, &gi, &fill[i]));
            if i + 1 < last {
                let gu = mat_mul(nv, &gi, &upper[i]);
                mat_sub_assign(nv, &mut grow[i + 1], &gu);
            }
            piv.push(lu);
        }
        piv.push(BlockLu::factor(nv, &dl).ok_or_else(|| singular(last))?);
        Ok(BlockFactor {
            nv,
            piv,
            mult,
            upper,
            fill,
            last_mult,
        })
    }
}

fn lu_inverse(nv: usize, lu: &BlockLu) -> Mat {
    lu.solve_mat(nv, &identity(nv))
}

impl BlockFactor {
    fn solve(&self, b: &mut [f64]) {
        let nv = self.nv;
        let m = self.piv.len();
        let last = m - 1;
        for i in 1..last {
            let (head, tail) = b.split_at_mut(i * nv);
            mat_vec_sub(nv, &self.mult[i], &head[(i - 1) * nv..], &mut tail[..nv]);
        }
        for i in 0..last {
            let (head, tail) = b.split_at_mut(last * nv);
            mat_vec_sub(nv, &self.last_mult[i], &head[i * nv..(i + 1) * nv], &mut tail[..nv]);
        }
        let xl = self.piv[last].solve(nv, &b[last * nv..]);
        b[last * nv..].copy_from_slice(&xl[..nv]);
        for i in (0..last).rev() {
            let mut r = [0.0; MAX_VARS];
            r[..nv].copy_from_slice(&b[i * nv..(i + 1) * nv]);
            mat_vec_sub(nv, &self.fill[i], &xl, &mut r);
            if i + 1 < last {
                let mut xn = [0.0; MAX_VARS];
                xn[..nv].copy_from_slice(&b[(i + 1) * nv..(i + 2) * nv]);
                mat_vec_sub(nv, &self.upper[i], &xn, &mut r);
            }
            let x = self.piv[i].solve(nv, &r);
            b[i * nv..(i + 1) * nv].copy_from_slice(&x[..nv]);
        }
    }
}

/// Block-Jacobi preconditioner with one block per x-line.
#[derive(Debug, Clone)]
pub struct BlockJacobi {
    pub nv: usize,
    pub line_len: usize,
    systems: Vec<BlockTridiagonal>,
    factors: Vec<BlockFactor>,
}

impl BlockJacobi {
    pub fn systems(&self) -> &[BlockTridiagonal] {
        &self.systems
    }

    /// Factors user-supplied line systems, one per block of `line_len` points.
    pub fn from_systems(systems: Vec<BlockTridiagonal>) -> Result<Self> {
        let nv = systems.first().map(|s| s.nv).unwrap_or(1);
        let line_len = systems.first().map(|s| s.diag.len()).unwrap_or(0);
        let factors = systems
            .iter()
            .enumerate()
            .map(|(l, s)| s.factor(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockJacobi {
            nv,
            line_len,
            systems,
            factors,
        })
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        y.copy_from_slice(x);
        let stride = self.line_len * self.nv;
        for (l, f) in self.factors.iter().enumerate() {
            f.solve(&mut y[l * stride..(l + 1) * stride]);
        }
        Ok(())
    }
}

fn mirror_matrix(nv: usize, dir: Dir) -> Mat {
    let mut m = identity(nv);
    let k = 1 + dir.index();
    m[k][k] = -1.0;
    m
}

fn scaled(nv: usize, a: &Mat, s: f64) -> Mat {
    let mut out = ZERO_MAT;
    for r in 0..nv {
        for c in 0..nv {
            out[r][c] = a[r][c] * s;
        }
    }
    out
}

fn add_scaled(nv: usize, out: &mut Mat, a: &Mat, s: f64) {
    for r in 0..nv {
        for c in 0..nv {
            out[r][c] += a[r][c] * s;
        }
    }
}

/// First-order approximate stage Jacobian `I − σ(D̄₁ ⊗ A_F(Qⁿ) + S)`, one
/// block row per grid point. Neighbour blocks are zero across walls, where the
/// mirror image is folded into the diagonal.
#[derive(Debug, Clone)]
pub struct FirstOrderJacobian {
    pub nv: usize,
    pub nx: usize,
    pub ny: usize,
    pub diag: Vec<Mat>,
    pub west: Vec<Mat>,
    pub east: Vec<Mat>,
    pub south: Vec<Mat>,
    pub north: Vec<Mat>,
}

impl FirstOrderJacobian {
    /// Point index of the west/east/south/north neighbours, wrapping periodically.
    fn neighbours(&self, p: usize) -> [usize; 4] {
        let (i, j) = (p % self.nx, p / self.nx);
        let w = (i + self.nx - 1) % self.nx;
        let e = (i + 1) % self.nx;
        let s = (j + self.ny - 1) % self.ny;
        let n = (j + 1) % self.ny;
        [j * self.nx + w, j * self.nx + e, s * self.nx + i, n * self.nx + i]
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let nv = self.nv;
        let n = self.nx * self.ny * nv;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for p in 0..self.nx * self.ny {
            let nb = self.neighbours(p);
            let blocks = [
                (p, &self.diag[p]),
                (nb[0], &self.west[p]),
                (nb[1], &self.east[p]),
                (nb[2], &self.south[p]),
                (nb[3], &self.north[p]),
            ];
            for (q, b) in blocks {
                for r in 0..nv {
                    for c in 0..nv {
                        m[(p * nv + r, q * nv + c)] += b[r][c];
                    }
                }
            }
        }
        m
    }
}

/// Assembles the first-order upwind approximation of the stage Jacobian.
pub fn assemble_first_order(
    disc: &Discretization,
    cache: &FastCache,
    sigma: f64,
    dissipation: PrecondDissipation,
) -> FirstOrderJacobian {
    let grid = disc.grid;
    let nv = disc.nvar();
    let (nx, ny) = (grid.nx, grid.ny);
    let np = nx * ny;
    let g = GHOST_WIDTH;
    let face_diss = |dir: Dir, line: usize, face: usize| -> Mat {
        match dissipation {
            PrecondDissipation::MatchScheme => *cache.dissipation(dir, line, face),
            PrecondDissipation::CharacteristicAbs => {
                let eig = cache.face_eigensystem(dir, line, face);
                let mut d = eig.fast_mask();
                for (k, dk) in d.iter_mut().enumerate() {
                    *dk *= eig.speeds[k].abs();
                }
                eig.compose(&d)
            }
        }
    };
    let mut jac = FirstOrderJacobian {
        nv,
        nx,
        ny,
        diag: vec![ZERO_MAT; np],
        west: vec![ZERO_MAT; np],
        east: vec![ZERO_MAT; np],
        south: vec![ZERO_MAT; np],
        north: vec![ZERO_MAT; np],
    };
    let dirs: &[Dir] = if grid.dims == 2 { &[Dir::X, Dir::Y] } else { &[Dir::X] };
    for &dir in dirs {
        let (n_lines, len, h) = match dir {
            Dir::X => (ny, nx, grid.dx()),
            Dir::Y => (nx, ny, grid.dy()),
        };
        let (lo, hi) = disc.bc.sides(dir);
        let mirror = mirror_matrix(nv, dir);
        for line in 0..n_lines {
            let (base, stride) = grid.line(dir, line);
            for m in 0..len {
                let p = match dir {
                    Dir::X => line * nx + m,
                    Dir::Y => m * nx + line,
                };
                let a_l = cache.a_fast(dir, base + (m + g - 1) * stride);
                let a_r = cache.a_fast(dir, base + (m + g + 1) * stride);
                let d_l = face_diss(dir, line, m);
                let d_r = face_diss(dir, line, m + 1);
                let mut l = scaled(nv, a_l, 0.5 / h);
                add_scaled(nv, &mut l, &d_l, 0.5 / h);
                let mut u = scaled(nv, a_r, -0.5 / h);
                add_scaled(nv, &mut u, &d_r, 0.5 / h);
                let dg = &mut jac.diag[p];
                add_scaled(nv, dg, &d_l, -0.5 / h);
                add_scaled(nv, dg, &d_r, -0.5 / h);
                if m == 0 && lo == BoundaryKind::InviscidWall {
                    add_scaled(nv, dg, &mat_mul(nv, &l, &mirror), 1.0);
                    l = ZERO_MAT;
                }
                if m == len - 1 && hi == BoundaryKind::InviscidWall {
                    add_scaled(nv, dg, &mat_mul(nv, &u, &mirror), 1.0);
                    u = ZERO_MAT;
                }
                let (lo_blk, hi_blk) = match dir {
                    Dir::X => (&mut jac.west[p], &mut jac.east[p]),
                    Dir::Y => (&mut jac.south[p], &mut jac.north[p]),
                };
                *lo_blk = scaled(nv, &l, -sigma);
                *hi_blk = scaled(nv, &u, -sigma);
            }
        }
    }
    let s_jac = source_jacobian(nv, disc.phys.gravity);
    for dg in jac.diag.iter_mut() {
        let mut out = identity(nv);
        add_scaled(nv, &mut out, dg, -sigma);
        add_scaled(nv, &mut out, &s_jac, -sigma);
        *dg = out;
    }
    jac
}

/// Line-block Jacobi preconditioner: the first-order Jacobian restricted to
/// x-lines (couplings across lines are dropped), factored line by line.
pub fn build_preconditioner(
    disc: &Discretization,
    cache: &FastCache,
    sigma: f64,
    dissipation: PrecondDissipation,
) -> Result<BlockJacobi> {
    let jac = assemble_first_order(disc, cache, sigma, dissipation);
    let nx = jac.nx;
    let systems = (0..jac.ny)
        .map(|j| {
            let r = j * nx..(j + 1) * nx;
            BlockTridiagonal {
                nv: jac.nv,
                lower: jac.west[r.clone()].to_vec(),
                diag: jac.diag[r.clone()].to_vec(),
                upper: jac.east[r].to_vec(),
            }
        })
        .collect();
    BlockJacobi::from_systems(systems)
}

/// Banded LU with partial pivoting, LAPACK band storage (column-major, `kl`
/// extra rows for fill).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    fn ldab(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    /// Zero matrix of order `n` with the given bandwidths.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandLu {
            n,
            kl,
            ku,
            ab: vec![0.0; Self::ldab(kl, ku) * n],
            ipiv: vec![0; n],
        }
    }

    fn idx(&self, row: usize, col: usize) -> usize {
        col * Self::ldab(self.kl, self.ku) + self.kl + self.ku + row - col
    }

    /// Adds `v` at `(row, col)`, which must lie inside the band.
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(row + self.ku >= col && col + self.kl >= row);
        let k = self.idx(row, col);
        self.ab[k] += v;
    }

    /// In-place factorization; returns the failing row on a zero pivot.
    pub fn factor(&mut self) -> std::result::Result<(), usize> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = Self::ldab(self.kl, self.ku);
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + kv;
            let mut jp = 0;
            let mut best = self.ab[col].abs();
            for r in 1..=km {
                let v = self.ab[col + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(j);
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[col];
            for r in 1..=km {
                self.ab[col + r] /= pivot;
            }
            for c in j + 1..=ju {
                let t = self.ab[self.idx(j, c)];
                if t != 0.0 {
                    let dst = self.idx(j + 1, c);
                    for r in 0..km {
                        self.ab[dst + r] -= self.ab[col + 1 + r] * t;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves with the factored matrix, overwriting `b`.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = Self::ldab(self.kl, self.ku);
        for j in 0..n {
            b.swap(j, self.ipiv[j]);
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            let col = j * ld + kv;
            for r in 1..=km {
                b[j + r] -= self.ab[col + r] * bj;
            }
        }
        for j in (0..n).rev() {
            let col = j * ld + kv;
            b[j] /= self.ab[col];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[col - (j - i)] * bj;
            }
        }
    }
}

/// Whole-domain preconditioner: the full first-order Jacobian factored by a
/// banded LU. Points are ordered along the shorter grid direction first; a
/// periodic outer direction is folded so the wrap-around coupling stays
/// inside the band.
#[derive(Debug, Clone)]
pub struct GlobalBanded {
    nv: usize,
    perm: Vec<usize>,
    lu: BandLu,
}

fn folded(k: usize, n: usize, periodic: bool) -> usize {
    if !periodic || n < 3 {
        return k;
    }
    if 2 * k < n {
        2 * k
    } else {
        2 * (n - 1 - k) + 1
    }
}

impl GlobalBanded {
    pub fn new(jac: &FirstOrderJacobian, periodic: [bool; 2]) -> Result<Self> {
        let (nx, ny, nv) = (jac.nx, jac.ny, jac.nv);
        let np = nx * ny;
        let x_inner = nx <= ny;
        let perm: Vec<usize> = (0..np)
            .map(|p| {
                let (i, j) = (p % nx, p / nx);
                if x_inner {
                    folded(j, ny, periodic[1]) * nx + i
                } else {
                    folded(i, nx, periodic[0]) * ny + j
                }
            })
            .collect();
        let mut bw = 0;
        for p in 0..np {
            let blocks = [&jac.west[p], &jac.east[p], &jac.south[p], &jac.north[p]];
            for (q, b) in jac.neighbours(p).into_iter().zip(blocks) {
                if *b != ZERO_MAT {
                    bw = bw.max(perm[p].abs_diff(perm[q]));
                }
            }
        }
        let kb = (bw + 1) * nv - 1;
        let mut lu = BandLu::zeros(np * nv, kb, kb);
        for p in 0..np {
            let nb = jac.neighbours(p);
            let blocks = [
                (p, &jac.diag[p]),
                (nb[0], &jac.west[p]),
                (nb[1], &jac.east[p]),
                (nb[2], &jac.south[p]),
                (nb[3], &jac.north[p]),
            ];
            for (q, b) in blocks {
                for r in 0..nv {
                    for c in 0..nv {
                        if b[r][c] != 0.0 {
                            lu.add(perm[p] * nv + r, perm[q] * nv + c, b[r][c]);
                        }
                    }
                }
            }
        }
        lu.factor().map_err(|row| Error::SingularBlock {
            line: 0,
            block: row / nv,
        })?;
        Ok(GlobalBanded { nv, perm, lu })
    }
}

impl Preconditioner for GlobalBanded {
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let nv = self.nv;
        let mut b = vec![0.0; x.len()];
        for (p, &q) in self.perm.iter().enumerate() {
            b[q * nv..(q + 1) * nv].copy_from_slice(&x[p * nv..(p + 1) * nv]);
        }
        self.lu.solve(&mut b);
        for (p, &q) in self.perm.iter().enumerate() {
            y[p * nv..(p + 1) * nv].copy_from_slice(&b[q * nv..(q + 1) * nv]);
        }
        Ok(())
    }
}

/// Whole-domain banded-LU preconditioner of the first-order Jacobian.
pub fn build_global_preconditioner(
    disc: &Discretization,
    cache: &FastCache,
    sigma: f64,
    dissipation: PrecondDissipation,
) -> Result<GlobalBanded> {
    let jac = assemble_first_order(disc, cache, sigma, dissipation);
    let periodic = [Dir::X, Dir::Y].map(|d| disc.bc.sides(d).0 == BoundaryKind::Periodic);
    GlobalBanded::new(&jac, periodic)
}

/// Applies a preconditioner to a vector, returning the result.
pub fn apply_preconditioner(p: &dyn Preconditioner, v: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    p.apply(v, &mut out)?;
    Ok(out)
}

/// Applies an operator to a vector, returning the result.
pub fn apply_operator(op: &dyn LinearOperator, v: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    op.apply(v, &mut out)?;
    Ok(out)
}
