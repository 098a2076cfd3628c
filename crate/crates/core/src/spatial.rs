//! Conservative finite-difference discretization of the flux divergence.
//!
//! Interface fluxes use WENO5 or CRWENO5 reconstruction with weights taken
//! from the total flux, and a dissipation term that acts on the characteristic
//! fields of the adjacent states:
//!
//! ```text
//! f̂ = ½ (f^L + f^R) − ½ δ̃ (q^R − q^L),   δ̃ = X diag(μ̄, [μ̄,] ν̄, ν̄) X⁻¹
//! ```
//!
//! The fast (acoustic) part reconstructs `A_F(Qⁿ) q` and dissipates only along
//! the acoustic fields; the slow part is the difference of the two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{
    eigensystem_from_averages, mat_vec, partition_of, source_point, EigenSystem, Mat, ZERO_MAT,
};
use crate::state::{
    primitive_unchecked, BoundarySpec, Dir, Grid, PhysConstants, Primitive, StateField, GHOST_WIDTH, MAX_VARS,
};

pub const WENO_EPS: f64 = 1e-6;
pub const WENO_POWER: i32 = 2;
pub const WENO5_OPTIMAL: [f64; 3] = [0.1, 0.6, 0.3];
pub const CRWENO5_OPTIMAL: [f64; 3] = [0.2, 0.5, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Weno5,
    Crweno5,
    /// Upwind-cell values; the interface flux reduces to a first-order Rusanov-type flux.
    FirstOrder,
}

impl Scheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "weno5" => Ok(Scheme::Weno5),
            "crweno5" => Ok(Scheme::Crweno5),
            "first_order" | "first-order" => Ok(Scheme::FirstOrder),
            other => Err(Error::config(format!("unknown scheme '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Weno5 => "weno5",
            Scheme::Crweno5 => "crweno5",
            Scheme::FirstOrder => "first_order",
        }
    }
}

/// State used to build the eigenvectors in the interface dissipation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceAverage {
    #[default]
    Arithmetic,
    Roe,
}

/// Upwind side of a reconstruction: `Left` uses the stencil centred on the
/// cell to the left of the face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bias {
    Left,
    Right,
}

impl Bias {
    fn index(self) -> usize {
        match self {
            Bias::Left => 0,
            Bias::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Total,
    Fast,
    Slow,
}

/// Jiang-Shu smoothness indicators of a stencil `(f_{j-2}, ..., f_{j+2})`.
pub fn smoothness(s: &[f64; 5]) -> [f64; 3] {
    let b1 = 13.0 / 12.0 * (s[0] - 2.0 * s[1] + s[2]).powi(2) + 0.25 * (s[0] - 4.0 * s[1] + 3.0 * s[2]).powi(2);
    let b2 = 13.0 / 12.0 * (s[1] - 2.0 * s[2] + s[3]).powi(2) + 0.25 * (s[1] - s[3]).powi(2);
    let b3 = 13.0 / 12.0 * (s[2] - 2.0 * s[3] + s[4]).powi(2) + 0.25 * (3.0 * s[2] - 4.0 * s[3] + s[4]).powi(2);
    [b1, b2, b3]
}

/// Nonlinear weights for optimal coefficients `c`.
#[inline]
pub fn nonlinear_weights(s: &[f64; 5], c: [f64; 3]) -> [f64; 3] {
    nonlinear_weights_eps(s, c, WENO_EPS)
}

/// Nonlinear weights with an explicit `ε`.
#[inline]
pub fn nonlinear_weights_eps(s: &[f64; 5], c: [f64; 3], eps: f64) -> [f64; 3] {
    let beta = smoothness(s);
    let mut alpha = [0.0; 3];
    for k in 0..3 {
        alpha[k] = c[k] / (eps + beta[k]).powi(WENO_POWER);
    }
    let sum = alpha[0] + alpha[1] + alpha[2];
    [alpha[0] / sum, alpha[1] / sum, alpha[2] / sum]
}

/// WENO5 weights of a five-point stencil ordered from upwind to downwind.
pub fn weno_weights(stencil: &[f64; 5]) -> [f64; 3] {
    nonlinear_weights(stencil, WENO5_OPTIMAL)
}

#[inline]
fn weno5_combine(w: [f64; 3], s: [f64; 5]) -> f64 {
    w[0] / 3.0 * s[0] - (7.0 * w[0] + w[1]) / 6.0 * s[1] + (11.0 * w[0] + 5.0 * w[1] + 2.0 * w[2]) / 6.0 * s[2]
        + (2.0 * w[1] + 5.0 * w[2]) / 6.0 * s[3]
        - w[2] / 6.0 * s[4]
}

/// Upwind-ordered stencil for face `face` of a padded line.
#[inline]
fn stencil(line: &[f64], face: usize, bias: Bias) -> [f64; 5] {
    let g = GHOST_WIDTH;
    match bias {
        Bias::Left => {
            let m = face + g - 1;
            [line[m - 2], line[m - 1], line[m], line[m + 1], line[m + 2]]
        }
        Bias::Right => {
            let m = face + g;
            [line[m + 2], line[m + 1], line[m], line[m - 1], line[m - 2]]
        }
    }
}

/// Whether CRWENO5 uses an explicit WENO5 row at this face.
#[inline]
fn crweno_fallback_row(face: usize, n: usize, periodic: bool) -> bool {
    !periodic && (face < 2 || face + 2 > n)
}

/// WENO5 interface values of a padded line (`n + 2·GHOST_WIDTH` entries,
/// ghosts populated); `weights` holds one triplet per face (`n + 1`).
pub fn reconstruct_weno5(line: &[f64], weights: &[[f64; 3]], bias: Bias) -> Vec<f64> {
    let n = line.len() - 2 * GHOST_WIDTH;
    let mut out = vec![0.0; n + 1];
    weno5_line(line, |f| weights[f], bias, &mut out);
    out
}

fn weno5_line(line: &[f64], w: impl Fn(usize) -> [f64; 3], bias: Bias, out: &mut [f64]) {
    for (face, o) in out.iter_mut().enumerate() {
        *o = weno5_combine(w(face), stencil(line, face, bias));
    }
}

/// CRWENO5 interface values of a padded line.
///
/// Periodic lines solve a cyclic system over faces `0..n` and copy face 0 to
/// face `n`. Otherwise the two faces nearest each end are explicit WENO5 rows,
/// and `weights` at those faces should be WENO5 weights.
pub fn reconstruct_crweno5(line: &[f64], weights: &[[f64; 3]], bias: Bias, periodic: bool) -> Result<Vec<f64>> {
    let n = line.len() - 2 * GHOST_WIDTH;
    let mut out = vec![0.0; n + 1];
    let mut tri = Tridiagonal::default();
    crweno5_line(&mut tri, 0, &[line], |f| weights[f], bias, periodic, &mut [&mut out])?;
    Ok(out)
}

/// Builds and factors the CRWENO5 system once, then solves it for every input line.
fn crweno5_line(
    tri: &mut Tridiagonal,
    line_index: usize,
    inputs: &[&[f64]],
    w: impl Fn(usize) -> [f64; 3],
    bias: Bias,
    periodic: bool,
    outputs: &mut [&mut [f64]],
) -> Result<()> {
    let g = GHOST_WIDTH;
    let n = inputs[0].len() - 2 * g;
    let m = if periodic { n } else { n + 1 };
    tri.resize(m);
    for face in 0..m {
        let wf = w(face);
        if crweno_fallback_row(face, n, periodic) {
            tri.sub[face] = 0.0;
            tri.diag[face] = 1.0;
            tri.sup[face] = 0.0;
            continue;
        }
        let a = 2.0 / 3.0 * wf[0] + 1.0 / 3.0 * wf[1];
        let b = 1.0 / 3.0 * wf[0] + 2.0 / 3.0 * (wf[1] + wf[2]);
        let c = 1.0 / 3.0 * wf[2];
        tri.diag[face] = b;
        match bias {
            Bias::Left => {
                tri.sub[face] = a;
                tri.sup[face] = c;
            }
            Bias::Right => {
                tri.sub[face] = c;
                tri.sup[face] = a;
            }
        }
    }
    tri.factor(periodic)
        .map_err(|row| Error::TridiagonalBreakdown { line: line_index, row })?;
    for (input, out) in inputs.iter().zip(outputs.iter_mut()) {
        for face in 0..m {
            let wf = w(face);
            out[face] = if crweno_fallback_row(face, n, periodic) {
                weno5_combine(wf, stencil(input, face, bias))
            } else {
                let r0 = wf[0] / 6.0;
                let r1 = (5.0 * (wf[0] + wf[1]) + wf[2]) / 6.0;
                let r2 = (wf[1] + 5.0 * wf[2]) / 6.0;
                match bias {
                    Bias::Left => {
                        let j = face + g - 1;
                        r0 * input[j - 1] + r1 * input[j] + r2 * input[j + 1]
                    }
                    Bias::Right => {
                        let j = face + g;
                        r0 * input[j + 1] + r1 * input[j] + r2 * input[j - 1]
                    }
                }
            };
        }
        tri.solve(&mut out[..m]);
        if periodic {
            out[n] = out[0];
        }
    }
    Ok(())
}

/// LU factorization of a tridiagonal system, cyclic or not, reusable across right-hand sides.
#[derive(Debug, Clone, Default)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    cp: Vec<f64>,
    inv_den: Vec<f64>,
    cyclic: bool,
    // Sherman-Morrison data for the cyclic case
    z: Vec<f64>,
    corner: f64,
    sm_den: f64,
}

impl Tridiagonal {
    pub fn resize(&mut self, m: usize) {
        for v in [&mut self.sub, &mut self.diag, &mut self.sup, &mut self.cp, &mut self.inv_den] {
            v.resize(m, 0.0);
        }
    }

    fn thomas_factor(&mut self, d0: f64, dlast: f64) -> std::result::Result<(), usize> {
        let m = self.diag.len();
        for i in 0..m {
            let b = if i == 0 {
                d0
            } else if i == m - 1 {
                dlast
            } else {
                self.diag[i]
            };
            let lower = if i == 0 { 0.0 } else { self.sub[i] * self.cp[i - 1] };
            let den = b - lower;
            let scale = self.sub[i].abs() + b.abs() + self.sup[i].abs();
            if !(den.abs() > 1e-13 * scale) {
                return Err(i);
            }
            self.inv_den[i] = 1.0 / den;
            self.cp[i] = if i + 1 < m { self.sup[i] * self.inv_den[i] } else { 0.0 };
        }
        Ok(())
    }

    fn thomas_solve(&self, x: &mut [f64]) {
        let m = x.len();
        x[0] *= self.inv_den[0];
        for i in 1..m {
            x[i] = (x[i] - self.sub[i] * x[i - 1]) * self.inv_den[i];
        }
        for i in (0..m - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
    }

    /// Factors the stored coefficients. For cyclic systems `sub[0]` couples row 0
    /// to the last unknown and `sup[m-1]` couples the last row to unknown 0.
    /// Returns the row of a vanishing pivot on failure.
    pub fn factor(&mut self, cyclic: bool) -> std::result::Result<(), usize> {
        let m = self.diag.len();
        self.cyclic = cyclic;
        if !cyclic {
            let (d0, dl) = (self.diag[0], self.diag[m - 1]);
            return self.thomas_factor(d0, dl);
        }
        let gamma = -self.diag[0];
        if gamma == 0.0 {
            return Err(0);
        }
        let a0 = self.sub[0];
        let cl = self.sup[m - 1];
        let d0 = self.diag[0] - gamma;
        let dl = self.diag[m - 1] - a0 * cl / gamma;
        self.thomas_factor(d0, dl)?;
        self.z.clear();
        self.z.resize(m, 0.0);
        self.z[0] = gamma;
        self.z[m - 1] = cl;
        let mut z = std::mem::take(&mut self.z);
        self.thomas_solve(&mut z);
        self.corner = a0 / gamma;
        self.sm_den = 1.0 + z[0] + self.corner * z[m - 1];
        self.z = z;
        if !(self.sm_den.abs() > 1e-13) {
            return Err(0);
        }
        Ok(())
    }

    pub fn solve(&self, x: &mut [f64]) {
        self.thomas_solve(x);
        if self.cyclic {
            let m = x.len();
            let f = (x[0] + self.corner * x[m - 1]) / self.sm_den;
            for (xi, zi) in x.iter_mut().zip(&self.z) {
                *xi -= f * zi;
            }
        }
    }
}

/// Nonlinear weights captured once per stage for every face, component and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenOperator {
    pub scheme: Scheme,
    pub grid: Grid,
    /// Stage that produced the weights (0 for the step's initial state).
    pub stage: usize,
    weights: [Vec<[f64; 3]>; 2],
}

impl FrozenOperator {
    fn slot(&self, dir: Dir, line: usize, face: usize, comp: usize, bias: Bias) -> usize {
        let nf = self.grid.n_along(dir) + 1;
        ((line * nf + face) * self.grid.nvar() + comp) * 2 + bias.index()
    }

    pub fn weights(&self, dir: Dir, line: usize, face: usize, comp: usize, bias: Bias) -> [f64; 3] {
        if self.scheme == Scheme::FirstOrder {
            return [0.0; 3];
        }
        self.weights[dir.index()][self.slot(dir, line, face, comp, bias)]
    }

    fn line_weights(&self, dir: Dir, line: usize) -> &[[f64; 3]] {
        if self.scheme == Scheme::FirstOrder {
            return &[];
        }
        let nf = self.grid.n_along(dir) + 1;
        let per = nf * self.grid.nvar() * 2;
        &self.weights[dir.index()][line * per..(line + 1) * per]
    }
}

/// Per-step fast-operator data frozen at `Qⁿ`: `A_F` at every line point and
/// the acoustic dissipation matrix at every face.
#[derive(Debug, Clone)]
pub struct FastCache {
    pub state: StateField,
    a_fast: [Vec<Mat>; 2],
    diss: [Vec<Mat>; 2],
    eig: [Vec<EigenSystem>; 2],
}

impl FastCache {
    /// `A_F` at padded index `p` for fluxes along `dir`.
    pub fn a_fast(&self, dir: Dir, p: usize) -> &Mat {
        &self.a_fast[dir.index()][p]
    }

    /// Acoustic dissipation matrix at a face.
    pub fn dissipation(&self, dir: Dir, line: usize, face: usize) -> &Mat {
        let nf = self.state.grid.n_along(dir) + 1;
        &self.diss[dir.index()][line * nf + face]
    }

    /// Eigensystem of the interface state at a face.
    pub fn face_eigensystem(&self, dir: Dir, line: usize, face: usize) -> &EigenSystem {
        let nf = self.state.grid.n_along(dir) + 1;
        &self.eig[dir.index()][line * nf + face]
    }
}

/// Interface fluxes per direction, `(line, face, component)` with `n + 1` faces per line.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFluxes {
    pub grid: Grid,
    data: [Vec<f64>; 2],
}

impl InterfaceFluxes {
    pub fn zeros(grid: Grid) -> Self {
        let nv = grid.nvar();
        let mut data = [Vec::new(), Vec::new()];
        for &dir in Dir::all(grid.dims) {
            data[dir.index()] = vec![0.0; grid.lines_along(dir) * (grid.n_along(dir) + 1) * nv];
        }
        InterfaceFluxes { grid, data }
    }

    #[inline]
    fn slot(&self, dir: Dir, line: usize, face: usize) -> usize {
        (line * (self.grid.n_along(dir) + 1) + face) * self.grid.nvar()
    }

    pub fn get(&self, dir: Dir, line: usize, face: usize, comp: usize) -> f64 {
        self.data[dir.index()][self.slot(dir, line, face) + comp]
    }

    pub fn set(&mut self, dir: Dir, line: usize, face: usize, comp: usize, value: f64) {
        let s = self.slot(dir, line, face) + comp;
        self.data[dir.index()][s] = value;
    }

    pub fn values(&self, dir: Dir) -> &[f64] {
        &self.data[dir.index()]
    }

    /// `self -= other`, face by face.
    pub fn subtract(&mut self, other: &InterfaceFluxes) {
        for d in 0..2 {
            for (a, b) in self.data[d].iter_mut().zip(&other.data[d]) {
                *a -= b;
            }
        }
    }
}

/// Conservative difference `−(f̂_{k+1} − f̂_k)/Δ` summed over directions.
pub fn divergence(fluxes: &InterfaceFluxes) -> StateField {
    let grid = fluxes.grid;
    let mut out = StateField::zeros(grid);
    accumulate_divergence(fluxes, &mut out, 1.0);
    out
}

fn accumulate_divergence(fluxes: &InterfaceFluxes, out: &mut StateField, scale: f64) {
    let grid = fluxes.grid;
    let nv = grid.nvar();
    for &dir in Dir::all(grid.dims) {
        let n = grid.n_along(dir);
        let inv = scale / grid.spacing(dir);
        let data = fluxes.values(dir);
        for line in 0..grid.lines_along(dir) {
            for m in 0..n {
                let (i, j) = grid.line_point(dir, line, m);
                let p = grid.idx(i, j);
                let lo = (line * (n + 1) + m) * nv;
                let hi = lo + nv;
                for k in 0..nv {
                    out.comp_mut(k)[p] -= (data[hi + k] - data[lo + k]) * inv;
                }
            }
        }
    }
}

/// Scratch buffers for one grid line.
struct LineWork {
    len: usize,
    vals: Vec<f64>,
    flx: Vec<f64>,
    rec: [Vec<f64>; 4],
    tri: Tridiagonal,
}

impl LineWork {
    fn new(nv: usize, n: usize) -> Self {
        let len = n + 2 * GHOST_WIDTH;
        LineWork {
            len,
            vals: vec![0.0; nv * len],
            flx: vec![0.0; nv * len],
            rec: std::array::from_fn(|_| vec![0.0; nv * (n + 1)]),
            tri: Tridiagonal::default(),
        }
    }
}

/// Spatial operator: grid, boundaries, constants, scheme and an optional
/// hydrostatic reference state used to balance the gravity source.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub bc: BoundarySpec,
    pub phys: PhysConstants,
    pub scheme: Scheme,
    pub average: InterfaceAverage,
    reference: Option<StateField>,
}

impl Discretization {
    pub fn new(grid: Grid, bc: BoundarySpec, phys: PhysConstants, scheme: Scheme) -> Result<Self> {
        bc.validate(grid.dims)?;
        phys.validate()?;
        Ok(Discretization {
            grid,
            bc,
            phys,
            scheme,
            average: InterfaceAverage::Arithmetic,
            reference: None,
        })
    }

    pub fn with_average(mut self, average: InterfaceAverage) -> Self {
        self.average = average;
        self
    }

    /// Attaches the hydrostatic reference state.
    pub fn with_reference(mut self, reference: StateField) -> Result<Self> {
        if reference.grid != self.grid {
            return Err(Error::config("reference state grid does not match the discretization grid"));
        }
        reference.validate(&self.phys)?;
        self.reference = Some(self.with_ghosts(&reference)?);
        Ok(self)
    }

    pub fn reference(&self) -> Option<&StateField> {
        self.reference.as_ref()
    }

    pub fn nvar(&self) -> usize {
        self.grid.nvar()
    }

    fn check_grid(&self, field: &StateField) -> Result<()> {
        if field.grid != self.grid {
            return Err(Error::config("field grid does not match the discretization grid"));
        }
        Ok(())
    }

    pub fn with_ghosts(&self, field: &StateField) -> Result<StateField> {
        self.check_grid(field)?;
        let mut out = field.clone();
        out.fill_ghosts(&self.bc)?;
        Ok(out)
    }

    /// Gathers the padded line `line` along `dir` into `work.vals`.
    fn gather(&self, field: &StateField, dir: Dir, line: usize, work: &mut LineWork) {
        let (base, stride) = self.grid.line(dir, line);
        let len = work.len;
        for k in 0..self.nvar() {
            let c = field.comp(k);
            let dst = &mut work.vals[k * len..(k + 1) * len];
            for (m, d) in dst.iter_mut().enumerate() {
                *d = c[base + m * stride];
            }
        }
    }

    /// Pointwise Euler flux of the gathered line into `work.flx`.
    fn line_flux(&self, dir: Dir, work: &mut LineWork) {
        let nv = self.nvar();
        let len = work.len;
        let mut q = [0.0; MAX_VARS];
        for m in 0..len {
            for (k, qk) in q.iter_mut().enumerate().take(nv) {
                *qk = work.vals[k * len + m];
            }
            let f = crate::physics::flux_unchecked(&q[..nv], dir, self.phys.gamma);
            for k in 0..nv {
                work.flx[k * len + m] = f[k];
            }
        }
    }

    /// Pointwise `A_F(Qⁿ) v` of the gathered line into `work.flx`.
    fn line_fast_flux(&self, dir: Dir, line: usize, cache: &FastCache, work: &mut LineWork) {
        let nv = self.nvar();
        let len = work.len;
        let (base, stride) = self.grid.line(dir, line);
        let mut v = [0.0; MAX_VARS];
        for m in 0..len {
            for (k, vk) in v.iter_mut().enumerate().take(nv) {
                *vk = work.vals[k * len + m];
            }
            let f = mat_vec(nv, cache.a_fast(dir, base + m * stride), &v);
            for k in 0..nv {
                work.flx[k * len + m] = f[k];
            }
        }
    }

    /// Captures the nonlinear weights of `ω(f(q))`.
    pub fn freeze(&self, field: &StateField, stage: usize) -> Result<FrozenOperator> {
        let q = self.with_ghosts(field)?;
        q.validate(&self.phys)?;
        self.freeze_filled(&q, stage)
    }

    pub(crate) fn freeze_filled(&self, q: &StateField, stage: usize) -> Result<FrozenOperator> {
        let grid = self.grid;
        let nv = self.nvar();
        let mut weights = [Vec::new(), Vec::new()];
        if self.scheme == Scheme::FirstOrder {
            return Ok(FrozenOperator {
                scheme: self.scheme,
                grid,
                stage,
                weights,
            });
        }
        // ε acts on fluxes measured in reference units
        let scales = self.phys.flux_scales(nv);
        let eps: Vec<f64> = scales[..nv].iter().map(|s| WENO_EPS * s * s).collect();
        for &dir in Dir::all(grid.dims) {
            let n = grid.n_along(dir);
            let periodic = self.bc.is_periodic(dir);
            let mut w = Vec::with_capacity(grid.lines_along(dir) * (n + 1) * nv * 2);
            let mut work = LineWork::new(nv, n);
            let len = work.len;
            for line in 0..grid.lines_along(dir) {
                self.gather(q, dir, line, &mut work);
                self.line_flux(dir, &mut work);
                for face in 0..=n {
                    let c = match self.scheme {
                        Scheme::Crweno5 if !crweno_fallback_row(face, n, periodic) => CRWENO5_OPTIMAL,
                        _ => WENO5_OPTIMAL,
                    };
                    for k in 0..nv {
                        let f = &work.flx[k * len..(k + 1) * len];
                        w.push(nonlinear_weights_eps(&stencil(f, face, Bias::Left), c, eps[k]));
                        w.push(nonlinear_weights_eps(&stencil(f, face, Bias::Right), c, eps[k]));
                    }
                }
            }
            weights[dir.index()] = w;
        }
        Ok(FrozenOperator {
            scheme: self.scheme,
            grid,
            stage,
            weights,
        })
    }

    /// Frozen operator with optimal (linear-scheme) weights everywhere.
    pub fn freeze_optimal(&self) -> FrozenOperator {
        let grid = self.grid;
        let nv = self.nvar();
        let mut weights = [Vec::new(), Vec::new()];
        if self.scheme != Scheme::FirstOrder {
            for &dir in Dir::all(grid.dims) {
                let n = grid.n_along(dir);
                let periodic = self.bc.is_periodic(dir);
                let mut w = Vec::new();
                for _line in 0..grid.lines_along(dir) {
                    for face in 0..=n {
                        let c = match self.scheme {
                            Scheme::Crweno5 if !crweno_fallback_row(face, n, periodic) => CRWENO5_OPTIMAL,
                            _ => WENO5_OPTIMAL,
                        };
                        for _ in 0..nv * 2 {
                            w.push(c);
                        }
                    }
                }
                weights[dir.index()] = w;
            }
        }
        FrozenOperator {
            scheme: self.scheme,
            grid,
            stage: 0,
            weights,
        }
    }

    fn check_frozen(&self, frozen: &FrozenOperator) -> Result<()> {
        if frozen.grid != self.grid || frozen.scheme != self.scheme {
            return Err(Error::config("frozen operator does not match the discretization"));
        }
        Ok(())
    }

    /// Interface eigensystem and dissipation coefficients `(μ̄, ν̄)` between two states.
    fn face_data(&self, ql: &[f64], qr: &[f64], dir: Dir) -> (EigenSystem, f64, f64) {
        let nv = self.nvar();
        let g = self.phys.gamma;
        let pl = primitive_unchecked(ql, g);
        let pr = primitive_unchecked(qr, g);
        let d = dir.index();
        let al = (g * pl.p / pl.rho).sqrt();
        let ar = (g * pr.p / pr.rho).sqrt();
        let mu = pl.vel[d].abs().max(pr.vel[d].abs());
        let nu = (pl.vel[d].abs() + al).max(pr.vel[d].abs() + ar);
        let eig = match self.average {
            InterfaceAverage::Arithmetic => {
                let avg = Primitive {
                    rho: 0.5 * (pl.rho + pr.rho),
                    vel: [0.5 * (pl.vel[0] + pr.vel[0]), 0.5 * (pl.vel[1] + pr.vel[1])],
                    p: 0.5 * (pl.p + pr.p),
                };
                crate::physics::eigensystem_of_primitive(nv, &avg, dir, g)
            }
            InterfaceAverage::Roe => {
                let (sl, sr) = (pl.rho.sqrt(), pr.rho.sqrt());
                let wl = sl / (sl + sr);
                let wr = sr / (sl + sr);
                let hl = al * al / (g - 1.0) + 0.5 * pl.speed_sq();
                let hr = ar * ar / (g - 1.0) + 0.5 * pr.speed_sq();
                let vel = [wl * pl.vel[0] + wr * pr.vel[0], wl * pl.vel[1] + wr * pr.vel[1]];
                let h = wl * hl + wr * hr;
                let a = ((g - 1.0) * (h - 0.5 * (vel[0] * vel[0] + vel[1] * vel[1]))).sqrt();
                eigensystem_from_averages(nv, vel, a, h, dir, g)
            }
        };
        (eig, mu, nu)
    }

    /// Freezes `A_F` and the acoustic dissipation at `qn`.
    pub fn fast_cache(&self, qn: &StateField) -> Result<FastCache> {
        let q = self.with_ghosts(qn)?;
        q.validate(&self.phys)?;
        let grid = self.grid;
        let nv = self.nvar();
        let mut a_fast = [Vec::new(), Vec::new()];
        let mut diss = [Vec::new(), Vec::new()];
        let mut eigs = [Vec::new(), Vec::new()];
        for &dir in Dir::all(grid.dims) {
            let n = grid.n_along(dir);
            let len = n + 2 * GHOST_WIDTH;
            let mut af = vec![ZERO_MAT; grid.len_pad()];
            let mut ds = Vec::with_capacity(grid.lines_along(dir) * (n + 1));
            let mut es = Vec::with_capacity(grid.lines_along(dir) * (n + 1));
            for line in 0..grid.lines_along(dir) {
                let (base, stride) = grid.line(dir, line);
                for m in 0..len {
                    let p = base + m * stride;
                    let qp = q.point(p);
                    let prim = primitive_unchecked(&qp[..nv], self.phys.gamma);
                    let eig = crate::physics::eigensystem_of_primitive(nv, &prim, dir, self.phys.gamma);
                    af[p] = partition_of(&eig).fast;
                }
                for face in 0..=n {
                    let pl = base + (face + GHOST_WIDTH - 1) * stride;
                    let pr = pl + stride;
                    let (ql, qr) = (q.point(pl), q.point(pr));
                    let (eig, _mu, nu) = self.face_data(&ql[..nv], &qr[..nv], dir);
                    let mut d = eig.fast_mask();
                    for dk in d.iter_mut() {
                        *dk *= nu;
                    }
                    ds.push(eig.compose(&d));
                    es.push(eig);
                }
            }
            a_fast[dir.index()] = af;
            diss[dir.index()] = ds;
            eigs[dir.index()] = es;
        }
        Ok(FastCache {
            state: q,
            a_fast,
            diss,
            eig: eigs,
        })
    }

    /// Reconstructs the two gathered arrays (`flx`, `vals`) at both biases into `work.rec`
    /// as `[f^L, f^R, q^L, q^R]`.
    fn reconstruct_line(&self, dir: Dir, line: usize, frozen: &FrozenOperator, work: &mut LineWork) -> Result<()> {
        let nv = self.nvar();
        let n = self.grid.n_along(dir);
        let len = work.len;
        let nf = n + 1;
        let periodic = self.bc.is_periodic(dir);
        let lw = frozen.line_weights(dir, line);
        let LineWork {
            vals, flx, rec, tri, ..
        } = work;
        let [fl, fr, ql, qr] = rec;
        for k in 0..nv {
            let f = &flx[k * len..(k + 1) * len];
            let q = &vals[k * len..(k + 1) * len];
            for bias in [Bias::Left, Bias::Right] {
                let (fo, qo) = match bias {
                    Bias::Left => (&mut fl[k * nf..(k + 1) * nf], &mut ql[k * nf..(k + 1) * nf]),
                    Bias::Right => (&mut fr[k * nf..(k + 1) * nf], &mut qr[k * nf..(k + 1) * nf]),
                };
                let b = bias.index();
                let w = |face: usize| lw[(face * nv + k) * 2 + b];
                match self.scheme {
                    Scheme::FirstOrder => {
                        let off = match bias {
                            Bias::Left => GHOST_WIDTH - 1,
                            Bias::Right => GHOST_WIDTH,
                        };
                        fo.copy_from_slice(&f[off..off + nf]);
                        qo.copy_from_slice(&q[off..off + nf]);
                    }
                    Scheme::Weno5 => {
                        weno5_line(f, w, bias, fo);
                        weno5_line(q, w, bias, qo);
                    }
                    Scheme::Crweno5 => {
                        crweno5_line(tri, line, &[f, q], w, bias, periodic, &mut [fo, qo])?;
                    }
                }
            }
        }
        Ok(())
    }

    fn total_fluxes_into(
        &self,
        q: &StateField,
        frozen: &FrozenOperator,
        dirs: &[Dir],
        out: &mut InterfaceFluxes,
    ) -> Result<()> {
        let grid = self.grid;
        let nv = self.nvar();
        for &dir in dirs {
            let n = grid.n_along(dir);
            let nf = n + 1;
            let mut work = LineWork::new(nv, n);
            let len = work.len;
            for line in 0..grid.lines_along(dir) {
                self.gather(q, dir, line, &mut work);
                self.line_flux(dir, &mut work);
                self.reconstruct_line(dir, line, frozen, &mut work)?;
                let [fl, fr, ql, qr] = &work.rec;
                let mut cl = [0.0; MAX_VARS];
                let mut cr = [0.0; MAX_VARS];
                let mut dq = [0.0; MAX_VARS];
                for face in 0..nf {
                    let ml = face + GHOST_WIDTH - 1;
                    for k in 0..nv {
                        cl[k] = work.vals[k * len + ml];
                        cr[k] = work.vals[k * len + ml + 1];
                        dq[k] = qr[k * nf + face] - ql[k * nf + face];
                    }
                    let (eig, mu, nu) = self.face_data(&cl[..nv], &cr[..nv], dir);
                    let mut d = [0.0; MAX_VARS];
                    for (k, dk) in d.iter_mut().enumerate().take(nv) {
                        *dk = if k < nv - 2 { mu } else { nu };
                    }
                    let diss = eig.apply_diag(&d, &dq);
                    let s = out.slot(dir, line, face);
                    let data = &mut out.data[dir.index()];
                    for k in 0..nv {
                        data[s + k] = 0.5 * (fl[k * nf + face] + fr[k * nf + face]) - 0.5 * diss[k];
                    }
                }
            }
        }
        Ok(())
    }

    fn fast_fluxes_into(
        &self,
        v: &StateField,
        frozen: &FrozenOperator,
        cache: &FastCache,
        out: &mut InterfaceFluxes,
    ) -> Result<()> {
        let grid = self.grid;
        let nv = self.nvar();
        for &dir in Dir::all(grid.dims) {
            let n = grid.n_along(dir);
            let nf = n + 1;
            let mut work = LineWork::new(nv, n);
            for line in 0..grid.lines_along(dir) {
                self.gather(v, dir, line, &mut work);
                self.line_fast_flux(dir, line, cache, &mut work);
                self.reconstruct_line(dir, line, frozen, &mut work)?;
                let [fl, fr, ql, qr] = &work.rec;
                let mut dq = [0.0; MAX_VARS];
                for face in 0..nf {
                    for k in 0..nv {
                        dq[k] = qr[k * nf + face] - ql[k * nf + face];
                    }
                    let diss = mat_vec(nv, cache.dissipation(dir, line, face), &dq);
                    let s = out.slot(dir, line, face);
                    let data = &mut out.data[dir.index()];
                    for k in 0..nv {
                        data[s + k] = 0.5 * (fl[k * nf + face] + fr[k * nf + face]) - 0.5 * diss[k];
                    }
                }
            }
        }
        Ok(())
    }

    fn check_cache<'a>(&self, cache: Option<&'a FastCache>) -> Result<&'a FastCache> {
        let cache = cache.ok_or_else(|| Error::config("fast and slow modes need a frozen fast state"))?;
        self.check_grid(&cache.state)?;
        Ok(cache)
    }

    /// Interface fluxes in the requested mode. `field` needs only its interior.
    pub fn interface_fluxes(
        &self,
        field: &StateField,
        mode: Mode,
        frozen: &FrozenOperator,
        cache: Option<&FastCache>,
    ) -> Result<InterfaceFluxes> {
        self.check_frozen(frozen)?;
        let q = self.with_ghosts(field)?;
        let mut out = InterfaceFluxes::zeros(self.grid);
        match mode {
            Mode::Total => {
                q.validate(&self.phys)?;
                self.total_fluxes_into(&q, frozen, Dir::all(self.grid.dims), &mut out)?;
            }
            Mode::Fast => {
                let cache = self.check_cache(cache)?;
                self.fast_fluxes_into(&q, frozen, cache, &mut out)?;
            }
            Mode::Slow => {
                let cache = self.check_cache(cache)?;
                q.validate(&self.phys)?;
                self.total_fluxes_into(&q, frozen, Dir::all(self.grid.dims), &mut out)?;
                let mut fast = InterfaceFluxes::zeros(self.grid);
                self.fast_fluxes_into(&q, frozen, cache, &mut fast)?;
                out.subtract(&fast);
            }
        }
        Ok(out)
    }

    /// Flux-divergence tendency in the requested mode (no source).
    pub fn rhs(
        &self,
        field: &StateField,
        mode: Mode,
        frozen: &FrozenOperator,
        cache: Option<&FastCache>,
    ) -> Result<StateField> {
        Ok(divergence(&self.interface_fluxes(field, mode, frozen, cache)?))
    }

    /// Total and fast tendencies from one pass: `(F̂, F̂_F)`.
    pub fn total_and_fast(
        &self,
        field: &StateField,
        frozen: &FrozenOperator,
        cache: &FastCache,
    ) -> Result<(StateField, StateField)> {
        self.check_frozen(frozen)?;
        let q = self.with_ghosts(field)?;
        q.validate(&self.phys)?;
        let mut total = InterfaceFluxes::zeros(self.grid);
        self.total_fluxes_into(&q, frozen, Dir::all(self.grid.dims), &mut total)?;
        let mut fast = InterfaceFluxes::zeros(self.grid);
        self.fast_fluxes_into(&q, frozen, cache, &mut fast)?;
        Ok((divergence(&total), divergence(&fast)))
    }

    /// Pointwise gravity source `S q`; zero ghosts.
    pub fn source_term(&self, field: &StateField) -> StateField {
        let grid = self.grid;
        let nv = self.nvar();
        let mut out = StateField::zeros(grid);
        if !self.phys.has_gravity() {
            return out;
        }
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let p = grid.idx(i, j);
                let q = field.point(p);
                let s = source_point(&q[..nv], self.phys.gravity);
                out.set_point(p, &s);
            }
        }
        out
    }

    /// Constant correction `−(F̂(q_ref) + S q_ref)` along the gravity-aligned
    /// directions, built with the same frozen weights as the state it balances.
    pub fn balance_correction(&self, frozen: &FrozenOperator) -> Result<Option<StateField>> {
        if !self.phys.has_gravity() {
            return Ok(None);
        }
        let reference = self
            .reference
            .as_ref()
            .ok_or_else(|| Error::config("gravity is enabled but no hydrostatic reference state is attached"))?;
        self.check_frozen(frozen)?;
        let dirs: Vec<Dir> = Dir::all(self.grid.dims)
            .iter()
            .copied()
            .filter(|d| self.phys.gravity[d.index()] != 0.0)
            .collect();
        let mut fluxes = InterfaceFluxes::zeros(self.grid);
        self.total_fluxes_into(reference, frozen, &dirs, &mut fluxes)?;
        let mut c = divergence(&fluxes);
        c.axpy(1.0, &self.source_term(reference));
        c.scale(-1.0);
        Ok(Some(c))
    }

    /// Full explicit tendency `F̂(q) + S q + c₀` with weights captured from `q`.
    pub fn tendency(&self, field: &StateField) -> Result<StateField> {
        let q = self.with_ghosts(field)?;
        q.validate(&self.phys)?;
        let frozen = self.freeze_filled(&q, 0)?;
        self.tendency_with(&q, &frozen)
    }

    /// Full tendency with given frozen weights.
    pub fn tendency_with(&self, field: &StateField, frozen: &FrozenOperator) -> Result<StateField> {
        let mut out = self.rhs(field, Mode::Total, frozen, None)?;
        if self.phys.has_gravity() {
            out.axpy(1.0, &self.source_term(field));
            if let Some(c) = self.balance_correction(frozen)? {
                out.axpy(1.0, &c);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{conserved_from_primitive, BoundaryKind};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const G: usize = GHOST_WIDTH;

    fn c() -> PhysConstants {
        PhysConstants::nondimensional()
    }

    /// Padded line of cell averages of `h` over cells of width `dx` centred at `x0 + (m - G + 1/2) dx`.
    fn averages(n: usize, dx: f64, antiderivative: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n + 2 * G)
            .map(|m| {
                let a = (m as f64 - G as f64) * dx;
                (antiderivative(a + dx) - antiderivative(a)) / dx
            })
            .collect()
    }

    fn face_x(face: usize, dx: f64) -> f64 {
        face as f64 * dx
    }

    #[test]
    fn constant_stencil_gives_optimal_weights() {
        let w = weno_weights(&[1.0; 5]);
        for k in 0..3 {
            assert!((w[k] - WENO5_OPTIMAL[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_stencil_gives_optimal_weights() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        let beta = smoothness(&s);
        // hand evaluation: second differences vanish, first-difference terms equal 1
        assert_eq!(beta, [1.0, 1.0, 1.0]);
        let w = weno_weights(&s);
        for k in 0..3 {
            assert!((w[k] - WENO5_OPTIMAL[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn step_stencil_suppresses_downwind_weight() {
        let w = weno_weights(&[0.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(w[2] < 0.01, "{w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reconstructions_preserve_constants() {
        let n = 12;
        let line = vec![2.5; n + 2 * G];
        let wc = vec![WENO5_OPTIMAL; n + 1];
        for bias in [Bias::Left, Bias::Right] {
            for v in reconstruct_weno5(&line, &wc, bias) {
                assert!((v - 2.5).abs() < 1e-14);
            }
            let mut wcr = vec![CRWENO5_OPTIMAL; n + 1];
            for v in reconstruct_crweno5(&line, &wcr, bias, true).unwrap() {
                assert!((v - 2.5).abs() < 1e-14);
            }
            wcr[0] = WENO5_OPTIMAL;
            wcr[1] = WENO5_OPTIMAL;
            wcr[n - 1] = WENO5_OPTIMAL;
            wcr[n] = WENO5_OPTIMAL;
            for v in reconstruct_crweno5(&line, &wcr, bias, false).unwrap() {
                assert!((v - 2.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_weno5_coefficients() {
        // with optimal weights the combination is (1/30, -13/60, 47/60, 27/60, -1/20)
        let want = [1.0 / 30.0, -13.0 / 60.0, 47.0 / 60.0, 27.0 / 60.0, -1.0 / 20.0];
        for (i, wi) in want.iter().enumerate() {
            let mut s = [0.0; 5];
            s[i] = 1.0;
            assert!((weno5_combine(WENO5_OPTIMAL, s) - wi).abs() < 1e-15);
        }
    }

    /// Cell averages of a quartic are reconstructed exactly at faces.
    fn quartic(x: f64) -> f64 {
        1.0 + x - 2.0 * x * x + 0.5 * x.powi(3) + 0.3 * x.powi(4)
    }

    fn quartic_int(x: f64) -> f64 {
        x + 0.5 * x * x - 2.0 / 3.0 * x.powi(3) + 0.125 * x.powi(4) + 0.06 * x.powi(5)
    }

    #[test]
    fn weno5_exact_for_quartic_averages() {
        let n = 10;
        let dx = 0.13;
        let line = averages(n, dx, quartic_int);
        let wc = vec![WENO5_OPTIMAL; n + 1];
        for bias in [Bias::Left, Bias::Right] {
            let out = reconstruct_weno5(&line, &wc, bias);
            for (face, v) in out.iter().enumerate() {
                let exact = quartic(face_x(face, dx));
                assert!((v - exact).abs() < 1e-12, "{bias:?} face {face}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn crweno5_exact_for_quartic_averages() {
        let n = 12;
        let dx = 0.11;
        let line = averages(n, dx, quartic_int);
        let mut w = vec![CRWENO5_OPTIMAL; n + 1];
        for f in [0, 1, n - 1, n] {
            w[f] = WENO5_OPTIMAL;
        }
        for bias in [Bias::Left, Bias::Right] {
            let out = reconstruct_crweno5(&line, &w, bias, false).unwrap();
            for (face, v) in out.iter().enumerate() {
                let exact = quartic(face_x(face, dx));
                assert!((v - exact).abs() < 1e-12, "{bias:?} face {face}: {v} vs {exact}");
            }
        }
    }

    fn sine_line(n: usize) -> (Vec<f64>, f64) {
        let dx = 1.0 / n as f64;
        (averages(n, dx, |x| -(2.0 * PI * x).cos() / (2.0 * PI)), dx)
    }

    fn weno5_sine_error(n: usize) -> f64 {
        let (line, dx) = sine_line(n);
        let out = reconstruct_weno5(&line, &vec![WENO5_OPTIMAL; n + 1], Bias::Left);
        out.iter()
            .enumerate()
            .map(|(f, v)| (v - (2.0 * PI * face_x(f, dx)).sin()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn weno5_optimal_weights_fifth_order() {
        let e1 = weno5_sine_error(20);
        let e2 = weno5_sine_error(40);
        let e3 = weno5_sine_error(80);
        let s1 = (e1 / e2).log2();
        let s2 = (e2 / e3).log2();
        assert!(s1 >= 4.5 && s2 >= 4.5, "slopes {s1} {s2}");
    }

    #[test]
    fn crweno5_periodic_matches_dense_solve() {
        let n = 16;
        let (line, _) = sine_line(n);
        for bias in [Bias::Left, Bias::Right] {
            let out = reconstruct_crweno5(&line, &vec![CRWENO5_OPTIMAL; n + 1], bias, true).unwrap();
            // dense cyclic system: 3/10 f̂_{k-1} + 6/10 f̂_k + 1/10 f̂_{k+1} = (1/30, 19/30, 1/3) on cells k-2..k
            let mut a = DMatrix::<f64>::zeros(n, n);
            let mut b = DVector::<f64>::zeros(n);
            let cell = |j: i64| line[(j + G as i64) as usize];
            for k in 0..n {
                let (lo, hi) = ((k + n - 1) % n, (k + 1) % n);
                let ki = k as i64;
                match bias {
                    Bias::Left => {
                        a[(k, lo)] += 0.3;
                        a[(k, k)] += 0.6;
                        a[(k, hi)] += 0.1;
                        b[k] = cell(ki - 2) / 30.0 + 19.0 / 30.0 * cell(ki - 1) + cell(ki) / 3.0;
                    }
                    Bias::Right => {
                        a[(k, hi)] += 0.3;
                        a[(k, k)] += 0.6;
                        a[(k, lo)] += 0.1;
                        b[k] = cell(ki + 1) / 30.0 + 19.0 / 30.0 * cell(ki) + cell(ki - 1) / 3.0;
                    }
                }
            }
            let x = a.lu().solve(&b).unwrap();
            for k in 0..n {
                assert!((out[k] - x[k]).abs() < 1e-12, "{bias:?} face {k}");
            }
            assert_eq!(out[n], out[0]);
        }
    }

    #[test]
    fn tridiagonal_breakdown_is_reported() {
        // second pivot is 1 - 1·1 = 0
        let mut tri = Tridiagonal::default();
        tri.resize(3);
        tri.sub.copy_from_slice(&[0.0, 1.0, 1.0]);
        tri.diag.copy_from_slice(&[1.0, 1.0, 1.0]);
        tri.sup.copy_from_slice(&[1.0, 1.0, 0.0]);
        assert_eq!(tri.factor(false), Err(1));
    }

    #[test]
    fn cyclic_tridiagonal_matches_dense() {
        let m = 7;
        let mut tri = Tridiagonal::default();
        tri.resize(m);
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            tri.sub[i] = 0.3 + 0.01 * i as f64;
            tri.diag[i] = 1.5 - 0.02 * i as f64;
            tri.sup[i] = 0.2 + 0.03 * i as f64;
            a[(i, (i + m - 1) % m)] += tri.sub[i];
            a[(i, i)] += tri.diag[i];
            a[(i, (i + 1) % m)] += tri.sup[i];
        }
        tri.factor(true).unwrap();
        let rhs: Vec<f64> = (0..m).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        tri.solve(&mut x);
        let xd = a.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..m {
            assert!((x[i] - xd[i]).abs() < 1e-13);
        }
    }

    fn density_wave(n: usize, mach: f64) -> (Discretization, StateField) {
        let grid = Grid::one_d(n, 0.0, 1.0).unwrap();
        let disc = Discretization::new(grid, BoundarySpec::periodic(), c(), Scheme::Weno5).unwrap();
        let f = StateField::from_primitive_fn(grid, &c(), |x, _| Primitive {
            rho: 1.0 + 0.1 * (2.0 * PI * x).sin(),
            vel: [mach, 0.0],
            p: 1.0 / 1.4,
        });
        (disc, f)
    }

    #[test]
    fn uniform_flow_flux_equals_pointwise_flux() {
        let grid = Grid::two_d(8, 7, (0.0, 1.0), (0.0, 1.0)).unwrap();
        let prim = Primitive {
            rho: 1.2,
            vel: [0.3, -0.1],
            p: 0.9,
        };
        let disc = Discretization::new(grid, BoundarySpec::periodic(), c(), Scheme::Crweno5).unwrap();
        let f = StateField::from_primitive_fn(grid, &c(), |_, _| prim);
        let frozen = disc.freeze(&f, 0).unwrap();
        let fl = disc.interface_fluxes(&f, Mode::Total, &frozen, None).unwrap();
        let q = conserved_from_primitive(&prim, 2, &c());
        for dir in [Dir::X, Dir::Y] {
            let exact = crate::physics::flux(&q, dir, &c()).unwrap();
            for face in 0..=grid.n_along(dir) {
                for k in 0..4 {
                    assert!((fl.get(dir, 2, face, k) - exact[k]).abs() < 1e-14);
                }
            }
        }
        let r = disc.rhs(&f, Mode::Total, &frozen, None).unwrap();
        assert!(r.interior_vec().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn fast_plus_slow_equals_total_density_wave() {
        for scheme in [Scheme::Weno5, Scheme::Crweno5] {
            let (mut disc, f) = density_wave(32, 0.1);
            disc.scheme = scheme;
            let frozen = disc.freeze(&f, 0).unwrap();
            let cache = disc.fast_cache(&f).unwrap();
            let total = disc.interface_fluxes(&f, Mode::Total, &frozen, None).unwrap();
            let fast = disc.interface_fluxes(&f, Mode::Fast, &frozen, Some(&cache)).unwrap();
            let slow = disc.interface_fluxes(&f, Mode::Slow, &frozen, Some(&cache)).unwrap();
            for (i, t) in total.values(Dir::X).iter().enumerate() {
                let s = fast.values(Dir::X)[i] + slow.values(Dir::X)[i];
                assert!((s - t).abs() <= 1e-13 * t.abs().max(1.0));
            }
        }
    }

    #[test]
    fn slow_difference_matches_direct_slow_form_at_freeze_state() {
        let (disc, f) = density_wave(24, 0.2);
        let frozen = disc.freeze(&f, 0).unwrap();
        let cache = disc.fast_cache(&f).unwrap();
        let slow = disc.interface_fluxes(&f, Mode::Slow, &frozen, Some(&cache)).unwrap();
        // direct: ½(f_S^L + f_S^R) − ½ X diag(μ̄,0,0) X⁻¹ (q^R − q^L), f_S from the closed form
        let q = disc.with_ghosts(&f).unwrap();
        let n = 24;
        let len = n + 2 * G;
        let mut fs = vec![vec![0.0; len]; 3];
        let mut qs = vec![vec![0.0; len]; 3];
        for m in 0..len {
            let qp = q.point(m);
            let (s, _) = crate::physics::split_flux_closed_form(&qp[..3], &c()).unwrap();
            for k in 0..3 {
                fs[k][m] = s[k];
                qs[k][m] = qp[k];
            }
        }
        for face in 0..=n {
            let mut dq = [0.0; 4];
            let mut avg = [0.0; 3];
            for k in 0..3 {
                let w = |b| frozen.weights(Dir::X, 0, face, k, b);
                let fl = weno5_combine(w(Bias::Left), stencil(&fs[k], face, Bias::Left));
                let fr = weno5_combine(w(Bias::Right), stencil(&fs[k], face, Bias::Right));
                let ql = weno5_combine(w(Bias::Left), stencil(&qs[k], face, Bias::Left));
                let qr = weno5_combine(w(Bias::Right), stencil(&qs[k], face, Bias::Right));
                dq[k] = qr - ql;
                avg[k] = 0.5 * (fl + fr);
            }
            let (l, r) = (q.point(face + G - 1), q.point(face + G));
            let (eig, mu, _) = disc.face_data(&l[..3], &r[..3], Dir::X);
            let d = eig.apply_diag(&[mu, 0.0, 0.0, 0.0], &dq);
            for k in 0..3 {
                let want = avg[k] - 0.5 * d[k];
                assert!((slow.get(Dir::X, 0, face, k) - want).abs() < 1e-13, "face {face} comp {k}");
            }
        }
    }

    #[test]
    fn dissipation_difference_is_slow_part() {
        let ql = conserved_from_primitive(&Primitive { rho: 1.0, vel: [0.2, 0.0], p: 1.0 / 1.4 }, 1, &c());
        let qr = conserved_from_primitive(&Primitive { rho: 1.1, vel: [0.25, 0.0], p: 0.75 }, 1, &c());
        let (mut disc, _) = density_wave(8, 0.1);
        disc.scheme = Scheme::FirstOrder;
        let (eig, mu, nu) = disc.face_data(&ql[..3], &qr[..3], Dir::X);
        let total = eig.compose(&[mu, nu, nu, 0.0]);
        let fast = eig.compose(&[0.0, nu, nu, 0.0]);
        let slow = eig.compose(&[mu, 0.0, 0.0, 0.0]);
        for r in 0..3 {
            for col in 0..3 {
                assert!((total[r][col] - fast[r][col] - slow[r][col]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn divergence_examples() {
        let grid = Grid::one_d(10, 0.0, 1.0).unwrap();
        let mut fl = InterfaceFluxes::zeros(grid);
        for face in 0..=10 {
            for k in 0..3 {
                fl.set(Dir::X, 0, face, k, 0.7);
            }
        }
        assert!(divergence(&fl).interior_vec().iter().all(|v| *v == 0.0));
        for face in 0..=10 {
            fl.set(Dir::X, 0, face, 0, face as f64 * grid.dx());
        }
        let d = divergence(&fl);
        for i in 0..10 {
            assert!((d.get(0, i, 0) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_tendency_sums_to_zero() {
        let (disc, f) = density_wave(40, 0.1);
        let frozen = disc.freeze(&f, 0).unwrap();
        let cache = disc.fast_cache(&f).unwrap();
        for mode in [Mode::Total, Mode::Fast, Mode::Slow] {
            let r = disc.rhs(&f, mode, &frozen, Some(&cache)).unwrap();
            for s in r.integrals() {
                assert!(s.abs() < 1e-14, "{mode:?} {s}");
            }
        }
    }

    #[test]
    fn frozen_fast_operator_is_linear() {
        let (disc, f) = density_wave(20, 0.1);
        let frozen = disc.freeze(&f, 0).unwrap();
        let cache = disc.fast_cache(&f).unwrap();
        let u = StateField::from_primitive_fn(disc.grid, &c(), |x, _| Primitive {
            rho: 1.0 + x,
            vel: [x * x, 0.0],
            p: 1.0 + 0.3 * (7.0 * x).cos(),
        });
        let mut comb = f.clone();
        comb.scale(0.7);
        comb.axpy(-1.3, &u);
        let lhs = disc.rhs(&comb, Mode::Fast, &frozen, Some(&cache)).unwrap();
        let mut rhs = disc.rhs(&f, Mode::Fast, &frozen, Some(&cache)).unwrap();
        rhs.scale(0.7);
        rhs.axpy(-1.3, &disc.rhs(&u, Mode::Fast, &frozen, Some(&cache)).unwrap());
        for (a, b) in lhs.interior_vec().iter().zip(rhs.interior_vec()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn zero_gravity_source_vanishes() {
        let (disc, f) = density_wave(10, 0.1);
        assert!(disc.source_term(&f).raw().iter().all(|v| *v == 0.0));
        assert!(disc.balance_correction(&disc.freeze(&f, 0).unwrap()).unwrap().is_none());
    }

    #[test]
    fn uniform_density_source_values() {
        let grid = Grid::two_d(5, 5, (0.0, 1.0), (0.0, 1.0)).unwrap();
        let mut phys = PhysConstants::atmosphere(300.0);
        phys.gravity = [0.0, 9.8];
        let disc = Discretization::new(grid, BoundarySpec::channel(), phys, Scheme::Weno5).unwrap();
        let f = StateField::from_primitive_fn(grid, &phys, |_, _| Primitive {
            rho: 1.2,
            vel: [3.0, 0.5],
            p: 1e5,
        });
        let s = disc.source_term(&f);
        assert_eq!(s.get(0, 2, 2), 0.0);
        assert!((s.get(2, 2, 2) + 1.2 * 9.8).abs() < 1e-12);
        assert!((s.get(3, 2, 2) + 1.2 * 0.5 * 9.8).abs() < 1e-12);
        assert!(disc.balance_correction(&disc.freeze(&f, 0).unwrap()).is_err());
    }

    #[test]
    fn hydrostatic_state_is_balanced() {
        let grid = Grid::two_d(6, 12, (0.0, 1000.0), (0.0, 1000.0)).unwrap();
        let phys = PhysConstants::atmosphere(300.0);
        let k = (phys.gamma - 1.0) / phys.gamma;
        let base = |_x: f64, y: f64| {
            let pi = 1.0 - phys.gravity[1] * k * y / (phys.gas_constant * 300.0);
            let p = phys.p_ref * pi.powf(1.0 / k);
            Primitive {
                rho: p / (phys.gas_constant * 300.0 * pi),
                vel: [0.0, 0.0],
                p,
            }
        };
        let reference = StateField::from_primitive_fn(grid, &phys, base);
        for scheme in [Scheme::Weno5, Scheme::Crweno5] {
            let disc = Discretization::new(grid, BoundarySpec::walls(), phys, scheme)
                .unwrap()
                .with_reference(reference.clone())
                .unwrap();
            let t = disc.tendency(&reference).unwrap();
            let bound = 1e-12 * phys.p_ref / grid.dy();
            for v in t.interior_vec() {
                assert!(v.abs() <= bound, "{scheme:?} residual {v}");
            }
        }
    }

    #[test]
    fn mismatched_pairing_rejected() {
        let grid = Grid::one_d(8, 0.0, 1.0).unwrap();
        let mut bc = BoundarySpec::periodic();
        bc.x_lo = BoundaryKind::InviscidWall;
        assert!(matches!(
            Discretization::new(grid, bc, c(), Scheme::Weno5),
            Err(Error::Config(_))
        ));
    }

    fn arb_weights() -> impl Strategy<Value = [f64; 3]> {
        (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0).prop_map(|(a, b, c)| {
            let s = a + b + c;
            [a / s, b / s, c / s]
        })
    }

    proptest! {
        #[test]
        fn weights_are_convex(s in proptest::array::uniform5(-10.0f64..10.0)) {
            let w = weno_weights(&s);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn frozen_reconstruction_is_linear(
            u in proptest::collection::vec(-1.0f64..1.0, 16),
            v in proptest::collection::vec(-1.0f64..1.0, 16),
            w in proptest::collection::vec(arb_weights(), 11),
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            periodic in any::<bool>(),
        ) {
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let ru = reconstruct_weno5(&u, &w, Bias::Left);
            let rv = reconstruct_weno5(&v, &w, Bias::Left);
            let rc = reconstruct_weno5(&comb, &w, Bias::Left);
            for f in 0..11 {
                prop_assert!((rc[f] - a * ru[f] - b * rv[f]).abs() < 1e-13);
            }
            // mildly perturbed optimal weights keep the compact system well conditioned
            let wc: Vec<[f64; 3]> = w.iter().map(|x| {
                let y = [0.8 * CRWENO5_OPTIMAL[0] + 0.2 * x[0], 0.8 * CRWENO5_OPTIMAL[1] + 0.2 * x[1], 0.8 * CRWENO5_OPTIMAL[2] + 0.2 * x[2]];
                y
            }).collect();
            let ru = reconstruct_crweno5(&u, &wc, Bias::Right, periodic).unwrap();
            let rv = reconstruct_crweno5(&v, &wc, Bias::Right, periodic).unwrap();
            let rc = reconstruct_crweno5(&comb, &wc, Bias::Right, periodic).unwrap();
            for f in 0..11 {
                prop_assert!((rc[f] - a * ru[f] - b * rv[f]).abs() < 1e-12);
            }
        }
    }
}
