//! Benchmark problems, error and conservation metrics, and operator spectra.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrate::{integrate, SolverConfig};
use crate::physics::{exner_theta_of, source_jacobian};
use crate::spatial::{Discretization, Mode, Scheme};
use crate::state::{BoundarySpec, Grid, PhysConstants, Primitive, StateField};
use crate::tableau::tableau;

/// Largest dense Jacobian the spectrum diagnostic will assemble.
pub const SPECTRUM_MAX_UNKNOWNS: usize = 2000;

const BRUNT_VAISALA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaseKind {
    DensityWave { mach: f64 },
    IsentropicVortex,
    InertiaGravityWave,
    RisingBubble,
}

#[derive(Debug, Clone)]
pub struct CaseDefinition {
    pub name: &'static str,
    pub kind: CaseKind,
    pub grid: Grid,
    pub bc: BoundarySpec,
    pub phys: PhysConstants,
    pub t_final: f64,
    /// Reference sound speed for the acoustic CFL.
    pub a_ref: f64,
    /// Hydrostatic base state for cases with gravity.
    pub reference: Option<StateField>,
}

/// `ρ = 1 + 0.1 sin 2π(x − u∞t)`, `u = M∞`, `p = 1/γ` on the periodic unit interval.
pub fn case_density_wave(mach: f64, n: usize) -> Result<CaseDefinition> {
    if !(mach > 0.0 && mach.is_finite()) {
        return Err(Error::config("density wave Mach number must be positive"));
    }
    Ok(CaseDefinition {
        name: "density_wave",
        kind: CaseKind::DensityWave { mach },
        grid: Grid::one_d(n, 0.0, 1.0)?,
        bc: BoundarySpec::periodic(),
        phys: PhysConstants::nondimensional(),
        t_final: 1.0 / mach,
        a_ref: 1.0,
        reference: None,
    })
}

pub fn case_isentropic_vortex(n: usize) -> Result<CaseDefinition> {
    let phys = PhysConstants::nondimensional();
    Ok(CaseDefinition {
        name: "isentropic_vortex",
        kind: CaseKind::IsentropicVortex,
        grid: Grid::two_d(n, n, (0.0, 10.0), (0.0, 10.0))?,
        bc: BoundarySpec::periodic(),
        phys,
        t_final: 100.0,
        a_ref: phys.gamma.sqrt(),
        reference: None,
    })
}

pub fn case_inertia_gravity_wave(nx: usize, ny: usize) -> Result<CaseDefinition> {
    let phys = PhysConstants::atmosphere(300.0);
    let grid = Grid::two_d(nx, ny, (0.0, 300_000.0), (0.0, 10_000.0))?;
    let mut case = CaseDefinition {
        name: "inertia_gravity_wave",
        kind: CaseKind::InertiaGravityWave,
        grid,
        bc: BoundarySpec::channel(),
        phys,
        t_final: 3000.0,
        a_ref: (phys.gamma * phys.gas_constant * phys.t_ref).sqrt(),
        reference: None,
    };
    case.reference = Some(case.base_state());
    Ok(case)
}

pub fn case_rising_thermal_bubble(n: usize) -> Result<CaseDefinition> {
    let phys = PhysConstants::atmosphere(300.0);
    let grid = Grid::two_d(n, n, (0.0, 1000.0), (0.0, 1000.0))?;
    let mut case = CaseDefinition {
        name: "rising_thermal_bubble",
        kind: CaseKind::RisingBubble,
        grid,
        bc: BoundarySpec::walls(),
        phys,
        t_final: 400.0,
        a_ref: (phys.gamma * phys.gas_constant * phys.t_ref).sqrt(),
        reference: None,
    };
    case.reference = Some(case.base_state());
    Ok(case)
}

/// Case by name; `nx`, `ny` are ignored where they do not apply.
pub fn case_by_name(name: &str, nx: usize, ny: usize, mach: f64) -> Result<CaseDefinition> {
    match name.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
        "density_wave" => case_density_wave(mach, nx),
        "isentropic_vortex" | "vortex" => case_isentropic_vortex(nx),
        "inertia_gravity_wave" | "ig_wave" => case_inertia_gravity_wave(nx, ny),
        "rising_thermal_bubble" | "bubble" => case_rising_thermal_bubble(nx),
        _ => Err(Error::config(format!("unknown case '{name}'"))),
    }
}

/// Vortex primitives for a vortex centred at `(xc, yc)`.
fn vortex_at(x: f64, y: f64, xc: f64, yc: f64, gamma: f64) -> Primitive {
    let b = 0.5;
    let (dx, dy) = (x - xc, y - yc);
    let r2 = dx * dx + dy * dy;
    let rho = (1.0 - (gamma - 1.0) * b * b / (8.0 * gamma * PI * PI) * (1.0 - r2).exp()).powf(1.0 / (gamma - 1.0));
    let amp = b / (2.0 * PI) * (0.5 * (1.0 - r2)).exp();
    Primitive {
        rho,
        vel: [0.1 - amp * dy, amp * dx],
        p: rho.powf(gamma),
    }
}

impl CaseDefinition {
    pub fn discretization(&self, scheme: Scheme) -> Result<Discretization> {
        let disc = Discretization::new(self.grid, self.bc, self.phys, scheme)?;
        match &self.reference {
            Some(r) => disc.with_reference(r.clone()),
            None => Ok(disc),
        }
    }

    /// Exner pressure and base potential temperature of the stratified atmosphere at height `y`.
    fn base_exner_theta(&self, y: f64) -> (f64, f64) {
        let c = &self.phys;
        let (g, t0) = (c.gravity[1], c.t_ref);
        let k = (c.gamma - 1.0) / c.gamma;
        match self.kind {
            CaseKind::InertiaGravityWave => {
                let n2 = BRUNT_VAISALA * BRUNT_VAISALA;
                let pi = 1.0 + k * g * g / (c.gas_constant * t0 * n2) * ((-n2 / g * y).exp() - 1.0);
                (pi, t0 * (n2 / g * y).exp())
            }
            _ => (1.0 - k * g * y / (c.gas_constant * t0), t0),
        }
    }

    /// Base potential temperature, for cases with a stratified atmosphere.
    pub fn base_theta(&self, y: f64) -> Option<f64> {
        match self.kind {
            CaseKind::InertiaGravityWave | CaseKind::RisingBubble => Some(self.base_exner_theta(y).1),
            _ => None,
        }
    }

    fn atmosphere_point(&self, y: f64, dtheta: f64, u: f64) -> Primitive {
        let c = &self.phys;
        let (pi, theta) = self.base_exner_theta(y);
        let p = c.p_ref * pi.powf(c.gamma / (c.gamma - 1.0));
        Primitive {
            rho: p / (c.gas_constant * (theta + dtheta) * pi),
            vel: [u, 0.0],
            p,
        }
    }

    fn base_state(&self) -> StateField {
        let u = if self.kind == CaseKind::InertiaGravityWave { 20.0 } else { 0.0 };
        StateField::from_primitive_fn(self.grid, &self.phys, |_, y| self.atmosphere_point(y, 0.0, u))
    }

    /// Initial potential temperature perturbation for the atmospheric cases.
    pub fn initial_delta_theta(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            CaseKind::InertiaGravityWave => {
                let (tc, hc, ac, xc) = (0.01, 10_000.0, 5_000.0, 100_000.0);
                tc * (PI * y / hc).sin() / (1.0 + ((x - xc) / ac).powi(2))
            }
            CaseKind::RisingBubble => {
                let (tc, rc) = (0.5, 250.0);
                let r = ((x - 500.0).powi(2) + (y - 350.0).powi(2)).sqrt();
                if r > rc {
                    0.0
                } else {
                    0.5 * tc * (1.0 + (PI * r / rc).cos())
                }
            }
            _ => 0.0,
        }
    }

    pub fn initial(&self) -> StateField {
        match self.kind {
            CaseKind::DensityWave { .. } | CaseKind::IsentropicVortex => self.exact(0.0).unwrap(),
            CaseKind::InertiaGravityWave => StateField::from_primitive_fn(self.grid, &self.phys, |x, y| {
                self.atmosphere_point(y, self.initial_delta_theta(x, y), 20.0)
            }),
            CaseKind::RisingBubble => StateField::from_primitive_fn(self.grid, &self.phys, |x, y| {
                self.atmosphere_point(y, self.initial_delta_theta(x, y), 0.0)
            }),
        }
    }

    /// Exact solution at time `t`, where one is known.
    pub fn exact(&self, t: f64) -> Option<StateField> {
        let c = self.phys;
        match self.kind {
            CaseKind::DensityWave { mach } => Some(StateField::from_primitive_fn(self.grid, &c, |x, _| Primitive {
                rho: 1.0 + 0.1 * (2.0 * PI * (x - mach * t)).sin(),
                vel: [mach, 0.0],
                p: 1.0 / c.gamma,
            })),
            CaseKind::IsentropicVortex => {
                let shift = (0.1 * t).rem_euclid(10.0);
                Some(StateField::from_primitive_fn(self.grid, &c, |x, y| {
                    // nearest periodic image of the translated centre
                    let mut xc = 5.0 + shift;
                    if x - xc > 5.0 {
                        xc += 10.0;
                    } else if xc - x > 5.0 {
                        xc -= 10.0;
                    }
                    vortex_at(x, y, xc, 5.0, c.gamma)
                }))
            }
            _ => None,
        }
    }

    /// Acoustic CFL `a_ref Δt / min(Δx, Δy)`.
    pub fn acoustic_cfl(&self, dt: f64) -> f64 {
        self.a_ref * dt / self.grid.min_spacing()
    }

    /// Time step giving acoustic CFL `sigma`.
    pub fn dt_for_cfl(&self, sigma: f64) -> f64 {
        sigma * self.grid.min_spacing() / self.a_ref
    }

    /// `θ − θ₀(y)` at every interior point, row-major in `(j, i)`.
    pub fn delta_theta(&self, field: &StateField) -> Result<Vec<f64>> {
        let g = self.grid;
        let mut out = Vec::with_capacity(g.n_interior());
        for j in 0..g.ny {
            for i in 0..g.nx {
                let prim = field.primitive(i, j, &self.phys)?;
                let (_, theta) = exner_theta_of(&prim, &self.phys);
                out.push(theta - self.base_theta(g.y(j)).unwrap_or(0.0));
            }
        }
        Ok(out)
    }
}

/// Error and conservation metrics of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    /// Per-component volume-weighted RMS error.
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    /// All-component RMS error, each component divided by its reference scale.
    pub relative_rms: f64,
    /// Per-component conservation error.
    pub conservation: Vec<f64>,
    pub sigma_a: f64,
    pub n_fc: usize,
    pub n_t: usize,
}

/// Per-component scales: `rms(ρ)`, `rms(ρ)·a_ref` for momentum and `rms(e)`.
fn component_scales(reference: &StateField, a_ref: f64) -> Vec<f64> {
    let nv = reference.nvar();
    let v = reference.interior_vec();
    let n = v.len() / nv;
    let rms = |k: usize| ((0..n).map(|p| v[p * nv + k].powi(2)).sum::<f64>() / n as f64).sqrt();
    let rho = rms(0);
    (0..nv)
        .map(|k| {
            if k == 0 {
                rho
            } else if k == nv - 1 {
                rms(k)
            } else {
                rho * a_ref
            }
        })
        .collect()
}

/// Signed integrals of each component, normalized by `|Q̄(0)|`, or by
/// `∫|Q| dV` when the initial integral vanishes.
pub fn conservation_errors(initial: &StateField, current: &StateField) -> Vec<f64> {
    let i0 = initial.integrals();
    let i1 = current.integrals();
    let g = initial.grid;
    let dv = g.cell_volume();
    (0..initial.nvar())
        .map(|k| {
            let abs: f64 = initial.interior_vec().iter().skip(k).step_by(initial.nvar()).map(|v| v.abs() * dv).sum();
            let norm = if i0[k].abs() > 1e-12 * abs { i0[k].abs() } else { abs };
            if norm == 0.0 {
                i1[k] - i0[k]
            } else {
                (i1[k] - i0[k]) / norm
            }
        })
        .collect()
}

/// Metrics of `field` against `reference`, with conservation measured from `initial`.
pub fn compute_metrics(
    case: &CaseDefinition,
    field: &StateField,
    reference: &StateField,
    initial: &StateField,
    dt: f64,
) -> Result<RunMetrics> {
    if field.grid != reference.grid || field.grid != initial.grid || field.grid != case.grid {
        return Err(Error::config("run and reference grids differ"));
    }
    let nv = field.nvar();
    let a = field.interior_vec();
    let b = reference.interior_vec();
    let n = a.len() / nv;
    let scales = component_scales(reference, case.a_ref);
    let mut l2 = vec![0.0; nv];
    let mut linf = vec![0.0f64; nv];
    for p in 0..n {
        for k in 0..nv {
            let e = a[p * nv + k] - b[p * nv + k];
            l2[k] += e * e;
            linf[k] = linf[k].max(e.abs());
        }
    }
    let l2: Vec<f64> = l2.iter().map(|s| (s / n as f64).sqrt()).collect();
    let relative_rms = (l2
        .iter()
        .zip(&scales)
        .map(|(e, s)| if *s > 0.0 { (e / s).powi(2) } else { e * e })
        .sum::<f64>()
        / nv as f64)
        .sqrt();
    Ok(RunMetrics {
        l2,
        linf,
        relative_rms,
        conservation: conservation_errors(initial, field),
        sigma_a: case.acoustic_cfl(dt),
        n_fc: 0,
        n_t: 0,
    })
}

/// Which operator a spectrum is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumOperator {
    Total,
    Fast,
    Slow,
}

impl SpectrumOperator {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "total" => Ok(SpectrumOperator::Total),
            "fast" => Ok(SpectrumOperator::Fast),
            "slow" => Ok(SpectrumOperator::Slow),
            _ => Err(Error::config(format!("unknown operator '{s}' (expected total, fast or slow)"))),
        }
    }
}

/// Dense Jacobian of the chosen operator at `q` by central differences,
/// with the nonlinear weights frozen at `q`.
pub fn operator_jacobian(
    disc: &Discretization,
    q: &StateField,
    which: SpectrumOperator,
    include_source: bool,
) -> Result<DMatrix<f64>> {
    let nv = disc.nvar();
    let n = disc.grid.n_interior() * nv;
    if n > SPECTRUM_MAX_UNKNOWNS {
        return Err(Error::config(format!(
            "spectrum needs a dense {n}x{n} Jacobian; the limit is {SPECTRUM_MAX_UNKNOWNS} unknowns"
        )));
    }
    let frozen = disc.freeze(q, 0)?;
    let cache = disc.fast_cache(q)?;
    let mode = match which {
        SpectrumOperator::Total => Mode::Total,
        SpectrumOperator::Fast => Mode::Fast,
        SpectrumOperator::Slow => Mode::Slow,
    };
    let base = q.interior_vec();
    let eval = |v: &[f64]| -> Result<Vec<f64>> {
        let f = StateField::from_interior(disc.grid, v);
        Ok(disc.rhs(&f, mode, &frozen, Some(&cache))?.interior_vec())
    };
    let mut jac = DMatrix::zeros(n, n);
    let mut v = base.clone();
    for c in 0..n {
        let h = 1e-6 * base[c].abs().max(1e-3 * base.iter().map(|x| x.abs()).fold(0.0, f64::max));
        v[c] = base[c] + h;
        let fp = eval(&v)?;
        v[c] = base[c] - h;
        let fm = eval(&v)?;
        v[c] = base[c];
        for r in 0..n {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    if include_source && disc.phys.has_gravity() && which != SpectrumOperator::Slow {
        let s = source_jacobian(nv, disc.phys.gravity);
        for p in 0..n / nv {
            for r in 0..nv {
                for c in 0..nv {
                    jac[(p * nv + r, p * nv + c)] += s[r][c];
                }
            }
        }
    }
    Ok(jac)
}

/// Eigenvalues of a dense real matrix, sorted by magnitude.
pub fn eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("eigenvalue QR iteration did not converge".into()))?;
    let mut ev: Vec<Complex64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.re.total_cmp(&b.re)).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Eigenvalues of the chosen operator's Jacobian at `q`.
pub fn operator_spectrum(
    disc: &Discretization,
    q: &StateField,
    which: SpectrumOperator,
    include_source: bool,
) -> Result<Vec<Complex64>> {
    eigenvalues(operator_jacobian(disc, q, which, include_source)?)
}

/// Reference solution by explicit RK4 at acoustic CFL `sigma`, cached under `dir`.
pub fn reference_solution(
    case: &CaseDefinition,
    scheme: Scheme,
    sigma: f64,
    t_final: f64,
    dir: Option<&Path>,
) -> Result<StateField> {
    let dt = case.dt_for_cfl(sigma);
    let key = format!(
        "{}_{}x{}_{}_{}_{:x}_{:x}",
        case.name,
        case.grid.nx,
        case.grid.ny,
        scheme.name(),
        match case.kind {
            CaseKind::DensityWave { mach } => format!("{mach}"),
            _ => "0".into(),
        },
        dt.to_bits(),
        t_final.to_bits()
    );
    let path = dir.map(|d| d.join(format!("{key}.csv")));
    if let Some(p) = &path {
        if p.exists() {
            if let Ok(f) = crate::io::read_state_csv(p, case.grid) {
                return Ok(f);
            }
        }
    }
    let disc = case.discretization(scheme)?;
    let tab = tableau("RK4")?;
    let (field, _) = integrate(&disc, &case.initial(), t_final, dt, &tab, &SolverConfig::default(), |_, _, _| {})?;
    if let Some(p) = &path {
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        crate::io::write_state_csv(p, &field)?;
    }
    Ok(field)
}
