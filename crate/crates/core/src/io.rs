//! Run configuration and CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cases::{case_by_name, CaseDefinition, CaseKind};
use crate::error::{Error, Result};
use crate::integrate::SolverConfig;
use crate::linsolve::{GmresConfig, PrecondDissipation, PrecondKind};
use crate::physics::exner_theta_of;
use crate::spatial::{InterfaceAverage, Scheme};
use crate::state::{Grid, StateField};
use crate::tableau::tableau;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub name: String,
    pub nx: usize,
    #[serde(default = "default_ny")]
    pub ny: usize,
    #[serde(default = "default_mach")]
    pub mach: f64,
    /// Overrides the case's final time.
    #[serde(default)]
    pub t_final: Option<f64>,
}

fn default_ny() -> usize {
    1
}

fn default_mach() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub scheme: String,
    pub integrator: String,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Acoustic CFL target, used instead of `dt`.
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default)]
    pub average: InterfaceAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub restart: usize,
    pub max_iter: usize,
    pub preconditioner: PrecondKind,
    pub dissipation: PrecondDissipation,
}

impl Default for SolverSection {
    fn default() -> Self {
        let g = GmresConfig::default();
        SolverSection {
            tol_abs: g.tol_abs,
            tol_rel: g.tol_rel,
            restart: g.restart,
            max_iter: g.max_iter,
            preconditioner: PrecondKind::default(),
            dissipation: PrecondDissipation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write a field snapshot every this many steps (0: only initial and final).
    pub snapshot_every: usize,
    /// Directory for cached reference solutions; defaults to `<dir>/reference`.
    pub reference_dir: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("output"),
            snapshot_every: 0,
            reference_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub dt: Vec<f64>,
    pub cfl: Vec<f64>,
    /// Acoustic CFL of the explicit RK4 reference for cases without an exact solution.
    pub reference_cfl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub operator: String,
    pub include_source: bool,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            operator: "total".into(),
            include_source: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
    /// Stiff values μΔt as `[re, im]` pairs.
    pub stiff: Vec<(f64, f64)>,
    /// Adds the fast-operator spectrum of the case, scaled by Δt, to the stiff set.
    pub stiff_from_spectrum: bool,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            re: (-4.0, 1.0),
            im: (-4.0, 4.0),
            n_re: 101,
            n_im: 161,
            stiff: Vec::new(),
            stiff_from_spectrum: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseSection,
    pub method: MethodSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub stability: StabilitySection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        Scheme::parse(&self.method.scheme)?;
        tableau(&self.method.integrator)?;
        match (self.method.dt, self.method.cfl) {
            (Some(v), None) | (None, Some(v)) if v > 0.0 && v.is_finite() => {}
            (Some(_), Some(_)) => return Err(Error::config("give exactly one of dt and cfl")),
            (None, None) => return Err(Error::config("one of dt and cfl is required")),
            _ => return Err(Error::config("dt or cfl must be positive")),
        }
        if !self.sweep.dt.is_empty() && !self.sweep.cfl.is_empty() {
            return Err(Error::config("sweep takes a dt list or a cfl list, not both"));
        }
        if let Some(t) = self.case.t_final {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("t_final must be positive"));
            }
        }
        self.solver_config().gmres.validate()?;
        self.case()?;
        Ok(())
    }

    pub fn case(&self) -> Result<CaseDefinition> {
        let mut case = case_by_name(&self.case.name, self.case.nx, self.case.ny, self.case.mach)?;
        if let Some(t) = self.case.t_final {
            case.t_final = t;
        }
        Ok(case)
    }

    pub fn scheme(&self) -> Result<Scheme> {
        Scheme::parse(&self.method.scheme)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            gmres: GmresConfig {
                tol_abs: s.tol_abs,
                tol_rel: s.tol_rel,
                restart: s.restart,
                max_iter: s.max_iter,
            },
            preconditioner: s.preconditioner,
            dissipation: s.dissipation,
        }
    }

    /// Time step from `dt` or the acoustic CFL target.
    pub fn dt(&self, case: &CaseDefinition) -> f64 {
        match (self.method.dt, self.method.cfl) {
            (Some(dt), _) => dt,
            (None, Some(cfl)) => case.dt_for_cfl(cfl),
            (None, None) => unreachable!("validated config"),
        }
    }

    pub fn reference_dir(&self) -> PathBuf {
        self.output
            .reference_dir
            .clone()
            .unwrap_or_else(|| self.output.dir.join("reference"))
    }

    /// SHA-256 of the normalized configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// CSV writer that starts with a config-hash comment line.
pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, hash: &str, header: &[String]) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "# config_sha256 {hash}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header).map_err(csv_err)?;
        Ok(CsvOut { inner })
    }

    pub fn row(&mut self, values: &[String]) -> Result<()> {
        self.inner.write_record(values).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::config(format!("csv: {other:?}")),
    }
}

fn units(case: &CaseDefinition) -> [&'static str; 6] {
    if matches!(case.kind, CaseKind::DensityWave { .. } | CaseKind::IsentropicVortex) {
        ["-", "-", "-", "-", "-", "-"]
    } else {
        ["m", "kg/m^3", "m/s", "Pa", "K", "K"]
    }
}

/// Field snapshot: `x[, y], rho, u[, v], p, theta, dtheta` per interior point.
pub fn write_snapshot(path: &Path, case: &CaseDefinition, field: &StateField, hash: &str) -> Result<()> {
    let g = field.grid;
    let [len, dens, vel, pres, temp, dtemp] = units(case);
    let mut header = vec![format!("x [{len}]")];
    if g.dims == 2 {
        header.push(format!("y [{len}]"));
    }
    header.push(format!("rho [{dens}]"));
    header.push(format!("u [{vel}]"));
    if g.dims == 2 {
        header.push(format!("v [{vel}]"));
    }
    header.push(format!("p [{pres}]"));
    header.push(format!("theta [{temp}]"));
    header.push(format!("dtheta [{dtemp}]"));
    let mut out = CsvOut::create(path, hash, &header)?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let prim = field.primitive(i, j, &case.phys)?;
            let (_, theta) = exner_theta_of(&prim, &case.phys);
            let mut row = vec![fmt(g.x(i))];
            if g.dims == 2 {
                row.push(fmt(g.y(j)));
            }
            row.push(fmt(prim.rho));
            row.push(fmt(prim.vel[0]));
            if g.dims == 2 {
                row.push(fmt(prim.vel[1]));
            }
            row.push(fmt(prim.p));
            row.push(fmt(theta));
            row.push(fmt(theta - case.base_theta(g.y(j)).unwrap_or(theta)));
            out.row(&row)?;
        }
    }
    out.finish()
}

/// Conserved interior values, one point per row, bit-exact round trip.
pub fn write_state_csv(path: &Path, field: &StateField) -> Result<()> {
    let g = field.grid;
    let header: Vec<String> = (0..field.nvar()).map(|k| format!("q{k}")).collect();
    let mut out = CsvOut::create(path, &format!("grid {}x{}", g.nx, g.ny), &header)?;
    let v = field.interior_vec();
    for p in v.chunks(field.nvar()) {
        out.row(&p.iter().map(|x| fmt(*x)).collect::<Vec<_>>())?;
    }
    out.finish()
}

pub fn read_state_csv(path: &Path, grid: Grid) -> Result<StateField> {
    let table = read_table(path)?;
    let nv = grid.nvar();
    if table.header.len() != nv || table.rows.len() != grid.n_interior() {
        return Err(Error::config(format!("{} does not match the grid", path.display())));
    }
    let v: Vec<f64> = table.rows.into_iter().flatten().collect();
    Ok(StateField::from_interior(grid, &v))
}

/// A numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("{}: non-numeric value '{s}'", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Result of comparing two tables column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Largest absolute difference per column.
    pub max_abs: Vec<f64>,
    pub worst: f64,
    pub within: bool,
}

/// Compares two tables with identical headers; `tol` bounds `|a − b| / (1 + |b|)`.
pub fn compare_tables(a: &Table, b: &Table, tol: f64) -> Result<Comparison> {
    if a.header != b.header {
        return Err(Error::config("files have different columns"));
    }
    if a.rows.len() != b.rows.len() {
        return Err(Error::config("files have different row counts"));
    }
    let mut max_abs = vec![0.0f64; a.header.len()];
    let mut worst = 0.0f64;
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        if ra.len() != max_abs.len() || rb.len() != max_abs.len() {
            return Err(Error::config("ragged rows"));
        }
        for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
            let d = (x - y).abs();
            max_abs[k] = max_abs[k].max(d);
            worst = worst.max(d / (1.0 + y.abs()));
        }
    }
    Ok(Comparison {
        max_abs,
        worst,
        within: worst <= tol,
    })
}
