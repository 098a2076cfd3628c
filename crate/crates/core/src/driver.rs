//! Run orchestration behind the command-line subcommands.

use std::path::Path;

use num_complex::Complex64;

use crate::cases::{compute_metrics, operator_spectrum, reference_solution, CaseDefinition, RunMetrics, SpectrumOperator};
use crate::error::{Error, Result};
use crate::integrate::{integrate, RunStats};
use crate::io::{write_snapshot, CsvOut, RunConfig};
use crate::spatial::Discretization;
use crate::state::StateField;
use crate::tableau::{stability_region_scan, tableau, ScanPoint, ScanWindow};

/// Default acoustic CFL of the explicit reference runs.
pub const REFERENCE_CFL: f64 = 0.05;

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn discretization(cfg: &RunConfig, case: &CaseDefinition) -> Result<Discretization> {
    Ok(case.discretization(cfg.scheme()?)?.with_average(cfg.method.average))
}

/// Reference field at the case's final time: exact if known, else a cached RK4 run.
pub fn reference_for(cfg: &RunConfig, case: &CaseDefinition, reference_cfl: f64) -> Result<StateField> {
    match case.exact(case.t_final) {
        Some(f) => Ok(f),
        None => reference_solution(
            case,
            cfg.scheme()?,
            reference_cfl,
            case.t_final,
            Some(&cfg.reference_dir()),
        ),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub field: StateField,
    pub stats: RunStats,
    pub metrics: RunMetrics,
}

/// Integrates the configured case with time step `dt`; metrics against `reference` if given.
pub fn simulate(
    cfg: &RunConfig,
    case: &CaseDefinition,
    dt: f64,
    reference: Option<&StateField>,
    mut observe: impl FnMut(usize, f64, &StateField),
) -> Result<RunOutcome> {
    let disc = discretization(cfg, case)?;
    let tab = tableau(&cfg.method.integrator)?;
    let q0 = case.initial();
    let (field, stats) = integrate(&disc, &q0, case.t_final, dt, &tab, &cfg.solver_config(), &mut observe)?;
    let mut metrics = match reference {
        Some(r) => compute_metrics(case, &field, r, &q0, stats.dt)?,
        None => compute_metrics(case, &field, &field, &q0, stats.dt)?,
    };
    metrics.n_fc = stats.n_fc;
    metrics.n_t = stats.steps;
    Ok(RunOutcome { field, stats, metrics })
}

fn metrics_header(nv: usize) -> Vec<String> {
    let mut h: Vec<String> = ["dt [time]", "sigma_a [-]", "n_t [-]", "n_fc [-]", "gmres_iterations [-]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 0..nv {
        h.push(format!("l2_q{k} [state]"));
    }
    for k in 0..nv {
        h.push(format!("linf_q{k} [state]"));
    }
    h.push("relative_rms [-]".into());
    for k in 0..nv {
        h.push(format!("conservation_q{k} [-]"));
    }
    h
}

fn metrics_row(dt: f64, stats: &RunStats, m: &RunMetrics) -> Vec<String> {
    let mut r = vec![
        fmt(dt),
        fmt(m.sigma_a),
        m.n_t.to_string(),
        m.n_fc.to_string(),
        stats.gmres_iterations.to_string(),
    ];
    r.extend(m.l2.iter().map(|v| fmt(*v)));
    r.extend(m.linf.iter().map(|v| fmt(*v)));
    r.push(fmt(m.relative_rms));
    r.extend(m.conservation.iter().map(|v| fmt(*v)));
    r
}

/// `run`: one simulation with snapshots and a metrics row under the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let case = cfg.case()?;
    let dt = cfg.dt(&case);
    let dir = &cfg.output.dir;
    let hash = cfg.hash();
    let reference = reference_for(cfg, &case, cfg.sweep.reference_cfl.unwrap_or(REFERENCE_CFL))?;
    write_snapshot(&dir.join("snapshot_00000.csv"), &case, &case.initial(), &hash)?;
    let every = cfg.output.snapshot_every;
    let mut snap_err = None;
    let outcome = simulate(cfg, &case, dt, Some(&reference), |k, _, q| {
        if every > 0 && k % every == 0 && snap_err.is_none() {
            if let Err(e) = write_snapshot(&dir.join(format!("snapshot_{k:05}.csv")), &case, q, &hash) {
                snap_err = Some(e);
            }
        }
    });
    if let Some(e) = snap_err {
        return Err(e);
    }
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            // mark the partial output
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("FAILED"), format!("{e}\n"))?;
            return Err(e);
        }
    };
    let _ = std::fs::remove_file(dir.join("FAILED"));
    write_snapshot(&dir.join("final.csv"), &case, &outcome.field, &hash)?;
    let mut out = CsvOut::create(&dir.join("metrics.csv"), &hash, &metrics_header(case.grid.nvar()))?;
    out.row(&metrics_row(outcome.stats.dt, &outcome.stats, &outcome.metrics))?;
    out.finish()?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepStatus {
    Ok,
    BlowUp,
    SolverFailure,
}

impl SweepStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SweepStatus::Ok => "ok",
            SweepStatus::BlowUp => "blow_up",
            SweepStatus::SolverFailure => "solver_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub dt: f64,
    pub status: SweepStatus,
    pub metrics: Option<RunMetrics>,
    pub gmres_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// Least-squares slope of log(error) against log(Δt) over the stable entries.
    pub slope: Option<f64>,
    /// Largest Δt below the first failure, in increasing Δt order.
    pub largest_stable_dt: Option<f64>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs the configured case at every time step of `dts`; errors are measured with
/// the all-component relative RMS.
pub fn sweep_dts(cfg: &RunConfig, case: &CaseDefinition, dts: &[f64], reference: &StateField) -> Result<SweepResult> {
    if dts.len() < 3 {
        return Err(Error::config("a sweep needs at least 3 time steps"));
    }
    let mut sorted = dts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut entries = Vec::with_capacity(sorted.len());
    for &dt in &sorted {
        let entry = match simulate(cfg, case, dt, Some(reference), |_, _, _| {}) {
            Ok(o) => SweepEntry {
                dt: o.stats.dt,
                status: SweepStatus::Ok,
                gmres_iterations: o.stats.gmres_iterations,
                metrics: Some(o.metrics),
            },
            Err(Error::BlowUp { .. }) | Err(Error::InvalidState { .. }) => SweepEntry {
                dt,
                status: SweepStatus::BlowUp,
                metrics: None,
                gmres_iterations: 0,
            },
            Err(Error::SolverDiverged { .. }) | Err(Error::SingularBlock { .. }) | Err(Error::Numerical(_)) => {
                SweepEntry {
                    dt,
                    status: SweepStatus::SolverFailure,
                    metrics: None,
                    gmres_iterations: 0,
                }
            }
            Err(e) => return Err(e),
        };
        entries.push(entry);
    }
    if entries.iter().all(|e| e.status != SweepStatus::Ok) {
        return Err(Error::Numerical("every run in the sweep failed".into()));
    }
    let stable: Vec<&SweepEntry> = entries.iter().take_while(|e| e.status == SweepStatus::Ok).collect();
    let largest_stable_dt = stable.last().map(|e| e.dt);
    let slope = loglog_slope(
        &stable
            .iter()
            .map(|e| (e.dt, e.metrics.as_ref().unwrap().relative_rms))
            .collect::<Vec<_>>(),
    );
    Ok(SweepResult {
        entries,
        slope,
        largest_stable_dt,
    })
}

/// `sweep`: Δt study written to `sweep.csv` and `sweep_summary.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let case = cfg.case()?;
    let dts: Vec<f64> = if !cfg.sweep.cfl.is_empty() {
        cfg.sweep.cfl.iter().map(|c| case.dt_for_cfl(*c)).collect()
    } else {
        cfg.sweep.dt.clone()
    };
    if dts.len() < 3 {
        return Err(Error::config("a sweep needs at least 3 time steps"));
    }
    let reference = reference_for(cfg, &case, cfg.sweep.reference_cfl.unwrap_or(REFERENCE_CFL))?;
    let result = sweep_dts(cfg, &case, &dts, &reference)?;
    let hash = cfg.hash();
    let dir = &cfg.output.dir;
    let nv = case.grid.nvar();
    let mut header = vec!["status".to_string()];
    header.extend(metrics_header(nv));
    let mut out = CsvOut::create(&dir.join("sweep.csv"), &hash, &header)?;
    for e in &result.entries {
        let mut row = vec![e.status.name().to_string()];
        match &e.metrics {
            Some(m) => {
                let stats = RunStats {
                    gmres_iterations: e.gmres_iterations,
                    ..RunStats::default()
                };
                row.extend(metrics_row(e.dt, &stats, m));
            }
            None => {
                row.push(fmt(e.dt));
                row.push(fmt(case.acoustic_cfl(e.dt)));
                row.extend(std::iter::repeat_n(String::new(), header.len() - 3));
            }
        }
        out.row(&row)?;
    }
    out.finish()?;
    let mut s = CsvOut::create(
        &dir.join("sweep_summary.csv"),
        &hash,
        &["slope [-]".into(), "largest_stable_dt [time]".into(), "largest_stable_sigma_a [-]".into()],
    )?;
    s.row(&[
        result.slope.map(fmt).unwrap_or_default(),
        result.largest_stable_dt.map(fmt).unwrap_or_default(),
        result.largest_stable_dt.map(|d| fmt(case.acoustic_cfl(d))).unwrap_or_default(),
    ])?;
    s.finish()?;
    Ok(result)
}

/// `spectrum`: eigenvalues of the configured operator at the initial state.
pub fn spectrum(cfg: &RunConfig) -> Result<Vec<Complex64>> {
    let case = cfg.case()?;
    let disc = discretization(cfg, &case)?;
    let which = SpectrumOperator::parse(&cfg.spectrum.operator)?;
    let ev = operator_spectrum(&disc, &case.initial(), which, cfg.spectrum.include_source)?;
    let mut out = CsvOut::create(
        &cfg.output.dir.join("spectrum.csv"),
        &cfg.hash(),
        &["re [1/time]".into(), "im [1/time]".into()],
    )?;
    for z in &ev {
        out.row(&[fmt(z.re), fmt(z.im)])?;
    }
    out.finish()?;
    Ok(ev)
}

/// `stability`: scan of `max |R|` over the configured window.
pub fn stability(cfg: &RunConfig) -> Result<Vec<ScanPoint>> {
    let tab = tableau(&cfg.method.integrator)?;
    let st = &cfg.stability;
    if st.n_re < 2 || st.n_im < 2 || !(st.re.1 > st.re.0) || !(st.im.1 > st.im.0) {
        return Err(Error::config("stability window needs increasing ranges and at least 2 points per axis"));
    }
    let mut stiff: Vec<Complex64> = st.stiff.iter().map(|(r, i)| Complex64::new(*r, *i)).collect();
    if st.stiff_from_spectrum {
        let case = cfg.case()?;
        let disc = discretization(cfg, &case)?;
        let dt = cfg.dt(&case);
        let ev = operator_spectrum(&disc, &case.initial(), SpectrumOperator::Fast, cfg.spectrum.include_source)?;
        stiff.extend(ev.into_iter().map(|z| z * dt));
    }
    let window = ScanWindow {
        re: st.re,
        im: st.im,
        n_re: st.n_re,
        n_im: st.n_im,
    };
    let scan = stability_region_scan(&tab, &stiff, &window);
    let mut out = CsvOut::create(
        &cfg.output.dir.join("stability.csv"),
        &cfg.hash(),
        &["re_z [-]".into(), "im_z [-]".into(), "max_abs_r [-]".into()],
    )?;
    for p in &scan {
        out.row(&[fmt(p.z.re), fmt(p.z.im), fmt(p.max_abs)])?;
    }
    out.finish()?;
    Ok(scan)
}

/// `compare`: whether two CSV files agree within `tol`.
pub fn compare(a: &Path, b: &Path, tol: f64) -> Result<crate::io::Comparison> {
    let ta = crate::io::read_table(a)?;
    let tb = crate::io::read_table(b)?;
    crate::io::compare_tables(&ta, &tb, tol)
}
