//! Explicit Runge-Kutta and linearized IMEX additive Runge-Kutta steppers.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{
    build_global_preconditioner, build_preconditioner, gmres_solve, GmresConfig, IdentityPreconditioner, PrecondDissipation,
    PrecondKind, Preconditioner, StageOperator,
};
use crate::spatial::Discretization;
use crate::state::StateField;
use crate::tableau::TableauPair;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gmres: GmresConfig,
    pub preconditioner: PrecondKind,
    pub dissipation: PrecondDissipation,
}

impl SolverConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        SolverConfig {
            gmres: GmresConfig {
                tol_abs: tol,
                tol_rel: tol,
                ..GmresConfig::default()
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// GMRES iterations per stage; zero for explicit stages.
    pub stage_iterations: Vec<usize>,
    /// Right-hand-side evaluations (one per stage).
    pub rhs_evaluations: usize,
    /// Stage-operator applications, including residual evaluations.
    pub operator_applications: usize,
    /// Function calls: stages plus GMRES iterations.
    pub n_fc: usize,
    pub wall_time: Duration,
}

impl StepRecord {
    /// The record without its wall time.
    pub fn counters(&self) -> (Vec<usize>, usize, usize, usize) {
        (
            self.stage_iterations.clone(),
            self.rhs_evaluations,
            self.operator_applications,
            self.n_fc,
        )
    }
}

fn blow_up(stage: usize, err: Error) -> Error {
    match err {
        Error::InvalidState { .. } | Error::TridiagonalBreakdown { .. } | Error::Numerical(_) => Error::BlowUp {
            stage,
            cause: err.to_string(),
        },
        other => other,
    }
}

fn check_finite(field: &StateField, stage: usize) -> Result<()> {
    if field.raw().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp {
            stage,
            cause: "non-finite values".into(),
        })
    }
}

/// One explicit Runge-Kutta step of `dQ/dt = F̂(Q) + S Q + c₀`.
pub fn step_explicit(
    disc: &Discretization,
    q: &StateField,
    dt: f64,
    tab: &TableauPair,
) -> Result<(StateField, StepRecord)> {
    if tab.is_imex() {
        return Err(Error::config(format!("{} is not an explicit method", tab.name)));
    }
    let start = Instant::now();
    let s = tab.stages();
    let mut k: Vec<StateField> = Vec::with_capacity(s);
    for i in 0..s {
        let mut stage = q.clone();
        for (j, kj) in k.iter().enumerate() {
            if tab.a[i][j] != 0.0 {
                stage.axpy(dt * tab.a[i][j], kj);
            }
        }
        check_finite(&stage, i + 1)?;
        k.push(disc.tendency(&stage).map_err(|e| blow_up(i + 1, e))?);
    }
    let mut out = q.clone();
    for (bi, ki) in tab.b.iter().zip(&k) {
        out.axpy(dt * bi, ki);
    }
    check_finite(&out, s)?;
    out.validate(&disc.phys).map_err(|e| blow_up(s, e))?;
    Ok((
        out,
        StepRecord {
            stage_iterations: vec![0; s],
            rhs_evaluations: s,
            operator_applications: 0,
            n_fc: s,
            wall_time: start.elapsed(),
        },
    ))
}

/// One linearized ARK step: slow flux explicit, fast flux and gravity implicit.
///
/// The fast Jacobian is frozen at `Qⁿ`. Stage `i` freezes the WENO weights at
/// the previous stage value and solves
/// `(I − σ(F̂_F + S)) Q⁽ⁱ⁾ = Qⁿ + Δt Σ_{j<i}(a_ij F̂_S,j + ã_ij G_j) + σ c₀`
/// with `σ = Δt ã_ii`.
pub fn step_ark(
    disc: &Discretization,
    q: &StateField,
    dt: f64,
    tab: &TableauPair,
    solver: &SolverConfig,
) -> Result<(StateField, StepRecord)> {
    if !tab.is_imex() {
        return Err(Error::config(format!("{} is not an IMEX method", tab.name)));
    }
    let start = Instant::now();
    let s = tab.stages();
    let grid = disc.grid;
    let cache = disc.fast_cache(q).map_err(|e| blow_up(1, e))?;
    let qn = q.interior_vec();
    let mut slow: Vec<StateField> = Vec::with_capacity(s);
    let mut imp: Vec<StateField> = Vec::with_capacity(s);
    let mut stage_iterations = vec![0; s];
    let mut applications = 0;
    let mut current = qn.clone();
    let mut frozen = disc.freeze(q, 0).map_err(|e| blow_up(1, e))?;
    let mut pcs: Vec<(f64, Box<dyn Preconditioner>)> = Vec::new();
    for i in 0..s {
        if i > 1 {
            let prev = StateField::from_interior(grid, &current);
            frozen = disc.freeze(&prev, i).map_err(|e| blow_up(i + 1, e))?;
        }
        let c0 = disc.balance_correction(&frozen)?;
        let sigma = dt * tab.a_imp[i][i];
        if i > 0 {
            let mut b = qn.clone();
            for j in 0..i {
                let (a, at) = (tab.a[i][j], tab.a_imp[i][j]);
                if a != 0.0 {
                    for (bk, fk) in b.iter_mut().zip(slow[j].interior_vec()) {
                        *bk += dt * a * fk;
                    }
                }
                if at != 0.0 {
                    for (bk, gk) in b.iter_mut().zip(imp[j].interior_vec()) {
                        *bk += dt * at * gk;
                    }
                }
            }
            if sigma == 0.0 {
                current = b;
            } else {
                if let Some(c0) = &c0 {
                    for (bk, ck) in b.iter_mut().zip(c0.interior_vec()) {
                        *bk += sigma * ck;
                    }
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp {
                        stage: i + 1,
                        cause: "non-finite stage right-hand side".into(),
                    });
                }
                let op = StageOperator {
                    disc,
                    frozen: &frozen,
                    cache: &cache,
                    sigma,
                };
                let report = match solver.preconditioner {
                    PrecondKind::None => gmres_solve(&op, &IdentityPreconditioner, &b, &mut current, &solver.gmres)?,
                    kind => {
                        let pos = pcs.iter().position(|(sg, _)| *sg == sigma);
                        let pos = match pos {
                            Some(p) => p,
                            None => {
                                let pc: Box<dyn Preconditioner> = if kind == PrecondKind::Global {
                                    Box::new(build_global_preconditioner(disc, &cache, sigma, solver.dissipation).map_err(|e| blow_up(i + 1, e))?)
                                } else {
                                    Box::new(build_preconditioner(disc, &cache, sigma, solver.dissipation).map_err(|e| blow_up(i + 1, e))?)
                                };
                                pcs.push((sigma, pc));
                                pcs.len() - 1
                            }
                        };
                        let pc = pcs[pos].1.as_ref();
                        gmres_solve(&op, pc, &b, &mut current, &solver.gmres)?
                    }
                };
                stage_iterations[i] = report.iterations;
                applications += report.operator_applications;
            }
        }
        let stage = StateField::from_interior(grid, &current);
        check_finite(&stage, i + 1)?;
        let (total, fast) = disc
            .total_and_fast(&stage, &frozen, &cache)
            .map_err(|e| blow_up(i + 1, e))?;
        let mut fs = total;
        fs.axpy(-1.0, &fast);
        let mut g = fast;
        if disc.phys.has_gravity() {
            g.axpy(1.0, &disc.source_term(&stage));
            if let Some(c0) = &c0 {
                g.axpy(1.0, c0);
            }
        }
        slow.push(fs);
        imp.push(g);
    }
    let mut out = q.clone();
    for i in 0..s {
        if tab.b[i] != 0.0 {
            out.axpy(dt * tab.b[i], &slow[i]);
        }
        if tab.b_imp[i] != 0.0 {
            out.axpy(dt * tab.b_imp[i], &imp[i]);
        }
    }
    check_finite(&out, s)?;
    out.validate(&disc.phys).map_err(|e| blow_up(s, e))?;
    let iters: usize = stage_iterations.iter().sum();
    Ok((
        out,
        StepRecord {
            stage_iterations,
            rhs_evaluations: s,
            operator_applications: applications,
            n_fc: s + iters,
            wall_time: start.elapsed(),
        },
    ))
}

/// One step with the stepper matching the tableau kind.
pub fn step(
    disc: &Discretization,
    q: &StateField,
    dt: f64,
    tab: &TableauPair,
    solver: &SolverConfig,
) -> Result<(StateField, StepRecord)> {
    if tab.is_imex() {
        step_ark(disc, q, dt, tab, solver)
    } else {
        step_explicit(disc, q, dt, tab)
    }
}

/// Aggregate counters of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub steps: usize,
    /// Time step actually used: the final time divided by the step count.
    pub dt: f64,
    pub n_fc: usize,
    pub gmres_iterations: usize,
    pub max_stage_iterations: usize,
    pub operator_applications: usize,
    pub wall_time: Duration,
}

/// Number of equal steps that reach `t_final` with a step no larger than `dt`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("time step must be positive"));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::config("final time must be non-negative"));
    }
    Ok((t_final / dt * (1.0 - 1e-12)).ceil() as usize)
}

/// Advances `q` to `t_final` with equal steps no larger than `dt`.
///
/// `observe` is called after every accepted step with the step index (from 1),
/// the time and the state.
pub fn integrate(
    disc: &Discretization,
    q0: &StateField,
    t_final: f64,
    dt: f64,
    tab: &TableauPair,
    solver: &SolverConfig,
    mut observe: impl FnMut(usize, f64, &StateField),
) -> Result<(StateField, RunStats)> {
    let n = step_count(t_final, dt)?;
    let dt = if n == 0 { dt } else { t_final / n as f64 };
    let mut q = disc.with_ghosts(q0)?;
    let mut stats = RunStats {
        dt,
        ..RunStats::default()
    };
    for k in 0..n {
        let (next, rec) = step(disc, &q, dt, tab, solver)?;
        q = next;
        stats.steps += 1;
        stats.n_fc += rec.n_fc;
        stats.gmres_iterations += rec.stage_iterations.iter().sum::<usize>();
        stats.max_stage_iterations = stats
            .max_stage_iterations
            .max(rec.stage_iterations.iter().copied().max().unwrap_or(0));
        stats.operator_applications += rec.operator_applications;
        stats.wall_time += rec.wall_time;
        let t = if k + 1 == n { t_final } else { (k + 1) as f64 * dt };
        observe(k + 1, t, &q);
    }
    Ok((q, stats))
}
