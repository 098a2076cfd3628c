use euler_imex::cases::*;
use euler_imex::integrate::{integrate, SolverConfig};
use euler_imex::linsolve::*;
use euler_imex::spatial::Scheme;
use euler_imex::tableau::tableau;

fn stage_iterations(pc: PrecondKind) -> usize {
    let case = case_inertia_gravity_wave(120, 8).unwrap();
    let disc = case.discretization(Scheme::Weno5).unwrap();
    let q = case.initial();
    let frozen = disc.freeze(&q, 0).unwrap();
    let cache = disc.fast_cache(&q).unwrap();
    let sigma = 0.25 * case.dt_for_cfl(14.0);
    let op = StageOperator {
        disc: &disc,
        frozen: &frozen,
        cache: &cache,
        sigma,
    };
    let x0 = q.interior_vec();
    let mut xt = x0.clone();
    for (k, v) in xt.iter_mut().enumerate() {
        *v *= 1.0 + 1e-3 * (0.37 * k as f64).sin();
    }
    let b = apply_operator(&op, &xt).unwrap();
    let cfg = GmresConfig {
        tol_abs: 1e-8,
        tol_rel: 1e-8,
        ..Default::default()
    };
    let d = PrecondDissipation::default();
    let mut x = x0;
    let report = match pc {
        PrecondKind::None => gmres_solve(&op, &IdentityPreconditioner, &b, &mut x, &cfg),
        PrecondKind::BlockJacobi => gmres_solve(&op, &build_preconditioner(&disc, &cache, sigma, d).unwrap(), &b, &mut x, &cfg),
        PrecondKind::Global => gmres_solve(&op, &build_global_preconditioner(&disc, &cache, sigma, d).unwrap(), &b, &mut x, &cfg),
    };
    report.unwrap().iterations
}

#[test]
fn preconditioning_reduces_iterations_on_a_gravity_wave_stage() {
    let none = stage_iterations(PrecondKind::None);
    let line = stage_iterations(PrecondKind::BlockJacobi);
    let global = stage_iterations(PrecondKind::Global);
    assert!(line <= none, "block-Jacobi {line} vs none {none}");
    assert!(global <= line, "global {global} vs block-Jacobi {line}");
}

#[test]
fn loose_and_tight_gmres_tolerances_agree_on_gravity_wave() {
    let case = case_inertia_gravity_wave(60, 6).unwrap();
    let disc = case.discretization(Scheme::Weno5).unwrap();
    let q0 = case.initial();
    let tab = tableau("ARK2c").unwrap();
    let dt = case.dt_for_cfl(10.0);
    let t_final = 10.0 * dt;
    let run = |tol| {
        let cfg = SolverConfig {
            preconditioner: PrecondKind::Global,
            ..SolverConfig::with_tolerance(tol)
        };
        integrate(&disc, &q0, t_final, dt, &tab, &cfg, |_, _, _| {}).unwrap()
    };
    let (loose, sl) = run(1e-6);
    let (tight, st) = run(1e-10);
    assert!(sl.gmres_iterations < st.gmres_iterations);
    let m = compute_metrics(&case, &loose, &tight, &q0, dt).unwrap();
    assert!(m.relative_rms < 1e-4, "relative rms {:e}", m.relative_rms);
}

#[test]
fn imex_matches_explicit_reference_on_density_wave() {
    let case = case_density_wave(0.1, 40).unwrap();
    let disc = case.discretization(Scheme::Crweno5).unwrap();
    let q0 = case.initial();
    let reference = integrate(&disc, &q0, case.t_final, case.dt_for_cfl(0.1), &tableau("RK4").unwrap(), &SolverConfig::default(), |_, _, _| {})
        .unwrap()
        .0;
    for name in ["ARK2c", "ARK3", "ARK4"] {
        let (f, st) = integrate(&disc, &q0, case.t_final, case.dt_for_cfl(2.0), &tableau(name).unwrap(), &SolverConfig::with_tolerance(1e-12), |_, _, _| {}).unwrap();
        let m = compute_metrics(&case, &f, &reference, &q0, st.dt).unwrap();
        assert!(m.relative_rms < 1e-4, "{name}: {:e}", m.relative_rms);
        assert!(m.conservation.iter().all(|e| e.abs() < 1e-12), "{name}: {:?}", m.conservation);
    }
}

#[test]
fn density_wave_with_imex_tracks_exact_solution() {
    let case = case_density_wave(0.01, 64).unwrap();
    let disc = case.discretization(Scheme::Weno5).unwrap();
    let q0 = case.initial();
    let exact = case.exact(case.t_final).unwrap();
    let (f, st) = integrate(&disc, &q0, case.t_final, case.dt_for_cfl(20.0), &tableau("ARK2c").unwrap(), &SolverConfig::with_tolerance(1e-10), |_, _, _| {}).unwrap();
    let m = compute_metrics(&case, &f, &exact, &q0, st.dt).unwrap();
    assert!(m.l2[0] < 1e-4, "density l2 {:e}", m.l2[0]);
}
