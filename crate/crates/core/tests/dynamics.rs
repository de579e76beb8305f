use euler_stability::grid::{build_grid, green_apply, GridSpec, ScalarField, Shape};
use euler_stability::rearrangement::{distribution_function, rearrangement_distance};
use euler_stability::simulator::{run, step, turnover_time, RunOptions, SimState};
use euler_stability::spectral::{lambda1, principal_eigenpair};
use euler_stability::steady::{linear_steady, SteadyState};
use euler_stability::Error;

fn blob(n: usize) -> ScalarField {
    let g = build_grid(GridSpec::unit_square(n)).unwrap();
    g.sample(|x, y| {
        let r = ((x - 0.45).powi(2) + (y - 0.55).powi(2)) / 0.09;
        if r < 1.0 { (1.0 - r).powi(3) } else { 0.0 }
    })
}

#[test]
fn principal_mode_is_steady() {
    let g = build_grid(GridSpec::unit_square(128)).unwrap();
    let (_, phi) = principal_eigenpair(&g, None).unwrap();
    let omega0 = phi.scale(1.0 / phi.max());
    let mut s = SimState::new(omega0.clone()).unwrap();
    for _ in 0..100 {
        let dt = s.stable_dt(0.5);
        s = step(&s, dt).unwrap();
    }
    let rel = s.omega.sub(&omega0).unwrap().lp_norm(2.0) / omega0.lp_norm(2.0);
    assert!(rel < 1e-3, "relative change {rel:e}");
}

#[test]
fn zero_field_stays_zero() {
    let g = build_grid(GridSpec::unit_square(16)).unwrap();
    let d = run(&g.zeros(), 1.0, None, &RunOptions::default()).unwrap();
    assert!(d.energy.iter().chain(&d.l2).all(|&v| v == 0.0));
}

#[test]
fn radial_disk_blob_keeps_its_level_sets() {
    let g = build_grid(GridSpec { shape: Shape::Disk { r: 1.0 }, resolution: 128 }).unwrap();
    let omega0 = g.sample(|x, y| {
        let r2 = (x * x + y * y) / 0.36;
        if r2 < 1.0 { (1.0 - r2).powi(3) } else { 0.0 }
    });
    let t = turnover_time(&omega0).unwrap();
    let d = run(&omega0, t, None, &RunOptions::default()).unwrap();
    let last = d.final_omega.as_ref().unwrap();
    let thresholds: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let before = distribution_function(&omega0, &thresholds).unwrap();
    let after = distribution_function(last, &thresholds).unwrap();
    for (a, b) in before.measures.iter().zip(&after.measures) {
        assert!((a - b).abs() < 1e-3 * a, "level-set measure {a} became {b}");
    }
    let sorted = rearrangement_distance(last, &omega0).unwrap() / omega0.lp_norm(2.0);
    assert!(sorted < 1e-3, "sorted-value drift {sorted:e}");
}

fn affine_steady(n: usize) -> SteadyState {
    let g = build_grid(GridSpec::unit_square(n)).unwrap();
    linear_steady(0.5 * lambda1(&g).unwrap(), 1.0, &g).unwrap()
}

#[test]
fn steady_flow_stays_within_its_floor() {
    let s = affine_steady(128);
    let t = 5.0 * turnover_time(&s.omega_bar).unwrap();
    let opts = RunOptions { casimir: true, sample_every: 25, ..RunOptions::default() };
    let d = run(&s.omega_bar, t, Some(&s), &opts).unwrap();
    let norm = s.omega_bar.lp_norm(2.0);
    assert!(d.max_deviation().unwrap() < 1e-3 * norm, "deviation {:e}", d.max_deviation().unwrap() / norm);
    for row in &d.rows {
        assert!((row.ec.unwrap() - (row.energy - row.casimir.unwrap())).abs() < 1e-10);
    }
}

#[test]
fn steadiness_floor_shrinks_under_refinement() {
    let floor = |n: usize| {
        let s = affine_steady(n);
        let t = 2.0 * turnover_time(&s.omega_bar).unwrap();
        run(&s.omega_bar, t, Some(&s), &RunOptions::default()).unwrap().max_deviation().unwrap() / s.omega_bar.lp_norm(2.0)
    };
    let (coarse, fine) = (floor(32), floor(64));
    assert!(coarse / fine > 2.0f64.powf(1.5), "floors {coarse:e} and {fine:e}");
}

#[test]
fn oversized_step_is_a_cfl_violation() {
    let s = SimState::new(blob(24)).unwrap();
    let dt = 3.0 * s.stable_dt(0.5);
    assert!(matches!(step(&s, dt), Err(Error::CflViolation { .. })));
}

#[test]
fn runs_are_deterministic() {
    let omega0 = blob(24);
    let t = turnover_time(&omega0).unwrap();
    let a = run(&omega0, t, None, &RunOptions::default()).unwrap();
    let b = run(&omega0, t, None, &RunOptions::default()).unwrap();
    assert_eq!(a.final_omega.unwrap().to_bytes(), b.final_omega.unwrap().to_bytes());
    assert_eq!(serde_json::to_string(&a.rows).unwrap(), serde_json::to_string(&b.rows).unwrap());
}

#[test]
fn stream_function_tracks_vorticity() {
    let mut s = SimState::new(blob(32)).unwrap();
    for _ in 0..10 {
        let dt = s.stable_dt(0.5);
        s = step(&s, dt).unwrap();
        let want = green_apply(&s.omega).unwrap();
        assert!(s.psi.sub(&want).unwrap().lp_norm(2.0) < 1e-9);
    }
}

#[test]
fn mass_is_conserved_to_roundoff() {
    let omega0 = blob(32);
    let t = 2.0 * turnover_time(&omega0).unwrap();
    let d = run(&omega0, t, None, &RunOptions::default()).unwrap();
    assert!(d.mass_drift() < 1e-12, "mass drift {:e}", d.mass_drift());
}
