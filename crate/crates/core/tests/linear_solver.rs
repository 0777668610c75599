use fpklab::drift::{drift_field, DriftField, DriftModel};
use fpklab::linear_solver::*;
use fpklab::measures::*;
use proptest::prelude::*;

fn ou_field(g: &GridSpec) -> DriftField {
    DriftField::from_fn(g, |x| [-x[0], 0.0])
}

#[test]
fn ou_transient_matches_closed_form() {
    // ν = N(2, 1/4): μ_t = N(2e^{−t}, 1 − 0.75e^{−2t}).
    let g = GridSpec::uniform_1d(-10.0, 10.0, 800).unwrap();
    let nu = make_gaussian(&g, &[2.0], &[0.25]).unwrap();
    let cfg = SolveConfig::default().with_horizon(1.0).with_dt(1e-3);
    let traj = evolve_linear(&nu, &ou_field(&g), &DiffusionSpec::identity(1), &cfg).unwrap();
    let t = 1.0f64;
    let exact = make_gaussian(&g, &[2.0 * (-t).exp()], &[1.0 - 0.75 * (-2.0 * t).exp()]).unwrap();
    assert!(tv(traj.last().unwrap(), &exact).unwrap() < 2e-3);
}

#[test]
fn long_time_and_direct_agree() {
    let g = GridSpec::uniform_1d(-8.0, 8.0, 160).unwrap();
    let b = drift_field(&DriftModel::mean_field(0.0), &make_gaussian(&g, &[0.0], &[1.0]).unwrap());
    let direct = solve_linear_stationary(&b, &DiffusionSpec::identity(1), &SolveConfig::default()).unwrap();
    let cfg = SolveConfig {
        stationary_mode: StationaryMode::LongTime,
        tolerance: 1e-9,
        dt: Some(0.05),
        ..Default::default()
    };
    let long = solve_linear_stationary(&b, &DiffusionSpec::identity(1), &cfg).unwrap();
    assert!(tv(&direct, &long).unwrap() < 1e-6);
}

#[test]
fn outward_drift_is_rejected_for_stationary() {
    let g = GridSpec::uniform_1d(-4.0, 4.0, 40).unwrap();
    let b = DriftField::from_fn(&g, |x| [x[0], 0.0]);
    assert!(matches!(
        solve_linear_stationary(&b, &DiffusionSpec::identity(1), &SolveConfig::default()),
        Err(fpklab::FpkError::NotConfining { .. })
    ));
}

#[test]
fn exponential_upwind_is_close_to_chang_cooper() {
    let g = GridSpec::uniform_1d(-8.0, 8.0, 400).unwrap();
    let b = ou_field(&g);
    let cc = solve_linear_stationary(&b, &DiffusionSpec::identity(1), &SolveConfig::default()).unwrap();
    let cfg = SolveConfig {
        scheme: FluxScheme::ExponentialUpwind,
        ..Default::default()
    };
    let eu = solve_linear_stationary(&b, &DiffusionSpec::identity(1), &cfg).unwrap();
    assert!(tv(&cc, &eu).unwrap() < 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn steps_conserve_mass_and_positivity(shift in -2.0f64..2.0, dt in 1e-3f64..0.5, n in 20usize..120) {
        let g = GridSpec::uniform_1d(-6.0, 6.0, n).unwrap();
        let b = DriftField::from_fn(&g, |x| [-(x[0] - shift) + (3.0 * x[0]).sin(), 0.0]);
        let rho = make_uniform(&g, &[-1.0], &[2.0]).unwrap();
        let cfg = SolveConfig::default();
        let out = step_linear(&rho, &b, &DiffusionSpec::new(vec![0.7]).unwrap(), dt, &cfg).unwrap();
        prop_assert!((out.mass() - 1.0).abs() < 1e-12);
        prop_assert!(out.values().iter().all(|v| *v >= 0.0));
    }
}
