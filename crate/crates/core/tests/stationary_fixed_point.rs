use fpklab::drift::{DriftModel, RvhModel};
use fpklab::functions::{Constraint, TestFunction};
use fpklab::linear_solver::SolveConfig;
use fpklab::measures::*;
use fpklab::stationary::*;

#[test]
fn critical_case_selects_constrained_mean() {
    let g = GridSpec::uniform_1d(-12.0, 12.0, 300).unwrap();
    let guess = make_gaussian(&g, &[0.0], &[2.0]).unwrap();
    let opts = FixedPointOptions {
        constraints: vec![Constraint::new(TestFunction::identity(), 0.7)],
        ..Default::default()
    };
    let r = find_stationary(&DriftModel::mean_field(1.0), &DiffusionSpec::identity(1), &SolveConfig::default(), &opts, &guess).unwrap();
    assert!(r.converged);
    assert!((r.constraint_values[0] - 0.7).abs() < 1e-9);
    let expected = make_gaussian(&g, &[0.7], &[1.0]).unwrap();
    assert!(tv(&r.density, &expected).unwrap() < 1e-3);
}

#[test]
fn damping_still_converges() {
    let g = GridSpec::uniform_1d(-12.0, 12.0, 300).unwrap();
    let guess = make_gaussian(&g, &[2.0], &[0.5]).unwrap();
    let opts = FixedPointOptions {
        damping: 0.5,
        ..Default::default()
    };
    let r = find_stationary(&DriftModel::mean_field(0.5), &DiffusionSpec::identity(1), &SolveConfig::default(), &opts, &guess).unwrap();
    assert!(r.converged && r.mean[0].abs() < 1e-6);
    assert!(find_stationary(
        &DriftModel::mean_field(0.5),
        &DiffusionSpec::identity(1),
        &SolveConfig::default(),
        &FixedPointOptions { damping: 1.5, ..Default::default() },
        &guess
    )
    .is_err());
}

#[test]
fn coarse_branch_sweep_keeps_q() {
    let model = RvhModel::standard(0.1, 1.0);
    let g = GridSpec::square_2d(-6.0, 6.0, 48).unwrap();
    let qs = [-0.5, 0.5];
    let out = branch_sweep(&model, &DiffusionSpec::identity(2), &SolveConfig::default(), &FixedPointOptions::default(), &g, &qs);
    for (q, r) in qs.iter().zip(out) {
        let r = r.unwrap();
        let m = r.density.mean();
        assert!((m[0] + m[1] - q).abs() < 1e-8);
        assert!(r.moment_v <= rvh_moment_bound(&model, *q));
    }
}
