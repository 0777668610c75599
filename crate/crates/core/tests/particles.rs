use fpklab::cauchy::evolve_nonlinear;
use fpklab::drift::DriftModel;
use fpklab::linear_solver::SolveConfig;
use fpklab::measures::*;
use fpklab::particles::*;

#[test]
fn permuting_ids_permutes_trajectories() {
    let a = sample_ensemble(&Sampler::Gaussian { mean: vec![0.5], variance: vec![1.0] }, 8, 42).unwrap();
    let perm = [3usize, 7, 0, 5, 1, 6, 2, 4];
    let b = ParticleEnsemble {
        ids: perm.iter().map(|&i| a.ids[i]).collect(),
        positions: perm.iter().map(|&i| a.positions[i]).collect(),
        ..a.clone()
    };
    let opts = ParticleOptions {
        horizon: 0.5,
        dt: 0.01,
        ..Default::default()
    };
    let model = DriftModel::mean_field(0.7);
    let ra = simulate_from(a, &model, &DiffusionSpec::identity(1), &opts).unwrap();
    let rb = simulate_from(b, &model, &DiffusionSpec::identity(1), &opts).unwrap();
    let (la, lb) = (ra.last(), rb.last());
    for (k, &i) in perm.iter().enumerate() {
        assert!((lb.positions[k][0] - la.positions[i][0]).abs() < 1e-12);
    }
}

#[test]
fn ou_ensemble_agrees_with_pde() {
    let g = GridSpec::uniform_1d(-10.0, 10.0, 400).unwrap();
    let nu = make_gaussian(&g, &[2.0], &[0.25]).unwrap();
    let cfg = SolveConfig {
        snapshot_stride: 0.5,
        ..SolveConfig::default().with_horizon(2.0).with_dt(1e-3)
    };
    let model = DriftModel::mean_field(0.0);
    let traj = evolve_nonlinear(&nu, &model, &DiffusionSpec::identity(1), &cfg).unwrap();
    let opts = ParticleOptions {
        particles: 5000,
        dt: 5e-3,
        horizon: 2.0,
        seed: 9,
        snapshot_stride: 0.5,
    };
    let sampler = Sampler::Gaussian { mean: vec![2.0], variance: vec![0.25] };
    let run = simulate(&sampler, &model, &DiffusionSpec::identity(1), &opts).unwrap();
    let fs = [
        ValidationFunctional::Mean { axis: 0 },
        ValidationFunctional::Variance { axis: 0 },
        ValidationFunctional::Expectation { function: fpklab::functions::TestFunction::SquaredNorm },
    ];
    let cv = cross_validate(&run, &traj, &fs, SeModel::Iid).unwrap();
    assert_eq!(cv.rows.len(), 15);
    assert_eq!(cv.flagged, 0, "{:?}", cv.rows);
}

#[test]
fn smoothed_density_is_close_to_gaussian() {
    let e = sample_ensemble(&Sampler::Gaussian { mean: vec![0.0, 0.0], variance: vec![1.0, 1.0] }, 20_000, 3).unwrap();
    let g = GridSpec::square_2d(-6.0, 6.0, 48).unwrap();
    let emp = empirical_density(&e, &g, true).unwrap();
    let exact = make_gaussian(&g, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!(tv(&emp.density, &exact).unwrap() < 0.15);
    assert!((emp.density.mass() - 1.0).abs() < 1e-12);
}

#[test]
fn too_few_particles_rejected() {
    let opts = ParticleOptions {
        particles: 10,
        ..Default::default()
    };
    assert!(simulate(&Sampler::Point { at: vec![0.0] }, &DriftModel::mean_field(0.0), &DiffusionSpec::identity(1), &opts).is_err());
}
