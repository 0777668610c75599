use fpklab::drift::*;
use fpklab::functions::{Constraint, TestFunction};
use fpklab::measures::*;
use fpklab::particles::ParticleEnsemble;

#[test]
fn density_and_ensemble_give_same_drift() {
    let pts: Vec<[f64; 2]> = (0..50).map(|i| [-2.0 + 0.08 * i as f64, 0.0]).collect();
    let ens = ParticleEnsemble::from_positions(1, pts.clone(), 0);
    let model = DriftModel::ConvolutionKernel {
        epsilon: 0.7,
        base: BaseDrift::Linear {
            matrix: vec![vec![1.0]],
            offset: vec![0.0],
        },
        kernel: Kernel::TanhDifference { scale: 1.0 },
    };
    let x = [0.3];
    let direct: f64 = pts.iter().map(|p| (x[0] - p[0]).tanh()).sum::<f64>() / 50.0;
    let b = model.eval(&x, &ens)[0];
    assert!((b - (-0.3 + 0.7 * direct)).abs() < 1e-12);
}

#[test]
fn config_round_trip() {
    let models = vec![
        DriftModel::mean_field(0.5),
        DriftModel::Rvh(RvhModel::standard(0.1, 1.0)),
        DriftModel::GradientConfining {
            epsilon: 0.2,
            quadratic: 1.0,
            quartic: 0.1,
        },
    ];
    for m in models {
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<DriftModel>(&s).unwrap(), m);
    }
}

#[test]
fn rvh_constants_hold_on_measures_with_fixed_q() {
    let rvh = RvhModel::standard(0.1, 1.0);
    let g = GridSpec::square_2d(-6.0, 6.0, 40).unwrap();
    let ms = sample_test_measures(&g, &[Constraint::new(TestFunction::linear(vec![1.0, 1.0]), -1.0)], 4, 2).unwrap();
    for m in &ms {
        assert!((m.mean()[0] + m.mean()[1] + 1.0).abs() < 1e-9);
    }
    let opts = HCheckOptions {
        samples: 2000,
        ..Default::default()
    };
    let r = check_h_conditions(
        &DriftModel::Rvh(rvh.clone()),
        &WeightFunction::quadratic(),
        &DiffusionSpec::identity(2),
        &ms,
        Some(HConstants::rvh(&rvh, -1.0)),
        &opts,
    )
    .unwrap();
    assert!(!r.violated, "{r:?}");
}

#[test]
fn drift_field_reports_outward_boundary() {
    let g = GridSpec::uniform_1d(-3.0, 3.0, 30).unwrap();
    let mu = make_gaussian(&g, &[0.0], &[0.2]).unwrap();
    let repulsive = DriftModel::ConvolutionKernel {
        epsilon: 1.0,
        base: BaseDrift::Zero,
        kernel: Kernel::affine_1d(0.5, 0.0),
    };
    assert!(drift_field(&repulsive, &mu).outward_boundary().is_some());
    assert!(drift_field(&DriftModel::mean_field(0.5), &mu).outward_boundary().is_none());
}
