mod common;

use dynalloc::model::dz;
use dynalloc::result::{Mode, SynthesisResult};
use dynalloc::sim::{self, DisturbanceSignal, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gains(cl: &dynalloc::model::ClosedLoop) -> SynthesisResult {
    SynthesisResult::from_gains(
        Mode::Nominal,
        -DMatrix::identity(cl.n_f, cl.n_f),
        DMatrix::zeros(cl.n_c, cl.m_a),
        DMatrix::zeros(cl.n_f, cl.m_a),
    )
}

#[test]
fn origin_is_an_equilibrium() {
    let cl = common::random_loop(&mut ChaCha8Rng::seed_from_u64(1), 2, 4, vec![]);
    let zero = DisturbanceSignal::Zero { n_w: 0 };
    let x0 = DVector::zeros(cl.n());
    let dynamic = sim::simulate(&cl, &gains(&cl), None, &x0, &zero, 5.0, 0.01).unwrap();
    assert_eq!(dynamic.len(), 501);
    assert!(dynamic.x.iter().all(|x| x.amax() == 0.0));
    let baseline = sim::static_baseline(&cl, &DMatrix::zeros(cl.n_c, cl.m_a), &x0, &zero, 5.0, 0.01).unwrap();
    assert!(baseline.x.iter().all(|x| x.amax() == 0.0));
}

#[test]
fn static_allocator_delivers_the_command_when_unsaturated() {
    let cl = common::random_loop(&mut ChaCha8Rng::seed_from_u64(2), 2, 4, vec![]);
    let x0 = DVector::from_element(cl.n_p + cl.n_c, 1e-3);
    let zero = DisturbanceSignal::Zero { n_w: 0 };
    let traj = sim::static_baseline(&cl, &DMatrix::zeros(cl.n_c, cl.m_a), &x0, &zero, 2.0, 0.01).unwrap();
    for k in 0..traj.len() {
        assert!(dz(&traj.y_f[k], cl.u_bar()).amax() == 0.0);
        assert!((&traj.u_p[k] - &traj.y_c[k]).amax() <= 1e-12 * traj.y_c[k].amax().max(1e-300));
    }
}

#[test]
fn energy_of_constant_saturated_output() {
    let c = DVector::from_vec(vec![2.0, -1.0]);
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 1.0]));
    let n = 101;
    let traj = Trajectory {
        t: (0..n).map(|k| k as f64 * 0.1).collect(),
        x: vec![DVector::zeros(1); n],
        y_f: vec![c.clone(); n],
        sat: vec![c.clone(); n],
        u_p: vec![DVector::zeros(1); n],
        y_c: vec![DVector::zeros(1); n],
        e: vec![DVector::zeros(1); n],
        w: vec![DVector::zeros(0); n],
        v: None,
        dt: 0.1,
    };
    let expected = 10.0 * (c.transpose() * &w * &c)[(0, 0)];
    assert!((sim::energy_metric(&traj, &w) - expected).abs() <= 1e-10 * expected);
    let zero = Trajectory {
        sat: vec![DVector::zeros(2); n],
        ..traj
    };
    assert_eq!(sim::energy_metric(&zero, &w), 0.0);
}

#[test]
fn zero_signal_has_zero_energy() {
    let r = DMatrix::identity(2, 2);
    assert_eq!(sim::disturbance_energy(&DisturbanceSignal::Zero { n_w: 2 }, &r), 0.0);
}

#[test]
fn divergence_is_reported() {
    let cl = common::random_loop(&mut ChaCha8Rng::seed_from_u64(3), 1, 2, vec![]);
    let unstable = SynthesisResult::from_gains(
        Mode::Nominal,
        DMatrix::from_element(cl.n_f, cl.n_f, 5.0),
        DMatrix::zeros(cl.n_c, cl.m_a),
        DMatrix::zeros(cl.n_f, cl.m_a),
    );
    let mut x0 = DVector::zeros(cl.n());
    x0[cl.n() - 1] = 1.0;
    let result = sim::simulate(
        &cl,
        &unstable,
        None,
        &x0,
        &DisturbanceSignal::Zero { n_w: 0 },
        100.0,
        0.01,
    );
    assert!(
        matches!(result, Err(dynalloc::error::Error::Divergence(_))),
        "{result:?}"
    );
}
