mod common;

use dynalloc::benchmark::{self, Example};
use dynalloc::linalg;
use dynalloc::model::{
    assemble_closed_loop, AllocatorWeights, ControllerModel, DisturbanceClass, InfluenceModel, PlantModel,
};
use dynalloc::sdp::{MatrixExpr, SdpProblem, SolveOptions, Structure};
use dynalloc::synthesis::{self, Mode, SynthesisOptions, SynthesisResult, TraceBound};
use dynalloc::verify;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn options(rho: [f64; 3]) -> SynthesisOptions {
    SynthesisOptions {
        rho,
        trace_bound: TraceBound::Identity,
        ..SynthesisOptions::default()
    }
}

fn small_loop(seed: u64) -> dynalloc::model::ClosedLoop {
    common::random_loop(&mut ChaCha8Rng::seed_from_u64(seed), 2, 4, vec![])
}

#[test]
fn satellite_lyapunov_lmi_is_feasible() {
    let cl = benchmark::satellite_closed_loop(Example::Disturbed).unwrap();
    let a0 = &cl.a0;
    let n0 = a0.nrows();
    let mut prob = SdpProblem::new();
    let p = prob.add_var("P", n0, n0, Structure::Symmetric);
    let pe = prob.expr(p);
    prob.pd_strict("pd", "P > 0", pe.clone());
    prob.nd_strict("lyap", "A0'P + PA0 < 0", pe.lmul(&a0.transpose()).plus(&pe.rmul(a0)));
    prob.psd(
        "norm",
        "P >= I",
        pe.minus(&MatrixExpr::constant(&DMatrix::identity(n0, n0))),
        0.0,
    );
    let sol = prob.solve(&SolveOptions::default()).unwrap();
    assert!(sol.status.is_solved(), "{:?}", sol.status);
    let p = prob.value(&sol.x, p);
    assert!(linalg::min_eigenvalue(&p) > 0.0);
    assert!(linalg::max_eigenvalue(&(a0.transpose() * &p + &p * a0)) < 0.0);
}

#[test]
fn nominal_certificate_round_trips() {
    let cl = small_loop(1);
    let result = synthesis::synthesize_nominal(&cl, &options([1.0, 1.0, 0.0])).unwrap();
    let report = verify::check_lmi_certificate(&cl, &result, Mode::Nominal, None).unwrap();
    assert!(report.passed(), "{report}");
    assert!(verify::check_vertex_stability(&cl, &result.k_f, 0.0).unwrap().passed());
}

#[test]
fn halving_gamma_breaks_the_certificate() {
    let cl = small_loop(1);
    let mut result = synthesis::synthesize_nominal(&cl, &options([1.0, 1.0, 0.0])).unwrap();
    result.certificate.as_mut().unwrap().gamma *= 0.5;
    let report = verify::check_lmi_certificate(&cl, &result, Mode::Nominal, None).unwrap();
    assert!(report.failures().any(|c| c.name.starts_with("Psi")), "{report}");
}

#[test]
fn energy_weight_is_monotone() {
    let cl = small_loop(2);
    let gammas: Vec<f64> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&rho2| {
            let r = synthesis::synthesize_nominal(&cl, &options([1.0, rho2, 0.0])).unwrap();
            r.certificate.unwrap().gamma
        })
        .collect();
    for pair in gammas.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-5), "{gammas:?}");
    }
}

#[test]
fn global_certificate_has_no_sector_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a_p = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
    let eye = DMatrix::identity(2, 2);
    let plant = PlantModel::new(a_p, eye.clone(), eye.clone(), DMatrix::zeros(2, 0)).unwrap();
    let controller = ControllerModel::new(
        -DMatrix::identity(1, 1),
        DMatrix::zeros(1, 2),
        DMatrix::zeros(2, 1),
        -eye * 0.5,
    )
    .unwrap();
    let influence = InfluenceModel::new(
        common::random_full_rank(&mut rng, 2, 4),
        vec![],
        DVector::from_element(4, 1.0),
    )
    .unwrap();
    let weights = AllocatorWeights::new(DVector::from_element(4, 1.0)).unwrap();
    let cl = assemble_closed_loop(&plant, &controller, &influence, &weights).unwrap();
    let result = synthesis::synthesize_global(&cl, &options([0.0, 1.0, 0.0])).unwrap();
    let cert = result.certificate.as_ref().unwrap();
    assert!(cert.g.iter().all(|&v| v == 0.0));
    let report = verify::check_lmi_certificate(&cl, &result, Mode::Global, None).unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn single_zero_vertex_matches_nominal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let nominal = common::random_loop(&mut rng.clone(), 2, 3, vec![]);
    let robust = common::random_loop(&mut rng, 2, 3, vec![DMatrix::zeros(2, 3)]);
    let opts = options([1.0, 1.0, 0.0]);
    let a = synthesis::synthesize_nominal(&nominal, &opts).unwrap();
    let b = synthesis::synthesize_robust(&robust, &opts).unwrap();
    assert_eq!(a.diagnostics.status, b.diagnostics.status);
    assert!((a.objective - b.objective).abs() <= 1e-6 * a.objective.abs().max(1.0));
}

#[test]
fn robust_certificate_holds_at_every_vertex() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m1 = common::gaussian(&mut rng, 2, 4) * 0.05;
    let cl = common::random_loop(&mut rng, 2, 4, vec![m1.clone(), -m1]);
    let result = synthesis::synthesize_robust(&cl, &options([1.0, 1.0, 0.0])).unwrap();
    assert_eq!(result.certificate.as_ref().unwrap().p.len(), 2);
    let report = verify::check_lmi_certificate(&cl, &result, Mode::Robust, None).unwrap();
    assert!(report.passed(), "{report}");
    assert!(verify::check_vertex_stability(&cl, &result.k_f, 0.0).unwrap().passed());
}

#[test]
fn disturbed_certificate_respects_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cl = common::random_disturbed_loop(&mut rng, 2, 4, 1, vec![]);
    let dist = DisturbanceClass::new(DMatrix::identity(1, 1), 1.0).unwrap();
    let opts = SynthesisOptions {
        mode: Mode::Disturbed,
        ..options([1.0, 1.0, 10.0])
    };
    let result = synthesis::synthesize(&cl, Some(&dist), &opts).unwrap();
    let cert = result.certificate.as_ref().unwrap();
    let mu = cert.mu.unwrap();
    assert!(mu > 0.0 && dist.sigma - mu >= 0.0, "mu={mu}");
    let report = verify::check_lmi_certificate(&cl, &result, Mode::Disturbed, Some(&dist)).unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn missing_certificate_is_reported() {
    let cl = small_loop(1);
    let (e_c, e_f) = (DMatrix::zeros(cl.n_c, cl.m_a), DMatrix::zeros(cl.n_f, cl.m_a));
    let gains = SynthesisResult::from_gains(Mode::Nominal, DMatrix::zeros(cl.n_f, cl.n_f), e_c, e_f);
    assert!(verify::check_lmi_certificate(&cl, &gains, Mode::Nominal, None).is_err());
    // zero K_f leaves the allocator states marginally stable
    assert!(!verify::check_vertex_stability(&cl, &gains.k_f, 0.0).unwrap().passed());
}
