#![allow(dead_code)]

use dynalloc::model::{
    assemble_closed_loop, AllocatorWeights, ClosedLoop, ControllerModel, InfluenceModel, PlantModel,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random loop with `B_p = C_p = I`, static feedback `D_c = -A_p - 2I` and a decoupled
/// first-order controller state, so `A_0` is Hurwitz for every `A_p`.
pub fn random_loop(rng: &mut ChaCha8Rng, n_p: usize, m_a: usize, vertices: Vec<DMatrix<f64>>) -> ClosedLoop {
    random_disturbed_loop(rng, n_p, m_a, 0, vertices)
}

/// [`random_loop`] with `n_w` Gaussian disturbance channels.
pub fn random_disturbed_loop(
    rng: &mut ChaCha8Rng,
    n_p: usize,
    m_a: usize,
    n_w: usize,
    vertices: Vec<DMatrix<f64>>,
) -> ClosedLoop {
    let a_p = gaussian(rng, n_p, n_p);
    let b_w = gaussian(rng, n_p, n_w);
    let eye = DMatrix::<f64>::identity(n_p, n_p);
    let plant = PlantModel::new(a_p.clone(), eye.clone(), eye.clone(), b_w).unwrap();
    let controller = ControllerModel::new(
        -DMatrix::<f64>::identity(1, 1),
        DMatrix::zeros(1, n_p),
        DMatrix::zeros(n_p, 1),
        -a_p - eye * 2.0,
    )
    .unwrap();
    let m_n = random_full_rank(rng, n_p, m_a);
    let u_bar = DVector::from_fn(m_a, |_, _| rng.gen_range(1.0..10.0));
    let influence = InfluenceModel::new(m_n, vertices, u_bar).unwrap();
    let weights = AllocatorWeights::new(DVector::from_fn(m_a, |_, _| rng.gen_range(1.0..10.0))).unwrap();
    assemble_closed_loop(&plant, &controller, &influence, &weights).unwrap()
}

/// Gaussian `rows × cols` matrix with singular values bounded away from zero.
pub fn random_full_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let m = gaussian(rng, rows, cols);
        let sv = m.singular_values();
        if sv.min() > 0.1 * sv.max() {
            return m;
        }
    }
}
