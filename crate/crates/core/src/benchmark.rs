//! Embedded two-satellite formation benchmark: plant, LQG controller, thruster
//! influence matrix, scenarios, and the gain matrices published for it.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg;
use crate::model::{
    assemble_closed_loop, AllocatorWeights, ClosedLoop, ControllerModel, DisturbanceClass, InfluenceModel, PlantModel,
};
use crate::sim::DisturbanceSignal;
use crate::synthesis::{Mode, SynthesisOptions, TraceBound};

/// Satellite masses in kg.
pub const MASS_1: f64 = 1000.0;
pub const MASS_2: f64 = 1000.0;
/// Symmetrized thruster bound in mN (physical range [0, 100] mN).
pub const THRUST_HALF_RANGE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Energy-bounded disturbance on the relative acceleration.
    Disturbed,
    /// Thruster degradation `θ ∈ [0.9, 1]` on the first satellite.
    Robust,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Disturbed => "satellite-disturbed",
            Example::Robust => "satellite-robust",
        }
    }
}

pub fn plant(example: Example) -> Result<PlantModel> {
    let a_p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b_p = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0 / MASS_1, -1.0 / MASS_2]);
    let c_p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let b_w = match example {
        Example::Disturbed => DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / MASS_1]),
        Example::Robust => DMatrix::zeros(2, 0),
    };
    PlantModel::new(a_p, b_p, c_p, b_w)
}

/// LQG controller designed with identity weights.
#[allow(clippy::approx_constant)]
pub fn controller() -> Result<ControllerModel> {
    ControllerModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.7321, 1.0, -1.0014, -0.0532]),
        DMatrix::from_row_slice(2, 1, &[1.7321, 1.0]),
        DMatrix::from_row_slice(2, 2, &[-0.7071, -26.6009, 0.7071, 26.6009]),
        DMatrix::zeros(2, 1),
    )
}

fn thruster_row() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 4, &[1.0, -1.0, -1.0, 1.0])
}

/// `M_n = diag(M_1, M_2)` with `M_1 = M_2 = [1 -1 -1 1]`.
pub fn nominal_influence() -> DMatrix<f64> {
    let m = thruster_row();
    linalg::block_diag(&[&m, &m])
}

/// Published kernel basis `N = diag(N_1, N_2)`, `N_i = [1 1 -1; I_3]`.
pub fn paper_kernel_basis() -> DMatrix<f64> {
    let n1 = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    linalg::block_diag(&[&n1, &n1])
}

/// Direction of the thruster degradation: `M_u(θ) = θ · direction`.
pub fn degradation_direction() -> DMatrix<f64> {
    let mut d = DMatrix::zeros(2, 8);
    d[(0, 1)] = 1.0;
    d[(0, 2)] = 1.0;
    d[(0, 3)] = -1.0;
    d
}

/// Uncertainty range of the degradation parameter.
pub const THETA_RANGE: (f64, f64) = (0.9, 1.0);

/// Simplex weights placing the influence matrix at parameter `theta`.
pub fn theta_weights(theta: f64) -> [f64; 2] {
    let (lo, hi) = THETA_RANGE;
    let a = (hi - theta) / (hi - lo);
    [a, 1.0 - a]
}

pub fn influence(example: Example) -> Result<InfluenceModel> {
    let u_bar = DVector::from_element(8, THRUST_HALF_RANGE);
    let vertices = match example {
        Example::Disturbed => vec![],
        Example::Robust => {
            let d = degradation_direction();
            vec![&d * THETA_RANGE.0, &d * THETA_RANGE.1]
        }
    };
    InfluenceModel::new(nominal_influence(), vertices, u_bar)?.with_kernel_basis(paper_kernel_basis())
}

/// `W = diag(100, 1, ..., 1)`: the first thruster is penalized.
pub fn weights() -> AllocatorWeights {
    let mut d = DVector::from_element(8, 1.0);
    d[0] = 100.0;
    AllocatorWeights { diag: d }
}

pub fn disturbance_class() -> Result<DisturbanceClass> {
    DisturbanceClass::new(DMatrix::from_element(1, 1, 1.0), 1.0)
}

pub fn satellite_closed_loop(example: Example) -> Result<ClosedLoop> {
    assemble_closed_loop(&plant(example)?, &controller()?, &influence(example)?, &weights())
}

/// Symmetrizing offset `ξ = ū` mapping `[-50, 50]` back to the physical `[0, 100]` mN.
pub fn symmetrizing_offset() -> DVector<f64> {
    DVector::from_element(8, THRUST_HALF_RANGE)
}

/// Synthesis settings used for each example.
pub fn synthesis_options(example: Example) -> SynthesisOptions {
    match example {
        Example::Disturbed => SynthesisOptions {
            mode: Mode::Disturbed,
            rho: [2.0, 0.15, 1000.0],
            // bound only the first diagonal entry of P_0 (relative distance direction)
            trace_bound: TraceBound::Selector(unit_vector(10, 0)),
            ..SynthesisOptions::default()
        },
        Example::Robust => SynthesisOptions {
            mode: Mode::Robust,
            rho: [2.0, 0.15, 0.0],
            ..SynthesisOptions::default()
        },
    }
}

fn unit_vector(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Simulation scenario for an example.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub x0: DVector<f64>,
    pub disturbance: DisturbanceSignal,
    pub t_final: f64,
    pub dt: f64,
}

pub fn scenario(example: Example) -> Scenario {
    let mut x0 = DVector::zeros(10);
    match example {
        Example::Disturbed => {
            x0[0] = -0.18;
            Scenario {
                x0,
                disturbance: DisturbanceSignal::piecewise_constant(
                    vec![0.0, 36.0],
                    vec![DVector::from_element(1, 0.1667), DVector::zeros(1)],
                )
                .expect("static disturbance profile"),
                t_final: 120.0,
                dt: 0.01,
            }
        }
        Example::Robust => {
            x0[0] = -0.25;
            Scenario {
                x0,
                disturbance: DisturbanceSignal::Zero { n_w: 0 },
                t_final: 200.0,
                dt: 0.01,
            }
        }
    }
}

/// Published `(E_c, E_f, K_f)` for an example (4-decimal precision).
pub fn paper_gains(example: Example) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (e, k_f): (&[f64], &[f64]) = match example {
        Example::Disturbed => (&PAPER_E_DISTURBED, &PAPER_KF_DISTURBED),
        Example::Robust => (&PAPER_E_ROBUST, &PAPER_KF_ROBUST),
    };
    let e = DMatrix::from_row_slice(8, 8, e);
    (
        e.rows(0, 2).into_owned(),
        e.rows(2, 6).into_owned(),
        DMatrix::from_row_slice(6, 6, k_f),
    )
}

#[rustfmt::skip]
const PAPER_E_DISTURBED: [f64; 64] = [
    -0.1708, -0.0059, -0.0032, -0.0053,  0.0111, -0.0066, -0.0066,  0.0066,
    -0.0895, -0.0118, -0.0103,  0.0057, -0.0024,  0.0048,  0.0048, -0.0048,
    -0.0480, -0.0103,  0.1031, -0.0662,  0.0747,  0.1042,  0.1042, -0.1042,
    -0.0805,  0.0057, -0.0661,  0.0225, -0.0512, -0.0537, -0.0537,  0.0537,
     0.1277, -0.0018,  0.0566, -0.0389, -0.0080,  0.0722,  0.0722, -0.0722,
    -0.0757,  0.0037,  0.0790, -0.0408,  0.0722,  0.9615, -0.3662,  0.3662,
    -0.0757,  0.0037,  0.0790, -0.0408,  0.0722, -0.3662,  0.9615,  0.3662,
     0.0757, -0.0037, -0.0790,  0.0408, -0.0722,  0.3662,  0.3662,  0.9615,
];

#[rustfmt::skip]
const PAPER_KF_DISTURBED: [f64; 36] = [
    -1.8960,  0.9476, -0.9437,  0.0053,  0.0053, -0.0053,
     0.9103, -1.8750, -0.9090,  0.0013,  0.0013, -0.0013,
    -0.8741, -0.8266, -1.8904, -0.0007, -0.0007,  0.0007,
    -0.0020, -0.0009,  0.0118, -1.6716,  0.5010, -0.5010,
    -0.0020, -0.0009,  0.0118,  0.5010, -1.6716, -0.5010,
     0.0020,  0.0009, -0.0118, -0.5010, -0.5010, -1.6716,
];

#[rustfmt::skip]
const PAPER_E_ROBUST: [f64; 64] = [
     0.0019, -0.0000,  0.0394, -0.0193,  0.0325, -0.0411, -0.0411,  0.0411,
    -0.0002, -0.0047,  0.0142, -0.0043,  0.0118, -0.0160, -0.0160,  0.0160,
     1.2781,  0.0144,  0.1663, -0.0741,  0.1006,  0.1297,  0.1297, -0.1297,
    -0.6243, -0.0044, -0.0738,  0.3141,  0.2881, -0.0918, -0.0918,  0.0918,
     0.7725,  0.0088,  0.0736,  0.2114,  0.3749,  0.0720,  0.0720, -0.0720,
    -0.9763, -0.0119,  0.0949, -0.0674,  0.0721,  0.9519, -0.3357,  0.3357,
    -0.9763, -0.0119,  0.0949, -0.0674,  0.0721, -0.3357,  0.9519,  0.3357,
     0.9763,  0.0119, -0.0949,  0.0674, -0.0721,  0.3357,  0.3357,  0.9519,
];

#[rustfmt::skip]
const PAPER_KF_ROBUST: [f64; 36] = [
    -1.1684,  0.6813, -0.4766,  0.0034,  0.0034, -0.0034,
     0.7282, -1.0438, -0.3054,  0.0249,  0.0249, -0.0249,
    -0.4528, -0.3418, -0.8017,  0.0284,  0.0284, -0.0284,
    -0.0200,  0.0792,  0.0584, -0.8628,  0.1381, -0.1381,
    -0.0200,  0.0792,  0.0584,  0.1381, -0.8628, -0.1381,
     0.0200, -0.0792, -0.0584, -0.1381, -0.1381, -0.8628,
];
