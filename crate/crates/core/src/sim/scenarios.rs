use crate::estimator::EstimatorMode;
use crate::model::{CarParams, Matrix, NoiseSpec, Vector};
use crate::solver::SolverOptions;

use super::{EstimatorSetup, InputSchedule, ModelSpec, Scenario};

/// Pulse period of the original academic experiment.
pub const ACADEMIC_PAPER_PERIOD: usize = 10_000;
/// Shorter desk-scale period; drift is already visible at this length.
pub const ACADEMIC_DEFAULT_PERIOD: usize = 1_000;
pub const ACADEMIC_DEFAULT_CYCLES: usize = 3;

fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(values))
}

/// Scalar example with constant sensor biases and a sparse pulse input:
/// `u_t = 1` iff `t mod period = 0`. Runs `period · cycles` steps with the
/// standard and regularized estimators (`M = 20`, `η = 0.99`, `Q = I₃`,
/// `R = I₂`, `P_x = P_θ = 10`).
pub fn academic_scenario(period: usize, cycles: usize) -> Scenario {
    let setup = |label: &str, mode| EstimatorSetup {
        label: label.to_string(),
        mode,
        horizon: 20,
        discount: 0.99,
        prior_x_weight: diag(&[10.0]),
        prior_theta_weight: diag(&[10.0]),
        noise_weight: Matrix::identity(3, 3),
        output_weight: Matrix::identity(2, 2),
        solver: SolverOptions::default(),
    };
    Scenario {
        name: "academic".into(),
        model: ModelSpec::Academic { a: 0.99 },
        steps: period * cycles,
        inputs: InputSchedule::Pulse { period, amplitude: 1.0 },
        theta_true: Vector::from_element(1, 1.0),
        x0: Vector::from_element(1, 1.0),
        x_prior: Vector::from_element(1, 1.0),
        theta_prior: Vector::from_element(1, 1.1),
        process_noise: NoiseSpec::Constant { values: vec![0.0] },
        measurement_noise: NoiseSpec::Constant { values: vec![-0.1, 0.1] },
        seed: 0,
        estimators: vec![
            setup("standard", EstimatorMode::Standard),
            setup("regularized", EstimatorMode::Regularized),
        ],
    }
}

/// Miniature race car driving straight, turning right on `t·Δt ∈ [3 s, 6 s)`
/// and driving straight again, 10 s in total. Uniform noise on
/// `‖w_x‖_∞ ≤ 0.01`, `|w_y| ≤ (0.2, 0.2, 0.01)`; prior `θ̄₀ = 2θ`.
pub fn car_scenario(seed: u64) -> Scenario {
    let params = CarParams::default();
    let steps_per_second = (1.0 / params.dt).round() as usize;
    let setup = |label: &str, mode| EstimatorSetup {
        label: label.to_string(),
        mode,
        horizon: 20,
        discount: 0.9,
        prior_x_weight: Matrix::identity(6, 6),
        prior_theta_weight: Matrix::identity(2, 2),
        noise_weight: diag(&[1e4, 1e4, 1e4, 1e4, 1e4, 1e4, 25.0, 25.0, 1e4]),
        output_weight: diag(&[25.0, 25.0, 1e4]),
        solver: SolverOptions::default(),
    };
    let theta = params.theta();
    Scenario {
        name: "car".into(),
        model: ModelSpec::Car { params },
        steps: 10 * steps_per_second,
        inputs: InputSchedule::Turn {
            straight: vec![0.0, 0.01],
            turn: vec![-0.03, 0.01],
            turn_start: 3 * steps_per_second,
            turn_end: 6 * steps_per_second,
        },
        theta_prior: &theta * 2.0,
        theta_true: theta,
        x0: Vector::from_vec(vec![0.0, 0.0, 0.0, 4.0, 0.0, 0.0]),
        x_prior: Vector::from_vec(vec![0.0, 0.0, 0.0, 3.8, 0.0, 0.0]),
        process_noise: NoiseSpec::symmetric_box(&[0.01; 6]),
        measurement_noise: NoiseSpec::symmetric_box(&[0.2, 0.2, 0.01]),
        seed,
        estimators: vec![
            setup("standard", EstimatorMode::Standard),
            setup("regularized", EstimatorMode::Regularized),
            setup("frozen", EstimatorMode::Frozen),
        ],
    }
}
