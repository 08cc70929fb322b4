//! Ground-truth simulation and estimator runs for the two reference
//! experiments.

mod metrics;
mod scenarios;

pub use metrics::{moving_average, normalized_param_error};
pub use scenarios::{academic_scenario, car_scenario, ACADEMIC_DEFAULT_CYCLES, ACADEMIC_DEFAULT_PERIOD, ACADEMIC_PAPER_PERIOD};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_len, MheError, Result};
use crate::estimator::{Estimator, EstimatorConfig, EstimatorMode};
use crate::model::{AcademicModel, CarModel, CarParams, Matrix, NoiseSource, NoiseSpec, SystemModel, Vector};
use crate::serde_util::{matrix_rows, vector};
use crate::solver::{DecisionVector, SolverOptions, SolverStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Academic { a: f64 },
    Car { params: CarParams },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Arc<dyn SystemModel>> {
        Ok(match self {
            ModelSpec::Academic { a } => Arc::new(AcademicModel { a: *a }),
            ModelSpec::Car { params } => Arc::new(CarModel::new(*params)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Academic { .. } => "academic",
            ModelSpec::Car { .. } => "car",
        }
    }
}

/// Open-loop input schedule `t ↦ u_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSchedule {
    /// `u_t = amplitude` when `t mod period = 0`, zero otherwise.
    Pulse { period: usize, amplitude: f64 },
    /// `turn` on steps `[turn_start, turn_end)`, `straight` elsewhere.
    Turn {
        straight: Vec<f64>,
        turn: Vec<f64>,
        turn_start: usize,
        turn_end: usize,
    },
    Constant { value: Vec<f64> },
}

impl InputSchedule {
    pub fn input(&self, t: usize) -> Vector {
        match self {
            InputSchedule::Pulse { period, amplitude } => {
                let on = *period > 0 && t % period == 0;
                Vector::from_element(1, if on { *amplitude } else { 0.0 })
            }
            InputSchedule::Turn {
                straight,
                turn,
                turn_start,
                turn_end,
            } => {
                let u = if (*turn_start..*turn_end).contains(&t) { turn } else { straight };
                Vector::from_column_slice(u)
            }
            InputSchedule::Constant { value } => Vector::from_column_slice(value),
        }
    }

    fn dim(&self) -> usize {
        match self {
            InputSchedule::Pulse { .. } => 1,
            InputSchedule::Turn { straight, .. } => straight.len(),
            InputSchedule::Constant { value } => value.len(),
        }
    }
}

/// Estimator tuning within a scenario; the initial priors come from the
/// scenario itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSetup {
    pub label: String,
    pub mode: EstimatorMode,
    pub horizon: usize,
    pub discount: f64,
    #[serde(with = "matrix_rows")]
    pub prior_x_weight: Matrix,
    #[serde(with = "matrix_rows")]
    pub prior_theta_weight: Matrix,
    #[serde(with = "matrix_rows")]
    pub noise_weight: Matrix,
    #[serde(with = "matrix_rows")]
    pub output_weight: Matrix,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSpec,
    pub steps: usize,
    pub inputs: InputSchedule,
    #[serde(with = "vector")]
    pub theta_true: Vector,
    #[serde(with = "vector")]
    pub x0: Vector,
    #[serde(with = "vector")]
    pub x_prior: Vector,
    #[serde(with = "vector")]
    pub theta_prior: Vector,
    pub process_noise: NoiseSpec,
    pub measurement_noise: NoiseSpec,
    pub seed: u64,
    pub estimators: Vec<EstimatorSetup>,
}

impl Scenario {
    pub fn estimator_config(&self, setup: &EstimatorSetup) -> EstimatorConfig {
        EstimatorConfig {
            mode: setup.mode,
            horizon: setup.horizon,
            discount: setup.discount,
            prior_x_weight: setup.prior_x_weight.clone(),
            prior_theta_weight: setup.prior_theta_weight.clone(),
            noise_weight: setup.noise_weight.clone(),
            output_weight: setup.output_weight.clone(),
            x_prior: self.x_prior.clone(),
            theta_prior: self.theta_prior.clone(),
            solver: setup.solver.clone(),
        }
    }

    pub fn validate(&self, model: &dyn SystemModel) -> Result<()> {
        if self.steps == 0 {
            return Err(MheError::InvalidArgument("scenario needs at least one step".into()));
        }
        let d = model.dims();
        check_len("true parameter", d.params, self.theta_true.len())?;
        check_len("initial state", d.states, self.x0.len())?;
        check_len("scheduled input", d.inputs, self.inputs.dim())?;
        check_len("noise", d.noise, self.process_noise.dim() + self.measurement_noise.dim())?;
        for setup in &self.estimators {
            self.estimator_config(setup).validate(model)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the scenario's JSON serialization.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Evaluate the true trajectory as a candidate in every window and
    /// re-solve from it when the warm-started optimum is more expensive.
    pub reference_fallback: bool,
}

/// Truth trajectory, `steps + 1` samples each.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthLog {
    pub inputs: Vec<Vector>,
    pub states: Vec<Vector>,
    pub noise: Vec<Vector>,
    pub outputs: Vec<Vector>,
}

impl TruthLog {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// One estimator's output at time `t`. Row 0 holds the initial prior.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub t: usize,
    pub x_hat: Vector,
    pub theta_hat: Vector,
    pub cost: f64,
    pub iterations: usize,
    /// `None` for the initial prior row.
    pub status: Option<SolverStatus>,
    pub reference_cost: Option<f64>,
    pub used_reference_start: bool,
    pub degraded: bool,
}

impl EstimateRow {
    pub fn status_str(&self) -> &'static str {
        match (self.status, self.degraded) {
            (None, _) => "prior",
            (Some(_), true) => "degraded",
            (Some(s), false) => s.as_str(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorTrack {
    pub label: String,
    pub mode: EstimatorMode,
    pub rows: Vec<EstimateRow>,
}

impl EstimatorTrack {
    pub fn state_errors(&self, truth: &TruthLog) -> Vec<f64> {
        self.rows.iter().zip(&truth.states).map(|(r, x)| (&r.x_hat - x).norm()).collect()
    }

    /// `|x̂_t[i] − x_t[i]|` over time.
    pub fn coordinate_errors(&self, truth: &TruthLog, i: usize) -> Vec<f64> {
        self.rows.iter().zip(&truth.states).map(|(r, x)| (r.x_hat[i] - x[i]).abs()).collect()
    }

    pub fn param_errors(&self, theta: &Vector) -> Vec<f64> {
        self.rows.iter().map(|r| (&r.theta_hat - theta).norm()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub seed: u64,
    pub config_digest: String,
    pub truth: TruthLog,
    pub tracks: Vec<EstimatorTrack>,
}

impl RunRecord {
    pub fn track(&self, label: &str) -> Option<&EstimatorTrack> {
        self.tracks.iter().find(|t| t.label == label)
    }
}

/// Rolls the true system forward for `steps` steps from `x0`.
pub fn simulate_truth(scenario: &Scenario, model: &dyn SystemModel) -> Result<TruthLog> {
    let mut noise = NoiseSource::new(
        scenario.process_noise.clone(),
        scenario.measurement_noise.clone(),
        scenario.seed,
    )?;
    let n = scenario.steps + 1;
    let mut log = TruthLog {
        inputs: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        noise: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
    };
    let mut x = scenario.x0.clone();
    for t in 0..n {
        let u = scenario.inputs.input(t);
        let w = noise.draw();
        let y = model.output(&x, &u, &w, &scenario.theta_true);
        let next = model.dynamics(&x, &u, &w, &scenario.theta_true);
        log.inputs.push(u);
        log.noise.push(w);
        log.outputs.push(y);
        log.states.push(std::mem::replace(&mut x, next));
    }
    Ok(log)
}

fn run_track(
    scenario: &Scenario,
    model: &Arc<dyn SystemModel>,
    setup: &EstimatorSetup,
    truth: &TruthLog,
    options: SimOptions,
) -> Result<EstimatorTrack> {
    let config = scenario.estimator_config(setup);
    let zero = Vector::zeros(model.dims().noise);
    let mut estimator = Estimator::new(Arc::clone(model), config)?;
    let mut rows = Vec::with_capacity(truth.len());
    rows.push(EstimateRow {
        t: 0,
        x_hat: scenario.x_prior.clone(),
        theta_hat: scenario.theta_prior.clone(),
        cost: 0.0,
        iterations: 0,
        status: None,
        reference_cost: None,
        used_reference_start: false,
        degraded: false,
    });
    for t in 0..scenario.steps {
        let reference = options.reference_fallback.then_some(|w: crate::estimator::WindowInfo| DecisionVector {
            x_init: truth.states[w.start].clone(),
            noise: truth.noise[w.start..w.start + w.len].to_vec(),
            theta: Some(scenario.theta_true.clone()),
        });
        let step = estimator.step_with_reference(&truth.inputs[t], &truth.outputs[t], &zero, reference)?;
        rows.push(EstimateRow {
            t: step.t,
            x_hat: step.x_hat,
            theta_hat: step.theta_hat,
            cost: step.cost,
            iterations: step.iterations,
            status: Some(step.status),
            reference_cost: step.reference_cost,
            used_reference_start: step.used_reference_start,
            degraded: step.degraded,
        });
    }
    Ok(EstimatorTrack {
        label: setup.label.clone(),
        mode: setup.mode,
        rows,
    })
}

/// Simulates the truth and runs every configured estimator on it with
/// `w̄_t = 0`, `ȳ_t = y_t`. Estimators run concurrently when the `parallel`
/// feature is on; results do not depend on it.
pub fn simulate(scenario: &Scenario, options: SimOptions) -> Result<RunRecord> {
    let model = scenario.model.build()?;
    scenario.validate(model.as_ref())?;
    let truth = simulate_truth(scenario, model.as_ref())?;
    let tracks = crate::par::map(&scenario.estimators, |setup| run_track(scenario, &model, setup, &truth, options))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord {
        scenario: scenario.clone(),
        seed: scenario.seed,
        config_digest: scenario.digest(),
        truth,
        tracks,
    })
}

/// Runs `scenario` once per seed.
pub fn simulate_seeds(scenario: &Scenario, seeds: &[u64], options: SimOptions) -> Result<Vec<RunRecord>> {
    crate::par::map(seeds, |seed| simulate(&scenario.clone().with_seed(*seed), options))
        .into_iter()
        .collect()
}
