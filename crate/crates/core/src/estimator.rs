//! Receding-horizon estimators built on the window solver.
//!
//! Four schemes share one driver and differ only in how the parameter enters
//! the window:
//!
//! | mode          | parameter prior in window `t`          | window length |
//! |---------------|----------------------------------------|---------------|
//! | `Standard`    | `θ̂_{t−M_t}` (rolling)                  | `min(t, M)`   |
//! | `Regularized` | `θ̄₀` (constant)                        | `min(t, M)`   |
//! | `Frozen`      | `θ̂ ≡ θ̄₀`, not optimized                | `min(t, M)`   |
//! | `Fie`         | `θ̄₀` (constant)                        | `t`           |
//!
//! The state prior is always the filtering estimate `x̂_{t−M_t}` emitted
//! `M_t` steps earlier.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, MheError, Result};
use crate::model::{Matrix, SystemModel, Vector};
use crate::solver::{solve, DecisionVector, ParamPrior, SolverOptions, SolverSolution, SolverStatus, WindowProblem, WindowSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    Standard,
    Regularized,
    Frozen,
    Fie,
}

impl EstimatorMode {
    pub const ALL: [EstimatorMode; 4] = [
        EstimatorMode::Standard,
        EstimatorMode::Regularized,
        EstimatorMode::Frozen,
        EstimatorMode::Fie,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorMode::Standard => "standard",
            EstimatorMode::Regularized => "regularized",
            EstimatorMode::Frozen => "frozen",
            EstimatorMode::Fie => "fie",
        }
    }
}

impl std::str::FromStr for EstimatorMode {
    type Err = MheError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MheError::InvalidArgument(format!("unknown estimator mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    /// Horizon `M`; ignored by `Fie`.
    pub horizon: usize,
    pub discount: f64,
    pub prior_x_weight: Matrix,
    pub prior_theta_weight: Matrix,
    pub noise_weight: Matrix,
    pub output_weight: Matrix,
    pub x_prior: Vector,
    pub theta_prior: Vector,
    pub solver: SolverOptions,
}

impl EstimatorConfig {
    pub fn validate(&self, model: &dyn SystemModel) -> Result<()> {
        let d = model.dims();
        check_len("initial state prior", d.states, self.x_prior.len())?;
        check_len("initial parameter prior", d.params, self.theta_prior.len())?;
        if self.mode != EstimatorMode::Fie && self.horizon == 0 {
            return Err(MheError::InvalidArgument("horizon must be at least 1".into()));
        }
        let closed = matches!(self.mode, EstimatorMode::Standard | EstimatorMode::Frozen);
        let ok = if closed {
            (0.0..=1.0).contains(&self.discount)
        } else {
            (0.0..1.0).contains(&self.discount)
        };
        if !ok {
            let range = if closed { "[0, 1]" } else { "[0, 1)" };
            return Err(MheError::InvalidArgument(format!(
                "{} mode needs a discount factor in {range}, got {}",
                self.mode.as_str(),
                self.discount
            )));
        }
        self.solver.validate()
    }

    fn bounded(&self) -> bool {
        self.mode != EstimatorMode::Fie
    }
}

/// Position of a window in absolute time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowInfo {
    /// Time index of the window's initial state, `t − M_t`.
    pub start: usize,
    /// Window length `M_t`.
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub t: usize,
    pub x_hat: Vector,
    pub theta_hat: Vector,
    pub cost: f64,
    pub iterations: usize,
    pub status: SolverStatus,
    pub gradient_norm: f64,
    pub window: WindowInfo,
    /// State prior `x̂_{t−M_t}` the window was anchored to.
    pub prior_x: Vector,
    /// Optimal window trajectory `x̂_{t−M_t|t} … x̂_{t|t}`.
    pub window_states: Vec<Vector>,
    pub window_noise: Vec<Vector>,
    /// Cost of the externally supplied reference candidate, if any.
    pub reference_cost: Option<f64>,
    /// The returned solution came from the reference warm start.
    pub used_reference_start: bool,
    /// The solver failed and the previous estimate was propagated instead.
    pub degraded: bool,
}

/// Mutable estimator memory: data buffers, past estimates and warm start.
#[derive(Clone, Debug)]
pub struct EstimatorState {
    t: usize,
    inputs: VecDeque<Vector>,
    noise_ref: VecDeque<Vector>,
    output_ref: VecDeque<Vector>,
    /// `(x̂_k, θ̂_k)` for `k ∈ [t − M, t]` (all `k` for FIE).
    estimates: VecDeque<(Vector, Vector)>,
    warm: Option<(DecisionVector, Vec<Vector>)>,
}

impl EstimatorState {
    pub fn new(config: &EstimatorConfig) -> Self {
        let mut estimates = VecDeque::new();
        estimates.push_back((config.x_prior.clone(), config.theta_prior.clone()));
        Self {
            t: 0,
            inputs: VecDeque::new(),
            noise_ref: VecDeque::new(),
            output_ref: VecDeque::new(),
            estimates,
            warm: None,
        }
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Latest `(x̂_t, θ̂_t)`.
    pub fn latest(&self) -> (&Vector, &Vector) {
        let (x, theta) = self.estimates.back().expect("estimate buffer is never empty");
        (x, theta)
    }

    /// Estimate emitted at absolute time `k`, if still buffered.
    pub fn estimate_at(&self, k: usize) -> Option<&(Vector, Vector)> {
        let oldest = self.t + 1 - self.estimates.len();
        k.checked_sub(oldest).and_then(|i| self.estimates.get(i))
    }
}

/// A receding-horizon estimator for one model and configuration.
pub struct Estimator {
    model: Arc<dyn SystemModel>,
    config: EstimatorConfig,
    state: EstimatorState,
}

impl Estimator {
    pub fn new(model: Arc<dyn SystemModel>, config: EstimatorConfig) -> Result<Self> {
        config.validate(model.as_ref())?;
        let state = EstimatorState::new(&config);
        Ok(Self { model, config, state })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn step(&mut self, u: &Vector, y_ref: &Vector, w_ref: &Vector) -> Result<StepResult> {
        self.step_with_reference(u, y_ref, w_ref, None::<fn(WindowInfo) -> DecisionVector>)
    }

    /// Processes `(u_{t−1}, ȳ_{t−1}, w̄_{t−1})` and returns the estimate at `t`.
    ///
    /// When `reference` is given, its candidate is evaluated on the window
    /// and, if the warm-started solution costs more, the window is re-solved
    /// from the candidate and the cheaper solution kept.
    pub fn step_with_reference<F>(
        &mut self,
        u: &Vector,
        y_ref: &Vector,
        w_ref: &Vector,
        reference: Option<F>,
    ) -> Result<StepResult>
    where
        F: FnOnce(WindowInfo) -> DecisionVector,
    {
        let d = self.model.dims();
        check_len("input", d.inputs, u.len())?;
        check_len("output estimate", d.outputs, y_ref.len())?;
        check_len("noise estimate", d.noise, w_ref.len())?;

        let st = &mut self.state;
        st.inputs.push_back(u.clone());
        st.noise_ref.push_back(w_ref.clone());
        st.output_ref.push_back(y_ref.clone());
        st.t += 1;
        let grew = if self.config.bounded() && st.inputs.len() > self.config.horizon {
            st.inputs.pop_front();
            st.noise_ref.pop_front();
            st.output_ref.pop_front();
            false
        } else {
            true
        };
        let len = st.inputs.len();
        let t = st.t;
        let window = WindowInfo { start: t - len, len };
        let (prior_x, prior_theta) = st.estimates[st.estimates.len() - len].clone();

        let param = match self.config.mode {
            EstimatorMode::Standard => ParamPrior::Free {
                prior: prior_theta,
                weight: self.config.prior_theta_weight.clone(),
            },
            EstimatorMode::Regularized | EstimatorMode::Fie => ParamPrior::Free {
                prior: self.config.theta_prior.clone(),
                weight: self.config.prior_theta_weight.clone(),
            },
            EstimatorMode::Frozen => ParamPrior::Fixed(self.config.theta_prior.clone()),
        };
        let spec = WindowSpec {
            inputs: st.inputs.iter().cloned().collect(),
            noise_ref: st.noise_ref.iter().cloned().collect(),
            output_ref: st.output_ref.iter().cloned().collect(),
            prior_x: prior_x.clone(),
            prior_x_weight: self.config.prior_x_weight.clone(),
            param,
            noise_weight: self.config.noise_weight.clone(),
            output_weight: self.config.output_weight.clone(),
            discount: self.config.discount,
        };
        let model = Arc::clone(&self.model);
        let mut problem = WindowProblem::new(model.as_ref(), spec)?;

        let start = match st.warm.take() {
            None => problem.prior_candidate(),
            Some((mut z, states)) => {
                if !grew {
                    z.x_init = states[1].clone();
                    z.noise.remove(0);
                }
                z.noise.push(w_ref.clone());
                z
            }
        };
        let mut solution = solve(&mut problem, &start, &self.config.solver)?;

        let mut reference_cost = None;
        let mut used_reference_start = false;
        if let Some(make) = reference {
            let mut candidate = make(window);
            if problem.layout().params == 0 {
                candidate.theta = None;
            }
            let flat = candidate.flatten();
            if flat.len() == problem.layout().len() {
                let cost = problem.cost(&flat);
                reference_cost = Some(cost);
                if solution.cost > cost {
                    let alternative = solve(&mut problem, &candidate, &self.config.solver)?;
                    if alternative.status != SolverStatus::NumericalFailure && alternative.cost < solution.cost {
                        solution = alternative;
                        used_reference_start = true;
                    }
                }
            }
        }

        Ok(self.finish_step(&problem, solution, window, prior_x, reference_cost, used_reference_start))
    }

    fn finish_step(
        &mut self,
        problem: &WindowProblem<'_>,
        solution: SolverSolution,
        window: WindowInfo,
        prior_x: Vector,
        reference_cost: Option<f64>,
        used_reference_start: bool,
    ) -> StepResult {
        let st = &mut self.state;
        let degraded = solution.status == SolverStatus::NumericalFailure;
        let flat = solution.optimizer.flatten();
        let (window_states, theta_hat) = if degraded {
            let (x_prev, theta_prev) = st.estimates.back().expect("non-empty").clone();
            let u = st.inputs.back().expect("non-empty");
            let w = st.noise_ref.back().expect("non-empty");
            let next = self.model.dynamics(&x_prev, u, w, &theta_prev);
            st.warm = None;
            (vec![x_prev, next], theta_prev)
        } else {
            let (states, _) = problem.trajectory(&flat);
            let theta = problem.theta_of(&flat);
            st.warm = Some((solution.optimizer.clone(), states.clone()));
            (states, theta)
        };
        let x_hat = window_states.last().expect("non-empty").clone();

        st.estimates.push_back((x_hat.clone(), theta_hat.clone()));
        if self.config.bounded() && st.estimates.len() > self.config.horizon + 1 {
            st.estimates.pop_front();
        }

        StepResult {
            t: st.t,
            x_hat,
            theta_hat,
            cost: solution.cost,
            iterations: solution.iterations,
            status: solution.status,
            gradient_norm: solution.gradient_norm,
            window,
            prior_x,
            window_states,
            window_noise: solution.optimizer.noise,
            reference_cost,
            used_reference_start,
            degraded,
        }
    }
}

/// Runs an estimator over a stream of `(u_t, y_t)` pairs with `w̄_t = 0` and
/// `ȳ_t = y_t`.
pub fn run_estimator(
    model: Arc<dyn SystemModel>,
    config: EstimatorConfig,
    stream: &[(Vector, Vector)],
) -> Result<Vec<StepResult>> {
    let zero = Vector::zeros(model.dims().noise);
    let mut estimator = Estimator::new(model, config)?;
    stream.iter().map(|(u, y)| estimator.step(u, y, &zero)).collect()
}
