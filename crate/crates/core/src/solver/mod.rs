//! Box-constrained Levenberg–Marquardt for moving-horizon windows.

mod window;

pub use window::{
    rollout, DecisionLayout, DecisionVector, ParamPrior, WindowProblem, WindowSpec, STATE_PENALTY_WEIGHT,
};

use window::RowBlock;

use serde::{Deserialize, Serialize};

use crate::error::{MheError, Result};
use crate::model::{BoxBounds, Matrix, Vector};

const DAMPING_FLOOR: f64 = 1e-12;
const DAMPING_CEILING: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_factor: f64,
    /// Allow finite-difference model Jacobians for models without analytic ones.
    pub finite_difference_fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            initial_damping: 1e-3,
            damping_factor: 10.0,
            finite_difference_fallback: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("initial_damping", self.initial_damping),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(MheError::InvalidArgument(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.damping_factor > 1.0) {
            return Err(MheError::InvalidArgument(format!(
                "damping_factor must exceed 1, got {}",
                self.damping_factor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIterations => "max-iter",
            SolverStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSolution {
    pub optimizer: DecisionVector,
    pub cost: f64,
    pub iterations: usize,
    pub status: SolverStatus,
    /// Projected gradient `‖z − Π(z − Jᵀr)‖_∞` at exit; equals `‖Jᵀr‖_∞` without active bounds.
    pub gradient_norm: f64,
    /// Cost of every accepted iterate, starting with the projected initial point.
    pub cost_history: Vec<f64>,
}

struct LmOutcome {
    z: Vector,
    iterations: usize,
    status: SolverStatus,
    gradient_norm: f64,
    history: Vec<f64>,
}

fn projected_gradient(z: &Vector, grad: &Vector, bounds: Option<&BoxBounds>) -> f64 {
    match bounds {
        None => grad.amax(),
        Some(b) => {
            let mut moved: Vec<f64> = (z - grad).iter().copied().collect();
            b.project(&mut moved);
            z.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        }
    }
}

/// `JᵀJ` accumulated row by row as symmetric rank-one updates, skipping the
/// structural zeros of `J`. `jac_t` is the transpose of `jac`.
fn normal_matrix(jac_t: &Matrix, blocks: &[RowBlock], tail: usize, normal: &mut Matrix) {
    let n = jac_t.nrows();
    if normal.shape() == (n, n) {
        normal.fill(0.0);
    } else {
        *normal = Matrix::zeros(n, n);
    }
    for b in blocks {
        let head = b.cols.clone();
        for k in b.rows.clone() {
            let a = jac_t.column(k);
            let a = a.as_slice();
            for c in head.clone().chain(tail..n) {
                let ac = a[c];
                if ac == 0.0 {
                    continue;
                }
                let col = &mut normal.as_mut_slice()[c * n..c * n + c + 1];
                let (lo, hi) = if c < tail { (head.start, c + 1) } else { (head.start, head.end.min(c + 1)) };
                for r in lo..hi {
                    col[r] += a[r] * ac;
                }
                if c >= tail {
                    for r in tail..=c {
                        col[r] += a[r] * ac;
                    }
                }
            }
        }
    }
    for c in 0..n {
        for r in 0..c {
            normal[(c, r)] = normal[(r, c)];
        }
    }
}

/// Solves `(normal + damping·I) x = rhs` by an in-place Cholesky
/// factorization into `work`. Returns `None` if the shifted matrix is not
/// numerically positive definite.
fn damped_solve(normal: &Matrix, damping: f64, rhs: &Vector, work: &mut Vec<f64>) -> Option<Vector> {
    let n = normal.nrows();
    work.clear();
    work.extend_from_slice(normal.as_slice());
    let l = work.as_mut_slice();
    for j in 0..n {
        l[j * n + j] += damping;
        let (done, rest) = l.split_at_mut(j * n);
        let col = &mut rest[j..n];
        let prev = |k: usize| &done[k * n + j..k * n + n];
        let mut k = 0;
        while k + 4 <= j {
            let len = col.len();
            let (p0, p1, p2, p3) = (&prev(k)[..len], &prev(k + 1)[..len], &prev(k + 2)[..len], &prev(k + 3)[..len]);
            let (a0, a1, a2, a3) = (p0[0], p1[0], p2[0], p3[0]);
            for i in 0..len {
                col[i] -= a0 * p0[i] + a1 * p1[i] + a2 * p2[i] + a3 * p3[i];
            }
            k += 4;
        }
        for k in k..j {
            let p = prev(k);
            let a = p[0];
            for (c, v) in col.iter_mut().zip(p) {
                *c -= a * v;
            }
        }
        let d = col[0];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        for c in col.iter_mut() {
            *c /= d;
        }
    }
    let mut x = rhs.clone();
    let x = x.as_mut_slice();
    for j in 0..n {
        let col = &l[j * n + j..j * n + n];
        x[j] /= col[0];
        let xj = x[j];
        for (xi, c) in x[j + 1..].iter_mut().zip(&col[1..]) {
            *xi -= xj * c;
        }
    }
    for j in (0..n).rev() {
        let col = &l[j * n + j..j * n + n];
        let dot: f64 = x[j + 1..].iter().zip(&col[1..]).map(|(a, b)| a * b).sum();
        x[j] = (x[j] - dot) / col[0];
    }
    Some(Vector::from_column_slice(x))
}

fn levenberg_marquardt(problem: &WindowProblem<'_>, z0: Vector, opts: &SolverOptions) -> LmOutcome {
    let bounds = problem.decision_bounds();
    let project = |v: &mut Vector| {
        if let Some(b) = &bounds {
            b.project(v.as_mut_slice());
        }
    };

    let mut z = z0;
    project(&mut z);
    let mut r = problem.residuals(&z);
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut damping = opts.initial_damping;
    let n = z.len();
    let blocks = problem.row_blocks();
    let tail = problem.layout().param_offset();
    let mut work = Vec::with_capacity(n * n);
    let mut jac = Matrix::zeros(problem.residual_len(), n);
    let mut jac_t = Matrix::zeros(n, jac.nrows());
    let mut normal = Matrix::zeros(n, n);

    if !cost.is_finite() {
        return LmOutcome {
            z,
            iterations: 0,
            status: SolverStatus::NumericalFailure,
            gradient_norm: f64::NAN,
            history,
        };
    }

    let mut iterations = 0;
    loop {
        problem.jacobian_into(&z, &mut jac);
        jac.transpose_to(&mut jac_t);
        let grad = &jac_t * &r;
        let gradient_norm = projected_gradient(&z, &grad, bounds.as_ref());
        let finish = |z: Vector, status, iterations, history| LmOutcome {
            z,
            iterations,
            status,
            gradient_norm,
            history,
        };
        if n == 0 || gradient_norm <= opts.gradient_tolerance {
            return finish(z, SolverStatus::Converged, iterations, history);
        }
        if iterations >= opts.max_iterations {
            return finish(z, SolverStatus::MaxIterations, iterations, history);
        }
        iterations += 1;

        normal_matrix(&jac_t, &blocks, tail, &mut normal);
        loop {
            let Some(delta) = damped_solve(&normal, damping, &grad, &mut work) else {
                damping *= opts.damping_factor;
                if damping > DAMPING_CEILING {
                    return finish(z, SolverStatus::NumericalFailure, iterations, history);
                }
                continue;
            };
            let mut candidate = &z - delta;
            project(&mut candidate);
            let step = (&candidate - &z).norm();
            if step <= opts.step_tolerance * (opts.step_tolerance + z.norm()) {
                return finish(z, SolverStatus::Converged, iterations, history);
            }
            let r_new = problem.residuals(&candidate);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                z = candidate;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                damping = (damping / opts.damping_factor).max(DAMPING_FLOOR);
                break;
            }
            damping *= opts.damping_factor;
            if damping > DAMPING_CEILING {
                let status = if cost_new.is_finite() {
                    SolverStatus::Converged
                } else {
                    SolverStatus::NumericalFailure
                };
                return finish(z, status, iterations, history);
            }
        }
    }
}

/// Minimizes the window cost from `z0`.
///
/// `z0` is projected onto the noise/parameter box first; every accepted step
/// strictly lowers the cost. If the model has a state box and the solution
/// leaves it, the problem is re-solved once with a quadratic penalty on the
/// violation.
pub fn solve(problem: &mut WindowProblem<'_>, z0: &DecisionVector, opts: &SolverOptions) -> Result<SolverSolution> {
    opts.validate()?;
    if !problem.model().has_analytic_jacobians() && !opts.finite_difference_fallback {
        return Err(MheError::InvalidArgument(
            "model has no analytic Jacobians and finite-difference fallback is disabled".into(),
        ));
    }
    let layout = problem.layout();
    let start = z0.flatten();
    crate::error::check_len("initial decision vector", layout.len(), start.len())?;

    problem.set_state_penalty(false);
    let mut outcome = levenberg_marquardt(problem, start, opts);
    if outcome.status != SolverStatus::NumericalFailure && !problem.states_feasible(&outcome.z) {
        problem.set_state_penalty(true);
        let history = std::mem::take(&mut outcome.history);
        let base_iterations = outcome.iterations;
        outcome = levenberg_marquardt(problem, outcome.z, opts);
        outcome.iterations += base_iterations;
        outcome.history = history;
        problem.set_state_penalty(false);
    }

    let cost = problem.cost(&outcome.z);
    Ok(SolverSolution {
        optimizer: DecisionVector::unflatten(&layout, &outcome.z)?,
        cost,
        iterations: outcome.iterations,
        status: outcome.status,
        gradient_norm: outcome.gradient_norm,
        cost_history: outcome.history,
    })
}
