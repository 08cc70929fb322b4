//! Certificate quantities for the regularized estimator.
//!
//! Given a δ-IOOS Lyapunov function with matrices `P₁, P_{2,x}, P_{2,θ}, Q, R`
//! and decay `η`, a horizon `M` with `ρ^M := 4 η^M λ_max(P_{2,x}, P₁) < 1`
//! makes the estimation error satisfy
//!
//! ```text
//! ‖x̂_t − x_t‖ ≤ max{ C₁ λ₁^t ‖(x₀,θ) − (x̄₀,θ̄₀)‖,
//!                    max_j C₂ λ₂^{t−j−1} ‖w_j − w̄_j‖,
//!                    max_j C₃ λ₃^{t−j−1} ‖y_j − ȳ_j‖,
//!                    ε }
//! ```
//!
//! with `λ₁ = √ρ`, `λ₂ = λ₃ = ρ^{1/4}` and the constants computed here. The
//! Lyapunov check is a sampling-based falsifier, not a proof.

use nalgebra::{Cholesky, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_len, MheError, Result};
use crate::model::{BoxBounds, Matrix, SystemModel, Vector};

fn check_square(name: &'static str, m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(MheError::InvalidArgument(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(MheError::InvalidArgument(format!("{name} must be symmetric")));
    }
    Ok(())
}

fn eigenvalues(m: &Matrix) -> Vector {
    SymmetricEigen::new(m.clone()).eigenvalues
}

fn lambda_max(m: &Matrix) -> f64 {
    eigenvalues(m).max()
}

fn lambda_min(m: &Matrix) -> f64 {
    eigenvalues(m).min()
}

/// Largest `λ` with `det(A − λB) = 0` for symmetric `A` and symmetric
/// positive definite `B`, via `B = LLᵀ` and the eigenvalues of `L⁻¹AL⁻ᵀ`.
pub fn generalized_max_eig(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_square("A", a)?;
    check_square("B", b)?;
    check_len("generalized eigenproblem", a.nrows(), b.nrows())?;
    let chol = Cholesky::new(b.clone()).ok_or(MheError::NotPositiveDefinite("B"))?;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(a)
        .ok_or(MheError::NotPositiveDefinite("B"))?;
    let c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(MheError::NotPositiveDefinite("B"))?;
    let sym = (&c + c.transpose()) * 0.5;
    Ok(lambda_max(&sym))
}

/// Matrices of a δ-IOOS Lyapunov function and its decay rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectabilityMatrices {
    pub p1: Matrix,
    pub p2_x: Matrix,
    pub p2_theta: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub discount: f64,
}

impl DetectabilityMatrices {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("P1", &self.p1), ("P2_x", &self.p2_x), ("P2_theta", &self.p2_theta)] {
            check_square(name, m)?;
            if m.nrows() > 0 && lambda_min(m) <= 0.0 {
                return Err(MheError::NotPositiveDefinite(name));
            }
        }
        for (name, m) in [("Q", &self.q), ("R", &self.r)] {
            check_square(name, m)?;
            if m.nrows() > 0 && lambda_min(m) < -1e-12 * m.amax().max(1.0) {
                return Err(MheError::InvalidArgument(format!("{name} must be positive semi-definite")));
            }
        }
        check_len("P2_x", self.p1.nrows(), self.p2_x.nrows())?;
        if !(0.0..1.0).contains(&self.discount) {
            return Err(MheError::InvalidArgument(format!(
                "decay rate must lie in [0, 1), got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

/// Horizon condition evaluated for one `M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Contraction {
    /// `ρ^M = 4 η^M λ_max(P_{2,x}, P₁)`.
    pub rho_pow_m: f64,
    pub rho: f64,
    /// `ρ^M < 1` (strict).
    pub satisfied: bool,
}

pub fn contraction_from_lambda(discount: f64, horizon: usize, lambda: f64) -> Result<Contraction> {
    if horizon == 0 {
        return Err(MheError::InvalidArgument("horizon must be at least 1".into()));
    }
    let rho_pow_m = 4.0 * discount.powi(horizon as i32) * lambda;
    Ok(Contraction {
        rho_pow_m,
        rho: rho_pow_m.powf(1.0 / horizon as f64),
        satisfied: rho_pow_m < 1.0,
    })
}

pub fn contraction_rate(discount: f64, horizon: usize, p2_x: &Matrix, p1: &Matrix) -> Result<Contraction> {
    contraction_from_lambda(discount, horizon, generalized_max_eig(p2_x, p1)?)
}

/// Smallest `M ≥ 1` with `4 η^M λ < 1`, or `None` when no horizon works.
pub fn min_horizon_from_lambda(discount: f64, lambda: f64) -> Option<usize> {
    if !(0.0..1.0).contains(&discount) || !lambda.is_finite() || lambda < 0.0 {
        return None;
    }
    let holds = |m: usize| 4.0 * discount.powi(m as i32) * lambda < 1.0;
    if holds(1) {
        return Some(1);
    }
    // 4 η^M λ < 1  ⇔  M > ln(1/(4λ)) / ln η
    let estimate = ((1.0 / (4.0 * lambda)).ln() / discount.ln()).floor();
    if !estimate.is_finite() || estimate > i32::MAX as f64 / 2.0 {
        return None;
    }
    let mut m = (estimate as usize + 1).max(1);
    while !holds(m) {
        m += 1;
    }
    while m > 1 && holds(m - 1) {
        m -= 1;
    }
    Some(m)
}

pub fn min_horizon(discount: f64, p2_x: &Matrix, p1: &Matrix) -> Result<Option<usize>> {
    Ok(min_horizon_from_lambda(discount, generalized_max_eig(p2_x, p1)?))
}

/// Practical offset `ε = 4/√(1−ρ) · √(λ_max(P_{2,θ})/λ_min(P₁)) · √ρ^M · ‖θ̄₀ − θ‖`.
pub fn practical_offset(rho: f64, horizon: usize, p2_theta: &Matrix, p1: &Matrix, param_error: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(MheError::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(4.0 / (1.0 - rho).sqrt()
        * (lambda_max(p2_theta) / lambda_min(p1)).sqrt()
        * rho.sqrt().powi(horizon as i32)
        * param_error)
}

/// Constants of the max-form error bound; only defined when the horizon
/// condition holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    pub rho: f64,
    pub epsilon: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoremConstants {
    pub horizon: usize,
    pub contraction: Contraction,
    pub min_horizon: Option<usize>,
    pub bound: Option<BoundConstants>,
}

pub fn theorem_constants(matrices: &DetectabilityMatrices, horizon: usize, param_error: f64) -> Result<TheoremConstants> {
    matrices.validate()?;
    let lambda = generalized_max_eig(&matrices.p2_x, &matrices.p1)?;
    let contraction = contraction_from_lambda(matrices.discount, horizon, lambda)?;
    let bound = if contraction.satisfied {
        let rho = contraction.rho;
        let p1_min = lambda_min(&matrices.p1);
        let c_p = lambda_max(&matrices.p2_x).max(lambda_max(&matrices.p2_theta));
        let quarter = rho.powf(0.25);
        let noise_gain = |m: &Matrix| {
            let top = if m.nrows() == 0 { 0.0 } else { lambda_max(m).max(0.0) };
            8.0 / (1.0 - quarter) * (top / p1_min).sqrt()
        };
        Some(BoundConstants {
            rho,
            epsilon: practical_offset(rho, horizon, &matrices.p2_theta, &matrices.p1, param_error)?,
            lambda1: rho.sqrt(),
            lambda2: quarter,
            lambda3: quarter,
            c1: 8.0 * (c_p / p1_min).sqrt(),
            c2: noise_gain(&matrices.q),
            c3: noise_gain(&matrices.r),
        })
    } else {
        None
    };
    Ok(TheoremConstants {
        horizon,
        contraction,
        min_horizon: min_horizon_from_lambda(matrices.discount, lambda),
        bound,
    })
}

/// Right-hand side of the max-form bound at time `t`.
///
/// `noise_dev[j] = ‖w_j − w̄_j‖` and `output_dev[j] = ‖y_j − ȳ_j‖` for
/// `j = 0..t−1`; `initial_error = ‖(x₀, θ) − (x̄₀, θ̄₀)‖`.
pub fn error_bound(
    t: usize,
    constants: &BoundConstants,
    initial_error: f64,
    noise_dev: &[f64],
    output_dev: &[f64],
) -> Result<f64> {
    check_len("noise deviation history", t, noise_dev.len())?;
    check_len("output deviation history", t, output_dev.len())?;
    let decayed = |gain: f64, rate: f64, history: &[f64]| {
        history
            .iter()
            .enumerate()
            .map(|(j, d)| gain * rate.powi((t - j - 1) as i32) * d)
            .fold(0.0, f64::max)
    };
    let initial = constants.c1 * constants.lambda1.powi(t as i32) * initial_error;
    Ok(initial
        .max(decayed(constants.c2, constants.lambda2, noise_dev))
        .max(decayed(constants.c3, constants.lambda3, output_dev))
        .max(constants.epsilon))
}

/// One pair of trajectories' worth of arguments for the Lyapunov inequalities.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSample {
    pub x: Vector,
    pub x_tilde: Vector,
    pub u: Vector,
    pub w: Vector,
    pub w_tilde: Vector,
    pub theta: Vector,
    pub theta_tilde: Vector,
}

/// Draws [`LyapunovSample`]s uniformly from finite boxes.
pub struct UniformSampler {
    state: BoxBounds,
    input: BoxBounds,
    noise: BoxBounds,
    params: BoxBounds,
    rng: ChaCha8Rng,
}

impl UniformSampler {
    pub fn new(state: BoxBounds, input: BoxBounds, noise: BoxBounds, params: BoxBounds, seed: u64) -> Result<Self> {
        for b in [&state, &input, &noise, &params] {
            if b.lower().iter().chain(b.upper()).any(|v| !v.is_finite()) {
                return Err(MheError::InvalidArgument("sampling boxes must be finite".into()));
            }
        }
        Ok(Self {
            state,
            input,
            noise,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn draw(rng: &mut ChaCha8Rng, b: &BoxBounds) -> Vector {
        Vector::from_iterator(
            b.dim(),
            b.lower().iter().zip(b.upper()).map(|(lo, hi)| if lo < hi { rng.gen_range(*lo..=*hi) } else { *lo }),
        )
    }

    pub fn sample(&mut self) -> LyapunovSample {
        let rng = &mut self.rng;
        LyapunovSample {
            x: Self::draw(rng, &self.state),
            x_tilde: Self::draw(rng, &self.state),
            u: Self::draw(rng, &self.input),
            w: Self::draw(rng, &self.noise),
            w_tilde: Self::draw(rng, &self.noise),
            theta: Self::draw(rng, &self.params),
            theta_tilde: Self::draw(rng, &self.params),
        }
    }
}

/// Violation counts and worst (smallest) margins; a margin below zero is a
/// violation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub samples: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub decrease_violations: usize,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    pub worst_decrease_margin: f64,
}

impl LyapunovReport {
    pub fn violations(&self) -> usize {
        self.lower_violations + self.upper_violations + self.decrease_violations
    }
}

fn quad(v: &Vector, m: &Matrix) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

/// Checks the sandwich bounds and the decrease condition of a candidate
/// `W(x, x̃, θ, θ̃)` on `samples` draws.
pub fn lyapunov_sample_check<W, S>(
    candidate: W,
    model: &dyn SystemModel,
    matrices: &DetectabilityMatrices,
    mut sampler: S,
    samples: usize,
) -> Result<LyapunovReport>
where
    W: Fn(&Vector, &Vector, &Vector, &Vector) -> f64,
    S: FnMut() -> LyapunovSample,
{
    let d = model.dims();
    let mut report = LyapunovReport {
        samples,
        lower_violations: 0,
        upper_violations: 0,
        decrease_violations: 0,
        worst_lower_margin: f64::INFINITY,
        worst_upper_margin: f64::INFINITY,
        worst_decrease_margin: f64::INFINITY,
    };
    for _ in 0..samples {
        let s = sampler();
        check_len("sampled state", d.states, s.x.len())?;
        check_len("sampled state", d.states, s.x_tilde.len())?;
        check_len("sampled input", d.inputs, s.u.len())?;
        check_len("sampled noise", d.noise, s.w.len())?;
        check_len("sampled noise", d.noise, s.w_tilde.len())?;
        check_len("sampled parameter", d.params, s.theta.len())?;
        check_len("sampled parameter", d.params, s.theta_tilde.len())?;

        let value = candidate(&s.x, &s.x_tilde, &s.theta, &s.theta_tilde);
        let dx = &s.x - &s.x_tilde;
        let dtheta = &s.theta - &s.theta_tilde;
        let lower = value - quad(&dx, &matrices.p1);
        let upper = quad(&dx, &matrices.p2_x) + quad(&dtheta, &matrices.p2_theta) - value;

        let next = model.dynamics(&s.x, &s.u, &s.w, &s.theta);
        let next_tilde = model.dynamics(&s.x_tilde, &s.u, &s.w_tilde, &s.theta_tilde);
        let y = model.output(&s.x, &s.u, &s.w, &s.theta);
        let y_tilde = model.output(&s.x_tilde, &s.u, &s.w_tilde, &s.theta_tilde);
        let decrease = matrices.discount * value
            + quad(&(&s.w - &s.w_tilde), &matrices.q)
            + quad(&(y - y_tilde), &matrices.r)
            - candidate(&next, &next_tilde, &s.theta, &s.theta_tilde);

        report.lower_violations += usize::from(lower < 0.0);
        report.upper_violations += usize::from(upper < 0.0);
        report.decrease_violations += usize::from(decrease < 0.0);
        report.worst_lower_margin = report.worst_lower_margin.min(lower);
        report.worst_upper_margin = report.worst_upper_margin.min(upper);
        report.worst_decrease_margin = report.worst_decrease_margin.min(decrease);
    }
    Ok(report)
}
