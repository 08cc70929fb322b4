//! System abstraction for discrete-time models of the form
//!
//! ```text
//! x⁺ = f(x, u, w, θ),   y = h(x, u, w, θ)
//! ```
//!
//! with state `x`, input `u`, noise `w` (process and measurement noise
//! stacked in one vector), constant parameter `θ` and output `y`.
//!
//! Two concrete models ship with the crate: [`AcademicModel`], a scalar
//! system whose parameter only enters the output, and [`CarModel`], a
//! dynamic bicycle model with Pacejka lateral tire forces.

mod academic;
mod car;
mod noise;

pub use academic::AcademicModel;
pub use car::{pacejka_forces, pacejka_forces_with_floor, CarModel, CarParams, TireForces, VX_FLOOR};
pub use noise::{NoiseSource, NoiseSpec};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, MheError, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Sizes of the vectors a model consumes and produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub states: usize,
    pub inputs: usize,
    pub noise: usize,
    pub params: usize,
    pub outputs: usize,
}

/// Coordinate-wise box `lower ≤ v ≤ upper`. Infinite entries are allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box upper bound", lower.len(), upper.len())?;
        if let Some(index) = lower
            .iter()
            .zip(&upper)
            .position(|(lo, hi)| lo > hi || lo.is_nan() || hi.is_nan())
        {
            return Err(MheError::InvalidBounds { index });
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `|v_i| ≤ radius_i`.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        Self::new(radius.iter().map(|r| -r).collect(), radius.to_vec())
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|v| *v == f64::NEG_INFINITY)
            && self.upper.iter().all(|v| *v == f64::INFINITY)
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Projects `v` onto the box in place.
    pub fn project(&self, v: &mut [f64]) {
        for (x, (lo, hi)) in v.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }
}

/// Partial derivatives of a model map with respect to `(x, w, θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobians {
    pub state: Matrix,
    pub noise: Matrix,
    pub params: Matrix,
}

/// A discrete-time nonlinear system with unknown constant parameters.
///
/// `dynamics` and `output` are called with correctly sized arguments; use
/// [`step_dynamics`] and [`output_map`] for checked evaluation. Models without
/// analytic Jacobians fall back to central finite differences.
pub trait SystemModel: Send + Sync {
    fn dims(&self) -> Dimensions;

    fn dynamics(&self, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Vector;

    fn output(&self, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Vector;

    fn dynamics_jacobians(
        &self,
        _x: &Vector,
        _u: &Vector,
        _w: &Vector,
        _theta: &Vector,
    ) -> Option<Jacobians> {
        None
    }

    fn output_jacobians(
        &self,
        _x: &Vector,
        _u: &Vector,
        _w: &Vector,
        _theta: &Vector,
    ) -> Option<Jacobians> {
        None
    }

    fn state_bounds(&self) -> Option<&BoxBounds> {
        None
    }

    fn noise_bounds(&self) -> Option<&BoxBounds> {
        None
    }

    fn param_bounds(&self) -> Option<&BoxBounds> {
        None
    }

    fn has_analytic_jacobians(&self) -> bool {
        false
    }
}

fn check_args(model: &dyn SystemModel, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Result<()> {
    let d = model.dims();
    check_len("state", d.states, x.len())?;
    check_len("input", d.inputs, u.len())?;
    check_len("noise", d.noise, w.len())?;
    check_len("parameter", d.params, theta.len())
}

/// Checked evaluation of `f(x, u, w, θ)`.
pub fn step_dynamics(model: &dyn SystemModel, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Result<Vector> {
    check_args(model, x, u, w, theta)?;
    Ok(model.dynamics(x, u, w, theta))
}

/// Checked evaluation of `h(x, u, w, θ)`.
pub fn output_map(model: &dyn SystemModel, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Result<Vector> {
    check_args(model, x, u, w, theta)?;
    Ok(model.output(x, u, w, theta))
}

/// Central finite-difference Jacobians of `map` with respect to `(x, w, θ)`,
/// using the step `1e-6·(1 + |coordinate|)`.
pub fn finite_difference_jacobians<F>(map: F, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Jacobians
where
    F: Fn(&Vector, &Vector, &Vector, &Vector) -> Vector,
{
    fn column_diffs(point: &Vector, eval: impl Fn(&Vector) -> Vector, rows: usize) -> Matrix {
        let mut jac = Matrix::zeros(rows, point.len());
        let mut probe = point.clone();
        for i in 0..point.len() {
            let h = 1e-6 * (1.0 + point[i].abs());
            probe[i] = point[i] + h;
            let plus = eval(&probe);
            probe[i] = point[i] - h;
            let minus = eval(&probe);
            probe[i] = point[i];
            jac.set_column(i, &((plus - minus) / (2.0 * h)));
        }
        jac
    }

    let rows = map(x, u, w, theta).len();
    Jacobians {
        state: column_diffs(x, |p| map(p, u, w, theta), rows),
        noise: column_diffs(w, |p| map(x, u, p, theta), rows),
        params: column_diffs(theta, |p| map(x, u, w, p), rows),
    }
}

/// Jacobians of `f`, analytic when the model provides them.
pub fn dynamics_jacobians(model: &dyn SystemModel, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Jacobians {
    model
        .dynamics_jacobians(x, u, w, theta)
        .unwrap_or_else(|| finite_difference_jacobians(|x, u, w, t| model.dynamics(x, u, w, t), x, u, w, theta))
}

/// Jacobians of `h`, analytic when the model provides them.
pub fn output_jacobians(model: &dyn SystemModel, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Jacobians {
    model
        .output_jacobians(x, u, w, theta)
        .unwrap_or_else(|| finite_difference_jacobians(|x, u, w, t| model.output(x, u, w, t), x, u, w, theta))
}

type ModelFn = dyn Fn(&Vector, &Vector, &Vector, &Vector) -> Vector + Send + Sync;

/// A user-supplied model built from closures. Jacobians are always obtained by
/// finite differences.
pub struct FnModel {
    dims: Dimensions,
    dynamics: Box<ModelFn>,
    output: Box<ModelFn>,
    state_bounds: Option<BoxBounds>,
    noise_bounds: Option<BoxBounds>,
    param_bounds: Option<BoxBounds>,
}

impl FnModel {
    pub fn new<F, H>(dims: Dimensions, dynamics: F, output: H) -> Self
    where
        F: Fn(&Vector, &Vector, &Vector, &Vector) -> Vector + Send + Sync + 'static,
        H: Fn(&Vector, &Vector, &Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        Self {
            dims,
            dynamics: Box::new(dynamics),
            output: Box::new(output),
            state_bounds: None,
            noise_bounds: None,
            param_bounds: None,
        }
    }

    pub fn with_state_bounds(mut self, bounds: BoxBounds) -> Result<Self> {
        check_len("state bounds", self.dims.states, bounds.dim())?;
        self.state_bounds = Some(bounds);
        Ok(self)
    }

    pub fn with_noise_bounds(mut self, bounds: BoxBounds) -> Result<Self> {
        check_len("noise bounds", self.dims.noise, bounds.dim())?;
        self.noise_bounds = Some(bounds);
        Ok(self)
    }

    pub fn with_param_bounds(mut self, bounds: BoxBounds) -> Result<Self> {
        check_len("parameter bounds", self.dims.params, bounds.dim())?;
        self.param_bounds = Some(bounds);
        Ok(self)
    }
}

impl SystemModel for FnModel {
    fn dims(&self) -> Dimensions {
        self.dims
    }

    fn dynamics(&self, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Vector {
        (self.dynamics)(x, u, w, theta)
    }

    fn output(&self, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Vector {
        (self.output)(x, u, w, theta)
    }

    fn state_bounds(&self) -> Option<&BoxBounds> {
        self.state_bounds.as_ref()
    }

    fn noise_bounds(&self) -> Option<&BoxBounds> {
        self.noise_bounds.as_ref()
    }

    fn param_bounds(&self) -> Option<&BoxBounds> {
        self.param_bounds.as_ref()
    }
}
