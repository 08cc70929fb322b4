//! One moving-horizon window as a nonlinear least-squares problem.
//!
//! The window covers `M_t` samples. Its decision variables are the initial
//! state, the `M_t` noise estimates (oldest first) and, unless the parameter
//! is fixed, the parameter estimate. States and outputs are eliminated by
//! forward simulation, so the dynamics hold by construction.

use std::ops::Range;

use nalgebra::Cholesky;

use crate::error::{check_len, MheError, Result};
use crate::model::{dynamics_jacobians, output_jacobians, BoxBounds, SystemModel, Vector, Matrix};

/// Forward simulation of `x_{k+1} = f(x_k, u_k, w_k, θ)`, `y_k = h(x_k, u_k, w_k, θ)`.
///
/// Returns `M+1` states and `M` outputs for sequences of length `M`.
pub fn rollout(
    model: &dyn SystemModel,
    x_init: &Vector,
    theta: &Vector,
    inputs: &[Vector],
    noise: &[Vector],
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let d = model.dims();
    check_len("initial state", d.states, x_init.len())?;
    check_len("parameter", d.params, theta.len())?;
    check_len("noise sequence", inputs.len(), noise.len())?;
    for (u, w) in inputs.iter().zip(noise) {
        check_len("input", d.inputs, u.len())?;
        check_len("noise", d.noise, w.len())?;
    }
    Ok(rollout_unchecked(model, x_init, theta, inputs, noise))
}

pub(crate) fn rollout_unchecked(
    model: &dyn SystemModel,
    x_init: &Vector,
    theta: &Vector,
    inputs: &[Vector],
    noise: &[Vector],
) -> (Vec<Vector>, Vec<Vector>) {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut outputs = Vec::with_capacity(inputs.len());
    states.push(x_init.clone());
    for (u, w) in inputs.iter().zip(noise) {
        let x = states.last().expect("non-empty");
        outputs.push(model.output(x, u, w, theta));
        let next = model.dynamics(x, u, w, theta);
        states.push(next);
    }
    (states, outputs)
}

/// How the window treats the unknown parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamPrior {
    /// `θ̂` is a decision variable penalized by `‖θ̂ − prior‖²_weight`.
    Free { prior: Vector, weight: Matrix },
    /// `θ̂` is held at the given value and is not optimized.
    Fixed(Vector),
}

/// Data and weights defining one window.
#[derive(Clone, Debug)]
pub struct WindowSpec {
    pub inputs: Vec<Vector>,
    /// Noise estimates `w̄`, oldest first.
    pub noise_ref: Vec<Vector>,
    /// Output estimates `ȳ`, oldest first.
    pub output_ref: Vec<Vector>,
    pub prior_x: Vector,
    pub prior_x_weight: Matrix,
    pub param: ParamPrior,
    pub noise_weight: Matrix,
    pub output_weight: Matrix,
    pub discount: f64,
}

/// Sizes and offsets of the flattened decision vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionLayout {
    pub states: usize,
    pub horizon: usize,
    pub noise: usize,
    /// Zero when the parameter is fixed.
    pub params: usize,
}

impl DecisionLayout {
    pub fn len(&self) -> usize {
        self.states + self.horizon * self.noise + self.params
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn noise_offset(&self, k: usize) -> usize {
        self.states + k * self.noise
    }

    pub fn param_offset(&self) -> usize {
        self.states + self.horizon * self.noise
    }
}

/// Structured view of the decision variables `(x̂_init, ŵ_0..ŵ_{M−1}, θ̂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    pub x_init: Vector,
    pub noise: Vec<Vector>,
    /// `None` when the parameter is fixed.
    pub theta: Option<Vector>,
}

impl DecisionVector {
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::with_capacity(self.x_init.len() + self.noise.iter().map(|w| w.len()).sum::<usize>() + 2);
        out.extend_from_slice(self.x_init.as_slice());
        for w in &self.noise {
            out.extend_from_slice(w.as_slice());
        }
        if let Some(theta) = &self.theta {
            out.extend_from_slice(theta.as_slice());
        }
        Vector::from_vec(out)
    }

    pub fn unflatten(layout: &DecisionLayout, flat: &Vector) -> Result<Self> {
        check_len("decision vector", layout.len(), flat.len())?;
        let slice = |start: usize, len: usize| Vector::from_column_slice(&flat.as_slice()[start..start + len]);
        Ok(Self {
            x_init: slice(0, layout.states),
            noise: (0..layout.horizon).map(|k| slice(layout.noise_offset(k), layout.noise)).collect(),
            theta: (layout.params > 0).then(|| slice(layout.param_offset(), layout.params)),
        })
    }
}

fn weight_root(name: &'static str, weight: &Matrix, dim: usize) -> Result<Matrix> {
    if weight.nrows() != dim || weight.ncols() != dim {
        return Err(MheError::DimensionMismatch {
            what: name,
            expected: dim,
            got: weight.nrows().max(weight.ncols()),
        });
    }
    let scale = weight.amax().max(f64::MIN_POSITIVE);
    if (weight - weight.transpose()).amax() > 1e-12 * scale {
        return Err(MheError::NotPositiveDefinite(name));
    }
    if dim == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    // P = L Lᵀ, so ‖Lᵀ v‖² = vᵀ P v
    Cholesky::new(weight.clone())
        .map(|c| c.l().transpose())
        .ok_or(MheError::NotPositiveDefinite(name))
}

/// Rows of a Jacobian whose non-zeros lie in `cols` plus the parameter tail.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RowBlock {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

/// Penalty weight applied to state-box violations when reinforcing a solution.
pub const STATE_PENALTY_WEIGHT: f64 = 1e6;

/// A window ready for evaluation: validated data plus factored weights.
pub struct WindowProblem<'a> {
    model: &'a dyn SystemModel,
    spec: WindowSpec,
    layout: DecisionLayout,
    fixed_theta: Option<Vector>,
    prior_x_root: Matrix,
    param_root: Option<(Vector, Matrix)>,
    noise_root: Matrix,
    output_root: Matrix,
    state_penalty: bool,
}

impl<'a> WindowProblem<'a> {
    pub fn new(model: &'a dyn SystemModel, spec: WindowSpec) -> Result<Self> {
        let d = model.dims();
        let horizon = spec.inputs.len();
        check_len("noise estimates", horizon, spec.noise_ref.len())?;
        check_len("output estimates", horizon, spec.output_ref.len())?;
        for ((u, w), y) in spec.inputs.iter().zip(&spec.noise_ref).zip(&spec.output_ref) {
            check_len("input", d.inputs, u.len())?;
            check_len("noise estimate", d.noise, w.len())?;
            check_len("output estimate", d.outputs, y.len())?;
        }
        check_len("state prior", d.states, spec.prior_x.len())?;
        if !(0.0..=1.0).contains(&spec.discount) {
            return Err(MheError::InvalidArgument(format!(
                "discount factor must lie in [0, 1], got {}",
                spec.discount
            )));
        }
        let prior_x_root = weight_root("P_x", &spec.prior_x_weight, d.states)?;
        let noise_root = weight_root("Q", &spec.noise_weight, d.noise)?;
        let output_root = weight_root("R", &spec.output_weight, d.outputs)?;
        let (fixed_theta, param_root, params) = match &spec.param {
            ParamPrior::Free { prior, weight } => {
                check_len("parameter prior", d.params, prior.len())?;
                let root = weight_root("P_theta", weight, d.params)?;
                (None, Some((prior.clone(), root)), d.params)
            }
            ParamPrior::Fixed(theta) => {
                check_len("fixed parameter", d.params, theta.len())?;
                (Some(theta.clone()), None, 0)
            }
        };
        Ok(Self {
            model,
            layout: DecisionLayout {
                states: d.states,
                horizon,
                noise: d.noise,
                params,
            },
            spec,
            fixed_theta,
            prior_x_root,
            param_root,
            noise_root,
            output_root,
            state_penalty: false,
        })
    }

    pub fn model(&self) -> &'a dyn SystemModel {
        self.model
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn layout(&self) -> DecisionLayout {
        self.layout
    }

    pub fn horizon(&self) -> usize {
        self.layout.horizon
    }

    pub(crate) fn set_state_penalty(&mut self, on: bool) {
        self.state_penalty = on && self.active_state_bounds().is_some();
    }

    pub(crate) fn active_state_bounds(&self) -> Option<&BoxBounds> {
        self.model.state_bounds().filter(|b| !b.is_unbounded())
    }

    /// Decision-variable box assembled from the model's noise and parameter
    /// bounds. `None` when every coordinate is free.
    pub fn decision_bounds(&self) -> Option<BoxBounds> {
        let noise = self.model.noise_bounds().filter(|b| !b.is_unbounded());
        let params = self.model.param_bounds().filter(|b| !b.is_unbounded() && self.layout.params > 0);
        if noise.is_none() && params.is_none() {
            return None;
        }
        let mut lower = vec![f64::NEG_INFINITY; self.layout.len()];
        let mut upper = vec![f64::INFINITY; self.layout.len()];
        if let Some(b) = noise {
            for k in 0..self.layout.horizon {
                let off = self.layout.noise_offset(k);
                lower[off..off + self.layout.noise].copy_from_slice(b.lower());
                upper[off..off + self.layout.noise].copy_from_slice(b.upper());
            }
        }
        if let Some(b) = params {
            let off = self.layout.param_offset();
            lower[off..off + self.layout.params].copy_from_slice(b.lower());
            upper[off..off + self.layout.params].copy_from_slice(b.upper());
        }
        BoxBounds::new(lower, upper).ok()
    }

    /// Starting point `(prior_x, w̄, prior_θ)`.
    pub fn prior_candidate(&self) -> DecisionVector {
        DecisionVector {
            x_init: self.spec.prior_x.clone(),
            noise: self.spec.noise_ref.clone(),
            theta: self.param_root.as_ref().map(|(prior, _)| prior.clone()),
        }
    }

    pub(crate) fn theta_of(&self, z: &Vector) -> Vector {
        match &self.fixed_theta {
            Some(theta) => theta.clone(),
            None => {
                let off = self.layout.param_offset();
                Vector::from_column_slice(&z.as_slice()[off..off + self.layout.params])
            }
        }
    }

    fn noise_of(&self, z: &Vector) -> Vec<Vector> {
        (0..self.layout.horizon)
            .map(|k| {
                let off = self.layout.noise_offset(k);
                Vector::from_column_slice(&z.as_slice()[off..off + self.layout.noise])
            })
            .collect()
    }

    /// State and output trajectories implied by flattened decision variables.
    pub fn trajectory(&self, z: &Vector) -> (Vec<Vector>, Vec<Vector>) {
        let x_init = Vector::from_column_slice(&z.as_slice()[..self.layout.states]);
        rollout_unchecked(self.model, &x_init, &self.theta_of(z), &self.spec.inputs, &self.noise_of(z))
    }

    fn stage_scale(&self, j: usize) -> f64 {
        (2.0 * self.spec.discount.powi(j as i32 - 1)).sqrt()
    }

    fn prior_scale(&self) -> f64 {
        (2.0 * self.spec.discount.powi(self.layout.horizon as i32)).sqrt()
    }

    pub fn residual_len(&self) -> usize {
        let d = self.model.dims();
        let penalty = if self.state_penalty { (self.layout.horizon + 1) * d.states } else { 0 };
        self.layout.states + self.layout.params + self.layout.horizon * (d.noise + d.outputs) + penalty
    }

    /// Stacked weighted residual. Blocks in order: state prior, parameter
    /// prior, then for `j = 1..M` (newest first) the noise and output terms.
    pub fn residuals(&self, z: &Vector) -> Vector {
        let d = self.model.dims();
        let (states, outputs) = self.trajectory(z);
        let mut r = Vector::zeros(self.residual_len());
        let mut row = 0;

        let prior = self.prior_scale();
        let dx = &states[0] - &self.spec.prior_x;
        r.rows_mut(row, d.states).copy_from(&((&self.prior_x_root * dx) * prior));
        row += d.states;
        if let Some((prior_theta, root)) = &self.param_root {
            let dtheta = self.theta_of(z) - prior_theta;
            r.rows_mut(row, self.layout.params).copy_from(&((root * dtheta) * prior));
            row += self.layout.params;
        }

        let m = self.layout.horizon;
        for j in 1..=m {
            let k = m - j;
            let scale = self.stage_scale(j);
            let off = self.layout.noise_offset(k);
            let w = z.rows(off, d.noise);
            let dw = w - &self.spec.noise_ref[k];
            r.rows_mut(row, d.noise).copy_from(&((&self.noise_root * dw) * scale));
            row += d.noise;
            let dy = &outputs[k] - &self.spec.output_ref[k];
            r.rows_mut(row, d.outputs).copy_from(&((&self.output_root * dy) * scale));
            row += d.outputs;
        }

        if self.state_penalty {
            let bounds = self.active_state_bounds().expect("penalty requires bounds");
            let weight = STATE_PENALTY_WEIGHT.sqrt();
            for x in &states {
                for i in 0..d.states {
                    r[row] = weight * (x[i] - x[i].clamp(bounds.lower()[i], bounds.upper()[i]));
                    row += 1;
                }
            }
        }
        r
    }

    /// Window cost `‖r(z)‖²`.
    pub fn cost(&self, z: &Vector) -> f64 {
        self.residuals(z).norm_squared()
    }

    /// `∂r/∂z` by forward sensitivity propagation through the rollout,
    /// `S_{k+1} = A_k S_k + B_k E_{w_k} + F_k E_θ`.
    pub fn jacobian(&self, z: &Vector) -> Matrix {
        let mut jac = Matrix::zeros(self.residual_len(), self.layout.len());
        self.jacobian_into(z, &mut jac);
        jac
    }

    /// [`Self::jacobian`] written into `jac`, which must already have the
    /// right shape.
    pub(crate) fn jacobian_into(&self, z: &Vector, jac: &mut Matrix) {
        let d = self.model.dims();
        let n = self.layout.len();
        let m = self.layout.horizon;
        let theta = self.theta_of(z);
        let noise = self.noise_of(z);
        let param_off = self.layout.param_offset();
        let np = self.layout.params;

        jac.fill(0.0);
        let prior = self.prior_scale();
        jac.view_mut((0, 0), (d.states, d.states))
            .copy_from(&(&self.prior_x_root * prior));
        let mut row0 = d.states;
        if let Some((_, root)) = &self.param_root {
            jac.view_mut((row0, param_off), (np, np)).copy_from(&(root * prior));
            row0 += np;
        }
        let stage_rows = d.noise + d.outputs;
        let stage_row = |k: usize| row0 + (m - 1 - k) * stage_rows;
        let penalty_row0 = row0 + m * stage_rows;
        let bounds = if self.state_penalty { self.active_state_bounds() } else { None };

        let mut sens = Matrix::zeros(d.states, n);
        sens.view_mut((0, 0), (d.states, d.states)).fill_with_identity();
        let mut x = Vector::from_column_slice(&z.as_slice()[..d.states]);

        for k in 0..=m {
            if let Some(b) = bounds {
                let weight = STATE_PENALTY_WEIGHT.sqrt();
                for i in 0..d.states {
                    if x[i] < b.lower()[i] || x[i] > b.upper()[i] {
                        let row = penalty_row0 + k * d.states + i;
                        jac.row_mut(row).copy_from(&(sens.row(i) * weight));
                    }
                }
            }
            if k == m {
                break;
            }
            let u = &self.spec.inputs[k];
            let w = &noise[k];
            let scale = self.stage_scale(m - k);
            let noise_off = self.layout.noise_offset(k);
            let row = stage_row(k);

            jac.view_mut((row, noise_off), (d.noise, d.noise))
                .copy_from(&(&self.noise_root * scale));

            // columns past this stage's noise are still zero in `sens`
            let live = noise_off + d.noise;
            let hj = output_jacobians(self.model, &x, u, w, &theta);
            let mut dy = Matrix::zeros(d.outputs, n);
            mul_columns(1.0, &hj.state, &sens, 0..noise_off, &mut dy, 0);
            dy.columns_mut(noise_off, d.noise).copy_from(&hj.noise);
            if np > 0 {
                mul_columns(1.0, &hj.state, &sens, param_off..n, &mut dy, 0);
                let mut block = dy.columns_mut(param_off, np);
                block += &hj.params;
            }
            let out_row = row + d.noise;
            mul_columns(scale, &self.output_root, &dy, 0..live, jac, out_row);
            mul_columns(scale, &self.output_root, &dy, param_off..n, jac, out_row);

            let fj = dynamics_jacobians(self.model, &x, u, w, &theta);
            let mut next = Matrix::zeros(d.states, n);
            mul_columns(1.0, &fj.state, &sens, 0..noise_off, &mut next, 0);
            next.columns_mut(noise_off, d.noise).copy_from(&fj.noise);
            if np > 0 {
                mul_columns(1.0, &fj.state, &sens, param_off..n, &mut next, 0);
                let mut block = next.columns_mut(param_off, np);
                block += &fj.params;
            }
            sens = next;
            x = self.model.dynamics(&x, u, w, &theta);
        }
    }

    /// Column support of each residual row block of [`Self::jacobian`]: rows
    /// `rows` are zero outside `cols` and the trailing parameter columns.
    pub(crate) fn row_blocks(&self) -> Vec<RowBlock> {
        let d = self.model.dims();
        let m = self.layout.horizon;
        let mut blocks = vec![RowBlock { rows: 0..d.states, cols: 0..d.states }];
        let mut row = d.states;
        if self.param_root.is_some() {
            blocks.push(RowBlock { rows: row..row + self.layout.params, cols: 0..0 });
            row += self.layout.params;
        }
        for j in 1..=m {
            let off = self.layout.noise_offset(m - j);
            blocks.push(RowBlock { rows: row..row + d.noise, cols: off..off + d.noise });
            row += d.noise;
            blocks.push(RowBlock { rows: row..row + d.outputs, cols: 0..off + d.noise });
            row += d.outputs;
        }
        if self.state_penalty {
            for k in 0..=m {
                blocks.push(RowBlock { rows: row..row + d.states, cols: 0..self.layout.noise_offset(k) });
                row += d.states;
            }
        }
        blocks
    }

    /// Central finite-difference Jacobian of [`Self::residuals`].
    pub fn jacobian_fd(&self, z: &Vector) -> Matrix {
        let n = self.layout.len();
        let mut jac = Matrix::zeros(self.residual_len(), n);
        let mut probe = z.clone();
        for i in 0..n {
            let h = 1e-6 * (1.0 + z[i].abs());
            probe[i] = z[i] + h;
            let plus = self.residuals(&probe);
            probe[i] = z[i] - h;
            let minus = self.residuals(&probe);
            probe[i] = z[i];
            jac.set_column(i, &((plus - minus) / (2.0 * h)));
        }
        jac
    }

    /// `true` when every rolled-out state lies in the model's state box.
    pub(crate) fn states_feasible(&self, z: &Vector) -> bool {
        match self.active_state_bounds() {
            None => true,
            Some(b) => self.trajectory(z).0.iter().all(|x| b.contains(x.as_slice())),
        }
    }
}

/// `out[row.., c] = alpha * a * b[.., c]` for every `c` in `cols`.
fn mul_columns(alpha: f64, a: &Matrix, b: &Matrix, cols: Range<usize>, out: &mut Matrix, row: usize) {
    let (ar, ac) = a.shape();
    let br = b.nrows();
    let or = out.nrows();
    let a = a.as_slice();
    let b = b.as_slice();
    let out = out.as_mut_slice();
    for c in cols {
        let bc = &b[c * br..c * br + ac];
        let oc = &mut out[c * or + row..c * or + row + ar];
        oc.fill(0.0);
        for (k, &bk) in bc.iter().enumerate() {
            if bk == 0.0 {
                continue;
            }
            let s = alpha * bk;
            for (o, &x) in oc.iter_mut().zip(&a[k * ar..(k + 1) * ar]) {
                *o += s * x;
            }
        }
    }
}
