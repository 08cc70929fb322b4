//! Dynamic bicycle model with simplified Pacejka lateral tire forces,
//! discretized with forward Euler.
//!
//! State `(x_p, y_p, ψ, v_x, v_y, ω)`, input `(δ, F_x)`, parameter
//! `θ = (D_f, D_r)` (the peak lateral forces), noise
//! `w = (w_x ∈ ℝ⁶, w_y ∈ ℝ³)` with additive process and measurement parts.
//! The output is the measured pose `(x_p, y_p, ψ) + w_y`.

use serde::{Deserialize, Serialize};

use super::{BoxBounds, Dimensions, Jacobians, Matrix, SystemModel, Vector};
use crate::error::{MheError, Result};

/// Smallest longitudinal speed magnitude used in the slip-angle quotient.
pub const VX_FLOOR: f64 = 1e-6;

/// Process noise bound `‖w_x‖_∞`.
const PROCESS_NOISE_RADIUS: f64 = 0.01;
/// Measurement noise bounds for `(x_p, y_p, ψ)`.
const MEASUREMENT_NOISE_RADIUS: [f64; 3] = [0.2, 0.2, 0.01];

/// Physical parameters of a miniature race car.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarParams {
    /// Distance from the center of mass to the rear axle [m].
    pub l_r: f64,
    /// Distance from the center of mass to the front axle [m].
    pub l_f: f64,
    /// [kg]
    pub mass: f64,
    /// Yaw inertia [kg·m²].
    pub i_z: f64,
    pub b_r: f64,
    pub c_r: f64,
    pub d_r: f64,
    pub b_f: f64,
    pub c_f: f64,
    pub d_f: f64,
    /// Sampling time [s].
    pub dt: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            l_r: 0.038,
            l_f: 0.052,
            mass: 0.181,
            i_z: 5.05e-4,
            b_r: 8.5,
            c_r: 1.45,
            d_r: 1.0,
            b_f: 5.2,
            c_f: 1.5,
            d_f: 0.65,
            dt: 0.01,
        }
    }
}

impl CarParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_r", self.l_r),
            ("l_f", self.l_f),
            ("mass", self.mass),
            ("i_z", self.i_z),
            ("dt", self.dt),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MheError::InvalidArgument(format!("car parameter {name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// The true value of the unknown parameter `(D_f, D_r)`.
    pub fn theta(&self) -> Vector {
        Vector::from_vec(vec![self.d_f, self.d_r])
    }
}

/// Slip angles and lateral forces of both axles.
///
/// Slip is positive when the tire points left of its velocity,
/// `α_f = δ − atan((v_y + ω l_f)/v_x)` and `α_r = −atan((v_y − ω l_r)/v_x)`,
/// so the lateral forces oppose sideways motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TireForces {
    pub alpha_f: f64,
    pub alpha_r: f64,
    pub force_f: f64,
    pub force_r: f64,
}

/// Pacejka lateral tire forces using the peak forces stored in `params`.
///
/// Fails when `|v_x|` is below [`VX_FLOOR`].
pub fn pacejka_forces(v_x: f64, v_y: f64, omega: f64, steer: f64, params: &CarParams) -> Result<TireForces> {
    pacejka_forces_with_floor(v_x, v_y, omega, steer, params, VX_FLOOR)
}

pub fn pacejka_forces_with_floor(
    v_x: f64,
    v_y: f64,
    omega: f64,
    steer: f64,
    params: &CarParams,
    floor: f64,
) -> Result<TireForces> {
    if !(v_x.abs() >= floor) {
        return Err(MheError::SingularSlip { v_x, floor });
    }
    Ok(tire_model(v_x, v_y, omega, steer, params.d_f, params.d_r, params).forces)
}

fn clamp_speed(v_x: f64) -> (f64, bool) {
    if v_x.abs() >= VX_FLOOR {
        (v_x, true)
    } else if v_x < 0.0 {
        (-VX_FLOOR, false)
    } else {
        (VX_FLOOR, false)
    }
}

struct TireModel {
    forces: TireForces,
    // d(F_f)/d(v_x, v_y, ω) and d(F_r)/d(v_x, v_y, ω)
    front_grad: [f64; 3],
    rear_grad: [f64; 3],
    // d(F_f)/d(D_f) and d(F_r)/d(D_r)
    front_shape: f64,
    rear_shape: f64,
}

fn magic_formula(alpha: f64, b: f64, c: f64, d: f64) -> (f64, f64, f64) {
    let inner = c * (b * alpha).atan();
    let shape = inner.sin();
    let slope = d * inner.cos() * c * b / (1.0 + (b * alpha).powi(2));
    (d * shape, slope, shape)
}

fn tire_model(v_x: f64, v_y: f64, omega: f64, steer: f64, d_f: f64, d_r: f64, p: &CarParams) -> TireModel {
    let num_f = v_y + omega * p.l_f;
    let num_r = v_y - omega * p.l_r;
    let alpha_f = steer - (num_f / v_x).atan();
    let alpha_r = -(num_r / v_x).atan();
    let (force_f, slope_f, front_shape) = magic_formula(alpha_f, p.b_f, p.c_f, d_f);
    let (force_r, slope_r, rear_shape) = magic_formula(alpha_r, p.b_r, p.c_r, d_r);

    let den_f = v_x * v_x + num_f * num_f;
    let den_r = v_x * v_x + num_r * num_r;
    TireModel {
        forces: TireForces {
            alpha_f,
            alpha_r,
            force_f,
            force_r,
        },
        front_grad: [
            slope_f * num_f / den_f,
            -slope_f * v_x / den_f,
            -slope_f * p.l_f * v_x / den_f,
        ],
        rear_grad: [
            slope_r * num_r / den_r,
            -slope_r * v_x / den_r,
            slope_r * p.l_r * v_x / den_r,
        ],
        front_shape,
        rear_shape,
    }
}

/// Discrete-time car model `x⁺ = x + Δt·g(x, u, θ) + w_x`, `y = (x_p, y_p, ψ) + w_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarModel {
    params: CarParams,
    noise_bounds: BoxBounds,
}

impl CarModel {
    pub fn new(params: CarParams) -> Result<Self> {
        params.validate()?;
        let mut radius = vec![PROCESS_NOISE_RADIUS; 6];
        radius.extend_from_slice(&MEASUREMENT_NOISE_RADIUS);
        Ok(Self {
            params,
            noise_bounds: BoxBounds::symmetric(&radius)?,
        })
    }

    pub fn params(&self) -> &CarParams {
        &self.params
    }

    /// Tire forces at state `x` under steering `u[0]` and peak forces `θ`,
    /// with `|v_x|` clamped at [`VX_FLOOR`].
    pub fn tire_forces(&self, x: &Vector, u: &Vector, theta: &Vector) -> TireForces {
        let (v_x, _) = clamp_speed(x[3]);
        tire_model(v_x, x[4], x[5], u[0], theta[0], theta[1], &self.params).forces
    }

    /// Continuous-time right-hand side.
    pub fn vector_field(&self, x: &Vector, u: &Vector, theta: &Vector) -> Vector {
        let p = &self.params;
        let (psi, v_x, v_y, omega) = (x[2], x[3], x[4], x[5]);
        let (steer, drive) = (u[0], u[1]);
        let (slip_vx, _) = clamp_speed(v_x);
        let tires = tire_model(slip_vx, v_y, omega, steer, theta[0], theta[1], p).forces;
        let (s, c) = psi.sin_cos();
        let (sd, cd) = steer.sin_cos();
        Vector::from_vec(vec![
            v_x * c - v_y * s,
            v_x * s + v_y * c,
            omega,
            (drive - tires.force_f * sd + p.mass * v_y * omega) / p.mass,
            (tires.force_r + tires.force_f * cd - p.mass * v_x * omega) / p.mass,
            (tires.force_f * p.l_f * cd - tires.force_r * p.l_r) / p.i_z,
        ])
    }
}

impl SystemModel for CarModel {
    fn dims(&self) -> Dimensions {
        Dimensions {
            states: 6,
            inputs: 2,
            noise: 9,
            params: 2,
            outputs: 3,
        }
    }

    fn dynamics(&self, x: &Vector, u: &Vector, w: &Vector, theta: &Vector) -> Vector {
        let mut next = x + self.vector_field(x, u, theta) * self.params.dt;
        for i in 0..6 {
            next[i] += w[i];
        }
        next
    }

    fn output(&self, x: &Vector, _u: &Vector, w: &Vector, _theta: &Vector) -> Vector {
        Vector::from_vec(vec![x[0] + w[6], x[1] + w[7], x[2] + w[8]])
    }

    fn dynamics_jacobians(&self, x: &Vector, u: &Vector, _w: &Vector, theta: &Vector) -> Option<Jacobians> {
        let p = &self.params;
        let dt = p.dt;
        let (psi, v_x, v_y, omega) = (x[2], x[3], x[4], x[5]);
        let steer = u[0];
        let (slip_vx, unclamped) = clamp_speed(v_x);
        let tm = tire_model(slip_vx, v_y, omega, steer, theta[0], theta[1], p);
        let mut df = tm.front_grad;
        let mut dr = tm.rear_grad;
        if !unclamped {
            df[0] = 0.0;
            dr[0] = 0.0;
        }
        let (s, c) = psi.sin_cos();
        let (sd, cd) = steer.sin_cos();
        let m = p.mass;

        // g = continuous-time field; rows/cols over (x_p, y_p, ψ, v_x, v_y, ω)
        let mut g = Matrix::zeros(6, 6);
        g[(0, 2)] = -v_x * s - v_y * c;
        g[(0, 3)] = c;
        g[(0, 4)] = -s;
        g[(1, 2)] = v_x * c - v_y * s;
        g[(1, 3)] = s;
        g[(1, 4)] = c;
        g[(2, 5)] = 1.0;
        g[(3, 3)] = -sd * df[0] / m;
        g[(3, 4)] = -sd * df[1] / m + omega;
        g[(3, 5)] = -sd * df[2] / m + v_y;
        g[(4, 3)] = (dr[0] + cd * df[0]) / m - omega;
        g[(4, 4)] = (dr[1] + cd * df[1]) / m;
        g[(4, 5)] = (dr[2] + cd * df[2]) / m - v_x;
        for k in 0..3 {
            g[(5, k + 3)] = (df[k] * p.l_f * cd - dr[k] * p.l_r) / p.i_z;
        }
        let state = Matrix::identity(6, 6) + g * dt;

        let mut noise = Matrix::zeros(6, 9);
        noise.view_mut((0, 0), (6, 6)).fill_with_identity();

        let mut params = Matrix::zeros(6, 2);
        params[(3, 0)] = -dt * sd * tm.front_shape / m;
        params[(4, 0)] = dt * cd * tm.front_shape / m;
        params[(4, 1)] = dt * tm.rear_shape / m;
        params[(5, 0)] = dt * tm.front_shape * p.l_f * cd / p.i_z;
        params[(5, 1)] = -dt * tm.rear_shape * p.l_r / p.i_z;

        Some(Jacobians { state, noise, params })
    }

    fn output_jacobians(&self, _x: &Vector, _u: &Vector, _w: &Vector, _theta: &Vector) -> Option<Jacobians> {
        let mut state = Matrix::zeros(3, 6);
        state.view_mut((0, 0), (3, 3)).fill_with_identity();
        let mut noise = Matrix::zeros(3, 9);
        noise.view_mut((0, 6), (3, 3)).fill_with_identity();
        Some(Jacobians {
            state,
            noise,
            params: Matrix::zeros(3, 2),
        })
    }

    fn noise_bounds(&self) -> Option<&BoxBounds> {
        Some(&self.noise_bounds)
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{finite_difference_jacobians, output_map, step_dynamics};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn model() -> CarModel {
        CarModel::new(CarParams::default()).unwrap()
    }

    #[test]
    fn default_params_match_reference_car() {
        let p = CarParams::default();
        assert_eq!((p.l_r, p.l_f, p.mass, p.i_z), (0.038, 0.052, 0.181, 5.05e-4));
        assert_eq!((p.b_r, p.c_r, p.d_r), (8.5, 1.45, 1.0));
        assert_eq!((p.b_f, p.c_f, p.d_f), (5.2, 1.5, 0.65));
        assert_eq!(p.dt, 0.01);
    }

    #[test]
    fn rejects_nonpositive_params() {
        let p = CarParams { mass: 0.0, ..CarParams::default() };
        assert!(CarModel::new(p).is_err());
        let p = CarParams { dt: -0.01, ..CarParams::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_slip_gives_zero_force() {
        let f = pacejka_forces(4.0, 0.0, 0.0, 0.0, &CarParams::default()).unwrap();
        assert_eq!(f, TireForces { alpha_f: 0.0, alpha_r: 0.0, force_f: 0.0, force_r: 0.0 });
    }

    #[test]
    fn steering_only_front_slip() {
        let f = pacejka_forces(4.0, 0.0, 0.0, 0.03, &CarParams::default()).unwrap();
        assert_eq!(f.alpha_f, 0.03);
        // 0.65·sin(1.5·atan(5.2·0.03)), evaluated independently
        assert!((f.force_f - 0.149_532_484_468_414_02).abs() < 1e-12, "{}", f.force_f);
        assert_eq!(f.force_r, 0.0);
    }

    #[test]
    fn singular_slip_is_an_error() {
        let err = pacejka_forces(1e-9, 0.1, 0.0, 0.0, &CarParams::default()).unwrap_err();
        assert!(matches!(err, MheError::SingularSlip { .. }));
        assert!(pacejka_forces_with_floor(1e-9, 0.1, 0.0, 0.0, &CarParams::default(), 1e-12).is_ok());
    }

    #[test]
    fn clamped_speed_keeps_model_finite() {
        let m = model();
        let x = v(&[0.0, 0.0, 0.0, 0.0, 0.1, 0.2]);
        let next = m.dynamics(&x, &v(&[0.01, 0.0]), &Vector::zeros(9), &v(&[0.65, 1.0]));
        assert!(next.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn longitudinal_force_accelerates() {
        let m = model();
        let x0 = v(&[0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        let x1 = step_dynamics(&m, &x0, &v(&[0.0, 0.01]), &Vector::zeros(9), &v(&[0.65, 1.0])).unwrap();
        let dv = 0.01 * 0.01 / 0.181;
        assert!((x1[3] - 4.0 - dv).abs() < 1e-15);
        assert!((dv - 5.525e-4).abs() < 1e-6);
        assert!((x1[0] - 0.04).abs() < 1e-15);
        assert_eq!((x1[1], x1[2], x1[4], x1[5]), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn straight_driving_stays_straight() {
        let m = model();
        let mut x = v(&[0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        for _ in 0..500 {
            x = m.dynamics(&x, &v(&[0.0, 0.01]), &Vector::zeros(9), &v(&[0.65, 1.0]));
            assert_eq!((x[4], x[5]), (0.0, 0.0));
        }
    }

    #[test]
    fn lateral_disturbance_decays() {
        let m = model();
        let mut x = v(&[0.0, 0.0, 0.0, 4.0, 0.2, 1.0]);
        for _ in 0..300 {
            x = m.dynamics(&x, &v(&[0.0, 0.01]), &Vector::zeros(9), &v(&[0.65, 1.0]));
        }
        assert!(x[4].abs() < 1e-3 && x[5].abs() < 1e-3, "{x}");
        assert!(x[3] > 3.9);
    }

    #[test]
    fn negative_steering_turns_right() {
        let m = model();
        let mut x = v(&[0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        for _ in 0..100 {
            x = m.dynamics(&x, &v(&[-0.03, 0.01]), &Vector::zeros(9), &v(&[0.65, 1.0]));
        }
        assert!(x[5] < 0.0 && x[2] < 0.0 && x[1] < 0.0, "{x}");
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let m = model();
        let x = v(&[0.3, -0.2, 0.4, 3.5, 0.15, -0.8]);
        let u = v(&[-0.03, 0.01]);
        let w = Vector::from_element(9, 0.005);
        let theta = v(&[0.7, 1.1]);
        let analytic = m.dynamics_jacobians(&x, &u, &w, &theta).unwrap();
        let fd = finite_difference_jacobians(|x, u, w, t| m.dynamics(x, u, w, t), &x, &u, &w, &theta);
        for (a, b) in [(&analytic.state, &fd.state), (&analytic.noise, &fd.noise), (&analytic.params, &fd.params)] {
            assert!((a - b).amax() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn output_is_pose_projection() {
        let m = model();
        let x = v(&[1.0, 2.0, 0.3, 4.0, 0.5, 0.6]);
        let y = output_map(&m, &x, &v(&[0.0, 0.0]), &Vector::zeros(9), &v(&[0.65, 1.0])).unwrap();
        assert_eq!(y, v(&[1.0, 2.0, 0.3]));
    }

    #[test]
    fn noise_box_matches_bounds() {
        let m = model();
        let b = m.noise_bounds().unwrap();
        assert_eq!(b.upper(), &[0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.2, 0.2, 0.01]);
        assert!(m.state_bounds().is_none() && m.param_bounds().is_none());
    }

    #[test]
    fn params_roundtrip_through_json() {
        let p = CarParams::default();
        let text = serde_json::to_string(&p).unwrap();
        let back: CarParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
        assert!(serde_json::from_str::<CarParams>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn euler_step_halving_is_first_order() {
        // one step of dt vs two steps of dt/2: difference should scale like dt²
        let theta = v(&[0.65, 1.0]);
        let x0 = v(&[0.0, 0.0, 0.1, 4.0, 0.2, 0.5]);
        let u = v(&[-0.03, 0.01]);
        let diff = |dt: f64| {
            let full = CarModel::new(CarParams { dt, ..CarParams::default() }).unwrap();
            let half = CarModel::new(CarParams { dt: dt / 2.0, ..CarParams::default() }).unwrap();
            let w = Vector::zeros(9);
            let a = full.dynamics(&x0, &u, &w, &theta);
            let b = half.dynamics(&half.dynamics(&x0, &u, &w, &theta), &u, &w, &theta);
            (a - b).norm()
        };
        let order = (diff(0.01) / diff(0.005)).log2();
        assert!(order >= 1.9, "observed order {order}");
    }
}
