use serde::{Deserialize, Serialize};

use super::{Dimensions, Jacobians, Matrix, SystemModel, Vector};

/// Scalar system whose parameter only shows up in the second output:
///
/// ```text
/// x⁺ = a·x + u + w₁
/// y  = (x + w₂, θ·x + w₃)
/// ```
///
/// When `x` settles at zero the second output carries no information about
/// `θ`, which is what makes parameter drift visible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcademicModel {
    pub a: f64,
}

impl Default for AcademicModel {
    fn default() -> Self {
        Self { a: 0.99 }
    }
}

impl SystemModel for AcademicModel {
    fn dims(&self) -> Dimensions {
        Dimensions {
            states: 1,
            inputs: 1,
            noise: 3,
            params: 1,
            outputs: 2,
        }
    }

    fn dynamics(&self, x: &Vector, u: &Vector, w: &Vector, _theta: &Vector) -> Vector {
        Vector::from_element(1, self.a * x[0] + u[0] + w[0])
    }

    fn output(&self, x: &Vector, _u: &Vector, w: &Vector, theta: &Vector) -> Vector {
        Vector::from_vec(vec![x[0] + w[1], theta[0] * x[0] + w[2]])
    }

    fn dynamics_jacobians(&self, _x: &Vector, _u: &Vector, _w: &Vector, _theta: &Vector) -> Option<Jacobians> {
        Some(Jacobians {
            state: Matrix::from_element(1, 1, self.a),
            noise: Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            params: Matrix::zeros(1, 1),
        })
    }

    fn output_jacobians(&self, x: &Vector, _u: &Vector, _w: &Vector, theta: &Vector) -> Option<Jacobians> {
        Some(Jacobians {
            state: Matrix::from_column_slice(2, 1, &[1.0, theta[0]]),
            noise: Matrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            params: Matrix::from_column_slice(2, 1, &[0.0, x[0]]),
        })
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }
}
