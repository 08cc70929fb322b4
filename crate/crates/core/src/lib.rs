//! Moving horizon estimation for nonlinear systems with unknown constant
//! parameters.
//!
//! The crate contrasts joint state/parameter MHE, whose parameter estimate
//! can drift when the data are not exciting, with a regularized variant that
//! anchors the parameter to a constant prior. It contains the window solver,
//! the estimator drivers, stability-certificate calculators and the
//! simulation harness for the academic and car experiments.

pub mod error;
pub mod estimator;
pub mod model;
pub mod par;
pub mod sim;
pub mod solver;
pub mod theory;

mod serde_util;

pub use error::{MheError, Result};
