use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MheError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular slip angle: |v_x| = {v_x:e} is below the floor {floor:e}")]
    SingularSlip { v_x: f64, floor: f64 },
    #[error("matrix {0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("lower bound exceeds upper bound at coordinate {index}")]
    InvalidBounds { index: usize },
    #[error("cannot normalize by zero reference value at coordinate {index}")]
    UndefinedNormalization { index: usize },
}

pub type Result<T, E = MheError> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(MheError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
