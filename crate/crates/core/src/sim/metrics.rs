use crate::error::{check_len, MheError, Result};
use crate::model::Vector;

/// Trailing mean over the last `min(window, available)` samples.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Per-coordinate `|θ̂_i − θ_i| / |θ_i|`.
pub fn normalized_param_error(theta_hat: &Vector, theta: &Vector) -> Result<Vector> {
    check_len("parameter estimate", theta.len(), theta_hat.len())?;
    if let Some(index) = theta.iter().position(|v| *v == 0.0) {
        return Err(MheError::UndefinedNormalization { index });
    }
    Ok(Vector::from_iterator(
        theta.len(),
        theta_hat.iter().zip(theta.iter()).map(|(e, t)| (e - t).abs() / t.abs()),
    ))
}
