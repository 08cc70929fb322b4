//! `check-bound`: matrix specs and the certificate report.

use mhe_core::model::{Matrix, Vector};
use mhe_core::theory::TheoremConstants;

/// Parses `I<n>` / `identity:<n>`, `diag:a,b,...`, `scalar:<n>:<v>` or a
/// JSON row list such as `[[2,0],[0,1]]`.
pub fn parse_matrix(text: &str) -> Result<Matrix, String> {
    let text = text.trim();
    let dim = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid dimension in `{text}`"))
    };
    let value = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("invalid number in `{text}`"))
    };
    if let Some(n) = text
        .strip_prefix("identity:")
        .or_else(|| text.strip_prefix('I'))
    {
        let n = dim(n)?;
        return Ok(Matrix::identity(n, n));
    }
    if let Some(values) = text.strip_prefix("diag:") {
        let d = values
            .split(',')
            .map(value)
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(Matrix::from_diagonal(&Vector::from_vec(d)));
    }
    if let Some(rest) = text.strip_prefix("scalar:") {
        let (n, v) = rest
            .split_once(':')
            .ok_or_else(|| format!("expected scalar:<n>:<value>, got `{text}`"))?;
        let n = dim(n)?;
        return Ok(Matrix::identity(n, n) * value(v)?);
    }
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(text).map_err(|_| format!("unrecognized matrix `{text}`"))?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) || rows.len() != ncols {
        return Err(format!("matrix `{text}` is not square"));
    }
    Ok(Matrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

pub fn render_text(c: &TheoremConstants) -> String {
    let mut out = String::new();
    let line = |out: &mut String, k: &str, v: String| out.push_str(&format!("{k:<14}{v}\n"));
    line(&mut out, "horizon", c.horizon.to_string());
    line(
        &mut out,
        "rho^M",
        format!("{:.12}", c.contraction.rho_pow_m),
    );
    line(&mut out, "rho", format!("{:.12}", c.contraction.rho));
    line(&mut out, "satisfied", c.contraction.satisfied.to_string());
    line(
        &mut out,
        "M_min",
        c.min_horizon
            .map_or("unachievable".into(), |m| m.to_string()),
    );
    match &c.bound {
        Some(b) => {
            line(&mut out, "epsilon", format!("{:.12}", b.epsilon));
            line(&mut out, "lambda1", format!("{:.12}", b.lambda1));
            line(&mut out, "lambda2", format!("{:.12}", b.lambda2));
            line(&mut out, "lambda3", format!("{:.12}", b.lambda3));
            line(&mut out, "C1", format!("{:.12}", b.c1));
            line(&mut out, "C2", format!("{:.12}", b.c2));
            line(&mut out, "C3", format!("{:.12}", b.c3));
        }
        None => out.push_str("horizon condition not satisfied: 4 eta^M lambda_max(P2x, P1) >= 1\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_forms() {
        assert_eq!(parse_matrix("I2").unwrap(), Matrix::identity(2, 2));
        assert_eq!(parse_matrix("identity:3").unwrap(), Matrix::identity(3, 3));
        assert_eq!(parse_matrix("diag:1,2").unwrap()[(1, 1)], 2.0);
        assert_eq!(parse_matrix("scalar:2:10").unwrap()[(0, 0)], 10.0);
        assert_eq!(parse_matrix("[[2,1],[1,2]]").unwrap()[(0, 1)], 1.0);
        assert!(parse_matrix("[[1,2]]").is_err());
        assert!(parse_matrix("eye").is_err());
    }
}
