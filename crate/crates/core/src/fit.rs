//! Least-squares slopes on log-log data.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    /// Fitted `ln C` in `value ≈ C x^slope`.
    pub intercept: f64,
}

/// `ln ln(2 + 1/ε)`, the offset removed by the log-corrected fit.
pub fn log_correction(eps: f64) -> f64 {
    (2.0 + 1.0 / eps).ln().ln()
}

/// Ordinary least squares of `ln v` against `ln x`.
///
/// With `log_corrected`, `ln ln(2 + 1/x)` is subtracted from `ln v` first.
pub fn fit_log_log(points: &[(f64, f64)], log_corrected: bool) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientPoints(points.len()));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(x, v) in points {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveValue { eps: x, value: v });
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::NonPositiveValue { eps: x, value: x });
        }
        xs.push(x.ln());
        let mut y = v.ln();
        if log_corrected {
            y -= log_correction(x);
        }
        ys.push(y);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::config("slope fit needs distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = (3..9).map(|k| {
            let e = 0.5f64.powi(k);
            (e, e.powf(0.75))
        }).collect();
        let f = fit_log_log(&pts, false).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
    }

    #[test]
    fn log_corrected_recovers_power() {
        let pts: Vec<_> = (3..9).map(|k| {
            let e = 0.5f64.powi(k);
            (e, e * (2.0 + 1.0 / e).ln())
        }).collect();
        let f = fit_log_log(&pts, true).unwrap();
        assert!((f.slope - 1.0).abs() < 0.02);
        let raw = fit_log_log(&pts, false).unwrap();
        assert!(raw.slope < 0.9);
    }

    #[test]
    fn rejects_short_and_nonpositive() {
        let pts = [(0.5, 1.0), (0.25, 0.5), (0.125, 0.25)];
        assert!(matches!(fit_log_log(&pts, false), Err(Error::InsufficientPoints(3))));
        let pts = [(0.5, 1.0), (0.25, 0.5), (0.125, 0.0), (0.0625, 0.1)];
        assert!(matches!(fit_log_log(&pts, false), Err(Error::NonPositiveValue { .. })));
    }
}
