//! Least-squares fits in log-log coordinates.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    /// Fitted exponent `p` in `y ~ c x^p`.
    pub slope: f64,
    /// `ln c`.
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `ln y`.
    pub rms_residual: f64,
    pub points: usize,
}

/// Fit `ln y = intercept + slope ln x` over the pairs with `x, y > 0`.
/// Returns `None` with fewer than two usable points.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some(LogLogFit {
        slope,
        intercept,
        rms_residual: (rss / n).sqrt(),
        points: pts.len(),
    })
}
