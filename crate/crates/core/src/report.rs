//! Regression and ratio-spread reporting shared by every verification run.
//!
//! All kernel/eigenfunction estimates under test are two-sided comparisons
//! with non-explicit constants, so the laboratory never asserts pointwise
//! values. Instead it reports
//!
//! * log-log least-squares fits (boundary exponents, distribution decay), and
//! * ratio spreads max/min of measured quantity over model profile, together
//!   with their behaviour under grid refinement.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::{Error, Result};

/// Least-squares fit of `y = slope·x + intercept` with its diagnostics.
///
/// `window` records the half-open interval of the abscissa (before any log
/// transform) that the samples were restricted to; `residual_rms` is the
/// root-mean-square of the fit residuals and is always reported, never
/// hidden.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub sample_count: usize,
    pub window: (f64, f64),
}

/// Ratio-spread summary of a two-sided estimate check.
///
/// `spread = ratio_max / ratio_min ≥ 1` measures how far the data is from a
/// perfect multiplicative match with the model profile. `fitted_constants`
/// holds named auxiliary quantities (fitted Gaussian slopes, empirical
/// constants, …) in a sorted map so serialized reports are deterministic.
/// `refinement_trend` is the ratio spread(fine)/spread(coarse) when a
/// refinement comparison was run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
    pub fitted_constants: BTreeMap<String, f64>,
    pub sample_count: usize,
    pub window: String,
    pub refinement_trend: Option<f64>,
}

impl EstimateReport {
    /// Build a report from raw ratio samples; fails on an empty or
    /// non-positive sample set (a two-sided bound needs positive ratios).
    pub fn from_ratios(ratios: &[f64], window: impl Into<String>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::Validation("empty ratio sample set".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in ratios {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::Numerical(format!(
                    "ratio sample {r} is not a positive finite number"
                )));
            }
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok(EstimateReport {
            ratio_min: lo,
            ratio_max: hi,
            spread: hi / lo,
            fitted_constants: BTreeMap::new(),
            sample_count: ratios.len(),
            window: window.into(),
            refinement_trend: None,
        })
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.fitted_constants.insert(name.to_string(), value);
        self
    }
}

/// Plain linear least squares on (x, y) pairs.
pub fn fit_linear(samples: &[(f64, f64)]) -> Result<FitResult> {
    if samples.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 samples for a linear fit, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(x, y) in samples {
        sx += x;
        sy += y;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in samples {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::Validation(
            "degenerate abscissa: all x values identical".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    let mut xlo = f64::INFINITY;
    let mut xhi = f64::NEG_INFINITY;
    for &(x, y) in samples {
        let r = y - slope * x - intercept;
        ss += r * r;
        xlo = xlo.min(x);
        xhi = xhi.max(x);
    }
    Ok(FitResult {
        slope,
        intercept,
        residual_rms: (ss / n).sqrt(),
        sample_count: samples.len(),
        window: (xlo, xhi),
    })
}

/// Log-log least squares: fits `ln y = slope · ln x + intercept` over the
/// samples whose abscissa lies in `window = [lo, hi]`. Samples with
/// non-positive x or y are rejected (they have no logarithm; callers filter
/// or treat them as errors explicitly).
pub fn fit_loglog(samples: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let mut logs = Vec::new();
    for &(x, y) in samples {
        if x < window.0 || x > window.1 {
            continue;
        }
        if x <= 0.0 || y <= 0.0 || !x.is_finite() || !y.is_finite() {
            return Err(Error::Numerical(format!(
                "log-log fit sample ({x}, {y}) is not positive finite"
            )));
        }
        logs.push((x.ln(), y.ln()));
    }
    if logs.len() < 2 {
        return Err(Error::Validation(format!(
            "log-log window [{}, {}] holds {} samples; need at least 2 (finer grid required)",
            window.0,
            window.1,
            logs.len()
        )));
    }
    let mut fit = fit_linear(&logs)?;
    fit.window = window;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line_is_recovered() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 3.0 * i as f64 - 2.0)).collect();
        let fit = fit_linear(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, -2.0, epsilon = 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn loglog_recovers_power_law() {
        // y = 7 x^{-3/2} sampled over two decades.
        let pts: Vec<(f64, f64)> = (1..=40)
            .map(|i| {
                let x = 0.1 * 1.13f64.powi(i);
                (x, 7.0 * x.powf(-1.5))
            })
            .collect();
        let fit = fit_loglog(&pts, (0.0, f64::INFINITY)).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.intercept, 7.0f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn window_filters_samples() {
        let pts = vec![(0.5, 1.0), (1.0, 2.0), (2.0, 4.0), (8.0, 3.0)];
        let fit = fit_loglog(&pts, (0.9, 3.0)).unwrap();
        assert_eq!(fit.sample_count, 2);
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spread_report_orders_ratios() {
        let rep = EstimateReport::from_ratios(&[2.0, 0.5, 1.0], "test window").unwrap();
        assert_abs_diff_eq!(rep.ratio_min, 0.5);
        assert_abs_diff_eq!(rep.ratio_max, 2.0);
        assert_abs_diff_eq!(rep.spread, 4.0);
        assert!(rep.spread >= 1.0);
    }

    #[test]
    fn nonpositive_ratio_is_an_error() {
        assert!(EstimateReport::from_ratios(&[1.0, -0.2], "w").is_err());
        assert!(EstimateReport::from_ratios(&[], "w").is_err());
    }
}
