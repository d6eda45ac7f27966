use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{NouError, Result};

pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldEstimate {
    /// Continuously compounded yield per year.
    pub r: f64,
    /// Fitted log-price at `t = 0`.
    pub intercept: f64,
    pub residual_std: f64,
}

/// OLS regression of `ln S` on time; the slope is annualized with a 365-day year.
pub fn estimate_yield(sample: &Sample<f64>) -> Result<YieldEstimate> {
    let n = sample.len();
    if n < 2 {
        return Err(NouError::InvalidInput(format!("need at least 2 prices, got {n}")));
    }
    if let Some(i) = sample.values.iter().position(|v| !(*v > 0.0)) {
        return Err(NouError::InvalidInput(format!("price at index {i} is not positive")));
    }
    let ys: Vec<f64> = sample.values.iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let tm = sample.times.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (t, y) in sample.times.iter().zip(&ys) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ssr: f64 = sample
        .times
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y - intercept - slope * t).powi(2))
        .sum();
    let residual_std = if n > 2 { (ssr / (nf - 2.0)).sqrt() } else { 0.0 };
    Ok(YieldEstimate {
        r: slope * DAYS_PER_YEAR,
        intercept,
        residual_std,
    })
}

/// Multiply each value by `e^{-r (t - t_0)}`, with `r` per year and `t` in days.
pub fn discount_series(sample: &Sample<f64>, r: f64) -> Result<Sample<f64>> {
    if !r.is_finite() {
        return Err(NouError::InvalidInput(format!("yield must be finite, got {r}")));
    }
    let t0 = sample.times[0];
    let values = sample
        .times
        .iter()
        .zip(&sample.values)
        .map(|(t, v)| v * (-r * (t - t0) / DAYS_PER_YEAR).exp())
        .collect();
    Ok(Sample {
        times: sample.times.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / 96.0).collect()
    }

    #[test]
    fn exact_exponential_recovers_rate() {
        let times = grid(90 * 96);
        let values = times.iter().map(|t| (0.0294 * t / DAYS_PER_YEAR).exp()).collect();
        let est = estimate_yield(&Sample::new(times, values).unwrap()).unwrap();
        assert!((est.r - 0.0294).abs() < 1e-12);
        assert!(est.intercept.abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_yield() {
        let n = 100;
        let est = estimate_yield(&Sample::new(grid(n), vec![1.15; n]).unwrap()).unwrap();
        assert!(est.r.abs() < 1e-14);
        assert!(est.residual_std < 1e-14);
    }

    #[test]
    fn zero_rate_is_identity() {
        let s = Sample::new(grid(10), (0..10).map(|i| 1.0 + i as f64 * 1e-3).collect()).unwrap();
        assert_eq!(discount_series(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn discounting_removes_the_trend() {
        let times = grid(2000);
        let values: Vec<f64> = times
            .iter()
            .map(|t| 1.15 * (0.03 * t / DAYS_PER_YEAR).exp() * (1.0 + 1e-3 * (7.0 * t).sin()))
            .collect();
        let s = Sample::new(times, values).unwrap();
        let r = estimate_yield(&s).unwrap().r;
        let flat = discount_series(&s, r).unwrap();
        assert!(estimate_yield(&flat).unwrap().r.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(estimate_yield(&Sample::new(vec![0.0], vec![1.0]).unwrap()).is_err());
        assert!(estimate_yield(&Sample::new(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap()).is_err());
        let s = Sample::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(discount_series(&s, f64::NAN).is_err());
    }
}
