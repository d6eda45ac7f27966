//! Exact Gaussian log-likelihood of an observed rate series.
//!
//! Three interchangeable evaluations are provided:
//!
//! * dense Cholesky factorization of the full covariance matrix, `O(d^3)`;
//! * Levinson-Durbin recursion on the Toeplitz covariance of an equally
//!   spaced sample, `O(d^2)`;
//! * a Kalman recursion on the exact `(S, U)` transition, `O(d)`, valid for
//!   any sampling grid.

use nalgebra::{DMatrix, DVector};

use super::Sample;
use crate::error::{NouError, Result};
use crate::model::{NouParams, Transition};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMethod {
    /// Toeplitz recursion for equally spaced samples, dense factorization otherwise.
    Auto,
    Dense,
    Toeplitz,
    StateSpace,
}

fn assemble(d: usize, log_det: f64, quad: f64) -> f64 {
    -0.5 * d as f64 * LN_2PI - 0.5 * log_det - 0.5 * quad
}

/// Log-likelihood with `C_ij = stationary_cov(t_i - t_j)` and mean `u_bar`.
pub fn log_likelihood(sample: &Sample<f64>, params: &NouParams<f64>) -> Result<f64> {
    log_likelihood_with(sample, params, LikelihoodMethod::Auto)
}

pub fn log_likelihood_with(
    sample: &Sample<f64>,
    params: &NouParams<f64>,
    method: LikelihoodMethod,
) -> Result<f64> {
    params.validate()?;
    if sample.is_empty() {
        return Err(NouError::InvalidInput("empty sample".into()));
    }
    match method {
        LikelihoodMethod::Auto if sample.is_equally_spaced() => toeplitz(sample, params),
        LikelihoodMethod::Auto | LikelihoodMethod::Dense => dense(sample, params),
        LikelihoodMethod::Toeplitz => {
            if !sample.is_equally_spaced() {
                return Err(NouError::InvalidInput(
                    "Toeplitz likelihood needs an equally spaced sample".into(),
                ));
            }
            toeplitz(sample, params)
        }
        LikelihoodMethod::StateSpace => state_space(sample, params),
    }
}

fn dense(sample: &Sample<f64>, params: &NouParams<f64>) -> Result<f64> {
    let d = sample.len();
    let t = &sample.times;
    let cov = DMatrix::from_fn(d, d, |i, j| params.cov_unchecked(t[i] - t[j]));
    let chol = cov
        .cholesky()
        .ok_or_else(|| NouError::Conditioning(format!("dense covariance of size {d} failed Cholesky")))?;
    let resid = DVector::from_iterator(d, sample.values.iter().map(|s| s - params.u_bar));
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let whitened = chol
        .l()
        .solve_lower_triangular(&resid)
        .ok_or_else(|| NouError::Conditioning("triangular solve failed".into()))?;
    Ok(assemble(d, log_det, whitened.norm_squared()))
}

/// Levinson-Durbin in innovations form: the order-`m` forward predictor gives
/// the one-step innovation of the `m`-th observation and its variance.
fn toeplitz(sample: &Sample<f64>, params: &NouParams<f64>) -> Result<f64> {
    let d = sample.len();
    let h = if d > 1 { (sample.times[d - 1] - sample.times[0]) / (d - 1) as f64 } else { 0.0 };
    let r: Vec<f64> = (0..d).map(|m| params.cov_unchecked(h * m as f64)).collect();
    let y: Vec<f64> = sample.values.iter().map(|s| s - params.u_bar).collect();

    let mut pred = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut var = r[0];
    if !(var > 0.0) {
        return Err(NouError::Conditioning(format!("non-positive variance {var:e}")));
    }
    let mut log_det = var.ln();
    let mut quad = y[0] * y[0] / var;
    for m in 1..d {
        let mut acc = r[m];
        for j in 1..m {
            acc -= pred[j] * r[m - j];
        }
        let refl = acc / var;
        if !(refl.abs() < 1.0) {
            return Err(NouError::Conditioning(format!(
                "reflection coefficient {refl} at order {m}"
            )));
        }
        scratch[1..m].copy_from_slice(&pred[1..m]);
        for j in 1..m {
            pred[j] = scratch[j] - refl * scratch[m - j];
        }
        pred[m] = refl;
        var *= 1.0 - refl * refl;
        if !(var > 0.0) {
            return Err(NouError::Conditioning(format!("prediction variance vanished at order {m}")));
        }
        let mut innov = y[m];
        for j in 1..=m {
            innov -= pred[j] * y[m - j];
        }
        log_det += var.ln();
        quad += innov * innov / var;
    }
    Ok(assemble(d, log_det, quad))
}

/// Prediction-error decomposition over the exact transition of `(S, U)`,
/// started from the stationary joint law.
fn state_space(sample: &Sample<f64>, params: &NouParams<f64>) -> Result<f64> {
    let ub = params.u_bar;
    let st = params.stationary_joint_cov();
    // Prior for (S, U) before the current observation.
    let (mut ms, mut mu) = (ub, ub);
    let (mut pss, mut psu, mut puu) = (st[0][0], st[0][1], st[1][1]);
    let mut log_det = 0.0;
    let mut quad = 0.0;
    let mut last_h = f64::NAN;
    let mut tr: Option<Transition<f64>> = None;
    for i in 0..sample.len() {
        if i > 0 {
            let h = sample.times[i] - sample.times[i - 1];
            if tr.is_none() || (h - last_h).abs() > 1e-12 * h {
                tr = Some(Transition::new(params, h)?);
                last_h = h;
            }
            let tr = tr.as_ref().unwrap();
            // S is known exactly after the update, so only U carries variance.
            let (a, c) = (tr.phi[0][1], tr.phi[1][1]);
            (ms, mu) = tr.mean(ms, mu, ub);
            pss = a * a * puu + tr.q[0][0];
            psu = a * c * puu + tr.q[0][1];
            puu = c * c * puu + tr.q[1][1];
        }
        if !(pss > 0.0) {
            return Err(NouError::Conditioning(format!(
                "non-positive prediction variance {pss:e} at index {i}"
            )));
        }
        let e = sample.values[i] - ms;
        log_det += pss.ln();
        quad += e * e / pss;
        mu += psu / pss * e;
        puu = (puu - psu * psu / pss).max(0.0);
        ms = sample.values[i];
        // pss and psu are rebuilt by the next prediction
    }
    Ok(assemble(sample.len(), log_det, quad))
}
