//! Exact Gaussian log-likelihood, the depth-k pseudo-log-likelihood and the
//! pseudo-score, all in log space.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::autocov::AutocovGrid;
use crate::error::{Result, SddeError};
use crate::model::DelayModelSpec;
use crate::predictor::{durbin_levinson, PredictorCoefficients};

const LN_2PI: f64 = 1.8378770664093453;

/// Observations X(delta), X(2 delta), ..., X(n delta).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub delta: f64,
    pub x: Vec<f64>,
    /// Seed and model of the generating simulation, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub model: DelayModelSpec,
}

impl ObservationSeries {
    pub fn new(delta: f64, x: Vec<f64>) -> Result<Self> {
        let series = ObservationSeries {
            delta,
            x,
            provenance: None,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(SddeError::InvalidData(format!(
                "sampling interval must be positive, got {}",
                self.delta
            )));
        }
        if self.x.len() < 2 {
            return Err(SddeError::InvalidData(format!(
                "need at least 2 observations, got {}",
                self.x.len()
            )));
        }
        if let Some(bad) = self.x.iter().find(|v| !v.is_finite()) {
            return Err(SddeError::InvalidData(format!(
                "non-finite observation {bad}"
            )));
        }
        Ok(())
    }
}

fn gaussian_term(residual: f64, variance: f64) -> f64 {
    -0.5 * (LN_2PI + variance.ln()) - residual * residual / (2.0 * variance)
}

/// Exact log-likelihood of the series: the stationary density of the first
/// observation followed by the full-conditioning Gaussian terms, with
/// phi_i, v_i taken from one Durbin-Levinson ladder of depth n-1.
pub fn exact_loglik(data: &ObservationSeries, model: &DelayModelSpec) -> Result<f64> {
    data.validate()?;
    let n = data.n();
    let grid = AutocovGrid::build(model, data.delta, n.max(2) - 1)?;
    let coeffs = durbin_levinson(&grid, n - 1)?;
    Ok(exact_loglik_terms(data, &grid, &coeffs).iter().sum())
}

/// The n per-observation terms of the exact log-likelihood; term 0 is the
/// stationary marginal of X(delta), term i >= 1 conditions on all previous
/// observations.
pub fn exact_loglik_terms(
    data: &ObservationSeries,
    grid: &AutocovGrid,
    coeffs: &PredictorCoefficients,
) -> Vec<f64> {
    let x = &data.x;
    let n = x.len();
    let mut terms = Vec::with_capacity(n);
    terms.push(gaussian_term(x[0], grid.values[0]));
    for i in 1..n {
        let phi = &coeffs.ladder_phi[i - 1];
        let v = coeffs.ladder_v[i];
        let mut mean = 0.0;
        for j in 0..i {
            mean += phi[j] * x[i - 1 - j];
        }
        terms.push(gaussian_term(x[i] - mean, v));
    }
    terms
}

/// Prediction residuals e_i = x_{i+1} - phi_k' X_{i:i+1-k} for i = k..n-1
/// (paper indexing; the returned vector has n-k entries).
pub fn prediction_residuals(data: &ObservationSeries, coeffs: &PredictorCoefficients) -> Result<DVector<f64>> {
    let n = data.n();
    let k = coeffs.k;
    if n <= k {
        return Err(SddeError::InvalidData(format!(
            "pseudo-likelihood of depth {k} needs n > k, got n = {n}"
        )));
    }
    let x = &data.x;
    let phi = &coeffs.phi;
    let mut residuals = DVector::zeros(n - k);
    for i in k..n {
        let mut mean = 0.0;
        for j in 0..k {
            mean += phi[j] * x[i - 1 - j];
        }
        residuals[i - k] = x[i] - mean;
    }
    Ok(residuals)
}

/// Pseudo-log-likelihood of depth k: conditions each observation on its k
/// predecessors only, using one (phi_k, v_k) pair for every term. The
/// density of the first k observations is not included.
pub fn pseudo_loglik(data: &ObservationSeries, coeffs: &PredictorCoefficients) -> Result<f64> {
    data.validate()?;
    let residuals = prediction_residuals(data, coeffs)?;
    let v = coeffs.v;
    let m = residuals.len() as f64;
    Ok(-0.5 * m * (LN_2PI + v.ln()) - residuals.norm_squared() / (2.0 * v))
}

/// Pseudo-score: gradient of the pseudo-log-likelihood in theta,
///
///   sum_i (d phi' X_window / v) e_i  +  (d v / 2 v^2) sum_i (e_i^2 - v),
///
/// evaluated with the differentiated-ladder outputs carried by `coeffs`.
pub fn pseudo_score(data: &ObservationSeries, coeffs: &PredictorCoefficients) -> Result<DVector<f64>> {
    data.validate()?;
    let (dphi, dv) = coeffs.gradients()?;
    let residuals = prediction_residuals(data, coeffs)?;
    let n = data.n();
    let k = coeffs.k;
    let v = coeffs.v;
    let x = &data.x;
    let p = dphi.nrows();
    let mut score = DVector::zeros(p);
    let mut sq_sum = 0.0;
    for i in k..n {
        let e = residuals[i - k];
        sq_sum += e * e - v;
        for row in 0..p {
            let mut dmean = 0.0;
            for j in 0..k {
                dmean += dphi[(row, j)] * x[i - 1 - j];
            }
            score[row] += dmean * e / v;
        }
    }
    for row in 0..p {
        score[row] += dv[row] / (2.0 * v * v) * sq_sum;
    }
    Ok(score)
}
