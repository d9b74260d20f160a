//! Euler scheme for affine SDDEs with a delay buffer, stationary burn-in and
//! exact-index subsampling into observation series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SddeError};
use crate::likelihood::ObservationSeries;
use crate::model::{stationarity, DelayModelSpec};
use crate::numeric::expand_seed;

const OVERFLOW_GUARD: f64 = 1e8;

/// Initial history on `[-r, 0]` before the burn-in starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialSegment {
    #[default]
    Zero,
    /// Values on the buffer grid, oldest first; padded/truncated to fit.
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: DelayModelSpec,
    /// Euler step size.
    pub step: f64,
    /// Retained path length (time units past the burn-in).
    pub horizon: f64,
    /// Burn-in span discarded so the retained path approximates
    /// stationarity; `None` picks a default from the mixing proxy.
    #[serde(default)]
    pub warmup: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSegment,
    /// Proceed even when the model is not certified stationary (boundary
    /// studies).
    #[serde(default)]
    pub allow_nonstationary: bool,
}

impl SimConfig {
    pub fn new(model: DelayModelSpec, step: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            model,
            step,
            horizon,
            warmup: None,
            seed,
            initial: InitialSegment::Zero,
            allow_nonstationary: false,
        }
    }
}

/// Simulated path retained after burn-in; `values[i]` sits at time `i * step`.
#[derive(Debug, Clone)]
pub struct Path {
    pub step: f64,
    pub values: Vec<f64>,
}

impl Path {
    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.step
    }
}

/// Default burn-in: `max(50 r, 50 / |total drift mass|)`, capped at 1000 time
/// units. The total mass is a crude mixing proxy; the cap keeps boundary
/// cases affordable.
pub fn default_warmup(model: &DelayModelSpec) -> f64 {
    let r = model.max_delay();
    let r = if r.is_finite() { r } else { 1.0 };
    let mass = model
        .measure_transform(num_complex::Complex64::new(0.0, 0.0))
        .re
        .abs();
    let by_mixing = if mass > 0.0 { 50.0 / mass } else { 1000.0 };
    (50.0 * r).max(by_mixing).min(1000.0)
}

/// Integer lag steps of a delay, requiring the step to divide it to machine
/// tolerance.
fn lag_steps(delay: f64, h: f64) -> Result<usize> {
    let ratio = delay / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(SddeError::InvalidConfig(format!(
            "step {h} does not divide the delay {delay}"
        )));
    }
    Ok(rounded as usize)
}

enum Drift {
    /// (coefficient, lag in steps) pairs
    Discrete(Vec<(f64, usize)>),
    /// trapezoid weights over the buffer, index j = lag in steps
    Kernel(Vec<f64>),
}

fn build_drift(model: &DelayModelSpec, h: f64) -> Result<Drift> {
    match model {
        DelayModelSpec::TwoDelay { a, b, r, .. } => {
            Ok(Drift::Discrete(vec![(*a, 0), (*b, lag_steps(*r, h)?)]))
        }
        DelayModelSpec::MultiDelay { alphas, delays, .. } => Ok(Drift::Discrete(
            alphas
                .iter()
                .zip(delays)
                .map(|(&al, &d)| Ok((al, lag_steps(d, h)?)))
                .collect::<Result<Vec<_>>>()?,
        )),
        DelayModelSpec::ExpKernel { a, b, r, .. } => {
            // trapezoid over [-r_eff, 0]; infinite horizons truncated where
            // the kernel mass drops below 1e-12
            let r_eff = if r.is_finite() {
                *r
            } else {
                12.0 * std::f64::consts::LN_10 / a
            };
            let n = (r_eff / h).ceil() as usize;
            let mut weights = vec![0.0; n + 1];
            for (j, w) in weights.iter_mut().enumerate() {
                let s = -(j as f64) * h;
                let trap = if j == 0 || j == n { 0.5 } else { 1.0 };
                *w = -b * h * trap * (a * s).exp();
            }
            Ok(Drift::Kernel(weights))
        }
    }
}

impl Drift {
    fn lookback(&self) -> usize {
        match self {
            Drift::Discrete(terms) => terms.iter().map(|&(_, l)| l).max().unwrap_or(0),
            Drift::Kernel(w) => w.len() - 1,
        }
    }

    /// Drift at the state `x[i]` given the filled history `x[..=i]`.
    fn eval(&self, x: &[f64], i: usize) -> f64 {
        match self {
            Drift::Discrete(terms) => terms.iter().map(|&(c, l)| c * x[i - l]).sum(),
            Drift::Kernel(weights) => weights
                .iter()
                .enumerate()
                .map(|(j, &w)| w * x[i - j])
                .sum(),
        }
    }
}

/// Simulates one path by the explicit Euler scheme
/// `X_{t+h} = X_t + drift(history) h + sigma sqrt(h) xi_t` with i.i.d.
/// standard Gaussian increments from a dedicated ChaCha stream, then drops
/// the burn-in.
pub fn simulate_path(config: &SimConfig) -> Result<Path> {
    let model = &config.model;
    // sigma = 0 is allowed here (degenerate diagnostics path); all other
    // structural invariants still apply, checked on a unit-sigma proxy
    let structural = if model.sigma() == 0.0 {
        let mut proxy = model.clone();
        match &mut proxy {
            DelayModelSpec::TwoDelay { sigma, .. }
            | DelayModelSpec::MultiDelay { sigma, .. }
            | DelayModelSpec::ExpKernel { sigma, .. } => *sigma = 1.0,
        }
        proxy
    } else {
        model.clone()
    };
    structural.validate()?;
    if !(config.step > 0.0) || !(config.horizon > 0.0) {
        return Err(SddeError::InvalidConfig(
            "step and horizon must be positive".into(),
        ));
    }
    if !config.allow_nonstationary {
        let verdict = stationarity(&structural)?;
        if !verdict.stationary {
            return Err(SddeError::NotStationary(format!(
                "refusing to simulate (margin {:.3e}); set allow_nonstationary to override",
                verdict.margin
            )));
        }
    }

    let h = config.step;
    let warmup = config.warmup.unwrap_or_else(|| default_warmup(model));
    if warmup < 0.0 {
        return Err(SddeError::InvalidConfig("warmup must be >= 0".into()));
    }
    let drift = build_drift(model, h)?;
    let lookback = drift.lookback();
    let warm_steps = (warmup / h).round() as usize;
    let horizon_steps = (config.horizon / h).ceil() as usize;
    let total = lookback + 1 + warm_steps + horizon_steps;

    let mut x = vec![0.0; total];
    if let InitialSegment::Supplied(values) = &config.initial {
        for (slot, &v) in x[..=lookback].iter_mut().zip(values) {
            *slot = v;
        }
    }

    let sigma = model.sigma();
    let sqrt_h = h.sqrt();
    let mut rng = ChaCha12Rng::from_seed(expand_seed(config.seed));
    for i in lookback..total - 1 {
        let noise: f64 = rng.sample(StandardNormal);
        x[i + 1] = x[i] + drift.eval(&x, i) * h + sigma * sqrt_h * noise;
        if x[i + 1].abs() > OVERFLOW_GUARD {
            return Err(SddeError::PathDiverged {
                t: (i + 1 - lookback) as f64 * h - warmup,
                value: x[i + 1],
            });
        }
    }
    Ok(Path {
        step: h,
        values: x.split_off(lookback + warm_steps),
    })
}

/// Observations at times `i delta`, `i = 1..=n`, by exact index subsampling
/// (no interpolation); `delta` must be a multiple of the path step.
pub fn sample_observations(path: &Path, delta: f64, n: usize) -> Result<ObservationSeries> {
    let ratio = delta / path.step;
    let stride = ratio.round();
    if (ratio - stride).abs() > 1e-9 * stride.max(1.0) || stride < 1.0 {
        return Err(SddeError::InvalidConfig(format!(
            "delta {delta} is not a positive multiple of the path step {}",
            path.step
        )));
    }
    let stride = stride as usize;
    if n * stride >= path.values.len() {
        return Err(SddeError::InsufficientCoverage(format!(
            "path has {} points, {n} observations at stride {stride} need {}",
            path.values.len(),
            n * stride + 1
        )));
    }
    let x = (1..=n).map(|i| path.values[i * stride]).collect();
    ObservationSeries::new(delta, x)
}

/// One sampled autocovariance with a batch-means standard error.
#[derive(Debug, Clone, Copy)]
pub struct LagEstimate {
    pub lag: usize,
    pub value: f64,
    pub se: f64,
}

/// Mean-centered, biased-normalized (divide by n) sample autocovariances up
/// to `maxlag`, with standard errors from batch means.
pub fn empirical_autocov(data: &ObservationSeries, maxlag: usize) -> Result<Vec<LagEstimate>> {
    let n = data.n();
    if n <= maxlag {
        return Err(SddeError::InvalidData(format!(
            "need n > maxlag, got n = {n}, maxlag = {maxlag}"
        )));
    }
    let mean = data.x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = data.x.iter().map(|v| v - mean).collect();
    let gamma = |xs: &[f64], lag: usize| -> f64 {
        let m = xs.len();
        xs[..m - lag]
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / m as f64
    };
    let batches = ((n as f64).sqrt().floor() as usize).clamp(2, 64);
    let batch_len = n / batches;
    let mut out = Vec::with_capacity(maxlag + 1);
    for lag in 0..=maxlag {
        let value = gamma(&centered, lag);
        let mut batch_vals = Vec::with_capacity(batches);
        if batch_len > lag + 1 {
            for b in 0..batches {
                let seg = &centered[b * batch_len..(b + 1) * batch_len];
                batch_vals.push(gamma(seg, lag));
            }
        }
        let se = if batch_vals.len() >= 2 {
            let bm = batch_vals.iter().sum::<f64>() / batch_vals.len() as f64;
            let var = batch_vals.iter().map(|v| (v - bm).powi(2)).sum::<f64>()
                / (batch_vals.len() - 1) as f64;
            (var / batch_vals.len() as f64).sqrt()
        } else {
            f64::NAN
        };
        out.push(LagEstimate { lag, value, se });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocov::closed_form_two_delay;
    use crate::likelihood::Provenance;
    use approx::assert_relative_eq;

    fn ou_config(seed: u64) -> SimConfig {
        SimConfig::new(
            DelayModelSpec::two_delay(-1.0, 0.0, 1.0, 1.0),
            0.01,
            2000.0,
            seed,
        )
    }

    #[test]
    fn zero_noise_zero_start_stays_at_equilibrium() {
        let mut config = ou_config(7);
        config.model = DelayModelSpec::two_delay(-1.0, -0.3, 1.0, 0.0);
        config.horizon = 20.0;
        let path = simulate_path(&config).unwrap();
        assert!(path.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ou_stationary_variance_within_band() {
        let path = simulate_path(&ou_config(20260810)).unwrap();
        let data = sample_observations(&path, 0.05, 30_000).unwrap();
        let est = empirical_autocov(&data, 0).unwrap();
        // K(0) = -sigma^2/(2a) = 0.5; 3 batch-means standard errors
        assert!(
            (est[0].value - 0.5).abs() < 3.0 * est[0].se,
            "variance {} +- {}",
            est[0].value,
            est[0].se
        );
    }

    #[test]
    fn two_delay_empirical_autocov_matches_closed_form() {
        let model = DelayModelSpec::two_delay(-1.0, -0.1353, 1.0, 1.0);
        let mut config = SimConfig::new(model.clone(), 0.01, 4000.0, 99);
        config.warmup = Some(60.0);
        let path = simulate_path(&config).unwrap();
        let data = sample_observations(&path, 0.5, 7_900).unwrap();
        let est = empirical_autocov(&data, 2).unwrap();
        for est in &est {
            let t = est.lag as f64 * 0.5;
            let expected = closed_form_two_delay(&model, t).unwrap();
            assert!(
                (est.value - expected).abs() < 3.0 * est.se,
                "lag {t}: {} vs {expected} (se {})",
                est.value,
                est.se
            );
        }
    }

    #[test]
    fn paths_are_bit_reproducible() {
        let a = simulate_path(&ou_config(1234)).unwrap();
        let b = simulate_path(&ou_config(1234)).unwrap();
        assert_eq!(a.values, b.values);
        let c = simulate_path(&ou_config(1235)).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn nonstationary_needs_override() {
        let mut config = ou_config(5);
        config.model = DelayModelSpec::two_delay(-1.0, -2.4, 1.0, 1.0);
        config.horizon = 5.0;
        config.warmup = Some(0.0);
        assert!(matches!(
            simulate_path(&config),
            Err(SddeError::NotStationary(_))
        ));
        config.allow_nonstationary = true;
        // short horizons survive even for an unstable drift
        simulate_path(&config).unwrap();
    }

    #[test]
    fn diverging_path_aborts_with_diagnostics() {
        let mut config = ou_config(5);
        // strongly unstable: X' = +3 X
        config.model = DelayModelSpec::two_delay(3.0, 0.0, 1.0, 1.0);
        config.horizon = 50.0;
        config.warmup = Some(0.0);
        config.allow_nonstationary = true;
        assert!(matches!(
            simulate_path(&config),
            Err(SddeError::PathDiverged { .. })
        ));
    }

    #[test]
    fn step_must_divide_delay() {
        let mut config = ou_config(5);
        config.model = DelayModelSpec::two_delay(-1.0, -0.3, 1.0, 1.0);
        config.step = 0.3;
        config.horizon = 10.0;
        config.warmup = Some(1.0);
        assert!(matches!(
            simulate_path(&config),
            Err(SddeError::InvalidConfig(_))
        ));
    }

    #[test]
    fn subsampling_takes_exact_indices() {
        let path = Path {
            step: 0.5,
            values: (0..11).map(|i| i as f64).collect(),
        };
        let every = sample_observations(&path, 0.5, 10).unwrap();
        assert_eq!(every.x, (1..=10).map(|i| i as f64).collect::<Vec<_>>());
        let second = sample_observations(&path, 1.0, 5).unwrap();
        assert_eq!(second.x, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(sample_observations(&path, 1.0, 6).is_err());
        assert!(sample_observations(&path, 0.75, 2).is_err());
    }

    #[test]
    fn exp_kernel_simulation_matches_closed_form_variance() {
        let model = DelayModelSpec::ExpKernel {
            a: 0.0,
            b: 1.0,
            r: 1.0,
            sigma: 1.0,
        };
        let mut config = SimConfig::new(model.clone(), 0.01, 3000.0, 4242);
        config.warmup = Some(60.0);
        let path = simulate_path(&config).unwrap();
        let data = sample_observations(&path, 0.25, 11_900).unwrap();
        let est = empirical_autocov(&data, 0).unwrap();
        let expected = crate::autocov::closed_form_exp_kernel_a0(&model, 0.0).unwrap();
        assert!(
            (est[0].value - expected).abs() < 3.0 * est[0].se,
            "variance {} +- {} vs {expected}",
            est[0].value,
            est[0].se
        );
    }

    #[test]
    fn empirical_autocov_edge_cases() {
        // constant-zero series
        let zeros = ObservationSeries::new(1.0, vec![0.0; 200]).unwrap();
        let est = empirical_autocov(&zeros, 3).unwrap();
        assert!(est.iter().all(|e| e.value == 0.0));

        // white noise: lags >= 1 within noise of zero
        let mut rng = ChaCha12Rng::from_seed(expand_seed(55));
        let x: Vec<f64> = (0..20_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let wn = ObservationSeries::new(1.0, x).unwrap();
        let est = empirical_autocov(&wn, 3).unwrap();
        assert_relative_eq!(est[0].value, 1.0, epsilon = 0.05);
        for e in &est[1..] {
            assert!(
                e.value.abs() < 3.0 * e.se.max(1.0 / 140.0),
                "lag {}: {} (se {})",
                e.lag,
                e.value,
                e.se
            );
        }
    }

    #[test]
    fn provenance_is_preserved_when_requested() {
        let config = ou_config(808);
        let path = simulate_path(&config).unwrap();
        let mut data = sample_observations(&path, 0.05, 100).unwrap();
        data.provenance = Some(Provenance {
            seed: config.seed,
            model: config.model.clone(),
        });
        assert_eq!(data.provenance.as_ref().unwrap().seed, 808);
    }
}
