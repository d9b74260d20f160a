//! Stationary autocovariance K(t) of an affine SDDE and its parameter
//! gradient, on an equidistant lag grid.
//!
//! Closed forms are used where available (the two-delay family); everything
//! else goes through the spectral delay Yule-Walker solver. Every produced
//! grid can be checked against the delay Yule-Walker equation via
//! [`yw_residual`].

mod closed_form;
mod spectral;

pub use closed_form::{
    closed_form_exp_kernel_a0, closed_form_two_delay, closed_form_zero_a, two_delay_first_interval,
    two_delay_k0, TwoDelayAutocov,
};
pub use spectral::{SpectralAutocov, SpectralOptions};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SddeError};
use crate::model::{stationarity, DelayModelSpec, Param, ParameterBinding};
use crate::numeric::{adaptive_simpson, central_deriv5, onesided_deriv5};

/// How the values of a grid were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovMethod {
    ClosedForm,
    Numerical,
}

/// Autocovariance values `K(j delta)`, `j = 0..=m`, with optional parameter
/// gradients (one row per free parameter).
#[derive(Debug, Clone)]
pub struct AutocovGrid {
    pub model: DelayModelSpec,
    pub delta: f64,
    pub values: Vec<f64>,
    pub grads: Option<DMatrix<f64>>,
    pub method: CovMethod,
    /// Free parameters whose gradient fell back to one-sided differences at
    /// the stationarity boundary.
    pub one_sided: Vec<Param>,
}

/// A continuous autocovariance evaluator for one model.
pub enum CovSource {
    ClosedForm(TwoDelayAutocov),
    Spectral(SpectralAutocov),
}

impl CovSource {
    /// Closed form for the two-delay family, spectral solver otherwise.
    pub fn best(model: &DelayModelSpec, horizon: f64) -> Result<Self> {
        match model {
            DelayModelSpec::TwoDelay { .. } => {
                Ok(CovSource::ClosedForm(TwoDelayAutocov::new(model, horizon)?))
            }
            _ => Ok(CovSource::Spectral(SpectralAutocov::new(model, horizon)?)),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            CovSource::ClosedForm(c) => c.eval(t),
            CovSource::Spectral(c) => c.eval(t),
        }
    }

    pub fn method(&self) -> CovMethod {
        match self {
            CovSource::ClosedForm(_) => CovMethod::ClosedForm,
            CovSource::Spectral(_) => CovMethod::Numerical,
        }
    }
}

impl AutocovGrid {
    /// Grid via the best available route for the family.
    pub fn build(model: &DelayModelSpec, delta: f64, m: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(SddeError::InvalidConfig(format!(
                "lag spacing must be positive, got {delta}"
            )));
        }
        let source = CovSource::best(model, delta * m as f64)?;
        let values = (0..=m)
            .map(|j| source.eval(j as f64 * delta))
            .collect::<Result<Vec<f64>>>()?;
        Ok(AutocovGrid {
            model: model.clone(),
            delta,
            values,
            grads: None,
            method: source.method(),
            one_sided: Vec::new(),
        })
    }

    /// Grid via the spectral delay Yule-Walker solver regardless of family.
    pub fn numerical(model: &DelayModelSpec, delta: f64, m: usize) -> Result<Self> {
        Self::numerical_with(model, delta, m, SpectralOptions::default())
    }

    pub fn numerical_with(
        model: &DelayModelSpec,
        delta: f64,
        m: usize,
        opts: SpectralOptions,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(SddeError::InvalidConfig(format!(
                "lag spacing must be positive, got {delta}"
            )));
        }
        let source = SpectralAutocov::with_options(model, delta * m as f64, opts)?;
        let values = (0..=m)
            .map(|j| source.eval(j as f64 * delta))
            .collect::<Result<Vec<f64>>>()?;
        Ok(AutocovGrid {
            model: model.clone(),
            delta,
            values,
            grads: None,
            method: CovMethod::Numerical,
            one_sided: Vec::new(),
        })
    }

    /// Attaches the parameter gradient rows for the free fields of `binding`.
    pub fn with_gradients(mut self, binding: &ParameterBinding) -> Result<Self> {
        let (grads, one_sided) =
            autocov_grad(&self.model, binding, self.delta, self.max_lag_index())?;
        self.grads = Some(grads);
        self.one_sided = one_sided;
        Ok(self)
    }

    pub fn max_lag_index(&self) -> usize {
        self.values.len() - 1
    }

    /// K(j delta); symmetric in the sign of j.
    pub fn value(&self, lag: usize) -> Result<f64> {
        self.values.get(lag).copied().ok_or_else(|| {
            SddeError::InsufficientCoverage(format!(
                "lag {lag} beyond grid maximum {}",
                self.max_lag_index()
            ))
        })
    }

    /// Toeplitz covariance matrix of `ell` consecutive observations.
    pub fn toeplitz(&self, ell: usize) -> Result<DMatrix<f64>> {
        if ell == 0 || ell > self.values.len() {
            return Err(SddeError::InsufficientCoverage(format!(
                "Toeplitz order {ell} not covered by grid of {} lags",
                self.values.len()
            )));
        }
        Ok(DMatrix::from_fn(ell, ell, |i, j| {
            self.values[i.abs_diff(j)]
        }))
    }

    /// Lag vector (K(delta), ..., K(ell delta)).
    pub fn kappa(&self, ell: usize) -> Result<DVector<f64>> {
        if ell >= self.values.len() {
            return Err(SddeError::InsufficientCoverage(format!(
                "kappa order {ell} not covered by grid of {} lags",
                self.values.len()
            )));
        }
        Ok(DVector::from_fn(ell, |i, _| self.values[i + 1]))
    }

    /// Structural invariants of a stationary autocovariance: positive
    /// variance, Cauchy-Schwarz bound and positive-definite Toeplitz minors.
    pub fn validate(&self) -> Result<()> {
        let k0 = self.values[0];
        if !(k0 > 0.0) {
            return Err(SddeError::InvalidData(format!("K(0) = {k0} must be positive")));
        }
        for (j, &v) in self.values.iter().enumerate() {
            if v.abs() > k0 * (1.0 + 1e-12) {
                return Err(SddeError::InvalidData(format!(
                    "|K({j} delta)| = {v} exceeds K(0) = {k0}"
                )));
            }
        }
        for ell in 1..=self.values.len() {
            if self.toeplitz(ell)?.cholesky().is_none() {
                return Err(SddeError::Singular(format!(
                    "Toeplitz minor of order {ell} is not positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the numerical (spectral) autocovariance grid; rejects
/// non-stationary models and fails loudly if the residual tolerance is not
/// reached at the configured quadrature budget.
pub fn numerical_autocov(model: &DelayModelSpec, delta: f64, m: usize) -> Result<AutocovGrid> {
    AutocovGrid::numerical(model, delta, m)
}

/// Residual of the delay Yule-Walker equation at `t`:
/// `dK/dt (t) - int K(t+s) a(ds)`. The derivative uses five-point stencils,
/// switched to one-sided near the kinks of K at multiples of the delays.
pub fn yw_residual<F>(k: F, model: &DelayModelSpec, t: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if t <= 0.0 {
        return Err(SddeError::InvalidConfig(
            "the delay Yule-Walker equation holds for t > 0".into(),
        ));
    }
    let r = model.max_delay();
    let scale = if r.is_finite() { r.min(1.0).max(1e-3) } else { 1.0 };
    let h = 1e-3 * scale;
    let deriv = kink_aware_derivative(&k, model, t, h)?;
    let integral = drift_integral(&k, model, t)?;
    Ok(deriv - integral)
}

/// Residual of the boundary condition `2 int K(s) a(ds) + sigma^2`.
pub fn yw_boundary_residual<F>(k: F, model: &DelayModelSpec) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let integral = drift_integral(&k, model, 0.0)?;
    Ok(2.0 * integral + model.sigma() * model.sigma())
}

/// `int K(t+s) a(ds)` over `s in [-r, 0]`.
fn drift_integral<F>(k: &F, model: &DelayModelSpec, t: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    match model {
        DelayModelSpec::TwoDelay { a, b, r, .. } => Ok(a * k(t)? + b * k(t - r)?),
        DelayModelSpec::MultiDelay { alphas, delays, .. } => {
            let mut acc = 0.0;
            for (&al, &d) in alphas.iter().zip(delays) {
                acc += al * k(t - d)?;
            }
            Ok(acc)
        }
        DelayModelSpec::ExpKernel { a, b, r, .. } => {
            // -b int_{-L}^0 K(t+s) e^{a s} ds, panels split where K kinks
            let horizon = if r.is_finite() {
                *r
            } else {
                // truncate where the kernel mass drops below 1e-12
                12.0 * std::f64::consts::LN_10 / a
            };
            // evaluation failures inside the closure surface as NaN and are
            // re-checked after integration
            let integrand = |s: f64| match k(t + s) {
                Ok(v) => v * (a * s).exp(),
                Err(_) => f64::NAN,
            };
            let mut cuts = vec![-horizon, 0.0];
            // K has derivative kinks at |t + s| = 0; keep quadrature panels
            // away from crossing it
            if (-horizon..0.0).contains(&(-t)) {
                cuts.push(-t);
            }
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut acc = 0.0;
            for pair in cuts.windows(2) {
                acc += adaptive_simpson(&integrand, pair[0], pair[1], 1e-11);
            }
            if !acc.is_finite() {
                return Err(SddeError::InsufficientCoverage(format!(
                    "autocovariance not evaluable on [{}, {}]",
                    t - horizon,
                    t
                )));
            }
            Ok(-b * acc)
        }
    }
}

fn kink_aware_derivative<F>(k: &F, model: &DelayModelSpec, t: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    // K is C^1 away from t = 0, with curvature jumps at multiples of the
    // discrete delays; a stencil must not straddle them.
    let mut kink_dist = t.abs(); // kink at 0
    let mut kink_at = 0.0;
    let delays: Vec<f64> = match model {
        DelayModelSpec::TwoDelay { r, .. } => vec![*r],
        DelayModelSpec::MultiDelay { delays, .. } => {
            delays.iter().copied().filter(|d| *d > 0.0).collect()
        }
        DelayModelSpec::ExpKernel { .. } => Vec::new(), // kernel smoothing, no lattice kinks
    };
    for d in delays {
        let nearest = (t / d).round() * d;
        if nearest > 0.0 && (t - nearest).abs() < kink_dist {
            kink_dist = (t - nearest).abs();
            kink_at = nearest;
        }
    }
    let eval = |x: f64| k(x).unwrap_or(f64::NAN);
    let value = if kink_dist < 2.5 * h {
        // step over the kink with a one-sided stencil
        let side = if t >= kink_at { 1.0 } else { -1.0 };
        onesided_deriv5(&eval, t, h, side)
    } else {
        central_deriv5(&eval, t, h)
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SddeError::InsufficientCoverage(format!(
            "autocovariance not evaluable on the stencil around t = {t}"
        )))
    }
}

/// Parameter gradient of the lag grid by central differences with
/// per-parameter steps `h_i = eps^(1/3) max(|theta_i|, 1)`, projected to stay
/// inside the stationarity region. Returns the `p x (m+1)` matrix and the
/// list of parameters that needed one-sided differences at the boundary.
pub fn autocov_grad(
    model: &DelayModelSpec,
    binding: &ParameterBinding,
    delta: f64,
    m: usize,
) -> Result<(DMatrix<f64>, Vec<Param>)> {
    binding.validate(model)?;
    let params = binding.free_params();
    let theta = binding.theta_of(model)?;
    let p = params.len();
    let mut grads = DMatrix::zeros(p, m + 1);
    let mut one_sided = Vec::new();

    let values_at = |theta_mod: &[f64]| -> Result<Vec<f64>> {
        let perturbed = binding.apply(model, theta_mod)?;
        Ok(AutocovGrid::build(&perturbed, delta, m)?.values)
    };
    let admissible = |theta_mod: &[f64]| -> bool {
        binding
            .apply(model, theta_mod)
            .and_then(|m| stationarity(&m))
            .map(|v| v.stationary)
            .unwrap_or(false)
    };

    for (i, &param) in params.iter().enumerate() {
        let h = f64::EPSILON.cbrt() * theta[i].abs().max(1.0);
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let row: Vec<f64> = if admissible(&plus) && admissible(&minus) {
            let vp = values_at(&plus)?;
            let vm = values_at(&minus)?;
            vp.iter().zip(&vm).map(|(p, m)| (p - m) / (2.0 * h)).collect()
        } else {
            // boundary-adjacent: second-order one-sided difference into the region
            one_sided.push(param);
            let sign = if admissible(&plus) { 1.0 } else { -1.0 };
            let mut one = theta.clone();
            one[i] += sign * h;
            let mut two = theta.clone();
            two[i] += 2.0 * sign * h;
            if !admissible(&one) {
                return Err(SddeError::NotStationary(format!(
                    "parameter {param} sits on the stationarity boundary; no difference step fits"
                )));
            }
            let v0 = values_at(&theta)?;
            let v1 = values_at(&one)?;
            if admissible(&two) {
                let v2 = values_at(&two)?;
                v0.iter()
                    .zip(&v1)
                    .zip(&v2)
                    .map(|((f0, f1), f2)| sign * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
                    .collect()
            } else {
                v0.iter()
                    .zip(&v1)
                    .map(|(f0, f1)| sign * (f1 - f0) / h)
                    .collect()
            }
        };
        for (j, v) in row.into_iter().enumerate() {
            grads[(i, j)] = v;
        }
    }
    Ok((grads, one_sided))
}
