//! Spectral solver for the delay Yule-Walker equation.
//!
//! The stationary solution has spectral density
//! `f(w) = (sigma^2 / 2 pi) |i w - ahat(w)|^{-2}` with
//! `ahat(w) = int e^{i w s} a(ds)`, so
//!
//!   K(t) = (sigma^2 / pi) int_0^inf |i w - ahat(w)|^{-2} cos(w t) dw.
//!
//! A reference Lorentzian `1/(w^2 + mu^2)` with known cosine transform is
//! subtracted to make the truncated tail `O(tv / Omega^2)`; the remainder is
//! even and smooth, so a single trapezoid-weighted FFT evaluates it on a
//! dense lag grid with aliasing controlled by the exponential decay of K.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, SddeError};
use crate::model::{stationarity, DelayModelSpec};
use crate::numeric::cubic_interp;

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Frequency truncation point.
    pub omega_max: f64,
    /// log2 of the FFT length.
    pub log2_len: u32,
    /// Tolerance for the built-in delay Yule-Walker residual check.
    pub residual_tol: f64,
    /// Skip the residual self-check (used by the checker itself).
    pub skip_check: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            omega_max: 2.0e4,
            log2_len: 22,
            residual_tol: 1e-6,
            skip_check: false,
        }
    }
}

/// Autocovariance values on a dense lag grid produced by the spectral route.
#[derive(Debug, Clone)]
pub struct SpectralAutocov {
    model: DelayModelSpec,
    dense: Vec<f64>,
    dt: f64,
    mu: f64,
    sigma_sq: f64,
    horizon: f64,
}

impl SpectralAutocov {
    pub fn new(model: &DelayModelSpec, horizon: f64) -> Result<Self> {
        Self::with_options(model, horizon, SpectralOptions::default())
    }

    pub fn with_options(
        model: &DelayModelSpec,
        horizon: f64,
        opts: SpectralOptions,
    ) -> Result<Self> {
        model.validate()?;
        let verdict = stationarity(model)?;
        if !verdict.stationary {
            return Err(SddeError::NotStationary(format!(
                "spectral solver requires a stationary model, margin {:.3e}",
                verdict.margin
            )));
        }
        let n = 1usize << opts.log2_len;
        let d_omega = opts.omega_max / n as f64;
        let dt = 2.0 * std::f64::consts::PI / opts.omega_max;
        let needed = (horizon / dt).ceil() as usize + 8;
        if needed > n / 2 {
            return Err(SddeError::InvalidConfig(format!(
                "horizon {horizon} needs {needed} lag nodes, FFT length {n} provides {}",
                n / 2
            )));
        }
        let mu = model.measure_total_variation().max(1.0);
        let mu_sq = mu * mu;

        let mut buf: Vec<Complex64> = (0..n)
            .map(|m| {
                let w = m as f64 * d_omega;
                let denom = Complex64::new(0.0, w) - model.measure_transform(Complex64::new(0.0, w));
                let f = 1.0 / denom.norm_sqr();
                let g = 1.0 / (w * w + mu_sq);
                let weight = if m == 0 { 0.5 } else { 1.0 };
                Complex64::new(weight * (f - g), 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);

        let sigma_sq = model.sigma() * model.sigma();
        let dense: Vec<f64> = (0..=needed)
            .map(|j| {
                let t = j as f64 * dt;
                sigma_sq / std::f64::consts::PI * d_omega * buf[j].re
                    + sigma_sq / (2.0 * mu) * (-mu * t).exp()
            })
            .collect();

        let cov = SpectralAutocov {
            model: model.clone(),
            dense,
            dt,
            mu,
            sigma_sq,
            horizon,
        };
        if !opts.skip_check {
            cov.self_check(opts.residual_tol)?;
        }
        Ok(cov)
    }

    /// Verifies the delay Yule-Walker equation and its boundary condition on
    /// a few interior points; fails loudly when the quadrature budget was
    /// insufficient for the requested tolerance.
    fn self_check(&self, tol: f64) -> Result<()> {
        let r = self.model.max_delay();
        let scale = self.eval(0.0)?.abs().max(1e-12);
        let probe = if r.is_finite() && r > 0.0 { r } else { 1.0 };
        let mut worst: f64 = 0.0;
        for &frac in &[0.37, 0.81, 1.43] {
            let t = frac * probe;
            if t + 2.0 * probe < self.horizon.max(probe * 2.2) && t < self.horizon {
                let resid = super::yw_residual(|u| self.eval(u), &self.model, t)?;
                worst = worst.max(resid.abs() / scale);
            }
        }
        let boundary = super::yw_boundary_residual(|u| self.eval(u), &self.model)?;
        worst = worst.max(boundary.abs() / scale);
        if worst > tol {
            return Err(SddeError::ToleranceNotReached(format!(
                "spectral autocovariance residual {worst:.3e} exceeds {tol:.1e}; \
                 increase omega_max / FFT length"
            )));
        }
        Ok(())
    }

    pub fn model(&self) -> &DelayModelSpec {
        &self.model
    }

    /// K(t) with symmetric extension, cubic interpolation on the dense grid.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let t = t.abs();
        if t > self.horizon + 1e-9 {
            return Err(SddeError::InsufficientCoverage(format!(
                "t = {t} beyond the spectral horizon {}",
                self.horizon
            )));
        }
        let pos = t / self.dt;
        let idx = pos.round();
        if (pos - idx).abs() < 1e-9 {
            let j = idx as usize;
            if j < self.dense.len() {
                return Ok(self.dense[j]);
            }
        }
        Ok(cubic_interp(&self.dense, 0.0, self.dt, t))
    }

    /// Exposes the reference decay rate used for the analytic tail term.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }
}
