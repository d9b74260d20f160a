//! Prediction-based estimating functions: the H-terms built from prediction
//! errors, their moment matrices M1 and M2, the sensitivity matrix, optimal
//! and pseudo weight matrices, sandwich covariances and the efficiency-loss
//! comparison between the pseudo-likelihood and the optimal estimator.
//!
//! Every entry of the H-terms is a linear or centered-quadratic form in a
//! jointly Gaussian vector, so all the cross-moments in M2 reduce to sums of
//! pairwise covariance products (the Isserlis identity); the closed form
//! works at every depth k. A Monte Carlo route is kept as an independent
//! cross-check.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::autocov::AutocovGrid;
use crate::error::{Result, SddeError};
use crate::likelihood::{prediction_residuals, ObservationSeries};
use crate::model::DelayModelSpec;
use crate::numeric::derive_seed;
use crate::predictor::PredictorCoefficients;
use crate::simulator::{sample_observations, simulate_path, SimConfig};

/// Relative threshold below which the M2 series is considered converged.
pub const M2_TERM_TOL: f64 = 1e-10;
/// Hard cap on the truncation index of the M2 series.
pub const M2_MAX_LAG: usize = 200;

/// One H-term: the first k entries are the prediction window scaled by the
/// prediction error, the last entry is the centered squared error.
#[derive(Debug, Clone)]
pub struct HTerm {
    pub i: usize,
    pub h: DVector<f64>,
}

/// H_i for i = k..n-1 (paper indexing; entry `i` stores that index).
pub fn h_terms(data: &ObservationSeries, coeffs: &PredictorCoefficients) -> Result<Vec<HTerm>> {
    let residuals = prediction_residuals(data, coeffs)?;
    let k = coeffs.k;
    let v = coeffs.v;
    let x = &data.x;
    Ok((k..data.n())
        .map(|i| {
            let e = residuals[i - k];
            let mut h = DVector::zeros(k + 1);
            for s in 0..k {
                h[s] = x[i - 1 - s] * e;
            }
            h[k] = e * e - v;
            HTerm { i, h }
        })
        .collect())
}

/// Sum of the H-terms (the data part of the estimating function).
pub fn h_sum(terms: &[HTerm]) -> DVector<f64> {
    let dim = terms.first().map_or(0, |t| t.h.len());
    terms
        .iter()
        .fold(DVector::zeros(dim), |acc, term| acc + &term.h)
}

/// G_n(theta) = A(theta) sum_i H_i(theta), deterministic summation order.
pub fn estimating_function(a: &DMatrix<f64>, terms: &[HTerm]) -> Result<DVector<f64>> {
    let dim = terms.first().map_or(a.ncols(), |t| t.h.len());
    if a.ncols() != dim {
        return Err(SddeError::InvalidConfig(format!(
            "weight matrix has {} columns, H-terms have length {dim}",
            a.ncols()
        )));
    }
    Ok(a * h_sum(terms))
}

/// Sensitivity matrix with its rank: `S^T = -(K_k dphi^T ; dv^T)`. Rank p is
/// Condition (b) of the asymptotics (requires k+1 >= p); a deficient rank is
/// reported, not fatal, because S = 0 is a legitimate value for
/// theta-independent coefficients.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
}

impl Sensitivity {
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_identifiable(&self) -> bool {
        self.rank == self.p()
    }
}

pub fn sensitivity(coeffs: &PredictorCoefficients, kmat: &DMatrix<f64>) -> Result<Sensitivity> {
    let (dphi, dv) = coeffs.gradients()?;
    let k = coeffs.k;
    let p = dphi.nrows();
    if kmat.nrows() != k || kmat.ncols() != k {
        return Err(SddeError::InvalidConfig(format!(
            "covariance matrix is {}x{}, expected {k}x{k}",
            kmat.nrows(),
            kmat.ncols()
        )));
    }
    if k + 1 < p {
        return Err(SddeError::InvalidConfig(format!(
            "identifiability needs k+1 >= p, got k = {k}, p = {p}"
        )));
    }
    let top = dphi * kmat; // p x k
    let mut matrix = DMatrix::zeros(p, k + 1);
    for row in 0..p {
        for col in 0..k {
            matrix[(row, col)] = -top[(row, col)];
        }
        matrix[(row, k)] = -dv[row];
    }
    let scale = matrix.amax();
    let rank = if scale == 0.0 {
        0
    } else {
        matrix.clone().svd(false, false).rank(1e-10 * scale)
    };
    Ok(Sensitivity { matrix, rank })
}

/// M1 = E[H_k H_k^T]: block diagonal (v_k K_k, 2 v_k^2).
pub fn m1(coeffs: &PredictorCoefficients, kmat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = coeffs.k;
    if kmat.nrows() != k || kmat.ncols() != k {
        return Err(SddeError::InvalidConfig(format!(
            "covariance matrix is {}x{}, expected {k}x{k}",
            kmat.nrows(),
            kmat.ncols()
        )));
    }
    let v = coeffs.v;
    let mut out = DMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..k {
            out[(i, j)] = v * kmat[(i, j)];
        }
    }
    out[(k, k)] = 2.0 * v * v;
    Ok(out)
}

/// Truncation report of the M2 series.
#[derive(Debug, Clone, Copy)]
pub struct M2Info {
    /// Largest lag included.
    pub truncation: usize,
    /// Geometric estimate of the omitted tail (max-abs entry).
    pub tail_bound: f64,
}

/// Closed-form M2 by the Isserlis reduction, truncated adaptively: the
/// series stops once a term's max-abs entry drops below
/// `M2_TERM_TOL * max-abs(M1)` or at `j_cap` lags. The grid must cover lag
/// `k + j` for every included term.
pub fn m2_isserlis(
    grid: &AutocovGrid,
    coeffs: &PredictorCoefficients,
    j_cap: usize,
) -> Result<(DMatrix<f64>, M2Info)> {
    m2_isserlis_weighted(grid, coeffs, j_cap, None)
}

/// As [`m2_isserlis`] but with the finite-n weights `(n-k-j)/(n-k)` applied,
/// producing the n-dependent series of the covariance of the scaled H-sum.
pub fn m2_isserlis_finite_n(
    grid: &AutocovGrid,
    coeffs: &PredictorCoefficients,
    j_cap: usize,
    n: usize,
) -> Result<(DMatrix<f64>, M2Info)> {
    m2_isserlis_weighted(grid, coeffs, j_cap, Some(n))
}

fn m2_isserlis_weighted(
    grid: &AutocovGrid,
    coeffs: &PredictorCoefficients,
    j_cap: usize,
    finite_n: Option<usize>,
) -> Result<(DMatrix<f64>, M2Info)> {
    let k = coeffs.k;
    let m1_scale = {
        let kmat = grid.toeplitz(k)?;
        m1(coeffs, &kmat)?.amax()
    };
    let threshold = M2_TERM_TOL * m1_scale;
    let mut m2 = DMatrix::zeros(k + 1, k + 1);
    let mut prev_norm = f64::INFINITY;
    let mut last_norm = f64::INFINITY;
    let mut used = 0;
    for j in 1..=j_cap {
        if k + j > grid.max_lag_index() {
            if last_norm > threshold {
                return Err(SddeError::InsufficientCoverage(format!(
                    "M2 series not converged at lag {j} but grid stops at lag {}",
                    grid.max_lag_index()
                )));
            }
            break;
        }
        let block = h_cross_moment(grid, coeffs, j);
        let term = &block + block.transpose();
        let norm = term.amax();
        let weight = match finite_n {
            Some(n) => {
                if n <= k + j {
                    break;
                }
                (n - k - j) as f64 / (n - k) as f64
            }
            None => 1.0,
        };
        m2 += weight * term;
        used = j;
        prev_norm = last_norm;
        last_norm = norm;
        if norm < threshold {
            break;
        }
    }
    let ratio = if prev_norm.is_finite() && prev_norm > 0.0 {
        (last_norm / prev_norm).min(0.95)
    } else {
        0.5
    };
    let tail_bound = if last_norm.is_finite() {
        last_norm * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    Ok((
        m2,
        M2Info {
            truncation: used,
            tail_bound,
        },
    ))
}

/// E[H_k H_{k+j}^T] for j >= 1 via the Isserlis identity, with the window
/// orthogonality E[W e] = 0 of the own-window products already applied.
fn h_cross_moment(
    grid: &AutocovGrid,
    coeffs: &PredictorCoefficients,
    j: usize,
) -> DMatrix<f64> {
    let k = coeffs.k;
    let phi = &coeffs.phi;
    let cov = |d: i64| grid.values[d.unsigned_abs() as usize];

    // integer time indices (units of delta): window 0 entry s (s = 0..k-1)
    // sits at k - s, its target at k + 1; window j entries at k + j - t,
    // target at k + j + 1
    let w0 = |s: usize| (k - s) as i64;
    let wj = |t: usize| (k + j - t) as i64;
    let target0 = (k + 1) as i64;
    let targetj = (k + j + 1) as i64;

    // E[e0 X(m delta)] and E[ej X(m delta)]
    let ce0 = |m: i64| -> f64 {
        let mut c = cov(target0 - m);
        for s in 0..k {
            c -= phi[s] * cov(w0(s) - m);
        }
        c
    };
    let cej = |m: i64| -> f64 {
        let mut c = cov(targetj - m);
        for t in 0..k {
            c -= phi[t] * cov(wj(t) - m);
        }
        c
    };
    // E[e0 ej]
    let ce0ej = {
        let mut c = ce0(targetj);
        for t in 0..k {
            c -= phi[t] * ce0(wj(t));
        }
        c
    };

    let ce0_wj: Vec<f64> = (0..k).map(|t| ce0(wj(t))).collect();
    let cej_w0: Vec<f64> = (0..k).map(|s| cej(w0(s))).collect();

    let mut block = DMatrix::zeros(k + 1, k + 1);
    for s in 0..k {
        for t in 0..k {
            let cw = cov(w0(s) - wj(t));
            block[(s, t)] = cw * ce0ej + cej_w0[s] * ce0_wj[t];
        }
        block[(s, k)] = 2.0 * cej_w0[s] * ce0ej;
    }
    for t in 0..k {
        block[(k, t)] = 2.0 * ce0_wj[t] * ce0ej;
    }
    block[(k, k)] = 2.0 * ce0ej * ce0ej;
    block
}

/// Monte Carlo estimate of M2 (and of the covariance of the scaled H-sum).
#[derive(Debug, Clone)]
pub struct MonteCarloM2 {
    pub m2: DMatrix<f64>,
    /// entrywise standard errors of the M-bar estimate
    pub se: DMatrix<f64>,
    pub mbar_n: DMatrix<f64>,
    pub nsim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct M2McConfig {
    /// series length per replicate
    pub n: usize,
    /// number of replicate paths
    pub nsim: usize,
    /// Euler step
    pub step: f64,
    /// burn-in (None picks the default)
    pub warmup: Option<f64>,
}

impl Default for M2McConfig {
    fn default() -> Self {
        M2McConfig {
            n: 400,
            nsim: 1000,
            step: 1e-3,
            warmup: None,
        }
    }
}

/// Estimates `Mbar_n`, the covariance of `sum H_i / sqrt(n-k)`, from
/// independent simulated replicates (fresh derived seed per path), and
/// returns `Mbar_n - M1` with entrywise standard errors.
pub fn m2_montecarlo(
    model: &DelayModelSpec,
    coeffs: &PredictorCoefficients,
    kmat: &DMatrix<f64>,
    delta: f64,
    cfg: &M2McConfig,
    seed: u64,
) -> Result<MonteCarloM2> {
    let k = coeffs.k;
    let n = cfg.n;
    if n <= k + 1 {
        return Err(SddeError::InvalidConfig(format!(
            "series length {n} too short for depth {k}"
        )));
    }
    let dim = k + 1;
    let sums: Vec<DVector<f64>> = (0..cfg.nsim)
        .into_par_iter()
        .map(|rep| -> Result<DVector<f64>> {
            let mut sim = SimConfig::new(
                model.clone(),
                cfg.step,
                (n + 1) as f64 * delta,
                derive_seed(seed, 0, rep as u64),
            );
            sim.warmup = cfg.warmup;
            let path = simulate_path(&sim)?;
            let data = sample_observations(&path, delta, n)?;
            let terms = h_terms(&data, coeffs)?;
            Ok(h_sum(&terms) / ((n - k) as f64).sqrt())
        })
        .collect::<Result<Vec<_>>>()?;

    let count = sums.len() as f64;
    let mean = sums
        .iter()
        .fold(DVector::zeros(dim), |acc, s| acc + s)
        / count;
    let mut mbar = DMatrix::zeros(dim, dim);
    let mut second = DMatrix::zeros(dim, dim); // running sums for the SEs
    for s in sums.iter() {
        let c = s - &mean;
        let outer = &c * c.transpose();
        mbar += &outer;
        second += outer.map(|x| x * x);
    }
    mbar /= count - 1.0;
    let se = DMatrix::from_fn(dim, dim, |i, j| {
        let m = mbar[(i, j)] * (count - 1.0) / count;
        let var = second[(i, j)] / count - m * m;
        (var.max(0.0) / count).sqrt()
    });
    let m2 = &mbar - m1(coeffs, kmat)?;
    Ok(MonteCarloM2 {
        m2,
        se,
        mbar_n: mbar,
        nsim: cfg.nsim,
        n,
    })
}

/// Which weight matrix an estimating function uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// A* = -S Mbar^{-1} (asymptotically optimal)
    Optimal,
    /// A*_n = -S Mbar_n^{-1} (finite-n optimal)
    OptimalFiniteN { n: usize },
    /// A-tilde = -S M1^{-1} (the pseudo-score weights)
    Pseudo,
    Custom,
}

/// A = -S M^{-1} through a factorization-based solve.
pub fn weights(s: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| SddeError::Singular("moment matrix not positive definite".into()))?;
    Ok(-(chol.solve(&s.transpose())).transpose())
}

/// The pseudo-score weight display (d phi^T / v ; d v / (2 v^2)); equal to
/// `weights(S, M1)` by the block structure of M1.
pub fn pseudo_weights(coeffs: &PredictorCoefficients) -> Result<DMatrix<f64>> {
    let (dphi, dv) = coeffs.gradients()?;
    let k = coeffs.k;
    let p = dphi.nrows();
    let v = coeffs.v;
    let mut a = DMatrix::zeros(p, k + 1);
    for row in 0..p {
        for col in 0..k {
            a[(row, col)] = dphi[(row, col)] / v;
        }
        a[(row, k)] = dv[row] / (2.0 * v * v);
    }
    Ok(a)
}

/// Sandwich pieces of the asymptotic covariance of sqrt(n)(theta_hat - theta0).
#[derive(Debug, Clone)]
pub struct SandwichCovariance {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub avar: DMatrix<f64>,
}

/// U = S A^T, V = A Mbar A^T, avar = U^{-1} V U^{-T}.
pub fn sandwich(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    mbar: &DMatrix<f64>,
) -> Result<SandwichCovariance> {
    let u = s * a.transpose();
    let v = a * mbar * a.transpose();
    let u_inv = u.clone().try_inverse().ok_or_else(|| {
        SddeError::Singular("U = S A^T is singular: weight choice is non-identifiable".into())
    })?;
    let avar = &u_inv * &v * u_inv.transpose();
    Ok(SandwichCovariance { u, v, avar })
}

/// Per-parameter efficiency loss of the pseudo-likelihood estimator against
/// the optimal prediction-based estimator, plus the full inverse-covariance
/// gap for diagnostics.
#[derive(Debug, Clone)]
pub struct EfficiencyLoss {
    /// 1 - avar_opt_jj / avar_pseudo_jj per free parameter
    pub per_param: Vec<f64>,
    /// information difference (inverse-covariance gap)
    pub information_gap: DMatrix<f64>,
    pub avar_optimal: DMatrix<f64>,
    pub avar_pseudo: DMatrix<f64>,
}

pub fn efficiency_loss(
    s: &DMatrix<f64>,
    m1_mat: &DMatrix<f64>,
    m2_mat: &DMatrix<f64>,
) -> Result<EfficiencyLoss> {
    let p = s.nrows();
    let mbar = m1_mat + m2_mat;
    let a_opt = weights(s, &mbar)?;
    let a_pseudo = weights(s, m1_mat)?;
    let opt = sandwich(&a_opt, s, &mbar)?;
    let pseudo = sandwich(&a_pseudo, s, &mbar)?;
    let info_opt = opt
        .avar
        .clone()
        .try_inverse()
        .ok_or_else(|| SddeError::Singular("optimal covariance singular".into()))?;
    let info_pseudo = pseudo
        .avar
        .clone()
        .try_inverse()
        .ok_or_else(|| SddeError::Singular("pseudo covariance singular".into()))?;
    let per_param = (0..p)
        .map(|j| 1.0 - opt.avar[(j, j)] / pseudo.avar[(j, j)])
        .collect();
    Ok(EfficiencyLoss {
        per_param,
        information_gap: info_opt - info_pseudo,
        avar_optimal: opt.avar,
        avar_pseudo: pseudo.avar,
    })
}

/// Everything the estimator and the study harness need for one
/// (theta, k, delta) configuration.
#[derive(Debug, Clone)]
pub struct MomentMatrices {
    pub s: Sensitivity,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub mbar: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub kind: WeightKind,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub avar: DMatrix<f64>,
    pub m2_info: M2Info,
}

/// Assembles S, M1, M2 (Isserlis route), the requested weight matrix and the
/// sandwich pieces from one grid-with-gradients and its predictor ladder.
pub fn moment_matrices(
    grid: &AutocovGrid,
    coeffs: &PredictorCoefficients,
    kind: WeightKind,
) -> Result<MomentMatrices> {
    let k = coeffs.k;
    let kmat = grid.toeplitz(k)?;
    let s = sensitivity(coeffs, &kmat)?;
    let m1_mat = m1(coeffs, &kmat)?;
    let (m2_mat, m2_info) = match kind {
        WeightKind::OptimalFiniteN { n } => m2_isserlis_finite_n(grid, coeffs, M2_MAX_LAG, n)?,
        _ => m2_isserlis(grid, coeffs, M2_MAX_LAG)?,
    };
    let mbar = &m1_mat + &m2_mat;
    let a = match kind {
        WeightKind::Pseudo => weights(&s.matrix, &m1_mat)?,
        _ => weights(&s.matrix, &mbar)?,
    };
    let sw = sandwich(&a, &s.matrix, &mbar)?;
    Ok(MomentMatrices {
        s,
        m1: m1_mat,
        m2: m2_mat,
        mbar,
        a,
        kind,
        u: sw.u,
        v: sw.v,
        avar: sw.avar,
        m2_info,
    })
}
