//! Best-linear-predictor coefficients phi_k, prediction variance v_k and
//! their parameter derivatives via the Durbin-Levinson recursion and the
//! recursion obtained by differentiating it level by level.

use nalgebra::{DMatrix, DVector};

use crate::autocov::AutocovGrid;
use crate::error::{Result, SddeError};

/// Abort threshold for `1 - phi_{ii}^2`; clamping instead would let the
/// downstream `v_k^{-2}` weights amplify the error silently.
const LADDER_FLOOR: f64 = 1e-12;

/// Prediction coefficients of depth k, with the whole intermediate ladder
/// retained (the exact likelihood needs every level).
#[derive(Debug, Clone)]
pub struct PredictorCoefficients {
    pub k: usize,
    /// phi_k ordered to multiply (X(i delta), ..., X((i+1-k) delta)):
    /// entry j is the weight of lag j+1.
    pub phi: DVector<f64>,
    /// prediction variance v_k > 0
    pub v: f64,
    /// per-level coefficient vectors phi_1, ..., phi_k
    pub ladder_phi: Vec<DVector<f64>>,
    /// v_0, v_1, ..., v_k
    pub ladder_v: Vec<f64>,
    /// p x k matrix of d phi_k / d theta (rows are parameters)
    pub dphi: Option<DMatrix<f64>>,
    /// d v_k / d theta
    pub dv: Option<DVector<f64>>,
}

impl PredictorCoefficients {
    pub fn gradients(&self) -> Result<(&DMatrix<f64>, &DVector<f64>)> {
        match (&self.dphi, &self.dv) {
            (Some(dphi), Some(dv)) => Ok((dphi, dv)),
            _ => Err(SddeError::InvalidConfig(
                "predictor coefficients were built without gradients".into(),
            )),
        }
    }
}

/// Durbin-Levinson recursion on the lag grid, primal quantities only.
pub fn durbin_levinson(grid: &AutocovGrid, k: usize) -> Result<PredictorCoefficients> {
    if k == 0 {
        return Err(SddeError::InvalidConfig("depth k must be >= 1".into()));
    }
    if grid.max_lag_index() < k {
        return Err(SddeError::InsufficientCoverage(format!(
            "depth {k} needs lags 0..={k}, grid has 0..={}",
            grid.max_lag_index()
        )));
    }
    let kv = &grid.values;
    let mut v = kv[0];
    if !(v > 0.0) {
        return Err(SddeError::Singular(format!("K(0) = {v} not positive")));
    }
    let mut ladder_phi: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut ladder_v = vec![v];
    let mut phi = DVector::zeros(0);
    for i in 1..=k {
        let mut acc = kv[i];
        for j in 1..i {
            acc -= phi[j - 1] * kv[i - j];
        }
        let phi_ii = acc / v;
        let mut next = DVector::zeros(i);
        for j in 1..i {
            next[j - 1] = phi[j - 1] - phi_ii * phi[i - j - 1];
        }
        next[i - 1] = phi_ii;
        let shrink = 1.0 - phi_ii * phi_ii;
        if shrink < LADDER_FLOOR {
            return Err(SddeError::Ladder {
                level: i,
                reason: format!(
                    "|phi_{{{i},{i}}}| = {} leaves 1 - phi^2 below {LADDER_FLOOR:e}",
                    phi_ii.abs()
                ),
            });
        }
        v *= shrink;
        phi = next.clone();
        ladder_phi.push(next);
        ladder_v.push(v);
    }
    Ok(PredictorCoefficients {
        k,
        phi,
        v,
        ladder_phi,
        ladder_v,
        dphi: None,
        dv: None,
    })
}

/// Durbin-Levinson with the differentiated recursion run alongside the
/// primal ladder; requires gradient rows on the grid.
pub fn durbin_levinson_grad(grid: &AutocovGrid, k: usize) -> Result<PredictorCoefficients> {
    let grads = grid.grads.as_ref().ok_or_else(|| {
        SddeError::InvalidConfig("grid has no gradient rows; call with_gradients first".into())
    })?;
    if grads.ncols() < k + 1 {
        return Err(SddeError::InsufficientCoverage(format!(
            "gradients cover {} lags, depth {k} needs {}",
            grads.ncols(),
            k + 1
        )));
    }
    let mut coeffs = durbin_levinson(grid, k)?;
    let p = grads.nrows();
    let kv = &grid.values;
    let dk = |row: usize, lag: usize| grads[(row, lag)];

    // per-parameter state: d phi_{i-1} and d v_{i-1}
    let mut dphi_prev: Vec<DVector<f64>> = vec![DVector::zeros(0); p];
    let mut dv_prev: Vec<f64> = (0..p).map(|row| dk(row, 0)).collect();
    let mut dphi_cur: Vec<DVector<f64>> = vec![DVector::zeros(0); p];

    for i in 1..=k {
        let v_prev = coeffs.ladder_v[i - 1];
        let phi_prev: Option<&DVector<f64>> = if i > 1 {
            Some(&coeffs.ladder_phi[i - 2])
        } else {
            None
        };
        let phi_cur = &coeffs.ladder_phi[i - 1];
        let phi_ii = phi_cur[i - 1];
        // numerator of phi_ii before division by v_{i-1}
        let mut numer = kv[i];
        if let Some(prev) = phi_prev {
            for j in 1..i {
                numer -= prev[j - 1] * kv[i - j];
            }
        }
        for row in 0..p {
            let mut dnumer = dk(row, i);
            if let Some(prev) = phi_prev {
                for j in 1..i {
                    dnumer -= dphi_prev[row][j - 1] * kv[i - j] + prev[j - 1] * dk(row, i - j);
                }
            }
            // quotient rule for phi_ii = numer / v_{i-1}
            let dphi_ii = (dnumer * v_prev - numer * dv_prev[row]) / (v_prev * v_prev);
            let mut dnext = DVector::zeros(i);
            if let Some(prev) = phi_prev {
                for j in 1..i {
                    dnext[j - 1] = dphi_prev[row][j - 1]
                        - dphi_ii * prev[i - j - 1]
                        - phi_ii * dphi_prev[row][i - j - 1];
                }
            }
            dnext[i - 1] = dphi_ii;
            dv_prev[row] = dv_prev[row] * (1.0 - phi_ii * phi_ii)
                - 2.0 * v_prev * phi_ii * dphi_ii;
            dphi_cur[row] = dnext;
        }
        std::mem::swap(&mut dphi_prev, &mut dphi_cur);
    }

    let mut dphi = DMatrix::zeros(p, k);
    for row in 0..p {
        for j in 0..k {
            dphi[(row, j)] = dphi_prev[row][j];
        }
    }
    coeffs.dphi = Some(dphi);
    coeffs.dv = Some(DVector::from_vec(dv_prev));
    Ok(coeffs)
}

/// Oracle route: solves the defining k x k Toeplitz system by a symmetric
/// factorization. Used by tests to pin down the recursion.
pub fn direct_solve(grid: &AutocovGrid, k: usize) -> Result<(DVector<f64>, f64)> {
    if k == 0 {
        return Err(SddeError::InvalidConfig("depth k must be >= 1".into()));
    }
    let toeplitz = grid.toeplitz(k)?;
    let kappa = grid.kappa(k)?;
    let chol = toeplitz
        .clone()
        .cholesky()
        .ok_or_else(|| SddeError::Singular("Toeplitz system not positive definite".into()))?;
    let phi = chol.solve(&kappa);
    let v = grid.values[0] - kappa.dot(&phi);
    Ok((phi, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocov::{AutocovGrid, CovMethod};
    use crate::model::DelayModelSpec;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    /// Builds a grid directly from raw values (test helper).
    fn raw_grid(delta: f64, values: Vec<f64>) -> AutocovGrid {
        AutocovGrid {
            model: DelayModelSpec::two_delay(-1.0, 0.0, 1.0, 1.0),
            delta,
            values,
            grads: None,
            method: CovMethod::ClosedForm,
            one_sided: Vec::new(),
        }
    }

    fn raw_grid_with_grads(delta: f64, values: Vec<f64>, grads: DMatrix<f64>) -> AutocovGrid {
        let mut g = raw_grid(delta, values);
        g.grads = Some(grads);
        g
    }

    #[test]
    fn depth_one_is_the_lag_one_ratio() {
        let grid = raw_grid(1.0, vec![2.0, 0.8, 0.3]);
        let c = durbin_levinson(&grid, 1).unwrap();
        assert_relative_eq!(c.phi[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(c.v, 2.0 * (1.0 - 0.16), epsilon = 1e-15);
    }

    #[test]
    fn white_noise_has_no_predictability() {
        let grid = raw_grid(1.0, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for k in 1..=5 {
            let c = durbin_levinson(&grid, k).unwrap();
            assert!(c.phi.iter().all(|&x| x == 0.0));
            assert_eq!(c.v, 1.0);
            let (phi_d, v_d) = direct_solve(&grid, k).unwrap();
            assert!(phi_d.iter().all(|&x| x.abs() < 1e-14));
            assert_relative_eq!(v_d, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ar1_covariance_truncates_after_lag_one() {
        // K(j) = 0.6^j: phi = (0.6, 0), v = 0.64 by the 2x2 system
        let grid = raw_grid(1.0, vec![1.0, 0.6, 0.36]);
        let c = durbin_levinson(&grid, 2).unwrap();
        assert_relative_eq!(c.phi[0], 0.6, epsilon = 1e-14);
        assert_relative_eq!(c.phi[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(c.v, 0.64, epsilon = 1e-14);
    }

    #[test]
    fn ladder_identity_holds_exactly_as_computed() {
        let model = DelayModelSpec::two_delay(-1.0, -0.1353, 1.0, 1.0);
        let grid = AutocovGrid::build(&model, 0.5, 12).unwrap();
        let c = durbin_levinson(&grid, 10).unwrap();
        for i in 1..=10 {
            let phi_ii = c.ladder_phi[i - 1][i - 1];
            assert!(phi_ii.abs() < 1.0);
            let expected = c.ladder_v[i - 1] * (1.0 - phi_ii * phi_ii);
            assert_eq!(c.ladder_v[i], expected, "ladder identity at level {i}");
        }
        // v monotone nonincreasing, strictly positive
        for w in c.ladder_v.windows(2) {
            assert!(w[1] <= w[0] && w[1] > 0.0);
        }
    }

    #[test]
    fn recursion_matches_direct_solve_on_model_grids() {
        for model in [
            DelayModelSpec::two_delay(-1.0, -0.1353, 1.0, 1.0),
            DelayModelSpec::two_delay(-1.0, 0.95, 1.0, 1.0),
            DelayModelSpec::two_delay(-1.0, -2.1, 1.0, 1.0),
        ] {
            let grid = AutocovGrid::build(&model, 1.0, 12).unwrap();
            for k in [1, 3, 5, 9] {
                let c = durbin_levinson(&grid, k).unwrap();
                let (phi_d, v_d) = direct_solve(&grid, k).unwrap();
                for j in 0..k {
                    assert_relative_eq!(c.phi[j], phi_d[j], epsilon = 1e-10, max_relative = 1e-10);
                }
                assert_relative_eq!(c.v, v_d, epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_conditional_variance_identity() {
        let model = DelayModelSpec::two_delay(-1.0, 0.95, 1.0, 1.0);
        let grid = AutocovGrid::build(&model, 1.0, 8).unwrap();
        let k = 6;
        let c = durbin_levinson(&grid, k).unwrap();
        let toeplitz = grid.toeplitz(k).unwrap();
        let kappa = grid.kappa(k).unwrap();
        let solved = toeplitz.cholesky().unwrap().solve(&kappa);
        let conditional = grid.values[0] - kappa.dot(&solved);
        assert_relative_eq!(c.v, conditional, max_relative = 1e-10);
    }

    #[test]
    fn nonpositive_definite_grid_is_rejected_with_level() {
        // |K(1)| > K(0) breaks positive definiteness at level 1
        let grid = raw_grid(1.0, vec![1.0, 1.2, 0.1]);
        match durbin_levinson(&grid, 2) {
            Err(SddeError::Ladder { level, .. }) => assert_eq!(level, 1),
            other => panic!("expected ladder failure, got {other:?}"),
        }
    }

    #[test]
    fn theta_independent_grid_has_zero_gradients() {
        let grads = DMatrix::zeros(2, 4);
        let grid = raw_grid_with_grads(1.0, vec![1.0, 0.4, 0.2, 0.1], grads);
        let c = durbin_levinson_grad(&grid, 3).unwrap();
        let (dphi, dv) = c.gradients().unwrap();
        assert!(dphi.iter().all(|&x| x == 0.0));
        assert!(dv.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ou_depth_one_gradient_is_analytic() {
        // OU with parameter a: phi_11 = e^{a delta}, d(phi_11)/da = delta e^{a delta}
        use crate::model::{Param, ParameterBinding};
        let delta = 0.5;
        let model = DelayModelSpec::two_delay(-1.0, 0.0, 1.0, 1.0);
        let binding = ParameterBinding::free(&[(Param::A, -10.0, -0.01)]);
        let grid = AutocovGrid::build(&model, delta, 3)
            .unwrap()
            .with_gradients(&binding)
            .unwrap();
        let c = durbin_levinson_grad(&grid, 1).unwrap();
        assert_relative_eq!(c.phi[0], (-delta as f64).exp(), epsilon = 1e-10);
        let (dphi, _) = c.gradients().unwrap();
        assert_relative_eq!(dphi[(0, 0)], delta * (-delta as f64).exp(), max_relative = 1e-7);
    }

    #[test]
    fn gradient_recursion_matches_finite_differences() {
        use crate::model::{Param, ParameterBinding};
        let model = DelayModelSpec::two_delay(-1.0, -0.1353, 1.0, 1.0);
        let binding =
            ParameterBinding::free(&[(Param::A, -10.0, 10.0), (Param::B, -10.0, 10.0)]);
        let delta = 0.5;
        let k = 5;
        let grid = AutocovGrid::build(&model, delta, k + 1)
            .unwrap()
            .with_gradients(&binding)
            .unwrap();
        let c = durbin_levinson_grad(&grid, k).unwrap();
        let (dphi, dv) = c.gradients().unwrap();

        let theta0 = binding.theta_of(&model).unwrap();
        for row in 0..2 {
            let h = 1e-6 * theta0[row].abs().max(1.0);
            let eval = |shift: f64| {
                let mut theta = theta0.clone();
                theta[row] += shift;
                let m = binding.apply(&model, &theta).unwrap();
                let g = AutocovGrid::build(&m, delta, k + 1).unwrap();
                durbin_levinson(&g, k).unwrap()
            };
            let plus = eval(h);
            let minus = eval(-h);
            for j in 0..k {
                let fd = (plus.phi[j] - minus.phi[j]) / (2.0 * h);
                assert_relative_eq!(dphi[(row, j)], fd, epsilon = 1e-7, max_relative = 1e-5);
            }
            let fd_v = (plus.v - minus.v) / (2.0 * h);
            assert_relative_eq!(dv[row], fd_v, epsilon = 1e-7, max_relative = 1e-5);
        }
    }
}
