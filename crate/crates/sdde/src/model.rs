//! Affine SDDE model families, parameter bindings and stationarity analysis.
//!
//! Three families are covered: the two-delay equation
//! dX = [a X(t) + b X(t-r)] dt + sigma dW, the general multi-delay equation
//! dX = sum_k alpha_k X(t-r_k) dt + sigma dW, and the exponential-kernel
//! equation dX = -b (int_{-r}^0 X(t+s) e^{a s} ds) dt + sigma dW.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SddeError};
use crate::numeric::bisect_root;

/// Model specification for one of the supported affine SDDE families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DelayModelSpec {
    /// dX = [a X(t) + b X(t-r)] dt + sigma dW
    TwoDelay { a: f64, b: f64, r: f64, sigma: f64 },
    /// dX = sum_k alphas[k] X(t - delays[k]) dt + sigma dW
    MultiDelay {
        alphas: Vec<f64>,
        delays: Vec<f64>,
        sigma: f64,
    },
    /// dX = -b (int_{-r}^0 X(t+s) e^{a s} ds) dt + sigma dW; `r` may be infinite.
    ExpKernel { a: f64, b: f64, r: f64, sigma: f64 },
}

impl DelayModelSpec {
    pub fn two_delay(a: f64, b: f64, r: f64, sigma: f64) -> Self {
        DelayModelSpec::TwoDelay { a, b, r, sigma }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            DelayModelSpec::TwoDelay { sigma, .. }
            | DelayModelSpec::MultiDelay { sigma, .. }
            | DelayModelSpec::ExpKernel { sigma, .. } => *sigma,
        }
    }

    /// Maximal delay horizon of the drift (infinite for `ExpKernel` with
    /// `r = inf`).
    pub fn max_delay(&self) -> f64 {
        match self {
            DelayModelSpec::TwoDelay { r, .. } => *r,
            DelayModelSpec::MultiDelay { delays, .. } => delays.last().copied().unwrap_or(0.0),
            DelayModelSpec::ExpKernel { r, .. } => *r,
        }
    }

    /// Checks the structural invariants of the specification.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SddeError::InvalidModel(msg));
        match self {
            DelayModelSpec::TwoDelay { a, b, r, sigma } => {
                if !(a.is_finite() && b.is_finite()) {
                    return bad("a and b must be finite".into());
                }
                if !(*r > 0.0) || !r.is_finite() {
                    return bad(format!("delay r must be finite and positive, got {r}"));
                }
                if !(*sigma > 0.0) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
            DelayModelSpec::MultiDelay {
                alphas,
                delays,
                sigma,
            } => {
                if alphas.is_empty() || alphas.len() != delays.len() {
                    return bad("alphas and delays must be non-empty and equal length".into());
                }
                if !alphas.iter().all(|a| a.is_finite()) {
                    return bad("all alphas must be finite".into());
                }
                if delays[0] < 0.0 || !delays.windows(2).all(|w| w[0] < w[1]) {
                    return bad("delays must be nonnegative and strictly increasing".into());
                }
                if !delays.iter().all(|d| d.is_finite()) {
                    return bad("delays must be finite".into());
                }
                if !(*sigma > 0.0) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
            DelayModelSpec::ExpKernel { a, b, r, sigma } => {
                if !a.is_finite() {
                    return bad("kernel rate a must be finite".into());
                }
                if !(*b > 0.0) {
                    return bad(format!("kernel mass rate b must be positive, got {b}"));
                }
                if !(*r > 0.0) {
                    return bad(format!("delay horizon r must be positive, got {r}"));
                }
                if r.is_infinite() && *a <= 0.0 {
                    return bad("infinite horizon requires a > 0".into());
                }
                if !(*sigma > 0.0) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
        }
        Ok(())
    }

    /// The two-delay model as the equivalent two-point discrete measure; the
    /// conversion round-trips exactly.
    pub fn as_multi_delay(&self) -> Option<DelayModelSpec> {
        match self {
            DelayModelSpec::TwoDelay { a, b, r, sigma } => Some(DelayModelSpec::MultiDelay {
                alphas: vec![*a, *b],
                delays: vec![0.0, *r],
                sigma: *sigma,
            }),
            DelayModelSpec::MultiDelay { .. } => Some(self.clone()),
            DelayModelSpec::ExpKernel { .. } => None,
        }
    }

    /// Characteristic transform of the delay measure,
    /// `int e^{z s} a(ds)` over `s in [-r, 0]`, evaluated at complex `z`.
    pub fn measure_transform(&self, z: Complex64) -> Complex64 {
        match self {
            DelayModelSpec::TwoDelay { a, b, r, .. } => {
                Complex64::new(*a, 0.0) + Complex64::new(*b, 0.0) * (-z * *r).exp()
            }
            DelayModelSpec::MultiDelay { alphas, delays, .. } => alphas
                .iter()
                .zip(delays)
                .map(|(&al, &d)| Complex64::new(al, 0.0) * (-z * d).exp())
                .sum(),
            DelayModelSpec::ExpKernel { a, b, r, .. } => {
                // -b * int_{-r}^0 e^{(a+z)s} ds = -b (1 - e^{-(a+z)r})/(a+z)
                let w = z + *a;
                let scale = Complex64::new(-*b, 0.0);
                if r.is_infinite() {
                    return scale / w;
                }
                if w.norm() * *r < 1e-4 {
                    // series of (1 - e^{-w r})/w around w = 0
                    let wr = w * *r;
                    scale * *r * (Complex64::new(1.0, 0.0) - wr / 2.0 + wr * wr / 6.0)
                } else {
                    scale * (Complex64::new(1.0, 0.0) - (-w * *r).exp()) / w
                }
            }
        }
    }

    /// Total variation of the delay measure; bounds the modulus of any
    /// characteristic root with nonnegative real part.
    pub fn measure_total_variation(&self) -> f64 {
        match self {
            DelayModelSpec::TwoDelay { a, b, .. } => a.abs() + b.abs(),
            DelayModelSpec::MultiDelay { alphas, .. } => alphas.iter().map(|a| a.abs()).sum(),
            DelayModelSpec::ExpKernel { a, b, r, .. } => {
                if r.is_infinite() {
                    b / a
                } else if a.abs() < 1e-12 {
                    b * r
                } else {
                    b * (1.0 - (-a * r).exp()) / a
                }
            }
        }
    }
}

/// How a stationarity verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certification {
    /// Exact analytic criterion.
    Exact,
    /// Membership in a sufficient region only; non-membership proves nothing.
    SufficientOnly,
    /// Numerical characteristic-root count.
    RootTest,
}

/// Stationarity verdict with a signed margin to the binding constraint
/// (positive iff stationary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityVerdict {
    pub stationary: bool,
    pub margin: f64,
    pub certification: Certification,
}

/// Root of `xi = u tan(xi)` on `(0, pi)`, equivalently of `xi cot(xi) = u`;
/// `xi(0) = pi/2`. The map `xi -> xi cot(xi)` is strictly decreasing from 1
/// to -inf on `(0, pi)`, so the root exists exactly for `u < 1` and the
/// solver brackets it there. For `u >= 1` the root degenerates to `0+` and
/// the bracket floor is returned; its residual `|xi - u tan(xi)| ~ xi^3/3`
/// is still far below the solver tolerance.
pub fn xi(u: f64) -> f64 {
    if u == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let g = |x: f64| {
        // x cot x - u, with the removable limit 1 at x = 0
        if x.abs() < 1e-12 {
            1.0 - u
        } else {
            x * x.cos() / x.sin() - u
        }
    };
    let lo = 1e-7;
    let hi = std::f64::consts::PI - 1e-12;
    if g(lo) <= 0.0 {
        // u >= 1 - O(lo^2): no root in (0, pi); degenerate limit at 0+.
        return lo;
    }
    let mut root = bisect_root(lo, hi, 1e-13, 200, g).expect("xi: monotone bracket");
    // Newton polish on xi cos(xi) - u sin(xi) = 0
    for _ in 0..4 {
        let f = root * root.cos() - u * root.sin();
        let df = root.cos() - root * root.sin() - u * root.cos();
        if df.abs() > 1e-14 {
            let next = root - f / df;
            if next > 0.0 && next < std::f64::consts::PI {
                root = next;
            }
        }
    }
    root
}

/// `lambda(a, b) = sqrt(|a^2 - b^2|)`.
pub fn lambda_ab(a: f64, b: f64) -> f64 {
    (a * a - b * b).abs().sqrt()
}

/// Stationarity test for every family.
///
/// Two-delay models use the exact criterion (`a < 1/r` and
/// `-a/cos(xi(ar)) < b < -a` for nonzero `a`, `br in (-pi/2, 0)` for
/// `a = 0`). The exponential kernel with `a = 0` uses the exact interval
/// `0 < b < pi^2/(2 r^2)`; with `a > 0` only a sufficient region is known
/// and the verdict is tagged accordingly, with an indeterminate error
/// outside it. Multi-delay models count characteristic roots with
/// nonnegative real part via the argument principle.
pub fn stationarity(model: &DelayModelSpec) -> Result<StationarityVerdict> {
    model.validate()?;
    match model {
        DelayModelSpec::TwoDelay { a, b, r, .. } => Ok(two_delay_verdict(*a, *b, *r)),
        DelayModelSpec::MultiDelay { .. } => root_test_verdict(model),
        DelayModelSpec::ExpKernel { a, b, r, .. } => exp_kernel_verdict(*a, *b, *r),
    }
}

fn two_delay_verdict(a: f64, b: f64, r: f64) -> StationarityVerdict {
    if a == 0.0 {
        // exact: br in (-pi/2, 0)
        let br = b * r;
        let margin = (br + std::f64::consts::FRAC_PI_2).min(-br) / r;
        return StationarityVerdict {
            stationary: -std::f64::consts::FRAC_PI_2 < br && br < 0.0,
            margin,
            certification: Certification::Exact,
        };
    }
    let slack_a = 1.0 / r - a;
    if slack_a <= 0.0 {
        return StationarityVerdict {
            stationary: false,
            margin: slack_a,
            certification: Certification::Exact,
        };
    }
    let lower = -a / xi(a * r).cos();
    let margin = (b - lower).min(-a - b).min(slack_a);
    StationarityVerdict {
        stationary: lower < b && b < -a,
        margin,
        certification: Certification::Exact,
    }
}

fn exp_kernel_verdict(a: f64, b: f64, r: f64) -> Result<StationarityVerdict> {
    if r.is_infinite() {
        // exact: stationary for all a > 0, b > 0
        return Ok(StationarityVerdict {
            stationary: a > 0.0 && b > 0.0,
            margin: a.min(b),
            certification: Certification::Exact,
        });
    }
    if a == 0.0 {
        let upper = 0.5 * std::f64::consts::PI.powi(2) / (r * r);
        return Ok(StationarityVerdict {
            stationary: 0.0 < b && b < upper,
            margin: b.min(upper - b),
            certification: Certification::Exact,
        });
    }
    if a > 0.0 {
        // sufficient region: b (1 + e^{-ar}) < max(pi^2/r^2, a^2 (e^{ar}-1)^2)
        let bound = (std::f64::consts::PI.powi(2) / (r * r))
            .max(a * a * ((a * r).exp() - 1.0).powi(2));
        let margin = bound / (1.0 + (-a * r).exp()) - b;
        if margin > 0.0 {
            return Ok(StationarityVerdict {
                stationary: true,
                margin,
                certification: Certification::SufficientOnly,
            });
        }
        return Err(SddeError::IndeterminateStationarity(format!(
            "exponential kernel with a = {a} > 0 lies outside the known sufficient region \
             (excess {:.3e}); the exact region is not characterized",
            -margin
        )));
    }
    Err(SddeError::IndeterminateStationarity(
        "exponential kernel with a < 0 has no known stationarity criterion".into(),
    ))
}

/// Verdict by counting characteristic roots of `h(z) = z - int e^{zs} a(ds)`
/// with nonnegative real part, plus a margin equal to the negated real part
/// of the rightmost root.
fn root_test_verdict(model: &DelayModelSpec) -> Result<StationarityVerdict> {
    let tv = model.measure_total_variation();
    if tv == 0.0 {
        // h(z) = z has its only root at the origin
        return Ok(StationarityVerdict {
            stationary: false,
            margin: 0.0,
            certification: Certification::RootTest,
        });
    }
    let unstable = count_roots_right_of(model, 0.0)?;
    let abscissa = rightmost_abscissa(model, unstable > 0)?;
    Ok(StationarityVerdict {
        stationary: unstable == 0,
        margin: -abscissa,
        certification: Certification::RootTest,
    })
}

/// Number of zeros of the characteristic function in `{Re z >= c}`, counted
/// with multiplicity. Any such zero satisfies `|z| <= tv(c)` where `tv(c)`
/// is the total variation of `e^{-cs} a(ds)`, so a rectangle suffices.
fn count_roots_right_of(model: &DelayModelSpec, c: f64) -> Result<usize> {
    let bound = shifted_total_variation(model, c) + c.abs() + 1.0;
    let h = |z: Complex64| z - model.measure_transform(z);
    winding_number(
        &h,
        Complex64::new(c, -bound),
        Complex64::new(c + bound, bound),
    )
}

fn shifted_total_variation(model: &DelayModelSpec, c: f64) -> f64 {
    // total variation of e^{-cs} a(ds) on [-r, 0]: for roots with Re z >= c
    // the factor e^{-Re(z) s} on s in [-r, 0] is at most 1 when c >= 0 and at
    // most e^{-c r} when c < 0
    let tv = model.measure_total_variation();
    let r = model.max_delay();
    if r.is_infinite() {
        // ExpKernel with infinite horizon: int b e^{(a-c)s} ds converges for c < a
        return match model {
            DelayModelSpec::ExpKernel { a, b, .. } if c < *a => b / (a - c),
            _ => f64::INFINITY,
        };
    }
    if c >= 0.0 || r == 0.0 {
        tv
    } else {
        tv * (-c * r).exp()
    }
}

/// Winding number of `h` around the rectangle with corners `lo` (bottom-left)
/// and `hi` (top-right), traversed counterclockwise. Fails if `h` comes too
/// close to zero on the contour or the phase cannot be tracked reliably.
fn winding_number<F>(h: &F, lo: Complex64, hi: Complex64) -> Result<usize>
where
    F: Fn(Complex64) -> Complex64,
{
    let corners = [
        lo,
        Complex64::new(hi.re, lo.im),
        hi,
        Complex64::new(lo.re, hi.im),
        lo,
    ];
    let scale = (hi - lo).norm();
    let mut total = 0.0;
    for seg in corners.windows(2) {
        total += tracked_phase_change(h, seg[0], seg[1], scale)?;
    }
    let winding = total / (2.0 * std::f64::consts::PI);
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.25 || rounded < -0.25 {
        return Err(SddeError::IndeterminateStationarity(format!(
            "winding number {winding:.4} did not converge to a nonnegative integer"
        )));
    }
    Ok(rounded as usize)
}

fn tracked_phase_change<F>(h: &F, from: Complex64, to: Complex64, scale: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    const MAX_STEP_PHASE: f64 = 1.2; // well below pi, keeps the branch unambiguous
    let near_zero = 1e-12 * scale.max(1.0);
    let mut splits = 64usize;
    'refine: loop {
        let mut prev = h(from);
        if prev.norm() < near_zero {
            return Err(SddeError::IndeterminateStationarity(
                "characteristic function vanishes on the test contour".into(),
            ));
        }
        let mut acc = 0.0;
        for i in 1..=splits {
            let z = from + (to - from) * (i as f64 / splits as f64);
            let cur = h(z);
            if cur.norm() < near_zero {
                return Err(SddeError::IndeterminateStationarity(
                    "characteristic function vanishes on the test contour".into(),
                ));
            }
            let dphi = (cur / prev).arg();
            if dphi.abs() > MAX_STEP_PHASE {
                if splits >= 1 << 22 {
                    return Err(SddeError::IndeterminateStationarity(
                        "phase tracking along the contour failed to converge".into(),
                    ));
                }
                splits *= 4;
                continue 'refine;
            }
            acc += dphi;
            prev = cur;
        }
        return Ok(acc);
    }
}

/// Real part of the rightmost characteristic root, located by bisection on
/// vertical test lines. `unstable` tells the search which side of zero holds
/// the root. Best effort: test lines too close to a root are jittered, and
/// the search settles for the bracket midpoint when none fits — the margin
/// is a diagnostic, the verdict itself rests on the `c = 0` count alone.
fn rightmost_abscissa(model: &DelayModelSpec, unstable: bool) -> Result<f64> {
    let tv = model.measure_total_variation();
    let r = model.max_delay();
    // keep e^{-c r} on the test rectangle from exploding into an
    // untrackably oscillatory contour
    let floor = if r > 0.0 && r.is_finite() {
        (-8.0 / r).max(-1e3)
    } else {
        -1e3
    };
    let count = |c: f64| count_roots_right_of(model, c).ok();
    let counted = |c: f64| -> Option<(f64, usize)> {
        for nudge in [1.0, 1.04, 0.96, 1.11] {
            let cc = (c * nudge).max(floor);
            if let Some(n) = count(cc) {
                return Some((cc, n));
            }
        }
        None
    };

    let (mut lo, mut hi) = if unstable {
        (0.0, tv + 1.0) // at least one root right of lo, none right of hi
    } else {
        let mut probe = -0.5;
        loop {
            match counted(probe) {
                Some((c, n)) if n > 0 => break (c, 0.0),
                Some((c, _)) if c <= floor => return Ok(c), // stable at least down to the floor
                Some((c, _)) => probe = (c * 2.0).max(floor),
                None => return Ok(probe), // pinned by a root near the probe
            }
        }
    };
    for _ in 0..60 {
        if hi - lo <= 1e-3 * (1.0 + lo.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let mut decided = None;
        for jitter in [0.0, 0.13, -0.11, 0.27, -0.23] {
            let c = mid + jitter * 0.4 * (hi - lo);
            if c <= lo || c >= hi {
                continue;
            }
            if let Some(n) = count(c) {
                decided = Some((c, n));
                break;
            }
        }
        match decided {
            Some((c, n)) if n > 0 => lo = c,
            Some((c, _)) => hi = c,
            None => break, // the root saturates the bracket
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A single model field that can be bound to the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    A,
    B,
    R,
    /// The diffusion parameter enters estimation as sigma^2.
    SigmaSq,
    Alpha(usize),
    Delay(usize),
}

impl std::fmt::Display for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Param::A => write!(f, "a"),
            Param::B => write!(f, "b"),
            Param::R => write!(f, "r"),
            Param::SigmaSq => write!(f, "sigma2"),
            Param::Alpha(i) => write!(f, "alpha{i}"),
            Param::Delay(i) => write!(f, "r{i}"),
        }
    }
}

impl Param {
    pub fn get(&self, model: &DelayModelSpec) -> Result<f64> {
        let err = || {
            SddeError::InvalidConfig(format!("parameter {self} is not a field of {model:?}"))
        };
        match (self, model) {
            (Param::A, DelayModelSpec::TwoDelay { a, .. })
            | (Param::A, DelayModelSpec::ExpKernel { a, .. }) => Ok(*a),
            (Param::B, DelayModelSpec::TwoDelay { b, .. })
            | (Param::B, DelayModelSpec::ExpKernel { b, .. }) => Ok(*b),
            (Param::R, DelayModelSpec::TwoDelay { r, .. })
            | (Param::R, DelayModelSpec::ExpKernel { r, .. }) => Ok(*r),
            (Param::SigmaSq, m) => Ok(m.sigma() * m.sigma()),
            (Param::Alpha(i), DelayModelSpec::MultiDelay { alphas, .. }) => {
                alphas.get(*i).copied().ok_or_else(err)
            }
            (Param::Delay(i), DelayModelSpec::MultiDelay { delays, .. }) => {
                delays.get(*i).copied().ok_or_else(err)
            }
            _ => Err(err()),
        }
    }

    pub fn set(&self, model: &mut DelayModelSpec, value: f64) -> Result<()> {
        let err = |m: &DelayModelSpec| {
            SddeError::InvalidConfig(format!("parameter {self} is not a field of {m:?}"))
        };
        match (self, &mut *model) {
            (Param::A, DelayModelSpec::TwoDelay { a, .. })
            | (Param::A, DelayModelSpec::ExpKernel { a, .. }) => *a = value,
            (Param::B, DelayModelSpec::TwoDelay { b, .. })
            | (Param::B, DelayModelSpec::ExpKernel { b, .. }) => *b = value,
            (Param::R, DelayModelSpec::TwoDelay { r, .. })
            | (Param::R, DelayModelSpec::ExpKernel { r, .. }) => *r = value,
            (Param::SigmaSq, m) => {
                if value <= 0.0 {
                    return Err(SddeError::InvalidConfig(format!(
                        "sigma2 must be positive, got {value}"
                    )));
                }
                match m {
                    DelayModelSpec::TwoDelay { sigma, .. }
                    | DelayModelSpec::MultiDelay { sigma, .. }
                    | DelayModelSpec::ExpKernel { sigma, .. } => *sigma = value.sqrt(),
                }
            }
            (Param::Alpha(i), DelayModelSpec::MultiDelay { alphas, .. }) => {
                match alphas.get_mut(*i) {
                    Some(slot) => *slot = value,
                    None => return Err(err(model)),
                }
            }
            (Param::Delay(i), DelayModelSpec::MultiDelay { delays, .. }) => {
                match delays.get_mut(*i) {
                    Some(slot) => *slot = value,
                    None => return Err(err(model)),
                }
            }
            _ => return Err(err(model)),
        }
        Ok(())
    }
}

/// One bound field: free entries make up the parameter vector in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingEntry {
    pub param: Param,
    pub free: bool,
    #[serde(default = "neg_inf")]
    pub lower: f64,
    #[serde(default = "pos_inf")]
    pub upper: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}

/// Order of the free fields defines theta in R^p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBinding {
    pub entries: Vec<BindingEntry>,
}

impl ParameterBinding {
    /// All listed parameters free with the given box bounds.
    pub fn free(params: &[(Param, f64, f64)]) -> Self {
        ParameterBinding {
            entries: params
                .iter()
                .map(|&(param, lower, upper)| BindingEntry {
                    param,
                    free: true,
                    lower,
                    upper,
                })
                .collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.entries.iter().filter(|e| e.free).count()
    }

    pub fn free_params(&self) -> Vec<Param> {
        self.entries
            .iter()
            .filter(|e| e.free)
            .map(|e| e.param)
            .collect()
    }

    /// Current values of the free fields, in binding order.
    pub fn theta_of(&self, model: &DelayModelSpec) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .filter(|e| e.free)
            .map(|e| e.param.get(model))
            .collect()
    }

    /// A copy of `model` with the free fields replaced by `theta`.
    pub fn apply(&self, model: &DelayModelSpec, theta: &[f64]) -> Result<DelayModelSpec> {
        if theta.len() != self.p() {
            return Err(SddeError::InvalidConfig(format!(
                "theta has length {}, binding has {} free parameters",
                theta.len(),
                self.p()
            )));
        }
        let mut out = model.clone();
        for (entry, &value) in self.entries.iter().filter(|e| e.free).zip(theta) {
            entry.param.set(&mut out, value)?;
        }
        Ok(out)
    }

    /// Validates that p >= 1 and every free field currently lies inside its
    /// bounds.
    pub fn validate(&self, model: &DelayModelSpec) -> Result<()> {
        if self.p() == 0 {
            return Err(SddeError::InvalidConfig(
                "binding must declare at least one free parameter".into(),
            ));
        }
        for entry in self.entries.iter().filter(|e| e.free) {
            let value = entry.param.get(model)?;
            if entry.lower.is_nan() || entry.upper.is_nan() || entry.lower >= entry.upper {
                return Err(SddeError::InvalidConfig(format!(
                    "bounds [{}, {}] for {} are ill-formed",
                    entry.lower, entry.upper, entry.param
                )));
            }
            if value < entry.lower || value > entry.upper {
                return Err(SddeError::InvalidConfig(format!(
                    "current value {value} of {} lies outside [{}, {}]",
                    entry.param, entry.lower, entry.upper
                )));
            }
        }
        Ok(())
    }

    /// True when `theta` is inside the box bounds and the induced model is
    /// stationary with at least `margin` to the boundary.
    pub fn is_interior(&self, model: &DelayModelSpec, theta: &[f64], margin: f64) -> bool {
        let inside_box = self
            .entries
            .iter()
            .filter(|e| e.free)
            .zip(theta)
            .all(|(e, &v)| v > e.lower && v < e.upper);
        if !inside_box {
            return false;
        }
        match self.apply(model, theta).and_then(|m| stationarity(&m)) {
            Ok(v) => v.stationary && v.margin > margin,
            Err(_) => false,
        }
    }
}
