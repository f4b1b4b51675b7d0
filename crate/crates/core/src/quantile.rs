//! Empirical and smoothed quantiles, the pinball loss and nested-set scores.
//!
//! Quantile levels follow the left-continuous inverse of the empirical CDF:
//! `Q(q) = inf { t : (1/n) #{ s_i <= t } >= q }`. Levels above one (which the
//! conformal rank rule produces for small calibration sets) map to
//! [`QuantileValue::Infinite`].

use std::cmp::Ordering;

use crate::error::{domain, Error, Result};

/// Relative slack used when turning `q * n` into an integer rank, so that
/// levels like `0.9 * 10 / 9` land on rank 9 instead of 10.
const RANK_SNAP: f64 = 1e-9;

/// A quantile or calibration threshold, possibly the `+inf` sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantileValue {
    Finite(f64),
    Infinite,
}

impl QuantileValue {
    pub fn is_finite(self) -> bool {
        matches!(self, QuantileValue::Finite(_))
    }

    /// The value as an `f64`, with the sentinel mapped to `f64::INFINITY`.
    pub fn as_f64(self) -> f64 {
        match self {
            QuantileValue::Finite(v) => v,
            QuantileValue::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            QuantileValue::Finite(v) => Some(v),
            QuantileValue::Infinite => None,
        }
    }
}

impl PartialOrd for QuantileValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

/// Smallest integer `k` with `k >= x`, snapping values within rounding noise
/// of an integer onto it.
pub(crate) fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= RANK_SNAP * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

pub(crate) fn check_sample(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(domain("sample must be nonempty"));
    }
    if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
        return Err(domain(format!("sample contains a non-finite value ({bad})")));
    }
    Ok(())
}

/// The `k`-th smallest value (1-based) of `s`. `s` must be nonempty and
/// `1 <= k <= s.len()`.
pub fn order_statistic(s: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= s.len());
    let mut buf = s.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Rank selected by level `q` in a sample of size `n`: `ceil(q * n)`, or
/// `None` when it exceeds `n`.
pub(crate) fn level_rank(q: f64, n: usize) -> Option<usize> {
    let k = snapped_ceil(q * n as f64).max(1.0);
    if k > n as f64 {
        None
    } else {
        Some(k as usize)
    }
}

/// `inf { t : (1/n) #{ s_i <= t } >= q }`, i.e. the `ceil(q n)`-th order
/// statistic, or the infinite sentinel when `q > 1`.
pub fn empirical_quantile(s: &[f64], q: f64) -> Result<QuantileValue> {
    check_sample(s)?;
    if q.is_nan() || q <= 0.0 {
        return Err(domain(format!("quantile level must be positive, got {q}")));
    }
    Ok(match level_rank(q, s.len()) {
        Some(k) => QuantileValue::Finite(order_statistic(s, k)),
        None => QuantileValue::Infinite,
    })
}

/// Pinball (check) loss `rho_q(u)`.
pub fn pinball_loss(u: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("pinball level must lie in (0, 1), got {q}")));
    }
    Ok(if u >= 0.0 { q * u } else { (q - 1.0) * u })
}

/// Quintic smoothing of the step function `1{z <= 0}` over `[-eps, eps]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    epsilon: f64,
}

impl SmoothingKernel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(domain(format!("smoothing width must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `Gamma_eps(z)`: 1 below `-eps`, 0 above `eps`, quintic in between.
    pub fn gamma(&self, z: f64) -> f64 {
        let eps = self.epsilon;
        if z <= -eps {
            1.0
        } else if z >= eps {
            0.0
        } else {
            let u = z / eps;
            let u3 = u * u * u;
            let u5 = u3 * u * u;
            15.0 / 16.0 * (-u5 / 5.0 + 2.0 * u3 / 3.0 - u + 8.0 / 15.0)
        }
    }

    /// `Gamma'_eps(z) = -(15/16) (eps^2 - z^2)^2 / eps^5` inside the window.
    pub fn derivative(&self, z: f64) -> f64 {
        let eps = self.epsilon;
        if z <= -eps || z >= eps {
            0.0
        } else {
            let d = eps * eps - z * z;
            -15.0 / 16.0 * d * d / eps.powi(5)
        }
    }
}

/// Smoothed empirical CDF, `(1/n) sum_i Gamma_eps(s_i - t)`.
pub fn smoothed_cdf(s: &[f64], t: f64, kernel: &SmoothingKernel) -> Result<f64> {
    check_sample(s)?;
    Ok(smoothed_cdf_unchecked(s, t, kernel))
}

fn smoothed_cdf_unchecked(s: &[f64], t: f64, kernel: &SmoothingKernel) -> f64 {
    s.iter().map(|&v| kernel.gamma(v - t)).sum::<f64>() / s.len() as f64
}

/// `inf { t : smoothed_cdf(t) >= q }`, found by bisection.
///
/// Bisection runs until the bracket cannot shrink further in floating point,
/// which is well below the required `1e-10` absolute accuracy for samples of
/// moderate magnitude.
pub fn smoothed_quantile(s: &[f64], q: f64, kernel: &SmoothingKernel) -> Result<f64> {
    check_sample(s)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("smoothed quantile level must lie in (0, 1), got {q}")));
    }
    let (min, max) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let eps = kernel.epsilon();
    let mut lo = min - eps;
    let mut hi = max + eps;
    if smoothed_cdf_unchecked(s, lo, kernel) >= q || smoothed_cdf_unchecked(s, hi, kernel) < q {
        return Err(Error::Internal("smoothed quantile bracket does not straddle the level".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if smoothed_cdf_unchecked(s, mid, kernel) >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Score of a residual against the symmetric band `[mu - t, mu + t]`.
pub fn absolute_residual_score(mu: f64, y: f64) -> f64 {
    (y - mu).abs()
}

/// Score against `[mu - sigma t, mu + sigma t]`; `sigma` must be positive.
pub fn scaled_residual_score(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(domain(format!("local scale must be positive, got {sigma}")));
    }
    Ok((y - mu).abs() / sigma)
}

/// Score against `[lo - t, hi + t]`. Negative when `y` lies strictly inside.
pub fn cqr_score(lo: f64, hi: f64, y: f64) -> f64 {
    (lo - y).max(y - hi)
}

/// A family of sets `C_t(x)` increasing in `t`. The induced score is the
/// smallest `t` whose set contains `y`.
pub trait NestedFamily {
    /// Whether `y` belongs to `C_t(x)`.
    fn contains(&self, x: &[f64], y: f64, t: f64) -> Result<bool>;

    /// `inf { t : y in C_t(x) }`. The default brackets the boundary by
    /// doubling and then bisects it; families with a closed form override it.
    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        generic_nested_score(self, x, y)
    }
}

/// Bracket-and-bisect evaluation of a nested score, usable for any family.
pub fn generic_nested_score<F: NestedFamily + ?Sized>(family: &F, x: &[f64], y: f64) -> Result<f64> {
    const LIMIT: f64 = 1e300;
    let mut hi = 1.0;
    while !family.contains(x, y, hi)? {
        hi *= 2.0;
        if hi > LIMIT {
            return Err(domain("no set of the family contains the response"));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { -1.0 };
    while family.contains(x, y, lo)? {
        lo = if lo > 0.0 { -1.0 } else { lo * 2.0 };
        if lo < -LIMIT {
            return Err(domain("every set of the family contains the response"));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if family.contains(x, y, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `C_t(x) = [mu(x) - t, mu(x) + t]`.
pub struct AbsoluteResidualFamily<M> {
    pub mu: M,
}

impl<M: Fn(&[f64]) -> f64> NestedFamily for AbsoluteResidualFamily<M> {
    fn contains(&self, x: &[f64], y: f64, t: f64) -> Result<bool> {
        let m = (self.mu)(x);
        Ok(m - t <= y && y <= m + t)
    }

    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(absolute_residual_score((self.mu)(x), y))
    }
}

/// `C_t(x) = [mu(x) - sigma(x) t, mu(x) + sigma(x) t]`.
pub struct LocallyWeightedFamily<M, S> {
    pub mu: M,
    pub sigma: S,
}

impl<M, S> NestedFamily for LocallyWeightedFamily<M, S>
where
    M: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> f64,
{
    fn contains(&self, x: &[f64], y: f64, t: f64) -> Result<bool> {
        let sigma = (self.sigma)(x);
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(domain(format!("local scale must be positive, got {sigma}")));
        }
        let m = (self.mu)(x);
        Ok(m - sigma * t <= y && y <= m + sigma * t)
    }

    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        scaled_residual_score((self.mu)(x), (self.sigma)(x), y)
    }
}

/// `C_t(x) = [q_lo(x) - t, q_hi(x) + t]`.
pub struct QuantileBandFamily<L, H> {
    pub lower: L,
    pub upper: H,
}

impl<L, H> NestedFamily for QuantileBandFamily<L, H>
where
    L: Fn(&[f64]) -> f64,
    H: Fn(&[f64]) -> f64,
{
    fn contains(&self, x: &[f64], y: f64, t: f64) -> Result<bool> {
        Ok((self.lower)(x) - t <= y && y <= (self.upper)(x) + t)
    }

    fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(cqr_score((self.lower)(x), (self.upper)(x), y))
    }
}
