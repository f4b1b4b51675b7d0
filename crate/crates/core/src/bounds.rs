//! Closed-form concentration and excess-length bounds.
//!
//! Each evaluator checks the hypotheses its bound rests on and returns
//! [`Error::Hypothesis`] naming the failed inequality instead of clamping.

use crate::error::{domain, Error, Result};

/// Local Hölder regularity of the score quantile function around `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderParams {
    pub l: f64,
    pub gamma: f64,
    pub r: f64,
}

impl HolderParams {
    pub fn new(l: f64, gamma: f64, r: f64) -> Result<Self> {
        let h = Self { l, gamma, r };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        // L = 0 is accepted as the degenerate constant-quantile case
        if !(self.l >= 0.0 && self.l.is_finite()) {
            return Err(domain(format!("Hölder constant must be nonnegative, got {}", self.l)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(domain(format!("Hölder exponent must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(domain(format!("Hölder radius must lie in (0, 1], got {}", self.r)));
        }
        Ok(())
    }
}

/// Complexity of the predictor class entering the uniform deviation `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Complexity {
    FiniteClass(u64),
    VcDimension(u64),
    Rademacher(f64),
}

fn check_n(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(domain("sample size must be positive"));
    }
    Ok(n as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn hypothesis(inequality: &'static str, lhs: f64, rhs: f64) -> Result<()> {
    if lhs <= rhs {
        Ok(())
    } else {
        Err(Error::Hypothesis { inequality, lhs, rhs })
    }
}

/// Width of the DKW band: `sqrt(ln(2/delta) / (2n))`.
pub fn dkw_epsilon(n: u64, delta: f64) -> Result<f64> {
    let n = check_n(n)?;
    check_delta(delta)?;
    Ok(((2.0 / delta).ln() / (2.0 * n)).sqrt())
}

/// Coverage level of the conservative oracle dominating the calibrated set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLevel {
    pub level: f64,
    /// The raw level reached one and was capped.
    pub saturated: bool,
    /// `(n_c + 1)(1 - alpha)` is an integer, so the guarantee's hypothesis fails.
    pub integer_rank: bool,
}

/// `1 - alpha + (1 - alpha)/n_c + sqrt(ln(2/delta) / (2 n_c))`, capped at one.
pub fn conservative_oracle_level(n_cal: u64, alpha: f64, delta: f64) -> Result<OracleLevel> {
    let n = check_n(n_cal)?;
    check_alpha(alpha)?;
    check_delta(delta)?;
    let raw = 1.0 - alpha + (1.0 - alpha) / n + ((2.0 / delta).ln() / (2.0 * n)).sqrt();
    let rank = (n + 1.0) * (1.0 - alpha);
    let integer_rank = (rank - rank.round()).abs() <= 1e-9 * rank.max(1.0);
    Ok(OracleLevel { level: raw.min(1.0), saturated: raw >= 1.0, integer_rank })
}

const CAL_RADIUS: &str = "(1-α)/n_c + √(ln(2/δ)/(2n_c)) ≤ r";

/// Excess length of the calibrated symmetric interval for a fixed predictor:
/// `2 L (1/n_c + sqrt(ln(2/delta) / (2 n_c)))^gamma`.
pub fn excess_volume_bound_fixed_f(n_cal: u64, alpha: f64, delta: f64, h: HolderParams) -> Result<f64> {
    let n = check_n(n_cal)?;
    check_alpha(alpha)?;
    check_delta(delta)?;
    h.validate()?;
    let dev = ((2.0 / delta).ln() / (2.0 * n)).sqrt();
    hypothesis(CAL_RADIUS, (1.0 - alpha) / n + dev, h.r)?;
    Ok(2.0 * h.l * (1.0 / n + dev).powf(h.gamma))
}

/// Uniform deviation `phi(F, delta, n)` for the supported complexity inputs.
pub fn phi_closed_form(c: Complexity, n: u64, delta: f64) -> Result<f64> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    match c {
        Complexity::FiniteClass(size) => {
            if size == 0 {
                return Err(domain("class size must be positive"));
            }
            Ok(((2.0 * size as f64 / delta).ln() / (2.0 * nf)).sqrt())
        }
        Complexity::Rademacher(rad) => {
            if !(rad >= 0.0 && rad.is_finite()) {
                return Err(domain(format!("Rademacher complexity must be nonnegative, got {rad}")));
            }
            Ok(2.0 * rad + ((1.0 / delta).ln() / (2.0 * nf)).sqrt())
        }
        Complexity::VcDimension(vc) => {
            if vc == 0 {
                return Err(domain("VC dimension must be positive"));
            }
            if vc > n {
                return Err(domain(format!("VC dimension {vc} exceeds the sample size {n}")));
            }
            let vc = vc as f64;
            let growth = (8.0 * vc * (std::f64::consts::E * nf / vc).ln() / nf).sqrt();
            Ok(growth + ((1.0 / delta).ln() / (2.0 * nf)).sqrt())
        }
    }
}

/// Excess-length slack of the QAE-trained interval, split into its
/// calibration and learning parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessVolume {
    pub calibration: f64,
    pub learning: f64,
    pub total: f64,
}

impl ExcessVolume {
    pub fn learning_dominates(&self) -> bool {
        self.learning > self.calibration
    }
}

/// `2 L (1/n_c + sqrt(ln(2/delta)/(2 n_c)))^gamma + 4 L phi(F, delta, n_l)^gamma`.
pub fn effort_excess_volume_bound(
    n_cal: u64,
    n_learn: u64,
    alpha: f64,
    delta: f64,
    h: HolderParams,
    c: Complexity,
) -> Result<ExcessVolume> {
    let phi = phi_closed_form(c, n_learn, delta)?;
    let calibration = excess_volume_bound_fixed_f(n_cal, alpha, delta, h)?;
    hypothesis("φ(𝓕,δ,n_ℓ) ≤ r", phi, h.r)?;
    let learning = 4.0 * h.l * phi.powf(h.gamma);
    Ok(ExcessVolume { calibration, learning, total: calibration + learning })
}

/// Slack for a nested family whose expected size grows as `a t + b`:
/// `a L ((1-alpha)/n_c + sqrt(ln(1/delta)/(2 n_c)))^gamma`.
pub fn nested_length_bound(a: f64, b: f64, n_cal: u64, alpha: f64, delta: f64, h: HolderParams) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(domain(format!("size growth rate must be nonnegative, got {a}")));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(domain(format!("size offset must be nonnegative, got {b}")));
    }
    let n = check_n(n_cal)?;
    check_alpha(alpha)?;
    check_delta(delta)?;
    h.validate()?;
    let term = (1.0 - alpha) / n + ((1.0 / delta).ln() / (2.0 * n)).sqrt();
    hypothesis("(1-α)/n_c + √(ln(1/δ)/(2n_c)) ≤ r", term, h.r)?;
    Ok(a * h.l * term.powf(h.gamma))
}

/// Slack of the adaptive joint problem, with user-supplied `psi(S)` and
/// `phi(F, S)`: `4 psi + 2 L (1/(n_c+1) + sqrt(ln(1/delta)/(n_c+1)) + 2 phi)^gamma`.
pub fn adaptive_excess_volume_bound(n_cal: u64, delta: f64, h: HolderParams, phi: f64, psi: f64) -> Result<f64> {
    let n = check_n(n_cal)?;
    check_delta(delta)?;
    h.validate()?;
    if !(phi >= 0.0 && phi.is_finite() && psi >= 0.0 && psi.is_finite()) {
        return Err(domain("phi and psi must be finite and nonnegative"));
    }
    let cal = 1.0 / (n + 1.0) + ((1.0 / delta).ln() / (n + 1.0)).sqrt();
    hypothesis("1/(n_c+1) + √(ln(1/δ)/(n_c+1)) ≤ r", cal, h.r)?;
    hypothesis("φ(𝓕,𝓢,δ,n_ℓ) ≤ r", phi, h.r)?;
    Ok(4.0 * psi + 2.0 * h.l * (cal + 2.0 * phi).powf(h.gamma))
}
