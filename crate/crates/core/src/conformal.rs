//! Split-conformal calibration and the interval constructors.
//!
//! Every constructor follows the same pattern: fit the band components on the
//! learning split, score the calibration split with the band's nested score,
//! and take the `ceil((n_c + 1)(1 - alpha))`-th smallest score as the shift.

use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, Split};
use crate::error::{domain, Error, Result};
use crate::model::{fit, FitConfig, KnnAggregate, KnnModel, Loss, ModelKind, ParamModel, Regressor};
use crate::qae::{absolute_errors, minimize_qae, QaeConfig};
use crate::quantile::{
    absolute_residual_score, check_sample, cqr_score, order_statistic, scaled_residual_score, snapped_ceil,
    QuantileValue,
};

/// Relative floor applied to the locally weighted scale estimate.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SplitCp,
    SplitCpHuber,
    Effort,
    LocallyWeighted,
    Cqr,
    AdEffort,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SplitCp,
        Method::SplitCpHuber,
        Method::Effort,
        Method::LocallyWeighted,
        Method::Cqr,
        Method::AdEffort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SplitCp => "split-cp",
            Method::SplitCpHuber => "split-cp-huber",
            Method::Effort => "effort",
            Method::LocallyWeighted => "lw-cp",
            Method::Cqr => "cqr",
            Method::AdEffort => "ad-effort",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| domain(format!("unknown method '{s}'")))
    }
}

/// Outcome of the rank rule on a calibration sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: QuantileValue,
    /// `ceil((n_c + 1)(1 - alpha))`; exceeds `n_cal` exactly when the
    /// threshold is infinite.
    pub rank: usize,
    pub n_cal: usize,
    pub alpha: f64,
}

/// Split-conformal rank rule.
pub fn calibrate(scores: &[f64], alpha: f64) -> Result<Calibration> {
    check_sample(scores)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = scores.len();
    let rank = snapped_ceil((n as f64 + 1.0) * (1.0 - alpha)).max(1.0) as usize;
    let threshold = if rank > n {
        QuantileValue::Infinite
    } else {
        QuantileValue::Finite(order_statistic(scores, rank))
    };
    Ok(Calibration { threshold, rank, n_cal: n, alpha })
}

/// A prediction set on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    Empty,
    Bounded { lower: f64, upper: f64 },
    WholeLine,
}

impl Interval {
    /// `[lower, upper]`, or empty when the bounds cross.
    pub fn between(lower: f64, upper: f64) -> Self {
        if lower > upper {
            Interval::Empty
        } else {
            Interval::Bounded { lower, upper }
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        match *self {
            Interval::Empty => false,
            Interval::Bounded { lower, upper } => lower <= y && y <= upper,
            Interval::WholeLine => true,
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Interval::Empty => 0.0,
            Interval::Bounded { lower, upper } => upper - lower,
            Interval::WholeLine => f64::INFINITY,
        }
    }
}

/// The shape of a calibrated band, before the shift is applied.
pub enum Band {
    /// `[f(x) - t, f(x) + t]`.
    Symmetric { center: Box<dyn Regressor> },
    /// `[mu(x) - sigma(x) t, mu(x) + sigma(x) t]`, with `sigma` floored.
    Scaled { center: Box<dyn Regressor>, scale: Box<dyn Regressor>, floor: f64 },
    /// `[lo(x) - t, hi(x) + t]`.
    QuantileBand { lower: Box<dyn Regressor>, upper: Box<dyn Regressor> },
    /// `[f(x) - s(x) - t, f(x) + s(x) + t]`.
    Adaptive { center: Box<dyn Regressor>, spread: Box<dyn Regressor> },
}

impl Band {
    fn scale_at(scale: &dyn Regressor, floor: f64, x: &[f64]) -> Result<f64> {
        Ok(scale.predict(x)?.max(floor))
    }

    /// Nested score of `(x, y)`: the smallest shift whose band contains `y`.
    pub fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        match self {
            Band::Symmetric { center } => Ok(absolute_residual_score(center.predict(x)?, y)),
            Band::Scaled { center, scale, floor } => {
                scaled_residual_score(center.predict(x)?, Self::scale_at(scale.as_ref(), *floor, x)?, y)
            }
            Band::QuantileBand { lower, upper } => Ok(cqr_score(lower.predict(x)?, upper.predict(x)?, y)),
            Band::Adaptive { center, spread } => Ok((y - center.predict(x)?).abs() - spread.predict(x)?),
        }
    }

    /// The band at `x` widened by a finite shift `t`.
    pub fn interval(&self, x: &[f64], t: f64) -> Result<Interval> {
        Ok(match self {
            Band::Symmetric { center } => {
                let f = center.predict(x)?;
                Interval::between(f - t, f + t)
            }
            Band::Scaled { center, scale, floor } => {
                let mu = center.predict(x)?;
                let sigma = Self::scale_at(scale.as_ref(), *floor, x)?;
                if sigma.is_nan() || sigma <= 0.0 {
                    return Err(Error::Internal(format!("floored scale is not positive ({sigma})")));
                }
                Interval::between(mu - sigma * t, mu + sigma * t)
            }
            Band::QuantileBand { lower, upper } => Interval::between(lower.predict(x)? - t, upper.predict(x)? + t),
            Band::Adaptive { center, spread } => {
                let f = center.predict(x)?;
                let s = spread.predict(x)?;
                Interval::between(f - s - t, f + s + t)
            }
        })
    }
}

/// A calibrated set-valued predictor.
pub struct IntervalPredictor {
    method: Method,
    band: Band,
    calibration: Calibration,
}

impl fmt::Debug for IntervalPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntervalPredictor")
            .field("method", &self.method)
            .field("calibration", &self.calibration)
            .finish_non_exhaustive()
    }
}

impl IntervalPredictor {
    /// Scores `cal` with `band` and calibrates the shift.
    pub fn calibrate_band(method: Method, band: Band, cal: &Split, alpha: f64) -> Result<Self> {
        if cal.is_empty() {
            return Err(domain("calibration split is empty"));
        }
        let scores = cal.iter().map(|(x, y)| band.score(x, y)).collect::<Result<Vec<_>>>()?;
        let calibration = calibrate(&scores, alpha)?;
        Ok(Self { method, band, calibration })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn band(&self) -> &Band {
        &self.band
    }

    pub fn interval(&self, x: &[f64]) -> Result<Interval> {
        match self.calibration.threshold {
            QuantileValue::Infinite => Ok(Interval::WholeLine),
            QuantileValue::Finite(t) => self.band.interval(x, t),
        }
    }
}

/// Neighbor count for the k-NN stand-ins; `None` means `ceil(sqrt(n))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KnnSettings {
    pub k: Option<usize>,
}

impl KnnSettings {
    pub fn resolve(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| KnnModel::default_k(n)).clamp(1, n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AdaptiveOptions {
    /// Fit the predictor on the first half of the learning split and the
    /// residual quantile on the second half instead of reusing it.
    pub subsplit: bool,
    pub knn: KnnSettings,
}

fn require_splits(data: &Dataset) -> Result<()> {
    if data.learn.is_empty() || data.cal.is_empty() {
        return Err(domain("learning and calibration splits must be nonempty"));
    }
    Ok(())
}

/// Split CP around a least-squares or Huber fit.
pub fn split_cp(data: &Dataset, kind: ModelKind, base: &FitConfig, alpha: f64) -> Result<IntervalPredictor> {
    require_splits(data)?;
    let method = match base.loss {
        Loss::LeastSquares => Method::SplitCp,
        Loss::Huber { .. } => Method::SplitCpHuber,
        Loss::Pinball { .. } => return Err(domain("split CP base fit must be least squares or Huber")),
    };
    let model = fit(&data.learn, kind, base)?.model;
    IntervalPredictor::calibrate_band(method, Band::Symmetric { center: Box::new(model) }, &data.cal, alpha)
}

fn qae_fit(learn: &Split, kind: ModelKind, qae: &QaeConfig, alpha: f64) -> Result<ParamModel> {
    let cfg = QaeConfig { alpha, ..qae.clone() };
    Ok(minimize_qae(learn, kind, &cfg)?.0)
}

/// QAE-trained predictor with a symmetric calibrated band. `alpha` sets both
/// the training quantile level and the calibration level.
pub fn effort(data: &Dataset, kind: ModelKind, qae: &QaeConfig, alpha: f64) -> Result<IntervalPredictor> {
    require_splits(data)?;
    let model = qae_fit(&data.learn, kind, qae, alpha)?;
    IntervalPredictor::calibrate_band(Method::Effort, Band::Symmetric { center: Box::new(model) }, &data.cal, alpha)
}

/// Locally weighted CP: least-squares center, k-NN mean of absolute
/// residuals as the local scale.
pub fn locally_weighted_cp(
    data: &Dataset,
    kind: ModelKind,
    alpha: f64,
    knn: KnnSettings,
) -> Result<IntervalPredictor> {
    require_splits(data)?;
    let center = fit(&data.learn, kind, &FitConfig::new(Loss::LeastSquares))?.model;
    let residuals = absolute_errors(&center, &data.learn);
    let mean_abs = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let floor = (SCALE_FLOOR * mean_abs).max(f64::MIN_POSITIVE);
    let train = with_targets(&data.learn, residuals)?;
    let scale = KnnModel::new(train, knn.resolve(data.learn.len()), KnnAggregate::Mean)?;
    let band = Band::Scaled { center: Box::new(center), scale: Box::new(scale), floor };
    IntervalPredictor::calibrate_band(Method::LocallyWeighted, band, &data.cal, alpha)
}

/// Conformalized quantile regression with k-NN conditional quantiles at
/// `alpha / 2` and `1 - alpha / 2`.
pub fn cqr(data: &Dataset, alpha: f64, knn: KnnSettings) -> Result<IntervalPredictor> {
    require_splits(data)?;
    let k = knn.resolve(data.learn.len());
    let lower = KnnModel::new(data.learn.clone(), k, KnnAggregate::Quantile(alpha / 2.0))?;
    let upper = KnnModel::new(data.learn.clone(), k, KnnAggregate::Quantile(1.0 - alpha / 2.0))?;
    let band = Band::QuantileBand { lower: Box::new(lower), upper: Box::new(upper) };
    IntervalPredictor::calibrate_band(Method::Cqr, band, &data.cal, alpha)
}

/// QAE-trained predictor plus a k-NN `(1 - alpha)`-quantile of its absolute
/// residuals as a locally adaptive half-width.
pub fn ad_effort(
    data: &Dataset,
    kind: ModelKind,
    qae: &QaeConfig,
    alpha: f64,
    opts: AdaptiveOptions,
) -> Result<IntervalPredictor> {
    require_splits(data)?;
    let (fit_part, spread_part) = if opts.subsplit {
        if data.learn.len() < 2 {
            return Err(domain("sub-splitting needs at least two learning points"));
        }
        data.learn.split_at(data.learn.len() / 2)
    } else {
        (data.learn.clone(), data.learn.clone())
    };
    let center = qae_fit(&fit_part, kind, qae, alpha)?;
    let residuals = absolute_errors(&center, &spread_part);
    let train = with_targets(&spread_part, residuals)?;
    let spread = KnnModel::new(train, opts.knn.resolve(spread_part.len()), KnnAggregate::Quantile(1.0 - alpha))?;
    let band = Band::Adaptive { center: Box::new(center), spread: Box::new(spread) };
    IntervalPredictor::calibrate_band(Method::AdEffort, band, &data.cal, alpha)
}

fn with_targets(split: &Split, targets: Vec<f64>) -> Result<Split> {
    let mut out = split.clone();
    out.y_mut().copy_from_slice(&targets);
    Ok(out)
}

/// Test-split metrics of a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub coverage: f64,
    /// Mean interval length; `+inf` if any interval is the whole line.
    pub mean_length: f64,
    pub lengths: Vec<f64>,
}

pub fn coverage_and_length(predictor: &IntervalPredictor, test: &Split) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(domain("test split is empty"));
    }
    let mut covered = 0usize;
    let mut lengths = Vec::with_capacity(test.len());
    for (x, y) in test.iter() {
        let interval = predictor.interval(x)?;
        if interval.contains(y) {
            covered += 1;
        }
        lengths.push(interval.length());
    }
    let n = test.len() as f64;
    let mean_length = lengths.iter().sum::<f64>() / n;
    Ok(Evaluation { coverage: covered as f64 / n, mean_length, lengths })
}
