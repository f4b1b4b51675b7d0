//! Parametric predictors, their trainers and a k-NN conditional estimator.
//!
//! Parameter layout:
//!
//! * linear: `[intercept, w_1, .., w_d]`
//! * one-hidden-layer ReLU network of width `m`:
//!   `[c, v_1, .., v_m, b_1, W_11, .., W_1d, .., b_m, W_m1, .., W_md]`,
//!   computing `c + sum_j v_j relu(b_j + W_j . x)`.
//!
//! Kinks use fixed conventions: `relu'(0) = 0` and `sign(0) = 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Split;
use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::quantile::{empirical_quantile, pinball_loss};

/// Anything that maps a covariate vector to a real prediction.
pub trait Regressor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// A regressor returning the same value everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Regressor for Constant {
    fn predict(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp { width: usize },
}

impl ModelKind {
    pub fn param_len(self, input_dim: usize) -> usize {
        match self {
            ModelKind::Linear => input_dim + 1,
            ModelKind::Mlp { width } => width * (input_dim + 1) + width + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamModel {
    kind: ModelKind,
    theta: Vec<f64>,
    input_dim: usize,
}

impl ParamModel {
    pub fn new(kind: ModelKind, input_dim: usize, theta: Vec<f64>) -> Result<Self> {
        if let ModelKind::Mlp { width: 0 } = kind {
            return Err(domain("hidden layer width must be positive"));
        }
        let want = kind.param_len(input_dim);
        if theta.len() != want {
            return Err(domain(format!(
                "{kind:?} with {input_dim} inputs needs {want} parameters, got {}",
                theta.len()
            )));
        }
        Ok(Self { kind, theta, input_dim })
    }

    pub fn zeros(kind: ModelKind, input_dim: usize) -> Result<Self> {
        Self::new(kind, input_dim, vec![0.0; kind.param_len(input_dim)])
    }

    /// Seeded initialization: zeros for linear models; for networks,
    /// He-scaled Gaussian hidden weights with zero biases, output weights
    /// and intercept, so the initial network predicts zero everywhere.
    pub fn initial(kind: ModelKind, input_dim: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(kind, input_dim)?;
        if let ModelKind::Mlp { width } = kind {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hidden = Normal::new(0.0, (2.0 / input_dim.max(1) as f64).sqrt()).expect("valid std");
            let base = 1 + width;
            for j in 0..width {
                let row = base + j * (input_dim + 1);
                for k in 0..input_dim {
                    model.theta[row + 1 + k] = hidden.sample(&mut rng);
                }
            }
        }
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        self.theta.copy_from_slice(theta);
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        let t = &self.theta;
        match self.kind {
            ModelKind::Linear => t[0] + dot(&t[1..], x),
            ModelKind::Mlp { width } => {
                let d = self.input_dim;
                let base = 1 + width;
                let mut out = t[0];
                for j in 0..width {
                    let row = &t[base + j * (d + 1)..base + (j + 1) * (d + 1)];
                    let pre = row[0] + dot(&row[1..], x);
                    if pre > 0.0 {
                        out += t[1 + j] * pre;
                    }
                }
                out
            }
        }
    }

    /// Adds `scale * grad_theta f(x)` into `out` and returns `f(x)`.
    pub(crate) fn accumulate_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        let t = &self.theta;
        match self.kind {
            ModelKind::Linear => {
                out[0] += scale;
                for (o, xi) in out[1..].iter_mut().zip(x) {
                    *o += scale * xi;
                }
                t[0] + dot(&t[1..], x)
            }
            ModelKind::Mlp { width } => {
                let d = self.input_dim;
                let base = 1 + width;
                let mut f = t[0];
                out[0] += scale;
                for j in 0..width {
                    let start = base + j * (d + 1);
                    let pre = t[start] + dot(&t[start + 1..start + 1 + d], x);
                    if pre > 0.0 {
                        let v = t[1 + j];
                        f += v * pre;
                        out[1 + j] += scale * pre;
                        out[start] += scale * v;
                        for (o, xi) in out[start + 1..start + 1 + d].iter_mut().zip(x) {
                            *o += scale * v * xi;
                        }
                    }
                }
                f
            }
        }
    }

    /// `f(x)` together with `grad_theta f(x)`.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.theta.len()];
        let f = self.accumulate_gradient(x, 1.0, &mut g);
        Ok((f, g))
    }

    /// Subgradient of `|y - f(x)|` in the parameters,
    /// `-sign(y - f(x)) grad_theta f(x)`.
    pub fn subgradient(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        let (f, mut g) = self.value_and_gradient(x)?;
        let s = sign(y - f);
        for gi in &mut g {
            *gi *= -s;
        }
        Ok(g)
    }
}

impl Regressor for ParamModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        ParamModel::predict(self, x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `sign` with `sign(0) = 0`.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Step sizes `eta_k = scale * k^(-exponent)` for `k = 1, 2, ..`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl StepSchedule {
    pub fn polynomial(exponent: f64) -> Self {
        Self { scale: 1.0, exponent }
    }

    /// A schedule whose steps are all zero; descent leaves the start unchanged.
    pub fn frozen() -> Self {
        Self { scale: 0.0, exponent: 0.0 }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.scale * (k as f64).powf(-self.exponent)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite() && self.exponent.is_finite()) {
            return Err(domain(format!("invalid step schedule {self:?}")));
        }
        Ok(())
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self::polynomial(0.6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    LeastSquares,
    Huber { delta: f64 },
    Pinball { q: f64 },
}

impl Loss {
    /// Loss of residual `r = y - f(x)`.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Loss::LeastSquares => 0.5 * r * r,
            Loss::Huber { delta } => {
                if r.abs() <= delta {
                    0.5 * r * r
                } else {
                    delta * (r.abs() - 0.5 * delta)
                }
            }
            Loss::Pinball { q } => pinball_loss(r, q).expect("level validated at construction"),
        }
    }

    /// Derivative of the loss with respect to the prediction `f(x)`.
    fn prediction_slope(&self, r: f64) -> f64 {
        match *self {
            Loss::LeastSquares => -r,
            Loss::Huber { delta } => -r.clamp(-delta, delta),
            Loss::Pinball { q } => {
                if r > 0.0 {
                    -q
                } else if r < 0.0 {
                    1.0 - q
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Loss::LeastSquares => Ok(()),
            Loss::Huber { delta } if delta > 0.0 && delta.is_finite() => Ok(()),
            Loss::Huber { delta } => Err(domain(format!("Huber delta must be positive, got {delta}"))),
            Loss::Pinball { q } if q > 0.0 && q < 1.0 => Ok(()),
            Loss::Pinball { q } => Err(domain(format!("pinball level must lie in (0, 1), got {q}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub loss: Loss,
    pub iterations: usize,
    pub step: StepSchedule,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(loss: Loss) -> Self {
        Self { loss, iterations: 1000, step: StepSchedule::default(), seed: 0 }
    }

    pub fn huber() -> Self {
        Self::new(Loss::Huber { delta: 1.35 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: ParamModel,
    /// True when least squares could not use the normal equations.
    pub fell_back_to_descent: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Mean loss of `model` over `data`.
pub fn empirical_loss(model: &ParamModel, data: &Split, loss: Loss) -> f64 {
    data.iter().map(|(x, y)| loss.value(y - model.value(x))).sum::<f64>() / data.len() as f64
}

fn check_training_data(data: &Split) -> Result<()> {
    if data.is_empty() {
        return Err(domain("training split is empty"));
    }
    if !data.is_finite() {
        return Err(domain("training split contains non-finite values"));
    }
    Ok(())
}

/// Fits `kind` on `data`.
///
/// Least squares on a linear model solves the normal equations; every other
/// combination runs full-batch (sub)gradient descent and keeps the best
/// iterate, so the returned loss never exceeds the initial one. Descent
/// stops early if the loss becomes non-finite.
pub fn fit(data: &Split, kind: ModelKind, cfg: &FitConfig) -> Result<FitOutcome> {
    check_training_data(data)?;
    cfg.loss.validate()?;
    cfg.step.validate()?;
    let init = ParamModel::initial(kind, data.dim(), cfg.seed)?;
    let initial_loss = empirical_loss(&init, data, cfg.loss);

    if kind == ModelKind::Linear && cfg.loss == Loss::LeastSquares {
        if let Some(theta) = normal_equations(data) {
            let model = ParamModel::new(kind, data.dim(), theta)?;
            let final_loss = empirical_loss(&model, data, cfg.loss);
            return Ok(FitOutcome { model, fell_back_to_descent: false, initial_loss, final_loss });
        }
        let (model, final_loss) = descend(data, init, cfg)?;
        return Ok(FitOutcome { model, fell_back_to_descent: true, initial_loss, final_loss });
    }

    let (model, final_loss) = descend(data, init, cfg)?;
    Ok(FitOutcome { model, fell_back_to_descent: false, initial_loss, final_loss })
}

/// Ordinary least squares with intercept; `None` when `X^T X` is singular.
pub(crate) fn normal_equations(data: &Split) -> Option<Vec<f64>> {
    let p = data.dim() + 1;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut row = vec![0.0; p];
    for (x, y) in data.iter() {
        row[0] = 1.0;
        row[1..].copy_from_slice(x);
        for i in 0..p {
            rhs[i] += row[i] * y;
            for j in 0..p {
                gram[i * p + j] += row[i] * row[j];
            }
        }
    }
    linalg::solve(gram, rhs, 1e-12)
}

fn descend(data: &Split, mut model: ParamModel, cfg: &FitConfig) -> Result<(ParamModel, f64)> {
    let n = data.len() as f64;
    let mut best = model.theta.clone();
    let mut best_loss = empirical_loss(&model, data, cfg.loss);
    let mut grad = vec![0.0; model.theta.len()];
    for k in 1..=cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, y) in data.iter() {
            let f = model.value(x);
            let slope = cfg.loss.prediction_slope(y - f);
            if slope != 0.0 {
                model.accumulate_gradient(x, slope / n, &mut grad);
            }
        }
        let eta = cfg.step.step(k);
        for (t, g) in model.theta.iter_mut().zip(&grad) {
            *t -= eta * g;
        }
        let loss = empirical_loss(&model, data, cfg.loss);
        if !loss.is_finite() {
            break;
        }
        if loss < best_loss {
            best_loss = loss;
            best.copy_from_slice(&model.theta);
        }
    }
    model.theta = best;
    Ok((model, best_loss))
}

/// How a k-NN model summarizes the responses of the neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnnAggregate {
    Mean,
    Quantile(f64),
}

/// Nearest-neighbor conditional estimator under the Euclidean metric, with
/// distance ties broken by training index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    aggregate: KnnAggregate,
    train: Split,
}

impl KnnModel {
    pub fn new(train: Split, k: usize, aggregate: KnnAggregate) -> Result<Self> {
        check_training_data(&train)?;
        if k == 0 || k > train.len() {
            return Err(domain(format!("neighbor count {k} must lie in 1..={}", train.len())));
        }
        if let KnnAggregate::Quantile(q) = aggregate {
            if !(q > 0.0 && q < 1.0) {
                return Err(domain(format!("k-NN quantile level must lie in (0, 1), got {q}")));
            }
        }
        Ok(Self { k, aggregate, train })
    }

    /// `ceil(sqrt(n))`, capped at `n`.
    pub fn default_k(n: usize) -> usize {
        ((n as f64).sqrt().ceil() as usize).clamp(1, n.max(1))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Training indices of the `k` nearest neighbors of `x`, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.train.dim() {
            return Err(Error::DimensionMismatch { expected: self.train.dim(), got: x.len() });
        }
        let mut dist: Vec<(f64, usize)> = (0..self.train.len())
            .map(|i| {
                let d2 = self.train.row(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }
}

impl Regressor for KnnModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        let targets: Vec<f64> = self.neighbors(x)?.into_iter().map(|i| self.train.y()[i]).collect();
        match self.aggregate {
            KnnAggregate::Mean => Ok(targets.iter().sum::<f64>() / targets.len() as f64),
            KnnAggregate::Quantile(q) => empirical_quantile(&targets, q)?
                .finite()
                .ok_or_else(|| Error::Internal("level below one produced an infinite quantile".into())),
        }
    }
}
