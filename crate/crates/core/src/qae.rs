//! Minimization of the empirical `(1 - alpha)`-quantile of absolute errors.
//!
//! The quantile is smoothed by replacing the indicator in the empirical CDF
//! with the quintic kernel of [`SmoothingKernel`]. The implicit function
//! theorem then gives the parameter gradient of the smoothed quantile as a
//! weighted average of per-sample loss subgradients, with weights
//! `Gamma'(loss_i - A) / sum_j Gamma'(loss_j - A)` around the anchor `A`.

use crate::data::Split;
use crate::error::{domain, Error, Result};
use crate::model::{normal_equations, sign, ModelKind, ParamModel, StepSchedule};
use crate::quantile::{empirical_quantile, smoothed_quantile, SmoothingKernel};

/// Share of stalled iterations above which a run reports a warning.
const STALL_WARNING_FRACTION: f64 = 0.1;

/// Total kernel weight below this fraction of the kernel's peak slope counts
/// as a stall; such weights only arise from rounding at the window edge.
const STALL_WEIGHT: f64 = 1e-10;

/// Which quantile the gradient weights are centred on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorMode {
    /// Exact empirical quantile of the losses (cheap; the default).
    #[default]
    Empirical,
    /// Smoothed quantile; the gradient is then exact for the smoothed objective.
    Smoothed,
}

/// Starting point of the descent.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum QaeInit {
    /// Least-squares fit for linear models, seeded random weights otherwise.
    #[default]
    Auto,
    Zeros,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaeConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub step: StepSchedule,
    pub seed: u64,
    pub anchor: AnchorMode,
    pub init: QaeInit,
}

impl Default for QaeConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            iterations: 1000,
            step: StepSchedule::polynomial(0.6),
            seed: 0,
            anchor: AnchorMode::Empirical,
            init: QaeInit::Auto,
        }
    }
}

impl QaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        SmoothingKernel::new(self.epsilon)?;
        if self.iterations == 0 {
            return Err(domain("iteration count must be positive"));
        }
        self.step.validate()
    }

    fn level(&self) -> f64 {
        1.0 - self.alpha
    }
}

/// One evaluation of the smoothed-quantile gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct QaeGradient {
    pub gradient: Vec<f64>,
    /// The quantile the weights were centred on.
    pub anchor: f64,
    /// No loss fell within `epsilon` of the anchor; the gradient is zero.
    pub stalled: bool,
}

/// Absolute errors `|y_i - f(x_i)|` over `data`.
pub fn absolute_errors(model: &ParamModel, data: &Split) -> Vec<f64> {
    data.iter().map(|(x, y)| (y - model.value(x)).abs()).collect()
}

/// Exact empirical `(1 - alpha)`-quantile of the absolute errors.
pub fn qae_objective(model: &ParamModel, data: &Split, alpha: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(domain("learning split is empty"));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: data.dim() });
    }
    let losses = absolute_errors(model, data);
    Ok(empirical_quantile(&losses, 1.0 - alpha)?.as_f64())
}

/// Smoothed `(1 - alpha)`-quantile of the absolute errors.
pub fn smoothed_qae_objective(model: &ParamModel, data: &Split, alpha: f64, epsilon: f64) -> Result<f64> {
    let kernel = SmoothingKernel::new(epsilon)?;
    let losses = absolute_errors(model, data);
    smoothed_quantile(&losses, 1.0 - alpha, &kernel)
}

/// Gradient of the smoothed `(1 - alpha)`-QAE with respect to the model
/// parameters, given the precomputed absolute errors.
fn gradient_with_anchor(
    model: &ParamModel,
    data: &Split,
    losses: &[f64],
    anchor: f64,
    kernel: &SmoothingKernel,
) -> QaeGradient {
    let weights: Vec<f64> = losses.iter().map(|&l| kernel.derivative(l - anchor)).collect();
    let total: f64 = weights.iter().sum();
    let mut gradient = vec![0.0; model.theta().len()];
    if total.abs() <= STALL_WEIGHT * kernel.derivative(0.0).abs() {
        return QaeGradient { gradient, anchor, stalled: true };
    }
    for (i, (x, y)) in data.iter().enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        // d|y - f| / dtheta = -sign(y - f) * df/dtheta
        let r = y - model.value(x);
        let scale = -sign(r) * w / total;
        if scale != 0.0 {
            model.accumulate_gradient(x, scale, &mut gradient);
        }
    }
    QaeGradient { gradient, anchor, stalled: false }
}

/// Weighted-average subgradient of the smoothed QAE at `model`.
pub fn qae_gradient(model: &ParamModel, data: &Split, cfg: &QaeConfig) -> Result<QaeGradient> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(domain("learning split is empty"));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: data.dim() });
    }
    let kernel = SmoothingKernel::new(cfg.epsilon)?;
    let losses = absolute_errors(model, data);
    let anchor = match cfg.anchor {
        AnchorMode::Empirical => empirical_quantile(&losses, cfg.level())?.as_f64(),
        AnchorMode::Smoothed => smoothed_quantile(&losses, cfg.level(), &kernel)?,
    };
    Ok(gradient_with_anchor(model, data, &losses, anchor, &kernel))
}

/// Record of a descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct QaeTrace {
    /// Exact empirical QAE at every iterate; entry 0 is the starting point
    /// and entry `k` the iterate after `k` steps.
    pub objective: Vec<f64>,
    /// The final iterate, which may be worse than the returned best one.
    pub last: ParamModel,
    pub best_objective: f64,
    /// Index into `objective` of the best iterate.
    pub best_iteration: usize,
    /// Iterations whose gradient was zero because no loss was near the anchor.
    pub stalls: usize,
}

impl QaeTrace {
    pub fn initial_objective(&self) -> f64 {
        self.objective[0]
    }

    /// Running minimum of the objective.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.objective
            .iter()
            .scan(f64::INFINITY, |best, &v| {
                *best = best.min(v);
                Some(*best)
            })
            .collect()
    }

    /// A warning when more than 10% of iterations stalled.
    pub fn warning(&self) -> Option<String> {
        let iterations = self.objective.len().saturating_sub(1).max(1);
        (self.stalls as f64 > STALL_WARNING_FRACTION * iterations as f64).then(|| {
            format!(
                "{} of {} gradient steps stalled with no loss within epsilon of the quantile; \
                 consider a larger smoothing width",
                self.stalls, iterations
            )
        })
    }
}

fn starting_point(data: &Split, kind: ModelKind, cfg: &QaeConfig) -> Result<ParamModel> {
    match &cfg.init {
        QaeInit::Zeros => ParamModel::zeros(kind, data.dim()),
        QaeInit::Given(theta) => ParamModel::new(kind, data.dim(), theta.clone()),
        QaeInit::Auto => match kind {
            ModelKind::Linear => match normal_equations(data) {
                Some(theta) => ParamModel::new(kind, data.dim(), theta),
                None => ParamModel::zeros(kind, data.dim()),
            },
            ModelKind::Mlp { .. } => ParamModel::initial(kind, data.dim(), cfg.seed),
        },
    }
}

/// Runs smoothed-quantile gradient descent on `data` and returns the iterate
/// with the smallest exact empirical QAE, along with the run trace.
pub fn minimize_qae(data: &Split, kind: ModelKind, cfg: &QaeConfig) -> Result<(ParamModel, QaeTrace)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(domain("learning split is empty"));
    }
    if !data.is_finite() {
        return Err(domain("learning split contains non-finite values"));
    }
    let kernel = SmoothingKernel::new(cfg.epsilon)?;
    let level = cfg.level();
    let mut model = starting_point(data, kind, cfg)?;
    let mut best = model.clone();
    let mut best_objective = f64::INFINITY;
    let mut best_iteration = 0;
    let mut objective = Vec::with_capacity(cfg.iterations + 1);
    let mut stalls = 0;

    for k in 0..=cfg.iterations {
        let losses = absolute_errors(&model, data);
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite { iteration: k });
        }
        let exact = empirical_quantile(&losses, level)?.as_f64();
        objective.push(exact);
        if exact < best_objective {
            best_objective = exact;
            best_iteration = k;
            best.set_theta(model.theta());
        }
        if k == cfg.iterations {
            break;
        }
        let anchor = match cfg.anchor {
            AnchorMode::Empirical => exact,
            AnchorMode::Smoothed => smoothed_quantile(&losses, level, &kernel)?,
        };
        let step = gradient_with_anchor(&model, data, &losses, anchor, &kernel);
        if step.stalled {
            stalls += 1;
            continue;
        }
        let eta = cfg.step.step(k + 1);
        let theta: Vec<f64> = model.theta().iter().zip(&step.gradient).map(|(t, g)| t - eta * g).collect();
        model.set_theta(&theta);
    }

    let trace = QaeTrace { objective, last: model, best_objective, best_iteration, stalls };
    Ok((best, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_linear_data(seed: u64, n: usize, noise: f64) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Split::empty(2);
        for _ in 0..n {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let y = 1.0 + 0.5 * x[0] - x[1] + noise * rng.random_range(-1.0..1.0);
            data.push(&x, y);
        }
        data
    }

    #[test]
    fn equal_losses_give_the_plain_average_subgradient() {
        // every residual is +1, so every loss sits exactly at the anchor
        let mut data = Split::empty(1);
        for x in [-1.0, 0.5, 2.0, 3.5] {
            data.push(&[x], 2.0 * x + 1.0);
        }
        let model = ParamModel::new(ModelKind::Linear, 1, vec![0.0, 2.0]).unwrap();
        let g = qae_gradient(&model, &data, &QaeConfig::default()).unwrap();
        assert!(!g.stalled);
        let mut mean = [0.0; 2];
        for (x, y) in data.iter() {
            let s = model.subgradient(x, y).unwrap();
            mean[0] += s[0] / 4.0;
            mean[1] += s[1] / 4.0;
        }
        for (a, b) in g.gradient.iter().zip(mean) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_normalize_for_any_input() {
        // with a constant-only model each subgradient is -sign(r) * 1, so the
        // gradient magnitude is at most one and equals one when all residuals share a sign
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let ys: Vec<f64> = (0..40).map(|_| rng.random_range(1.0..5.0)).collect();
            let data = Split::new(0, vec![], ys).unwrap();
            let model = ParamModel::zeros(ModelKind::Linear, 0).unwrap();
            let cfg = QaeConfig { epsilon: 0.5, ..QaeConfig::default() };
            let g = qae_gradient(&model, &data, &cfg).unwrap();
            assert!((g.gradient[0] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_anchor_stalls_in_smoothed_mode() {
        // the smoothed 0.5-quantile of {0, 10} sits at the edge of a flat stretch
        let data = Split::new(0, vec![], vec![0.0, 10.0]).unwrap();
        let model = ParamModel::zeros(ModelKind::Linear, 0).unwrap();
        let cfg = QaeConfig { alpha: 0.5, anchor: AnchorMode::Smoothed, ..QaeConfig::default() };
        let g = qae_gradient(&model, &data, &cfg).unwrap();
        assert!(g.stalled);
        assert_eq!(g.gradient, vec![0.0]);
    }

    #[test]
    fn stalled_runs_report_a_warning() {
        let data = Split::new(0, vec![], vec![0.0, 10.0]).unwrap();
        let cfg = QaeConfig {
            alpha: 0.5,
            anchor: AnchorMode::Smoothed,
            iterations: 20,
            init: QaeInit::Zeros,
            ..QaeConfig::default()
        };
        let (_, trace) = minimize_qae(&data, ModelKind::Linear, &cfg).unwrap();
        assert_eq!(trace.stalls, 20);
        assert!(trace.warning().unwrap().contains("smoothing width"));
    }

    /// Richardson-extrapolated central difference of the smoothed objective.
    pub(crate) fn finite_difference(model: &ParamModel, data: &Split, alpha: f64, epsilon: f64, h: f64) -> Vec<f64> {
        let central = |j: usize, h: f64| {
            let shifted = |delta: f64| {
                let mut m = model.clone();
                let mut t = m.theta().to_vec();
                t[j] += delta;
                m.set_theta(&t);
                smoothed_qae_objective(&m, data, alpha, epsilon).unwrap()
            };
            (shifted(h) - shifted(-h)) / (2.0 * h)
        };
        (0..model.theta().len()).map(|j| (4.0 * central(j, h / 2.0) - central(j, h)) / 3.0).collect()
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let data = random_linear_data(9, 50, 1.0);
        let cfg = QaeConfig { anchor: AnchorMode::Smoothed, alpha: 0.1, epsilon: 0.1, ..QaeConfig::default() };
        for theta in [vec![0.8, 0.4, -0.7], vec![1.1, 0.45, -1.05], vec![0.0, 0.0, 0.0]] {
            let model = ParamModel::new(ModelKind::Linear, 2, theta).unwrap();
            let g = qae_gradient(&model, &data, &cfg).unwrap();
            let fd = finite_difference(&model, &data, 0.1, 0.1, 1e-3);
            let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err = g.gradient.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err / norm < 1e-4, "relative error {}", err / norm);
        }
    }

    #[test]
    fn noiseless_data_drives_the_objective_to_zero() {
        let data = random_linear_data(2, 200, 0.0);
        // sign-type steps oscillate with amplitude ~ eta_k, so the unit-scale
        // schedule stalls near 1e-2; a tenth of it gets below 1e-3
        let cfg = QaeConfig {
            init: QaeInit::Zeros,
            step: StepSchedule { scale: 0.1, exponent: 0.6 },
            ..QaeConfig::default()
        };
        let (model, trace) = minimize_qae(&data, ModelKind::Linear, &cfg).unwrap();
        assert!(trace.best_objective <= 1e-3, "objective {}", trace.best_objective);
        assert_eq!(qae_objective(&model, &data, 0.1).unwrap(), trace.best_objective);
        let unit = QaeConfig { init: QaeInit::Zeros, ..QaeConfig::default() };
        let (_, trace) = minimize_qae(&data, ModelKind::Linear, &unit).unwrap();
        assert!(trace.best_objective <= 0.05, "objective {}", trace.best_objective);
    }

    #[test]
    fn best_objective_never_increases() {
        let data = random_linear_data(3, 100, 2.0);
        let cfg = QaeConfig { init: QaeInit::Zeros, iterations: 300, ..QaeConfig::default() };
        let (_, trace) = minimize_qae(&data, ModelKind::Linear, &cfg).unwrap();
        let best = trace.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*best.last().unwrap(), trace.best_objective);
        assert!(trace.best_objective <= trace.initial_objective());
    }

    #[test]
    fn frozen_schedule_returns_the_start() {
        let data = random_linear_data(5, 60, 1.0);
        let start = vec![0.3, -0.2, 0.9];
        let cfg = QaeConfig {
            step: StepSchedule::frozen(),
            init: QaeInit::Given(start.clone()),
            iterations: 50,
            ..QaeConfig::default()
        };
        let (model, trace) = minimize_qae(&data, ModelKind::Linear, &cfg).unwrap();
        assert_eq!(model.theta(), start.as_slice());
        assert_eq!(trace.last.theta(), start.as_slice());
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let data = random_linear_data(6, 80, 1.5);
        let cfg = QaeConfig { iterations: 200, seed: 42, ..QaeConfig::default() };
        let a = minimize_qae(&data, ModelKind::Mlp { width: 5 }, &cfg).unwrap();
        let b = minimize_qae(&data, ModelKind::Mlp { width: 5 }, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diverging_steps_abort_with_the_iteration() {
        let data = random_linear_data(8, 30, 1.0);
        let cfg = QaeConfig {
            step: StepSchedule { scale: 1e306, exponent: -50.0 },
            init: QaeInit::Zeros,
            ..QaeConfig::default()
        };
        match minimize_qae(&data, ModelKind::Linear, &cfg) {
            Err(Error::NonFinite { iteration }) => assert!(iteration >= 1),
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let data = random_linear_data(1, 10, 1.0);
        for cfg in [
            QaeConfig { alpha: 0.0, ..QaeConfig::default() },
            QaeConfig { alpha: 1.0, ..QaeConfig::default() },
            QaeConfig { epsilon: 0.0, ..QaeConfig::default() },
            QaeConfig { iterations: 0, ..QaeConfig::default() },
        ] {
            assert!(minimize_qae(&data, ModelKind::Linear, &cfg).is_err());
        }
    }
}
