//! Run configuration: built-in defaults, `key = value` files and flag
//! overrides, applied in that order.

use std::fmt::Write as _;
use std::str::FromStr;

use effort_core::{AnchorMode, Method, ModelKind, NoiseLaw, QaeConfig, ScenarioKind, StepSchedule};

use crate::error::CliError;

/// Which predictor class the parametric methods fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    /// Linear for the linear and heteroscedastic scenarios, a one-hidden-layer
    /// network for the quadratic scenario and for real data.
    Auto,
    Linear,
    Mlp,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Auto => "auto",
            ModelChoice::Linear => "linear",
            ModelChoice::Mlp => "mlp",
        }
    }
}

impl FromStr for ModelChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "auto" => Ok(ModelChoice::Auto),
            "linear" => Ok(ModelChoice::Linear),
            "mlp" => Ok(ModelChoice::Mlp),
            _ => Err(CliError::usage(format!("unknown model '{s}' (expected auto, linear or mlp)"))),
        }
    }
}

fn anchor_name(a: AnchorMode) -> &'static str {
    match a {
        AnchorMode::Empirical => "empirical",
        AnchorMode::Smoothed => "smoothed",
    }
}

fn parse_anchor(s: &str) -> Result<AnchorMode, CliError> {
    match s {
        "empirical" => Ok(AnchorMode::Empirical),
        "smoothed" => Ok(AnchorMode::Smoothed),
        _ => Err(CliError::usage(format!("unknown anchor '{s}' (expected empirical or smoothed)"))),
    }
}

/// Every knob of an experiment. `Display` renders the same `key = value`
/// format that [`RunConfig::apply_file`] reads back.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub noise: NoiseLaw,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub n_learn: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub repeats: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub iterations: usize,
    pub step_scale: f64,
    pub step_exponent: f64,
    pub anchor: AnchorMode,
    pub knn_k: Option<usize>,
    pub model: ModelChoice,
    pub width: usize,
    pub redraw_theta: bool,
    pub center_noise: bool,
    pub subsplit: bool,
    pub outlier_frac: f64,
    pub outlier_mean_mult: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Linear3d,
            noise: NoiseLaw::Normal,
            methods: vec![Method::SplitCp, Method::SplitCpHuber, Method::Effort],
            alpha: 0.1,
            n_learn: 1000,
            n_cal: 1000,
            n_test: 1000,
            repeats: 50,
            seed: 0,
            epsilon: 0.1,
            iterations: 1000,
            step_scale: 1.0,
            step_exponent: 0.6,
            anchor: AnchorMode::Empirical,
            knn_k: None,
            model: ModelChoice::Auto,
            width: 10,
            redraw_theta: false,
            center_noise: false,
            subsplit: false,
            outlier_frac: 0.0,
            outlier_mean_mult: 2.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::usage(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::usage(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

pub fn parse_methods(value: &str) -> Result<Vec<Method>, CliError> {
    let methods = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| CliError::usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(CliError::usage("method list is empty"));
    }
    Ok(methods)
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let core = |e: effort_core::Error| CliError::usage(e.to_string());
        match key {
            "scenario" => self.scenario = value.parse().map_err(core)?,
            "noise" => self.noise = value.parse().map_err(core)?,
            "methods" => self.methods = parse_methods(value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "n" => {
                let n = parse(key, value)?;
                (self.n_learn, self.n_cal, self.n_test) = (n, n, n);
            }
            "n_learn" => self.n_learn = parse(key, value)?,
            "n_cal" => self.n_cal = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "step_scale" => self.step_scale = parse(key, value)?,
            "step_exponent" => self.step_exponent = parse(key, value)?,
            "anchor" => self.anchor = parse_anchor(value)?,
            "knn_k" => self.knn_k = if value == "auto" { None } else { Some(parse(key, value)?) },
            "model" => self.model = value.parse()?,
            "width" => self.width = parse(key, value)?,
            "redraw_theta" => self.redraw_theta = parse_bool(key, value)?,
            "center_noise" => self.center_noise = parse_bool(key, value)?,
            "subsplit" => self.subsplit = parse_bool(key, value)?,
            "outlier_frac" => self.outlier_frac = parse(key, value)?,
            "outlier_mean_mult" => self.outlier_mean_mult = parse(key, value)?,
            _ => return Err(CliError::usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and lines starting with `#`
    /// are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected 'key = value'", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::usage(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::usage(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.n_learn == 0 || self.n_cal == 0 || self.n_test == 0 {
            return fail("split sizes must be positive".into());
        }
        if self.repeats == 0 {
            return fail("repeats must be positive".into());
        }
        if self.methods.is_empty() {
            return fail("method list is empty".into());
        }
        if self.width == 0 {
            return fail("hidden layer width must be positive".into());
        }
        if self.knn_k == Some(0) {
            return fail("knn_k must be positive".into());
        }
        if !(0.0..1.0).contains(&self.outlier_frac) {
            return fail(format!("outlier_frac must lie in [0, 1), got {}", self.outlier_frac));
        }
        if !self.outlier_mean_mult.is_finite() {
            return fail("outlier_mean_mult must be finite".into());
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite() && self.step_exponent.is_finite()) {
            return fail("step_scale must be positive and step_exponent finite".into());
        }
        self.qae().validate().map_err(|e| CliError::usage(e.to_string()))
    }

    pub fn step(&self) -> StepSchedule {
        StepSchedule { scale: self.step_scale, exponent: self.step_exponent }
    }

    pub fn qae(&self) -> QaeConfig {
        QaeConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            iterations: self.iterations,
            step: self.step(),
            anchor: self.anchor,
            ..QaeConfig::default()
        }
    }

    /// Model class for a dataset of the given scenario; `None` means real data.
    pub fn model_kind(&self, scenario: Option<ScenarioKind>) -> ModelKind {
        let mlp = ModelKind::Mlp { width: self.width };
        match self.model {
            ModelChoice::Linear => ModelKind::Linear,
            ModelChoice::Mlp => mlp,
            ModelChoice::Auto => match scenario {
                Some(ScenarioKind::Linear3d | ScenarioKind::Heteroscedastic) => ModelKind::Linear,
                Some(ScenarioKind::Quadratic) | None => mlp,
            },
        }
    }
}

impl std::fmt::Display for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let methods = self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(",");
        let knn = self.knn_k.map_or_else(|| "auto".to_string(), |k| k.to_string());
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k} = {v}");
        kv("scenario", &self.scenario.name())?;
        kv("noise", &self.noise.name())?;
        kv("methods", &methods)?;
        kv("alpha", &self.alpha)?;
        kv("n_learn", &self.n_learn)?;
        kv("n_cal", &self.n_cal)?;
        kv("n_test", &self.n_test)?;
        kv("repeats", &self.repeats)?;
        kv("seed", &self.seed)?;
        kv("epsilon", &self.epsilon)?;
        kv("iterations", &self.iterations)?;
        kv("step_scale", &self.step_scale)?;
        kv("step_exponent", &self.step_exponent)?;
        kv("anchor", &anchor_name(self.anchor))?;
        kv("knn_k", &knn)?;
        kv("model", &self.model.name())?;
        kv("width", &self.width)?;
        kv("redraw_theta", &self.redraw_theta)?;
        kv("center_noise", &self.center_noise)?;
        kv("subsplit", &self.subsplit)?;
        kv("outlier_frac", &self.outlier_frac)?;
        kv("outlier_mean_mult", &self.outlier_mean_mult)?;
        f.write_str(&s)
    }
}
