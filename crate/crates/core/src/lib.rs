//! Efficiency-oriented split conformal regression.
//!
//! The crate learns a base predictor by minimizing the `(1 - alpha)`-quantile
//! of its absolute errors (the QAE objective) with a smoothed-quantile
//! gradient method, then calibrates a prediction interval around it with the
//! split-conformal rank rule. The usual baselines (split CP with least squares
//! or Huber regression, locally weighted CP, CQR) and an adaptive variant that
//! adds a residual-quantile band are available for comparison, together with
//! evaluators for the finite-sample length bounds and seeded generators for
//! the synthetic benchmark scenarios.
//!
//! Module map:
//!
//! * [`quantile`]: exact and smoothed empirical quantiles, pinball loss,
//!   nested-set scores.
//! * [`model`]: linear and one-hidden-layer models, trainers, k-NN
//!   conditional quantiles.
//! * [`qae`]: smoothed-quantile gradient descent for the QAE objective.
//! * [`conformal`]: calibration and the five interval constructors.
//! * [`bounds`]: closed-form excess-length bounds.
//! * [`synth`]: synthetic scenario generators and seeded substreams.
//! * [`data`]: dataset containers.

pub mod bounds;
pub mod conformal;
pub mod data;
pub mod error;
pub mod model;
pub mod qae;
pub mod quantile;
pub mod synth;

mod linalg;

pub use conformal::{
    calibrate, coverage_and_length, AdaptiveOptions, Calibration, Evaluation, Interval,
    IntervalPredictor, KnnSettings, Method,
};
pub use data::{Dataset, Split};
pub use error::{Error, Result};
pub use model::{FitConfig, FitOutcome, KnnModel, Loss, ModelKind, ParamModel, Regressor, StepSchedule};
pub use qae::{minimize_qae, qae_gradient, AnchorMode, QaeConfig, QaeInit, QaeTrace};
pub use quantile::{empirical_quantile, pinball_loss, QuantileValue, SmoothingKernel};
pub use synth::{NoiseLaw, ScenarioKind, ScenarioSpec};
