//! Repeated synthetic experiments.

use rayon::prelude::*;

use effort_core::conformal::{ad_effort, cqr, effort, locally_weighted_cp, split_cp};
use effort_core::synth::{derived_seed, generate};
use effort_core::{
    coverage_and_length, AdaptiveOptions, Dataset, FitConfig, IntervalPredictor, KnnSettings, Loss, Method,
    ModelKind, ScenarioSpec,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{ExperimentReport, Record};

/// Fits `method` on the learning and calibration splits of `data`.
pub fn build_predictor(
    method: Method,
    data: &Dataset,
    kind: ModelKind,
    cfg: &RunConfig,
    seed: u64,
) -> effort_core::Result<IntervalPredictor> {
    let knn = KnnSettings { k: cfg.knn_k };
    let base = |loss| FitConfig { loss, iterations: cfg.iterations, step: cfg.step(), seed };
    let qae = effort_core::QaeConfig { seed, ..cfg.qae() };
    match method {
        Method::SplitCp => split_cp(data, kind, &base(Loss::LeastSquares), cfg.alpha),
        Method::SplitCpHuber => split_cp(data, kind, &base(FitConfig::huber().loss), cfg.alpha),
        Method::Effort => effort(data, kind, &qae, cfg.alpha),
        Method::LocallyWeighted => locally_weighted_cp(data, kind, cfg.alpha, knn),
        Method::Cqr => cqr(data, cfg.alpha, knn),
        Method::AdEffort => ad_effort(data, kind, &qae, cfg.alpha, AdaptiveOptions { subsplit: cfg.subsplit, knn }),
    }
}

/// Runs every configured method on one dataset, one record per method.
pub fn evaluate_methods(
    data: &Dataset,
    kind: ModelKind,
    cfg: &RunConfig,
    repeat: usize,
    seed: u64,
) -> Vec<Record> {
    cfg.methods
        .iter()
        .map(|&method| {
            let outcome = build_predictor(method, data, kind, cfg, seed)
                .and_then(|p| coverage_and_length(&p, &data.test));
            match outcome {
                Ok(ev) => Record {
                    repeat,
                    seed,
                    method,
                    coverage: ev.coverage,
                    mean_length: ev.mean_length,
                    error: None,
                },
                Err(e) => Record::failed(repeat, seed, method, e.to_string()),
            }
        })
        .collect()
}

/// Scenario parameters of repeat `repeat`.
pub fn scenario_spec(cfg: &RunConfig, repeat: usize) -> ScenarioSpec {
    ScenarioSpec {
        n_learn: cfg.n_learn,
        n_cal: cfg.n_cal,
        n_test: cfg.n_test,
        repeat: repeat as u64,
        redraw_theta: cfg.redraw_theta,
        center_noise: cfg.center_noise,
        ..ScenarioSpec::new(cfg.scenario, cfg.noise, cfg.n_learn, cfg.seed)
    }
}

fn run_repeat(cfg: &RunConfig, repeat: usize) -> Vec<Record> {
    let seed = derived_seed(cfg.seed, repeat as u64);
    match generate(&scenario_spec(cfg, repeat)) {
        Ok(scenario) => evaluate_methods(&scenario.data, cfg.model_kind(Some(cfg.scenario)), cfg, repeat, seed),
        Err(e) => cfg.methods.iter().map(|&m| Record::failed(repeat, seed, m, e.to_string())).collect(),
    }
}

/// Evaluates `f` on `0..repeats` using `jobs` threads, or sequentially when
/// `None`. Results are returned in index order either way.
pub fn run_indexed<T, F>(repeats: usize, jobs: Option<usize>, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match jobs {
        None => Ok((0..repeats).map(f).collect()),
        Some(0) => Err(CliError::usage("--jobs must be positive")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::usage(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(|| (0..repeats).into_par_iter().map(f).collect()))
        }
    }
}

/// Generates, fits and evaluates every repeat of a synthetic experiment.
pub fn run_synthetic(cfg: &RunConfig, jobs: Option<usize>) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let per_repeat = run_indexed(cfg.repeats, jobs, |r| run_repeat(cfg, r))?;
    Ok(ExperimentReport {
        config_echo: cfg.to_string(),
        repeats: cfg.repeats,
        methods: cfg.methods.clone(),
        records: per_repeat.into_iter().flatten().collect(),
    })
}
