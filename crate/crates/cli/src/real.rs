//! Repeated random 40/40/20 splits of a user-supplied CSV table.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use effort_core::synth::{derived_seed, stream_rng, Stream};
use effort_core::{Dataset, Split};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::harness::{evaluate_methods, run_indexed};
use crate::report::{ExperimentReport, Record};

pub const MIN_ROWS: usize = 10;

/// Reads a headed numeric CSV whose last column is the response.
pub fn load_table(path: &Path) -> Result<Split, CliError> {
    let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_table(&text).map_err(|message| CliError::Parse { path: path.to_path_buf(), message })
}

pub fn parse_table(bytes: &[u8]) -> Result<Split, String> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let width = reader.headers().map_err(|e| e.to_string())?.len();
    if width < 2 {
        return Err("need at least one covariate column and a response column".into());
    }
    let mut split = Split::empty(width - 1);
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| format!("row {line}: {e}"))?;
        let values = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| format!("row {line}, column {}: non-numeric value '{cell}'", c + 1))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("row {line}, column {}: non-finite value '{cell}'", c + 1))
                }
            })
            .collect::<Result<Vec<f64>, String>>()?;
        split.push(&values[..width - 1], values[width - 1]);
    }
    if split.len() < MIN_ROWS {
        return Err(format!("need at least {MIN_ROWS} data rows, found {}", split.len()));
    }
    Ok(split)
}

/// Learning, calibration and test sizes: 40% and 40% rounded down, the
/// remainder to test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let learn = n * 2 / 5;
    let cal = n * 2 / 5;
    (learn, cal, n - learn - cal)
}

/// Replaces `round(frac * n)` responses, chosen by `rng`, with draws from
/// `N(mult * max(y), 1)`.
pub fn contaminate<R: Rng + ?Sized>(data: &mut Split, frac: f64, mult: f64, rng: &mut R) -> Vec<usize> {
    let count = (frac * data.len() as f64).round() as usize;
    if count == 0 {
        return Vec::new();
    }
    let max = data.y().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    idx.truncate(count);
    idx.sort_unstable();
    for &i in &idx {
        let z: f64 = StandardNormal.sample(rng);
        data.y_mut()[i] = mult * max + z;
    }
    idx
}

/// Per-column mean and standard deviation of the learning split, with zero
/// deviations replaced by one.
struct Standardizer {
    x_mean: Vec<f64>,
    x_sd: Vec<f64>,
    y_mean: f64,
    y_sd: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

impl Standardizer {
    fn fit(learn: &Split) -> Self {
        let (x_mean, x_sd) = (0..learn.dim())
            .map(|c| mean_sd(&learn.iter().map(|(x, _)| x[c]).collect::<Vec<_>>()))
            .unzip();
        let (y_mean, y_sd) = mean_sd(learn.y());
        Self { x_mean, x_sd, y_mean, y_sd }
    }

    fn apply(&self, split: &Split) -> Split {
        let mut out = Split::empty(split.dim());
        let mut row = vec![0.0; split.dim()];
        for (x, y) in split.iter() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (x[c] - self.x_mean[c]) / self.x_sd[c];
            }
            out.push(&row, (y - self.y_mean) / self.y_sd);
        }
        out
    }
}

/// The standardized dataset of repeat `repeat` and the response scale that
/// maps standardized lengths back to original units.
pub fn repeat_dataset(table: &Split, cfg: &RunConfig, repeat: usize) -> effort_core::Result<(Dataset, f64)> {
    let mut all = table.clone();
    let mut rng = stream_rng(cfg.seed, repeat as u64, Stream::Outliers);
    contaminate(&mut all, cfg.outlier_frac, cfg.outlier_mean_mult, &mut rng);
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut stream_rng(cfg.seed, repeat as u64, Stream::Permutation));
    let (n_learn, n_cal, _) = split_sizes(all.len());
    let learn = all.select(&order[..n_learn]);
    let cal = all.select(&order[n_learn..n_learn + n_cal]);
    let test = all.select(&order[n_learn + n_cal..]);
    let st = Standardizer::fit(&learn);
    let data = Dataset::new(st.apply(&learn), st.apply(&cal), st.apply(&test))?;
    Ok((data, st.y_sd))
}

/// Runs `cfg.repeats` random splits of `table`. Lengths are reported in
/// the units of the original response.
pub fn run_real(table: &Split, cfg: &RunConfig, jobs: Option<usize>) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    if table.len() < MIN_ROWS {
        return Err(CliError::usage(format!("need at least {MIN_ROWS} data rows, found {}", table.len())));
    }
    let kind = cfg.model_kind(None);
    let per_repeat = run_indexed(cfg.repeats, jobs, |repeat| {
        let seed = derived_seed(cfg.seed, repeat as u64);
        match repeat_dataset(table, cfg, repeat) {
            Ok((data, scale)) => {
                let mut records = evaluate_methods(&data, kind, cfg, repeat, seed);
                records.iter_mut().for_each(|r| r.mean_length *= scale);
                records
            }
            Err(e) => cfg.methods.iter().map(|&m| Record::failed(repeat, seed, m, e.to_string())).collect(),
        }
    })?;
    Ok(ExperimentReport {
        config_echo: cfg.to_string(),
        repeats: cfg.repeats,
        methods: cfg.methods.clone(),
        records: per_repeat.into_iter().flatten().collect(),
    })
}
