//! Per-repeat records, aggregates and their CSV and table renderings.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use effort_core::Method;

use crate::error::CliError;

pub const CSV_HEADER: [&str; 5] = ["repeat", "seed", "method", "coverage", "mean_length"];

/// One (repeat, method) outcome. A failed fit has NaN metrics and an error.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub repeat: usize,
    pub seed: u64,
    pub method: Method,
    pub coverage: f64,
    pub mean_length: f64,
    pub error: Option<String>,
}

impl Record {
    pub fn failed(repeat: usize, seed: u64, method: Method, error: String) -> Self {
        Self { repeat, seed, method, coverage: f64::NAN, mean_length: f64::NAN, error: Some(error) }
    }
}

/// Mean, sample standard deviation, min and max of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Summary of `values`; `None` when empty. Infinite entries make the mean
    /// infinite and the standard deviation NaN.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { mean, sd, min, max })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodAggregate {
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    pub coverage: Option<Summary>,
    pub mean_length: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Effective configuration in `key = value` form.
    pub config_echo: String,
    pub repeats: usize,
    pub methods: Vec<Method>,
    /// Ordered by repeat, then by method list order.
    pub records: Vec<Record>,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.error.is_some())
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }

    pub fn method_records(&self, method: Method) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.method == method)
    }

    pub fn aggregate(&self, method: Method) -> MethodAggregate {
        let ok: Vec<&Record> = self.method_records(method).filter(|r| r.error.is_none()).collect();
        let failed = self.method_records(method).count() - ok.len();
        let coverage: Vec<f64> = ok.iter().map(|r| r.coverage).collect();
        let lengths: Vec<f64> = ok.iter().map(|r| r.mean_length).collect();
        MethodAggregate {
            method,
            succeeded: ok.len(),
            failed,
            coverage: Summary::of(&coverage),
            mean_length: Summary::of(&lengths),
        }
    }

    pub fn aggregates(&self) -> Vec<MethodAggregate> {
        self.methods.iter().map(|&m| self.aggregate(m)).collect()
    }

    /// Largest finite mean length across every record, the denominator of
    /// normalized lengths.
    pub fn max_finite_length(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.mean_length)
            .filter(|v| v.is_finite())
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.repeat.to_string(),
                r.seed.to_string(),
                r.method.name().to_string(),
                format_sig(r.coverage),
                format_sig(r.mean_length),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Writes the CSV and its `<path>.config` echo.
    pub fn save(&self, path: &Path) -> Result<PathBuf, CliError> {
        std::fs::write(path, self.csv_string()).map_err(|e| CliError::io(path, e))?;
        let echo = echo_path(path);
        std::fs::write(&echo, &self.config_echo).map_err(|e| CliError::io(&echo, e))?;
        Ok(echo)
    }

    /// Aligned plain-text table of the aggregates. With `normalize`, adds a
    /// column of mean lengths divided by [`Self::max_finite_length`], or
    /// zeros when every length is zero.
    pub fn table(&self, normalize: bool) -> String {
        let denom = self.max_finite_length().filter(|_| normalize);
        let mut header = vec!["method", "ok", "failed", "cov_mean", "cov_sd", "cov_min", "cov_max"];
        header.extend(["len_mean", "len_sd", "len_min", "len_max"]);
        if denom.is_some() {
            header.push("norm_len");
        }
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for agg in self.aggregates() {
            let mut row = vec![agg.method.name().to_string(), agg.succeeded.to_string(), agg.failed.to_string()];
            for s in [agg.coverage, agg.mean_length] {
                match s {
                    Some(s) => row.extend([s.mean, s.sd, s.min, s.max].map(|v| format!("{v:.4}"))),
                    None => row.extend(std::iter::repeat_n("-".to_string(), 4)),
                }
            }
            if let Some(d) = denom {
                row.push(agg.mean_length.map_or("-".into(), |s| format!("{:.4}", if d > 0.0 { s.mean / d } else { 0.0 })));
            }
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, &w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

pub fn echo_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".config");
    PathBuf::from(name)
}

/// Formats `v` with 12 significant digits in the style of C's `%.12g`:
/// fixed notation for decimal exponents in `-5..12`, scientific otherwise,
/// trailing zeros removed. Non-finite values print as `inf`, `-inf`, `NaN`.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 12;
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Parses a value written by [`format_sig`].
pub fn parse_metric(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        _ => s.parse().ok(),
    }
}

/// Reads records back from a report CSV.
pub fn read_csv(path: &Path) -> Result<Vec<Record>, CliError> {
    let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(parse_err(format!("expected header '{}'", CSV_HEADER.join(","))));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let bad = |c: usize| parse_err(format!("row {line}, column {}: invalid value '{}'", c + 1, field(c)));
        let repeat = field(0).parse().map_err(|_| bad(0))?;
        let seed = field(1).parse().map_err(|_| bad(1))?;
        let method = field(2).parse().map_err(|_| bad(2))?;
        let coverage = parse_metric(field(3)).ok_or_else(|| bad(3))?;
        let mean_length = parse_metric(field(4)).ok_or_else(|| bad(4))?;
        let error = coverage.is_nan().then(|| "failed".to_string());
        records.push(Record { repeat, seed, method, coverage, mean_length, error });
    }
    Ok(records)
}
