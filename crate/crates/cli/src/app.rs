//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use effort_core::bounds::{
    adaptive_excess_volume_bound, conservative_oracle_level, dkw_epsilon, effort_excess_volume_bound,
    excess_volume_bound_fixed_f, nested_length_bound, phi_closed_form, Complexity, HolderParams,
};
use effort_core::Method;

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::harness::run_synthetic;
use crate::plot::{render_boxplot, Group};
use crate::real::{load_table, run_real};
use crate::report::{format_sig, read_csv, ExperimentReport};

#[derive(Debug, Parser)]
#[command(name = "effort", version, about = "Efficiency-oriented split conformal regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Repeated experiments on a synthetic scenario.
    RunSynthetic(RunArgs),
    /// Repeated 40/40/20 splits of a CSV dataset (response in the last column).
    RunReal {
        /// Input CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a closed-form bound and check its hypotheses.
    Bounds {
        #[command(subcommand)]
        bound: BoundCommand,
    },
    /// Boxplots of one metric from one or more report CSVs.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` configuration file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report CSV; the effective configuration is written next to it with a `.config` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for repeats. Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Flags mirroring the configuration keys.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// linear | quadratic | hetero
    #[arg(long)]
    pub scenario: Option<String>,
    /// normal | mix-normal | pareto | mix-pareto
    #[arg(long)]
    pub noise: Option<String>,
    /// Comma-separated list of split-cp, split-cp-huber, effort, lw-cp, cqr, ad-effort.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sets the learning, calibration and test sizes at once.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_learn: Option<usize>,
    #[arg(long)]
    pub n_cal: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub step_scale: Option<f64>,
    #[arg(long)]
    pub step_exponent: Option<f64>,
    /// empirical | smoothed
    #[arg(long)]
    pub anchor: Option<String>,
    /// Neighbor count of the k-NN estimators, or `auto`.
    #[arg(long)]
    pub knn_k: Option<String>,
    /// auto | linear | mlp
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub redraw_theta: bool,
    #[arg(long)]
    pub center_noise: bool,
    #[arg(long)]
    pub subsplit: bool,
    #[arg(long)]
    pub outlier_frac: Option<f64>,
    #[arg(long)]
    pub outlier_mean_mult: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        let text: [(&str, Option<String>); 18] = [
            ("scenario", self.scenario.clone()),
            ("noise", self.noise.clone()),
            ("methods", self.methods.clone()),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("n_learn", self.n_learn.map(|v| v.to_string())),
            ("n_cal", self.n_cal.map(|v| v.to_string())),
            ("n_test", self.n_test.map(|v| v.to_string())),
            ("repeats", self.repeats.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("epsilon", self.epsilon.map(|v| v.to_string())),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("step_scale", self.step_scale.map(|v| v.to_string())),
            ("step_exponent", self.step_exponent.map(|v| v.to_string())),
            ("anchor", self.anchor.clone()),
            ("knn_k", self.knn_k.clone()),
            ("model", self.model.clone()),
            ("width", self.width.map(|v| v.to_string())),
        ];
        for (key, value) in text {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.redraw_theta |= self.redraw_theta;
        cfg.center_noise |= self.center_noise;
        cfg.subsplit |= self.subsplit;
        if let Some(v) = self.outlier_frac {
            cfg.outlier_frac = v;
        }
        if let Some(v) = self.outlier_mean_mult {
            cfg.outlier_mean_mult = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Length,
    Coverage,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Report CSVs produced by run-synthetic or run-real.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "length")]
    pub metric: Metric,
    #[arg(long)]
    pub title: Option<String>,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct HolderArgs {
    /// Hölder constant L.
    #[arg(long = "l")]
    pub l: f64,
    /// Hölder exponent.
    #[arg(long)]
    pub gamma: f64,
    /// Hölder radius.
    #[arg(long)]
    pub r: f64,
}

impl HolderArgs {
    fn params(&self) -> effort_core::Result<HolderParams> {
        HolderParams::new(self.l, self.gamma, self.r)
    }
}

#[derive(Debug, Clone, Copy, Args)]
#[group(required = true, multiple = false)]
pub struct ComplexityArgs {
    /// Size of a finite predictor class.
    #[arg(long)]
    pub finite_class: Option<u64>,
    /// VC dimension of the class.
    #[arg(long)]
    pub vc: Option<u64>,
    /// Rademacher complexity of the loss class.
    #[arg(long)]
    pub rademacher: Option<f64>,
}

impl ComplexityArgs {
    fn complexity(&self) -> Complexity {
        match (self.finite_class, self.vc, self.rademacher) {
            (Some(k), _, _) => Complexity::FiniteClass(k),
            (_, Some(d), _) => Complexity::VcDimension(d),
            (_, _, Some(r)) => Complexity::Rademacher(r),
            _ => unreachable!("clap requires one complexity flag"),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum BoundCommand {
    /// DKW band half-width.
    Dkw {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Uniform deviation of a predictor class.
    Phi {
        #[command(flatten)]
        complexity: ComplexityArgs,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Coverage level of the conservative oracle.
    Prop31 {
        #[arg(long)]
        n_cal: u64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Excess length for a fixed predictor.
    Cor31 {
        #[arg(long)]
        n_cal: u64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        holder: HolderArgs,
    },
    /// Excess length of the QAE-trained interval.
    Theorem1 {
        #[arg(long)]
        n_cal: u64,
        #[arg(long)]
        n_learn: u64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        holder: HolderArgs,
        #[command(flatten)]
        complexity: ComplexityArgs,
    },
    /// Length slack of a nested family with size a t + b.
    Nested {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        n_cal: u64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        holder: HolderArgs,
    },
    /// Excess length of the adaptive joint problem.
    Theorem2 {
        #[arg(long)]
        n_cal: u64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        phi: f64,
        #[arg(long)]
        psi: f64,
        #[command(flatten)]
        holder: HolderArgs,
    },
}

/// Evaluates a bound and renders its output lines.
pub fn evaluate_bound(cmd: &BoundCommand) -> Result<String, CliError> {
    let line = |name: &str, v: f64| format!("{name} = {}\n", format_sig(v));
    let mut out = match *cmd {
        BoundCommand::Dkw { n, delta } => line("dkw_epsilon", dkw_epsilon(n, delta)?),
        BoundCommand::Phi { complexity, n, delta } => line("phi", phi_closed_form(complexity.complexity(), n, delta)?),
        BoundCommand::Prop31 { n_cal, alpha, delta } => {
            let level = conservative_oracle_level(n_cal, alpha, delta)?;
            let mut s = line("oracle_level", level.level);
            s += &format!("saturated = {}\n", level.saturated);
            s += &format!("integer_rank = {}\n", level.integer_rank);
            if level.integer_rank {
                s += "warning: (n_c + 1)(1 - alpha) is an integer, so the guarantee does not apply\n";
            }
            s
        }
        BoundCommand::Cor31 { n_cal, alpha, delta, holder } => {
            line("excess_length", excess_volume_bound_fixed_f(n_cal, alpha, delta, holder.params()?)?)
        }
        BoundCommand::Theorem1 { n_cal, n_learn, alpha, delta, holder, complexity } => {
            let v = effort_excess_volume_bound(n_cal, n_learn, alpha, delta, holder.params()?, complexity.complexity())?;
            let mut s = line("calibration_term", v.calibration);
            s += &line("learning_term", v.learning);
            s += &line("excess_length", v.total);
            s += &format!("learning_dominates = {}\n", v.learning_dominates());
            s
        }
        BoundCommand::Nested { a, b, n_cal, alpha, delta, holder } => {
            line("length_slack", nested_length_bound(a, b, n_cal, alpha, delta, holder.params()?)?)
        }
        BoundCommand::Theorem2 { n_cal, delta, phi, psi, holder } => {
            line("excess_length", adaptive_excess_volume_bound(n_cal, delta, holder.params()?, phi, psi)?)
        }
    };
    out.push_str("hypotheses: satisfied\n");
    Ok(out)
}

fn build_config(base: RunConfig, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.apply_file(&text)?;
    }
    args.overrides.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Defaults of `run-real`: the adaptive methods over ten splits.
pub fn real_defaults() -> RunConfig {
    RunConfig {
        methods: vec![Method::AdEffort, Method::LocallyWeighted, Method::Cqr],
        repeats: 10,
        ..RunConfig::default()
    }
}

fn finish_run(report: &ExperimentReport, args: &RunArgs, normalize: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    if let Some(path) = &args.out {
        report.save(path)?;
    }
    if !args.quiet {
        let _ = write!(out, "{}", report.table(normalize));
    }
    for r in report.failures() {
        let _ = writeln!(
            err,
            "repeat {} {} failed: {}",
            r.repeat,
            r.method,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    Ok(if report.has_failures() { exit::PARTIAL } else { exit::OK })
}

fn plot(args: &PlotArgs) -> Result<(), CliError> {
    let mut groups = Vec::new();
    for path in &args.reports {
        let records = read_csv(path)?;
        let mut methods: Vec<Method> = Vec::new();
        for r in &records {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let prefix = if args.reports.len() > 1 { format!("{}:", file_label(path)) } else { String::new() };
        for m in methods {
            let values = records
                .iter()
                .filter(|r| r.method == m)
                .map(|r| match args.metric {
                    Metric::Length => r.mean_length,
                    Metric::Coverage => r.coverage,
                })
                .collect();
            groups.push(Group { label: format!("{prefix}{m}"), values });
        }
    }
    let title = args.title.clone().unwrap_or_else(|| match args.metric {
        Metric::Length => "mean interval length".into(),
        Metric::Coverage => "coverage".into(),
    });
    let svg = render_boxplot(&groups, &title)?;
    std::fs::write(&args.out, svg).map_err(|e| CliError::io(&args.out, e))
}

fn file_label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::RunSynthetic(args) => {
            let cfg = build_config(RunConfig::default(), &args)?;
            let report = run_synthetic(&cfg, args.jobs)?;
            finish_run(&report, &args, false, out, err)
        }
        Command::RunReal { data, run } => {
            let cfg = build_config(real_defaults(), &run)?;
            let table = load_table(&data)?;
            let report = run_real(&table, &cfg, run.jobs)?;
            finish_run(&report, &run, true, out, err)
        }
        Command::Bounds { bound } => {
            let _ = write!(out, "{}", evaluate_bound(&bound)?);
            Ok(exit::OK)
        }
        Command::Plot(args) => {
            plot(&args)?;
            Ok(exit::OK)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let rendered = e.render().to_string();
            if code == exit::OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
