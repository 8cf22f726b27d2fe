//! Command-line front end.
//!
//! Subcommands: `detect` scores a CSV file, `sweep` runs a dimension sweep on
//! simulated data, `bench` times detectors, and `plotdata` turns a JSON
//! report into long-format plot data.

pub mod input;
pub mod plot;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::evalsim::{
    dimension_sweep, time_detectors, Detector, Method, SimSpec, REFERENCE_OUTLIER_ROWS,
};
pub use input::{load_csv, read_csv};
pub use plot::{emit_plot_data, PlotKind, PlotSource};
pub use report::{
    run_detection, DetectionReport, Format, MethodName, MethodSettings, OutlierRecord, RunHeader,
};

const DEFAULT_ALPHA: f64 = 0.05;
const DEFAULT_BETA: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(
    name = "prcmpout",
    version,
    about = "Robust outlier detection for high-dimensional data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every row of a CSV file.
    Detect(DetectArgs),
    /// Mean error rates over simulated data at several dimensions.
    Sweep(SweepArgs),
    /// Median wall-clock time of detectors on one simulated data set.
    Bench(BenchArgs),
    /// Convert a JSON report into long-format plot data.
    Plotdata(PlotArgs),
}

/// Overrides for the prcmpout tuning constants.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub variance_threshold: Option<f64>,
    #[arg(long)]
    pub scale_const_s: Option<f64>,
    #[arg(long)]
    pub outlier_cut: Option<f64>,
    #[arg(long)]
    pub stage1_full_weight_fraction: Option<f64>,
    #[arg(long)]
    pub stage1_c_mad_multiplier: Option<f64>,
    #[arg(long)]
    pub stage2_m_quantile: Option<f64>,
    #[arg(long)]
    pub stage2_c_quantile: Option<f64>,
}

impl Overrides {
    fn any(&self) -> bool {
        [
            self.variance_threshold,
            self.scale_const_s,
            self.outlier_cut,
            self.stage1_full_weight_fraction,
            self.stage1_c_mad_multiplier,
            self.stage2_m_quantile,
            self.stage2_c_quantile,
        ]
        .iter()
        .any(Option::is_some)
    }

    fn apply(&self, mut cfg: DetectorConfig) -> DetectorConfig {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.variance_threshold, self.variance_threshold);
        set(&mut cfg.scale_const_s, self.scale_const_s);
        set(&mut cfg.outlier_cut, self.outlier_cut);
        set(
            &mut cfg.stage1_full_weight_fraction,
            self.stage1_full_weight_fraction,
        );
        set(
            &mut cfg.stage1_c_mad_multiplier,
            self.stage1_c_mad_multiplier,
        );
        set(&mut cfg.stage2_m_quantile, self.stage2_m_quantile);
        set(&mut cfg.stage2_c_quantile, self.stage2_c_quantile);
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value = "prcmpout")]
    pub method: MethodName,
    /// Significance level of the χ² cutoff (classical, ogk, sign2; default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// OGK reweighting quantile (default 0.9).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Skip the OGK reweighting step.
    #[arg(long)]
    pub no_reweight: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl MethodArgs {
    /// Resolves defaults and rejects options that do not apply to the method.
    pub fn resolve(&self) -> Result<MethodSettings> {
        let m = self.method;
        let reject = |opt: &str| {
            Err(Error::Config(format!(
                "{opt} does not apply to method {m:?}"
            )))
        };
        if m == MethodName::Prcmpout && self.alpha.is_some() {
            return reject("--alpha");
        }
        if m != MethodName::Prcmpout && self.overrides.any() {
            return reject("detector overrides");
        }
        if m != MethodName::Ogk && (self.beta.is_some() || self.no_reweight) {
            return reject("--beta/--no-reweight");
        }
        if self.beta.is_some() && self.no_reweight {
            return Err(Error::Config("--beta conflicts with --no-reweight".into()));
        }
        let settings = MethodSettings {
            method: m,
            alpha: (m != MethodName::Prcmpout).then(|| self.alpha.unwrap_or(DEFAULT_ALPHA)),
            beta: (m == MethodName::Ogk && !self.no_reweight)
                .then(|| self.beta.unwrap_or(DEFAULT_BETA)),
            detector: (m == MethodName::Prcmpout)
                .then(|| self.overrides.apply(DetectorConfig::default())),
        };
        if let Some(a) = settings.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        if let Some(b) = settings.beta {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("beta must lie in (0, 1), got {b}")));
            }
        }
        if let Some(cfg) = &settings.detector {
            cfg.validate()?;
        }
        Ok(settings)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// CSV file with a header row.
    pub input: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Report destination (standard output if omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write plot data for the run to this path.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

/// Simulation design shared by `sweep` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Per-coordinate mean shift of the planted outliers.
    #[arg(long, default_value_t = 1.5)]
    pub shift: f64,
    /// Covariance multiplier of the planted outliers.
    #[arg(long, default_value_t = 1.0)]
    pub scatter_factor: f64,
    /// 1-based outlier rows (default: 18 fixed rows among 100).
    #[arg(long, value_delimiter = ',')]
    pub outlier_rows: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DesignArgs {
    fn spec(&self, p: usize) -> Result<SimSpec> {
        let spec = SimSpec {
            n: self.n,
            p,
            outlier_indices: self
                .outlier_rows
                .clone()
                .unwrap_or_else(|| REFERENCE_OUTLIER_ROWS.to_vec()),
            location_shift: vec![self.shift; p],
            scatter_factor: self.scatter_factor,
            seed: self.seed,
        };
        if !self.shift.is_finite() {
            return Err(Error::Config("shift must be finite".into()));
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40")]
    pub p_values: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub replications: usize,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write sweep curves to this path.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Detectors to time; OGK runs without reweighting.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "prcmpout,ogk"
    )]
    pub methods: Vec<MethodName>,
    #[arg(long, default_value_t = 400)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// JSON report from `detect` or `sweep`.
    pub report: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Option<PlotKind>,
    #[arg(long, short)]
    pub output: PathBuf,
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let settings = args.method.resolve()?;
    let x = load_csv(&args.input)?;
    let start = Instant::now();
    let report = run_detection(
        &x,
        &args.input.display().to_string(),
        &settings,
        args.format,
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    write_output(args.output.as_deref(), &report.render()?)?;
    if let Some(path) = &args.plot_data {
        let source = PlotSource::Detection(Box::new(report.clone()));
        emit_plot_data(&source, plot::default_kind(&source), path)?;
    }
    eprintln!(
        "{:?}: {} of {} rows flagged in {elapsed:.3} s",
        settings.method, report.header.n_flagged, report.header.n
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let settings = args.method.resolve()?;
    let method = settings.to_method()?;
    let first = *args
        .p_values
        .first()
        .ok_or_else(|| Error::Config("no p values".into()))?;
    let base = args.design.spec(first)?;
    let table = dimension_sweep(&method, &args.p_values, args.replications, &base)?;
    let bytes = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            buf
        }
        Format::Json => {
            let mut s = table.to_json()?;
            s.push('\n');
            s.into_bytes()
        }
    };
    write_output(args.output.as_deref(), &bytes)?;
    if let Some(path) = &args.plot_data {
        emit_plot_data(
            &PlotSource::Sweep(table.clone()),
            PlotKind::SweepCurves,
            path,
        )?;
    }
    let failures: usize = table.rows.iter().map(|r| r.failures).sum();
    eprintln!(
        "{} dimensions, {failures} failed replications",
        table.rows.len()
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let spec = args.design.spec(args.p)?;
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|&m| match m {
            MethodName::Prcmpout => Method::Prcmpout(DetectorConfig::default()),
            MethodName::Classical => Method::Classical {
                alpha: DEFAULT_ALPHA,
            },
            MethodName::Ogk => Method::Ogk {
                alpha: DEFAULT_ALPHA,
                beta: None,
            },
            MethodName::Sign2 => Method::Sign2 {
                alpha: DEFAULT_ALPHA,
            },
        })
        .collect();
    let handles: Vec<&dyn Detector> = methods.iter().map(|m| m as &dyn Detector).collect();
    let rows = time_detectors(&handles, &spec, args.repeats)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["detector", "n", "p", "repeats", "median_seconds"])?;
    for r in &rows {
        w.write_record([
            r.detector.clone(),
            spec.n.to_string(),
            spec.p.to_string(),
            r.runs.len().to_string(),
            crate::evalsim::fmt_f64(r.median_seconds),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_output(args.output.as_deref(), &bytes)
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", args.report.display())))?;
    let source = PlotSource::from_json(&text)?;
    let kind = args.kind.unwrap_or_else(|| plot::default_kind(&source));
    emit_plot_data(&source, kind, &args.output)
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Plotdata(a) => cmd_plot(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 4,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
