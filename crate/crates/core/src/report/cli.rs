//! Argument definitions and dispatch for the `censout` binary.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::detect::{DetectorConfig, Method};
use crate::kernel::Bandwidth;
use crate::sim::{self, GridCell, SimConfig, StudyTable};

use super::{cmd_coef, cmd_detect, cmd_plot, cmd_update, report_for, write_outputs, AnalysisArtifact, DetectRequest, ReportError};

#[derive(Debug, Parser)]
#[command(name = "censout", version, about = "Outlier detection for right-censored data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit conditional quantiles and run a detector.
    Detect(DetectArgs),
    /// Re-threshold a score artifact without refitting.
    Update(UpdateArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
    /// Print the quantile coefficient table of an artifact.
    Coef(CoefArgs),
    /// Write the normal QQ plot of a score artifact.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Score,
    Boxplot,
    Residual,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Score => Method::Score,
            MethodArg::Boxplot => Method::Boxplot,
            MethodArg::Residual => Method::Residual,
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub time_col: String,
    #[arg(long)]
    pub status_col: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', required = true)]
    pub covariates: Vec<String>,
    /// Fit on the natural log of the time column.
    #[arg(long)]
    pub log_time: bool,
    #[arg(long, value_enum, default_value = "score")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1.5)]
    pub k_r: f64,
    #[arg(long, default_value_t = 1.5)]
    pub k_b: f64,
    #[arg(long)]
    pub k_s: Option<f64>,
    /// Normal quantile level of the residual scale estimate.
    #[arg(long, default_value_t = 0.75)]
    pub p_ref: f64,
    /// Kernel bandwidth on the [0, 1] covariate scale.
    #[arg(long, default_value_t = Bandwidth::DEFAULT)]
    pub h: f64,
    /// Skip the 0.10 and 0.90 fits used only by the coefficient table.
    #[arg(long)]
    pub fast: bool,
    /// List every row instead of the top six.
    #[arg(long)]
    pub all: bool,
    /// Directory for artifact.json, report.txt and qq.svg.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub k_s: f64,
    #[arg(long)]
    pub all: bool,
    /// Directory for the updated artifact, report and plot.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoefArgs {
    #[arg(long)]
    pub artifact: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Threshold line; defaults to the artifact's k_s.
    #[arg(long)]
    pub k_s: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Outlier magnitudes in noise standard deviations.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub c: Vec<f64>,
    /// Upper bounds of the uniform log censoring time.
    #[arg(long, value_delimiter = ',', default_value = "40")]
    pub censor_upper: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 2014)]
    pub seed: u64,
    #[arg(long, default_value_t = Bandwidth::DEFAULT)]
    pub h: f64,
    /// Restrict the grid to one method.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_delimiter = ',')]
    pub k_r: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub k_b: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub k_s: Vec<f64>,
    /// Directory for study.csv and study.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    /// Per-method cutoff lists; an empty list falls back to the published grid.
    pub fn grid(&self) -> Vec<GridCell> {
        let defaults = sim::default_grid();
        let mut grid = Vec::new();
        for method in Method::ALL {
            if self.method.is_some_and(|m| Method::from(m) != method) {
                continue;
            }
            let given = match method {
                Method::Residual => &self.k_r,
                Method::Boxplot => &self.k_b,
                Method::Score => &self.k_s,
            };
            if given.is_empty() {
                grid.extend(defaults.iter().filter(|g| g.method == method));
            } else {
                grid.extend(given.iter().map(|&k| GridCell::new(method, k)));
            }
        }
        grid
    }
}

pub fn run_simulate(args: &SimulateArgs) -> Result<StudyTable, ReportError> {
    let bandwidth = Bandwidth::new(args.h)?;
    let grid = args.grid();
    let mut table: Option<StudyTable> = None;
    for &censor_upper in &args.censor_upper {
        for &c in &args.c {
            let cfg = SimConfig {
                c,
                censor_upper,
                replicates: args.replicates,
                seed: args.seed,
                grid: grid.clone(),
                bandwidth,
                ..SimConfig::default()
            };
            let t = sim::run_study(&cfg)?;
            table = Some(match table {
                Some(acc) => acc.merge(t),
                None => t,
            });
        }
    }
    table.ok_or_else(|| ReportError::Usage("no scenario requested".into()))
}

/// Executes a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), ReportError> {
    match cli.command {
        Command::Detect(a) => {
            let req = DetectRequest {
                data: a.data,
                time_col: a.time_col,
                status_col: a.status_col,
                covariates: a.covariates,
                log_time: a.log_time,
                config: DetectorConfig {
                    method: a.method.into(),
                    k_r: a.k_r,
                    k_b: a.k_b,
                    k_s: a.k_s,
                    p_ref: a.p_ref,
                },
                h: a.h,
                fast: a.fast,
            };
            let analysis = cmd_detect(&req)?;
            if let Some(dir) = &a.out {
                write_outputs(&analysis, dir, a.all)?;
            }
            out.write_all(report_for(&analysis, a.all).as_bytes())?;
        }
        Command::Update(a) => {
            let artifact = AnalysisArtifact::load(&a.artifact)?;
            let analysis = cmd_update(&artifact, a.k_s)?;
            if let Some(dir) = &a.out {
                write_outputs(&analysis, dir, a.all)?;
            }
            out.write_all(report_for(&analysis, a.all).as_bytes())?;
        }
        Command::Coef(a) => {
            let artifact = AnalysisArtifact::load(&a.artifact)?;
            out.write_all(cmd_coef(&artifact)?.as_bytes())?;
        }
        Command::Plot(a) => {
            let artifact = AnalysisArtifact::load(&a.artifact)?;
            std::fs::write(&a.out, cmd_plot(&artifact, a.k_s)?)?;
        }
        Command::Simulate(a) => {
            let table = run_simulate(&a)?;
            if let Some(dir) = &a.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("study.csv"), table.to_csv())?;
                std::fs::write(dir.join("study.txt"), table.to_text())?;
            }
            out.write_all(table.to_text().as_bytes())?;
        }
    }
    Ok(())
}
