//! Command orchestration: fit, detect, re-threshold, plot, and tabulate.

pub mod artifact;
pub mod cli;
pub mod svg;
pub mod text;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{self, CsvSchema, DataError, Dataset};
use crate::detect::{self, DetectError, DetectionResult, DetectorConfig, Method, Scores};
use crate::kernel::{Bandwidth, KernelError};
use crate::sim::SimError;
use crate::solver::{self, QuantileFit, SolverError};

pub use artifact::{AnalysisArtifact, DataSource, Fingerprint, Num, StoredConfig, StoredDetection, StoredFit};
pub use svg::qq_plot_svg;
pub use text::{coef_table, render_report, COEF_LEVELS};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Usage(String),
    #[error("artifact was produced by the {found} method; this command needs {expected}")]
    WrongMethod { expected: Method, found: Method },
    #[error("no fit at quantile level {0} in the artifact (was it produced with --fast?)")]
    MissingFit(f64),
    #[error("data file {path} changed since the artifact was written")]
    FingerprintMismatch { path: String },
    #[error("unsupported artifact format {0}")]
    UnsupportedFormat(u32),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("artifact JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Fit(#[from] SolverError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ReportError {
    /// 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            ReportError::Usage(_) | ReportError::WrongMethod { .. } | ReportError::MissingFit(_) => 2,
            ReportError::Detect(DetectError::InvalidConfig(_)) => 2,
            ReportError::Kernel(KernelError::InvalidBandwidth(_)) => 2,
            ReportError::Sim(SimError::InvalidConfig(_)) => 2,
            ReportError::FingerprintMismatch { .. }
            | ReportError::UnsupportedFormat(_)
            | ReportError::Malformed(_)
            | ReportError::Data(_)
            | ReportError::File { .. }
            | ReportError::Io(_)
            | ReportError::Json(_)
            | ReportError::Sim(SimError::Data(_)) => 3,
            ReportError::Fit(_) | ReportError::Detect(_) | ReportError::Kernel(_) | ReportError::Sim(_) => 4,
        }
    }
}

/// Inputs of a detection run.
#[derive(Debug, Clone)]
pub struct DetectRequest {
    pub data: PathBuf,
    pub time_col: String,
    pub status_col: String,
    pub covariates: Vec<String>,
    pub log_time: bool,
    pub config: DetectorConfig,
    pub h: f64,
    /// Fit only the levels the detector needs, skipping the coef table.
    pub fast: bool,
}

/// A finished run: the artifact plus the prepared dataset it describes.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub artifact: AnalysisArtifact,
    pub dataset: Dataset,
}

fn prepare(path: &Path, source_cols: (&str, &str, &[String]), log_time: bool) -> Result<Dataset, ReportError> {
    let (time, status, covs) = source_cols;
    let cov_refs: Vec<&str> = covs.iter().map(String::as_str).collect();
    let schema = CsvSchema::new(time, status, &cov_refs);
    let mut d = data::load_csv(path, &schema)?;
    if log_time {
        d = data::log_transform(&d)?;
    }
    Ok(data::scale_covariates(&d)?)
}

/// Reloads the dataset an artifact was built from, checking its hash first.
pub fn load_source(source: &DataSource) -> Result<Dataset, ReportError> {
    source.fingerprint.verify()?;
    prepare(
        Path::new(&source.fingerprint.path),
        (&source.time_col, &source.status_col, &source.covariates),
        source.log_time,
    )
}

/// One-line description of data and model used in report headers.
pub fn describe_source(source: &DataSource) -> String {
    let response = if source.log_time {
        format!("log({})", source.time_col)
    } else {
        source.time_col.clone()
    };
    format!(
        "{} ({response}, {} ~ {})",
        source.fingerprint.path,
        source.status_col,
        source.covariates.join(" + ")
    )
}

fn levels_for(method: Method, fast: bool) -> Vec<f64> {
    let mut levels: Vec<f64> = method.required_levels().to_vec();
    if !fast {
        levels.extend(COEF_LEVELS);
    }
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    levels
}

fn pick(fits: &[QuantileFit], tau: f64) -> Result<&QuantileFit, ReportError> {
    fits.iter()
        .find(|f| (f.tau - tau).abs() < 1e-12)
        .ok_or(ReportError::MissingFit(tau))
}

/// Runs the configured detector on fitted quantiles. For the score method
/// the second value marks rows above the fitted median.
pub fn run_detector(
    d: &Dataset,
    fits: &[QuantileFit],
    cfg: &DetectorConfig,
) -> Result<(DetectionResult, Vec<bool>), ReportError> {
    cfg.validate()?;
    Ok(match cfg.method {
        Method::Residual => (detect::detect_residual(d, pick(fits, 0.5)?, cfg)?, Vec::new()),
        Method::Boxplot => (
            detect::detect_boxplot(d, pick(fits, 0.25)?, pick(fits, 0.75)?, cfg)?,
            Vec::new(),
        ),
        Method::Score => {
            let scores = detect::outlying_scores(d, pick(fits, 0.25)?, pick(fits, 0.5)?, pick(fits, 0.75)?)?;
            (detect::detect_score(&scores, cfg.k_s), scores.upper)
        }
    })
}

pub fn cmd_detect(req: &DetectRequest) -> Result<Analysis, ReportError> {
    req.config.validate()?;
    let bw = Bandwidth::new(req.h)?;
    if req.covariates.is_empty() {
        return Err(ReportError::Usage("at least one covariate is required".into()));
    }
    let fingerprint = Fingerprint::of_file(&req.data)?;
    let d = prepare(&req.data, (&req.time_col, &req.status_col, &req.covariates), req.log_time)?;
    let fits = solver::fit_cqr_levels(&d, &levels_for(req.config.method, req.fast), bw)?;
    let (result, upper) = run_detector(&d, &fits, &req.config)?;

    let columns: Vec<String> = std::iter::once("(Intercept)".to_string())
        .chain(req.covariates.iter().cloned())
        .collect();
    let fits: BTreeMap<String, StoredFit> = fits
        .iter()
        .map(|f| (artifact::level_key(f.tau), StoredFit::new(f, &columns)))
        .collect();
    let artifact = AnalysisArtifact {
        format: artifact::ARTIFACT_FORMAT,
        version: env!("CARGO_PKG_VERSION").to_string(),
        data: DataSource {
            fingerprint,
            time_col: req.time_col.clone(),
            status_col: req.status_col.clone(),
            covariates: req.covariates.clone(),
            log_time: req.log_time,
        },
        config: StoredConfig::new(&req.config, req.h, req.fast),
        fits,
        detection: StoredDetection::new(&result, upper),
    };
    Ok(Analysis { artifact, dataset: d })
}

fn require_score(a: &AnalysisArtifact) -> Result<(), ReportError> {
    if a.detection.method != Method::Score {
        return Err(ReportError::WrongMethod {
            expected: Method::Score,
            found: a.detection.method,
        });
    }
    if a.detection.upper.len() != a.detection.evidence.len() {
        return Err(ReportError::Malformed("score artifact lacks side markers".into()));
    }
    Ok(())
}

/// Re-flags stored scores at a new threshold without refitting.
pub fn cmd_update(a: &AnalysisArtifact, k_s: f64) -> Result<Analysis, ReportError> {
    require_score(a)?;
    let mut cfg = a.config.detector();
    cfg.k_s = Some(k_s);
    cfg.validate()?;
    let dataset = load_source(&a.data)?;
    if dataset.n() != a.detection.flags.len() {
        return Err(ReportError::Malformed("artifact row count differs from the data".into()));
    }
    let det = &a.detection;
    let scores = Scores {
        values: det.evidence.iter().map(|n| n.0).collect(),
        upper: det.upper.clone(),
        clamped: det.clamped.clone(),
    };
    let result = detect::detect_score(&scores, Some(k_s));
    let mut artifact = a.clone();
    artifact.config.k_s = Some(Num(k_s));
    artifact.detection = StoredDetection::new(&result, det.upper.clone());
    Ok(Analysis { artifact, dataset })
}

/// QQ plot of the stored scores; `k_s` overrides the stored threshold.
pub fn cmd_plot(a: &AnalysisArtifact, k_s: Option<f64>) -> Result<String, ReportError> {
    require_score(a)?;
    let d = load_source(&a.data)?;
    let scores: Vec<f64> = a.detection.evidence.iter().map(|n| n.0).collect();
    if d.n() != scores.len() {
        return Err(ReportError::Malformed("artifact row count differs from the data".into()));
    }
    let threshold = k_s.or(a.config.k_s.map(|n| n.0));
    qq_plot_svg(&scores, &d.events(), threshold)
}

pub fn cmd_coef(a: &AnalysisArtifact) -> Result<String, ReportError> {
    let fits: Vec<QuantileFit> = COEF_LEVELS
        .iter()
        .map(|&t| a.fit(t).ok_or(ReportError::MissingFit(t)))
        .collect::<Result<_, _>>()?;
    coef_table(&fits, &a.data.covariates)
}

/// Report text for an analysis.
pub fn report_for(analysis: &Analysis, show_all: bool) -> String {
    render_report(
        &analysis.dataset,
        &analysis.artifact.detection.to_result(),
        &describe_source(&analysis.artifact.data),
        show_all,
    )
}

/// Writes `artifact.json`, `report.txt`, and for the score method `qq.svg`.
pub fn write_outputs(analysis: &Analysis, dir: &Path, show_all: bool) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir)?;
    analysis.artifact.save(&dir.join("artifact.json"))?;
    std::fs::write(dir.join("report.txt"), report_for(analysis, show_all))?;
    if analysis.artifact.detection.method == Method::Score {
        let det = &analysis.artifact.detection;
        let scores: Vec<f64> = det.evidence.iter().map(|n| n.0).collect();
        let svg = qq_plot_svg(&scores, &analysis.dataset.events(), analysis.artifact.config.k_s.map(|n| n.0))?;
        std::fs::write(dir.join("qq.svg"), svg)?;
    }
    Ok(())
}
