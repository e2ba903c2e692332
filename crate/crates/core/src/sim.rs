//! Monte Carlo harness for the heteroscedastic censored design with planted
//! upper outliers, plus a synthetic clinical-style cohort generator.
//!
//! Every replicate draws from ChaCha streams keyed by `(seed, replicate,
//! purpose)`, so a replicate's data do not depend on which thread runs it or
//! in which order.

use std::fmt::Write as _;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{scale_covariates, DataError, Dataset, Observation};
use crate::detect::{self, DetectError, Method};
use crate::kernel::Bandwidth;
use crate::normal;
use crate::solver::{self, SolverError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("flag vector has {flags} entries, truth has {truth}")]
    LengthMismatch { flags: usize, truth: usize },
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] SolverError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub method: Method,
    pub cutoff: f64,
}

impl GridCell {
    pub fn new(method: Method, cutoff: f64) -> Self {
        Self { method, cutoff }
    }
}

/// Cutoff grid of the published study.
pub fn default_grid() -> Vec<GridCell> {
    let mut grid = Vec::new();
    grid.extend([1.0, 1.5, 2.0, 3.0].map(|k| GridCell::new(Method::Residual, k)));
    grid.extend([0.5, 1.0, 1.5, 2.0].map(|k| GridCell::new(Method::Boxplot, k)));
    grid.extend([2.0, 3.0, 4.0].map(|k| GridCell::new(Method::Score, k)));
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_clean: usize,
    pub n_outlier: usize,
    pub beta0: f64,
    pub beta1: f64,
    /// Outlier shift in units of the row's noise standard deviation.
    pub c: f64,
    /// Log censoring times are uniform on `(0, censor_upper)`.
    pub censor_upper: f64,
    pub replicates: usize,
    pub seed: u64,
    pub grid: Vec<GridCell>,
    pub bandwidth: Bandwidth,
    /// Normal quantile level for the residual scale estimate.
    pub p_ref: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_clean: 480,
            n_outlier: 20,
            beta0: 10.0,
            beta1: -0.3,
            c: 3.0,
            censor_upper: 40.0,
            replicates: 100,
            seed: 2014,
            grid: default_grid(),
            bandwidth: Bandwidth::default(),
            p_ref: 0.75,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_clean == 0 || self.n_outlier == 0 || self.replicates == 0 {
            return Err(SimError::InvalidConfig(
                "n_clean, n_outlier and replicates must be at least 1".into(),
            ));
        }
        if !(self.censor_upper > 0.0) || !(self.c > 0.0) {
            return Err(SimError::InvalidConfig("censor_upper and c must be positive".into()));
        }
        if self.grid.iter().any(|g| !(g.cutoff > 0.0)) {
            return Err(SimError::InvalidConfig("cutoffs must be positive".into()));
        }
        Ok(())
    }

    /// Union of quantile levels needed by the grid, ascending.
    fn levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = self
            .grid
            .iter()
            .flat_map(|g| g.method.required_levels().iter().copied())
            .collect();
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup();
        levels
    }
}

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Covariate = 0,
    Noise = 1,
    Censor = 2,
}

fn stream(seed: u64, replicate: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 * 3 + purpose as u64);
    rng
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    normal::inverse_cdf(u)
}

/// Noise standard deviation at covariate value `x`: `sqrt(exp(3 - x/8))`.
pub fn noise_sd(x: f64) -> f64 {
    ((3.0 - x / 8.0) / 2.0).exp()
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    /// Log-scale responses; covariate scaled to [0, 1].
    pub dataset: Dataset,
    /// `true` for planted outliers.
    pub truth: Vec<bool>,
    /// Fraction of clean rows that are censored.
    pub censoring_rate: f64,
}

pub fn generate_dataset(cfg: &SimConfig, replicate: usize) -> Result<SimulatedData, SimError> {
    let mut cov_rng = stream(cfg.seed, replicate, Purpose::Covariate);
    let mut noise_rng = stream(cfg.seed, replicate, Purpose::Noise);
    let mut censor_rng = stream(cfg.seed, replicate, Purpose::Censor);
    let n = cfg.n_clean + cfg.n_outlier;
    let mut obs = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut censored = 0usize;
    for i in 0..n {
        let x = f64::from(cov_rng.gen_range(1..=20u32));
        let sd = noise_sd(x);
        let eps = sd * standard_normal(&mut noise_rng);
        let center = cfg.beta0 + cfg.beta1 * x;
        if i < cfg.n_clean {
            let log_t = center + eps;
            let u: f64 = censor_rng.sample(Open01);
            let log_c = cfg.censor_upper * u;
            let event = log_t <= log_c;
            if !event {
                censored += 1;
            }
            obs.push(Observation::new(log_t.min(log_c), event, vec![x]));
            truth.push(false);
        } else {
            let log_t = center + cfg.c * sd + eps.max(0.0);
            obs.push(Observation::new(log_t, true, vec![x]));
            truth.push(true);
        }
    }
    let d = Dataset::with_log_response(obs, vec!["x".into()])?;
    Ok(SimulatedData {
        dataset: scale_covariates(&d)?,
        truth,
        censoring_rate: censored as f64 / cfg.n_clean as f64,
    })
}

/// Confusion counts for one replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn metrics(&self) -> SimMetrics {
        SimMetrics::from_means(self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64, 1)
    }
}

pub fn evaluate_detection(flags: &[bool], truth: &[bool]) -> Result<Confusion, SimError> {
    if flags.len() != truth.len() {
        return Err(SimError::LengthMismatch {
            flags: flags.len(),
            truth: truth.len(),
        });
    }
    let mut c = Confusion::default();
    for (&f, &t) in flags.iter().zip(truth) {
        match (f, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Replicate-averaged detection accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
    pub n_selected: f64,
    pub replicates_used: usize,
}

impl SimMetrics {
    pub fn from_means(tp: f64, fp: f64, tn: f64, fn_: f64, replicates_used: usize) -> Self {
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Self {
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            tp,
            fp,
            tn,
            fn_,
            n_selected: tp + fp,
            replicates_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub c: f64,
    pub censor_upper: f64,
    pub method: Method,
    pub cutoff: f64,
    pub metrics: SimMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// Per scenario `(c, censor_upper, mean censoring rate among clean rows)`.
    pub censoring: Vec<(f64, f64, f64)>,
    /// Replicates excluded because fitting or detection failed.
    pub failures: usize,
}

struct ReplicateOutcome {
    confusions: Vec<Confusion>,
    censoring_rate: f64,
}

fn run_replicate(cfg: &SimConfig, replicate: usize, levels: &[f64]) -> Result<ReplicateOutcome, SimError> {
    let sim = generate_dataset(cfg, replicate)?;
    let d = &sim.dataset;
    let fits = solver::fit_cqr_levels(d, levels, cfg.bandwidth)?;
    let quantiles_at = |tau: f64| -> Result<Vec<f64>, SimError> {
        let fit = fits
            .iter()
            .find(|f| (f.tau - tau).abs() < 1e-12)
            .expect("level fitted");
        Ok(detect::fitted_quantiles(d, fit)?)
    };
    let times = d.times();
    let need = |m: Method| cfg.grid.iter().any(|g| g.method == m);
    let residuals = if need(Method::Residual) {
        let q50 = quantiles_at(0.5)?;
        Some(times.iter().zip(&q50).map(|(y, q)| y - q).collect::<Vec<f64>>())
    } else {
        None
    };
    let quartiles = if need(Method::Boxplot) || need(Method::Score) {
        Some((quantiles_at(0.25)?, quantiles_at(0.75)?))
    } else {
        None
    };
    let scores = if need(Method::Score) {
        let (q25, q75) = quartiles.as_ref().expect("computed above");
        Some(detect::score_values(&times, q25, &quantiles_at(0.5)?, q75))
    } else {
        None
    };

    let mut confusions = Vec::with_capacity(cfg.grid.len());
    for cell in &cfg.grid {
        let result = match cell.method {
            Method::Residual => {
                detect::residual_rule(residuals.as_ref().expect("computed"), cell.cutoff, cfg.p_ref)?
            }
            Method::Boxplot => {
                let (q25, q75) = quartiles.as_ref().expect("computed");
                detect::boxplot_rule(&times, q25, q75, cell.cutoff)
            }
            Method::Score => detect::detect_score(scores.as_ref().expect("computed"), Some(cell.cutoff)),
        };
        confusions.push(evaluate_detection(&result.flags, &sim.truth)?);
    }
    Ok(ReplicateOutcome {
        confusions,
        censoring_rate: sim.censoring_rate,
    })
}

/// Runs every replicate of one scenario and averages per grid cell.
pub fn run_study(cfg: &SimConfig) -> Result<StudyTable, SimError> {
    cfg.validate()?;
    let levels = cfg.levels();
    let outcomes: Vec<Result<ReplicateOutcome, SimError>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r, &levels))
        .collect();

    let mut sums = vec![[0usize; 4]; cfg.grid.len()];
    let mut used = 0usize;
    let mut failures = 0usize;
    let mut censoring_sum = 0.0;
    for outcome in &outcomes {
        match outcome {
            Ok(o) => {
                used += 1;
                censoring_sum += o.censoring_rate;
                for (s, c) in sums.iter_mut().zip(&o.confusions) {
                    s[0] += c.tp;
                    s[1] += c.fp;
                    s[2] += c.tn;
                    s[3] += c.fn_;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let denom = used.max(1) as f64;
    let rows = cfg
        .grid
        .iter()
        .zip(&sums)
        .map(|(cell, s)| StudyRow {
            c: cfg.c,
            censor_upper: cfg.censor_upper,
            method: cell.method,
            cutoff: cell.cutoff,
            metrics: SimMetrics::from_means(
                s[0] as f64 / denom,
                s[1] as f64 / denom,
                s[2] as f64 / denom,
                s[3] as f64 / denom,
                used,
            ),
        })
        .collect();
    Ok(StudyTable {
        rows,
        censoring: vec![(cfg.c, cfg.censor_upper, censoring_sum / denom)],
        failures,
    })
}

impl StudyTable {
    pub fn merge(mut self, other: StudyTable) -> StudyTable {
        self.rows.extend(other.rows);
        self.censoring.extend(other.censoring);
        self.failures += other.failures;
        self
    }

    pub fn row(&self, c: f64, censor_upper: f64, method: Method, cutoff: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| {
            r.c == c && r.censor_upper == censor_upper && r.method == method && r.cutoff == cutoff
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "c,censor_upper,method,cutoff,accuracy,sensitivity,specificity,tp,fp,tn,fn,n_selected,replicates_used\n",
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.c,
                r.censor_upper,
                r.method,
                r.cutoff,
                m.accuracy,
                m.sensitivity,
                m.specificity,
                m.tp,
                m.fp,
                m.tn,
                m.fn_,
                m.n_selected,
                m.replicates_used
            );
        }
        out
    }

    /// Aligned text layout: one block per scenario, one line per cutoff.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let rule = "-".repeat(94);
        let mut scenario: Option<(f64, f64)> = None;
        for r in &self.rows {
            if scenario != Some((r.c, r.censor_upper)) {
                scenario = Some((r.c, r.censor_upper));
                let rate = self
                    .censoring
                    .iter()
                    .find(|s| s.0 == r.c && s.1 == r.censor_upper)
                    .map_or(f64::NAN, |s| s.2);
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(
                    out,
                    "c = {} sigma, log C ~ U(0, {}), mean censoring rate {:.3}, replicates {}",
                    r.c, r.censor_upper, rate, r.metrics.replicates_used
                );
                let _ = writeln!(out, "{rule}");
                let _ = writeln!(
                    out,
                    "{:<10} {:>5} {:>9} {:>12} {:>12} {:>7} {:>7} {:>7} {:>7} {:>10}",
                    "Algorithm", "k", "Accuracy", "Sensitivity", "Specificity", "TP", "FP", "TN", "FN", "#Selected"
                );
                let _ = writeln!(out, "{rule}");
            }
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{:<10} {:>5.1} {:>9.3} {:>12.3} {:>12.3} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>10.1}",
                r.method.to_string(),
                r.cutoff,
                m.accuracy,
                m.sensitivity,
                m.specificity,
                m.tp,
                m.fp,
                m.tn,
                m.fn_,
                m.n_selected
            );
        }
        if self.failures > 0 {
            let _ = writeln!(out, "\n{} replicate(s) failed and were excluded", self.failures);
        }
        out
    }
}

/// One row of the synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub id: u64,
    pub meta: u32,
    pub exam: u32,
    pub status: u8,
    pub time: u32,
    pub ratio: f64,
}

/// Seed of the bundled `data/cohort.csv`.
pub const COHORT_SEED: u64 = 8;

/// Rows (0-based) that receive planted long survivors.
pub const COHORT_PLANTED: [usize; 2] = [345, 326];

/// A 402-patient cohort with survival in months, a metastatic node count
/// (`meta`) as covariate, and two planted long survivors.
pub fn synthetic_cohort(seed: u64) -> Vec<CohortRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 402;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let meta: u32 = if rng.gen::<f64>() < 0.55 {
            0
        } else {
            let u: f64 = rng.sample(Open01);
            (1.0 - 3.0 * u.ln()).floor().min(30.0) as u32
        };
        let exam = meta + rng.gen_range(1..=20u32);
        // light-tailed noise: normal truncated to +/- 2 sd
        let z = loop {
            let z = standard_normal(&mut rng);
            if z.abs() <= 2.0 {
                break z;
            }
        };
        let log_t = 3.3 - 0.09 * f64::from(meta) + 1.1 * z;
        let t = log_t.exp().ceil().max(1.0);
        // administrative censoring after at least one year of follow-up
        let c = rng.gen_range(12.0..240.0f64).ceil();
        let (time, status) = if t <= c { (t, 1) } else { (c, 0) };
        rows.push(CohortRow {
            id: 10_000_000 + rng.gen_range(0..90_000_000u64),
            meta,
            exam,
            status,
            time: time as u32,
            ratio: f64::from(meta) / f64::from(exam),
        });
    }
    let planted = [(COHORT_PLANTED[0], 9u32, 0u8, 160u32), (COHORT_PLANTED[1], 13, 1, 110)];
    for (idx, meta, status, time) in planted {
        let r = &mut rows[idx];
        r.meta = meta;
        r.exam = r.exam.max(meta + 1);
        r.status = status;
        r.time = time;
        r.ratio = f64::from(meta) / f64::from(r.exam);
    }
    rows
}

pub fn cohort_csv(rows: &[CohortRow]) -> String {
    let mut out = String::from("id,meta,exam,status,time,ratio\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{:.7}", r.id, r.meta, r.exam, r.status, r.time, r.ratio);
    }
    out
}
