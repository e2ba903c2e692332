//! Censored survival datasets: loading, validation, and the response/covariate
//! transforms applied before fitting.
//!
//! A [`Dataset`] is immutable once built. Transforms return a new dataset so the
//! original row order (and therefore the row numbers cited in reports) is kept
//! end-to-end.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}, column `{col}`: cannot parse `{value}`")]
    UnparsableCell {
        row: usize,
        col: String,
        value: String,
    },
    #[error("row {row}: time must be strictly positive and finite")]
    NonPositiveTime { row: usize },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("response is already log-transformed")]
    AlreadyTransformed,
    #[error("at least 2 observations are required, got {0}")]
    TooFewObservations(usize),
    #[error("row {row}: expected {expected} covariates, got {got}")]
    CovariateLength {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error("{0} covariate names for {1} covariates")]
    NameCount(usize, usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scaling requires at least one covariate")]
    NoCovariates,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One observed triple: response, event indicator and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Observed response `min(T, C)`, possibly log-transformed.
    pub time: f64,
    /// `true` for an event, `false` for a censored row.
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self {
            time,
            event,
            covariates,
        }
    }

    /// Event indicator in the 0/1 encoding used by input files.
    pub fn status(&self) -> u8 {
        u8::from(self.event)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseTransform {
    Identity,
    Log,
}

impl fmt::Display for ResponseTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseTransform::Identity => f.write_str("identity"),
            ResponseTransform::Log => f.write_str("log"),
        }
    }
}

/// Min-max scaling applied to one covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub min: f64,
    pub max: f64,
    /// Zero range: every value was mapped to 0.
    pub degenerate: bool,
}

impl ColumnScaling {
    pub fn apply(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, s: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            self.min + s * (self.max - self.min)
        }
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    pub status: String,
    pub covariates: Vec<String>,
}

impl CsvSchema {
    pub fn new(time: &str, status: &str, covariates: &[&str]) -> Self {
        Self {
            time: time.to_string(),
            status: status.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    covariate_names: Vec<String>,
    response_transform: ResponseTransform,
    scaling: Option<Vec<ColumnScaling>>,
    // original covariate values, kept when `scaling` is set
    unscaled: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn new(
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let p = covariate_names.len();
        if observations.len() < 2 {
            return Err(DataError::TooFewObservations(observations.len()));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.covariates.len() != p {
                return Err(DataError::CovariateLength {
                    row: i + 1,
                    expected: p,
                    got: obs.covariates.len(),
                });
            }
            if !obs.time.is_finite() || obs.covariates.iter().any(|x| !x.is_finite()) {
                return Err(DataError::NonFinite { row: i + 1 });
            }
        }
        Ok(Self {
            observations,
            covariate_names,
            response_transform: ResponseTransform::Identity,
            scaling: None,
            unscaled: None,
        })
    }

    /// Builds a dataset whose response is already on the log scale.
    pub fn with_log_response(
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let mut d = Self::new(observations, covariate_names)?;
        d.response_transform = ResponseTransform::Log;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn observation(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn response_transform(&self) -> ResponseTransform {
        self.response_transform
    }

    pub fn scaling(&self) -> Option<&[ColumnScaling]> {
        self.scaling.as_deref()
    }

    pub fn is_scaled(&self) -> bool {
        self.scaling.is_some()
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.event).collect()
    }

    pub fn censored_count(&self) -> usize {
        self.observations.iter().filter(|o| !o.event).count()
    }

    /// Covariates of row `i` on their original measurement scale.
    pub fn raw_covariates(&self, i: usize) -> Vec<f64> {
        match &self.unscaled {
            None => self.observations[i].covariates.clone(),
            Some(raw) => raw[i].clone(),
        }
    }

    /// Maps a raw covariate vector onto the stored (scaled) axis.
    pub fn scale_point(&self, raw: &[f64]) -> Vec<f64> {
        match &self.scaling {
            None => raw.to_vec(),
            Some(sc) => raw.iter().zip(sc).map(|(&x, c)| c.apply(x)).collect(),
        }
    }

    /// Returns a copy with the response replaced, keeping everything else.
    pub fn with_times(&self, times: &[f64]) -> Result<Self, DataError> {
        if times.len() != self.n() {
            return Err(DataError::LengthMismatch {
                expected: self.n(),
                got: times.len(),
            });
        }
        let mut out = self.clone();
        for (i, (obs, &t)) in out.observations.iter_mut().zip(times).enumerate() {
            if !t.is_finite() {
                return Err(DataError::NonFinite { row: i + 1 });
            }
            obs.time = t;
        }
        Ok(out)
    }
}

fn parse_status(raw: &str, row: usize, col: &str) -> Result<bool, DataError> {
    match raw.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(DataError::UnparsableCell {
            row,
            col: col.to_string(),
            value: other.to_string(),
        }),
    }
}

fn parse_real(raw: &str, row: usize, col: &str) -> Result<f64, DataError> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::UnparsableCell {
            row,
            col: col.to_string(),
            value: raw.to_string(),
        })
}

/// Reads a headed CSV and selects the (time, status, covariates…) columns.
/// Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let time_idx = find(&schema.time)?;
    let status_idx = find(&schema.status)?;
    let cov_idx = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut observations = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |idx: usize| record.get(idx).unwrap_or("");
        let time = parse_real(cell(time_idx), row, &schema.time)?;
        if time <= 0.0 {
            return Err(DataError::NonPositiveTime { row });
        }
        let event = parse_status(cell(status_idx), row, &schema.status)?;
        let covariates = cov_idx
            .iter()
            .zip(&schema.covariates)
            .map(|(&idx, name)| parse_real(cell(idx), row, name))
            .collect::<Result<Vec<_>, _>>()?;
        observations.push(Observation::new(time, event, covariates));
    }
    if observations.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Dataset::new(observations, schema.covariates.clone())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), schema)
}

/// Writes `time,status,<covariates>` with round-trip exact decimal text.
/// Covariates are written on their original scale.
pub fn write_csv<W: Write>(d: &Dataset, writer: W, time_col: &str, status_col: &str) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![time_col.to_string(), status_col.to_string()];
    header.extend(d.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..d.n() {
        let obs = &d.observations[i];
        let mut rec = vec![format!("{}", obs.time), obs.status().to_string()];
        rec.extend(d.raw_covariates(i).iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces every time by its natural log.
pub fn log_transform(d: &Dataset) -> Result<Dataset, DataError> {
    if d.response_transform == ResponseTransform::Log {
        return Err(DataError::AlreadyTransformed);
    }
    if let Some(i) = d.observations.iter().position(|o| !(o.time > 0.0)) {
        return Err(DataError::NonPositiveTime { row: i + 1 });
    }
    let mut out = d.clone();
    for obs in &mut out.observations {
        obs.time = obs.time.ln();
    }
    out.response_transform = ResponseTransform::Log;
    Ok(out)
}

/// Min-max scales every covariate column to [0, 1].
///
/// Scaling is always computed from the original values, so applying this to an
/// already-scaled dataset reproduces the same stored values and metadata.
pub fn scale_covariates(d: &Dataset) -> Result<Dataset, DataError> {
    let p = d.p();
    if p == 0 {
        return Err(DataError::NoCovariates);
    }
    let raw: Vec<Vec<f64>> = (0..d.n()).map(|i| d.raw_covariates(i)).collect();
    let scaling: Vec<ColumnScaling> = (0..p)
        .map(|j| {
            let (min, max) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[j]), hi.max(r[j]))
            });
            ColumnScaling {
                min,
                max,
                degenerate: !(max > min),
            }
        })
        .collect();
    let mut out = d.clone();
    for (obs, r) in out.observations.iter_mut().zip(&raw) {
        for (j, x) in obs.covariates.iter_mut().enumerate() {
            // clamp guards the last-ulp overshoot of (x - min) / (max - min)
            *x = scaling[j].apply(r[j]).clamp(0.0, 1.0);
        }
    }
    out.scaling = Some(scaling);
    out.unscaled = Some(raw);
    Ok(out)
}
