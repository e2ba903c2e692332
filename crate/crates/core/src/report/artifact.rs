//! JSON analysis artifact.
//!
//! Every real number is written as a decimal string with 17 significant
//! digits, which round-trips any `f64` exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::detect::{Cutoff, DetectionResult, DetectorConfig, Method};
use crate::solver::{FitDiagnostics, QuantileFit};

use super::ReportError;

pub const ARTIFACT_FORMAT: u32 = 1;

/// An `f64` serialized as a 17-significant-digit decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{:.16e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse::<f64>()
            .map(Num)
            .map_err(|_| de::Error::custom(format!("not a decimal number: {text:?}")))
    }
}

fn nums(values: &[f64]) -> Vec<Num> {
    values.iter().copied().map(Num).collect()
}

fn floats(values: &[Num]) -> Vec<f64> {
    values.iter().map(|n| n.0).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub path: String,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of_file(path: &Path) -> Result<Self, ReportError> {
        let bytes = std::fs::read(path).map_err(|source| ReportError::File {
            path: path.to_string_lossy().into_owned(),
            source,
        })?;
        Ok(Self {
            path: path.to_string_lossy().into_owned(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }

    /// Re-hashes the file and fails if its content changed.
    pub fn verify(&self) -> Result<(), ReportError> {
        let now = Self::of_file(Path::new(&self.path))?;
        if now.sha256 != self.sha256 {
            return Err(ReportError::FingerprintMismatch {
                path: self.path.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub fingerprint: Fingerprint,
    pub time_col: String,
    pub status_col: String,
    pub covariates: Vec<String>,
    pub log_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub method: Method,
    pub k_r: Num,
    pub k_b: Num,
    pub k_s: Option<Num>,
    pub p_ref: Num,
    pub h: Num,
    pub fast: bool,
}

impl StoredConfig {
    pub fn new(cfg: &DetectorConfig, h: f64, fast: bool) -> Self {
        Self {
            method: cfg.method,
            k_r: Num(cfg.k_r),
            k_b: Num(cfg.k_b),
            k_s: cfg.k_s.map(Num),
            p_ref: Num(cfg.p_ref),
            h: Num(h),
            fast,
        }
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            method: self.method,
            k_r: self.k_r.0,
            k_b: self.k_b.0,
            k_s: self.k_s.map(|n| n.0),
            p_ref: self.p_ref.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFit {
    pub tau: Num,
    pub columns: Vec<String>,
    pub beta: Vec<Num>,
    pub objective: Num,
    pub pseudo_value: Option<Num>,
    pub diagnostics: FitDiagnostics,
}

impl StoredFit {
    pub fn new(fit: &QuantileFit, columns: &[String]) -> Self {
        Self {
            tau: Num(fit.tau),
            columns: columns.to_vec(),
            beta: nums(&fit.beta),
            objective: Num(fit.objective),
            pseudo_value: fit.pseudo_value.map(Num),
            diagnostics: fit.diagnostics.clone(),
        }
    }

    pub fn to_fit(&self) -> QuantileFit {
        QuantileFit {
            tau: self.tau.0,
            beta: floats(&self.beta),
            objective: self.objective.0,
            pseudo_value: self.pseudo_value.map(|n| n.0),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoredCutoff {
    Residual { k_r: Num, sigma: Num, threshold: Num },
    Boxplot { k_b: Num },
    Score { k_s: Option<Num> },
}

impl From<Cutoff> for StoredCutoff {
    fn from(c: Cutoff) -> Self {
        match c {
            Cutoff::Residual { k_r, sigma, threshold } => StoredCutoff::Residual {
                k_r: Num(k_r),
                sigma: Num(sigma),
                threshold: Num(threshold),
            },
            Cutoff::Boxplot { k_b } => StoredCutoff::Boxplot { k_b: Num(k_b) },
            Cutoff::Score { k_s } => StoredCutoff::Score { k_s: k_s.map(Num) },
        }
    }
}

impl From<StoredCutoff> for Cutoff {
    fn from(c: StoredCutoff) -> Self {
        match c {
            StoredCutoff::Residual { k_r, sigma, threshold } => Cutoff::Residual {
                k_r: k_r.0,
                sigma: sigma.0,
                threshold: threshold.0,
            },
            StoredCutoff::Boxplot { k_b } => Cutoff::Boxplot { k_b: k_b.0 },
            StoredCutoff::Score { k_s } => Cutoff::Score { k_s: k_s.map(|n| n.0) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDetection {
    pub method: Method,
    pub cutoff: StoredCutoff,
    pub n_outliers: usize,
    pub flags: Vec<bool>,
    pub evidence: Vec<Num>,
    pub clamped: Vec<usize>,
    /// Score method only: rows above the fitted median, the only ones that
    /// can be flagged.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub upper: Vec<bool>,
}

impl StoredDetection {
    pub fn new(result: &DetectionResult, upper: Vec<bool>) -> Self {
        Self {
            method: result.method,
            cutoff: result.cutoff.into(),
            n_outliers: result.n_outliers,
            flags: result.flags.clone(),
            evidence: nums(&result.evidence),
            clamped: result.clamped.clone(),
            upper,
        }
    }

    pub fn to_result(&self) -> DetectionResult {
        DetectionResult {
            method: self.method,
            flags: self.flags.clone(),
            evidence: floats(&self.evidence),
            cutoff: self.cutoff.into(),
            n_outliers: self.n_outliers,
            clamped: self.clamped.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisArtifact {
    pub format: u32,
    pub version: String,
    pub data: DataSource,
    pub config: StoredConfig,
    /// Keyed by the level printed with two decimals, e.g. `"0.25"`.
    pub fits: BTreeMap<String, StoredFit>,
    pub detection: StoredDetection,
}

pub fn level_key(tau: f64) -> String {
    format!("{tau:.2}")
}

impl AnalysisArtifact {
    pub fn fit(&self, tau: f64) -> Option<QuantileFit> {
        self.fits.get(&level_key(tau)).map(StoredFit::to_fit)
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let a: Self = serde_json::from_str(text)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(ReportError::UnsupportedFormat(a.format));
        }
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::File {
            path: path.to_string_lossy().into_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
