//! Residual-based, boxplot, and scoring outlier detectors.
//!
//! All three flag only unusually *large* responses: small observed times are
//! expected under censoring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::normal;
use crate::solver::QuantileFit;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("all residuals are zero; scale estimate is 0")]
    ZeroSpread,
    #[error("empty residual vector")]
    Empty,
    #[error("expected a fit at tau = {expected}, got {got}")]
    WrongLevel { expected: f64, got: f64 },
    #[error("invalid detector setting: {0}")]
    InvalidConfig(String),
    #[error("fit has {got} coefficients, data needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Residual,
    Boxplot,
    Score,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Residual, Method::Boxplot, Method::Score];

    /// Quantile levels the method needs.
    pub fn required_levels(self) -> &'static [f64] {
        match self {
            Method::Residual => &[0.5],
            Method::Boxplot => &[0.25, 0.75],
            Method::Score => &[0.25, 0.5, 0.75],
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::Residual => "Residual-based algorithm",
            Method::Boxplot => "Boxplot algorithm",
            Method::Score => "Scoring algorithm",
        }
    }

    pub fn cutoff_name(self) -> &'static str {
        match self {
            Method::Residual => "k_r",
            Method::Boxplot => "k_b",
            Method::Score => "k_s",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Residual => "residual",
            Method::Boxplot => "boxplot",
            Method::Score => "score",
        })
    }
}

impl FromStr for Method {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "residual" => Ok(Method::Residual),
            "boxplot" => Ok(Method::Boxplot),
            "score" => Ok(Method::Score),
            other => Err(DetectError::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub method: Method,
    pub k_r: f64,
    pub k_b: f64,
    pub k_s: Option<f64>,
    /// Normal quantile level used to turn the median absolute residual into a
    /// scale estimate.
    pub p_ref: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            method: Method::Score,
            k_r: 1.5,
            k_b: 1.5,
            k_s: None,
            p_ref: 0.75,
        }
    }
}

impl DetectorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.k_r) {
            return Err(DetectError::InvalidConfig(format!("k_r = {}", self.k_r)));
        }
        if !positive(self.k_b) {
            return Err(DetectError::InvalidConfig(format!("k_b = {}", self.k_b)));
        }
        if let Some(k) = self.k_s {
            if !positive(k) {
                return Err(DetectError::InvalidConfig(format!("k_s = {k}")));
            }
        }
        if !(self.p_ref > 0.5 && self.p_ref < 1.0) {
            return Err(DetectError::InvalidConfig(format!("p_ref = {}", self.p_ref)));
        }
        Ok(())
    }

    /// Cutoff value of the configured method (`None` for an undecided score
    /// threshold).
    pub fn cutoff(&self) -> Option<f64> {
        match self.method {
            Method::Residual => Some(self.k_r),
            Method::Boxplot => Some(self.k_b),
            Method::Score => self.k_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Cutoff {
    Residual { k_r: f64, sigma: f64, threshold: f64 },
    Boxplot { k_b: f64 },
    Score { k_s: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub method: Method,
    pub flags: Vec<bool>,
    /// Residuals, upper fences, or scores, indexed by row.
    pub evidence: Vec<f64>,
    pub cutoff: Cutoff,
    pub n_outliers: usize,
    /// Rows where a crossing or coincident-quantile guard fired.
    pub clamped: Vec<usize>,
}

impl DetectionResult {
    fn new(method: Method, flags: Vec<bool>, evidence: Vec<f64>, cutoff: Cutoff, clamped: Vec<usize>) -> Self {
        let n_outliers = flags.iter().filter(|&&f| f).count();
        Self {
            method,
            flags,
            evidence,
            cutoff,
            n_outliers,
            clamped,
        }
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Median with the midpoint convention for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `median|r_i| / Φ⁻¹(p_ref)`.
pub fn estimate_sigma(residuals: &[f64], p_ref: f64) -> Result<f64, DetectError> {
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let m = median(&abs).ok_or(DetectError::Empty)?;
    if abs.iter().all(|&a| a == 0.0) {
        return Err(DetectError::ZeroSpread);
    }
    Ok(m / normal::inverse_cdf(p_ref))
}

fn check_level(fit: &QuantileFit, tau: f64) -> Result<(), DetectError> {
    if (fit.tau - tau).abs() > 1e-12 {
        Err(DetectError::WrongLevel {
            expected: tau,
            got: fit.tau,
        })
    } else {
        Ok(())
    }
}

/// Fitted conditional quantile at every row (original covariate scale).
pub fn fitted_quantiles(d: &Dataset, fit: &QuantileFit) -> Result<Vec<f64>, DetectError> {
    (0..d.n())
        .map(|i| {
            fit.predict(&d.raw_covariates(i))
                .map_err(|_| DetectError::DimensionMismatch {
                    expected: d.p() + 1,
                    got: fit.beta.len(),
                })
        })
        .collect()
}

/// Flags `r_i > k_r σ̂` given residuals; a zero scale flags any positive
/// residual.
pub fn residual_rule(residuals: &[f64], k_r: f64, p_ref: f64) -> Result<DetectionResult, DetectError> {
    let sigma = match estimate_sigma(residuals, p_ref) {
        Ok(s) => s,
        Err(DetectError::ZeroSpread) => 0.0,
        Err(e) => return Err(e),
    };
    let threshold = k_r * sigma;
    let flags = residuals.iter().map(|&r| r > threshold).collect();
    Ok(DetectionResult::new(
        Method::Residual,
        flags,
        residuals.to_vec(),
        Cutoff::Residual { k_r, sigma, threshold },
        Vec::new(),
    ))
}

pub fn detect_residual(d: &Dataset, fit50: &QuantileFit, cfg: &DetectorConfig) -> Result<DetectionResult, DetectError> {
    cfg.validate()?;
    check_level(fit50, 0.5)?;
    let q50 = fitted_quantiles(d, fit50)?;
    let residuals: Vec<f64> = d.times().iter().zip(&q50).map(|(y, q)| y - q).collect();
    residual_rule(&residuals, cfg.k_r, cfg.p_ref)
}

/// Upper-fence rule given per-row quartile predictions.
pub fn boxplot_rule(times: &[f64], q25: &[f64], q75: &[f64], k_b: f64) -> DetectionResult {
    let mut clamped = Vec::new();
    let mut fences = Vec::with_capacity(times.len());
    for (i, (&lo, &hi)) in q25.iter().zip(q75).enumerate() {
        let mut iqr = hi - lo;
        if iqr < 0.0 {
            iqr = 0.0;
            clamped.push(i);
        }
        fences.push(hi + k_b * iqr);
    }
    let flags = times.iter().zip(&fences).map(|(y, uf)| y > uf).collect();
    DetectionResult::new(Method::Boxplot, flags, fences, Cutoff::Boxplot { k_b }, clamped)
}

pub fn detect_boxplot(
    d: &Dataset,
    fit25: &QuantileFit,
    fit75: &QuantileFit,
    cfg: &DetectorConfig,
) -> Result<DetectionResult, DetectError> {
    cfg.validate()?;
    check_level(fit25, 0.25)?;
    check_level(fit75, 0.75)?;
    let q25 = fitted_quantiles(d, fit25)?;
    let q75 = fitted_quantiles(d, fit75)?;
    Ok(boxplot_rule(&d.times(), &q25, &q75, cfg.k_b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub values: Vec<f64>,
    /// `true` where `Y > Q50`; only these rows can be flagged.
    pub upper: Vec<bool>,
    /// Rows whose denominator was replaced by the guard value.
    pub clamped: Vec<usize>,
}

/// Scores from per-row quartile predictions.
///
/// A denominator smaller than `1e-8 (max Y - min Y)` (including a negative one
/// from quantile crossing) is replaced by that guard value.
pub fn score_values(times: &[f64], q25: &[f64], q50: &[f64], q75: &[f64]) -> Scores {
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    let range = hi - lo;
    let eps = if range > 0.0 { 1e-8 * range } else { 1e-8 };
    let mut clamped = Vec::new();
    let upper: Vec<bool> = times.iter().zip(q50).map(|(y, q)| y > q).collect();
    let values = times
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let (num, mut den) = if upper[i] {
                (y - q50[i], q75[i] - q50[i])
            } else {
                (q50[i] - y, q50[i] - q25[i])
            };
            if den < eps {
                den = eps;
                clamped.push(i);
            }
            num / den
        })
        .collect();
    Scores { values, upper, clamped }
}

pub fn outlying_scores(
    d: &Dataset,
    fit25: &QuantileFit,
    fit50: &QuantileFit,
    fit75: &QuantileFit,
) -> Result<Scores, DetectError> {
    check_level(fit25, 0.25)?;
    check_level(fit50, 0.5)?;
    check_level(fit75, 0.75)?;
    let q25 = fitted_quantiles(d, fit25)?;
    let q50 = fitted_quantiles(d, fit50)?;
    let q75 = fitted_quantiles(d, fit75)?;
    Ok(score_values(&d.times(), &q25, &q50, &q75))
}

/// Flags `s_i > k_s` on the upper side (`Y > Q50`); low responses, which
/// censoring produces routinely, are scored but never flagged. Without a
/// threshold nothing is flagged yet.
pub fn detect_score(scores: &Scores, k_s: Option<f64>) -> DetectionResult {
    let flags = match k_s {
        Some(k) => scores
            .values
            .iter()
            .zip(&scores.upper)
            .map(|(&s, &up)| up && s > k)
            .collect(),
        None => vec![false; scores.values.len()],
    };
    DetectionResult::new(
        Method::Score,
        flags,
        scores.values.clone(),
        Cutoff::Score { k_s },
        scores.clamped.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_INV_075: f64 = 0.674_489_750_196_081_7;

    #[test]
    fn sigma_examples() {
        let s = estimate_sigma(&[-1.0, 0.0, 1.0, 2.0], 0.75).unwrap();
        assert!((s - 1.482_60).abs() < 1e-5);
        assert_eq!(estimate_sigma(&[0.0, 0.0], 0.75), Err(DetectError::ZeroSpread));
        let s = estimate_sigma(&[-3.0; 5], 0.75).unwrap();
        assert!((s - 3.0 / PHI_INV_075).abs() < 1e-12);
        assert_eq!(estimate_sigma(&[], 0.75), Err(DetectError::Empty));
    }

    #[test]
    fn residual_rule_flags_large_only() {
        let res = residual_rule(&[0.1, -0.2, 5.0], 1.5, 0.75).unwrap();
        assert_eq!(res.flags, vec![false, false, true]);
        match res.cutoff {
            Cutoff::Residual { sigma, threshold, .. } => {
                assert!((sigma - 0.2 / PHI_INV_075).abs() < 1e-12);
                assert!((threshold - 0.4448).abs() < 1e-4);
            }
            _ => unreachable!(),
        }
        let res = residual_rule(&[0.0; 4], 1.5, 0.75).unwrap();
        assert_eq!(res.n_outliers, 0);
        // zero spread flags any positive residual
        let res = residual_rule(&[0.0, 0.0, 0.0, 0.3], 1.5, 0.75).unwrap();
        assert_eq!(res.flags, vec![false, false, false, true]);
    }

    #[test]
    fn boxplot_fence_and_crossing() {
        let r = boxplot_rule(&[7.0, 5.9], &[1.0, 1.0], &[3.0, 3.0], 1.5);
        assert_eq!(r.evidence, vec![6.0, 6.0]);
        assert_eq!(r.flags, vec![true, false]);

        let r = boxplot_rule(&[0.95], &[1.0], &[0.9], 1.5);
        assert_eq!(r.evidence, vec![0.9]);
        assert_eq!(r.clamped, vec![0]);
        assert!(r.flags[0]);
    }

    #[test]
    fn score_branches() {
        let times = [5.0, 2.0, 0.0, 10.0];
        let s = score_values(&times, &[1.0; 4], &[2.0; 4], &[3.0; 4]);
        assert_eq!(s.values, vec![3.0, 0.0, 2.0, 8.0]);
        assert_eq!(s.upper, vec![true, false, false, true]);
        assert!(s.clamped.is_empty());
    }

    #[test]
    fn score_guard_on_coincident_quantiles() {
        let times = [3.0, 0.0];
        let s = score_values(&times, &[1.0; 2], &[2.0; 2], &[2.0; 2]);
        assert_eq!(s.clamped, vec![0]);
        assert!((s.values[0] - 1.0 / 3e-8).abs() < 1e-3);
        assert!(s.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn score_threshold() {
        let scores = Scores {
            values: vec![4.59, 4.54, 2.52, 2.35, 2.11, 1.95],
            upper: vec![true; 6],
            clamped: vec![],
        };
        let r = detect_score(&scores, Some(4.0));
        assert_eq!(r.flagged(), vec![0, 1]);
        let r = detect_score(&scores, None);
        assert_eq!(r.n_outliers, 0);
        assert_eq!(r.cutoff, Cutoff::Score { k_s: None });
        let r = detect_score(
            &Scores {
                values: vec![0.0; 3],
                upper: vec![false; 3],
                clamped: vec![],
            },
            Some(2.0),
        );
        assert_eq!(r.n_outliers, 0);
    }

    #[test]
    fn low_side_scores_are_not_flagged() {
        let times = [5.0, -5.0];
        let s = score_values(&times, &[1.0; 2], &[2.0; 2], &[3.0; 2]);
        assert_eq!(s.values, vec![3.0, 7.0]);
        assert_eq!(s.upper, vec![true, false]);
        assert_eq!(detect_score(&s, Some(2.0)).flagged(), vec![0]);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        let bad = DetectorConfig {
            k_r: 0.0,
            ..DetectorConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DetectorConfig {
            p_ref: 0.4,
            ..DetectorConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("boxplot".parse::<Method>().unwrap(), Method::Boxplot);
        assert!("cox".parse::<Method>().is_err());
    }

    #[test]
    fn median_convention() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
