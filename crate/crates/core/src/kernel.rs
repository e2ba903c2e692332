//! Kernel-localized Kaplan-Meier estimation and the redistribution-of-mass
//! weights that feed the censored quantile objective.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("covariates must be scaled to [0, 1] before kernel weighting")]
    NotScaled,
    #[error("covariate point has {got} entries, dataset has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidTau(f64),
}

/// Kernel bandwidth on the scaled covariate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub const DEFAULT: f64 = 0.05;

    pub fn new(h: f64) -> Result<Self, KernelError> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(KernelError::InvalidBandwidth(h))
        }
    }

    pub fn h(self) -> f64 {
        self.0
    }
}

impl Default for Bandwidth {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

/// `(15/16)(1 - u^2)^2` on `[-1, 1]`, zero elsewhere.
pub fn biquadratic_kernel(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        let a = 1.0 - u * u;
        15.0 / 16.0 * a * a
    } else {
        0.0
    }
}

/// Nadaraya-Watson weights around one covariate point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodWeights {
    pub weights: Vec<f64>,
    /// No observation fell inside the kernel support; weights are uniform.
    pub fallback: bool,
}

pub(crate) fn check_point(x: &[f64], d: &Dataset) -> Result<(), KernelError> {
    if x.len() != d.p() {
        return Err(KernelError::DimensionMismatch {
            expected: d.p(),
            got: x.len(),
        });
    }
    if d.p() > 0 && !d.is_scaled() {
        return Err(KernelError::NotScaled);
    }
    Ok(())
}

pub fn nw_weights(x: &[f64], d: &Dataset, bw: Bandwidth) -> Result<NeighborhoodWeights, KernelError> {
    check_point(x, d)?;
    let h = bw.h();
    let raw: Vec<f64> = d
        .observations()
        .iter()
        .map(|o| {
            let dist = o
                .covariates
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            biquadratic_kernel(dist / h)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        Ok(NeighborhoodWeights {
            weights: raw.iter().map(|k| k / total).collect(),
            fallback: false,
        })
    } else {
        let n = d.n() as f64;
        Ok(NeighborhoodWeights {
            weights: vec![1.0 / n; d.n()],
            fallback: true,
        })
    }
}

/// Indices sorted by observed time; ties keep stored order.
pub(crate) fn time_order(d: &Dataset) -> Vec<usize> {
    let obs = d.observations();
    let mut order: Vec<usize> = (0..d.n()).collect();
    order.sort_by(|&a, &b| {
        obs[a]
            .time
            .partial_cmp(&obs[b].time)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// The local Kaplan-Meier CDF at one covariate point, stored as a
/// right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalKaplanMeier {
    // (event time, F just after it), strictly increasing in time
    steps: Vec<(f64, f64)>,
    pub fallback: bool,
}

impl LocalKaplanMeier {
    pub fn at(x: &[f64], d: &Dataset, bw: Bandwidth) -> Result<Self, KernelError> {
        Self::with_order(x, d, bw, &time_order(d))
    }

    pub(crate) fn with_order(
        x: &[f64],
        d: &Dataset,
        bw: Bandwidth,
        order: &[usize],
    ) -> Result<Self, KernelError> {
        let nw = nw_weights(x, d, bw)?;
        Ok(Self::from_weights(d, &nw.weights, order, nw.fallback))
    }

    /// Product-limit estimate with the supplied localizing weights.
    pub fn from_weights(d: &Dataset, weights: &[f64], order: &[usize], fallback: bool) -> Self {
        let obs = d.observations();
        let n = order.len();
        // at_risk[r]: weight mass of sorted positions r..n
        let mut at_risk = vec![0.0; n + 1];
        for r in (0..n).rev() {
            at_risk[r] = at_risk[r + 1] + weights[order[r]];
        }
        let mut steps: Vec<(f64, f64)> = Vec::new();
        let mut survival = 1.0;
        let mut r = 0;
        while r < n {
            let t = obs[order[r]].time;
            let group_start = r;
            let mut any_event = false;
            while r < n && obs[order[r]].time == t {
                let j = order[r];
                if obs[j].event && weights[j] > 0.0 {
                    let risk = at_risk[group_start];
                    survival *= (1.0 - weights[j] / risk).max(0.0);
                    any_event = true;
                }
                r += 1;
            }
            if any_event {
                steps.push((t, 1.0 - survival));
            }
        }
        Self { steps, fallback }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let k = self.steps.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            0.0
        } else {
            self.steps[k - 1].1
        }
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }
}

/// `F̂(t | x)` from the kernel-localized product-limit estimator.
pub fn local_km_cdf(t: f64, x: &[f64], d: &Dataset, bw: Bandwidth) -> Result<f64, KernelError> {
    Ok(LocalKaplanMeier::at(x, d, bw)?.cdf(t))
}

/// Value of the redistribution weight for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightValue {
    pub weight: f64,
    /// Censored row whose estimated CDF reached 1; the weight is undefined and
    /// set to 1.
    pub degenerate: bool,
}

const DEGENERATE_CDF: f64 = 1.0 - 1e-12;

pub fn redistribution_weight(event: bool, tau: f64, f_at_obs: f64) -> WeightValue {
    if event {
        return WeightValue {
            weight: 1.0,
            degenerate: false,
        };
    }
    if f_at_obs >= DEGENERATE_CDF {
        return WeightValue {
            weight: 1.0,
            degenerate: true,
        };
    }
    let weight = if f_at_obs < tau {
        (tau - f_at_obs) / (1.0 - f_at_obs)
    } else {
        1.0
    };
    WeightValue {
        weight,
        degenerate: false,
    }
}

/// Redistribution weights for every observation at one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedistributionWeights {
    pub tau: f64,
    pub weights: Vec<f64>,
    /// Censored rows whose local CDF estimate had reached 1.
    pub degenerate: Vec<usize>,
    /// Local estimates that fell back to uniform weights.
    pub neighborhood_fallbacks: usize,
}

/// Local CDF evaluated at each censored row's own time and covariates; events
/// get `None`.
pub fn censored_cdf_values(d: &Dataset, bw: Bandwidth) -> Result<(Vec<Option<f64>>, usize), KernelError> {
    if d.p() > 0 && !d.is_scaled() {
        return Err(KernelError::NotScaled);
    }
    let order = time_order(d);
    let mut fallbacks = 0;
    let mut cache: Vec<(Vec<f64>, LocalKaplanMeier)> = Vec::new();
    let mut values = Vec::with_capacity(d.n());
    for obs in d.observations() {
        if obs.event {
            values.push(None);
            continue;
        }
        let km = match cache.iter().find(|(x, _)| *x == obs.covariates) {
            Some((_, km)) => km,
            None => {
                let km = LocalKaplanMeier::with_order(&obs.covariates, d, bw, &order)?;
                cache.push((obs.covariates.clone(), km));
                &cache.last().expect("just pushed").1
            }
        };
        if km.fallback {
            fallbacks += 1;
        }
        values.push(Some(km.cdf(obs.time)));
    }
    Ok((values, fallbacks))
}

/// Turns precomputed local CDF values into weights at level `tau`.
pub fn weights_from_cdf(tau: f64, cdf_values: &[Option<f64>], fallbacks: usize) -> Result<RedistributionWeights, KernelError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(KernelError::InvalidTau(tau));
    }
    let mut weights = Vec::with_capacity(cdf_values.len());
    let mut degenerate = Vec::new();
    for (i, v) in cdf_values.iter().enumerate() {
        let w = match v {
            None => redistribution_weight(true, tau, 0.0),
            Some(f) => redistribution_weight(false, tau, *f),
        };
        if w.degenerate {
            degenerate.push(i);
        }
        weights.push(w.weight);
    }
    Ok(RedistributionWeights {
        tau,
        weights,
        degenerate,
        neighborhood_fallbacks: fallbacks,
    })
}

pub fn redistribution_weights(d: &Dataset, tau: f64, bw: Bandwidth) -> Result<RedistributionWeights, KernelError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(KernelError::InvalidTau(tau));
    }
    let (values, fallbacks) = censored_cdf_values(d, bw)?;
    weights_from_cdf(tau, &values, fallbacks)
}
