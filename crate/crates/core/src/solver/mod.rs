//! Locally weighted censored quantile regression.
//!
//! Each censored row whose local CDF estimate is still below `tau` is split in
//! two loss terms: weight `w_i` at its observed time and `1 - w_i` at a far
//! pseudo-response `Y*`. The weighted check-loss objective is minimized exactly
//! through its linear-programming dual:
//!
//! ```text
//! maximize   sum_i y_i a_i
//! subject to sum_i x_i a_i = (1 - tau) sum_i w_i x_i,   0 <= a_i <= w_i
//! ```
//!
//! whose simplex multipliers at the optimal basis are the coefficients.

pub mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::kernel::{self, Bandwidth, KernelError, RedistributionWeights};
use simplex::LpError;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("design is rank deficient: column `{column}` depends on earlier columns")]
    RankDeficientDesign { column: String },
    #[error("need at least {needed} positively weighted terms, got {got}")]
    TooFewTerms { needed: usize, got: usize },
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("linear program unbounded (internal consistency failure)")]
    Unbounded,
    #[error("pseudo-response stayed below a fitted value after {0} retries")]
    PseudoPointUnstable(usize),
    #[error("covariate vector has {got} entries, fit expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simplex failure: {0}")]
    Simplex(LpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl From<LpError> for SolverError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Unbounded => SolverError::Unbounded,
            other => SolverError::Simplex(other),
        }
    }
}

/// Check loss `u (tau - I(u < 0))`.
pub fn pinball_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub degenerate_pivots: usize,
    pub neighborhood_fallbacks: usize,
    /// Censored rows whose local CDF had reached 1.
    pub degenerate_cdf: usize,
    pub pseudo_retries: usize,
    /// Number of loss terms in the assembled problem.
    pub terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    /// Intercept first, then one slope per covariate (original scale).
    pub beta: Vec<f64>,
    pub objective: f64,
    pub pseudo_value: Option<f64>,
    pub diagnostics: FitDiagnostics,
}

impl QuantileFit {
    /// `x̃'β` with `x̃ = (1, x)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, SolverError> {
        if x.len() + 1 != self.beta.len() {
            return Err(SolverError::DimensionMismatch {
                expected: self.beta.len() - 1,
                got: x.len(),
            });
        }
        Ok(self.beta[0] + x.iter().zip(&self.beta[1..]).map(|(a, b)| a * b).sum::<f64>())
    }
}

pub fn predict_quantile(fit: &QuantileFit, x: &[f64]) -> Result<f64, SolverError> {
    fit.predict(x)
}

/// One weighted check-loss term referring to a design row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm {
    pub row: usize,
    pub weight: f64,
    pub response: f64,
    pub pseudo: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQrProblem {
    pub tau: f64,
    /// Design rows with a leading 1.
    pub design: Vec<Vec<f64>>,
    pub terms: Vec<LossTerm>,
    pub column_names: Vec<String>,
    pub pseudo_value: Option<f64>,
}

impl WeightedQrProblem {
    /// Plain weighted quantile regression: one term per row.
    pub fn new(
        tau: f64,
        covariates: &[Vec<f64>],
        responses: &[f64],
        weights: &[f64],
    ) -> Self {
        let p = covariates.first().map_or(0, Vec::len);
        let design = covariates
            .iter()
            .map(|x| std::iter::once(1.0).chain(x.iter().copied()).collect())
            .collect();
        let terms = responses
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(row, (&response, &weight))| LossTerm {
                row,
                weight,
                response,
                pseudo: false,
            })
            .collect();
        let mut column_names = vec!["(Intercept)".to_string()];
        column_names.extend((1..=p).map(|j| format!("x{j}")));
        Self {
            tau,
            design,
            terms,
            column_names,
            pseudo_value: None,
        }
    }

    pub fn n_params(&self) -> usize {
        self.column_names.len()
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let fit: f64 = self.design[t.row].iter().zip(beta).map(|(a, b)| a * b).sum();
                t.weight * pinball_loss(t.response - fit, self.tau)
            })
            .sum()
    }

    /// Moves every pseudo term to a new pseudo-response.
    fn with_pseudo_value(&self, y_star: f64) -> Self {
        let mut out = self.clone();
        for t in out.terms.iter_mut().filter(|t| t.pseudo) {
            t.response = y_star;
        }
        out.pseudo_value = Some(y_star);
        out
    }
}

/// `max(Y) + spread * (max(Y) - min(Y)) + 1`.
fn pseudo_response(times: &[f64], spread: f64) -> f64 {
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    hi + spread * (hi - lo) + 1.0
}

const PSEUDO_SPREAD: f64 = 100.0;
const PSEUDO_RETRIES: usize = 3;

/// Builds the split-mass problem from redistribution weights.
pub fn assemble_problem(d: &Dataset, w: &RedistributionWeights) -> WeightedQrProblem {
    let times = d.times();
    let y_star = pseudo_response(&times, PSEUDO_SPREAD);
    let design: Vec<Vec<f64>> = (0..d.n())
        .map(|i| std::iter::once(1.0).chain(d.raw_covariates(i)).collect())
        .collect();
    let mut terms = Vec::with_capacity(d.n());
    let mut any_pseudo = false;
    for (row, (&t, &wi)) in times.iter().zip(&w.weights).enumerate() {
        if wi >= 1.0 {
            terms.push(LossTerm {
                row,
                weight: 1.0,
                response: t,
                pseudo: false,
            });
        } else {
            any_pseudo = true;
            terms.push(LossTerm {
                row,
                weight: wi,
                response: t,
                pseudo: false,
            });
            terms.push(LossTerm {
                row,
                weight: 1.0 - wi,
                response: y_star,
                pseudo: true,
            });
        }
    }
    let mut column_names = vec!["(Intercept)".to_string()];
    column_names.extend(d.covariate_names().iter().cloned());
    WeightedQrProblem {
        tau: w.tau,
        design,
        terms,
        column_names,
        pseudo_value: any_pseudo.then_some(y_star),
    }
}

/// First design column (in order) that is numerically dependent on the ones
/// before it, over positively weighted rows. Modified Gram-Schmidt with a
/// tolerance relative to the largest column norm.
pub fn dependent_column(rows: &[&[f64]], n_cols: usize) -> Option<usize> {
    let cols: Vec<Vec<f64>> = (0..n_cols)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let max_norm = cols.iter().map(|c| norm(c)).fold(0.0, f64::max);
    if max_norm == 0.0 {
        return (n_cols > 0).then_some(0);
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let mut v = col.clone();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let nv = norm(&v);
        if nv <= 1e-10 * max_norm {
            return Some(j);
        }
        basis.push(v.iter().map(|a| a / nv).collect());
    }
    None
}

/// Exact minimizer of the weighted check-loss objective.
pub fn solve_weighted_qr(prob: &WeightedQrProblem) -> Result<QuantileFit, SolverError> {
    let tau = prob.tau;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SolverError::InvalidTau(tau));
    }
    let q = prob.n_params();
    let active: Vec<&LossTerm> = prob.terms.iter().filter(|t| t.weight > 0.0).collect();
    if active.len() < q {
        return Err(SolverError::TooFewTerms {
            needed: q,
            got: active.len(),
        });
    }
    let rows: Vec<&[f64]> = active.iter().map(|t| prob.design[t.row].as_slice()).collect();
    if let Some(j) = dependent_column(&rows, q) {
        return Err(SolverError::RankDeficientDesign {
            column: prob.column_names[j].clone(),
        });
    }

    let columns: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let cost: Vec<f64> = active.iter().map(|t| t.response).collect();
    let upper: Vec<f64> = active.iter().map(|t| t.weight).collect();
    let mut rhs = vec![0.0; q];
    for (r, t) in rows.iter().zip(&active) {
        for (b, x) in rhs.iter_mut().zip(r.iter()) {
            *b += (1.0 - tau) * t.weight * x;
        }
    }
    let sol = simplex::maximize(&columns, &cost, &upper, &rhs)?;
    let beta = sol.multipliers;
    let objective = prob.objective(&beta);
    Ok(QuantileFit {
        tau,
        beta,
        objective,
        pseudo_value: prob.pseudo_value,
        diagnostics: FitDiagnostics {
            iterations: sol.iterations,
            degenerate_pivots: sol.degenerate_pivots,
            terms: prob.terms.len(),
            ..Default::default()
        },
    })
}

/// Solves, then checks every pseudo term sits strictly above its fitted
/// value; if not, pushes `Y*` further out and re-solves.
fn solve_with_pseudo_check(prob: &WeightedQrProblem, times: &[f64]) -> Result<QuantileFit, SolverError> {
    let mut current = prob.clone();
    for retry in 0..=PSEUDO_RETRIES {
        let mut fit = solve_weighted_qr(&current)?;
        let ok = current.terms.iter().filter(|t| t.pseudo).all(|t| {
            let fitted: f64 = current.design[t.row].iter().zip(&fit.beta).map(|(a, b)| a * b).sum();
            t.response - fitted > 0.0
        });
        if ok {
            fit.diagnostics.pseudo_retries = retry;
            return Ok(fit);
        }
        let spread = PSEUDO_SPREAD * 10f64.powi(retry as i32 + 1);
        current = prob.with_pseudo_value(pseudo_response(times, spread));
    }
    Err(SolverError::PseudoPointUnstable(PSEUDO_RETRIES))
}

fn check_tau(tau: f64) -> Result<(), SolverError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(SolverError::InvalidTau(tau))
    }
}

/// Fits one quantile level: local KM at each censored row, redistribution
/// weights, then the exact weighted fit.
pub fn fit_cqr(d: &Dataset, tau: f64, bw: Bandwidth) -> Result<QuantileFit, SolverError> {
    check_tau(tau)?;
    let (values, fallbacks) = kernel::censored_cdf_values(d, bw)?;
    fit_from_cdf(d, tau, &values, fallbacks)
}

/// Fits several levels, sharing the local CDF evaluations.
pub fn fit_cqr_levels(d: &Dataset, taus: &[f64], bw: Bandwidth) -> Result<Vec<QuantileFit>, SolverError> {
    for &t in taus {
        check_tau(t)?;
    }
    let (values, fallbacks) = kernel::censored_cdf_values(d, bw)?;
    taus.iter()
        .map(|&tau| fit_from_cdf(d, tau, &values, fallbacks))
        .collect()
}

fn fit_from_cdf(
    d: &Dataset,
    tau: f64,
    values: &[Option<f64>],
    fallbacks: usize,
) -> Result<QuantileFit, SolverError> {
    let w = kernel::weights_from_cdf(tau, values, fallbacks)?;
    let prob = assemble_problem(d, &w);
    let mut fit = solve_with_pseudo_check(&prob, &d.times())?;
    fit.diagnostics.neighborhood_fallbacks = w.neighborhood_fallbacks;
    fit.diagnostics.degenerate_cdf = w.degenerate.len();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{scale_covariates, Observation};

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(-4.0, 0.5), 2.0);
        assert_eq!(pinball_loss(2.0, 0.75), 1.5);
        assert_eq!(pinball_loss(-2.0, 0.25), 1.5);
        assert_eq!(pinball_loss(0.0, 0.3), 0.0);
    }

    fn intercept_only(y: &[f64], w: &[f64], tau: f64) -> QuantileFit {
        let xs = vec![vec![]; y.len()];
        solve_weighted_qr(&WeightedQrProblem::new(tau, &xs, y, w)).unwrap()
    }

    #[test]
    fn median_of_three() {
        let fit = intercept_only(&[1.0, 2.0, 9.0], &[1.0; 3], 0.5);
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!((fit.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_median_breakpoint() {
        let fit = intercept_only(&[1.0, 3.0], &[0.25, 0.75], 0.5);
        assert!((fit.beta[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn interpolates_exact_line() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x[0]).collect();
        for tau in [0.1, 0.5, 0.9] {
            let fit = solve_weighted_qr(&WeightedQrProblem::new(tau, &xs, &y, &[1.0; 6])).unwrap();
            assert!((fit.beta[0] - 1.0).abs() < 1e-10 && (fit.beta[1] - 2.0).abs() < 1e-10);
            assert!(fit.objective.abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficiency_names_column() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let err = solve_weighted_qr(&WeightedQrProblem::new(0.5, &xs, &y, &[1.0; 5])).unwrap_err();
        assert_eq!(err, SolverError::RankDeficientDesign { column: "x2".into() });

        let xs = vec![vec![3.0]; 4];
        let err = solve_weighted_qr(&WeightedQrProblem::new(0.5, &xs, &y[..4], &[1.0; 4])).unwrap_err();
        assert_eq!(err, SolverError::RankDeficientDesign { column: "x1".into() });
    }

    #[test]
    fn too_few_positive_terms() {
        let xs: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        let err = solve_weighted_qr(&WeightedQrProblem::new(0.5, &xs, &[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, SolverError::TooFewTerms { needed: 2, got: 1 }));
    }

    #[test]
    fn prediction() {
        let fit = QuantileFit {
            tau: 0.5,
            beta: vec![1.0, 2.0],
            objective: 0.0,
            pseudo_value: None,
            diagnostics: FitDiagnostics::default(),
        };
        assert_eq!(fit.predict(&[3.0]).unwrap(), 7.0);
        assert!(fit.predict(&[]).is_err());
        let sim = QuantileFit {
            beta: vec![10.0, -0.3],
            ..fit.clone()
        };
        assert!((predict_quantile(&sim, &[20.0]).unwrap() - 4.0).abs() < 1e-12);
        let p0 = QuantileFit {
            beta: vec![2.5],
            ..fit
        };
        assert_eq!(p0.predict(&[]).unwrap(), 2.5);
    }

    fn small_censored() -> Dataset {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let events = [true, false, true, true, false, true, true, true];
        let obs = times
            .iter()
            .zip(events)
            .enumerate()
            .map(|(i, (&t, e))| Observation::new(t + 0.1 * (i % 3) as f64, e, vec![(i % 4) as f64]))
            .collect();
        scale_covariates(&Dataset::new(obs, vec!["x".into()]).unwrap()).unwrap()
    }

    #[test]
    fn assembly_splits_censored_mass() {
        let d = small_censored();
        let w = kernel::redistribution_weights(&d, 0.5, Bandwidth::new(1.0).unwrap()).unwrap();
        let prob = assemble_problem(&d, &w);
        let split = w.weights.iter().filter(|&&x| x < 1.0).count();
        assert!(split > 0);
        assert_eq!(prob.terms.len(), d.n() + split);
        for t in prob.terms.iter().filter(|t| t.pseudo) {
            let partner = prob.terms.iter().find(|u| u.row == t.row && !u.pseudo).unwrap();
            assert!((t.weight + partner.weight - 1.0).abs() < 1e-15);
            assert_eq!(Some(t.response), prob.pseudo_value);
        }
        // design uses original covariate values
        assert_eq!(prob.design[3], vec![1.0, 3.0]);
    }

    #[test]
    fn assembly_one_censored_row() {
        let obs = vec![
            Observation::new(1.0, true, vec![]),
            Observation::new(2.0, false, vec![]),
            Observation::new(3.0, true, vec![]),
        ];
        let d = Dataset::new(obs, vec![]).unwrap();
        let w = kernel::redistribution_weights(&d, 0.5, Bandwidth::default()).unwrap();
        let prob = assemble_problem(&d, &w);
        assert_eq!(prob.terms.len(), 4);
        assert_eq!(prob.pseudo_value, Some(3.0 + 200.0 + 1.0));
    }

    #[test]
    fn fit_reports_pseudo_point_above_fit() {
        let d = small_censored();
        let fit = fit_cqr(&d, 0.5, Bandwidth::new(1.0).unwrap()).unwrap();
        let y_star = fit.pseudo_value.unwrap();
        for x in 0..4 {
            assert!(fit.predict(&[x as f64]).unwrap() < y_star);
        }
        assert_eq!(fit.diagnostics.pseudo_retries, 0);
        assert!(fit_cqr(&d, 0.0, Bandwidth::default()).is_err());
    }
}
