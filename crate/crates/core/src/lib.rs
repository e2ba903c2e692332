//! Outlier detection for right-censored survival data.
//!
//! Conditional quantiles are estimated by locally weighted censored quantile
//! regression (kernel-localized Kaplan-Meier weights plus an exact
//! linear-programming fit). Three detectors sit on top of the fitted
//! quantiles: residual-based, boxplot, and outlying scores.

pub mod data;
pub mod kernel;
pub mod normal;
pub mod solver;
pub mod detect;
pub mod sim;
pub mod report;
