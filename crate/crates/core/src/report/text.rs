//! Plain-text report and coefficient table.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::detect::{Cutoff, DetectionResult, Method};
use crate::solver::QuantileFit;

use super::ReportError;

/// Rows shown before the listing is truncated.
pub const TOP_ROWS: usize = 6;

/// Levels of the coefficient table.
pub const COEF_LEVELS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];

pub const MODEL_NAME: &str = "Locally weighted censored quantile regression";

/// Right-aligns every column to its widest cell; the first row is the header.
fn align(rows: &[Vec<String>], indent: &str) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        out.push_str(indent);
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:>w$}"))
            .collect();
        out.push_str(cells.join(" ").trim_end());
        out.push('\n');
    }
    out
}

fn fixed(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    // avoid printing "-0.00"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Row indices in listing order: every row by decreasing score for the score
/// method, flagged rows by decreasing evidence otherwise. Ties keep row order.
pub fn listing_order(d: &Dataset, result: &DetectionResult) -> Vec<usize> {
    let times = d.times();
    let key = |i: usize| match result.method {
        // exceedance over the fence; fences alone are not comparable across rows
        Method::Boxplot => times[i] - result.evidence[i],
        _ => result.evidence[i],
    };
    let mut rows: Vec<usize> = match result.method {
        Method::Score => (0..result.flags.len()).collect(),
        _ => result.flagged(),
    };
    rows.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    rows
}

/// Human-readable summary of a detection run.
///
/// `source` describes the data and model formula. With `show_all` the listing
/// is not truncated.
pub fn render_report(d: &Dataset, result: &DetectionResult, source: &str, show_all: bool) -> String {
    let mut out = String::new();
    let method = result.method;
    out.push_str("     Outlier Detection for Censored Data\n\n");
    let _ = writeln!(out, " Data: {source}");
    let _ = writeln!(out, " Algorithm: {} ({method})", method.title());
    let _ = writeln!(out, " Model: {MODEL_NAME}");
    let cutoff = match result.cutoff {
        Cutoff::Residual { k_r, .. } => k_r.to_string(),
        Cutoff::Boxplot { k_b } => k_b.to_string(),
        Cutoff::Score { k_s } => k_s.map_or_else(|| "undecided".to_string(), |k| k.to_string()),
    };
    let _ = writeln!(out, " Value for cut-off {}: {cutoff}", method.cutoff_name());
    let _ = writeln!(out, " # of outliers detected: {}", result.n_outliers);
    if !result.clamped.is_empty() {
        let _ = writeln!(
            out,
            " Quantile crossing guard applied at {} row(s)",
            result.clamped.len()
        );
    }
    out.push('\n');

    let order = listing_order(d, result);
    let shown = if show_all { order.len() } else { order.len().min(TOP_ROWS) };
    match method {
        Method::Score if show_all => out.push_str(" All outlying scores:\n"),
        Method::Score => {
            let _ = writeln!(out, " Top {TOP_ROWS} outlying scores:");
        }
        _ if order.is_empty() => {
            out.push_str(" No outliers detected.\n");
            return out;
        }
        _ => out.push_str(" Outliers detected:\n"),
    }

    let mut header = vec!["row".to_string(), "times".into(), "delta".into()];
    header.extend(d.covariate_names().iter().cloned());
    match method {
        Method::Residual => header.extend(["residual".to_string(), "sigma".into()]),
        Method::Boxplot => header.push("UB".into()),
        Method::Score => header.push("score".into()),
    }
    header.push("Outlier".into());
    let mut table = vec![header];
    let sigma = match result.cutoff {
        Cutoff::Residual { sigma, .. } => sigma,
        _ => f64::NAN,
    };
    for &i in &order[..shown] {
        let obs = d.observation(i);
        let mut row = vec![(i + 1).to_string(), fixed(obs.time, 2), obs.status().to_string()];
        row.extend(d.raw_covariates(i).iter().map(|x| x.to_string()));
        row.push(fixed(result.evidence[i], 2));
        if method == Method::Residual {
            row.push(fixed(sigma, 2));
        }
        row.push(if result.flags[i] { "*".into() } else { String::new() });
        table.push(row);
    }
    out.push_str(&align(&table, " "));
    if method != Method::Score {
        let _ = writeln!(out, " {shown} of all {} outliers were displayed.", order.len());
    }
    out
}

/// Coefficients at the five reporting levels, three decimals.
///
/// `names` are the covariate names; the intercept row is added here.
pub fn coef_table(fits: &[QuantileFit], names: &[String]) -> Result<String, ReportError> {
    let mut cols = Vec::with_capacity(COEF_LEVELS.len());
    for tau in COEF_LEVELS {
        let fit = fits
            .iter()
            .find(|f| (f.tau - tau).abs() < 1e-12)
            .ok_or(ReportError::MissingFit(tau))?;
        if fit.beta.len() != names.len() + 1 {
            return Err(ReportError::Malformed(format!(
                "fit at {tau} has {} coefficients for {} covariates",
                fit.beta.len(),
                names.len()
            )));
        }
        cols.push(&fit.beta);
    }
    let mut table = vec![std::iter::once(String::new())
        .chain(COEF_LEVELS.iter().map(|t| format!("q{:.0}", t * 100.0)))
        .collect::<Vec<_>>()];
    let row_names = std::iter::once("(Intercept)".to_string()).chain(names.iter().cloned());
    for (j, name) in row_names.enumerate() {
        let mut row = vec![name];
        row.extend(cols.iter().map(|b| fixed(b[j], 3)));
        table.push(row);
    }
    // left-align the row labels
    let label_w = table.iter().map(|r| r[0].chars().count()).max().unwrap_or(0);
    for r in &mut table {
        r[0] = format!("{:<label_w$}", r[0]);
    }
    Ok(align(&table, ""))
}
