//! Normal QQ plot of outlying scores as a self-contained SVG.
//!
//! Geometry is fixed (600 x 600 viewport, 40-unit margins) and every glyph is
//! a path, so identical input gives identical bytes.

use std::fmt::Write as _;

use crate::normal;

use super::ReportError;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;
const INNER: f64 = SIZE - 2.0 * MARGIN;
const TICK: f64 = 5.0;

const EVENT_GLYPH: &str = "M-3,0A3,3 0 1,0 3,0A3,3 0 1,0 -3,0";
const CENSORED_GLYPH: &str = "M-3.5,0H3.5M0,-3.5V3.5";

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" definition). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Theoretical normal quantiles `Φ⁻¹((i - 0.5)/n)`, `i = 1..n`.
pub fn plotting_positions(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| normal::inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn covering(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let span = max - min;
        if span > 0.0 {
            Self {
                lo: min - 0.04 * span,
                hi: max + 0.04 * span,
            }
        } else {
            Self { lo: min - 1.0, hi: max + 1.0 }
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn px(x: &Axis, v: f64) -> f64 {
    MARGIN + x.frac(v) * INNER
}

fn py(y: &Axis, v: f64) -> f64 {
    MARGIN + INNER - y.frac(v) * INNER
}

fn c(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// QQ plot of `scores` against normal plotting positions.
///
/// `events[i]` selects the "o" (event) or "+" (censored) glyph for row `i`.
/// The red reference line passes through the first and third quartiles of
/// the theoretical and sample quantiles; a dashed blue line marks `k_s`.
pub fn qq_plot_svg(scores: &[f64], events: &[bool], k_s: Option<f64>) -> Result<String, ReportError> {
    if scores.len() != events.len() {
        return Err(ReportError::Malformed(format!(
            "{} scores but {} statuses",
            scores.len(),
            events.len()
        )));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(ReportError::Malformed("scores must be finite and nonempty".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let sample: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let theory = plotting_positions(n);

    let x = Axis::covering(theory.iter().copied());
    let y = Axis::covering(sample.iter().copied().chain(k_s));

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\" \
         data-x-range=\"{:.16e} {:.16e}\" data-y-range=\"{:.16e} {:.16e}\">",
        x.lo, x.hi, y.lo, y.hi
    );
    out.push_str("<title>Normal QQ plot of outlying scores</title>\n");
    out.push_str(
        "<defs><clipPath id=\"plot-area\"><rect x=\"40\" y=\"40\" width=\"520\" height=\"520\"/></clipPath></defs>\n",
    );
    out.push_str("<rect x=\"0\" y=\"0\" width=\"600\" height=\"600\" fill=\"#ffffff\"/>\n");
    out.push_str(
        "<rect class=\"frame\" x=\"40\" y=\"40\" width=\"520\" height=\"520\" fill=\"none\" stroke=\"#000000\"/>\n",
    );

    let mut ticks = String::new();
    for t in x.ticks() {
        let p = px(&x, t);
        let _ = write!(ticks, "M{},{}V{}", c(p), c(MARGIN + INNER), c(MARGIN + INNER + TICK));
    }
    for t in y.ticks() {
        let p = py(&y, t);
        let _ = write!(ticks, "M{},{}H{}", c(MARGIN), c(p), c(MARGIN - TICK));
    }
    let _ = writeln!(out, "<path class=\"ticks\" d=\"{ticks}\" stroke=\"#000000\"/>");

    if n > 1 {
        let q1 = (quantile_type7(&theory, 0.25), quantile_type7(&sample, 0.25));
        let q3 = (quantile_type7(&theory, 0.75), quantile_type7(&sample, 0.75));
        if q3.0 > q1.0 {
            let slope = (q3.1 - q1.1) / (q3.0 - q1.0);
            let intercept = q1.1 - slope * q1.0;
            let _ = writeln!(
                out,
                "<line class=\"reference\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ff0000\" \
                 stroke-width=\"1.5\" clip-path=\"url(#plot-area)\" data-slope=\"{:.16e}\" data-intercept=\"{:.16e}\"/>",
                c(px(&x, x.lo)),
                c(py(&y, intercept + slope * x.lo)),
                c(px(&x, x.hi)),
                c(py(&y, intercept + slope * x.hi)),
                slope,
                intercept
            );
        }
    }

    if let Some(k) = k_s {
        let yk = c(py(&y, k));
        let _ = writeln!(
            out,
            "<line class=\"threshold\" x1=\"40.000\" y1=\"{yk}\" x2=\"560.000\" y2=\"{yk}\" stroke=\"#0000ff\" \
             stroke-dasharray=\"6,4\" data-threshold=\"{:.16e}\"/>",
            k
        );
    }

    out.push_str("<g class=\"points\" fill=\"none\" stroke=\"#000000\">\n");
    for (rank, &i) in order.iter().enumerate() {
        let (class, glyph) = if events[i] {
            ("event", EVENT_GLYPH)
        } else {
            ("censored", CENSORED_GLYPH)
        };
        let _ = writeln!(
            out,
            "<path class=\"{class}\" data-row=\"{}\" transform=\"translate({},{})\" d=\"{glyph}\"/>",
            i + 1,
            c(px(&x, theory[rank])),
            c(py(&y, sample[rank]))
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(svg: &str, class: &str, name: &str) -> Option<f64> {
        let line = svg.lines().find(|l| l.contains(&format!("class=\"{class}\"")))?;
        let start = line.find(&format!("{name}=\""))? + name.len() + 2;
        let end = start + line[start..].find('"')?;
        line[start..end].parse().ok()
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.25), 1.75);
        assert_eq!(quantile_type7(&v, 0.75), 3.25);
        assert_eq!(quantile_type7(&[5.0], 0.75), 5.0);
    }

    #[test]
    fn single_point_has_no_reference_line() {
        let svg = qq_plot_svg(&[1.0], &[true], None).unwrap();
        assert!(!svg.contains("class=\"reference\""));
        assert_eq!(svg.matches("class=\"event\"").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn normal_scores_give_identity_line() {
        let n = 101;
        let scores = plotting_positions(n);
        let events = vec![true; n];
        let svg = qq_plot_svg(&scores, &events, None).unwrap();
        assert!((attr(&svg, "reference", "data-slope").unwrap() - 1.0).abs() < 1e-9);
        assert!(attr(&svg, "reference", "data-intercept").unwrap().abs() < 1e-9);
    }

    #[test]
    fn glyphs_partition_by_status() {
        let scores = [0.5, 1.0, 4.6, 2.0, 4.5];
        let events = [true, false, false, true, true];
        let svg = qq_plot_svg(&scores, &events, Some(4.0)).unwrap();
        assert_eq!(svg.matches("class=\"event\"").count(), 3);
        assert_eq!(svg.matches("class=\"censored\"").count(), 2);
        assert!(attr(&svg, "threshold", "data-threshold").unwrap() == 4.0);
        assert_eq!(svg, qq_plot_svg(&scores, &events, Some(4.0)).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(qq_plot_svg(&[f64::NAN], &[true], None).is_err());
        assert!(qq_plot_svg(&[1.0, 2.0], &[true], None).is_err());
    }
}
