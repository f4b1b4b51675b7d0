//! Static SVG boxplots of report metrics.
//!
//! Box statistics follow Tukey: the box spans the lower and upper hinges
//! (medians of the lower and upper halves, each including the median when
//! the count is odd), whiskers reach the most extreme observations within
//! 1.5 times the hinge spread, and points beyond them are drawn as outliers.
//! The mean is marked with a diamond. Infinite values are drawn at the plot
//! ceiling and counted in an annotation above their box.

use std::fmt::Write as _;

use crate::error::CliError;

/// Five-number summary plus mean and outliers of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub lower_whisker: f64,
    pub lower_hinge: f64,
    pub median: f64,
    pub upper_hinge: f64,
    pub upper_whisker: f64,
    pub mean: f64,
    pub outliers: Vec<f64>,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl BoxStats {
    /// Statistics of `values`; `None` when empty. Values must be finite.
    pub fn tukey(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let half = n.div_ceil(2);
        let lower_hinge = median_sorted(&v[..half]);
        let upper_hinge = median_sorted(&v[n - half..]);
        let spread = 1.5 * (upper_hinge - lower_hinge);
        let (lo_fence, hi_fence) = (lower_hinge - spread, upper_hinge + spread);
        let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
        Some(Self {
            lower_whisker: inside.first().copied().unwrap_or(lower_hinge),
            lower_hinge,
            median: median_sorted(&v),
            upper_hinge,
            upper_whisker: inside.last().copied().unwrap_or(upper_hinge),
            mean: v.iter().sum::<f64>() / n as f64,
            outliers: v.iter().copied().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
        })
    }
}

/// One box of the plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: String,
    /// NaN entries are ignored; `+inf` entries are clipped to the ceiling.
    pub values: Vec<f64>,
}

const WIDTH_PER_BOX: f64 = 90.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PLOT_HEIGHT: f64 = 300.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `groups` as an SVG document titled `title`.
pub fn render_boxplot(groups: &[Group], title: &str) -> Result<String, CliError> {
    if groups.is_empty() {
        return Err(CliError::usage("nothing to plot"));
    }
    let finite: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).filter(|v| v.is_finite()).collect();
    if finite.is_empty() && groups.iter().all(|g| g.values.iter().all(|v| v.is_nan())) {
        return Err(CliError::usage("every value to plot is missing"));
    }
    let mut lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if finite.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    let (y_min, ceiling) = (lo - pad, hi + pad);

    let width = MARGIN_LEFT + MARGIN_RIGHT + WIDTH_PER_BOX * groups.len() as f64;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;
    let y = |v: f64| MARGIN_TOP + PLOT_HEIGHT * (ceiling - v) / (ceiling - y_min);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    let axis_x = MARGIN_LEFT - 10.0;
    let _ = writeln!(
        s,
        r#"<line x1="{axis_x:.2}" y1="{:.2}" x2="{axis_x:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN_TOP,
        MARGIN_TOP + PLOT_HEIGHT
    );
    for i in 0..=4 {
        let v = y_min + (ceiling - y_min) * i as f64 / 4.0;
        let py = y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{axis_x:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            axis_x - 4.0,
            axis_x - 6.0,
            py + 4.0
        );
    }

    for (i, g) in groups.iter().enumerate() {
        let cx = MARGIN_LEFT + WIDTH_PER_BOX * (i as f64 + 0.5);
        let infinite = g.values.iter().filter(|v| v.is_infinite() && v.is_sign_positive()).count();
        let clipped: Vec<f64> = g
            .values
            .iter()
            .filter(|v| !v.is_nan())
            .map(|&v| if v.is_infinite() { if v > 0.0 { ceiling } else { y_min } } else { v })
            .collect();
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + PLOT_HEIGHT + 20.0,
            escape(&g.label)
        );
        let Some(b) = BoxStats::tukey(&clipped) else { continue };
        let half = WIDTH_PER_BOX * 0.3;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.upper_whisker),
            y(b.upper_hinge)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.lower_hinge),
            y(b.lower_whisker)
        );
        for w in [b.lower_whisker, b.upper_whisker] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#cfe0f3" stroke="black"/>"##,
            cx - half,
            y(b.upper_hinge),
            2.0 * half,
            y(b.lower_hinge) - y(b.upper_hinge)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        for o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2.5" fill="none" stroke="black"/>"#, y(*o));
        }
        let my = y(b.mean);
        let _ = writeln!(
            s,
            r##"<path d="M {cx:.2} {:.2} L {:.2} {my:.2} L {cx:.2} {:.2} L {:.2} {my:.2} Z" fill="#d62728"/>"##,
            my - 4.0,
            cx + 4.0,
            my + 4.0,
            cx - 4.0
        );
        if infinite > 0 {
            let _ = writeln!(
                s,
                r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{infinite} × +∞</text>"#,
                MARGIN_TOP - 6.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
