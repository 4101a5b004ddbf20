//! Static forest plot of RESI estimates with interval segments.

use std::fmt::Write as _;

use super::{AnovaTableRow, CoefficientRow};
use crate::error::{ResiError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub resi: f64,
    /// Interval at the smallest alpha, if any.
    pub ci: Option<(f64, f64)>,
}

impl ForestRow {
    fn widest(ci: &[super::CiBound]) -> Option<(f64, f64)> {
        ci.iter()
            .min_by(|a, b| a.alpha.total_cmp(&b.alpha))
            .map(|c| (c.lo, c.hi))
    }

    pub fn from_coefficients(rows: &[CoefficientRow]) -> Vec<ForestRow> {
        rows.iter()
            .map(|r| ForestRow {
                label: r.label.clone(),
                resi: r.resi,
                ci: Self::widest(&r.ci),
            })
            .collect()
    }

    pub fn from_anova(rows: &[AnovaTableRow]) -> Vec<ForestRow> {
        rows.iter()
            .map(|r| ForestRow {
                label: r.term.clone(),
                resi: r.resi,
                ci: Self::widest(&r.ci),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOptions {
    pub width: f64,
    /// Multiplier on the row-label font size.
    pub label_scale: f64,
    /// Fail when a row has no interval.
    pub require_ci: bool,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            width: 640.0,
            label_scale: 1.0,
            require_ci: false,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_forest_svg(rows: &[ForestRow], options: &ForestOptions) -> Result<String> {
    if rows.is_empty() {
        return Err(ResiError::InvalidArgument("a forest plot needs at least one row".into()));
    }
    if options.require_ci {
        if let Some(r) = rows.iter().find(|r| r.ci.is_none()) {
            return Err(ResiError::InvalidArgument(format!("row `{}` has no interval", r.label)));
        }
    }
    if !(options.width > 0.0 && options.label_scale > 0.0) {
        return Err(ResiError::InvalidArgument("plot width and label scale must be positive".into()));
    }

    let font = 12.0 * options.label_scale;
    let row_h = (font * 1.8).max(18.0);
    let longest = rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0) as f64;
    let left = 10.0 + longest * font * 0.6 + 10.0;
    let right = 20.0;
    let top = 20.0;
    let axis_h = 40.0;
    let height = top + row_h * rows.len() as f64 + axis_h;
    let plot_w = (options.width - left - right).max(50.0);

    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for r in rows {
        lo = lo.min(r.resi);
        hi = hi.max(r.resi);
        if let Some((a, b)) = r.ci {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |v: f64| left + (v - lo) / (hi - lo) * plot_w;
    let bottom = top + row_h * rows.len() as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.2}" height="{:.2}" viewBox="0 0 {:.2} {:.2}" font-family="sans-serif">"#,
        options.width, height, options.width, height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line class="reference" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x(0.0),
        top,
        x(0.0),
        bottom
    );
    for (i, r) in rows.iter().enumerate() {
        let y = top + row_h * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text class="label" x="{:.2}" y="{:.2}" font-size="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            left - 10.0,
            y,
            font,
            escape(&r.label)
        );
        if let Some((a, b)) = r.ci {
            let _ = writeln!(
                s,
                r#"<line class="ci" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
                x(a),
                y,
                x(b),
                y
            );
        }
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3.50" fill="black"/>"#,
            x(r.resi),
            y
        );
    }
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        left,
        bottom,
        left + plot_w,
        bottom
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text class="tick" x="{:.2}" y="{:.2}" font-size="10.00" text-anchor="middle">{:.3}</text>"#,
            x(v),
            bottom + 15.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-title" x="{:.2}" y="{:.2}" font-size="12.00" text-anchor="middle">RESI</text>"#,
        left + plot_w / 2.0,
        bottom + 32.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ForestRow> {
        vec![
            ForestRow { label: "age".into(), resi: 0.15, ci: Some((0.09, 0.21)) },
            ForestRow { label: "sex<m>".into(), resi: 0.05, ci: Some((0.0, 0.0)) },
            ForestRow { label: "bmi".into(), resi: -0.1, ci: Some((-0.2, 0.01)) },
        ]
    }

    #[test]
    fn structure() {
        let svg = render_forest_svg(&rows(), &ForestOptions::default()).unwrap();
        assert_eq!(svg.matches("class=\"marker\"").count(), 3);
        assert_eq!(svg.matches("class=\"ci\"").count(), 3);
        assert_eq!(svg.matches("class=\"label\"").count(), 3);
        assert_eq!(svg.matches("class=\"reference\"").count(), 1);
        assert!(svg.contains("sex&lt;m&gt;"));
    }

    #[test]
    fn deterministic_and_validated() {
        let a = render_forest_svg(&rows(), &ForestOptions::default()).unwrap();
        let b = render_forest_svg(&rows(), &ForestOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(render_forest_svg(&[], &ForestOptions::default()).is_err());
        let bare = vec![ForestRow { label: "x".into(), resi: 0.2, ci: None }];
        let strict = ForestOptions { require_ci: true, ..ForestOptions::default() };
        assert!(render_forest_svg(&bare, &strict).is_err());
        assert!(render_forest_svg(&bare, &ForestOptions::default()).is_ok());
    }
}
