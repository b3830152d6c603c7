//! Minimal deterministic SVG charts. Numbers are written with fixed
//! precision so identical inputs give identical bytes.

use std::fmt::Write;

use solarcap_core::explain::{waterfall, ShapExplanation};

const WIDTH: f64 = 720.0;
const LABEL_W: f64 = 200.0;
const VALUE_W: f64 = 90.0;
const ROW_H: f64 = 24.0;
const TOP: f64 = 40.0;
const POS: &str = "#d62728";
const NEG: &str = "#1f77b4";
const NEUTRAL: &str = "#7f7f7f";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14" font-weight="bold">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo <= 0.0 {
            hi = lo + 1.0;
        }
        Self { lo, hi }
    }

    fn x(&self, v: f64) -> f64 {
        LABEL_W + (v - self.lo) / (self.hi - self.lo) * (WIDTH - LABEL_W - VALUE_W)
    }
}

fn bar(out: &mut String, scale: &Scale, row: usize, label: &str, from: f64, to: f64, fill: &str, value: f64) {
    let y = TOP + row as f64 * ROW_H;
    let (a, b) = (scale.x(from.min(to)), scale.x(from.max(to)));
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        LABEL_W - 6.0,
        y + ROW_H * 0.65,
        escape(label)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{a:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
        y + 3.0,
        (b - a).max(0.5),
        ROW_H - 6.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}">{value:+.4}</text>"#,
        b + 4.0,
        y + ROW_H * 0.65
    );
}

fn axis(out: &mut String, scale: &Scale, rows: usize, at: f64) {
    let x = scale.x(at);
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
        TOP,
        TOP + rows as f64 * ROW_H
    );
}

/// Horizontal bar chart in the given order; positive bars red, negative blue.
pub fn bar_chart(title: &str, items: &[(String, f64)]) -> String {
    let scale = Scale::new(items.iter().map(|(_, v)| *v));
    let height = TOP + items.len() as f64 * ROW_H + 20.0;
    let mut out = String::new();
    header(&mut out, height, title);
    for (i, (label, v)) in items.iter().enumerate() {
        bar(&mut out, &scale, i, label, 0.0, *v, if *v >= 0.0 { POS } else { NEG }, *v);
    }
    axis(&mut out, &scale, items.len(), 0.0);
    out.push_str("</svg>\n");
    out
}

/// SHAP waterfall: base value, one bar per feature from the running total,
/// and the final prediction.
pub fn waterfall_chart(title: &str, expl: &ShapExplanation) -> String {
    let steps = waterfall(expl);
    let scale = Scale::new(
        steps
            .iter()
            .flat_map(|s| [s.start, s.end])
            .chain([expl.base_value, expl.prediction]),
    );
    let rows = steps.len() + 2;
    let height = TOP + rows as f64 * ROW_H + 20.0;
    let mut out = String::new();
    header(&mut out, height, title);
    bar(&mut out, &scale, 0, "base value", 0.0, expl.base_value, NEUTRAL, expl.base_value);
    for (i, s) in steps.iter().enumerate() {
        let fill = if s.contribution >= 0.0 { POS } else { NEG };
        bar(&mut out, &scale, i + 1, &s.feature, s.start, s.end, fill, s.contribution);
    }
    bar(&mut out, &scale, rows - 1, "prediction", 0.0, expl.prediction, NEUTRAL, expl.prediction);
    axis(&mut out, &scale, rows, 0.0);
    out.push_str("</svg>\n");
    out
}
