//! Shared report structures and renderers (aligned text tables, SVG charts).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::LanguageCode;

/// Column order used for probing tables.
pub const PROBE_LANGUAGE_ORDER: [&str; 11] =
    ["en", "de", "it", "es", "fr", "nl", "ru", "bg", "vi", "zh", "hi"];

/// Column order used for multiple-choice transfer tables.
pub const TRANSFER_LANGUAGE_ORDER: [&str; 16] = [
    "en", "de", "it", "es", "fr", "nl", "ru", "vi", "zh", "hi", "pl", "ar", "ja", "pt", "sw", "ur",
];

/// Sorts languages by their position in `canonical`, unknown languages last in alphabetical
/// order.
pub fn column_order<'a, I>(languages: I, canonical: &[&str]) -> Vec<LanguageCode>
where
    I: IntoIterator<Item = &'a LanguageCode>,
{
    let mut langs: Vec<LanguageCode> = languages.into_iter().cloned().collect();
    langs.sort_by_key(|l| {
        let pos = canonical.iter().position(|c| *c == l.as_str()).unwrap_or(usize::MAX);
        (pos, l.clone())
    });
    langs.dedup();
    langs
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// How a row's values are printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueFormat {
    /// Fraction shown as a percentage with two decimals.
    Percent,
    /// Signed percentage-point difference with one decimal.
    DeltaPercent,
    /// Raw value with three decimals.
    Raw,
}

impl ValueFormat {
    fn render(self, v: f64) -> String {
        if v.is_nan() {
            return "-".to_string();
        }
        match self {
            ValueFormat::Percent => format!("{:.2}", v * 100.0),
            ValueFormat::DeltaPercent => format!("{:+.1}", v * 100.0),
            ValueFormat::Raw => format!("{v:.3}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub values: BTreeMap<LanguageCode, f64>,
    pub avg: f64,
    pub format: ValueFormat,
}

impl MetricRow {
    /// Row whose `avg` is the arithmetic mean of `values`.
    pub fn averaged(name: impl Into<String>, values: BTreeMap<LanguageCode, f64>, format: ValueFormat) -> Self {
        let avg = mean(values.values().copied());
        MetricRow {
            name: name.into(),
            values,
            avg,
            format,
        }
    }
}

/// Languages as columns, one row per metric, average last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub title: String,
    pub columns: Vec<LanguageCode>,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn render_text(&self) -> String {
        let mut header = vec![self.title.clone()];
        header.extend(self.columns.iter().map(|c| c.to_string()));
        header.push("avg".to_string());
        let mut grid = vec![header];
        for row in &self.rows {
            let mut cells = vec![row.name.clone()];
            for c in &self.columns {
                cells.push(
                    row.values
                        .get(c)
                        .map_or_else(|| "-".to_string(), |v| row.format.render(*v)),
                );
            }
            cells.push(row.format.render(row.avg));
            grid.push(cells);
        }
        let ncols = grid[0].len();
        let widths: Vec<usize> = (0..ncols)
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    if j == 0 {
                        format!("{cell:<w$}", w = widths[j])
                    } else {
                        format!("{cell:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join(" | ").trim_end());
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "{}", rule.join("-+-"));
            }
        }
        out
    }
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of one row of fractions in `[0, 1]`, one bar per language.
pub fn bar_chart_svg(title: &str, bars: &[(String, f64)]) -> String {
    let bar_w = 40.0;
    let gap = 12.0;
    let height = 240.0;
    let left = 40.0;
    let top = 30.0;
    let width = left + bars.len() as f64 * (bar_w + gap) + gap;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = width,
        h = height + top + 40.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="18" font-family="sans-serif" font-size="14">{}</text>"#,
        svg_escape(title)
    );
    let base = top + height;
    let _ = writeln!(
        svg,
        r##"<line x1="{left}" y1="{base}" x2="{width}" y2="{base}" stroke="#000"/>"##
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        let x = left + gap + i as f64 * (bar_w + gap);
        let h = v * height;
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="{bar_w}" height="{h}" fill="#4a78b5"/>"##,
            y = base - h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{ty}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.1}</text>"#,
            v * 100.0,
            cx = x + bar_w / 2.0,
            ty = base - h - 3.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{ty}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            svg_escape(label),
            cx = x + bar_w / 2.0,
            ty = base + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Five-number summary used for box plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxSummary {
    /// Quartiles by linear interpolation between closest ranks.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(BoxSummary {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

pub fn box_plot_svg(title: &str, boxes: &[(String, BoxSummary)]) -> String {
    let box_w = 36.0;
    let gap = 28.0;
    let height = 240.0;
    let left = 40.0;
    let top = 30.0;
    let width = left + boxes.len() as f64 * (box_w + gap) + gap;
    let y = |v: f64| top + height - v.clamp(0.0, 1.0) * height;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = width,
        h = height + top + 40.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="18" font-family="sans-serif" font-size="14">{}</text>"#,
        svg_escape(title)
    );
    for (i, (label, b)) in boxes.iter().enumerate() {
        let x = left + gap + i as f64 * (box_w + gap);
        let cx = x + box_w / 2.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="#000"/>"##,
            y(b.max),
            y(b.min)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{}" width="{box_w}" height="{}" fill="#9cc3e6" stroke="#000"/>"##,
            y(b.q3),
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{x}" y1="{m}" x2="{}" y2="{m}" stroke="#c00" stroke-width="2"/>"##,
            x + box_w,
            m = y(b.median)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            top + height + 16.0,
            svg_escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
