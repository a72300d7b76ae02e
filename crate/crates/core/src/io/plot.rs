use std::fmt::Write as _;
use std::path::Path;

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub style: SeriesStyle,
}

impl Series {
    pub fn line(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            x,
            y,
            style: SeriesStyle::Line,
        }
    }

    pub fn points(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            style: SeriesStyle::Points,
            ..Self::line(label, x, y)
        }
    }
}

/// A static line plot rendered to standalone SVG.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 56.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= 0.7 * raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(domain("a plot needs at least one series"));
        }
        for s in &self.series {
            if s.x.len() != s.y.len() {
                return Err(domain(format!(
                    "series '{}' has {} x and {} y values",
                    s.label,
                    s.x.len(),
                    s.y.len()
                )));
            }
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = || {
            self.series
                .iter()
                .flat_map(|s| s.x.iter().zip(&s.y))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
        };
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (&x, &y) in pts() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        let dy = 0.05 * (y1 - y0);
        (x0, x1, y0 - dy, y1 + dy)
    }

    pub fn to_svg(&self) -> Result<String> {
        self.validate()?;
        let (x0, x1, y0, y1) = self.bounds();
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;
        let mut s = String::new();
        let w = &mut s;
        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).ok();
        writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).ok();
        writeln!(
            w,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        )
        .ok();
        writeln!(w, r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).ok();
        for t in ticks(x0, x1) {
            let x = sx(t);
            writeln!(w, r#"<line x1="{x:.2}" y1="{0:.2}" x2="{x:.2}" y2="{1:.2}" stroke="black"/><text x="{x:.2}" y="{2:.2}" text-anchor="middle">{3}</text>"#, MARGIN_T + ph, MARGIN_T + ph + 5.0, MARGIN_T + ph + 18.0, fmt_tick(t)).ok();
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            writeln!(w, r#"<line x1="{0:.2}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/><text x="{1:.2}" y="{2:.2}" text-anchor="end">{3}</text>"#, MARGIN_L - 5.0, MARGIN_L - 8.0, y + 4.0, fmt_tick(t)).ok();
        }
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        )
        .ok();
        writeln!(w, r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#, MARGIN_T + ph / 2.0, escape(&self.y_label)).ok();
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<(f64, f64)> = series
                .x
                .iter()
                .zip(&series.y)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(&x, &y)| (sx(x), sy(y)))
                .collect();
            match series.style {
                SeriesStyle::Line => {
                    let path: Vec<String> =
                        pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" ")).ok();
                }
                SeriesStyle::Points => {
                    for (x, y) in &pts {
                        writeln!(
                            w,
                            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
                        )
                        .ok();
                    }
                }
            }
            let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
            let lx = MARGIN_L + pw - 150.0;
            writeln!(w, r#"<line x1="{lx}" y1="{0}" x2="{1}" y2="{0}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#, ly - 4.0, lx + 18.0, lx + 24.0, ly, escape(&series.label)).ok();
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg()?)?;
        Ok(())
    }
}
