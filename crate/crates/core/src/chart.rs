//! Static SVG line and scatter charts.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { label: label.into(), x, y }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    #[default]
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
    #[serde(default)]
    pub kind: ChartKind,
    pub series: Vec<Series>,
}

impl ChartSpec {
    pub fn line(title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            kind: ChartKind::Line,
            series,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::Render("chart has no series".into()));
        }
        let mut direction: Option<bool> = None;
        for s in &self.series {
            if s.x.len() != s.y.len() {
                return Err(Error::Render(format!("series {:?} has {} x and {} y values", s.label, s.x.len(), s.y.len())));
            }
            if s.x.is_empty() {
                return Err(Error::Render(format!("series {:?} is empty", s.label)));
            }
            if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
                return Err(Error::Render(format!("series {:?} has a non-finite value", s.label)));
            }
            if (self.log_x && s.x.iter().any(|v| *v <= 0.0)) || (self.log_y && s.y.iter().any(|v| *v <= 0.0)) {
                return Err(Error::Render(format!("series {:?} has a non-positive value on a log axis", s.label)));
            }
            if self.kind == ChartKind::Line {
                let up = s.x.windows(2).all(|w| w[1] >= w[0]);
                let down = s.x.windows(2).all(|w| w[1] <= w[0]);
                if !up && !down {
                    return Err(Error::Render(format!("series {:?} has non-monotone x", s.label)));
                }
                let first = s.x[0];
                let last = s.x[s.x.len() - 1];
                if first != last {
                    let this = last > first;
                    if direction.is_some_and(|d| d != this) {
                        return Err(Error::Render(format!("series {:?} runs against the others in x", s.label)));
                    }
                    direction = Some(this);
                }
            }
        }
        Ok(())
    }
}

/// Formats with 6 significant digits and no trailing zeros.
pub fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let s = if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    };
    trim_zeros(&s)
}

fn trim_zeros(s: &str) -> String {
    let (mantissa, exp) = match s.find('e') {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, ""),
    };
    let mantissa = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
    let out = format!("{mantissa}{exp}");
    if out == "-0" {
        "0".into()
    } else {
        out
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = values
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo == hi {
            // pad a constant range symmetrically
            let pad = if log { 1.0 } else { (lo.abs() * 0.1).max(1.0) };
            lo -= pad;
            hi += pad;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b - a >= 1 {
                let stride = ((b - a) / 6 + 1) as usize;
                return (a..=b).step_by(stride).map(|e| 10f64.powi(e)).collect();
            }
            return vec![10f64.powf(self.lo), 10f64.powf(self.hi)];
        }
        let step = nice_step((self.hi - self.lo) / 5.0);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn nice_step(raw: f64) -> f64 {
    let p = 10f64.powf(raw.log10().floor());
    let m = raw / p;
    let nice = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * p
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_chart_string(spec: &ChartSpec) -> Result<String> {
    spec.validate()?;
    let xa = Axis::new(spec.series.iter().flat_map(|s| s.x.iter().copied()), spec.log_x);
    let ya = Axis::new(spec.series.iter().flat_map(|s| s.y.iter().copied()), spec.log_y);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + xa.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - ya.frac(v)) * ph;

    let mut svg = String::new();
    let w = &mut svg;
    // writing to a String cannot fail
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(w, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);

    for t in xa.ticks() {
        let x = px(t);
        let _ = writeln!(w, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, format_tick(t));
    }
    for t in ya.ticks() {
        let y = py(t);
        let _ = writeln!(w, r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/>"##, LEFT - 5.0);
        let _ = writeln!(w, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/>"##, LEFT + pw);
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, format_tick(t));
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );

    for (i, s) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match spec.kind {
            ChartKind::Line => {
                let pts: Vec<String> = s.x.iter().zip(&s.y).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
                let _ = writeln!(
                    w,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            ChartKind::Scatter => {
                for (x, y) in s.x.iter().zip(&s.y) {
                    let _ = writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(*x), py(*y));
                }
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_chart(spec: &ChartSpec, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_chart_string(spec)?;
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(series: Vec<Series>) -> ChartSpec {
        ChartSpec::line("t", "x", "y", series)
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(render_chart_string(&spec(vec![])), Err(Error::Render(_))));
    }

    #[test]
    fn non_finite_names_series() {
        let e = render_chart_string(&spec(vec![Series::new("bad one", vec![0.0, 1.0], vec![1.0, f64::NAN])])).unwrap_err();
        assert!(e.to_string().contains("bad one"));
    }

    #[test]
    fn constant_series_is_centered() {
        let s = render_chart_string(&spec(vec![Series::new("c", vec![0.0, 1.0, 2.0], vec![0.5, 0.5, 0.5])])).unwrap();
        let mid = TOP + (HEIGHT - TOP - BOTTOM) / 2.0;
        assert!(s.contains(&format!("{:.2},{mid:.2}", LEFT)));
    }

    #[test]
    fn deterministic_bytes() {
        let sp = spec(vec![Series::new("a<b", vec![0.0, 1.0, 2.0], vec![0.3, 0.2, 0.1])]);
        assert_eq!(render_chart_string(&sp).unwrap(), render_chart_string(&sp).unwrap());
        assert!(render_chart_string(&sp).unwrap().contains("a&lt;b"));
    }

    #[test]
    fn tick_format_six_significant() {
        assert_eq!(format_tick(0.0), "0");
        assert_eq!(format_tick(1.0), "1");
        assert_eq!(format_tick(0.1 + 0.2), "0.3");
        assert_eq!(format_tick(123456.7), "123457");
        assert_eq!(format_tick(1234567.0), "1.23457e6");
        assert_eq!(format_tick(-0.000012345678), "-1.23457e-5");
        assert_eq!(format_tick(2.5e-3), "0.0025");
    }

    #[test]
    fn log_axis_rejects_non_positive() {
        let mut sp = spec(vec![Series::new("a", vec![1.0, 2.0], vec![0.0, 1.0])]);
        sp.log_y = true;
        assert!(render_chart_string(&sp).is_err());
    }

    #[test]
    fn non_monotone_line_rejected_but_scatter_allowed() {
        let mut sp = spec(vec![Series::new("a", vec![0.0, 2.0, 1.0], vec![0.0, 1.0, 2.0])]);
        assert!(render_chart_string(&sp).is_err());
        sp.kind = ChartKind::Scatter;
        assert!(render_chart_string(&sp).is_ok());
    }
}
