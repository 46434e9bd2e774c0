//! Static SVG figures drawn directly: axes, log scales and markers as path
//! elements. Output depends only on the data, so identical runs give
//! identical files.

use std::fmt::Write;

use crate::tls::CohortSummary;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
    /// Linear placement without tick labels, for categorical axes.
    Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub label: String,
    pub scale: Scale,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    /// Axis covering `values`: whole decades on a log scale, 5 % padding on
    /// a linear one.
    pub fn covering(label: &str, scale: Scale, values: impl IntoIterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if v.is_finite() && (scale != Scale::Log || v > 0.0) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = if scale == Scale::Log { (1.0, 10.0) } else { (0.0, 1.0) };
        }
        let (lo, hi) = match scale {
            Scale::Log => {
                let (a, b) = (lo.log10().floor(), hi.log10().ceil());
                (10f64.powf(a), 10f64.powf(if b > a { b } else { a + 1.0 }))
            }
            Scale::Linear | Scale::Category => {
                let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
                (lo - pad, hi + pad)
            }
        };
        Axis { label: label.to_string(), scale, lo, hi }
    }

    /// Position of `v` in [0, 1] along the axis.
    fn unit(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear | Scale::Category => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10()),
        }
    }

    /// 2·10^k … 9·10^k inside the range of a log axis.
    fn minor_ticks(&self) -> Vec<f64> {
        let (a, b) = (self.lo.log10().floor() as i32, self.hi.log10().ceil() as i32);
        (a..b)
            .flat_map(|e| (2..10).map(move |m| m as f64 * 10f64.powi(e)))
            .filter(|v| *v > self.lo && *v < self.hi)
            .collect()
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        match self.scale {
            Scale::Category => Vec::new(),
            Scale::Log => {
                let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
                let step = ((b - a) as f64 / 8.0).ceil().max(1.0) as i32;
                (a..=b).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
            }
            Scale::Linear => {
                let raw = (self.hi - self.lo) / 5.0;
                let mag = 10f64.powf(raw.log10().floor());
                let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last)
                    .map(|k| {
                        let v = k as f64 * step;
                        (v, trim_number(v, step))
                    })
                    .collect()
            }
        }
    }
}

fn trim_number(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Line,
    Dashed,
    Dotted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
    pub color: String,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>, style: Style, color: &str) -> Self {
        Series { label: label.to_string(), points, style, color: color.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub series: Vec<Series>,
    /// Draw a horizontal reference line at y = 0.
    pub zero_line: bool,
}

const WIDTH: f64 = 720.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Panels stacked vertically, sharing the width. `heights` gives each
/// panel's plot-area height.
pub fn render_panels(panels: &[Panel], heights: &[f64]) -> String {
    let total: f64 = heights.iter().map(|h| h + MARGIN_T + MARGIN_B).sum();
    let mut out = String::new();
    header(&mut out, WIDTH, total);
    let mut top = 0.0;
    for (i, (panel, &h)) in panels.iter().zip(heights).enumerate() {
        draw_panel(&mut out, panel, top + MARGIN_T, h, i);
        top += h + MARGIN_T + MARGIN_B;
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, p: &Panel, top: f64, h: f64, index: usize) {
    let left = MARGIN_L;
    let w = WIDTH - MARGIN_L - MARGIN_R;
    let px = |x: f64| left + w * p.x.unit(x);
    let py = |y: f64| top + h * (1.0 - p.y.unit(y));
    let inside = |x: f64, y: f64| {
        let ok = |a: &Axis, v: f64| v.is_finite() && (a.scale != Scale::Log || v > 0.0);
        ok(&p.x, x) && ok(&p.y, y)
    };

    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        left + w / 2.0,
        top - 14.0,
        escape(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#333"/>"##
    );
    for (v, label) in p.x.ticks() {
        let x = px(v);
        let _ = writeln!(
            out,
            r##"<path d="M{x:.2} {:.2}V{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
            top + h,
            top + h + 5.0,
            top + h + 19.0
        );
    }
    if p.y.scale == Scale::Log && p.y.hi / p.y.lo <= 1e4 {
        let mut d = String::new();
        for v in p.y.minor_ticks() {
            let _ = write!(d, "M{:.2} {:.2}h3", left - 3.0, py(v));
        }
        let _ = writeln!(out, r##"<path d="{d}" stroke="#333"/>"##);
    }
    for (v, label) in p.y.ticks() {
        let y = py(v);
        let _ = writeln!(
            out,
            r##"<path d="M{:.2} {y:.2}H{left:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
            left - 5.0,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + w / 2.0,
        top + h + 38.0,
        escape(&p.x.label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate({:.2} {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        left - 58.0,
        top + h / 2.0,
        escape(&p.y.label)
    );
    if p.zero_line && p.y.scale == Scale::Linear && p.y.lo < 0.0 && p.y.hi > 0.0 {
        let _ = writeln!(
            out,
            r##"<path d="M{left:.2} {:.2}H{:.2}" stroke="#999" stroke-dasharray="2 3"/>"##,
            py(0.0),
            left + w
        );
    }

    let clip = format!("clip{index}");
    let _ = writeln!(
        out,
        r#"<clipPath id="{clip}"><rect x="{left:.2}" y="{top:.2}" width="{w:.2}" height="{h:.2}"/></clipPath>"#
    );
    let _ = writeln!(out, r#"<g clip-path="url(#{clip})">"#);
    for s in &p.series {
        let pts: Vec<(f64, f64)> =
            s.points.iter().filter(|(x, y)| inside(*x, *y)).map(|&(x, y)| (px(x), py(y))).collect();
        match s.style {
            Style::Markers => {
                let mut d = String::new();
                for (x, y) in &pts {
                    let _ = write!(d, "M{:.2} {:.2}h6v6h-6z", x - 3.0, y - 3.0);
                }
                let _ = writeln!(out, r#"<path d="{d}" fill="{}" stroke="none"/>"#, s.color);
            }
            _ => {
                let mut d = String::new();
                for (i, (x, y)) in pts.iter().enumerate() {
                    let _ = write!(d, "{}{x:.2} {y:.2}", if i == 0 { "M" } else { "L" });
                }
                let dash = match s.style {
                    Style::Dashed => r#" stroke-dasharray="8 4""#,
                    Style::Dotted => r#" stroke-dasharray="2 3""#,
                    _ => "",
                };
                let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#, s.color);
            }
        }
    }
    out.push_str("</g>\n");
    for (k, s) in p.series.iter().filter(|s| !s.label.is_empty()).enumerate() {
        let ly = top + 12.0 + 16.0 * k as f64;
        let lx = left + w + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 9.0,
            s.color,
            lx + 15.0,
            escape(&s.label)
        );
    }
}

/// One stacked bar: the two loss channels of a resonator.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBar {
    pub label: String,
    pub background: f64,
    pub tls: f64,
}

/// Bars normalized to the total loss, labelled inside with the absolute
/// loss of each channel.
pub fn stacked_fraction_bars(title: &str, bars: &[LossBar]) -> String {
    let h = 320.0;
    let total_h = h + MARGIN_T + MARGIN_B;
    let mut out = String::new();
    header(&mut out, WIDTH, total_h);
    let left = MARGIN_L;
    let w = WIDTH - MARGIN_L - MARGIN_R;
    let top = MARGIN_T;
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        left + w / 2.0,
        top - 14.0,
        escape(title)
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let y = top + h * (1.0 - f);
        let _ = writeln!(
            out,
            r##"<path d="M{:.2} {y:.2}H{left:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            k * 25
        );
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate({:.2} {:.2}) rotate(-90)" text-anchor="middle">share of internal loss (%)</text>"#,
        left - 50.0,
        top + h / 2.0
    );
    let n = bars.len().max(1) as f64;
    let slot = w / n;
    let bw = 0.7 * slot;
    for (i, b) in bars.iter().enumerate() {
        let x = left + slot * (i as f64 + 0.15);
        let total = b.background + b.tls;
        let fb = if total > 0.0 { b.background / total } else { 0.0 };
        let hb = h * fb;
        let ht = h - hb;
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{hb:.2}" fill="#4c72b0"/><rect x="{x:.2}" y="{top:.2}" width="{bw:.2}" height="{ht:.2}" fill="#dd8452"/>"##,
            top + ht
        );
        let cx = x + bw / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10" fill="white">{:.2e}</text><text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10" fill="white">{:.2e}</text>"#,
            top + ht + hb / 2.0 + 4.0,
            b.background,
            top + ht / 2.0 + 4.0,
            b.tls
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + h + 18.0,
            escape(&b.label)
        );
    }
    let lx = left + w + 12.0;
    let _ = writeln!(
        out,
        r##"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="#4c72b0"/><text x="{:.2}" y="{:.2}">1/Q0 (background)</text>"##,
        top + 3.0,
        lx + 15.0,
        top + 12.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="#dd8452"/><text x="{:.2}" y="{:.2}">1/Q_TLS</text>"##,
        top + 19.0,
        lx + 15.0,
        top + 28.0
    );
    out.push_str("</svg>\n");
    out
}

/// Q_TLS per cohort: every device as a marker, the cohort mean as a bar.
pub fn cohort_strip(title: &str, cohorts: &[CohortSummary]) -> String {
    let y = Axis::covering("Q_TLS", Scale::Log, cohorts.iter().flat_map(|c| c.q_tls_values.iter().copied()));
    let h = 320.0;
    let mut out = String::new();
    header(&mut out, WIDTH, h + MARGIN_T + MARGIN_B);
    let n = cohorts.len().max(1) as f64;
    let w = WIDTH - MARGIN_L - MARGIN_R;
    let frame = Panel {
        title: title.to_string(),
        x: Axis { label: String::new(), scale: Scale::Category, lo: 0.0, hi: n },
        y: y.clone(),
        series: Vec::new(),
        zero_line: false,
    };
    draw_panel(&mut out, &frame, MARGIN_T, h, 0);
    let py = |v: f64| MARGIN_T + h * (1.0 - y.unit(v));
    for (i, c) in cohorts.iter().enumerate() {
        let cx = MARGIN_L + w * (i as f64 + 0.5) / n;
        let col = color(i);
        let m = c.q_tls_values.len();
        let mut d = String::new();
        for (k, v) in c.q_tls_values.iter().enumerate() {
            let jitter = if m > 1 { 30.0 * (k as f64 / (m - 1) as f64 - 0.5) } else { 0.0 };
            let _ = write!(d, "M{:.2} {:.2}h6v6h-6z", cx + jitter - 3.0, py(*v) - 3.0);
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="{col}" fill-opacity="0.7"/>"#);
        let _ = writeln!(
            out,
            r#"<path d="M{:.2} {:.2}H{:.2}" stroke="{col}" stroke-width="3"/>"#,
            cx - 25.0,
            py(c.mean_q_tls),
            cx + 25.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text><text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">mean {:.2e}</text>"#,
            MARGIN_T + h + 18.0,
            escape(&c.cohort_label),
            MARGIN_T + h + 32.0,
            c.mean_q_tls
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_axis_snaps_to_decades() {
        let a = Axis::covering("n", Scale::Log, [3.0, 0.0, 2e5]);
        assert_eq!((a.lo, a.hi), (1.0, 1e6));
        assert_eq!(a.ticks().len(), 7);
        assert!((a.unit(1e3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_ticks_are_round() {
        let a = Axis::covering("r", Scale::Linear, [-3.2, 4.1]);
        let t = a.ticks();
        assert!(t.iter().any(|(v, l)| *v == 0.0 && l == "0"));
        assert!(t.len() >= 3 && t.len() <= 11);
    }

    #[test]
    fn deterministic_and_well_formed() {
        let p = Panel {
            title: "Qi <vs> n".into(),
            x: Axis::covering("n", Scale::Log, [1.0, 1e6]),
            y: Axis::covering("Q", Scale::Log, [1e6, 3e6]),
            series: vec![Series::new("R1", vec![(1.0, 1e6), (1e6, 3e6)], Style::Markers, color(0))],
            zero_line: false,
        };
        let a = render_panels(std::slice::from_ref(&p), &[300.0]);
        assert_eq!(a, render_panels(&[p], &[300.0]));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("&lt;vs&gt;"));
        let bars = stacked_fraction_bars("f", &[LossBar { label: "R1".into(), background: 3e-7, tls: 1e-7 }]);
        assert!(bars.contains("3.00e-7"));
        let c = CohortSummary::new("Nb", vec![2e6, 2.6e6]).unwrap();
        assert!(cohort_strip("c", &[c]).contains("mean 2.30e6"));
    }
}
