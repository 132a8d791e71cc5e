//! Minimal SVG charts: curves with shaded bands, log-log scatter with fit
//! lines, heatmaps and plain scatter plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One curve with a shaded `[lo, hi]` band.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Points plus an optional fitted line `y = a + b·x` in plot coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub line: Option<(f64, f64)>,
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn bounds<'a>(vals: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

impl Axes {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let (x0, x1) = padded(x.0, x.1);
        let (y0, y1) = padded(y.0, y.1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    /// Frame, ticks and labels. `log` axes label ticks as `10^v`.
    fn draw(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str, log: bool) {
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            svg,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x0 + f * (self.x1 - self.x0);
            let yv = self.y0 + f * (self.y1 - self.y0);
            let (xs, ys) = if log {
                (format!("{:.3}", 10f64.powf(xv)), format!("{:.3}", 10f64.powf(yv)))
            } else {
                (format!("{xv:.3}"), format!("{yv:.3}"))
            };
            let (x, y) = (self.px(xv), self.py(yv));
            let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{b}" x2="{x:.1}" y2="{}" stroke="black"/>"#, b + 5.0);
            let _ = writeln!(
                svg,
                r#"<text x="{x:.1}" y="{}" font-size="11" text-anchor="middle">{xs}</text>"#,
                b + 18.0
            );
            let _ = writeln!(svg, r#"<line x1="{}" y1="{y:.1}" x2="{l}" y2="{y:.1}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{ys}</text>"#,
                l - 8.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            H - 12.0,
            escape(xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(ylabel)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open() -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#) + "\n"
}

fn legend(svg: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{c}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            W - RIGHT - 110.0,
            y - 4.0,
            W - RIGHT - 94.0,
            y,
            escape(name)
        );
    }
}

fn polyline(axes: &Axes, xs: &[f64], ys: &[f64]) -> String {
    xs.iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean curves with min-max bands.
pub fn band_plot(title: &str, xlabel: &str, ylabel: &str, series: &[BandSeries]) -> String {
    let xr = bounds(series.iter().flat_map(|s| &s.x));
    let yr = bounds(series.iter().flat_map(|s| s.lo.iter().chain(&s.hi)));
    let axes = Axes::new(xr, yr);
    let mut svg = open();
    axes.draw(&mut svg, title, xlabel, ylabel, false);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let upper = polyline(&axes, &s.x, &s.hi);
        let xr: Vec<f64> = s.x.iter().rev().copied().collect();
        let lr: Vec<f64> = s.lo.iter().rev().copied().collect();
        let lower = polyline(&axes, &xr, &lr);
        let _ = writeln!(svg, r#"<polygon points="{upper} {lower}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#);
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            polyline(&axes, &s.x, &s.mean)
        );
    }
    legend(&mut svg, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

/// Points and fit lines on log-log axes; inputs are already `log10`.
pub fn loglog_plot(title: &str, xlabel: &str, ylabel: &str, series: &[PointSeries]) -> String {
    let xr = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| &p.0)));
    let yr = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| &p.1)));
    let axes = Axes::new(xr, yr);
    let mut svg = open();
    axes.draw(&mut svg, title, xlabel, ylabel, true);
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{c}"/>"#,
                axes.px(x),
                axes.py(y)
            );
        }
        if let Some((a, b)) = s.line {
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="5,3"/>"#,
                axes.px(axes.x0),
                axes.py(a + b * axes.x0),
                axes.px(axes.x1),
                axes.py(a + b * axes.x1)
            );
        }
    }
    legend(&mut svg, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

pub fn scatter_plot(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let axes = Axes::new(bounds(points.iter().map(|p| &p.0)), bounds(points.iter().map(|p| &p.1)));
    let mut svg = open();
    axes.draw(&mut svg, title, xlabel, ylabel, false);
    for &(x, y) in points {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.6"/>"#,
            axes.px(x),
            axes.py(y),
            PALETTE[0]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grayscale heatmap, darker for larger values; row 0 at the top.
pub fn heatmap(title: &str, matrix: &[Vec<f64>]) -> String {
    let n = matrix.len().max(1);
    let (lo, hi) = bounds(matrix.iter().flatten());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let side = (H - TOP - 20.0).min(W - 40.0);
    let cell = side / n as f64;
    let mut svg = open();
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let x0 = (W - side) / 2.0;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let shade = if v.is_finite() { 255.0 * (1.0 - (v - lo) / span) } else { 255.0 };
            let g = shade.round().clamp(0.0, 255.0) as u8;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g},{g},{g})"/>"#,
                x0 + j as f64 * cell,
                TOP + i as f64 * cell
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
