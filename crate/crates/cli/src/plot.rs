//! Log-log SVG rendering of iso-sparsity contours.

use std::fmt::Write;

use sparselaw::cost::Contour;
use thiserror::Error;

use crate::format::num;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("no contours to plot")]
    EmptyInput,
    #[error("contour point ({0}, {1}) is not positive; log axes need positive values")]
    NonPositive(f64, f64),
}

impl PlotError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotError::EmptyInput => "empty-input",
            PlotError::NonPositive(..) => "invalid-input",
        }
    }
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis { lo: lo - pad, hi: hi + pad, from, to }
    }

    fn map(&self, log_value: f64) -> f64 {
        self.from + (log_value - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo.ceil() as i32)..=(self.hi.floor() as i32)
    }
}

/// Renders contours (and optionally the compute-optimal frontier) as a
/// polyline per curve with parameters on the x axis and training FLOPs on the
/// y axis, both logarithmic. Output is byte-identical for identical input.
pub fn emit_contour_plot(contours: &[Contour], frontier: Option<&Contour>) -> Result<String, PlotError> {
    if contours.is_empty() || contours.iter().all(|c| c.points.is_empty()) {
        return Err(PlotError::EmptyInput);
    }
    let curves: Vec<(&Contour, String, &str, bool)> = contours
        .iter()
        .enumerate()
        .map(|(i, c)| (c, format!("S = {}", num(c.sparsity)), PALETTE[i % PALETTE.len()], false))
        .chain(frontier.map(|f| (f, "compute-optimal (dense)".to_string(), "#000000", true)))
        .collect();
    for (c, ..) in &curves {
        if let Some(p) = c.points.iter().find(|p| !(p.params > 0.0 && p.compute > 0.0)) {
            return Err(PlotError::NonPositive(p.params, p.compute));
        }
    }
    let all = || curves.iter().flat_map(|(c, ..)| c.points.iter());
    let x = Axis::new(all().map(|p| p.params.log10()), LEFT, WIDTH - RIGHT);
    let y = Axis::new(all().map(|p| p.compute.log10()), HEIGHT - BOTTOM, TOP);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{:.3}" height="{:.3}" fill="none" stroke="dimgray"/>"#,
        x1 - x0,
        y0 - y1
    );
    for k in x.decades() {
        let px = x.map(k as f64);
        let _ = writeln!(svg, r#"<line x1="{px:.3}" y1="{y0}" x2="{px:.3}" y2="{:.3}" stroke="dimgray"/>"#, y0 + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.3}" y="{:.3}" text-anchor="middle">1e{k}</text>"#,
            y0 + 20.0
        );
    }
    for k in y.decades() {
        let py = y.map(k as f64);
        let _ = writeln!(svg, r#"<line x1="{:.3}" y1="{py:.3}" x2="{x0}" y2="{py:.3}" stroke="dimgray"/>"#, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">1e{k}</text>"#,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">non-zero parameters N</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.3}" text-anchor="middle" transform="rotate(-90 20 {:.3})">training FLOPs C</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );

    for (i, (c, label, color, dashed)) in curves.iter().enumerate() {
        let coords: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.3},{:.3}", x.map(p.params.log10()), y.map(p.compute.log10())))
            .collect();
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline data-label="{label}" points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            coords.join(" ")
        );
        let ly = TOP + 20.0 * i as f64 + 10.0;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.3}" y1="{ly:.3}" x2="{:.3}" y2="{ly:.3}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}">{label}</text>"#, lx + 26.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
