//! Plot-ready exports: CSV tables and self-contained SVG figures.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ringsens_core::sensitivity::{DensityMap, ErrorSurface, SensitivityRecord};

use crate::error::{CliError, Result};
use crate::io::write_with;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

/// Which log-sensitivity goes on the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sensitivity {
    Analytic,
    Kde,
}

impl Sensitivity {
    fn value(self, r: &SensitivityRecord) -> f64 {
        match self {
            Sensitivity::Analytic => r.s_a,
            Sensitivity::Kde => r.s_k_abs,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Sensitivity::Analytic => "s_a",
            Sensitivity::Kde => "|s_k|",
        }
    }
}

/// One scatter point with every plotted column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub controller: String,
    pub nominal_error: f64,
    pub s_a: f64,
    pub s_k: f64,
    pub s_k_abs: f64,
    pub orthogonal_pair: Option<bool>,
    pub log10_e: Option<f64>,
    pub log10_s: Option<f64>,
}

fn log10_positive(v: f64) -> Option<f64> {
    (v > 0.0 && v.is_finite()).then(|| v.log10())
}

pub fn scatter_rows(records: &[SensitivityRecord], axis: Sensitivity) -> Vec<ScatterRow> {
    records
        .iter()
        .map(|r| ScatterRow {
            controller: r.controller.clone(),
            nominal_error: r.nominal_error,
            s_a: r.s_a,
            s_k: r.s_k,
            s_k_abs: r.s_k_abs,
            orthogonal_pair: r.orthogonal_pair,
            log10_e: log10_positive(r.nominal_error),
            log10_s: log10_positive(axis.value(r)),
        })
        .collect()
}

/// Log-log scatter of `e(T)` against a log-sensitivity.
pub fn export_scatter(records: &[SensitivityRecord], axis: Sensitivity, format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(CliError::Config("scatter export needs at least one record".into()));
    }
    let rows = scatter_rows(records, axis);
    match format {
        Format::Csv => write_with(path, |w| write_scatter_csv(&rows, w)),
        Format::Svg => {
            let svg = scatter_svg(&rows, axis);
            write_with(path, |w| w.write_all(svg.as_bytes()))
        }
    }
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()
}

pub fn read_scatter_csv(path: &Path) -> Result<Vec<ScatterRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<ScatterRow>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Whole decades covering `values`, at least one decade wide.
pub fn decade_range(values: impl Iterator<Item = f64>) -> (i32, i32) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0, 1);
    }
    let (lo, hi) = (lo.floor() as i32, hi.ceil() as i32);
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        (WIDTH - MARGIN_RIGHT + MARGIN_LEFT) / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn draw_box(s: &mut String, f: &Frame) {
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        f.px(f.x.1) - f.px(f.x.0),
        f.py(f.y.0) - f.py(f.y.1)
    );
}

fn decade_label(k: i32) -> String {
    format!(r#"10<tspan dy="-6" font-size="9">{k}</tspan>"#)
}

fn scatter_svg(rows: &[ScatterRow], axis: Sensitivity) -> String {
    let points: Vec<(&ScatterRow, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r, r.log10_e?, r.log10_s?)))
        .collect();
    let (x0, x1) = decade_range(points.iter().map(|p| p.1));
    let (y0, y1) = decade_range(points.iter().map(|p| p.2));
    let f = Frame {
        x: (x0 as f64, x1 as f64),
        y: (y0 as f64, y1 as f64),
    };
    let mut s = svg_open(&format!("{} against e(T)", axis.label()));
    let _ = writeln!(
        s,
        "<desc>{} records, {} plotted, {} without a positive value on a log axis</desc>",
        rows.len(),
        points.len(),
        rows.len() - points.len()
    );
    for k in x0..=x1 {
        let x = f.px(k as f64);
        let _ = writeln!(
            s,
            r##"<line class="xtick" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#ddd"/><text x="{x}" y="{}" text-anchor="middle">{}</text>"##,
            f.py(f.y.0),
            f.py(f.y.1),
            f.py(f.y.0) + 18.0,
            decade_label(k)
        );
    }
    for k in y0..=y1 {
        let y = f.py(k as f64);
        let _ = writeln!(
            s,
            r##"<line class="ytick" x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            f.px(f.x.0),
            f.px(f.x.1),
            f.px(f.x.0) - 6.0,
            y + 4.0,
            decade_label(k)
        );
    }
    draw_box(&mut s, &f);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">fidelity error e(T)</text>"#,
        (f.px(f.x.0) + f.px(f.x.1)) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">log-sensitivity {}</text>"#,
        (f.py(f.y.0) + f.py(f.y.1)) / 2.0,
        axis.label()
    );
    for (r, x, y) in &points {
        let (cx, cy) = (f.px(*x), f.py(*y));
        let _ = writeln!(s, "{}", marker(r.orthogonal_pair, cx, cy));
    }
    let lx = WIDTH - MARGIN_RIGHT + 15.0;
    for (i, (class, label)) in [(Some(true), "orthogonal pair"), (Some(false), "other"), (None, "unclassified")]
        .into_iter()
        .enumerate()
    {
        let ly = MARGIN_TOP + 15.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"{}<text x="{}" y="{}">{label}</text>"#,
            marker(class, lx, ly),
            lx + 10.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn marker(class: Option<bool>, x: f64, y: f64) -> String {
    match class {
        Some(true) => format!(
            r##"<rect class="pair" x="{:.2}" y="{:.2}" width="7" height="7" fill="none" stroke="#c0392b"/>"##,
            x - 3.5,
            y - 3.5
        ),
        Some(false) => format!(
            r##"<path class="nonpair" d="M{:.2} {:.2}l7 7m0 -7l-7 7" stroke="#1f4e9c"/>"##,
            x - 3.5,
            y - 3.5
        ),
        None => format!(r##"<circle class="unclassified" cx="{x:.2}" cy="{y:.2}" r="3" fill="#888"/>"##),
    }
}

/// Per-strength mean and standard deviation of a surface.
pub fn overlay(surface: &ErrorSurface) -> Vec<(f64, f64, f64)> {
    surface
        .deltas()
        .iter()
        .zip(surface.mean())
        .zip(surface.variance())
        .map(|((d, m), v)| (*d, *m, v.sqrt()))
        .collect()
}

/// Density grid over (δ, error) with the mean ± std overlay.
///
/// CSV layout: header `delta,mean,std,<error axis values…>`, one row per δ.
pub fn export_heatmap(surface: &ErrorSurface, densities: &DensityMap, format: Format, path: &Path) -> Result<()> {
    if densities.deltas.len() != surface.deltas().len() {
        return Err(CliError::Config("density map does not match the surface".into()));
    }
    let rows = overlay(surface);
    match format {
        Format::Csv => write_with(path, |w| {
            let mut out = csv::Writer::from_writer(w);
            let mut header = vec!["delta".to_string(), "mean".into(), "std".into()];
            header.extend(densities.error_axis.iter().map(|e| e.to_string()));
            out.write_record(&header)?;
            for ((d, m, sd), density) in rows.iter().zip(&densities.density) {
                let mut rec = vec![d.to_string(), m.to_string(), sd.to_string()];
                rec.extend(density.iter().map(|v| v.to_string()));
                out.write_record(&rec)?;
            }
            out.flush()
        }),
        Format::Svg => {
            let svg = heatmap_svg(&rows, densities);
            write_with(path, |w| w.write_all(svg.as_bytes()))
        }
    }
}

/// Columns drawn in the SVG heatmap at most.
const SVG_COLUMNS: usize = 200;

fn heatmap_svg(rows: &[(f64, f64, f64)], map: &DensityMap) -> String {
    let e_lo = map.error_axis.first().copied().unwrap_or(0.0);
    let e_hi = map.error_axis.last().copied().unwrap_or(1.0);
    let f = Frame {
        x: (0.0, map.deltas.last().copied().unwrap_or(1.0).max(1e-12)),
        y: (e_lo, if e_hi > e_lo { e_hi } else { e_lo + 1.0 }),
    };
    let mut s = svg_open("error density against dephasing strength");
    let stride = map.deltas.len().div_ceil(SVG_COLUMNS).max(1);
    let bins = map.error_axis.len();
    let cell_h = (f.py(f.y.0) - f.py(f.y.1)) / bins as f64;
    for j in (0..map.deltas.len()).step_by(stride) {
        let column = &map.density[j];
        let peak = column.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        let next = (j + stride).min(map.deltas.len() - 1);
        let x = f.px(map.deltas[j]);
        let w = if next > j { f.px(map.deltas[next]) - x } else { 2.0 };
        for (i, v) in column.iter().enumerate() {
            let level = v / peak;
            if level < 1e-3 {
                continue;
            }
            let y = f.py(map.error_axis[i]) - cell_h / 2.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                w.max(0.5),
                cell_h.max(0.5),
                ramp(level)
            );
        }
    }
    draw_box(&mut s, &f);
    let line = |pick: &dyn Fn(&(f64, f64, f64)) -> f64| {
        rows.iter()
            .step_by(stride)
            .map(|r| format!("{:.2},{:.2}", f.px(r.0), f.py(pick(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(
        s,
        r#"<polyline class="mean" points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        line(&|r| r.1)
    );
    for sign in [-1.0, 1.0] {
        let _ = writeln!(
            s,
            r#"<polyline class="std" points="{}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#,
            line(&|r| r.1 + sign * r.2)
        );
    }
    for k in 0..=4 {
        let d = f.x.0 + (f.x.1 - f.x.0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{d:.2}</text>"#,
            f.px(d),
            f.py(f.y.0) + 18.0
        );
        let e = f.y.0 + (f.y.1 - f.y.0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{e:.3e}</text>"#,
            f.px(f.x.0) - 6.0,
            f.py(e) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">dephasing strength δ</text>"#,
        (f.px(f.x.0) + f.px(f.x.1)) / 2.0,
        HEIGHT - 12.0
    );
    s.push_str("</svg>\n");
    s
}

/// White to dark blue.
fn ramp(level: f64) -> String {
    let l = level.clamp(0.0, 1.0);
    let c = |a: f64, b: f64| (a + (b - a) * l).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(255.0, 8.0), c(255.0, 48.0), c(255.0, 107.0))
}
