//! SVG 1.1 maps of a sweep on log-log axes.

use std::fmt::Write as _;
use std::str::FromStr;

use elphot::measures::{MeasureResult, RegimeThresholds};

use crate::contour::{marching_squares, FieldGrid, Polyline};
use crate::error::{CliError, Result};
use crate::sweep::{SweepGrid, FAILED_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    PuritySc,
    PurityZ,
    VarRelPos,
    VarTotWv,
    D2,
    SchmidtNumber,
}

impl Field {
    pub const ALL: [Field; 6] =
        [Field::PuritySc, Field::PurityZ, Field::VarRelPos, Field::VarTotWv, Field::D2, Field::SchmidtNumber];

    /// Same names as the CSV columns.
    pub fn name(&self) -> &'static str {
        match self {
            Field::PuritySc => "purity_sc",
            Field::PurityZ => "purity_z",
            Field::VarRelPos => "var_rel_pos_um2",
            Field::VarTotWv => "var_tot_wv_um_inv2",
            Field::D2 => "d2",
            Field::SchmidtNumber => "schmidt_number",
        }
    }

    pub fn value(&self, r: &MeasureResult) -> f64 {
        match self {
            Field::PuritySc => r.purity_sc,
            Field::PurityZ => r.purity_z,
            Field::VarRelPos => r.var_rel_pos,
            Field::VarTotWv => r.var_tot_wavevector,
            Field::D2 => r.d2,
            Field::SchmidtNumber => r.schmidt_number,
        }
    }

    /// Colored on a log scale.
    pub fn is_log(&self) -> bool {
        !matches!(self, Field::PuritySc | Field::PurityZ)
    }
}

impl FromStr for Field {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<_> = Field::ALL.iter().map(Field::name).collect();
            CliError::Config(format!("unknown field {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Piecewise-linear color ramp through the anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub anchors: Vec<[u8; 3]>,
}

impl Palette {
    pub fn viridis() -> Self {
        Palette {
            anchors: vec![[68, 1, 84], [65, 68, 135], [42, 120, 142], [34, 168, 132], [122, 209, 81], [253, 231, 37]],
        }
    }

    pub fn grayscale() -> Self {
        Palette { anchors: vec![[0, 0, 0], [255, 255, 255]] }
    }

    /// Color at t ∈ [0, 1] as `#rrggbb`.
    pub fn color(&self, t: f64) -> String {
        let n = self.anchors.len();
        if n == 1 {
            let [r, g, b] = self.anchors[0];
            return format!("#{r:02x}{g:02x}{b:02x}");
        }
        let x = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (x.floor() as usize).min(n - 2);
        let f = x - k as f64;
        let (a, b) = (self.anchors[k], self.anchors[k + 1]);
        let mix = |c: usize| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8;
        format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
    }
}

impl Default for Palette {
    fn default() -> Self {
        Palette::viridis()
    }
}

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

/// Plot-area geometry: cell (i, j) spans one uniform slot on each axis, which
/// is uniform in log Δq⊥ and log Δk_ph for log-spaced sweeps.
struct Frame {
    nx: usize,
    ny: usize,
    pw: f64,
    ph: f64,
}

impl Frame {
    fn new(grid: &SweepGrid) -> Self {
        Frame { nx: grid.dq_perp.len(), ny: grid.dk_ph.len(), pw: WIDTH - LEFT - RIGHT, ph: HEIGHT - TOP - BOTTOM }
    }

    fn x(&self, i: f64) -> f64 {
        LEFT + (i + 0.5) / self.nx as f64 * self.pw
    }

    fn y(&self, j: f64) -> f64 {
        TOP + self.ph - (j + 0.5) / self.ny as f64 * self.ph
    }
}

/// Cell edges in data units: geometric midpoints, half a step beyond the
/// ends. A single value gets one decade.
fn log_edges(axis: &[f64]) -> (f64, f64) {
    match axis.len() {
        1 => (axis[0] / 10f64.sqrt(), axis[0] * 10f64.sqrt()),
        n => {
            let lo = axis[0] * (axis[0] / axis[1]).sqrt();
            let hi = axis[n - 1] * (axis[n - 1] / axis[n - 2]).sqrt();
            (lo, hi)
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if (1e-3..1e4).contains(&v) {
        format!("{v}")
    } else {
        format!("1e{}", v.log10().round() as i32)
    }
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<title>{title}</title>"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
}

/// Decade ticks along one axis. Axes spanning less than a decade get their
/// end values instead.
fn axis_ticks(svg: &mut String, frame: &Frame, axis: &[f64], horizontal: bool) {
    let n = axis.len();
    let (lo, hi) = log_edges(axis);
    // Fractional index of a value, linear in log between the cell centers.
    let index = |v: f64| -> f64 {
        if n == 1 {
            return (v.ln() - axis[0].ln()) / (hi.ln() - lo.ln());
        }
        (v.ln() - axis[0].ln()) / (axis[n - 1].ln() - axis[0].ln()) * (n - 1) as f64
    };
    let mut ticks: Vec<f64> = (lo.log10().ceil() as i32..=hi.log10().floor() as i32).map(|e| 10f64.powi(e)).collect();
    if ticks.is_empty() {
        ticks = if n == 1 { vec![axis[0]] } else { vec![axis[0], axis[n - 1]] };
    }
    for v in ticks {
        let f = index(v);
        if horizontal {
            let x = frame.x(f);
            let y = TOP + frame.ph;
            let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y + 5.0);
            let _ =
                writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y + 18.0, fmt_tick(v));
        } else {
            let y = frame.y(f);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/>"#,
                LEFT - 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                y + 4.0,
                fmt_tick(v)
            );
        }
    }
}

fn axes(svg: &mut String, frame: &Frame, grid: &SweepGrid) {
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        frame.pw, frame.ph
    );
    axis_ticks(svg, frame, &grid.dq_perp, true);
    axis_ticks(svg, frame, &grid.dk_ph, false);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Δq⊥ (μm⁻¹)</text>"#,
        LEFT + 0.5 * frame.pw,
        HEIGHT - 15.0
    );
    let (cx, cy) = (20.0, TOP + 0.5 * frame.ph);
    let _ = writeln!(
        svg,
        r#"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">Δk_ph (μm⁻¹)</text>"#
    );
}

fn cells<F: Fn(usize, usize) -> String>(svg: &mut String, frame: &Frame, fill: F) {
    let (w, h) = (frame.pw / frame.nx as f64, frame.ph / frame.ny as f64);
    for j in 0..frame.ny {
        for i in 0..frame.nx {
            let x = frame.x(i as f64) - 0.5 * w;
            let y = frame.y(j as f64) - 0.5 * h;
            // Slight overlap hides anti-aliasing seams.
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}" shape-rendering="crispEdges"/>"#,
                w + 0.3,
                h + 0.3,
                fill(i, j)
            );
        }
    }
}

fn polylines(svg: &mut String, frame: &Frame, lines: &[Polyline], stroke: &str, dash: Option<&str>, class: &str) {
    for line in lines {
        let pts: Vec<String> = line.iter().map(|&(i, j)| format!("{:.2},{:.2}", frame.x(i), frame.y(j))).collect();
        let dash = dash.map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
        let _ = writeln!(
            svg,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        );
    }
}

/// D² = threshold in white, purity = threshold dashed black.
fn contours(svg: &mut String, frame: &Frame, grid: &SweepGrid, thresholds: &RegimeThresholds) -> (usize, usize) {
    let d2 = FieldGrid::from_sweep(grid, |r| r.d2.log10());
    let epr = marching_squares(&d2, thresholds.epr_threshold.log10());
    polylines(svg, frame, &epr, "white", None, "contour-epr");
    let p = FieldGrid::from_sweep(grid, |r| r.purity_sc);
    let pur = marching_squares(&p, thresholds.purity_threshold);
    polylines(svg, frame, &pur, "black", Some("6,4"), "contour-purity");
    (epr.len(), pur.len())
}

fn line_legend(svg: &mut String, y0: f64, thresholds: &RegimeThresholds) {
    let x = WIDTH - RIGHT + 20.0;
    let entries = [
        ("#888888", "white", "", format!("D² = {}", thresholds.epr_threshold)),
        ("none", "black", r#" stroke-dasharray="6,4""#, format!("P = {:.3}", thresholds.purity_threshold)),
    ];
    for (k, (bg, stroke, dash, label)) in entries.iter().enumerate() {
        let y = y0 + 20.0 * k as f64;
        let _ = writeln!(svg, r#"<rect x="{x:.2}" y="{:.2}" width="28" height="12" fill="{bg}"/>"#, y - 6.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}" stroke-width="2"{dash}/>"#,
            x + 28.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, x + 34.0, y + 4.0);
    }
}

fn complete(grid: &SweepGrid) -> Result<()> {
    if grid.cells.is_empty() || grid.cells.len() != grid.dq_perp.len() * grid.dk_ph.len() {
        return Err(CliError::Failed("cannot render an empty or ragged grid".into()));
    }
    match grid.failures() {
        0 => Ok(()),
        n => Err(CliError::Failed(format!("cannot render a grid with {n} failed cells"))),
    }
}

/// Heatmap of one field with the two threshold contours and a color bar.
/// Deterministic: the same inputs give the same bytes.
pub fn render_heatmap(
    grid: &SweepGrid,
    field: Field,
    palette: &Palette,
    thresholds: &RegimeThresholds,
) -> Result<String> {
    complete(grid)?;
    let raw: Vec<f64> = grid.cells.iter().map(|c| field.value(c.outcome.result().unwrap())).collect();
    let scaled: Vec<f64> = if field.is_log() {
        if raw.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(CliError::Failed(format!("{} has non-positive values; cannot use a log scale", field.name())));
        }
        raw.iter().map(|v| v.log10()).collect()
    } else {
        raw.clone()
    };
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };

    let frame = Frame::new(grid);
    let mut svg = String::new();
    header(&mut svg, field.name());
    cells(&mut svg, &frame, |i, j| palette.color(t(scaled[j * frame.nx + i])));
    contours(&mut svg, &frame, grid, thresholds);
    axes(&mut svg, &frame, grid);

    // Color bar.
    let (bx, by, bw, bh) = (WIDTH - RIGHT + 20.0, TOP, 18.0, 0.6 * frame.ph);
    let steps = 64;
    for k in 0..steps {
        let y = by + bh * (1.0 - (k + 1) as f64 / steps as f64);
        let _ = writeln!(
            svg,
            r#"<rect x="{bx:.2}" y="{y:.2}" width="{bw:.2}" height="{:.2}" fill="{}" shape-rendering="crispEdges"/>"#,
            bh / steps as f64 + 0.3,
            palette.color((k as f64 + 0.5) / steps as f64)
        );
    }
    let unscale = |v: f64| if field.is_log() { 10f64.powf(v) } else { v };
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + bw + 4.0, by + 10.0, fmt_value(unscale(hi)));
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, bx + bw + 4.0, by + bh, fmt_value(unscale(lo)));
    let scale = if field.is_log() { "log" } else { "linear" };
    let _ = writeln!(svg, r#"<text x="{bx:.2}" y="{:.2}">{} ({scale})</text>"#, by + bh + 20.0, field.name());
    line_legend(&mut svg, by + bh + 45.0, thresholds);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Regime colors: A, B, C, anomaly, failed.
const REGIME_COLORS: [(&str, &str); 5] =
    [("A", "#d95f02"), ("B", "#7570b3"), ("C", "#1b9e77"), ("anomaly", "#e7298a"), (FAILED_LABEL, "#999999")];

fn regime_color(label: &str) -> &'static str {
    REGIME_COLORS.iter().find(|(l, _)| *l == label).map_or("#000000", |(_, c)| c)
}

/// Categorical map of the regime labels with the same contours and a
/// legend carrying the census.
pub fn render_regime_map(grid: &SweepGrid, thresholds: &RegimeThresholds) -> Result<String> {
    complete(grid)?;
    let frame = Frame::new(grid);
    let mut svg = String::new();
    header(&mut svg, "regimes");
    cells(&mut svg, &frame, |i, j| regime_color(grid.cell(i, j).outcome.result().unwrap().regime.label()).to_string());
    contours(&mut svg, &frame, grid, thresholds);
    axes(&mut svg, &frame, grid);
    let census = grid.census();
    let x = WIDTH - RIGHT + 20.0;
    for (k, (label, color)) in REGIME_COLORS.iter().take(4).enumerate() {
        let y = TOP + 20.0 * k as f64;
        let n = census.get(*label).copied().unwrap_or(0);
        let _ = writeln!(svg, r#"<rect x="{x:.2}" y="{y:.2}" width="14" height="14" fill="{color}"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{label}: {n}</text>"#, x + 20.0, y + 11.0);
    }
    line_legend(&mut svg, TOP + 100.0, thresholds);
    svg.push_str("</svg>\n");
    Ok(svg)
}
