//! Standalone SVG rendering: recovery-rate heatmaps and trajectory line charts.
//!
//! Output is a pure function of the input; coordinates are printed with fixed
//! precision so identical data gives byte-identical files.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::RecoveryReport;
use crate::record::RunRecord;

/// Ramp endpoint for rate 0 (light gray).
pub const RAMP_LOW: (u8, u8, u8) = (240, 240, 240);
/// Ramp endpoint for rate 1 (dark blue).
pub const RAMP_HIGH: (u8, u8, u8) = (8, 48, 107);

/// Linear per-channel interpolation from [`RAMP_LOW`] to [`RAMP_HIGH`].
/// Luminance decreases monotonically with the rate; inputs are clamped to `[0, 1]`.
pub fn ramp_color(rate: f64) -> (u8, u8, u8) {
    let r = if rate.is_nan() {
        0.0
    } else {
        rate.clamp(0.0, 1.0)
    };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * r).round() as u8;
    (
        mix(RAMP_LOW.0, RAMP_HIGH.0),
        mix(RAMP_LOW.1, RAMP_HIGH.1),
        mix(RAMP_LOW.2, RAMP_HIGH.2),
    )
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn trim_num(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

const CELL: f64 = 48.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Grid of recovery rates: rows are `n` (largest on top), columns are `N/n`.
/// The report's cells must cover `dims × ratios` in row-major order.
pub fn heatmap_svg(report: &RecoveryReport) -> Result<String> {
    let dims = &report.config.dims;
    let ratios = &report.config.ratios;
    if report.cells.is_empty() {
        return Err(Error::invalid("heatmap needs at least one cell"));
    }
    if report.cells.len() != dims.len() * ratios.len() {
        return Err(Error::invalid(format!(
            "heatmap expects {} cells for a {}x{} grid, got {}",
            dims.len() * ratios.len(),
            dims.len(),
            ratios.len(),
            report.cells.len()
        )));
    }
    let cols = ratios.len() as f64;
    let rows = dims.len() as f64;
    let width = MARGIN_LEFT + cols * CELL + 20.0;
    let height = MARGIN_TOP + rows * CELL + MARGIN_BOTTOM;
    let kind = match report.config.success_kind {
        crate::harness::SuccessKind::Ergodic => "ergodic",
        crate::harness::SuccessKind::LastIterate => "last-iterate",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{kind} recovery rate</text>"#,
        width / 2.0
    );
    for (idx, cell) in report.cells.iter().enumerate() {
        let (row, col) = (idx / ratios.len(), idx % ratios.len());
        // largest n on top
        let y = MARGIN_TOP + (rows - 1.0 - row as f64) * CELL;
        let x = MARGIN_LEFT + col as f64 * CELL;
        let rate = cell.rate();
        let fill = hex(ramp_color(rate));
        let ink = if rate > 0.5 { "#ffffff" } else { "#000000" };
        let _ = writeln!(
            s,
            r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" data-n="{}" data-N="{}" data-rate="{}"/>"#,
            cell.n, cell.n_samples, rate
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{:.2}</text>"#,
            x + CELL / 2.0,
            y + CELL / 2.0 + 4.0,
            rate
        );
    }
    for (row, n) in dims.iter().enumerate() {
        let y = MARGIN_TOP + (rows - 1.0 - row as f64) * CELL + CELL / 2.0 + 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end">{n}</text>"#,
            MARGIN_LEFT - 6.0
        );
    }
    let base = MARGIN_TOP + rows * CELL;
    for (col, r) in ratios.iter().enumerate() {
        let x = MARGIN_LEFT + col as f64 * CELL + CELL / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            base + 16.0,
            trim_num(*r)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">N/n</text>"#,
        MARGIN_LEFT + cols * CELL / 2.0,
        base + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">n</text>"#,
        MARGIN_TOP + rows * CELL / 2.0,
        MARGIN_TOP + rows * CELL / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 320.0;
const PAD_L: f64 = 60.0;
const PAD_R: f64 = 60.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 50.0;

fn series_path(values: &[f64], x_of: impl Fn(usize) -> f64, lo: f64, hi: f64) -> String {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut d = String::new();
    let mut pen_down = false;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            pen_down = false;
            continue;
        }
        let y = PAD_T + PLOT_H * (1.0 - (v - lo) / span);
        let _ = write!(
            d,
            "{}{:.2},{:.2} ",
            if pen_down { "L" } else { "M" },
            x_of(i),
            y
        );
        pen_down = true;
    }
    d.trim_end().to_string()
}

fn range(values: &[f64]) -> (f64, f64) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let hi = finite.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = finite.fold(f64::INFINITY, f64::min).min(0.0);
    if hi.is_finite() {
        (lo, hi.max(lo))
    } else {
        (0.0, 1.0)
    }
}

/// `‖wᵗ − w*‖` (left axis) and `L(wᵗ)` (right axis) against `t`.
pub fn lines_svg(record: &RunRecord) -> Result<String> {
    if record.is_empty() {
        return Err(Error::invalid("line chart needs at least one iteration"));
    }
    let len = record.len();
    let x_of = |i: usize| {
        if len == 1 {
            PAD_L + PLOT_W / 2.0
        } else {
            PAD_L + PLOT_W * i as f64 / (len - 1) as f64
        }
    };
    let (dlo, dhi) = range(record.dist_l2());
    let (llo, lhi) = range(record.loss());
    let width = PAD_L + PLOT_W + PAD_R;
    let height = PAD_T + PLOT_H + PAD_B;
    let bottom = PAD_T + PLOT_H;
    let right = PAD_L + PLOT_W;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{PAD_L}" y="{PAD_T}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#888888"/>"##
    );
    let _ = writeln!(
        s,
        r##"<path id="dist" d="{}" fill="none" stroke="#1f77b4" stroke-width="1"/>"##,
        series_path(record.dist_l2(), x_of, dlo, dhi)
    );
    let _ = writeln!(
        s,
        r##"<path id="loss" d="{}" fill="none" stroke="#d62728" stroke-width="1"/>"##,
        series_path(record.loss(), x_of, llo, lhi)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        PAD_L - 4.0,
        PAD_T + 4.0,
        trim_num(dhi)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        PAD_L - 4.0,
        bottom,
        trim_num(dlo)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        right + 4.0,
        PAD_T + 4.0,
        trim_num(lhi)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        right + 4.0,
        bottom,
        trim_num(llo)
    );
    let _ = writeln!(
        s,
        r#"<text x="{PAD_L}" y="{}" text-anchor="middle">1</text>"#,
        bottom + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{right}" y="{}" text-anchor="middle">{len}</text>"#,
        bottom + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        PAD_L + PLOT_W / 2.0,
        bottom + 36.0
    );
    let _ = writeln!(
        s,
        r##"<text x="{PAD_L}" y="18" fill="#1f77b4">‖wᵗ − w*‖</text>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{right}" y="18" text-anchor="end" fill="#d62728">L(wᵗ)</text>"##
    );
    s.push_str("</svg>\n");
    Ok(s)
}
