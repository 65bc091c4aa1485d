//! Self-contained SVG output: learning curves with confidence bands, and
//! bar charts.

use std::fmt::Write as _;
use std::path::Path;

use super::stats::CurveTable;
use super::HarnessError;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Data range padded so a flat series still gets a visible axis.
fn range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y: (f64, f64)) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    for i in 0..=4 {
        let v = y.0 + (y.1 - y.0) * i as f64 / 4.0;
        let py = y1 - (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{py:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>
<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 14.0,
        esc(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

/// Mean lines with shaded confidence bands, one labelled series per table.
pub fn render_curves(title: &str, tables: &[CurveTable]) -> Result<String, HarnessError> {
    if tables.is_empty() || tables.iter().all(|t| t.rows.is_empty()) {
        return Err(HarnessError::Aggregate("nothing to plot".into()));
    }
    let rows = || tables.iter().flat_map(|t| &t.rows);
    let x_max = rows().map(|r| r.episode).max().unwrap_or(0).max(1) as f64;
    let y = range(
        rows().map(|r| r.ci_low).fold(f64::INFINITY, f64::min),
        rows().map(|r| r.ci_high).fold(f64::NEG_INFINITY, f64::max),
    );
    let px = |e: u64| LEFT + (W - RIGHT - LEFT) * e as f64 / x_max;
    let py = |v: f64| (H - BOTTOM) - (H - BOTTOM - TOP) * (v - y.0) / (y.1 - y.0);

    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, "episode", "return", y);
    for (i, t) in tables.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band: Vec<String> = t.rows.iter().map(|r| format!("{:.2},{:.2}", px(r.episode), py(r.ci_high))).collect();
        band.extend(t.rows.iter().rev().map(|r| format!("{:.2},{:.2}", px(r.episode), py(r.ci_low))));
        let line: Vec<String> = t.rows.iter().map(|r| format!("{:.2},{:.2}", px(r.episode), py(r.mean))).collect();
        let _ = writeln!(
            out,
            r#"<g class="series"><title>{label}</title>
<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>
<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/></g>"#,
            band.join(" "),
            line.join(" "),
            label = esc(&t.label)
        );
        let ly = TOP + 18.0 * i as f64 + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - RIGHT + 12.0,
            W - RIGHT + 32.0,
            W - RIGHT + 38.0,
            ly + 4.0,
            esc(&t.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plot(title: &str, tables: &[CurveTable], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, render_curves(title, tables)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub bars: Vec<(String, f64)>,
}

/// Vertical bars from zero, labelled underneath.
pub fn render_bars(chart: &BarChart) -> Result<String, HarnessError> {
    if chart.bars.is_empty() {
        return Err(HarnessError::Aggregate("nothing to plot".into()));
    }
    let top = chart.bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let y = (0.0, if top > 0.0 { top * 1.1 } else { 1.0 });
    let plot_w = W - RIGHT - LEFT;
    let slot = plot_w / chart.bars.len() as f64;
    let mut out = String::new();
    open(&mut out, &chart.title);
    axes(&mut out, "", &chart.y_label, y);
    for (i, (label, v)) in chart.bars.iter().enumerate() {
        let h = (H - BOTTOM - TOP) * v.max(0.0) / y.1;
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"><title>{}: {v}</title></rect>
<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            H - BOTTOM - h,
            slot * 0.7,
            PALETTE[i % PALETTE.len()],
            esc(label),
            x + slot * 0.35,
            H - BOTTOM + 14.0,
            esc(label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_bars(chart: &BarChart, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, render_bars(chart)?)?;
    Ok(())
}
