//! The `plot` subcommand: renders mean-reward-versus-budget curves from a
//! result CSV into a hand-rolled SVG.
//!
//! One polyline per sampler; x is the budget multiplier on a log2 axis, y is
//! the mean terminal reward with ±1 standard-error whiskers. Rendering is
//! fully deterministic for a given input: samplers and budgets are iterated
//! in sorted order and every coordinate is formatted with fixed precision.
//! The output file is only created once rendering has succeeded, so an empty
//! or malformed CSV never leaves a file behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::csvio::read_result_rows;
use crate::runner::mean_and_se;
use crate::{CliError, CliResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Aggregated point: budget, mean reward, standard error.
type Curve = Vec<(u32, f64, f64)>;

/// Reads `csv`, aggregates means per (sampler, budget), and writes the SVG
/// to `out`.
pub fn plot_cmd(csv: &Path, out: &Path) -> CliResult<()> {
    let rows = read_result_rows(csv)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no data rows to plot",
            csv.display()
        )));
    }
    let mut grouped: BTreeMap<String, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry(row.sampler)
            .or_default()
            .entry(row.budget)
            .or_default()
            .push(row.terminal_reward);
    }
    let curves: BTreeMap<String, Curve> = grouped
        .into_iter()
        .map(|(sampler, budgets)| {
            let curve = budgets
                .into_iter()
                .map(|(budget, rewards)| {
                    let (mean, se) = mean_and_se(&rewards);
                    (budget, mean, se)
                })
                .collect();
            (sampler, curve)
        })
        .collect();
    let svg = render(&curves);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(out, svg)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn render(curves: &BTreeMap<String, Curve>) -> String {
    // Data ranges. x is log2(budget); budgets are >= 1 so log2 >= 0.
    let mut xs: Vec<f64> = Vec::new();
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for curve in curves.values() {
        for &(budget, mean, se) in curve {
            xs.push((budget as f64).log2());
            y_lo = y_lo.min(mean - se);
            y_hi = y_hi.max(mean + se);
        }
    }
    let (mut x_lo, mut x_hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if (x_hi - x_lo).abs() < 1e-9 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let y_pad = ((y_hi - y_lo) * 0.08).max(1e-3);
    y_lo -= y_pad;
    y_hi += y_pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">mean terminal reward vs budget</text>"#,
        MARGIN_LEFT + plot_w / 2.0
    );

    // Axes box.
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    );

    // X ticks at each distinct budget present.
    let mut budgets: Vec<u32> = curves
        .values()
        .flat_map(|c| c.iter().map(|&(b, _, _)| b))
        .collect();
    budgets.sort_unstable();
    budgets.dedup();
    for &b in &budgets {
        let x = px((b as f64).log2());
        let y0 = MARGIN_TOP + plot_h;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{b}</text>"#,
            y0 + 19.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">budget multiplier (log2 axis)</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );

    // Y ticks: five divisions.
    for i in 0..=4 {
        let y_val = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = py(y_val);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_LEFT:.2}" y2="{y:.2}" stroke="black" stroke-width="1"/>"#,
            MARGIN_LEFT - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{y_val:.3}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">terminal reward</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // Curves, whiskers, markers, legend.
    for (idx, (sampler, curve)) in curves.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = curve
            .iter()
            .map(|&(b, mean, _)| format!("{:.2},{:.2}", px((b as f64).log2()), py(mean)))
            .collect();
        if points.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                points.join(" ")
            );
        }
        for &(b, mean, se) in curve {
            let x = px((b as f64).log2());
            if se > 0.0 {
                let (y1, y2) = (py(mean + se), py(mean - se));
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="1"/>"#
                );
                for y in [y1, y2] {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1"/>"#,
                        x - 3.0,
                        x + 3.0
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                py(mean)
            );
        }
        let ly = MARGIN_TOP + 14.0 + idx as f64 * 18.0;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            ly - 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 17.0,
            escape(sampler)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
