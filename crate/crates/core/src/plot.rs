//! Self-contained SVG plots of two-column CSV data.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BslError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// log x, log y
    Loglog,
    /// linear x, log y
    Semilog,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;

/// Reads the first two columns of a CSV with a header row.
pub fn read_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            let f = rec.get(i).ok_or_else(|| BslError::Schema("row with fewer than two columns".into()))?;
            f.trim().parse::<f64>().map_err(|e| BslError::Schema(format!("{f}: {e}")))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

/// Least-squares slope and intercept.
fn fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Renders the data as an SVG document.
pub fn render_svg(data: &[(f64, f64)], kind: PlotKind, title: &str) -> Result<String> {
    let log_x = kind == PlotKind::Loglog;
    // Transformed coordinates: log10 on logarithmic axes; non-positive values are dropped there.
    let pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|(x, y)| y.is_finite() && *y > 0.0 && x.is_finite() && (!log_x || *x > 0.0))
        .map(|&(x, y)| (if log_x { x.log10() } else { x }, y.log10()))
        .collect();
    if pts.is_empty() {
        return Err(BslError::Schema("no plottable rows".into()));
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<defs><clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/></clipPath></defs>"#, WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, MARGIN / 2.0, escape(title));

    // y ticks at decades
    for k in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = sy(k as f64);
        let _ = writeln!(svg, r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#, MARGIN + 5.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#, MARGIN - 6.0, y + 4.0);
    }
    // x ticks: decades on log axes, five even steps otherwise
    let xticks: Vec<(f64, String)> = if log_x {
        ((x0.ceil() as i64)..=(x1.floor() as i64)).map(|k| (k as f64, format!("1e{k}"))).collect()
    } else {
        (0..=4).map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / 4.0;
            (x, format!("{x:.3}"))
        }).collect()
    };
    for (x, label) in xticks {
        let px = sx(x);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, HEIGHT - MARGIN, HEIGHT - MARGIN - 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, HEIGHT - MARGIN + 16.0);
    }

    // Guides through the first point: slopes −1 and −2 on log-log, the fitted rate on semilog.
    let (fx, fy) = pts[0];
    let (slope, _) = fit(&pts);
    let guides: Vec<(f64, String)> = match kind {
        PlotKind::Loglog => vec![(-1.0, "slope -1".into()), (-2.0, "slope -2".into())],
        PlotKind::Semilog => vec![(slope, format!("fitted rate {:.4} per unit", slope * std::f64::consts::LN_10))],
    };
    for (i, (s, label)) in guides.iter().enumerate() {
        let (ya, yb) = (fy, fy + s * (x1 - fx));
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="6 4" clip-path="url(#plot)"/>"##,
            sx(fx), sy(ya), sx(x1), sy(yb)
        );
        let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" fill="#555">{}</text>"##, WIDTH - MARGIN - 150.0, MARGIN + 16.0 * (i as f64 + 1.0), escape(label));
    }
    if kind == PlotKind::Loglog {
        let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" fill="#555">fitted slope {:.4}</text>"##, WIDTH - MARGIN - 150.0, MARGIN + 16.0 * 3.0, slope);
    }

    let mut poly = String::new();
    for (x, y) in &pts {
        let _ = write!(poly, "{:.2},{:.2} ", sx(*x), sy(*y));
    }
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>"##, poly.trim_end());
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads `csv`, renders it and writes `out`; nothing is written on error.
pub fn plot_file(csv: &Path, kind: PlotKind, out: &Path) -> Result<()> {
    let data = read_xy(csv)?;
    let title = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let svg = render_svg(&data, kind, &title)?;
    std::fs::write(out, svg)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_slope() {
        let data: Vec<(f64, f64)> = (1..=100).map(|n| (n as f64, (n as f64).powi(-2))).collect();
        let pts: Vec<(f64, f64)> = data.iter().map(|(x, y)| (x.log10(), y.log10())).collect();
        assert!((fit(&pts).0 + 2.0).abs() < 1e-12);
        let svg = render_svg(&data, PlotKind::Loglog, "t").unwrap();
        assert!(svg.contains("<polyline") && svg.contains("slope -2"));
    }

    #[test]
    fn empty_input_fails_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("e.csv");
        std::fs::write(&csv, "n,lambda\n").unwrap();
        let out = dir.path().join("e.svg");
        assert!(plot_file(&csv, PlotKind::Loglog, &out).is_err());
        assert!(!out.exists());
    }
}
