//! Self-contained SVG charts rendered from a merged report.
//!
//! Output bytes depend only on the report: fixed layout, fixed palette,
//! numbers printed with a fixed precision.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ConvergenceRecord, PipelineReport};
use crate::error::Result;
use crate::metrics::MetricRow;

/// A directed pair counts as a connection when its PC reaches this value.
pub const CONNECTION_PC: f64 = 0.1;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Distinct values in first-appearance order.
fn distinct<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, top: f64, bottom: f64) -> Self {
        Self {
            x0,
            x1,
            y0,
            y1,
            left: LEFT,
            right: W - RIGHT,
            top,
            bottom,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.x0) / (self.x1 - self.x0) * (self.right - self.left)
    }

    fn y(&self, v: f64) -> f64 {
        self.bottom - (v - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
    }

    fn axes(&self, svg: &mut String, y_label: &str, y_ticks: &[f64]) {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#000"/>"##,
            self.left, self.bottom, self.right, self.bottom
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#000"/>"##,
            self.left, self.top, self.left, self.bottom
        );
        for &t in y_ticks {
            let y = self.y(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#000"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{t:.2}</text>"##,
                self.left - 4.0,
                self.left,
                self.left - 6.0,
                y + 3.0
            );
        }
        let mid = (self.top + self.bottom) / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{mid:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {mid:.1})">{}</text>"#,
            escape(y_label)
        );
    }
}

fn open(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r##"<rect width="{W}" height="{H}" fill="#fff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    svg
}

fn close(mut svg: String) -> String {
    svg.push_str("</svg>\n");
    svg
}

fn no_data(svg: &mut String) {
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" font-size="16" text-anchor="middle" fill="#666">no data</text>"##,
        W / 2.0,
        H / 2.0
    );
}

fn legend(svg: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let x = LEFT + 8.0 + 130.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            H - 18.0,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            H - 9.0,
            escape(name)
        );
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

/// Per band and method: connection count (upper panel) and mean PC of the
/// connections (lower panel).
pub fn bands_svg(rows: &[MetricRow]) -> String {
    let mut svg = open("Connections per band");
    let panel_h = (H - TOP - BOTTOM - 30.0) / 2.0;
    let upper = (TOP, TOP + panel_h);
    let lower = (TOP + panel_h + 30.0, H - BOTTOM);
    if rows.is_empty() {
        Frame::new(0.0, 1.0, 0.0, 1.0, upper.0, upper.1).axes(&mut svg, "connections", &ticks(0.0, 1.0));
        Frame::new(0.0, 1.0, 0.0, 1.0, lower.0, lower.1).axes(&mut svg, "mean PC", &ticks(0.0, 1.0));
        no_data(&mut svg);
        return close(svg);
    }
    let bands = distinct(rows.iter().map(|r| r.band.as_str()));
    let methods = distinct(rows.iter().map(|r| r.method.as_str()));
    let stats: Vec<Vec<(usize, f64)>> = bands
        .iter()
        .map(|b| {
            methods
                .iter()
                .map(|m| {
                    let pcs: Vec<f64> = rows
                        .iter()
                        .filter(|r| &r.band == b && &r.method == m && r.pc_norm >= CONNECTION_PC)
                        .map(|r| r.pc_norm)
                        .collect();
                    let mean = if pcs.is_empty() {
                        0.0
                    } else {
                        pcs.iter().sum::<f64>() / pcs.len() as f64
                    };
                    (pcs.len(), mean)
                })
                .collect()
        })
        .collect();
    let max_count = stats
        .iter()
        .flatten()
        .map(|s| s.0)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let top = Frame::new(0.0, 1.0, 0.0, max_count, upper.0, upper.1);
    let bottom = Frame::new(0.0, 1.0, 0.0, 1.0, lower.0, lower.1);
    top.axes(&mut svg, "connections", &ticks(0.0, max_count));
    bottom.axes(&mut svg, "mean PC", &ticks(0.0, 1.0));
    let group_w = (top.right - top.left) / bands.len() as f64;
    let bar_w = group_w * 0.8 / methods.len() as f64;
    for (bi, band) in bands.iter().enumerate() {
        let gx = top.left + group_w * bi as f64 + group_w * 0.1;
        let _ = writeln!(
            svg,
            r#"<g class="band"><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            lower.1 + 14.0,
            escape(band)
        );
        for (mi, &(count, mean)) in stats[bi].iter().enumerate() {
            let x = gx + bar_w * mi as f64;
            let color = PALETTE[mi % PALETTE.len()];
            let (y, h) = (top.y(count as f64), top.bottom - top.y(count as f64));
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{color}"/>"#,
                bar_w * 0.9
            );
            let (y, h) = (bottom.y(mean.clamp(0.0, 1.0)), bottom.bottom - bottom.y(mean.clamp(0.0, 1.0)));
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{color}"/>"#,
                bar_w * 0.9
            );
        }
        svg.push_str("</g>\n");
    }
    legend(&mut svg, &methods);
    close(svg)
}

/// `rho_pre` against `rho_post`, one point per row, with the identity line.
pub fn prepost_svg(rows: &[MetricRow]) -> String {
    let mut svg = open("Pre and post intervention cross-map skill");
    let f = Frame::new(-1.0, 1.0, -1.0, 1.0, TOP, H - BOTTOM);
    f.axes(&mut svg, "rho post", &ticks(-1.0, 1.0));
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">rho pre</text>"#,
        (f.left + f.right) / 2.0,
        f.bottom + 30.0
    );
    if rows.is_empty() {
        no_data(&mut svg);
        return close(svg);
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
        f.x(-1.0),
        f.y(-1.0),
        f.x(1.0),
        f.y(1.0)
    );
    let methods = distinct(rows.iter().map(|r| r.method.as_str()));
    for r in rows {
        let mi = methods.iter().position(|m| m == &r.method).unwrap_or(0);
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{}"><title>{} {}</title></circle>"#,
            f.x(r.rho_pre.clamp(-1.0, 1.0)),
            f.y(r.rho_post.clamp(-1.0, 1.0)),
            PALETTE[mi % PALETTE.len()],
            escape(&r.pair),
            escape(&r.band)
        );
    }
    legend(&mut svg, &methods);
    close(svg)
}

/// Mean cross-map skill against library size, one line per pair and band.
pub fn convergence_svg(curves: &[ConvergenceRecord]) -> String {
    let mut svg = open("Convergence of cross-map skill");
    let max_l = curves
        .iter()
        .flat_map(|c| c.library_sizes.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let f = Frame::new(0.0, max_l, -1.0, 1.0, TOP, H - BOTTOM);
    f.axes(&mut svg, "rho", &ticks(-1.0, 1.0));
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">library size (max {max_l})</text>"#,
        (f.left + f.right) / 2.0,
        f.bottom + 30.0
    );
    if curves.is_empty() {
        no_data(&mut svg);
        return close(svg);
    }
    let names: Vec<String> = curves.iter().map(|c| format!("{} {}", c.pair, c.band)).collect();
    for (i, c) in curves.iter().enumerate() {
        let points: Vec<String> = c
            .library_sizes
            .iter()
            .zip(&c.rhos)
            .map(|(&l, &r)| format!("{:.1},{:.1}", f.x(l as f64), f.y(r.clamp(-1.0, 1.0))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"><title>{}</title></polyline>"#,
            points.join(" "),
            PALETTE[i % PALETTE.len()],
            escape(&names[i])
        );
    }
    if names.len() <= 4 {
        legend(&mut svg, &names);
    }
    close(svg)
}

/// Write `bands.svg`, `prepost.svg` and `convergence.svg` into `dir`.
pub fn write_plots(report: &PipelineReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let outputs = [
        ("bands.svg", bands_svg(&report.rows)),
        ("prepost.svg", prepost_svg(&report.rows)),
        ("convergence.svg", convergence_svg(&report.convergence)),
    ];
    let mut paths = Vec::new();
    for (name, svg) in outputs {
        let path = dir.join(name);
        fs::write(&path, svg)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(band: &str, method: &str, pc: f64) -> MetricRow {
        MetricRow {
            pair: "x->y".into(),
            band: band.into(),
            method: method.into(),
            pc_norm: pc,
            ci: 0.0,
            rho_pre: 0.5,
            rho_post: 0.2,
            rho_shuffled_mean: 0.0,
            rho_shuffled_std: 0.1,
        }
    }

    #[test]
    fn empty_report_says_no_data() {
        for svg in [bands_svg(&[]), prepost_svg(&[]), convergence_svg(&[])] {
            assert!(svg.contains("no data"));
            assert!(svg.contains("<line"));
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        }
    }

    #[test]
    fn one_group_per_band() {
        let rows = [row("beta", "standard", 0.4), row("gamma", "standard", 0.05)];
        assert_eq!(bands_svg(&rows).matches(r#"<g class="band">"#).count(), 2);
        assert_eq!(bands_svg(&rows), bands_svg(&rows));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = prepost_svg(&[row("a<b", "m&n", 0.3)]);
        assert!(svg.contains("a&lt;b") && svg.contains("m&amp;n"));
    }
}
