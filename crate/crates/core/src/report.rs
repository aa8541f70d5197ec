//! Self-contained SVG figures: Bloch-sphere heatmaps and loss histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::information::BlochMap;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

/// Five-stop approximation of the viridis colormap.
const STOPS: [(f64, [u8; 3]); 5] = [
    (0.0, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.5, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.0, [253, 231, 37]),
];

fn colour(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let i = STOPS.iter().rposition(|s| s.0 <= t).unwrap_or(0).min(STOPS.len() - 2);
    let (t0, c0) = STOPS[i];
    let (t1, c1) = STOPS[i + 1];
    let f = (t - t0) / (t1 - t0);
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(c0[0], c1[0]),
        mix(c0[1], c1[1]),
        mix(c0[2], c1[2])
    )
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Equirectangular heatmap of `L(θ, φ)`; `θ` runs down, `φ` across.
pub fn heatmap_svg(map: &BlochMap) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &format!("L over the Bloch sphere: {} | {}", map.protocol, map.channel),
    );
    let plot_w = WIDTH - 2.0 * MARGIN - 70.0;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let rows = map.grid.theta;
    let cols = map.grid.phi;
    let cell_h = plot_h / rows as f64;
    let cell_w = plot_w / cols as f64;
    let span = (map.l_max - map.l_min).max(f64::MIN_POSITIVE);

    let mut idx = 0;
    for i in 0..rows {
        let y = MARGIN + i as f64 * cell_h;
        if i == 0 || i == rows - 1 {
            // A pole is one state: paint it across the full width.
            let p = &map.points[idx];
            idx += 1;
            let _ = writeln!(
                out,
                r#"<rect x="{MARGIN:.2}" y="{y:.2}" width="{plot_w:.2}" height="{:.2}" fill="{}"/>"#,
                cell_h + 0.3,
                colour((p.l - map.l_min) / span)
            );
            continue;
        }
        for k in 0..cols {
            let p = &map.points[idx];
            idx += 1;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + k as f64 * cell_w,
                cell_w + 0.3,
                cell_h + 0.3,
                colour((p.l - map.l_min) / span)
            );
        }
    }

    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    for (frac, label) in [(0.0, "0"), (0.5, "π"), (1.0, "2π")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            MARGIN + frac * plot_w,
            MARGIN + plot_h + 18.0
        );
    }
    for (frac, label) in [(0.0, "0"), (0.5, "π/2"), (1.0, "π")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            MARGIN - 6.0,
            MARGIN + frac * plot_h + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">φ</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle">θ</text>"#,
        HEIGHT / 2.0
    );

    // Colour bar.
    let bar_x = MARGIN + plot_w + 20.0;
    let steps = 50;
    for s in 0..steps {
        let t = 1.0 - s as f64 / steps as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            MARGIN + s as f64 * plot_h / steps as f64,
            plot_h / steps as f64 + 0.3,
            colour(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">{:.3}</text>"#,
        bar_x + 20.0,
        MARGIN + 4.0,
        map.l_max
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">{:.3}</text>"#,
        bar_x + 20.0,
        MARGIN + plot_h + 4.0,
        map.l_min
    );
    out.push_str("</svg>\n");
    out
}

/// Density histogram on fixed bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    /// Normalized so that the bars integrate to the fraction of samples inside the range.
    pub fn new(samples: &[f64], edges: Vec<f64>) -> Self {
        let bins = edges.len().saturating_sub(1);
        let mut counts = vec![0usize; bins];
        if bins > 0 {
            let lo = edges[0];
            let hi = edges[bins];
            let width = (hi - lo) / bins as f64;
            for &x in samples {
                if x < lo || x > hi || !x.is_finite() {
                    continue;
                }
                let b = (((x - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        let total = samples.len().max(1) as f64;
        let density = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, w)| c as f64 / (total * (w[1] - w[0])))
            .collect();
        Self { edges, density }
    }
}

/// Freedman–Diaconis bin count (at least 5, at most 200).
pub fn freedman_diaconis_bins(samples: &[f64]) -> usize {
    let mut x: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if x.len() < 2 {
        return 5;
    }
    x.sort_by(f64::total_cmp);
    let q = |f: f64| {
        let pos = f * (x.len() - 1) as f64;
        let i = pos.floor() as usize;
        let j = (i + 1).min(x.len() - 1);
        x[i] + (pos - i as f64) * (x[j] - x[i])
    };
    let iqr = q(0.75) - q(0.25);
    let range = x[x.len() - 1] - x[0];
    if iqr <= 0.0 || range <= 0.0 {
        return 5;
    }
    let h = 2.0 * iqr / (x.len() as f64).cbrt();
    ((range / h).ceil() as usize).clamp(5, 200)
}

/// `bins` equal-width edges from 0 to `upper`.
pub fn uniform_edges(upper: f64, bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    (0..=bins).map(|i| upper * i as f64 / bins as f64).collect()
}

/// Empirical histogram as bars with the theoretical density overlaid as a line.
pub fn histogram_svg(title: &str, empirical: &Histogram, theory: &Histogram) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let lo = empirical.edges.first().copied().unwrap_or(0.0);
    let hi = empirical.edges.last().copied().unwrap_or(1.0);
    let x_span = (hi - lo).max(f64::MIN_POSITIVE);
    let y_max = empirical
        .density
        .iter()
        .chain(&theory.density)
        .fold(0.0f64, |a, &b| a.max(b))
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let sx = |x: f64| MARGIN + (x - lo) / x_span * plot_w;
    let sy = |y: f64| MARGIN + plot_h - y / y_max * plot_h;

    for (d, w) in empirical.density.iter().zip(empirical.edges.windows(2)) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#6baed6" stroke="#3182bd" stroke-width="0.5"/>"##,
            sx(w[0]),
            sy(*d),
            sx(w[1]) - sx(w[0]),
            MARGIN + plot_h - sy(*d)
        );
    }
    let path: Vec<String> = theory
        .density
        .iter()
        .zip(theory.edges.windows(2))
        .map(|(d, w)| format!("{:.2},{:.2}", sx(0.5 * (w[0] + w[1])), sy(*d)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#31a354" stroke-width="2"/>"##,
        path.join(" ")
    );
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        MARGIN + plot_h,
        MARGIN + plot_w,
        MARGIN + plot_h
    );
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{:.2}" stroke="black"/>"#,
        MARGIN + plot_h
    );
    for i in 0..=4 {
        let x = lo + x_span * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.2e}</text>"#,
            sx(x),
            MARGIN + plot_h + 18.0,
            x
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">1 − F</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#31a354">theory</text>"##,
        MARGIN + plot_w,
        MARGIN + 14.0
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#3182bd">simulation</text>"##,
        MARGIN + plot_w,
        MARGIN + 30.0
    );
    out.push_str("</svg>\n");
    out
}
