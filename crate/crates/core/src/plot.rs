//! Deterministic SVG plots: boxplots for continuous and score endpoints,
//! a mosaic of tumour incidence for incidence endpoints.
//!
//! Output depends only on the data, so identical inputs give identical bytes.

use std::fmt::Write;

use crate::data::{Dataset, DoseGroup};

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 380.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

/// Sample quantile with linear interpolation between order statistics (R type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme observations within 1.5 IQR of the box.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(xs: &[f64]) -> BoxStats {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    BoxStats {
        q1,
        median,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers: s.iter().copied().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect(),
    }
}

/// Tick positions covering `[lo, hi]` with a 1/2/5 step.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn x_axis(out: &mut String, groups: &[DoseGroup], centers: &[f64]) {
    let y = HEIGHT - BOTTOM;
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{y}" x2="{:.2}" y2="{y}" stroke="black"/>"#, WIDTH - RIGHT);
    for (g, cx) in groups.iter().zip(centers) {
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y + 18.0,
            escape(&g.label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">dose</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 12.0
    );
}

fn boxplot(groups: &[DoseGroup], samples: &[Vec<f64>], title: &str, y_label: &str) -> String {
    let stats: Vec<BoxStats> = samples.iter().map(|s| box_stats(s)).collect();
    let (mut lo, mut hi) = samples
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
    let slot = (WIDTH - LEFT - RIGHT) / groups.len() as f64;
    let centers: Vec<f64> = (0..groups.len()).map(|i| LEFT + slot * (i as f64 + 0.5)).collect();
    let half = (slot * 0.3).min(40.0);

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, HEIGHT - BOTTOM);
    for t in nice_ticks(lo, hi) {
        let ty = y(t);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            ty + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (s, &cx) in stats.iter().zip(&centers) {
        let _ = writeln!(out, r#"<g class="box">"#);
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            y(s.whisker_hi),
            y(s.q3)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
            y(s.q1),
            y(s.whisker_lo)
        );
        for w in [s.whisker_lo, s.whisker_hi] {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#dbe6f3" stroke="black"/>"##,
            cx - half,
            y(s.q3),
            2.0 * half,
            (y(s.q1) - y(s.q3)).max(0.0)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(s.median),
            cx + half,
            y(s.median)
        );
        for &o in &s.outliers {
            let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2.5" fill="none" stroke="black"/>"#, y(o));
        }
        let _ = writeln!(out, "</g>");
    }
    x_axis(&mut out, groups, &centers);
    out.push_str("</svg>\n");
    out
}

/// Column widths proportional to group size; the dark part of each column is the tumour fraction.
fn mosaic(groups: &[DoseGroup], tumor_counts: &[usize], title: &str) -> String {
    let total: usize = groups.iter().map(|g| g.n).sum();
    let gap = 4.0;
    let avail = WIDTH - LEFT - RIGHT - gap * (groups.len() - 1) as f64;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let mut out = String::new();
    header(&mut out, title);
    let mut x = LEFT;
    let mut centers = Vec::with_capacity(groups.len());
    for (g, &k) in groups.iter().zip(tumor_counts) {
        let w = avail * g.n as f64 / total as f64;
        let frac = k as f64 / g.n as f64;
        let h_t = plot_h * frac;
        let _ = writeln!(out, r#"<g class="column">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{h_t:.2}" fill="#8c2d04" stroke="black"/>"##,
            TOP
        );
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="#fdd0a2" stroke="black"/>"##,
            TOP + h_t,
            plot_h - h_t
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{k}/{}</text>"#,
            x + w / 2.0,
            TOP + h_t + 14.0,
            g.n
        );
        let _ = writeln!(out, "</g>");
        centers.push(x + w / 2.0);
        x += w + gap;
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">tumour (dark) / no tumour</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    x_axis(&mut out, groups, &centers);
    out.push_str("</svg>\n");
    out
}

/// Renders the dataset as an SVG 1.1 document.
pub fn plot_svg(ds: &Dataset, title: &str) -> String {
    match ds {
        Dataset::Continuous(d) => boxplot(d.groups(), d.observations(), title, "response"),
        Dataset::Score(d) => boxplot(d.groups(), &d.as_real(), title, "score"),
        Dataset::Incidence(d) => {
            let counts: Vec<usize> = d.observations().iter().map(|g| g.iter().filter(|a| a.tumor).count()).collect();
            mosaic(d.groups(), &counts, title)
        }
    }
}
