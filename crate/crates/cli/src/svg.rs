//! Minimal SVG output: heatmaps from a rect grid, line charts from polylines.

use std::fmt::Write;

const W: f64 = 360.0;
const H: f64 = 300.0;
const PAD_L: f64 = 56.0;
const PAD_B: f64 = 44.0;
const PAD_T: f64 = 28.0;
const PAD_R: f64 = 16.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Viridis-like ramp, `u` clamped to `[0, 1]`.
fn color(u: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
    let s = u * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let w = s - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">
<rect width="{width}" height="{height}" fill="white"/>"#
    );
}

fn axes(out: &mut String, ox: f64, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64), title: &str) {
    let (x0, y0) = (ox + PAD_L, H - PAD_B);
    let (x1, y1) = (ox + W - PAD_R, PAD_T);
    let _ = writeln!(
        out,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>
<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        (x0 + x1) / 2.0,
        PAD_T - 10.0,
        esc(title),
        (x0 + x1) / 2.0,
        H - 8.0,
        esc(x_label),
        ox + 14.0,
        (y0 + y1) / 2.0,
        ox + 14.0,
        (y0 + y1) / 2.0,
        esc(y_label),
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x_range.0 + f * (x_range.1 - x_range.0);
        let yv = y_range.0 + f * (y_range.1 - y_range.0);
        let px = x0 + f * (x1 - x0);
        let py = y0 - f * (y0 - y1);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            y0 + 14.0,
            fmt_tick(xv),
            x0 - 4.0,
            py + 4.0,
            fmt_tick(yv)
        );
    }
}

pub struct Heatmap<'a> {
    pub title: &'a str,
    /// `values[i·ny + j]` sits at `x_levels[i]`, `y_levels[j]`.
    pub values: &'a [f64],
    pub nx: usize,
    pub ny: usize,
}

/// Side-by-side heatmaps sharing axes and a color scale over `range`.
pub fn heatmaps(maps: &[Heatmap], x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64), range: (f64, f64)) -> String {
    let mut out = String::new();
    let total_w = W * maps.len().max(1) as f64;
    header(&mut out, total_w, H + 24.0);
    for (m, map) in maps.iter().enumerate() {
        let ox = m as f64 * W;
        let (x0, y0) = (ox + PAD_L, H - PAD_B);
        let cw = (W - PAD_L - PAD_R) / map.nx as f64;
        let ch = (H - PAD_B - PAD_T) / map.ny as f64;
        for i in 0..map.nx {
            for j in 0..map.ny {
                let v = map.values[i * map.ny + j];
                let u = (v - range.0) / (range.1 - range.0);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{v:.1}</title></rect>"#,
                    x0 + i as f64 * cw,
                    y0 - (j + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05,
                    color(u)
                );
            }
        }
        axes(&mut out, ox, x_label, y_label, x_range, y_range, map.title);
    }
    // color bar
    let bx = PAD_L;
    let by = H + 6.0;
    let bw = W - PAD_L - PAD_R;
    for k in 0..50 {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{by}" width="{:.2}" height="8" fill="{}"/>"#,
            bx + k as f64 * bw / 50.0,
            bw / 50.0 + 0.05,
            color(k as f64 / 49.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>
<text x="{:.1}" y="{:.1}">{} K</text>"#,
        bx - 4.0,
        by + 8.0,
        fmt_tick(range.0),
        bx + bw + 4.0,
        by + 8.0,
        fmt_tick(range.1)
    );
    out.push_str("</svg>\n");
    out
}

pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub color: &'static str,
}

pub fn line_chart(series: &[Series], title: &str, x_label: &str, y_label: &str, log_y: bool) -> String {
    let tf = |v: f64| if log_y { v.max(1e-300).log10() } else { v };
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (&x, &y) in s.x.iter().zip(&s.y) {
            if x.is_finite() && tf(y).is_finite() {
                xr = (xr.0.min(x), xr.1.max(x));
                yr = (yr.0.min(tf(y)), yr.1.max(tf(y)));
            }
        }
    }
    if !(xr.0 < xr.1) {
        xr = (xr.0.min(0.0), xr.0.max(0.0) + 1.0);
    }
    if !(yr.0 < yr.1) {
        yr = (yr.0.min(0.0), yr.0.max(0.0) + 1.0);
    }
    let mut out = String::new();
    header(&mut out, W, H);
    let (x0, y0) = (PAD_L, H - PAD_B);
    let (x1, y1) = (W - PAD_R, PAD_T);
    for s in series {
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && tf(**y).is_finite())
            .map(|(&x, &y)| {
                let px = x0 + (x - xr.0) / (xr.1 - xr.0) * (x1 - x0);
                let py = y0 - (tf(y) - yr.0) / (yr.1 - yr.0) * (y0 - y1);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1" stroke-opacity="0.8"/>"#,
            pts.join(" "),
            s.color
        );
    }
    let y_label = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    axes(&mut out, 0.0, x_label, &y_label, xr, yr, title);
    out.push_str("</svg>\n");
    out
}
