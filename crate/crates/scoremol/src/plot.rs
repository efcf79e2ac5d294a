//! Minimal SVG charts: a polyline chart and overlaid histograms.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str, yfmt: impl Fn(f64) -> String) -> String {
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
        let (x0, x1, y0, y1) = (PAD, W - PAD, PAD, H - PAD);
        let _ = writeln!(s, r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" stroke="black" fill="none"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(xlabel));
        let _ = writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#, H / 2.0, H / 2.0, esc(ylabel));
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, self.px(xv), y1 + 16.0, short(xv));
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 4.0, self.py(yv) + 4.0, yfmt(yv));
        }
        s
    }
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

/// Line chart of `(x, y)` points. With `log_y`, non-positive values are dropped.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)], log_y: bool) -> String {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
        .map(|&(x, y)| (x, if log_y { y.log10() } else { y }))
        .collect();
    let frame = Frame { x: bounds(pts.iter().map(|p| p.0)), y: bounds(pts.iter().map(|p| p.1)) };
    let mut s = frame.open(title, xlabel, ylabel, |v| if log_y { short(10f64.powf(v)) } else { short(v) });
    if !pts.is_empty() {
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{}" fill="none" stroke-width="1"/>"#, d.join(" "), COLORS[0]);
    }
    s.push_str("</svg>\n");
    s
}

/// Overlaid step histograms of several named samples on shared bins,
/// normalized to unit area.
pub fn histograms(title: &str, xlabel: &str, series: &[(&str, &[f64])], bins: usize) -> String {
    let bins = bins.max(1);
    let (lo, hi) = bounds(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let width = (hi - lo) / bins as f64;
    let densities: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, vals)| {
            let mut counts = vec![0.0; bins];
            let finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
            for v in &finite {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1.0;
            }
            let total = finite.len().max(1) as f64 * width;
            counts.into_iter().map(|c| c / total).collect()
        })
        .collect();
    let ymax = densities.iter().flatten().copied().fold(0.0, f64::max);
    let frame = Frame { x: (lo, hi), y: (0.0, if ymax > 0.0 { ymax * 1.05 } else { 1.0 }) };
    let mut s = frame.open(title, xlabel, "density", short);
    for (k, ((name, _), dens)) in series.iter().zip(&densities).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = format!("M{:.2} {:.2}", frame.px(lo), frame.py(0.0));
        for (b, &h) in dens.iter().enumerate() {
            let x0 = lo + b as f64 * width;
            let _ = write!(d, " L{:.2} {:.2} L{:.2} {:.2}", frame.px(x0), frame.py(h), frame.px(x0 + width), frame.py(h));
        }
        let _ = write!(d, " L{:.2} {:.2}", frame.px(hi), frame.py(0.0));
        let _ = writeln!(s, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1.5"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#, W - PAD, PAD + 14.0 * k as f64, esc(name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_svg() {
        let pts: Vec<(f64, f64)> = (1..50).map(|i| (i as f64, 100.0 / i as f64)).collect();
        let s = line_chart("loss <train>", "step", "loss", &pts, true);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("loss &lt;train&gt;"));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(!line_chart("empty", "x", "y", &[], false).contains("<polyline"));
    }

    #[test]
    fn histograms_draw_each_series() {
        let a = [1.0, 2.0, 2.0, 3.0];
        let b = [2.0, 2.0, 2.0];
        let s = histograms("atoms", "count", &[("generated", &a), ("test", &b)], 5);
        assert_eq!(s.matches("<path").count(), 3);
        assert!(s.contains("generated") && s.contains("test"));
        assert!(!s.contains("NaN"));
        let s = histograms("flat", "x", &[("one", &[4.0, 4.0])], 3);
        assert!(!s.contains("NaN"));
    }
}
