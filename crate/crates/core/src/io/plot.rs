//! Hand-written SVG line and scatter plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        let span = |v: Vec<f64>| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match (lo.is_finite(), hi > lo) {
                (false, _) => (0.0, 1.0),
                (true, true) => (lo, hi),
                (true, false) => (lo - 0.5, lo + 0.5),
            }
        };
        Frame {
            x: span(xs.collect()),
            y: span(ys.collect()),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        (W - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (
            frame.x.0 + f * (frame.x.1 - frame.x.0),
            frame.y.0 + f * (frame.y.1 - frame.y.0),
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#,
            frame.px(xv),
            y1 + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            x0 - 4.0,
            frame.py(yv) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, i: usize, label: &str) {
    let y = TOP + 10.0 + 16.0 * i as f64;
    let x = W - RIGHT + 10.0;
    let c = COLORS[i % COLORS.len()];
    let _ = writeln!(
        out,
        r#"<rect x="{x}" y="{}" width="10" height="10" fill="{c}"/>"#,
        y - 9.0
    );
    let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(label));
}

/// One polyline per series, x = position in the series.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let frame = Frame::fit(
        series.iter().flat_map(|(_, v)| (0..v.len()).map(|i| i as f64)),
        series.iter().flat_map(|(_, v)| v.iter().copied()),
    );
    let mut out = String::new();
    open(&mut out, title, &frame, x_label, y_label);
    for (i, (label, values)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let d: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                format!(
                    "{}{:.2} {:.2}",
                    if j == 0 { "M" } else { "L" },
                    frame.px(j as f64),
                    frame.py(v)
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<path class="series" data-label="{}" d="{}" stroke="{c}" stroke-width="2" fill="none"/>"#,
            escape(label),
            d.join(" ")
        );
        legend(&mut out, i, label);
    }
    out.push_str("</svg>\n");
    out
}

/// One marker per `(label, x, y)` point.
pub fn scatter_plot(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let frame = Frame::fit(points.iter().map(|p| p.1), points.iter().map(|p| p.2));
    let mut out = String::new();
    open(&mut out, title, &frame, x_label, y_label);
    for (i, (label, x, y)) in points.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<circle class="point" data-label="{}" cx="{:.2}" cy="{:.2}" r="5" fill="{c}"/>"#,
            escape(label),
            frame.px(*x),
            frame.py(*y)
        );
        legend(&mut out, i, label);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_path_per_series() {
        let svg = line_plot(
            "t",
            "x",
            "y",
            &[("a<b".into(), vec![0.9, 0.8]), ("c".into(), vec![0.5])],
        );
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn scatter_handles_single_point() {
        let svg = scatter_plot("t", "x", "y", &[("p".into(), 1.0, 1.0)]);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("NaN"));
    }
}
