//! Minimal self-contained SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const COLORS: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series<'a> {
    pub label: String,
    pub points: &'a [(u64, f64)],
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlay of efficiency curves; y is fixed to `[0, 1]`.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let x_max = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).max().unwrap_or(1).max(2) as f64;
    let x_min = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).min().unwrap_or(1) as f64;
    let span = (x_max - x_min).max(1.0);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / span * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    )
    .unwrap();

    for i in 0..=5 {
        let y = i as f64 / 5.0;
        writeln!(
            out,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{y:.1}</text>"##,
            MARGIN_LEFT,
            sy(y),
            MARGIN_LEFT + plot_w,
            sy(y),
            MARGIN_LEFT - 6.0,
            sy(y) + 4.0
        )
        .unwrap();
    }
    for i in 0..=5 {
        let x = x_min + span * i as f64 / 5.0;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            sx(x),
            MARGIN_TOP + plot_h + 18.0,
            x
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> =
            s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x as f64), sy(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="5 3""# } else { "" };
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = MARGIN_TOP + 14.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_every_series() {
        let a = [(1, 1.0), (2, 0.5)];
        let b = [(1, 0.2), (2, 0.3)];
        let svg = line_plot(
            "t",
            "N",
            "efficiency",
            &[
                Series { label: "a<b".into(), points: &a, dashed: false },
                Series { label: "b".into(), points: &b, dashed: true },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
