//! Minimal SVG line plots: polylines, two labeled axes, a small legend.
//! String assembly only, nothing external, deterministic output.

use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 62.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 44.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];
const MAX_LEGEND: usize = 8;

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the plot to a complete SVG document.
pub fn render(plot: &Plot) -> String {
    let (x_lo, x_hi) =
        axis_range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) =
        axis_range(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * (WIDTH - LEFT - RIGHT);
    let py = |y: f64| HEIGHT - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - TOP - BOTTOM);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        xml_escape(&plot.title)
    );

    // Axes with four ticks per side.
    let _ = writeln!(
        out,
        "<g stroke=\"#333\" stroke-width=\"1\" fill=\"none\">\
         <path d=\"M {l} {t} L {l} {b} L {r} {b}\"/></g>",
        l = LEFT,
        t = TOP,
        b = HEIGHT - BOTTOM,
        r = WIDTH - RIGHT
    );
    let _ = writeln!(out, "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">");
    for k in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            px(fx),
            HEIGHT - BOTTOM + 14.0,
            fmt_tick(fx)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT - 5.0,
            py(fy) + 3.0,
            fmt_tick(fy)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 8.0,
        xml_escape(&plot.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {mid:.1})\">{}</text>",
        (TOP + HEIGHT - BOTTOM) / 2.0,
        xml_escape(&plot.y_label),
        mid = (TOP + HEIGHT - BOTTOM) / 2.0
    );
    let _ = writeln!(out, "</g>");

    for (i, series) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for &(x, y) in series.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let cmd = if path.is_empty() { 'M' } else { 'L' };
            let _ = write!(path, "{cmd} {:.2} {:.2} ", px(x), py(y));
        }
        if !path.is_empty() {
            let _ = writeln!(
                out,
                "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>",
                path.trim_end()
            );
        }
    }

    let n_legend = plot.series.len().min(MAX_LEGEND);
    if n_legend > 0 && plot.series.len() <= 24 {
        let _ = writeln!(out, "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">");
        for (i, series) in plot.series.iter().take(n_legend).enumerate() {
            let y = TOP + 8.0 + 14.0 * i as f64;
            let color = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                out,
                "<line x1=\"{x1:.1}\" y1=\"{y:.1}\" x2=\"{x2:.1}\" y2=\"{y:.1}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>\
                 <text x=\"{xt:.1}\" y=\"{yt:.1}\">{name}</text>",
                x1 = WIDTH - RIGHT - 150.0,
                x2 = WIDTH - RIGHT - 130.0,
                xt = WIDTH - RIGHT - 124.0,
                yt = y + 3.0,
                name = xml_escape(&series.name)
            );
        }
        if plot.series.len() > n_legend {
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\">({} more)</text>",
                WIDTH - RIGHT - 150.0,
                TOP + 8.0 + 14.0 * n_legend as f64 + 3.0,
                plot.series.len() - n_legend
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let plot = Plot {
            title: "demo <plot>".into(),
            x_label: "t".into(),
            y_label: "value".into(),
            series: vec![
                Series { name: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)] },
                Series { name: "b".into(), points: vec![(0.0, 0.0), (2.0, 3.0)] },
            ],
        };
        let svg = render(&plot);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("demo &lt;plot&gt;"));
        assert_eq!(svg.matches("<path").count(), 3, "axes plus two series");
        assert_eq!(render(&plot), svg, "deterministic output");
    }

    #[test]
    fn skips_non_finite_points_and_degenerate_ranges() {
        let plot = Plot {
            title: "flat".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                name: "s".into(),
                points: vec![(0.0, 1.0), (f64::NAN, 5.0), (1.0, 1.0)],
            }],
        };
        let svg = render(&plot);
        assert!(!svg.contains("NaN"));
        assert!(svg.contains("</svg>"));
    }
}
