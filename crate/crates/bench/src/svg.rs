//! Minimal self-contained SVG line charts. CSV is the normative output;
//! these are a convenience view, written without a plotting dependency.

use std::fmt::Write as _;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .collect();
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut out = String::new();
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n"
    )
    .unwrap();
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    write!(
        out,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();

    // Axes.
    write!(
        out,
        "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    )
    .unwrap();
    write!(
        out,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h
    )
    .unwrap();

    // Ticks and grid.
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let px = sx(fx);
        let py = sy(fy);
        write!(
            out,
            "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        )
        .unwrap();
        write!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 20.0,
            tick(fx)
        )
        .unwrap();
        write!(
            out,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{MARGIN_L}\" y2=\"{py:.1}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0
        )
        .unwrap();
        write!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 9.0,
            py + 4.0,
            tick(fy)
        )
        .unwrap();
        if i > 0 {
            write!(
                out,
                "<line x1=\"{MARGIN_L}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
                 stroke=\"#dddddd\"/>\n",
                MARGIN_L + plot_w
            )
            .unwrap();
        }
    }
    write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    )
    .unwrap();
    write!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    )
    .unwrap();

    // Curves and legend.
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        write!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            path.join(" ")
        )
        .unwrap();
        for &(x, y) in &s.points {
            write!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            )
            .unwrap();
        }
        let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
        write!(
            out,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            MARGIN_L + plot_w - 110.0,
            MARGIN_L + plot_w - 86.0
        )
        .unwrap();
        write!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            MARGIN_L + plot_w - 80.0,
            ly + 4.0,
            escape(&s.name)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // Degenerate span: pad so the single value sits mid-plot.
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_series_and_labels() {
        let series = [
            Series {
                name: "cidp".into(),
                points: vec![(8.0, 0.9999), (36.0, 0.9998), (128.0, 0.9999)],
            },
            Series {
                name: "glossy".into(),
                points: vec![(8.0, 0.9999), (36.0, 0.999), (128.0, 0.9934)],
            },
        ];
        let chart = line_chart("fig8", "L", "reliability", &series);
        assert!(chart.starts_with("<svg"));
        assert!(chart.ends_with("</svg>\n"));
        assert_eq!(chart.matches("<polyline").count(), 2);
        assert!(chart.contains(">cidp<"));
        assert!(chart.contains(">glossy<"));
        assert!(chart.contains(">reliability<"));
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let series = [Series {
            name: "flat".into(),
            points: vec![(1.0, 5.0), (2.0, 5.0)],
        }];
        let chart = line_chart("flat", "x", "y", &series);
        assert!(!chart.contains("NaN"));
        assert!(!chart.contains("inf"));
    }

    #[test]
    fn output_is_deterministic() {
        let series = [Series {
            name: "s".into(),
            points: vec![(0.0, 0.1), (1.0, 0.9)],
        }];
        assert_eq!(
            line_chart("t", "x", "y", &series),
            line_chart("t", "x", "y", &series)
        );
    }
}
