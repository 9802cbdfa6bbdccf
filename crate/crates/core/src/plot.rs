//! Static SVG line charts for sweep results.

use std::fmt::Write;

use crate::experiments::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    dashed: bool,
    markers: bool,
    points: Vec<(f64, f64)>,
}

/// Chart of measured success rate (markers), closed form, upper and lower
/// bound against the swept parameter. The y range adapts to the data.
pub fn sweep_svg(x_label: &str, rows: &[SweepRow]) -> String {
    let pick = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| f(r).map(|y| (r.value, y))).collect()
    };
    let series = [
        Series {
            label: "measured",
            color: "#1f77b4",
            dashed: false,
            markers: true,
            points: pick(&|r| r.p_hat.map(|e| e.mean)),
        },
        Series {
            label: "closed form",
            color: "#2ca02c",
            dashed: false,
            markers: false,
            points: pick(&|r| r.p_succ_closed),
        },
        Series {
            label: "upper bound",
            color: "#d62728",
            dashed: true,
            markers: false,
            points: pick(&|r| r.upper),
        },
        Series {
            label: "lower bound",
            color: "#9467bd",
            dashed: true,
            markers: false,
            points: pick(&|r| r.lower),
        },
    ];

    let xs = rows.iter().map(|r| r.value);
    let x_min = xs.clone().fold(f64::INFINITY, f64::min);
    let x_max = xs.fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = if x_min < x_max { (x_min, x_max) } else { (x_min - 0.5, x_min + 0.5) };
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let y_min = ys.clone().fold(1.0f64, f64::min).max(0.0);
    let y_min = (y_min * 10.0).floor() / 10.0;
    let y_max = 1.0;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for i in 0..=5 {
        let x = x_min + (x_max - x_min) * f64::from(i) / 5.0;
        let px = sx(x);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0,
            MARGIN_TOP + plot_h + 20.0,
            trim(x)
        );
        let y = y_min + (y_max - y_min) * f64::from(i) / 5.0;
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            py + 4.0,
            trim(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">success probability</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if s.markers {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    sx(x),
                    sy(y),
                    s.color
                );
            }
        } else if !s.points.is_empty() {
            let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                path.join(" "),
                s.color
            );
        }
        let ly = MARGIN_TOP + 14.0 + 20.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        if s.markers {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                lx + 12.0,
                ly - 4.0,
                s.color
            );
        } else {
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"{dash}/>"#,
                ly - 4.0,
                lx + 24.0,
                ly - 4.0,
                s.color
            );
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 30.0, s.label);
    }
    svg.push_str("</svg>\n");
    svg
}

fn trim(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Estimate;

    fn row(value: f64, p: f64) -> SweepRow {
        SweepRow {
            value,
            p_hat: Some(Estimate { mean: p, std_error: Some(0.01) }),
            p_succ_closed: Some(p),
            p_succ_transform: None,
            upper: Some(p + 0.1),
            lower: Some(p - 0.2),
            empirical_lambda: None,
            lambda_star: None,
            empirical_hazard: None,
            hazard: None,
            failed_runs: 0,
        }
    }

    #[test]
    fn chart_has_four_series_and_legend() {
        let rows = vec![row(5.0, 0.9), row(10.0, 0.7), row(15.0, 0.5)];
        let svg = sweep_svg("lambda_in", &rows);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        // three data markers plus one legend marker
        assert_eq!(svg.matches("<circle").count(), 4);
        for label in ["measured", "closed form", "upper bound", "lower bound", "lambda_in"] {
            assert!(svg.contains(label));
        }
    }

    #[test]
    fn single_point_chart_is_finite() {
        let svg = sweep_svg("c_threads", &[row(2.0, 0.6)]);
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }
}
