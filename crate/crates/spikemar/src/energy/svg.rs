//! Minimal SVG line charts for sweep outputs. No styling dependencies;
//! output is deterministic for byte-identical artifacts.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Renders one polyline per `(label, points)` series on shared linear axes.
pub fn line_chart_svg(series: &[(String, Vec<(f64, f64)>)], x_label: &str, y_label: &str) -> String {
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (x_min, x_max) = bounds(points.iter().map(|p| p.0));
    let (y_min, y_max) = bounds(points.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min).max(f64::MIN_POSITIVE) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min).max(f64::MIN_POSITIVE) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {y})\">{y_label}</text>\n",
        HEIGHT / 2.0,
        y = HEIGHT / 2.0
    ));
    for (x, anchor) in [(x_min, "start"), (x_max, "end")] {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"{anchor}\">{x:.0}</text>\n",
            sx(x),
            HEIGHT - MARGIN + 16.0
        ));
    }
    for y in [y_min, y_max] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{y:.3e}</text>\n",
            MARGIN - 6.0,
            sy(y) + 4.0
        ));
    }
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"12\" fill=\"{color}\">{label}</text>\n",
            WIDTH - MARGIN + 6.0,
            MARGIN + 16.0 * i as f64 + 12.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() {
        (0.0, 1.0)
    } else if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    }
}
