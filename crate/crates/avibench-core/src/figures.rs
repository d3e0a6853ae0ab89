//! Minimal SVG writer for the toolkit's figures: line/scatter plots with
//! axes (ROC curves, calibration plots, score timelines) and grid heat
//! tables (cross-condition AUC matrices). No external plotting dependency.

const W: f64 = 560.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub draw_line: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Render series into an SVG line/scatter plot with labeled axes.
pub fn plot_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    series: &[Series],
) -> String {
    let sx = |x: f64| MARGIN + (x - x_range.0) / (x_range.1 - x_range.0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_range.0) / (y_range.1 - y_range.0) * (H - 2.0 * MARGIN);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        esc(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    // ticks
    for i in 0..=5 {
        let fx = x_range.0 + (x_range.1 - x_range.0) * i as f64 / 5.0;
        let fy = y_range.0 + (y_range.1 - y_range.0) * i as f64 / 5.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{:.2}</text>\n",
            sx(fx),
            H - MARGIN + 16.0,
            fx
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.2}</text>\n",
            MARGIN - 6.0,
            sy(fy) + 3.0,
            fy
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        W / 2.0,
        H - 10.0,
        esc(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        esc(y_label)
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.draw_line && s.points.len() > 1 {
            let pts: Vec<String> =
                s.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        } else {
            for (x, y) in &s.points {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    sx(*x),
                    sy(*y)
                ));
            }
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            W - MARGIN - 120.0,
            MARGIN + 14.0 * (i + 1) as f64,
            esc(s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heat-table SVG for a labeled value matrix (e.g. a train x test AUC grid).
pub fn grid_svg(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<f64>],
) -> String {
    let cell = 90.0;
    let left = 110.0;
    let top = 70.0;
    let width = left + cell * col_labels.len() as f64 + 20.0;
    let height = top + cell * row_labels.len() as f64 + 20.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        esc(title)
    ));
    for (c, label) in col_labels.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            left + cell * (c as f64 + 0.5),
            top - 10.0,
            esc(label)
        ));
    }
    for (r, row) in values.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            left - 8.0,
            top + cell * (r as f64 + 0.55),
            esc(&row_labels[r])
        ));
        for (c, &v) in row.iter().enumerate() {
            // map [0.5, 1.0] onto a white->blue ramp
            let t = ((v - 0.5) / 0.5).clamp(0.0, 1.0);
            let shade = (255.0 - t * 140.0) as u8;
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"black\"/>\n",
                left + cell * c as f64,
                top + cell * r as f64
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{:.3}</text>\n",
                left + cell * (c as f64 + 0.5),
                top + cell * (r as f64 + 0.55),
                v
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
