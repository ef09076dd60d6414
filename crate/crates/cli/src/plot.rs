//! Minimal static SVG line charts (log-scale ordinate) for bound curves.

/// One named curve: (abscissa, value) pairs with positive values.
pub struct Curve<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
    pub color: &'a str,
}

/// Renders curves into a standalone SVG document with a log10 y-axis.
pub fn render_log_chart(title: &str, x_label: &str, curves: &[Curve]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for c in curves {
        for &(x, y) in &c.points {
            if y <= 0.0 || !y.is_finite() {
                continue;
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y.log10());
            y_max = y_max.max(y.log10());
        }
    }
    if !x_min.is_finite() || x_max <= x_min {
        x_min = 0.0;
        x_max = 1.0;
    }
    if !y_min.is_finite() || y_max <= y_min {
        y_min = -1.0;
        y_max = 1.0;
    }
    let sx = |x: f64| ML + (x - x_min) / (x_max - x_min) * (W - ML - MR);
    let sy = |ly: f64| H - MB - (ly - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        title
    ));
    svg.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    // Decade grid lines.
    let lo_dec = y_min.floor() as i64;
    let hi_dec = y_max.ceil() as i64;
    for dec in lo_dec..=hi_dec {
        let y = sy(dec as f64);
        if !(MT..=H - MB).contains(&y) {
            continue;
        }
        svg.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            W - MR
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{dec}</text>\n",
            ML - 6.0,
            y + 4.0
        ));
    }
    // X ticks at five evenly spaced points.
    for t in 0..=4 {
        let x = x_min + (x_max - x_min) * t as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.0}</text>\n",
            sx(x),
            H - MB + 18.0,
            x
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        H - 12.0,
        x_label
    ));
    for (ci, c) in curves.iter().enumerate() {
        let mut path = String::new();
        let mut first = true;
        for &(x, y) in &c.points {
            if y <= 0.0 || !y.is_finite() {
                continue;
            }
            let cmd = if first { 'M' } else { 'L' };
            first = false;
            path.push_str(&format!("{cmd}{:.2},{:.2} ", sx(x), sy(y.log10())));
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            path.trim_end(),
            c.color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{}\">{}</text>\n",
            ML + 10.0,
            MT + 16.0 + 16.0 * ci as f64,
            c.color,
            c.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
