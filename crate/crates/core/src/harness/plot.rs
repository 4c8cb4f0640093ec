use std::fmt::Write as _;

use super::AggregateRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Mean curves with shaded CI bands, one series per algorithm.
pub(crate) fn render_svg(title: &str, series: &[(String, Vec<AggregateRow>)]) -> String {
    let points = series.iter().flat_map(|(_, rows)| rows);
    let (mut t_min, mut t_max, mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in points {
        t_min = t_min.min(r.t as f64);
        t_max = t_max.max(r.t as f64);
        y_min = y_min.min(r.ci_low());
        y_max = y_max.max(r.ci_high());
    }
    if t_max <= t_min {
        t_max = t_min + 1.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
        y_min -= 1.0;
    }
    let x = |t: f64| MARGIN + (t - t_min) / (t_max - t_min) * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let tv = t_min + f * (t_max - t_min);
        let yv = y_min + f * (y_max - y_min);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#, x(tv), y0 + 18.0, tv);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#, x0 - 6.0, y(yv) + 4.0, yv);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">exact value</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);

    for (i, (name, rows)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if rows.is_empty() {
            continue;
        }
        let mut band = String::new();
        for r in rows {
            let _ = write!(band, "{:.2},{:.2} ", x(r.t as f64), y(r.ci_high()));
        }
        for r in rows.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(r.t as f64), y(r.ci_low()));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = rows.iter().map(|r| format!("{:.2},{:.2}", x(r.t as f64), y(r.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 - 120.0, x1 - 100.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x1 - 94.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
