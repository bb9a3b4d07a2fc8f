//! Minimal hand-written SVG charts: line charts, bar histograms and shaded grids.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = write!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
    let _ = write!(
        svg,
        r##"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="#333" fill="none"/>"##
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn ticks(svg: &mut String, lo: f64, hi: f64, vertical: bool) {
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        if vertical {
            let y = HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * i as f64 / 4.0;
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{:.1}</text>"#,
                LEFT - 6.0,
                y + 3.0,
                v
            );
        } else {
            let x = LEFT + (WIDTH - LEFT - RIGHT) * i as f64 / 4.0;
            let _ = write!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle" font-size="10">{:.1}</text>"#,
                HEIGHT - BOTTOM + 16.0,
                v
            );
        }
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (xlo, xhi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (ylo, yhi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| LEFT + (x - xlo) / (xhi - xlo) * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - ylo) / (yhi - ylo) * (HEIGHT - TOP - BOTTOM);

    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, x_label, y_label);
    ticks(&mut svg, xlo, xhi, false);
    ticks(&mut svg, ylo, yhi, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = write!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = TOP + 14.0 * i as f64;
        let _ = write!(
            svg,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            WIDTH - RIGHT - 150.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One bar per `(label, count)`.
pub fn bar_histogram(title: &str, x_label: &str, bins: &[(String, usize)]) -> String {
    let max = bins.iter().map(|b| b.1).max().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let slot = plot_w / bins.len().max(1) as f64;

    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, x_label, "count");
    ticks(&mut svg, 0.0, max, true);
    for (i, (label, count)) in bins.iter().enumerate() {
        let h = *count as f64 / max * plot_h;
        let x = LEFT + slot * i as f64;
        let _ = write!(
            svg,
            r##"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4"><title>{}: {count}</title></rect>"##,
            x + slot * 0.1,
            HEIGHT - BOTTOM - h,
            slot * 0.8,
            h,
            escape(label)
        );
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            x + slot / 2.0,
            HEIGHT - BOTTOM + 14.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grid of cells shaded from light (low) to dark (high), values printed.
pub fn heat_grid(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<f64>],
) -> String {
    let (lo, hi) = range(values.iter().flatten().copied());
    let rows = row_labels.len().max(1) as f64;
    let cols = col_labels.len().max(1) as f64;
    let cw = (WIDTH - LEFT - RIGHT) / cols;
    let ch = (HEIGHT - TOP - BOTTOM) / rows;

    let mut svg = String::new();
    header(&mut svg, title);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = (v - lo) / (hi - lo);
            let shade = (235.0 - 200.0 * t).round() as u8;
            let x = LEFT + cw * c as f64;
            let y = TOP + ch * r as f64;
            let _ = write!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="rgb({shade},{shade},255)" stroke="white"/>"#
            );
            let _ = write!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{v:.1}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    for (r, label) in row_labels.iter().enumerate() {
        let _ = write!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            LEFT - 6.0,
            TOP + ch * r as f64 + ch / 2.0 + 3.0,
            escape(label)
        );
    }
    for (c, label) in col_labels.iter().enumerate() {
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            LEFT + cw * c as f64 + cw / 2.0,
            HEIGHT - BOTTOM + 16.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = line_chart(
            "acc <vs> steps",
            "step",
            "acc",
            &[Series {
                name: "a".into(),
                points: vec![(0.0, 20.0), (1.0, 40.0)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("&lt;vs&gt;"));
        assert!(s.contains("<polyline"));

        let h = bar_histogram("h", "acc", &[("20".into(), 3), ("21".into(), 0)]);
        assert_eq!(h.matches(r#"class="bar""#).count(), 2);

        let g = heat_grid(
            "g",
            &["a".into()],
            &["1".into(), "2".into()],
            &[vec![1.0, 1.0]],
        );
        assert_eq!(g.matches("<rect x=").count(), 2);
    }
}
