//! Minimal standalone SVG charts. Each file carries its data in a leading
//! comment so a plot can be checked without re-running anything.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(s: &mut String, title: &str, data: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    // "--" is not allowed inside comments
    let _ = writeln!(s, "<!-- data\n{}-->", data.replace("--", "- -"));
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn axes(s: &mut String, x_label: &str, y_label: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) {
    let _ = writeln!(
        s,
        r#"<path d="M{m} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let px = MARGIN + f * (W - 2.0 * MARGIN);
        let py = H - MARGIN - f * (H - 2.0 * MARGIN);
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            H - MARGIN + 16.0,
            tick(x0 + f * (x1 - x0))
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN - 6.0,
            py + 4.0,
            tick(y0 + f * (y1 - y0))
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        W / 2.0,
        H - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut data = String::from("series,x,y\n");
    for sr in series {
        for (x, y) in &sr.points {
            let _ = writeln!(data, "{},{x},{y}", sr.name);
        }
    }
    let mut s = String::new();
    header(&mut s, title, &data);
    let xr = range(series.iter().flat_map(|sr| sr.points.iter().map(|p| p.0)));
    let yr = range(series.iter().flat_map(|sr| sr.points.iter().map(|p| p.1)));
    axes(&mut s, x_label, y_label, xr, yr);
    let px = |x: f64| MARGIN + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * MARGIN);
    for (i, sr) in series.iter().enumerate() {
        let c = color(i);
        let path: Vec<String> = sr
            .points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| format!("{}{:.1} {:.1}", if k == 0 { 'M' } else { 'L' }, px(x), py(y)))
            .collect();
        if sr.points.len() > 1 {
            let _ = writeln!(s, r#"<path d="{}" stroke="{c}" stroke-width="2" fill="none"/>"#, path.join(" "));
        }
        for &(x, y) in &sr.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, px(x), py(y));
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" fill="{c}">{}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 16.0 * i as f64,
            escape(&sr.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut data = String::from("label,value\n");
    for (l, v) in bars {
        let _ = writeln!(data, "{l},{v}");
    }
    let mut s = String::new();
    header(&mut s, title, &data);
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1.0);
    axes(&mut s, x_label, y_label, (0.0, bars.len() as f64), (0.0, top));
    let slot = (W - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v / top * (H - 2.0 * MARGIN);
        let x = MARGIN + i as f64 * slot + slot * 0.1;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{}: {v}</title></rect>"#,
            H - MARGIN - h,
            slot * 0.8,
            color(0),
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Trajectories of a scene; `groups[i]` is the flock index of track `i`
/// (`None` draws it grey).
pub fn scene_chart(title: &str, tracks: &[(String, Vec<(f64, f64)>)], groups: &[Option<usize>]) -> String {
    let mut data = String::from("agent,flock\n");
    for ((name, _), g) in tracks.iter().zip(groups) {
        let _ = writeln!(data, "{name},{}", g.map_or("-".to_string(), |g| g.to_string()));
    }
    let mut s = String::new();
    header(&mut s, title, &data);
    let xr = range(tracks.iter().flat_map(|t| t.1.iter().map(|p| p.0)));
    let yr = range(tracks.iter().flat_map(|t| t.1.iter().map(|p| p.1)));
    axes(&mut s, "x (mm)", "y (mm)", xr, yr);
    let px = |x: f64| MARGIN + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * MARGIN);
    for ((name, pts), g) in tracks.iter().zip(groups) {
        let c = g.map_or("#bbbbbb", color);
        let path: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| format!("{}{:.1} {:.1}", if k == 0 { 'M' } else { 'L' }, px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="{c}" stroke-width="1.5" fill="none"><title>{}</title></path>"#,
            path.join(" "),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
