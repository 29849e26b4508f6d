//! Dependency-free SVG line plot: one polyline per detector, log-scaled BER
//! axis, dashed polylines for the analytic prediction.

use std::fmt::Write;

use irgain_core::montecarlo::SweepAxis;

use crate::sweep::Row;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
/// Floor of the BER axis; zero estimates are drawn here.
const BER_FLOOR: f64 = 1e-6;

struct Curve<'a> {
    name: &'a str,
    points: Vec<(f64, f64)>,
    analytic: Vec<(f64, f64)>,
}

fn curves(rows: &[Row]) -> Vec<Curve<'_>> {
    let mut out: Vec<Curve> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|c| c.name == r.detector) {
            Some(i) => i,
            None => {
                out.push(Curve {
                    name: &r.detector,
                    points: Vec::new(),
                    analytic: Vec::new(),
                });
                out.len() - 1
            }
        };
        out[idx].points.push((r.axis_value, r.estimate.ber));
        if let Some(a) = r.analytic {
            out[idx].analytic.push((r.axis_value, a));
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(rows: &[Row], axis: SweepAxis, title: &str) -> String {
    let curves = curves(rows);
    let log_x = axis == SweepAxis::PulseRate;
    let tx = |x: f64| if log_x { x.max(1e-300).log2() } else { x };
    let xs: Vec<f64> = rows.iter().map(|r| tx(r.axis_value)).collect();
    let (mut x0, mut x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if x1 <= x0 || x1.is_nan() {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let ys = rows
        .iter()
        .flat_map(|r| [r.estimate.ber, r.estimate.ci_high].into_iter().chain(r.analytic))
        .filter(|&y| y > 0.0);
    let (lo, hi) = ys.fold((1.0f64, BER_FLOOR), |(a, b), y| (a.min(y), b.max(y)));
    let y0 = lo.max(BER_FLOOR).log10().floor();
    let y1 = hi.min(1.0).log10().ceil().max(y0 + 1.0);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y.max(BER_FLOOR).log10()) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut d = y0 as i32;
    while d <= y1 as i32 {
        let y = TOP + (y1 - f64::from(d)) / (y1 - y0) * ph;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        d += 1;
    }
    let mut ticks: Vec<f64> = rows.iter().map(|r| r.axis_value).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let x = px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{t}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        axis.name()
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">BER</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let poly = |pts: &[(f64, f64)]| {
        pts.iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            poly(&c.points)
        );
        for &(x, y) in &c.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        if !c.analytic.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
                poly(&c.analytic)
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(c.name)
        );
    }
    if curves.iter().any(|c| !c.analytic.is_empty()) {
        let ly = TOP + 10.0 + 20.0 * curves.len() as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="black" stroke-dasharray="6 4"/><text x="{}" y="{}">analytic</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
