//! Minimal SVG line chart of median κ against noise level.

use std::fmt::Write as _;

use super::SweepResult;
use crate::classifiers::Method;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

fn color(m: Method) -> &'static str {
    match m {
        Method::Po => "#1f77b4",
        Method::Mlp => "#d62728",
        Method::Ko => "#2ca02c",
        Method::KoAdc => "#9467bd",
    }
}

pub fn kappa_svg(result: &SweepResult) -> String {
    let levels = result.levels();
    let x_max = levels.last().copied().filter(|v| *v > 0.0).unwrap_or(0.2);
    let curves: Vec<(Method, Vec<(f64, f64)>)> = result.methods().into_iter().map(|m| (m, result.curve(m))).collect();
    let k_min = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1)).fold(0.0f64, f64::min);
    let (y_lo, y_hi) = (k_min.min(0.0), 1.0);

    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * x / x_max;
    let py = |y: f64| TOP + ph * (y_hi - y) / (y_hi - y_lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    for i in 0..=4 {
        let x = x_max * f64::from(i) / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.0}%</text>"#, px(x), TOP + ph + 16.0, 100.0 * x);
        let y = y_lo + (y_hi - y_lo) * f64::from(i) / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#, LEFT - 6.0, py(y) + 4.0, y);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">maximum Gaussian noise</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">median kappa</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(s, "</g>");
    for (i, (m, curve)) in curves.iter().enumerate() {
        let pts: Vec<String> = curve.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color(*m),
            pts.join(" ")
        );
        let ly = TOP + 20.0 * (i as f64 + 1.0);
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{m}</text>"#,
            lx + 20.0,
            color(*m),
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
