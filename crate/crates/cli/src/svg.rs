//! Self-contained log-log SVG of scan ratios.

use std::fmt::Write as _;

use filter_forge::{ScanModel, ScanRow};

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

fn dash(model: ScanModel) -> &'static str {
    match model {
        ScanModel::Quantum => "",
        ScanModel::ClassicalCombined => " stroke-dasharray=\"6 4\"",
        ScanModel::ClassicalCos => " stroke-dasharray=\"2 3\"",
        ScanModel::ClassicalSin => " stroke-dasharray=\"8 3 2 3\"",
    }
}

/// One polyline per `(g, model)`; nonpositive or NaN ratios are skipped.
pub fn scan_plot(rows: &[ScanRow], g_list: &[f64]) -> String {
    let ok = |r: &&ScanRow| r.ratio.is_finite() && r.ratio > 0.0 && r.omega > 0.0;
    let xs: Vec<f64> = rows.iter().filter(ok).map(|r| r.omega.log10()).collect();
    let ys: Vec<f64> = rows.iter().filter(ok).map(|r| r.ratio.log10()).chain([0.0]).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", r - l, b - t);
    for e in x0.ceil() as i32..=x1.floor() as i32 {
        let x = px(e as f64);
        let _ = writeln!(s, "<line x1=\"{x:.1}\" y1=\"{b}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"black\"/>", b - 5.0);
        let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">1e{e}</text>", b + 18.0);
    }
    for e in y0.ceil() as i32..=y1.floor() as i32 {
        let y = py(e as f64);
        let _ = writeln!(s, "<line x1=\"{l}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"black\"/>", l + 5.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">1e{e}</text>", l - 6.0, y + 4.0);
    }
    let y = py(0.0);
    let _ = writeln!(s, "<line x1=\"{l}\" y1=\"{y:.1}\" x2=\"{r}\" y2=\"{y:.1}\" stroke=\"gray\" stroke-dasharray=\"1 3\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">ω</text>", (l + r) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">‖UDD4‖ / ‖CDD3‖</text>",
        (t + b) / 2.0,
        (t + b) / 2.0
    );

    let mut legend = 0;
    for (gi, &g) in g_list.iter().enumerate() {
        let color = COLORS[gi % COLORS.len()];
        for model in ScanModel::ALL {
            let pts: Vec<String> = rows
                .iter()
                .filter(|r| r.g == g && r.model == model)
                .filter(ok)
                .map(|r| format!("{:.2},{:.2}", px(r.omega.log10()), py(r.ratio.log10())))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{} points=\"{}\"/>",
                dash(model),
                pts.join(" ")
            );
            let ly = TOP + 10.0 + 16.0 * legend as f64;
            let _ = writeln!(
                s,
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.5\"{}/>",
                r + 10.0,
                r + 34.0,
                dash(model)
            );
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">g={g} {}</text>", r + 38.0, ly + 4.0, model.label());
            legend += 1;
        }
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    (lo, hi)
}
