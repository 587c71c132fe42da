//! Grouped bar chart of Monte Carlo bias, written as plain SVG.

use std::fmt::Write;

use cedr::estimators::Estimator;
use cedr::simulation::{McSummary, Misspec};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 80.0;

fn color(e: Estimator) -> &'static str {
    match e {
        Estimator::NaiveDr => "#c44e52",
        Estimator::Cedr => "#4c72b0",
    }
}

fn label(m: Misspec) -> &'static str {
    match m {
        Misspec::BothCorrect => "Both correct",
        Misspec::PsWrong => "PS wrong",
        Misspec::OutcomeWrong => "Outcome wrong",
    }
}

// Step of roughly `span / 6` rounded to 1, 2 or 5 times a power of ten.
fn tick_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bars of `bias_pct` grouped by rho; within a group, one pair of bars
/// (naive, CEDR) per misspecification.
pub fn bias_chart(title: &str, summaries: &[McSummary]) -> String {
    let mut rhos: Vec<f64> = summaries.iter().map(|s| s.rho).collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let mut misspecs: Vec<Misspec> = summaries.iter().map(|s| s.misspec).collect();
    misspecs.sort();
    misspecs.dedup();
    let mut estimators: Vec<Estimator> = summaries.iter().map(|s| s.estimator).collect();
    estimators.sort();
    estimators.dedup();

    let lo = summaries.iter().map(|s| s.bias_pct).fold(0.0, f64::min);
    let hi = summaries.iter().map(|s| s.bias_pct).fold(0.0, f64::max);
    let span = (hi - lo).max(1.0);
    let step = tick_step(span);
    let y_min = (lo / step).floor() * step;
    let y_max = (hi / step).ceil() * step;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    let mut v = y_min;
    while v <= y_max + step * 1e-9 {
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{yy:.2}" y2="{yy:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0,
            format_tick(v, step)
        );
        v += step;
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="black"/>"##,
        LEFT + plot_w,
        y(0.0),
        y(0.0)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">Bias (%)</text>"#,
        TOP + plot_h / 2.0
    );

    let group_w = plot_w / rhos.len().max(1) as f64;
    let slots = (misspecs.len() * estimators.len()).max(1) as f64;
    let bar_w = group_w * 0.8 / slots;
    for (g, rho) in rhos.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w + group_w * 0.1;
        for (mi, m) in misspecs.iter().enumerate() {
            for (ei, e) in estimators.iter().enumerate() {
                let Some(cell) = summaries
                    .iter()
                    .find(|c| c.rho == *rho && c.misspec == *m && c.estimator == *e)
                else {
                    continue;
                };
                let x = gx + (mi * estimators.len() + ei) as f64 * bar_w;
                let (top, bottom) = if cell.bias_pct >= 0.0 {
                    (y(cell.bias_pct), y(0.0))
                } else {
                    (y(0.0), y(cell.bias_pct))
                };
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {} rho={}: {:.2}%</title></rect>"#,
                    bar_w * 0.9,
                    (bottom - top).max(0.5),
                    color(*e),
                    label(*m),
                    e,
                    rho,
                    cell.bias_pct
                );
            }
            let cx = gx + (mi as f64 + 0.5) * estimators.len() as f64 * bar_w;
            let _ = writeln!(
                s,
                r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                TOP + plot_h + 16.0,
                label(*m)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">rho = {rho}</text>"#,
            LEFT + (g as f64 + 0.5) * group_w,
            TOP + plot_h + 40.0
        );
    }

    for (i, e) in estimators.iter().enumerate() {
        let ly = TOP + 10.0 + i as f64 * 22.0;
        let lx = WIDTH - RIGHT + 20.0;
        let name = match e {
            Estimator::NaiveDr => "Naive DR",
            Estimator::Cedr => "CEDR",
        };
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{ly}" width="14" height="14" fill="{}"/><text x="{}" y="{}">{name}</text>"#,
            color(*e),
            lx + 20.0,
            ly + 11.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{v:.0}")
    } else {
        let digits = (-step.log10().floor()) as usize;
        format!("{v:.digits$}")
    }
}
