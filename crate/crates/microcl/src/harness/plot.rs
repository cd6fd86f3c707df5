//! Accuracy-vs-batch SVG plots: one mean curve per strategy with a
//! translucent +/- one-standard-deviation band. Plain hand-rolled SVG —
//! deterministic text output, no drawing dependencies.

use std::fmt::Write as _;

use super::aggregate::ComparisonReport;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Render the report as a complete SVG document.
pub fn render_svg(report: &ComparisonReport, title: &str) -> String {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let rows = report.rows.max(1);
    let x = |b: usize| {
        if rows == 1 {
            MARGIN_L + plot_w / 2.0
        } else {
            MARGIN_L + plot_w * b as f64 / (rows - 1) as f64
        }
    };
    let y = |acc: f64| MARGIN_T + plot_h * (1.0 - acc.clamp(0.0, 100.0) / 100.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(
        s,
        r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="28" font-family="sans-serif" font-size="18" text-anchor="middle">{}</text>"##,
        MARGIN_L + plot_w / 2.0,
        escape(title)
    );

    // Grid and y ticks every 20 points.
    for tick in (0..=5).map(|i| i as f64 * 20.0) {
        let ty = y(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_L:.1}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#dddddd" stroke-width="1"/>"##,
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"##,
            MARGIN_L - 8.0,
            ty + 4.0,
            tick
        );
    }
    // X ticks: at most ~10, integer batch indices.
    let step = (rows.saturating_sub(1) / 10).max(1);
    let mut b = 0;
    while b < rows {
        let tx = x(b);
        let _ = writeln!(
            s,
            r##"<line x1="{tx:.1}" y1="{:.1}" x2="{tx:.1}" y2="{:.1}" stroke="#dddddd" stroke-width="1"/>"##,
            MARGIN_T,
            MARGIN_T + plot_h
        );
        let _ = writeln!(
            s,
            r##"<text x="{tx:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{b}</text>"##,
            MARGIN_T + plot_h + 20.0
        );
        b += step;
    }
    // Axis labels and frame.
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_L:.1}" y="{MARGIN_T:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#333333" stroke-width="1"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="middle">training batch</text>"##,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r##"<text x="18" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.1})">accuracy (%)</text>"##,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );

    for (i, curves) in report.strategies.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // Std band: polygon up the +std edge and back along the -std edge.
        if curves.num_runs > 1 {
            let mut pts = String::new();
            for b in 0..rows {
                let _ = write!(pts, "{:.1},{:.1} ", x(b), y(curves.mean[b] + curves.std[b]));
            }
            for b in (0..rows).rev() {
                let _ = write!(pts, "{:.1},{:.1} ", x(b), y(curves.mean[b] - curves.std[b]));
            }
            let _ = writeln!(
                s,
                r##"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"##,
                pts.trim_end()
            );
        }
        let mut pts = String::new();
        for b in 0..rows {
            let _ = write!(pts, "{:.1},{:.1} ", x(b), y(curves.mean[b]));
        }
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"##,
            pts.trim_end()
        );
        // Legend entry.
        let ly = MARGIN_T + 16.0 + i as f64 * 20.0;
        let lx = MARGIN_L + plot_w + 12.0;
        let _ = writeln!(
            s,
            r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"##,
            lx + 22.0
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13">{}</text>"##,
            lx + 28.0,
            ly + 4.0,
            escape(&curves.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
