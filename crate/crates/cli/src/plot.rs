//! Deterministic SVG output: training curves and 2×2 confusion heatmaps.

use std::fmt::Write as _;

use ecg_cvae_core::evaluation::ClassConfusion;
use ecg_cvae_core::training::EpochLog;

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;
const TRAIN_COLOR: &str = "#1f77b4";
const VAL_COLOR: &str = "#d62728";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

fn panel(out: &mut String, index: usize, title: &str, series: &[Series<'_>], unit_range: bool) {
    let x0 = MARGIN + index as f64 * (PANEL_W + MARGIN);
    let y0 = MARGIN;
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = if unit_range {
        (0.0, 1.0)
    } else {
        let max = finite.fold(0.0_f64, f64::max);
        (0.0, if max > 0.0 { max * 1.05 } else { 1.0 })
    };
    let px = |i: usize| x0 + if n > 1 { i as f64 * PANEL_W / (n - 1) as f64 } else { PANEL_W / 2.0 };
    let py = |v: f64| {
        let v = if v.is_finite() { v.clamp(lo, hi) } else { hi };
        y0 + PANEL_H - (v - lo) / (hi - lo) * PANEL_H
    };

    let _ = writeln!(out, r#"<g class="panel" id="panel-{index}">"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        fmt(x0 + PANEL_W / 2.0),
        fmt(y0 - 12.0),
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        fmt(x0),
        fmt(y0),
        fmt(PANEL_W),
        fmt(PANEL_H)
    );
    for (v, anchor_y) in [(lo, y0 + PANEL_H), (hi, y0)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"#,
            fmt(x0 - 4.0),
            fmt(anchor_y + 3.0),
            format_args!("{v:.3}")
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">epoch 1..{n}</text>"#,
        fmt(x0 + PANEL_W / 2.0),
        fmt(y0 + PANEL_H + 16.0)
    );
    for (k, s) in series.iter().enumerate() {
        let points: Vec<String> = s.values.iter().enumerate().map(|(i, &v)| format!("{},{}", fmt(px(i)), fmt(py(v)))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            s.color,
            points.join(" ")
        );
        let ly = y0 + 14.0 + k as f64 * 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{}" text-anchor="end">{}</text>"#,
            fmt(x0 + PANEL_W - 6.0),
            fmt(ly),
            s.color,
            escape(s.label)
        );
    }
    out.push_str("</g>\n");
}

/// Three panels with two polylines each: loss (train, validation), binary
/// accuracy (train, validation) and validation micro precision / recall.
pub fn training_curves_svg(history: &[EpochLog]) -> String {
    let width = 3.0 * PANEL_W + 4.0 * MARGIN;
    let height = PANEL_H + 2.5 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = fmt(width),
        h = fmt(height)
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let col = |f: fn(&EpochLog) -> f64| history.iter().map(f).collect::<Vec<f64>>();
    panel(
        &mut out,
        0,
        "Loss",
        &[
            Series { label: "train", color: TRAIN_COLOR, values: col(|h| h.train_loss) },
            Series { label: "validation", color: VAL_COLOR, values: col(|h| h.val_loss) },
        ],
        false,
    );
    panel(
        &mut out,
        1,
        "Binary accuracy",
        &[
            Series { label: "train", color: TRAIN_COLOR, values: col(|h| h.train_acc) },
            Series { label: "validation", color: VAL_COLOR, values: col(|h| h.val_acc) },
        ],
        true,
    );
    panel(
        &mut out,
        2,
        "Validation precision / recall (micro)",
        &[
            Series { label: "precision", color: TRAIN_COLOR, values: col(|h| h.val_precision) },
            Series { label: "recall", color: VAL_COLOR, values: col(|h| h.val_recall) },
        ],
        true,
    );
    out.push_str("</svg>\n");
    out
}

fn cell_color(fraction: f64) -> String {
    let f = fraction.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!("rgb({},{},{})", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// 2×2 heatmap: rows are the true label (0, 1), columns the prediction (0, 1).
pub fn confusion_svg(title: &str, c: &ClassConfusion) -> String {
    let cell = 120.0;
    let (x0, y0) = (90.0, 60.0);
    let total = c.total().max(1) as f64;
    let cells = [[("TN", c.tn), ("FP", c.fp)], [("FN", c.fn_), ("TP", c.tp)]];
    let size = x0 + 2.0 * cell + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{h}" viewBox="0 0 {s} {h}">"#,
        s = fmt(size),
        h = fmt(y0 + 2.0 * cell + 50.0)
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        out,
        r#"<text x="{}" y="28" font-size="16" text-anchor="middle">{}</text>"#,
        fmt(x0 + cell),
        escape(title)
    );
    for (r, row) in cells.iter().enumerate() {
        for (k, (name, count)) in row.iter().enumerate() {
            let x = x0 + k as f64 * cell;
            let y = y0 + r as f64 * cell;
            let fraction = *count as f64 / total;
            let ink = if fraction > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="#444"/>"##,
                fmt(x),
                fmt(y),
                fmt(cell),
                fmt(cell),
                cell_color(fraction)
            );
            let _ = writeln!(
                out,
                r#"<text class="count" x="{}" y="{}" font-size="22" text-anchor="middle" fill="{ink}">{count}</text>"#,
                fmt(x + cell / 2.0),
                fmt(y + cell / 2.0 + 4.0)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" fill="{ink}">{name}</text>"#,
                fmt(x + cell / 2.0),
                fmt(y + cell / 2.0 + 22.0)
            );
        }
    }
    for k in 0..2 {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">predicted {k}</text>"#,
            fmt(x0 + k as f64 * cell + cell / 2.0),
            fmt(y0 + 2.0 * cell + 20.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">true {k}</text>"#,
            fmt(x0 - 8.0),
            fmt(y0 + k as f64 * cell + cell / 2.0 + 4.0)
        );
    }
    out.push_str("</svg>\n");
    out
}
