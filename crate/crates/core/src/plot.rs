//! Minimal SVG output: learning curves and matrix heatmaps.

use std::fmt::Write;

use crate::metrics::CycleMetrics;
use crate::prob::CorruptionMatrix;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

/// Test accuracy, refurbishment accuracy, selection AUC and gamma per
/// cycle on a shared `[0, 1]` axis.
pub fn learning_curves_svg(history: &[CycleMetrics]) -> String {
    let series: [(&str, &str, fn(&CycleMetrics) -> Option<f64>); 4] = [
        ("test_acc", "#1f77b4", |m| m.test_acc),
        ("refurb_acc", "#ff7f0e", |m| m.refurb_acc),
        ("selection_auc", "#2ca02c", |m| m.selection_auc),
        ("gamma", "#d62728", |m| Some(m.gamma)),
    ];
    let n = history.len().max(2) as f64;
    let px = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1.0);
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * v.clamp(0.0, 1.0);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    s.push('\n');
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for tick in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{tick:.1}</text>"#,
            PAD - 6.0,
            py(tick) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">cycle</text>"#,
        W / 2.0,
        H - 15.0
    );
    for (k, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<String> = history
            .iter()
            .enumerate()
            .filter_map(|(i, m)| get(m).map(|v| format!("{:.2},{:.2}", px(i), py(v))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = PAD + 14.0 * k as f64 + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{name}</text>"#,
            W - PAD - 90.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grey-scale heatmap with the value printed in each cell; rows are the
/// true class, columns the observed class (both 1-based).
pub fn heatmap_svg(m: &CorruptionMatrix, title: &str) -> String {
    let k = m.num_classes();
    let cell = (360.0 / k as f64).min(60.0);
    let size = PAD * 2.0 + cell * k as f64;
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">"#);
    s.push('\n');
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
        size / 2.0,
        PAD / 2.0,
        escape(title)
    );
    for y in 0..k {
        for c in 0..k {
            let v = m.get(y, c).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - v)).round() as u8;
            let (x0, y0) = (PAD + cell * c as f64, PAD + cell * y as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.1}" y="{y0:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({shade},{shade},{shade})" stroke="gray"/>"#
            );
            if k <= 12 {
                let fg = if v > 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" fill="{fg}">{v:.2}</text>"#,
                    x0 + cell / 2.0,
                    y0 + cell / 2.0 + 3.0
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            PAD + cell * (y as f64 + 0.5) + 3.0,
            y + 1
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            PAD + cell * (y as f64 + 0.5),
            PAD + cell * k as f64 + 14.0,
            y + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
