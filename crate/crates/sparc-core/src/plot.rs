//! Minimal deterministic SVG rendering for histograms, collision-rate bars,
//! and region traces. Output is a plain string; callers decide where it goes.

use crate::harness::{ExperimentTable, Histogram, TraceStep};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Histogram bars with an optional vertical quantile marker.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let mut out = svg_open(title);
    let max_count = h.counts.iter().cloned().max().unwrap_or(1).max(1) as f64;
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let n = h.counts.len() as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = plot_h * c as f64 / max_count;
        let x = MARGIN + plot_w * i as f64 / n;
        let y = H - MARGIN - bh;
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"steelblue\" stroke=\"white\" stroke-width=\"0.5\"/>\n",
            x,
            y,
            plot_w / n,
            bh
        ));
    }
    if let Some(m) = h.marker {
        if h.hi > h.lo {
            let x = MARGIN + plot_w * ((m - h.lo) / (h.hi - h.lo)).clamp(0.0, 1.0);
            out.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{MARGIN}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"crimson\" stroke-width=\"2\" stroke-dasharray=\"6 3\"/>\n\
                 <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"crimson\" \
                 font-family=\"sans-serif\">{m:.3}</text>\n",
                H - MARGIN,
                MARGIN - 6.0
            ));
        }
    }
    // Axis line and extents.
    out.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"black\"/>\n\
         <text x=\"{MARGIN}\" y=\"{2:.2}\" font-size=\"12\" font-family=\"sans-serif\">{3}</text>\n\
         <text x=\"{1:.2}\" y=\"{2:.2}\" font-size=\"12\" text-anchor=\"end\" \
         font-family=\"sans-serif\">{4:.3}</text>\n",
        H - MARGIN,
        W - MARGIN,
        H - MARGIN + 18.0,
        h.lo,
        h.hi
    ));
    out.push_str("</svg>\n");
    out
}

/// Horizontal bar chart of absolute collision rates per controller.
pub fn rates_svg(table: &ExperimentTable, title: &str) -> String {
    let mut out = svg_open(title);
    let rows = &table.rows;
    if rows.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let max_rate = rows.iter().map(|r| r.rate_abs).fold(1e-12, f64::max);
    let plot_w = W - 2.0 * MARGIN - 120.0;
    let band = (H - 2.0 * MARGIN) / rows.len() as f64;
    for (i, r) in rows.iter().enumerate() {
        let y = MARGIN + band * i as f64;
        let bw = plot_w * r.rate_abs / max_rate;
        let label = match r.alpha {
            Some(a) => format!("{} a={a}", r.controller),
            None => r.controller.to_string(),
        };
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{}</text>\n\
             <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" font-family=\"sans-serif\">{:.2}%</text>\n",
            MARGIN + 110.0,
            y + band * 0.55,
            escape(&label),
            MARGIN + 120.0,
            y + band * 0.15,
            bw,
            band * 0.6,
            MARGIN + 126.0 + bw,
            y + band * 0.55,
            r.rate_abs * 100.0
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Prediction regions (boxes) overlaid with the realized pedestrian path.
pub fn trace_svg(trace: &[TraceStep], title: &str) -> String {
    let mut out = svg_open(title);
    if trace.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in trace {
        lo.0 = lo.0.min(t.center.par - t.half_widths.par).min(t.realized.par);
        lo.1 = lo.1.min(t.center.perp - t.half_widths.perp).min(t.realized.perp);
        hi.0 = hi.0.max(t.center.par + t.half_widths.par).max(t.realized.par);
        hi.1 = hi.1.max(t.center.perp + t.half_widths.perp).max(t.realized.perp);
    }
    let pad = 0.5;
    lo = (lo.0 - pad, lo.1 - pad);
    hi = (hi.0 + pad, hi.1 + pad);
    let sx = (W - 2.0 * MARGIN) / (hi.0 - lo.0);
    let sy = (H - 2.0 * MARGIN) / (hi.1 - lo.1);
    let px = |par: f64| MARGIN + (par - lo.0) * sx;
    let py = |perp: f64| H - MARGIN - (perp - lo.1) * sy;

    for t in trace {
        let x = px(t.center.par - t.half_widths.par);
        let y = py(t.center.perp + t.half_widths.perp);
        let w = 2.0 * t.half_widths.par * sx;
        let h = 2.0 * t.half_widths.perp * sy;
        let color = if t.contained { "steelblue" } else { "crimson" };
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             fill=\"none\" stroke=\"{color}\" stroke-width=\"0.8\"/>\n"
        ));
    }
    let path: Vec<String> = trace
        .iter()
        .map(|t| format!("{:.2},{:.2}", px(t.realized.par), py(t.realized.perp)))
        .collect();
    out.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.2\"/>\n",
        path.join(" ")
    ));
    out.push_str("</svg>\n");
    out
}
