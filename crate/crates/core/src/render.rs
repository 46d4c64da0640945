//! SVG 1.1 export of a risk-island layout.
//!
//! Node fill encodes additional defaults, node radius encodes stress (already baked into the
//! layout) and edge colour encodes the exposure amount.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::metrics::RiskMatrix;
use crate::scalar::Scalar;

type Rgb = (u8, u8, u8);

const NODE_RAMP: [Rgb; 3] = [(255, 255, 204), (253, 141, 60), (189, 0, 38)];
const EDGE_RAMP: [Rgb; 2] = [(198, 219, 239), (8, 48, 107)];

fn ramp(stops: &[Rgb], t: f64) -> Rgb {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let span = (stops.len() - 1) as f64;
    let k = ((t * span).floor() as usize).min(stops.len() - 2);
    let local = t * span - k as f64;
    let mix = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * local).round() as u8;
    let (a, b) = (stops[k], stops[k + 1]);
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn hex((r, g, b): Rgb) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Render a layout as a standalone SVG document of side `canvas`.
pub fn render_svg<T: Scalar>(
    layout: &Layout<T>,
    risk: &RiskMatrix<T>,
    canvas: f64,
) -> Result<String> {
    let defaults = risk
        .normalized_column("defaults")
        .ok_or_else(|| Error::InvalidParameter("risk matrix lacks a defaults column".into()))?;
    let max_amount = layout
        .edges
        .iter()
        .map(|e| e.amount.as_f64())
        .fold(0.0, f64::max);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{canvas:.0}" height="{canvas:.0}" viewBox="0 0 {canvas:.2} {canvas:.2}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(svg, r#"<g id="edges" fill="none" stroke-opacity="0.6">"#);
    for e in &layout.edges {
        let t = if max_amount > 0.0 {
            e.amount.as_f64() / max_amount
        } else {
            0.0
        };
        let points: Vec<String> = e
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", p[0].as_f64(), p[1].as_f64()))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke="{}" stroke-width="{:.2}"><title>{} → {}: {}</title></polyline>"#,
            points.join(" "),
            hex(ramp(&EDGE_RAMP, t)),
            0.5 + 2.5 * t,
            escape(&e.from),
            escape(&e.to),
            e.amount.as_f64()
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r##"<g id="nodes" stroke="#333333" stroke-width="0.75">"##
    );
    for p in &layout.positions {
        let i = risk
            .bank_ids
            .iter()
            .position(|id| *id == p.id)
            .ok_or_else(|| Error::UnknownBank(p.id.clone()))?;
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{}"><title>{}</title></circle>"#,
            p.x.as_f64(),
            p.y.as_f64(),
            p.r.as_f64(),
            hex(ramp(&NODE_RAMP, defaults[i].as_f64())),
            escape(&p.id)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(&NODE_RAMP, 0.0), NODE_RAMP[0]);
        assert_eq!(ramp(&NODE_RAMP, 1.0), NODE_RAMP[2]);
        assert_eq!(ramp(&NODE_RAMP, 0.5), NODE_RAMP[1]);
        assert_eq!(ramp(&EDGE_RAMP, f64::NAN), EDGE_RAMP[0]);
        assert_eq!(hex((255, 0, 16)), "#ff0010");
    }
}
