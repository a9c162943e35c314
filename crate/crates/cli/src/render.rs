//! Static images: grayscale PGM of a field and an SVG catchment map.

use std::fmt::Write as _;

use capplan_core::geometry::{CatchmentPartition, Point, Window};
use capplan_core::intensity::IntensityField;
use capplan_core::risk::{cmp_ratio, RiskTable};

/// Fill colours for risk classes, lowest first.
pub const PALETTE: [&str; 5] = ["#ffffb2", "#fecc5c", "#fd8d3c", "#f03b20", "#bd0026"];

/// Plain PGM (P2), top row first, linear min-max scaling to 0..=255.
pub fn pgm(field: &IntensityField) -> String {
    let g = field.grid();
    let values = field.values();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P2\n{} {}\n255\n", g.nx, g.ny);
    for j in (0..g.ny).rev() {
        let row: Vec<String> = (0..g.nx)
            .map(|i| {
                (((values[g.index(i, j)] - lo) * scale).round() as u32)
                    .min(255)
                    .to_string()
            })
            .collect();
        // keep lines under 70 characters
        for chunk in row.chunks(16) {
            out.push_str(&chunk.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Risk class per station of `risks` (same order): the share of stations
/// with strictly smaller risk, binned into at most five classes. Equal risks
/// always share a class.
pub fn risk_classes(risks: &RiskTable) -> Vec<usize> {
    let entries = risks.entries();
    let classes = entries.len().min(PALETTE.len());
    entries
        .iter()
        .map(|e| {
            let below = entries
                .iter()
                .filter(|o| cmp_ratio(&o.risk, 1, &e.risk, 1).is_lt())
                .count();
            (below * classes / entries.len()).min(classes - 1)
        })
        .collect()
}

/// SVG choropleth of the catchments coloured by risk class, with stations
/// and incidents drawn on top.
pub fn svg(window: &Window, part: &CatchmentPartition, risks: &RiskTable, incidents: &[Point]) -> String {
    const SIZE: f64 = 800.0;
    let g = part.grid();
    let ext = g.extent();
    let s = SIZE / ext.width().max(ext.height());
    let (w, h) = (ext.width() * s, ext.height() * s);
    let tx = |x: f64| (x - ext.xmin) * s;
    let ty = |y: f64| (ext.ymax - y) * s;

    let class_of: Vec<Option<usize>> = {
        let classes = risk_classes(risks);
        part.stations()
            .iter()
            .map(|st| {
                risks
                    .entries()
                    .iter()
                    .position(|e| e.station == st.id)
                    .map(|i| classes[i])
            })
            .collect()
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    out.push_str("<style>\n");
    for (i, c) in PALETTE.iter().enumerate() {
        let _ = writeln!(out, ".q{i} {{ fill: {c}; }}");
    }
    out.push_str(
        ".none { fill: #dddddd; }\n.station { fill: #000000; }\n.incident { fill: #2c7fb8; fill-opacity: 0.6; }\n",
    );
    out.push_str("</style>\n");
    out.push_str(r#"<g id="catchments" shape-rendering="crispEdges">"#);
    out.push('\n');
    for j in 0..g.ny {
        let mut i = 0;
        while i < g.nx {
            let label = part.label_index(g.index(i, j));
            let start = i;
            while i < g.nx && part.label_index(g.index(i, j)) == label {
                i += 1;
            }
            let Some(st) = label else { continue };
            let class = class_of[st].map_or("none".to_string(), |c| format!("q{c}"));
            let x0 = g.origin.x + start as f64 * g.dx;
            let y1 = g.origin.y + (j + 1) as f64 * g.dy;
            let _ = writeln!(
                out,
                r#"<rect class="{class}" data-station="{}" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}"/>"#,
                part.stations()[st].id,
                tx(x0),
                ty(y1),
                (i - start) as f64 * g.dx * s,
                g.dy * s
            );
        }
    }
    out.push_str("</g>\n");
    let outline: Vec<String> = window
        .vertices()
        .iter()
        .map(|p| format!("{:.3},{:.3}", tx(p.x), ty(p.y)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polygon points="{}" fill="none" stroke="#333333" stroke-width="1"/>"##,
        outline.join(" ")
    );
    out.push_str("<g id=\"incidents\">\n");
    for p in incidents {
        let _ = writeln!(
            out,
            r#"<circle class="incident" cx="{:.3}" cy="{:.3}" r="1.5"/>"#,
            tx(p.x),
            ty(p.y)
        );
    }
    out.push_str("</g>\n<g id=\"stations\">\n");
    for st in part.stations() {
        let _ = writeln!(
            out,
            r#"<circle class="station" cx="{:.3}" cy="{:.3}" r="4"><title>{}</title></circle>"#,
            tx(st.location.x),
            ty(st.location.y),
            st.id
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use capplan_core::geometry::{build_partition, Domain, GridSpec, Station};

    #[test]
    fn constant_field_is_flat() {
        let w = Window::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = Domain::new(w.clone(), GridSpec::covering(&w, 7, 5).unwrap()).unwrap();
        let f = IntensityField::constant(&d, 3.0).unwrap();
        let text = pgm(&f);
        let mut tokens = text.split_whitespace();
        assert_eq!(tokens.next(), Some("P2"));
        assert_eq!(tokens.next(), Some("7"));
        assert_eq!(tokens.next(), Some("5"));
        assert_eq!(tokens.next(), Some("255"));
        let px: Vec<&str> = tokens.collect();
        assert_eq!(px.len(), 35);
        assert!(px.iter().all(|p| *p == px[0]));
    }

    #[test]
    fn pgm_top_row_first() {
        let w = Window::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let g = GridSpec::covering(&w, 1, 2).unwrap();
        let f = IntensityField::from_values(g, vec![0.0, 2.0]).unwrap();
        assert_eq!(pgm(&f), "P2\n1 2\n255\n255\n0\n");
    }

    #[test]
    fn classes_share_on_ties() {
        let t = RiskTable::from_values([("a", 5.0), ("b", 5.0)]).unwrap();
        assert_eq!(risk_classes(&t), vec![0, 0]);
        let t = RiskTable::from_values((0..10).map(|i| (format!("s{i}"), i as f64))).unwrap();
        assert_eq!(risk_classes(&t), vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn symmetric_layout_one_class() {
        let w = Window::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = Domain::new(w.clone(), GridSpec::covering(&w, 10, 10).unwrap()).unwrap();
        let part = build_partition(
            &[
                Station::new("a", 0.25, 0.5).unwrap(),
                Station::new("b", 0.75, 0.5).unwrap(),
            ],
            &d,
        )
        .unwrap();
        let t = RiskTable::from_values([("a", 2.0), ("b", 2.0)]).unwrap();
        let doc = svg(&w, &part, &t, &[Point { x: 0.1, y: 0.1 }]);
        assert!(doc.contains(r#"class="q0" data-station="a""#));
        assert!(doc.contains(r#"class="q0" data-station="b""#));
        assert!(!doc.contains(r#"<rect class="q1""#));
        assert!(doc.contains(r#"class="incident""#));
    }
}
