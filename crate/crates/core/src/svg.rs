//! SVG rendering of labelled matches and sampled fields. 3D data is drawn
//! in its xy projection.

use std::fmt::Write as _;

use crate::field::FieldSample;
use crate::types::{LabelResult, MatchSet, Point};

const INLIER: &str = "#e0a800";
const OUTLIER: &str = "#202020";
const ARROW: &str = "#1f5fbf";
const MARGIN: f64 = 10.0;

struct Frame {
    min_x: f64,
    min_y: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn around<'a>(pts: impl Iterator<Item = &'a Point>) -> Self {
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            lo_x = lo_x.min(p.x);
            lo_y = lo_y.min(p.y);
            hi_x = hi_x.max(p.x);
            hi_y = hi_y.max(p.y);
        }
        if !lo_x.is_finite() {
            (lo_x, lo_y, hi_x, hi_y) = (0.0, 0.0, 1.0, 1.0);
        }
        let pad = MARGIN.min(0.05 * (hi_x - lo_x).max(hi_y - lo_y)).max(1e-9);
        Self {
            min_x: lo_x - pad,
            min_y: lo_y - pad,
            width: (hi_x - lo_x + 2.0 * pad).max(1e-9),
            height: (hi_y - lo_y + 2.0 * pad).max(1e-9),
        }
    }

    fn open(&self, out: &mut String) {
        let stroke = 0.002 * self.width.max(self.height);
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" stroke-width="{}">"#,
            fmt(self.min_x),
            fmt(self.min_y),
            fmt(self.width),
            fmt(self.height),
            fmt(stroke)
        )
        .unwrap();
    }
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn line(out: &mut String, a: &Point, b: &Point, color: &str) {
    writeln!(
        out,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}"/>"#,
        fmt(a.x),
        fmt(a.y),
        fmt(b.x),
        fmt(b.y)
    )
    .unwrap();
}

/// Segments from `x_i` to `y_i`; outliers underneath, inliers on top.
pub fn render_matches(m: &MatchSet, labels: &LabelResult) -> String {
    let frame = Frame::around(m.x().iter().chain(m.y()));
    let mut out = String::new();
    frame.open(&mut out);
    for pass in [false, true] {
        let color = if pass { INLIER } else { OUTLIER };
        writeln!(out, r#"<g class="{}">"#, if pass { "inliers" } else { "outliers" }).unwrap();
        for i in (0..m.len()).filter(|&i| labels.inlier[i] == pass) {
            line(&mut out, &m.x()[i], &m.y()[i], color);
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Arrow per valid sample, from the query to its displaced position.
pub fn render_field(samples: &[FieldSample]) -> String {
    let valid: Vec<&FieldSample> = samples.iter().filter(|s| s.valid).collect();
    let frame = Frame::around(samples.iter().map(|s| &s.query).chain(valid.iter().map(|s| &s.displaced)));
    let mut out = String::new();
    frame.open(&mut out);
    out.push_str(r#"<g class="field">"#);
    out.push('\n');
    let head = 0.006 * frame.width.max(frame.height);
    for s in valid {
        line(&mut out, &s.query, &s.displaced, ARROW);
        let d = s.displaced - s.query;
        let len = (d.x * d.x + d.y * d.y).sqrt();
        if len > 2.0 * head {
            let (ux, uy) = (d.x / len, d.y / len);
            for side in [-1.0, 1.0] {
                let tip = Point::new(
                    s.displaced.x - head * (ux - side * 0.5 * uy),
                    s.displaced.y - head * (uy + side * 0.5 * ux),
                    0.0,
                );
                line(&mut out, &s.displaced, &tip, ARROW);
            }
        }
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Dim;

    #[test]
    fn matches_are_grouped_by_label() {
        let m = MatchSet::from_2d(&[[0.0, 0.0], [10.0, 0.0]], &[[1.0, 1.0], [50.0, 20.0]]).unwrap();
        let labels = LabelResult {
            inlier: vec![true, false],
            posterior: vec![1.0, 0.0],
            residual: vec![0.0, 40.0],
        };
        let svg = render_matches(&m, &labels);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<line").count(), 2);
        let inl = svg.find(r#"class="inliers""#).unwrap();
        assert!(svg[inl..].contains(r#"x2="1" y2="1""#));
        assert_eq!(m.dim(), Dim::Two);
    }

    #[test]
    fn field_skips_invalid_samples() {
        let s = |x: f64, valid: bool| FieldSample {
            query: Point::new(x, 0.0, 0.0),
            displaced: Point::new(x + 30.0, 5.0, 0.0),
            support: if valid { 1.0 } else { 0.0 },
            valid,
        };
        let svg = render_field(&[s(0.0, true), s(100.0, false)]);
        assert_eq!(svg.matches("<line").count(), 3);
    }

    #[test]
    fn number_format_is_compact() {
        assert_eq!(fmt(1.0), "1");
        assert_eq!(fmt(-0.00001), "0");
        assert_eq!(fmt(2.5), "2.5");
    }
}
