//! Static SVG figures of a scenario and, optionally, a driven trace.

use std::fmt::Write;

use super::scenario::ScenarioSpec;
use crate::geometry::Point2;
use crate::simulate::StepTrace;
use crate::{OrientedBox, Result};

const MAX_SIDE: f64 = 1000.0;
const MARGIN: f64 = 20.0;

struct Frame {
    min: Point2<f64>,
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(points: &[Point2<f64>]) -> Self {
        let (mut lo, mut hi) = (
            Point2::new(f64::MAX, f64::MAX),
            Point2::new(f64::MIN, f64::MIN),
        );
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Point2::new(0.0, 0.0);
            hi = Point2::new(1.0, 1.0);
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        let scale = (MAX_SIDE - 2.0 * MARGIN) / span;
        Self {
            min: lo,
            scale,
            height: (hi.y - lo.y) * scale + 2.0 * MARGIN,
        }
    }

    fn width(&self, max_x: f64) -> f64 {
        (max_x - self.min.x) * self.scale + 2.0 * MARGIN
    }

    fn map(&self, p: Point2<f64>) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * self.scale,
            self.height - MARGIN - (p.y - self.min.y) * self.scale,
        )
    }

    fn path(&self, pts: &[Point2<f64>]) -> String {
        let mut s = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            let _ = write!(s, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
        }
        s
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[Point2<f64>], style: &str) {
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" {style}/>"#,
        f.path(pts)
    );
}

fn polygon(out: &mut String, f: &Frame, b: &OrientedBox, style: &str) {
    let _ = writeln!(
        out,
        r#"<polygon points="{}" {style}/>"#,
        f.path(&b.corners())
    );
}

/// Lanes, expert, agents and the start pose; a trace adds the driven path
/// and marks collision steps.
pub fn render(scenario: Option<&ScenarioSpec>, trace: Option<&[StepTrace]>) -> Result<String> {
    let mut all = Vec::new();
    if let Some(sc) = scenario {
        for l in &sc.lanes {
            all.extend_from_slice(l.centerline.points());
        }
        all.extend_from_slice(sc.ego.expert_trajectory.points());
        all.push(sc.ego.pose.position);
    }
    if let Some(rows) = trace {
        all.extend(rows.iter().map(|r| r.ego.pose.position));
    }
    let f = Frame::fit(&all);
    let max_x = all.iter().map(|p| p.x).fold(f.min.x + 1.0, f64::max);
    let (w, h) = (f.width(max_x), f.height);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(
        out,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    if let Some(sc) = scenario {
        for l in &sc.lanes {
            let style = format!(
                r##"stroke="#e6e6e6" stroke-width="{:.2}""##,
                l.width * f.scale
            );
            polyline(&mut out, &f, l.centerline.points(), &style);
        }
        for l in &sc.lanes {
            polyline(
                &mut out,
                &f,
                l.centerline.points(),
                r##"stroke="#9a9a9a" stroke-width="1" stroke-dasharray="6 4""##,
            );
        }
        for a in &sc.agents {
            polyline(
                &mut out,
                &f,
                a.top_mode().trajectory.points(),
                r##"stroke="#ff7f0e" stroke-width="1.5" stroke-dasharray="3 3""##,
            );
            let b = OrientedBox::from_dims(
                a.initial_pose.position,
                a.width,
                a.length,
                a.initial_pose.heading,
            )?;
            polygon(
                &mut out,
                &f,
                &b,
                r##"fill="#ff7f0e" fill-opacity="0.5" stroke="#b35900""##,
            );
        }
        polyline(
            &mut out,
            &f,
            sc.ego.expert_trajectory.points(),
            r##"stroke="#1f77b4" stroke-width="2""##,
        );
        let ego = OrientedBox::from_dims(
            sc.ego.pose.position,
            sc.ego.dims.width,
            sc.ego.dims.length,
            sc.ego.pose.heading,
        )?;
        polygon(
            &mut out,
            &f,
            &ego,
            r##"fill="#2ca02c" fill-opacity="0.5" stroke="#1a661a""##,
        );
    }
    if let Some(rows) = trace {
        let pts: Vec<_> = rows.iter().map(|r| r.ego.pose.position).collect();
        if pts.len() >= 2 {
            polyline(&mut out, &f, &pts, r##"stroke="#2ca02c" stroke-width="2""##);
        }
        for r in rows.iter().filter(|r| r.collision_flags.iter().any(|&c| c)) {
            let (x, y) = f.map(r.ego.pose.position);
            let _ = writeln!(
                out,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="#d62728"/>"##
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
