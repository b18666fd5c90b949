//! SVG frames: domain outline, one dot per agent and a dashed tail of
//! recent positions.

use std::fmt::Write as _;

use crate::geometry::{Polygon, Vec2};

const CANVAS: f64 = 480.0;
const MARGIN: f64 = 16.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// World-to-canvas mapping shared by every frame of a run, so frames do not
/// jump when agents move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    min: Vec2,
    scale: f64,
    width: f64,
    height: f64,
}

impl View {
    /// Fits the polygon and every listed point.
    pub fn fit<'a>(poly: &Polygon, points: impl IntoIterator<Item = &'a Vec2>) -> Self {
        let (mut lo, mut hi) = poly.bounding_box();
        for p in points {
            if p.is_finite() {
                lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let scale = (CANVAS - 2.0 * MARGIN) / span;
        Self {
            min: lo,
            scale,
            width: (hi.x - lo.x) * scale + 2.0 * MARGIN,
            height: (hi.y - lo.y) * scale + 2.0 * MARGIN,
        }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        let x = MARGIN + (p.x - self.min.x) * self.scale;
        let y = self.height - MARGIN - (p.y - self.min.y) * self.scale;
        (x, y)
    }
}

/// Renders step `k` of `positions` (indexed `[step][agent]`) with tails
/// covering the previous `tail_steps` steps.
pub fn render_frame(
    view: &View,
    poly: &Polygon,
    positions: &[Vec<Vec2>],
    k: usize,
    tail_steps: usize,
    time: f64,
    marker_radius: f64,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.1}" height="{:.1}" viewBox="0 0 {:.1} {:.1}">"#,
        view.width, view.height, view.width, view.height
    );
    s.push_str(r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    s.push('\n');

    s.push_str(r##"<polygon class="domain" fill="#f4f4f4" stroke="#222222" stroke-width="1.5" points=""##);
    push_points(&mut s, view, poly.vertices().iter().copied());
    s.push_str("\"/>\n");

    let current = &positions[k];
    let start = k.saturating_sub(tail_steps);
    for i in 0..current.len() {
        let color = PALETTE[i % PALETTE.len()];
        if k > start {
            let _ = write!(
                s,
                r#"<polyline class="tail" fill="none" stroke="{color}" stroke-width="1" stroke-dasharray="4 3" points=""#
            );
            push_points(&mut s, view, positions[start..=k].iter().map(|row| row[i]));
            s.push_str("\"/>\n");
        }
    }
    let r = (marker_radius * view.scale).max(2.0);
    for (i, p) in current.iter().enumerate() {
        let (x, y) = view.map(*p);
        let _ = writeln!(
            s,
            r#"<circle class="agent" cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{}"/>"#,
            PALETTE[i % PALETTE.len()]
        );
    }
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="12" font-family="monospace" font-size="11">t = {time:.2} s</text>"#);
    s.push_str("</svg>\n");
    s
}

fn push_points(s: &mut String, view: &View, points: impl Iterator<Item = Vec2>) {
    for (j, p) in points.enumerate() {
        let (x, y) = view.map(p);
        if j > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.2},{y:.2}");
    }
}

/// Steps at which frames are drawn: every `every` steps, always including 0.
pub fn frame_steps(total_steps: usize, every: usize) -> Vec<usize> {
    (0..=total_steps).step_by(every.max(1)).collect()
}

/// Number of agent markers in an SVG document.
pub fn count_agents(svg: &str) -> usize {
    svg.matches(r#"<circle class="agent""#).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk(n: usize, steps: usize) -> Vec<Vec<Vec2>> {
        (0..=steps).map(|t| (0..n).map(|i| Vec2::new(0.1 * i as f64, -0.5 + 0.01 * t as f64)).collect()).collect()
    }

    #[test]
    fn one_marker_per_agent() {
        let poly = Polygon::unit_square();
        for n in [1, 3, 9] {
            let pos = walk(n, 50);
            let view = View::fit(&poly, pos.iter().flatten());
            for k in frame_steps(50, 10) {
                let svg = render_frame(&view, &poly, &pos, k, 20, k as f64 * 0.02, 0.05);
                assert_eq!(count_agents(&svg), n);
                let tails = svg.matches(r#"class="tail""#).count();
                assert_eq!(tails, if k == 0 { 0 } else { n });
            }
        }
    }

    #[test]
    fn tails_are_bounded() {
        let poly = Polygon::unit_square();
        let pos = walk(1, 100);
        let view = View::fit(&poly, pos.iter().flatten());
        let svg = render_frame(&view, &poly, &pos, 100, 10, 2.0, 0.05);
        let line = svg.lines().find(|l| l.contains("tail")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        assert_eq!(pts.split(' ').count(), 11);
    }

    #[test]
    fn y_axis_points_up() {
        let poly = Polygon::unit_square();
        let view = View::fit(&poly, []);
        let (_, low) = view.map(Vec2::new(0.0, 0.0));
        let (_, high) = view.map(Vec2::new(0.0, 1.0));
        assert!(high < low);
    }

    #[test]
    fn frame_schedule() {
        assert_eq!(frame_steps(1500, 50).len(), 31);
        assert_eq!(frame_steps(10, 4), vec![0, 4, 8]);
    }
}
