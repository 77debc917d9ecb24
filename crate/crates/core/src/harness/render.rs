use std::fmt::Write;

use crate::env::{TrackLayout, Vec2};

const WIDTH: f64 = 900.0;
const MARGIN: f64 = 20.0;

/// Blue at `a = 0`, red at `a = 1`.
pub fn gradient(a: f64) -> (u8, u8, u8) {
    let a = a.clamp(0.0, 1.0);
    ((255.0 * a).round() as u8, 0, (255.0 * (1.0 - a)).round() as u8)
}

/// Track outline plus the driven path: one polyline vertex and one colored
/// marker per window, colored by `arousal` rescaled by its own min and max.
pub fn render_trace(layout: &TrackLayout, positions: &[Vec2], arousal: &[f64]) -> String {
    assert_eq!(positions.len(), arousal.len(), "one arousal value per window");
    let b = layout.bounds;
    let pad = layout.barrier_half_width;
    let (x0, y0) = (b.min.x - pad, b.min.y - pad);
    let span_x = b.max.x - b.min.x + 2.0 * pad;
    let span_y = b.max.y - b.min.y + 2.0 * pad;
    let scale = (WIDTH - 2.0 * MARGIN) / span_x.max(span_y);
    let height = span_y * scale + 2.0 * MARGIN;
    // y flipped so the track reads as seen from above
    let px = |p: Vec2| (MARGIN + (p.x - x0) * scale, height - MARGIN - (p.y - y0) * scale);
    let path = |pts: &[Vec2]| {
        pts.iter()
            .map(|&p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.2}">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#f4f4ef"/>"##);
    for side in [-1.0, 1.0] {
        let edge = layout.edge_polylines(side * layout.road_half_width);
        let _ = writeln!(
            svg,
            r##"<polygon class="edge" points="{}" fill="none" stroke="#888" stroke-width="1.5"/>"##,
            path(&edge)
        );
    }
    let _ = writeln!(
        svg,
        r##"<polyline class="trajectory" points="{}" fill="none" stroke="#333" stroke-width="1" stroke-opacity="0.5"/>"##,
        path(positions)
    );
    let lo = arousal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = arousal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (&p, &a) in positions.iter().zip(arousal) {
        let t = if hi > lo { (a - lo) / (hi - lo) } else { 0.5 };
        let (r, g, bl) = gradient(t);
        let (x, y) = px(p);
        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="rgb({r},{g},{bl})"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, RacingEnv};

    #[test]
    fn one_vertex_per_window_and_red_at_max() {
        let env = RacingEnv::with_default_track();
        let states = crate::harness::stats::replay(&env, 0, &[Action::new(0, 1).unwrap(); 30]).unwrap();
        let pos: Vec<Vec2> = states.iter().map(|s| s.player.position).collect();
        let arousal: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 / 20.0).collect();
        let svg = render_trace(env.layout(), &pos, &arousal);
        let line = svg.lines().find(|l| l.contains(r#"class="trajectory""#)).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split_whitespace().count(), 30);
        assert_eq!(svg.matches("<circle").count(), 30);
        let max_i = (0..30).max_by(|&a, &b| arousal[a].total_cmp(&arousal[b])).unwrap();
        let circle = svg.lines().filter(|l| l.starts_with("<circle")).nth(max_i).unwrap();
        assert!(circle.contains("rgb(255,0,0)"));
        assert_eq!(gradient(0.0), (0, 0, 255));
    }
}
