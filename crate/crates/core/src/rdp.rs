//! Ramer-Douglas-Peucker polyline simplification.

use crate::error::{Error, Result};
use crate::stroke::{Point, Stroke};

/// Live-canvas tolerance in canvas units, chosen to match the vertex density
/// of the Quick Draw `simplified` files.
pub const CANVAS_EPSILON: f64 = 2.0;

/// Perpendicular distance from `p` to the infinite line through `a` and `b`;
/// plain Euclidean distance to `a` when the two coincide.
pub fn perpendicular_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len = dx.hypot(dy);
    if len == 0.0 {
        return p.distance(&a);
    }
    ((p.x - a.x) * dy - (p.y - a.y) * dx).abs() / len
}

/// Simplifies `stroke`, keeping both endpoints.
///
/// Each span is split at its farthest interior point (the earliest one on
/// ties) whenever that distance exceeds `epsilon`.
pub fn rdp_simplify(stroke: &Stroke, epsilon: f64) -> Result<Stroke> {
    if !(epsilon >= 0.0) {
        return Err(Error::arg(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let points = stroke.points();
    let n = points.len();
    if n <= 2 {
        return Ok(stroke.clone());
    }

    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut spans = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = spans.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let mut far = lo;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d = perpendicular_distance(*p, a, b);
            if d > far_d {
                far_d = d;
                far = i;
            }
        }
        if far_d > epsilon {
            keep[far] = true;
            spans.push((lo, far));
            spans.push((far, hi));
        }
    }

    let kept = points
        .iter()
        .zip(&keep)
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect();
    Stroke::new(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stroke(xy: &[(f64, f64)]) -> Stroke {
        Stroke::from_xy(xy).unwrap()
    }

    #[test]
    fn two_points_unchanged() {
        let s = stroke(&[(0.0, 0.0), (5.0, 9.0)]);
        assert_eq!(rdp_simplify(&s, 100.0).unwrap(), s);
        assert_eq!(rdp_simplify(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn single_point_unchanged() {
        let s = stroke(&[(3.0, 3.0)]);
        assert_eq!(rdp_simplify(&s, 1.0).unwrap(), s);
    }

    #[test]
    fn collinear_collapses() {
        let s = stroke(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(
            rdp_simplify(&s, 0.5).unwrap(),
            stroke(&[(0.0, 0.0), (2.0, 0.0)])
        );
    }

    #[test]
    fn zigzag_keeps_everything_at_unit_epsilon() {
        // Frozen from the recursive oracle in tests/oracles.rs.
        let s = stroke(&[(0.0, 0.0), (1.0, 2.0), (2.0, 0.0), (3.0, 2.0), (4.0, 0.0)]);
        assert_eq!(rdp_simplify(&s, 1.0).unwrap(), s);
        assert_eq!(
            rdp_simplify(&s, 2.5).unwrap(),
            stroke(&[(0.0, 0.0), (4.0, 0.0)])
        );
    }

    #[test]
    fn negative_epsilon_rejected() {
        let s = stroke(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(matches!(rdp_simplify(&s, -0.1), Err(Error::Argument(_))));
        assert!(rdp_simplify(&s, f64::NAN).is_err());
    }

    #[test]
    fn closed_stroke_uses_point_distance() {
        let s = stroke(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 0.0)]);
        let out = rdp_simplify(&s, 1.0).unwrap();
        assert_eq!(out.len(), 4);
    }
}
