//! Procedural doodles in the Quick Draw `simplified` format.
//!
//! Each class is a set of template polylines in unit coordinates. A sample
//! applies a random affine map, a low-frequency wobble and per-point
//! jitter, then goes through the same post-processing as the published
//! simplified data: translate to a minimum of 0, scale uniformly to a
//! maximum of 255, round to integers, RDP with epsilon 2.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rdp::{rdp_simplify, CANVAS_EPSILON};
use crate::stroke::{ClassTable, Point, Sketch, Stroke, CANVAS_MAX};

/// Classes the generator can draw, in default class-table order.
pub const DOODLE_CLASSES: [&str; 10] = [
    "circle",
    "square",
    "triangle",
    "star",
    "zigzag",
    "hexagon",
    "house",
    "cloud",
    "lightning",
    "moon",
];

type Poly = Vec<(f64, f64)>;

fn polygon(corners: usize, phase: f64) -> Poly {
    (0..=corners)
        .map(|i| {
            let a = phase + TAU * i as f64 / corners as f64;
            (a.cos(), a.sin())
        })
        .collect()
}

fn arc(cx: f64, cy: f64, r: f64, from: f64, to: f64, n: usize) -> Poly {
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn rotate_start(closed: &Poly, shift: usize) -> Poly {
    let ring = &closed[..closed.len() - 1];
    let n = ring.len();
    let mut out: Poly = (0..n).map(|i| ring[(i + shift) % n]).collect();
    out.push(out[0]);
    out
}

fn template(class: &str, rng: &mut impl Rng) -> Result<Vec<Poly>> {
    let strokes = match class {
        "circle" => {
            let start = rng.random_range(0.0..TAU);
            let overshoot = rng.random_range(0.0..0.4);
            vec![arc(0.0, 0.0, 1.0, start, start + TAU + overshoot, 32)]
        }
        "square" => {
            let sq = rotate_start(&polygon(4, PI / 4.0), rng.random_range(0..4));
            if rng.random_bool(0.3) {
                vec![sq[..3].to_vec(), sq[2..].to_vec()]
            } else {
                vec![sq]
            }
        }
        "triangle" => vec![rotate_start(&polygon(3, -PI / 2.0), rng.random_range(0..3))],
        "star" => {
            let pts: Poly = (0..=5)
                .map(|i| {
                    let a = -PI / 2.0 + 2.0 * TAU * i as f64 / 5.0;
                    (a.cos(), a.sin())
                })
                .collect();
            vec![pts]
        }
        "zigzag" => {
            let teeth = rng.random_range(3..=6);
            let pts: Poly = (0..=2 * teeth)
                .map(|i| (-1.0 + 2.0 * i as f64 / (2 * teeth) as f64, if i % 2 == 0 { 0.35 } else { -0.35 }))
                .collect();
            vec![pts]
        }
        "hexagon" => vec![rotate_start(&polygon(6, 0.0), rng.random_range(0..6))],
        "house" => {
            let walls = vec![(-0.8, -0.1), (-0.8, 1.0), (0.8, 1.0), (0.8, -0.1), (-0.8, -0.1)];
            let roof = vec![(-0.9, -0.1), (0.0, -1.0), (0.9, -0.1)];
            let mut s = vec![walls, roof];
            if rng.random_bool(0.5) {
                s.push(vec![(-0.2, 1.0), (-0.2, 0.45), (0.2, 0.45), (0.2, 1.0)]);
            }
            s
        }
        "cloud" => {
            let bumps = rng.random_range(5..=7) as f64;
            let pts: Poly = (0..=64)
                .map(|i| {
                    let a = TAU * i as f64 / 64.0;
                    let r = 0.75 + 0.25 * (bumps * a / 2.0).sin().abs();
                    (1.2 * r * a.cos(), 0.7 * r * a.sin())
                })
                .collect();
            vec![pts]
        }
        "lightning" => vec![vec![
            (0.3, -1.0),
            (-0.4, 0.1),
            (0.15, 0.1),
            (-0.3, 1.0),
            (0.5, -0.15),
            (-0.05, -0.15),
            (0.3, -1.0),
        ]],
        "moon" => {
            let outer = arc(0.0, 0.0, 1.0, PI / 2.0, 1.5 * PI, 20);
            let inner = arc(-0.45, 0.0, 0.9, 1.5 * PI - 0.35, PI / 2.0 + 0.35, 20);
            let mut both = outer;
            both.extend(inner);
            vec![both]
        }
        other => return Err(Error::UnknownClass(other.to_string())),
    };
    Ok(strokes)
}

/// Resamples a polyline with roughly `step` spacing.
fn densify(poly: &Poly, step: f64) -> Poly {
    let mut out = vec![poly[0]];
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let n = (len / step).ceil().max(1.0) as usize;
        for i in 1..=n {
            let t = i as f64 / n as f64;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

/// Draws one sample of `class` in canvas coordinates.
pub fn draw(class: &str, label: Option<usize>, rng: &mut impl Rng) -> Result<Sketch> {
    let mut strokes = template(class, rng)?;
    if rng.random_bool(0.5) {
        for s in &mut strokes {
            s.reverse();
        }
    }
    let angle = rng.random_range(-0.3..0.3);
    let (sx, sy) = (rng.random_range(0.75..1.25), rng.random_range(0.75..1.25));
    let shear = rng.random_range(-0.2..0.2);
    let (c, s) = (f64::cos(angle), f64::sin(angle));
    let wobble_amp = rng.random_range(0.0..0.06);
    let wobble_freq = rng.random_range(1.0..3.0);
    let wobble_phase = rng.random_range(0.0..TAU);
    let jitter = 0.004;

    let mut placed: Vec<Poly> = Vec::with_capacity(strokes.len());
    for poly in &strokes {
        let dense = densify(poly, 0.05);
        let n = dense.len() as f64;
        let pts: Poly = dense
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let w = wobble_amp * (wobble_freq * TAU * i as f64 / n + wobble_phase).sin();
                let (x, y) = (x + w + rng.random_range(-jitter..jitter), y - w + rng.random_range(-jitter..jitter));
                let (x, y) = (sx * (x + shear * y), sy * y);
                (c * x - s * y, s * x + c * y)
            })
            .collect();
        placed.push(pts);
    }

    let all = placed.iter().flatten();
    let min_x = all.clone().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let min_y = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_x = all.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let max_y = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let scale = CANVAS_MAX / span;

    let mut out = Vec::with_capacity(placed.len());
    for poly in placed {
        let mut pts: Vec<Point> = Vec::with_capacity(poly.len());
        for (x, y) in poly {
            let p = Point::new(((x - min_x) * scale).round(), ((y - min_y) * scale).round());
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        out.push(rdp_simplify(&Stroke::new(pts)?, CANVAS_EPSILON)?);
    }
    Sketch::new(out, label)
}

/// `per_class` samples of every class in `classes`, interleaved by class.
/// Every name must be one of [`DOODLE_CLASSES`].
pub fn generate(classes: &ClassTable, per_class: usize, seed: u64) -> Result<Vec<Sketch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for _ in 0..per_class {
        for (label, name) in classes.names().iter().enumerate() {
            out.push(draw(name, Some(label), &mut rng)?);
        }
    }
    Ok(out)
}

pub fn default_class_table() -> ClassTable {
    ClassTable::new(DOODLE_CLASSES).expect("distinct names")
}
