//! Simplifies a dense noisy spiral at a few tolerances.
//!
//! `cargo run --example rdp`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchnet::{rdp_simplify, Stroke};

fn main() -> sketchnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xy: Vec<(f64, f64)> = (0..400)
        .map(|i| {
            let t = i as f64 * 0.05;
            let r = 10.0 + 5.0 * t + rng.random_range(-0.5..0.5);
            (128.0 + r * t.cos(), 128.0 + r * t.sin())
        })
        .collect();
    let spiral = Stroke::from_xy(&xy)?;
    println!("epsilon  points  arc length");
    for eps in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = rdp_simplify(&spiral, eps)?;
        println!("{eps:>7.1}  {:>6}  {:>10.1}", s.len(), s.arc_length());
    }
    Ok(())
}
