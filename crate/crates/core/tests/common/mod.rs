//! Independent reference implementations shared by the oracle tests and
//! the acceptance runner.

#![allow(dead_code)]

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchnet::model::ArchitectureSpec;
use sketchnet::nn::Conv1dLayer;
use sketchnet::rdp_simplify;
use sketchnet::stroke::Stroke;

/// Recursive RDP on integer points with `epsilon = half_eps / 2`.
/// Distances are compared exactly: `d > eps  <=>  4 cross^2 > half_eps^2 len^2`.
pub fn rdp_oracle(points: &[(i64, i64)], half_eps: i64) -> Vec<(i64, i64)> {
    fn rec(points: &[(i64, i64)], half_eps: i64, out: &mut Vec<(i64, i64)>) {
        let n = points.len();
        let (a, b) = (points[0], points[n - 1]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        // squared distance numerator over a shared denominator len2
        let score = |p: (i64, i64)| -> i64 {
            if len2 == 0 {
                (p.0 - a.0).pow(2) + (p.1 - a.1).pow(2)
            } else {
                ((p.0 - a.0) * dy - (p.1 - a.1) * dx).pow(2)
            }
        };
        let mut far = 0;
        let mut best = -1;
        for (i, &p) in points.iter().enumerate().take(n - 1).skip(1) {
            if score(p) > best {
                best = score(p);
                far = i;
            }
        }
        let denom = if len2 == 0 { 1 } else { len2 };
        if n > 2 && 4 * best > half_eps * half_eps * denom {
            rec(&points[..=far], half_eps, out);
            out.pop();
            rec(&points[far..], half_eps, out);
        } else {
            out.push(a);
            out.push(b);
        }
    }
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = Vec::new();
    rec(points, half_eps, &mut out);
    out
}

/// `count` polylines of 1 to 8 points on a small integer grid, each with a
/// half-integer epsilon in [0, 5].
pub fn random_polylines(count: usize, seed: u64) -> Vec<(Vec<(i64, i64)>, i64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=8);
            let pts = (0..n).map(|_| (rng.random_range(0..=12), rng.random_range(0..=12))).collect();
            (pts, rng.random_range(0..=10))
        })
        .collect()
}

/// Runs the library on one oracle case and reports whether they agree.
pub fn rdp_matches(points: &[(i64, i64)], half_eps: i64) -> bool {
    let xy: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let got = rdp_simplify(&Stroke::from_xy(&xy).unwrap(), half_eps as f64 / 2.0).unwrap();
    let got: Vec<(i64, i64)> = got.points().iter().map(|p| (p.x as i64, p.y as i64)).collect();
    got == rdp_oracle(points, half_eps)
}

/// Direct summation over `out[b,t,o] = bias[o] + sum w[o,c,j] x[b,t+j-k/2,c]`.
pub fn naive_conv(layer: &Conv1dLayer, x: &Array3<f64>) -> Array3<f64> {
    let (bsz, t, cin) = x.dim();
    let (cout, k) = (layer.out_channels(), layer.kernel());
    let w = |o: usize, c: usize, j: usize| layer.weight.values[(o * cin + c) * k + j];
    let mut y = Array3::zeros((bsz, t, cout));
    for b in 0..bsz {
        for s in 0..t {
            for o in 0..cout {
                let mut acc = layer.bias.values[o];
                for c in 0..cin {
                    for j in 0..k {
                        let src = s as isize + j as isize - (k / 2) as isize;
                        if src >= 0 && (src as usize) < t {
                            acc += w(o, c, j) * x[[b, src as usize, c]];
                        }
                    }
                }
                y[[b, s, o]] = acc;
            }
        }
    }
    y
}

/// Naive gradients of `sum(dy * conv(x))`: `(dx, dweight, dbias)`.
pub fn naive_conv_grads(layer: &Conv1dLayer, x: &Array3<f64>, dy: &Array3<f64>) -> (Array3<f64>, Vec<f64>, Array1<f64>) {
    let (bsz, t, cin) = x.dim();
    let (cout, k) = (layer.out_channels(), layer.kernel());
    let mut dx = Array3::zeros(x.dim());
    let mut dw = vec![0.0; cout * cin * k];
    let mut db = Array1::zeros(cout);
    for b in 0..bsz {
        for s in 0..t {
            for o in 0..cout {
                let g = dy[[b, s, o]];
                db[o] += g;
                for c in 0..cin {
                    for j in 0..k {
                        let src = s as isize + j as isize - (k / 2) as isize;
                        if src >= 0 && (src as usize) < t {
                            let src = src as usize;
                            dw[(o * cin + c) * k + j] += g * x[[b, src, c]];
                            dx[[b, src, c]] += g * layer.weight.values[(o * cin + c) * k + j];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Parameter count from layer shapes alone.
pub fn closed_form_parameter_count(spec: &ArchitectureSpec) -> usize {
    let mut total = 0;
    let mut width = spec.input_channels;
    for (&ch, &k) in spec.conv_channels.iter().zip(&spec.conv_kernels) {
        // kernel, bias, gamma, beta
        total += ch * width * k + 3 * ch;
        width = ch;
    }
    let h = spec.hidden_size;
    for _ in 0..spec.lstm_layers {
        total += 2 * (width * 4 * h + h * 4 * h + 4 * h);
        width = 2 * h;
    }
    total + width * spec.class_count + spec.class_count
}

pub fn random_tensor(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn max_abs_diff<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
