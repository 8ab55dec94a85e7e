//! Bidirectional LSTM with masked (right-padded) sequences.
//!
//! Gate order inside the `4h` axis is input, forget, cell candidate, output.
//! At padded steps the state is carried over unchanged, so the forward
//! direction ends on the last valid state and the backward direction starts
//! from a zero state at the last valid step.

use ndarray::{s, Array2, Array3, ArrayView2, Axis, Zip};
use rand::Rng;

use super::param::ParamTensor;
use super::{sigmoid, tanh};
use crate::error::{Error, Result};

pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// `[in, 4h]`
    pub w_input: ParamTensor,
    /// `[h, 4h]`
    pub w_hidden: ParamTensor,
    /// `[4h]`
    pub bias: ParamTensor,
    reverse: bool,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// Activated gates per processing step, `(T, B, 4h)`.
    gates: Array3<f64>,
    /// `tanh(c_new)` per processing step, `(T, B, h)`.
    tanh_c: Array3<f64>,
    /// States before each processing step (index 0 = initial zeros),
    /// `(T + 1, B, h)`.
    h_prev: Array3<f64>,
    c_prev: Array3<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    x2: Array2<f64>,
    mask: Array2<f64>,
    fwd: DirectionCache,
    bwd: DirectionCache,
}

impl LstmDirection {
    fn new(prefix: &str, input: usize, hidden: usize, reverse: bool, rng: &mut impl Rng) -> Self {
        let mut bias = ParamTensor::zeros(format!("{prefix}.bias"), &[4 * hidden]);
        bias.values[hidden..2 * hidden].fill(FORGET_BIAS_INIT);
        LstmDirection {
            w_input: ParamTensor::xavier(
                format!("{prefix}.w_input"),
                &[input, 4 * hidden],
                input,
                4 * hidden,
                rng,
            ),
            w_hidden: ParamTensor::xavier(
                format!("{prefix}.w_hidden"),
                &[hidden, 4 * hidden],
                hidden,
                4 * hidden,
                rng,
            ),
            bias,
            reverse,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    fn step_order(&self, t: usize) -> Vec<usize> {
        if self.reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        }
    }

    /// Input projection plus bias for all steps, `(B, T, 4h)`.
    fn project(&self, x2: &Array2<f64>, b: usize, t: usize) -> Array3<f64> {
        let h4 = 4 * self.hidden();
        let mut z = x2.dot(&self.w_input.view2());
        for mut row in z.rows_mut() {
            row += &ndarray::ArrayView1::from(&self.bias.values[..]);
        }
        z.into_shape_with_order((b, t, h4)).unwrap()
    }

    /// Runs one direction, writing `h` into `out` and optionally recording
    /// everything the backward pass needs.
    fn run(
        &self,
        xproj: &Array3<f64>,
        mask: &Array2<f64>,
        mut out: ndarray::ArrayViewMut3<'_, f64>,
        record: bool,
    ) -> Option<DirectionCache> {
        let (b, t, _) = xproj.dim();
        let h = self.hidden();
        let wh = self.w_hidden.view2();
        let mut hs = Array2::<f64>::zeros((b, h));
        let mut cs = Array2::<f64>::zeros((b, h));
        let mut cache = record.then(|| DirectionCache {
            gates: Array3::zeros((t, b, 4 * h)),
            tanh_c: Array3::zeros((t, b, h)),
            h_prev: Array3::zeros((t + 1, b, h)),
            c_prev: Array3::zeros((t + 1, b, h)),
        });

        for (k, ti) in self.step_order(t).into_iter().enumerate() {
            let mut z = hs.dot(&wh);
            z += &xproj.slice(s![.., ti, ..]);
            let mut tanh_c = Array2::<f64>::zeros((b, h));
            for bi in 0..b {
                // Padded steps keep the previous state; their gates are
                // never read by the backward pass.
                if mask[[bi, ti]] == 0.0 {
                    continue;
                }
                let mut zr = z.row_mut(bi);
                let zs = zr.as_slice_mut().unwrap();
                for j in 0..h {
                    zs[j] = sigmoid(zs[j]);
                    zs[h + j] = sigmoid(zs[h + j]);
                    zs[2 * h + j] = tanh(zs[2 * h + j]);
                    zs[3 * h + j] = sigmoid(zs[3 * h + j]);
                }
                for j in 0..h {
                    let c_new = zs[h + j] * cs[[bi, j]] + zs[j] * zs[2 * h + j];
                    let tc = tanh(c_new);
                    tanh_c[[bi, j]] = tc;
                    cs[[bi, j]] = c_new;
                    hs[[bi, j]] = zs[3 * h + j] * tc;
                }
            }
            out.slice_mut(s![.., ti, ..]).assign(&hs);
            if let Some(c) = cache.as_mut() {
                c.gates.index_axis_mut(Axis(0), k).assign(&z);
                c.tanh_c.index_axis_mut(Axis(0), k).assign(&tanh_c);
                c.h_prev.index_axis_mut(Axis(0), k + 1).assign(&hs);
                c.c_prev.index_axis_mut(Axis(0), k + 1).assign(&cs);
            }
        }
        cache
    }

    /// Backpropagates through one direction. `dout` is the gradient w.r.t.
    /// this direction's `h` outputs, `(B, T, h)`. Returns `dxproj`.
    fn backprop(
        &mut self,
        cache: &DirectionCache,
        mask: &Array2<f64>,
        dout: ArrayView2<'_, f64>,
        b: usize,
        t: usize,
    ) -> Array3<f64> {
        let h = self.hidden();
        let wh = self.w_hidden.view2().to_owned();
        let mut dxproj = Array3::<f64>::zeros((b, t, 4 * h));
        let mut dh_next = Array2::<f64>::zeros((b, h));
        let mut dc_next = Array2::<f64>::zeros((b, h));
        let mut dwh = Array2::<f64>::zeros((h, 4 * h));
        let dout = dout.into_shape_with_order((b, t, h)).unwrap();

        let order = self.step_order(t);
        for k in (0..t).rev() {
            let ti = order[k];
            let gates = cache.gates.index_axis(Axis(0), k);
            let tanh_c = cache.tanh_c.index_axis(Axis(0), k);
            let h_prev = cache.h_prev.index_axis(Axis(0), k);
            let c_prev = cache.c_prev.index_axis(Axis(0), k);

            let mut dz = Array2::<f64>::zeros((b, 4 * h));
            let mut dh_carry = Array2::<f64>::zeros((b, h));
            let mut dc_carry = Array2::<f64>::zeros((b, h));
            for bi in 0..b {
                let m = mask[[bi, ti]];
                let g = gates.row(bi);
                let mut dzr = dz.row_mut(bi);
                for j in 0..h {
                    let dh = dout[[bi, ti, j]] + dh_next[[bi, j]];
                    let dc_in = dc_next[[bi, j]];
                    if m == 0.0 {
                        dh_carry[[bi, j]] = dh;
                        dc_carry[[bi, j]] = dc_in;
                        continue;
                    }
                    let (ig, fg, cg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let tc = tanh_c[[bi, j]];
                    let d_o = dh * tc;
                    let dc = dc_in + dh * og * (1.0 - tc * tc);
                    let d_f = dc * c_prev[[bi, j]];
                    let d_i = dc * cg;
                    let d_g = dc * ig;
                    dc_carry[[bi, j]] = dc * fg;
                    dzr[j] = d_i * ig * (1.0 - ig);
                    dzr[h + j] = d_f * fg * (1.0 - fg);
                    dzr[2 * h + j] = d_g * (1.0 - cg * cg);
                    dzr[3 * h + j] = d_o * og * (1.0 - og);
                }
            }
            dwh += &h_prev.t().dot(&dz);
            dh_next = dz.dot(&wh.t()) + &dh_carry;
            dc_next = dc_carry;
            dxproj.slice_mut(s![.., ti, ..]).assign(&dz);
        }
        for (g, d) in self.w_hidden.grad.iter_mut().zip(dwh.iter()) {
            *g += d;
        }
        dxproj
    }
}

/// Two LSTM directions over the same input; output is `[fwd_h, bwd_h]` per
/// step, width `2h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

impl BiLstmLayer {
    pub fn new(prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Shape(format!("{prefix}: input and hidden sizes must be positive")));
        }
        Ok(BiLstmLayer {
            forward: LstmDirection::new(&format!("{prefix}.fwd"), input, hidden, false, rng),
            backward: LstmDirection::new(&format!("{prefix}.bwd"), input, hidden, true, rng),
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_size(&self) -> usize {
        self.forward.w_input.shape()[0]
    }

    pub fn output_size(&self) -> usize {
        2 * self.hidden()
    }

    fn check(&self, x: &Array3<f64>, mask: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let (b, t, c) = x.dim();
        if c != self.input_size() {
            return Err(Error::Shape(format!(
                "{}: expected input width {}, got {c}",
                self.forward.w_input.name,
                self.input_size()
            )));
        }
        match mask {
            Some(m) if m.dim() != (b, t) => {
                Err(Error::Shape(format!("mask {:?} does not match input {:?}", m.dim(), (b, t))))
            }
            Some(m) => Ok(m.clone()),
            None => Ok(Array2::ones((b, t))),
        }
    }

    fn run(&self, x: &Array3<f64>, mask: Array2<f64>, record: bool) -> (Array3<f64>, Option<BiLstmCache>) {
        let (b, t, c) = x.dim();
        let h = self.hidden();
        let x2 = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * t, c))
            .unwrap();
        let mut out = Array3::zeros((b, t, 2 * h));
        let pf = self.forward.project(&x2, b, t);
        let fwd = self.forward.run(&pf, &mask, out.slice_mut(s![.., .., ..h]), record);
        drop(pf);
        let pb = self.backward.project(&x2, b, t);
        let bwd = self.backward.run(&pb, &mask, out.slice_mut(s![.., .., h..]), record);
        let cache = match (fwd, bwd) {
            (Some(fwd), Some(bwd)) => Some(BiLstmCache { x2, mask, fwd, bwd }),
            _ => None,
        };
        (out, cache)
    }

    pub fn forward_pass(
        &self,
        x: &Array3<f64>,
        mask: Option<&Array2<f64>>,
    ) -> Result<(Array3<f64>, BiLstmCache)> {
        let mask = self.check(x, mask)?;
        let (out, cache) = self.run(x, mask, true);
        Ok((out, cache.expect("recorded")))
    }

    pub fn infer(&self, x: &Array3<f64>, mask: Option<&Array2<f64>>) -> Result<Array3<f64>> {
        let mask = self.check(x, mask)?;
        Ok(self.run(x, mask, false).0)
    }

    pub fn backward_pass(&mut self, cache: &BiLstmCache, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = dy.dim();
        let h = self.hidden();
        let input = self.input_size();
        let mut dx2 = Array2::<f64>::zeros((b * t, input));
        for (dir, dcache, range) in [
            (&mut self.forward, &cache.fwd, 0..h),
            (&mut self.backward, &cache.bwd, h..2 * h),
        ] {
            let dout = dy.slice(s![.., .., range]).to_owned();
            let dout2 = dout.into_shape_with_order((b * t, h)).unwrap();
            let dxproj = dir.backprop(dcache, &cache.mask, dout2.view(), b, t);
            let dxproj2 = dxproj.into_shape_with_order((b * t, 4 * h)).unwrap();
            let dwx = cache.x2.t().dot(&dxproj2);
            for (g, d) in dir.w_input.grad.iter_mut().zip(dwx.iter()) {
                *g += d;
            }
            for (g, d) in dir.bias.grad.iter_mut().zip(dxproj2.sum_axis(Axis(0))) {
                *g += d;
            }
            Zip::from(&mut dx2)
                .and(&dxproj2.dot(&dir.w_input.view2().t()))
                .for_each(|a, &d| *a += d);
        }
        dx2.into_shape_with_order((b, t, input)).unwrap()
    }

    pub fn params(&self) -> [&ParamTensor; 6] {
        [
            &self.forward.w_input,
            &self.forward.w_hidden,
            &self.forward.bias,
            &self.backward.w_input,
            &self.backward.w_hidden,
            &self.backward.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 6] {
        let (f, b) = (&mut self.forward, &mut self.backward);
        [
            &mut f.w_input,
            &mut f.w_hidden,
            &mut f.bias,
            &mut b.w_input,
            &mut b.w_hidden,
            &mut b.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(input: usize, hidden: usize) -> BiLstmLayer {
        BiLstmLayer::new("l", input, hidden, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    fn random_x(b: usize, t: usize, c: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((b, t, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut l = layer(3, 4);
        for p in l.params_mut() {
            p.values.fill(0.0);
        }
        let y = l.infer(&random_x(2, 5, 3, 1), None).unwrap();
        assert_eq!(y.dim(), (2, 5, 8));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn directions_are_causal_and_anticausal() {
        let l = layer(2, 3);
        let x = random_x(1, 8, 2, 2);
        let mut xp = x.clone();
        xp[[0, 4, 0]] += 0.7;
        let y = l.infer(&x, None).unwrap();
        let yp = l.infer(&xp, None).unwrap();
        for t in 0..8 {
            let fwd_same = (0..3).all(|j| y[[0, t, j]] == yp[[0, t, j]]);
            let bwd_same = (3..6).all(|j| y[[0, t, j]] == yp[[0, t, j]]);
            assert_eq!(fwd_same, t < 4, "forward half at t={t}");
            assert_eq!(bwd_same, t > 4, "backward half at t={t}");
        }
    }

    #[test]
    fn single_step_hand_calculation() {
        // input 1, hidden 1, one step, only the forward direction inspected.
        let mut l = layer(1, 1);
        l.forward.w_input.values = vec![0.5, -0.25, 1.0, 0.75];
        l.forward.bias.values = vec![0.1, 1.0, -0.2, 0.0];
        let x = Array3::from_elem((1, 1, 1), 2.0);
        let y = l.infer(&x, None).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * 2.0 + 0.1);
        let g = (1.0f64 * 2.0 - 0.2).tanh();
        let o = sig(0.75 * 2.0);
        // Previous cell is zero, so the forget gate drops out.
        let c = i * g;
        let h = o * c.tanh();
        assert!((y[[0, 0, 0]] - h).abs() < 1e-15);
        assert!((h - 0.4994536).abs() < 1e-6);
    }

    #[test]
    fn padded_steps_hold_state() {
        let l = layer(2, 3);
        let x = random_x(1, 6, 2, 3);
        let mut mask = Array2::ones((1, 6));
        mask[[0, 4]] = 0.0;
        mask[[0, 5]] = 0.0;
        let y = l.infer(&x, Some(&mask)).unwrap();
        let short = l.infer(&x.slice(s![.., ..4, ..]).to_owned(), None).unwrap();
        for j in 0..6 {
            for t in 0..4 {
                assert!((y[[0, t, j]] - short[[0, t, j]]).abs() < 1e-15);
            }
        }
        for j in 0..3 {
            assert_eq!(y[[0, 5, j]], y[[0, 3, j]]);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let l = layer(2, 3);
        assert_eq!(&l.forward.bias.values[3..6], &[1.0, 1.0, 1.0]);
        assert_eq!(&l.backward.bias.values[..3], &[0.0, 0.0, 0.0]);
    }
}
