//! Layer kernels. Activations are `(batch, time, channels)`; dense layers see
//! `(batch, 1, units)` and treat every `(batch, time)` pair as a row.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor3;

/// Pre-activations are clamped to this magnitude so probabilities stay strictly inside (0, 1).
pub const SIGMOID_INPUT_LIMIT: f64 = 36.0;

fn glorot_uniform(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// Same-padded 1D convolution; weights are laid out `(kernel, in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: glorot_uniform(
                rng,
                kernel * in_channels * out_channels,
                kernel * in_channels,
                kernel * out_channels,
            ),
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn source_step(&self, t_out: usize, k: usize, time: usize) -> Option<usize> {
        let pad = self.kernel / 2;
        (t_out + k).checked_sub(pad).filter(|&s| s < time)
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let (batch, time, ci) = x.dims();
        let co = self.out_channels;
        let mut y = Tensor3::zeros(batch, time, co);
        let xd = x.data();
        let yd = y.data_mut();
        for s in 0..batch {
            let xs = &xd[s * time * ci..(s + 1) * time * ci];
            let ys = &mut yd[s * time * co..(s + 1) * time * co];
            for (t, out) in ys.chunks_exact_mut(co).enumerate() {
                out.copy_from_slice(&self.bias);
                for k in 0..self.kernel {
                    let Some(src) = self.source_step(t, k, time) else { continue };
                    let xrow = &xs[src * ci..(src + 1) * ci];
                    let wk = &self.weight[k * ci * co..(k + 1) * ci * co];
                    for (&xv, wrow) in xrow.iter().zip(wk.chunks_exact(co)) {
                        for (o, &w) in out.iter_mut().zip(wrow) {
                            *o += xv * w;
                        }
                    }
                }
            }
        }
        y
    }

    /// Returns `(dx, dweight, dbias)`; `dx` is left empty when `need_dx` is false.
    pub fn backward(&self, x: &Tensor3, dy: &Tensor3, need_dx: bool) -> (Tensor3, Vec<f64>, Vec<f64>) {
        let (batch, time, ci) = x.dims();
        let co = self.out_channels;
        let mut dx = if need_dx { Tensor3::zeros(batch, time, ci) } else { Tensor3::zeros(0, time, ci) };
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; co];
        let xd = x.data();
        let gd = dy.data();
        for s in 0..batch {
            let xs = &xd[s * time * ci..(s + 1) * time * ci];
            let gs = &gd[s * time * co..(s + 1) * time * co];
            for (t, g) in gs.chunks_exact(co).enumerate() {
                for (b, &gv) in db.iter_mut().zip(g) {
                    *b += gv;
                }
                for k in 0..self.kernel {
                    let Some(src) = self.source_step(t, k, time) else { continue };
                    let xrow = &xs[src * ci..(src + 1) * ci];
                    let wk = &self.weight[k * ci * co..(k + 1) * ci * co];
                    let dwk = &mut dw[k * ci * co..(k + 1) * ci * co];
                    for (c, &xv) in xrow.iter().enumerate() {
                        let dwrow = &mut dwk[c * co..(c + 1) * co];
                        for (d, &gv) in dwrow.iter_mut().zip(g) {
                            *d += xv * gv;
                        }
                    }
                    if need_dx {
                        let dxrow = &mut dx.sample_mut(s)[src * ci..(src + 1) * ci];
                        for (dxv, wrow) in dxrow.iter_mut().zip(wk.chunks_exact(co)) {
                            let mut acc = 0.0;
                            for (&w, &gv) in wrow.iter().zip(g) {
                                acc += w * gv;
                            }
                            *dxv += acc;
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

/// Fully connected layer over the channel axis; weights are `(in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            in_features,
            out_features,
            weight: glorot_uniform(rng, in_features * out_features, in_features, out_features),
            bias: vec![0.0; out_features],
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let (batch, time, _) = x.dims();
        let (ni, no) = (self.in_features, self.out_features);
        let mut y = Tensor3::zeros(batch, time, no);
        for (xrow, out) in x.data().chunks_exact(ni).zip(y.data_mut().chunks_exact_mut(no)) {
            out.copy_from_slice(&self.bias);
            for (&xv, wrow) in xrow.iter().zip(self.weight.chunks_exact(no)) {
                for (o, &w) in out.iter_mut().zip(wrow) {
                    *o += xv * w;
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &Tensor3, dy: &Tensor3) -> (Tensor3, Vec<f64>, Vec<f64>) {
        let (batch, time, _) = x.dims();
        let (ni, no) = (self.in_features, self.out_features);
        let mut dx = Tensor3::zeros(batch, time, ni);
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; no];
        for ((xrow, g), dxrow) in x
            .data()
            .chunks_exact(ni)
            .zip(dy.data().chunks_exact(no))
            .zip(dx.data_mut().chunks_exact_mut(ni))
        {
            for (b, &gv) in db.iter_mut().zip(g) {
                *b += gv;
            }
            for (i, &xv) in xrow.iter().enumerate() {
                let wrow = &self.weight[i * no..(i + 1) * no];
                let dwrow = &mut dw[i * no..(i + 1) * no];
                let mut acc = 0.0;
                for ((d, &w), &gv) in dwrow.iter_mut().zip(wrow).zip(g) {
                    *d += xv * gv;
                    acc += w * gv;
                }
                dxrow[i] = acc;
            }
        }
        (dx, dw, db)
    }
}

/// Batch normalization over every `(batch, time)` row of each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub x_hat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            epsilon,
        }
    }

    /// Normalizes with batch statistics and folds them into the running averages.
    pub fn forward_train(&mut self, x: &Tensor3) -> (Tensor3, BatchNormCache) {
        let c = self.channels;
        let rows = (x.data().len() / c) as f64;
        let mut mean = vec![0.0; c];
        for row in x.data().chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        let mut var = vec![0.0; c];
        for row in x.data().chunks_exact(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= rows);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.epsilon)).collect();

        let (b, t, _) = x.dims();
        let mut x_hat = vec![0.0; x.data().len()];
        let mut y = Tensor3::zeros(b, t, c);
        for ((row, hrow), yrow) in x
            .data()
            .chunks_exact(c)
            .zip(x_hat.chunks_exact_mut(c))
            .zip(y.data_mut().chunks_exact_mut(c))
        {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                hrow[j] = h;
                yrow[j] = self.gamma[j] * h + self.beta[j];
            }
        }

        let m = self.momentum;
        for j in 0..c {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * var[j];
        }
        (y, BatchNormCache { x_hat, inv_std })
    }

    pub fn forward_infer(&self, x: &Tensor3) -> Tensor3 {
        let c = self.channels;
        let scale: Vec<f64> = (0..c)
            .map(|j| self.gamma[j] / libm::sqrt(self.running_var[j] + self.epsilon))
            .collect();
        let mut y = x.clone();
        for row in y.data_mut().chunks_exact_mut(c) {
            for j in 0..c {
                row[j] = (row[j] - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        y
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BatchNormCache, dy: &Tensor3) -> (Tensor3, Vec<f64>, Vec<f64>) {
        let c = self.channels;
        let rows = (dy.data().len() / c) as f64;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (g, h) in dy.data().chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
            for j in 0..c {
                dgamma[j] += g[j] * h[j];
                dbeta[j] += g[j];
            }
        }
        let (b, t, _) = dy.dims();
        let mut dx = Tensor3::zeros(b, t, c);
        let coef: Vec<f64> = (0..c).map(|j| self.gamma[j] * cache.inv_std[j] / rows).collect();
        for ((g, h), out) in dy
            .data()
            .chunks_exact(c)
            .zip(cache.x_hat.chunks_exact(c))
            .zip(dx.data_mut().chunks_exact_mut(c))
        {
            for j in 0..c {
                out[j] = coef[j] * (rows * g[j] - dbeta[j] - h[j] * dgamma[j]);
            }
        }
        (dx, dgamma, dbeta)
    }
}

/// Non-overlapping max pooling (stride = size, trailing remainder dropped).
/// Returns the output and, per output element, the flat index of its maximum.
pub fn max_pool_forward(x: &Tensor3, size: usize) -> (Tensor3, Vec<usize>) {
    let (batch, time, c) = x.dims();
    let out_t = time / size;
    let mut y = Tensor3::zeros(batch, out_t, c);
    let mut argmax = vec![0usize; batch * out_t * c];
    let xd = x.data();
    for s in 0..batch {
        for j in 0..out_t {
            for ch in 0..c {
                let mut best_idx = (s * time + j * size) * c + ch;
                let mut best = xd[best_idx];
                for q in 1..size {
                    let idx = (s * time + j * size + q) * c + ch;
                    if xd[idx] > best {
                        best = xd[idx];
                        best_idx = idx;
                    }
                }
                let o = (s * out_t + j) * c + ch;
                y.data_mut()[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (y, argmax)
}

pub fn max_pool_backward(input_dims: (usize, usize, usize), argmax: &[usize], dy: &Tensor3) -> Tensor3 {
    let (b, t, c) = input_dims;
    let mut dx = Tensor3::zeros(b, t, c);
    let dxd = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        dxd[idx] += g;
    }
    dx
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)`.
/// Returns the output and the per-element multiplier.
pub fn dropout_forward(x: &Tensor3, rate: f64, rng: &mut ChaCha8Rng) -> (Tensor3, Vec<f64>) {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mask: Vec<f64> = (0..x.data().len())
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect();
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    (y, mask)
}

pub fn apply_mask(dy: &Tensor3, mask: &[f64]) -> Tensor3 {
    let mut dx = dy.clone();
    for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    dx
}

/// Mean over time: `(b, t, c)` → `(b, 1, c)`.
pub fn global_avg_pool_forward(x: &Tensor3) -> Tensor3 {
    let (batch, time, c) = x.dims();
    let mut y = Tensor3::zeros(batch, 1, c);
    for s in 0..batch {
        let out = y.sample_mut(s);
        for row in x.sample(s).chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= time as f64);
    }
    y
}

pub fn global_avg_pool_backward(time: usize, dy: &Tensor3) -> Tensor3 {
    let (batch, _, c) = dy.dims();
    let mut dx = Tensor3::zeros(batch, time, c);
    for s in 0..batch {
        let g = dy.sample(s);
        for row in dx.sample_mut(s).chunks_exact_mut(c) {
            for (d, &gv) in row.iter_mut().zip(g) {
                *d = gv / time as f64;
            }
        }
    }
    dx
}

pub fn relu_forward(x: &Tensor3) -> Tensor3 {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// `output` is the forward result; the gradient passes where it is positive.
pub fn relu_backward(output: &Tensor3, dy: &Tensor3) -> Tensor3 {
    let mut dx = dy.clone();
    for (d, &o) in dx.data_mut().iter_mut().zip(output.data()) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_INPUT_LIMIT, SIGMOID_INPUT_LIMIT);
    1.0 / (1.0 + libm::exp(-z))
}

pub fn sigmoid_forward(x: &Tensor3) -> Tensor3 {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
    y
}

pub fn sigmoid_backward(output: &Tensor3, dy: &Tensor3) -> Tensor3 {
    let mut dx = dy.clone();
    for (d, &p) in dx.data_mut().iter_mut().zip(output.data()) {
        *d *= p * (1.0 - p);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn random_tensor(rng: &mut ChaCha8Rng, b: usize, t: usize, c: usize) -> Tensor3 {
        let data = (0..b * t * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor3::from_vec(b, t, c, data).unwrap()
    }

    /// Direct transcription of the same-padded convolution sum.
    fn naive_conv(conv: &Conv1d, x: &Tensor3) -> Tensor3 {
        let (b, t, ci) = x.dims();
        let co = conv.out_channels;
        let pad = (conv.kernel / 2) as isize;
        let mut y = Tensor3::zeros(b, t, co);
        for s in 0..b {
            for ti in 0..t {
                for o in 0..co {
                    let mut acc = conv.bias[o];
                    for k in 0..conv.kernel {
                        let src = ti as isize + k as isize - pad;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        for c in 0..ci {
                            acc += x.at(s, src as usize, c) * conv.weight[(k * ci + c) * co + o];
                        }
                    }
                    y.data_mut()[(s * t + ti) * co + o] = acc;
                }
            }
        }
        y
    }

    proptest! {
        #[test]
        fn conv_matches_naive_reference(
            seed in any::<u64>(), b in 1usize..4, t in 1usize..12, ci in 1usize..5,
            co in 1usize..6, half in 0usize..3
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut conv = Conv1d::new(ci, co, 2 * half + 1, &mut rng);
            conv.bias.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let x = random_tensor(&mut rng, b, t, ci);
            let fast = conv.forward(&x);
            let slow = naive_conv(&conv, &x);
            for (a, e) in fast.data().iter().zip(slow.data()) {
                prop_assert!((a - e).abs() <= 1e-12);
            }
        }

        #[test]
        fn global_avg_pool_is_time_mean(seed in any::<u64>(), b in 1usize..4, t in 1usize..20, c in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, b, t, c);
            let y = global_avg_pool_forward(&x);
            for s in 0..b {
                for ch in 0..c {
                    let mean = (0..t).map(|ti| x.at(s, ti, ch)).sum::<f64>() / t as f64;
                    prop_assert!((y.at(s, 0, ch) - mean).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn max_pool_backward_routes_each_gradient_once(
            seed in any::<u64>(), b in 1usize..4, t in 2usize..20, c in 1usize..5, size in 1usize..4
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_tensor(&mut rng, b, t, c);
            let (y, argmax) = max_pool_forward(&x, size);
            let dy = random_tensor(&mut rng, y.batch(), y.time(), y.channels());
            let dx = max_pool_backward(x.dims(), &argmax, &dy);
            let sum_in: f64 = dx.data().iter().sum();
            let sum_out: f64 = dy.data().iter().sum();
            prop_assert!((sum_in - sum_out).abs() <= 1e-12);
            // one routed position per window
            let nonzero = dx.data().iter().filter(|v| **v != 0.0).count();
            prop_assert_eq!(nonzero, y.data().len());
            for (o, &idx) in argmax.iter().enumerate() {
                prop_assert_eq!(x.data()[idx], y.data()[o]);
            }
        }

        #[test]
        fn batch_norm_standardizes_per_channel(seed in any::<u64>(), b in 8usize..16, t in 1usize..6, c in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // wide-amplitude inputs so the variance epsilon is negligible
            let data = (0..b * t * c).map(|_| rng.random_range(-500.0..500.0)).collect();
            let x = Tensor3::from_vec(b, t, c, data).unwrap();
            let mut bn = BatchNorm::new(c, 0.99, 1e-3);
            let (_, cache) = bn.forward_train(&x);
            let rows = (b * t) as f64;
            for ch in 0..c {
                let vals: Vec<f64> = cache.x_hat.iter().skip(ch).step_by(c).copied().collect();
                let mean = vals.iter().sum::<f64>() / rows;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows;
                prop_assert!(mean.abs() <= 1e-6);
                prop_assert!((var - 1.0).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn batch_norm_variance_matches_epsilon_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, 8, 3, 2);
        let mut bn = BatchNorm::new(2, 0.99, 1e-3);
        let (_, cache) = bn.forward_train(&x);
        for ch in 0..2 {
            let raw: Vec<f64> = x.data().iter().skip(ch).step_by(2).copied().collect();
            let n = raw.len() as f64;
            let m = raw.iter().sum::<f64>() / n;
            let v = raw.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n;
            let hat: Vec<f64> = cache.x_hat.iter().skip(ch).step_by(2).copied().collect();
            let hv = hat.iter().map(|h| h * h).sum::<f64>() / n;
            assert!((hv - v / (v + 1e-3)).abs() < 1e-12);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor3::from_vec(2, 1, 1, vec![1.0, 3.0]).unwrap();
        let mut bn = BatchNorm::new(1, 0.99, 1e-3);
        bn.forward_train(&x);
        assert!((bn.running_mean[0] - 0.02).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.99 + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor3::from_vec(1, 1000, 1, vec![1.0; 1000]).unwrap();
        let (y, mask) = dropout_forward(&x, 0.2, &mut rng);
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.25).abs() < 1e-15));
        let mean = y.data().iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.1);
    }

    #[test]
    fn sigmoid_stays_inside_unit_interval() {
        for z in [-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6] {
            let p = sigmoid(z);
            assert!(p > 0.0 && p < 1.0, "{z} -> {p}");
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn max_pool_halves_time() {
        let x = Tensor3::zeros(2, 1000, 3);
        let (y, _) = max_pool_forward(&x, 2);
        assert_eq!(y.dims(), (2, 500, 3));
        let (y, _) = max_pool_forward(&Tensor3::zeros(1, 125, 1), 2);
        assert_eq!(y.time(), 62);
    }
}
