//! Small from-scratch convolutional classifier.
//!
//! `side x side` input -> conv 3x3 (8) -> ReLU -> max-pool 2x2 -> conv 3x3 (16)
//! -> ReLU -> max-pool 2x2 -> fully connected -> 2 logits. Convolutions are
//! valid-mode; pooling floors odd sizes. All parameters live in one flat
//! buffer so SGD, hashing and serialization treat them uniformly.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 2;
const K: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_side: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
}

/// Parameter tensors, in buffer order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamBlock {
    Conv1Weight,
    Conv1Bias,
    Conv2Weight,
    Conv2Bias,
    FcWeight,
    FcBias,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 6] = [
        Self::Conv1Weight,
        Self::Conv1Bias,
        Self::Conv2Weight,
        Self::Conv2Bias,
        Self::FcWeight,
        Self::FcBias,
    ];
}

impl Architecture {
    pub const MIN_SIDE: usize = 10;

    pub fn new(input_side: usize) -> Result<Self> {
        let arch = Architecture {
            input_side,
            conv1_channels: 8,
            conv2_channels: 16,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side < Self::MIN_SIDE {
            return Err(Error::param(
                "input_side",
                alloc::format!("must be at least {}", Self::MIN_SIDE),
            ));
        }
        if self.conv1_channels == 0 || self.conv2_channels == 0 {
            return Err(Error::param("channels", "must be positive"));
        }
        Ok(())
    }

    fn conv1_side(&self) -> usize {
        self.input_side - (K - 1)
    }

    fn pool1_side(&self) -> usize {
        self.conv1_side() / 2
    }

    fn conv2_side(&self) -> usize {
        self.pool1_side() - (K - 1)
    }

    fn pool2_side(&self) -> usize {
        self.conv2_side() / 2
    }

    pub fn features(&self) -> usize {
        self.conv2_channels * self.pool2_side() * self.pool2_side()
    }

    fn block_len(&self, b: ParamBlock) -> usize {
        match b {
            ParamBlock::Conv1Weight => self.conv1_channels * K * K,
            ParamBlock::Conv1Bias => self.conv1_channels,
            ParamBlock::Conv2Weight => self.conv2_channels * self.conv1_channels * K * K,
            ParamBlock::Conv2Bias => self.conv2_channels,
            ParamBlock::FcWeight => NUM_CLASSES * self.features(),
            ParamBlock::FcBias => NUM_CLASSES,
        }
    }

    pub fn block(&self, b: ParamBlock) -> Range<usize> {
        let mut start = 0;
        for other in ParamBlock::ALL {
            let len = self.block_len(other);
            if other == b {
                return start..start + len;
            }
            start += len;
        }
        unreachable!()
    }

    pub fn param_count(&self) -> usize {
        ParamBlock::ALL.iter().map(|&b| self.block_len(b)).sum()
    }

    /// Uniform Glorot initialization for weights, zero biases.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let fans = [
            (ParamBlock::Conv1Weight, K * K, self.conv1_channels * K * K),
            (
                ParamBlock::Conv2Weight,
                self.conv1_channels * K * K,
                self.conv2_channels * K * K,
            ),
            (ParamBlock::FcWeight, self.features(), NUM_CLASSES),
        ];
        for (block, fan_in, fan_out) in fans {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in &mut params[self.block(block)] {
                *p = rng.random_range(-limit..=limit);
            }
        }
        params
    }

    /// Logits for one normalized `side x side` input.
    pub fn logits(&self, params: &[f64], input: &[f64]) -> [f64; NUM_CLASSES] {
        self.forward(params, input).logits
    }

    /// Cross-entropy loss of one sample and its gradient w.r.t. every parameter.
    pub fn loss_and_gradient(&self, params: &[f64], input: &[f64], label: usize) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let (loss, _) = self.accumulate_gradient(params, input, label, &mut grad);
        (loss, grad)
    }

    /// Cross-entropy loss of one sample; only used by gradient checks.
    pub fn loss(&self, params: &[f64], input: &[f64], label: usize) -> f64 {
        cross_entropy(&self.logits(params, input), label).0
    }

    pub(crate) fn accumulate_gradient(
        &self,
        params: &[f64],
        input: &[f64],
        label: usize,
        grad: &mut [f64],
    ) -> (f64, [f64; NUM_CLASSES]) {
        let cache = self.forward(params, input);
        let (loss, dlogits) = cross_entropy(&cache.logits, label);
        self.backward(params, input, &cache, &dlogits, grad);
        (loss, cache.logits)
    }

    fn forward(&self, params: &[f64], input: &[f64]) -> Cache {
        debug_assert_eq!(input.len(), self.input_side * self.input_side);
        debug_assert_eq!(params.len(), self.param_count());
        let (c1, c2) = (self.conv1_channels, self.conv2_channels);
        let (s0, s1, q1, s2, q2) = (
            self.input_side,
            self.conv1_side(),
            self.pool1_side(),
            self.conv2_side(),
            self.pool2_side(),
        );

        let mut z1 = vec![0.0; c1 * s1 * s1];
        conv_forward(
            input,
            1,
            s0,
            &params[self.block(ParamBlock::Conv1Weight)],
            &params[self.block(ParamBlock::Conv1Bias)],
            c1,
            &mut z1,
        );
        let (p1, arg1) = relu_pool(&z1, c1, s1, q1);

        let mut z2 = vec![0.0; c2 * s2 * s2];
        conv_forward(
            &p1,
            c1,
            q1,
            &params[self.block(ParamBlock::Conv2Weight)],
            &params[self.block(ParamBlock::Conv2Bias)],
            c2,
            &mut z2,
        );
        let (p2, arg2) = relu_pool(&z2, c2, s2, q2);

        let fc_w = &params[self.block(ParamBlock::FcWeight)];
        let fc_b = &params[self.block(ParamBlock::FcBias)];
        let f = self.features();
        let mut logits = [0.0; NUM_CLASSES];
        for (k, l) in logits.iter_mut().enumerate() {
            *l = fc_b[k] + dot(&fc_w[k * f..(k + 1) * f], &p2);
        }
        Cache {
            z1,
            p1,
            arg1,
            z2,
            p2,
            arg2,
            logits,
        }
    }

    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        cache: &Cache,
        dlogits: &[f64; NUM_CLASSES],
        grad: &mut [f64],
    ) {
        let (c1, c2) = (self.conv1_channels, self.conv2_channels);
        let (s0, s1, q1, s2) = (
            self.input_side,
            self.conv1_side(),
            self.pool1_side(),
            self.conv2_side(),
        );
        let f = self.features();

        // Fully connected.
        let fc_w = &params[self.block(ParamBlock::FcWeight)];
        let mut dp2 = vec![0.0; f];
        {
            let gw = &mut grad[self.block(ParamBlock::FcWeight)];
            for k in 0..NUM_CLASSES {
                axpy(dlogits[k], &cache.p2, &mut gw[k * f..(k + 1) * f]);
                axpy(dlogits[k], &fc_w[k * f..(k + 1) * f], &mut dp2);
            }
        }
        {
            let gb = &mut grad[self.block(ParamBlock::FcBias)];
            for k in 0..NUM_CLASSES {
                gb[k] += dlogits[k];
            }
        }

        // Second pool + ReLU back to conv2 pre-activations.
        let dz2 = unpool_relu(&dp2, &cache.arg2, &cache.z2);
        let mut dp1 = vec![0.0; c1 * q1 * q1];
        conv_backward(
            &cache.p1,
            c1,
            q1,
            &params[self.block(ParamBlock::Conv2Weight)],
            c2,
            s2,
            &dz2,
            grad,
            self.block(ParamBlock::Conv2Weight),
            self.block(ParamBlock::Conv2Bias),
            Some(&mut dp1),
        );

        let dz1 = unpool_relu(&dp1, &cache.arg1, &cache.z1);
        conv_backward(
            input,
            1,
            s0,
            &params[self.block(ParamBlock::Conv1Weight)],
            c1,
            s1,
            &dz1,
            grad,
            self.block(ParamBlock::Conv1Weight),
            self.block(ParamBlock::Conv1Bias),
            None,
        );
    }
}

struct Cache {
    z1: Vec<f64>,
    p1: Vec<f64>,
    arg1: Vec<usize>,
    z2: Vec<f64>,
    p2: Vec<f64>,
    arg2: Vec<usize>,
    logits: [f64; NUM_CLASSES],
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable two-class softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = logits[0].max(logits[1]);
    let e0 = libm::exp(logits[0] - m);
    let e1 = libm::exp(logits[1] - m);
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

fn cross_entropy(logits: &[f64; NUM_CLASSES], label: usize) -> (f64, [f64; NUM_CLASSES]) {
    // log-sum-exp keeps the loss finite for saturated logits.
    let m = logits[0].max(logits[1]);
    let lse = m + libm::log(libm::exp(logits[0] - m) + libm::exp(logits[1] - m));
    let p = softmax(logits);
    let mut d = p;
    d[label] -= 1.0;
    (lse - logits[label], d)
}

/// Valid 3x3 convolution: `input` is `cin x side x side`, `out` is
/// `cout x (side-2) x (side-2)`.
fn conv_forward(
    input: &[f64],
    cin: usize,
    side: usize,
    weights: &[f64],
    bias: &[f64],
    cout: usize,
    out: &mut [f64],
) {
    let os = side - (K - 1);
    for o in 0..cout {
        let plane = &mut out[o * os * os..(o + 1) * os * os];
        plane.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &input[i * side * side..(i + 1) * side * side];
            for ky in 0..K {
                for kx in 0..K {
                    let w = weights[((o * cin + i) * K + ky) * K + kx];
                    for y in 0..os {
                        let s = &src[(y + ky) * side + kx..(y + ky) * side + kx + os];
                        axpy(w, s, &mut plane[y * os..(y + 1) * os]);
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    cin: usize,
    side: usize,
    weights: &[f64],
    cout: usize,
    os: usize,
    dz: &[f64],
    grad: &mut [f64],
    weight_range: Range<usize>,
    bias_range: Range<usize>,
    mut dinput: Option<&mut [f64]>,
) {
    for o in 0..cout {
        let dplane = &dz[o * os * os..(o + 1) * os * os];
        grad[bias_range.start + o] += dplane.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * side * side..(i + 1) * side * side];
            for ky in 0..K {
                for kx in 0..K {
                    let widx = ((o * cin + i) * K + ky) * K + kx;
                    let mut g = 0.0;
                    for y in 0..os {
                        let s = &src[(y + ky) * side + kx..(y + ky) * side + kx + os];
                        g += dot(&dplane[y * os..(y + 1) * os], s);
                    }
                    grad[weight_range.start + widx] += g;
                    if let Some(din) = dinput.as_deref_mut() {
                        let w = weights[widx];
                        let dplane_in = &mut din[i * side * side..(i + 1) * side * side];
                        for y in 0..os {
                            let start = (y + ky) * side + kx;
                            axpy(w, &dplane[y * os..(y + 1) * os], &mut dplane_in[start..start + os]);
                        }
                    }
                }
            }
        }
    }
}

/// ReLU followed by 2x2 max-pooling; returns pooled values and, per pooled
/// cell, the flat index of the winning pre-activation (first maximum wins).
fn relu_pool(z: &[f64], channels: usize, side: usize, pooled: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = vec![0.0; channels * pooled * pooled];
    let mut arg = vec![0; channels * pooled * pooled];
    for c in 0..channels {
        let base = c * side * side;
        for py in 0..pooled {
            for px in 0..pooled {
                let mut best_idx = base + 2 * py * side + 2 * px;
                let mut best = z[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * py + dy) * side + 2 * px + dx;
                    if z[idx] > best {
                        best = z[idx];
                        best_idx = idx;
                    }
                }
                let o = (c * pooled + py) * pooled + px;
                out[o] = best.max(0.0);
                arg[o] = best_idx;
            }
        }
    }
    (out, arg)
}

fn unpool_relu(dpooled: &[f64], arg: &[usize], z: &[f64]) -> Vec<f64> {
    let mut dz = vec![0.0; z.len()];
    for (&d, &idx) in dpooled.iter().zip(arg) {
        if z[idx] > 0.0 {
            dz[idx] += d;
        }
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_covers_buffer() {
        let a = Architecture::new(64).unwrap();
        assert_eq!(a.features(), 16 * 14 * 14);
        let mut end = 0;
        for b in ParamBlock::ALL {
            let r = a.block(b);
            assert_eq!(r.start, end);
            end = r.end;
        }
        assert_eq!(end, a.param_count());
        assert!(Architecture::new(9).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        for l in [[0.0, 0.0], [800.0, -800.0], [1.5, 2.5]] {
            let p = softmax(&l);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_difference_spot_check() {
        let a = Architecture::new(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = a.init_params(&mut rng);
        let input: Vec<f64> = (0..144).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = a.loss_and_gradient(&params, &input, 1);
        let idx = a.block(ParamBlock::FcBias).start;
        let h = 1e-5;
        let mut p = params.clone();
        p[idx] += h;
        let up = a.loss(&p, &input, 1);
        p[idx] -= 2.0 * h;
        let down = a.loss(&p, &input, 1);
        assert!(((up - down) / (2.0 * h) - g[idx]).abs() < 1e-7);
    }
}
