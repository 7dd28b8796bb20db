//! The structured single-channel convolutional network: `E` parallel chains
//! of `L` full-convolution layers with shared filter masks, structured
//! biases on layers `1..L-1`, and a linear readout `Σ_e c_e' h_e^L`.
//!
//! Layer `l` has size `d_l = d + S·l`; each chain applies
//! `h^l = σ(W^l h^{l-1} - b^l)` with `W^l` the Toeplitz matrix of an
//! `(S+1)`-tap mask. The network realizes a member of the function space
//! spanned by linear readouts over the final layers of the parallel chains.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{conv_full_acc, conv_full_adjoint_acc, conv_full_mask_grad_acc};
use super::Network;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Structured parallel-chain CNN with a flat parameter vector.
#[derive(Debug, Clone)]
pub struct TheoreticalCnn {
    input_len: usize,
    span: usize,
    depth: usize,
    channels: usize,
    params: Vec<f64>,
    // per-channel block offsets
    sbias_off: usize,
    fbias_off: usize,
    readout_off: usize,
    ch_stride: usize,
}

/// Activation storage reused across forward/backward passes.
#[derive(Debug)]
pub struct TheoreticalScratch {
    /// `acts[e * (depth+1) + l]` holds `h_e^l` (length `d + S·l`).
    pub(crate) acts: Vec<Vec<f64>>,
    gz: Vec<f64>,
    gh: Vec<f64>,
}

impl TheoreticalCnn {
    /// He-style initialized network; biases start at zero.
    pub fn init(
        input_len: usize,
        span: usize,
        depth: usize,
        channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_len, span, depth, channels)?;
        let mask_scale = (6.0 / (span as f64 + 1.0)).sqrt();
        let out_scale = (6.0 / net.layer_len(depth) as f64).sqrt();
        for e in 0..channels {
            let base = e * net.ch_stride;
            for k in 0..depth * (span + 1) {
                net.params[base + k] = rng.uniform(-mask_scale, mask_scale);
            }
            for k in 0..net.layer_len(depth) {
                net.params[base + net.readout_off + k] = rng.uniform(-out_scale, out_scale);
            }
        }
        Ok(net)
    }

    /// All-zero network (useful for hand-built parameter tests).
    pub fn zeros(input_len: usize, span: usize, depth: usize, channels: usize) -> Result<Self> {
        if span < 2 || span > input_len {
            return Err(Error::Config(format!(
                "filter span must satisfy 2 <= s <= d (s={span}, d={input_len})"
            )));
        }
        if depth == 0 || channels == 0 {
            return Err(Error::Config("depth and channels must be >= 1".into()));
        }
        let d_last = input_len + span * depth;
        let sbias_off = depth * (span + 1);
        let fbias_off = sbias_off + (depth - 1) * (2 * span + 1);
        let readout_off = fbias_off + d_last;
        let ch_stride = readout_off + d_last;
        Ok(Self {
            input_len,
            span,
            depth,
            channels,
            params: vec![0.0; channels * ch_stride],
            sbias_off,
            fbias_off,
            readout_off,
            ch_stride,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Size of layer `l` (`d + S·l`), with layer 0 the input.
    pub fn layer_len(&self, l: usize) -> usize {
        self.input_len + self.span * l
    }

    fn mask(&self, e: usize, l: usize) -> &[f64] {
        // layer index l in 1..=depth
        let base = e * self.ch_stride + (l - 1) * (self.span + 1);
        &self.params[base..base + self.span + 1]
    }

    /// Subtracts layer `l`'s bias from `z` in place.
    fn apply_bias(&self, e: usize, l: usize, z: &mut [f64]) {
        let s = self.span;
        let dl = z.len();
        if l == self.depth {
            let base = e * self.ch_stride + self.fbias_off;
            for (zi, bi) in z.iter_mut().zip(&self.params[base..base + dl]) {
                *zi -= bi;
            }
        } else {
            let base = e * self.ch_stride + self.sbias_off + (l - 1) * (2 * s + 1);
            let head = &self.params[base..base + s];
            let mid = self.params[base + s];
            let tail = &self.params[base + s + 1..base + 2 * s + 1];
            for i in 0..s {
                z[i] -= head[i];
            }
            for zi in z.iter_mut().take(dl - s).skip(s) {
                *zi -= mid;
            }
            for i in 0..s {
                z[dl - s + i] -= tail[i];
            }
        }
    }

    fn bias_grad(&self, e: usize, l: usize, gz: &[f64], grad: &mut [f64]) {
        let s = self.span;
        let dl = gz.len();
        // z = Wh - b, so dL/db = -gz
        if l == self.depth {
            let base = e * self.ch_stride + self.fbias_off;
            for (g, &gzi) in grad[base..base + dl].iter_mut().zip(gz) {
                *g -= gzi;
            }
        } else {
            let base = e * self.ch_stride + self.sbias_off + (l - 1) * (2 * s + 1);
            for i in 0..s {
                grad[base + i] -= gz[i];
            }
            let mid_sum: f64 = gz[s..dl - s].iter().sum();
            grad[base + s] -= mid_sum;
            for i in 0..s {
                grad[base + s + 1 + i] -= gz[dl - s + i];
            }
        }
    }

    /// Network output for one input vector (allocates its own scratch).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_len {
            return Err(Error::Shape(format!(
                "input length {} does not match network input length {}",
                x.len(),
                self.input_len
            )));
        }
        let mut scratch = self.new_scratch();
        Ok(self.forward_cached(x, &mut scratch))
    }
}

impl Network for TheoreticalCnn {
    type Scratch = TheoreticalScratch;

    fn new_scratch(&self) -> TheoreticalScratch {
        let mut acts = Vec::with_capacity(self.channels * (self.depth + 1));
        for _ in 0..self.channels {
            for l in 0..=self.depth {
                acts.push(vec![0.0; self.layer_len(l)]);
            }
        }
        let d_last = self.layer_len(self.depth);
        TheoreticalScratch { acts, gz: vec![0.0; d_last], gh: vec![0.0; d_last] }
    }

    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_cached(&self, x: &[f64], s: &mut TheoreticalScratch) -> f64 {
        debug_assert_eq!(x.len(), self.input_len);
        let mut out = 0.0;
        for e in 0..self.channels {
            let row = e * (self.depth + 1);
            s.acts[row].copy_from_slice(x);
            for l in 1..=self.depth {
                let (prev, cur) = split_pair(&mut s.acts, row + l - 1, row + l);
                cur.fill(0.0);
                conv_full_acc(self.mask(e, l), prev, cur);
                self.apply_bias(e, l, cur);
                for c in cur.iter_mut() {
                    *c = c.max(0.0);
                }
                debug_assert_eq!(cur.len(), self.layer_len(l));
            }
            let base = e * self.ch_stride + self.readout_off;
            let h_last = &s.acts[row + self.depth];
            let c = &self.params[base..base + h_last.len()];
            out += dot(c, h_last);
        }
        out
    }

    fn backward(&self, _x: &[f64], s: &mut TheoreticalScratch, upstream: f64, grad: &mut [f64]) {
        for e in 0..self.channels {
            let row = e * (self.depth + 1);
            let d_last = self.layer_len(self.depth);
            // readout gradient and initial dL/dh^L
            {
                let h_last = &s.acts[row + self.depth];
                let base = e * self.ch_stride + self.readout_off;
                for i in 0..d_last {
                    grad[base + i] += upstream * h_last[i];
                }
                s.gh[..d_last].fill(0.0);
                for i in 0..d_last {
                    s.gh[i] = upstream * self.params[base + i];
                }
            }
            for l in (1..=self.depth).rev() {
                let dl = self.layer_len(l);
                let m_in = self.layer_len(l - 1);
                // ReLU gate: h > 0 passes gradient, else blocks
                {
                    let h_l = &s.acts[row + l];
                    for i in 0..dl {
                        s.gz[i] = if h_l[i] > 0.0 { s.gh[i] } else { 0.0 };
                    }
                }
                self.bias_grad(e, l, &s.gz[..dl], grad);
                let mask_base = e * self.ch_stride + (l - 1) * (self.span + 1);
                conv_full_mask_grad_acc(
                    &s.acts[row + l - 1],
                    &s.gz[..dl],
                    &mut grad[mask_base..mask_base + self.span + 1],
                );
                s.gh[..m_in].fill(0.0);
                {
                    // borrow the mask via raw index range to avoid aliasing grad
                    let mask = &self.params[mask_base..mask_base + self.span + 1];
                    let (gh, gz) = (&mut s.gh[..m_in], &s.gz[..dl]);
                    conv_full_adjoint_acc(mask, gz, gh);
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two distinct mutable views into a vec of vectors (i < j).
fn split_pair(v: &mut [Vec<f64>], i: usize, j: usize) -> (&[f64], &mut Vec<f64>) {
    debug_assert!(i < j);
    let (a, b) = v.split_at_mut(j);
    (&a[i], &mut b[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = TheoreticalCnn::zeros(4, 2, 3, 2).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn hand_built_single_channel_example() {
        // d=2, s=2, L=1, E=1; mask (1,1,1), zero bias, readout of ones -> 6
        let mut net = TheoreticalCnn::zeros(2, 2, 1, 1).unwrap();
        let p = net.params_mut();
        p[0] = 1.0;
        p[1] = 1.0;
        p[2] = 1.0;
        // final bias: p[3..7] stays 0; readout p[7..11]
        for q in p.iter_mut().skip(7) {
            *q = 1.0;
        }
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), 6.0);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = TheoreticalCnn::zeros(4, 2, 2, 1).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn shape_law_holds_along_forward_pass() {
        let mut rng = Rng::new(5);
        let net = TheoreticalCnn::init(5, 3, 4, 2, &mut rng).unwrap();
        let mut scratch = net.new_scratch();
        let x: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        net.forward_cached(&x, &mut scratch);
        for e in 0..2 {
            for l in 0..=4 {
                assert_eq!(scratch.acts[e * 5 + l].len(), 5 + 3 * l);
            }
        }
    }

    #[test]
    fn spec_size_checks() {
        assert!(TheoreticalCnn::zeros(2, 1, 2, 1).is_err()); // s < 2
        assert!(TheoreticalCnn::zeros(2, 3, 2, 1).is_err()); // s > d
        assert!(TheoreticalCnn::zeros(3, 2, 0, 1).is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = TheoreticalCnn::init(4, 2, 2, 3, &mut Rng::new(9)).unwrap();
        let b = TheoreticalCnn::init(4, 2, 2, 3, &mut Rng::new(9)).unwrap();
        assert_eq!(a.params(), b.params());
    }
}
