//! Fully connected feed-forward network with two hidden ReLU layers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Network;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Two-hidden-layer MLP with a scalar linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    input_dim: usize,
    widths: [usize; 2],
    params: Vec<f64>,
    w_off: [usize; 2],
    b_off: [usize; 2],
    head_w_off: usize,
    head_b_off: usize,
}

#[derive(Debug)]
pub struct MlpScratch {
    acts: [Vec<f64>; 2],
    g: [Vec<f64>; 2],
}

impl Mlp {
    pub fn init(input_dim: usize, widths: [usize; 2], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(input_dim, widths)?;
        let mut prev = input_dim;
        for (j, &w) in widths.iter().enumerate() {
            let scale = (6.0 / prev as f64).sqrt();
            for k in 0..w * prev {
                net.params[net.w_off[j] + k] = rng.uniform(-scale, scale);
            }
            prev = w;
        }
        let scale = (6.0 / widths[1] as f64).sqrt();
        for k in 0..widths[1] {
            net.params[net.head_w_off + k] = rng.uniform(-scale, scale);
        }
        Ok(net)
    }

    pub fn zeros(input_dim: usize, widths: [usize; 2]) -> Result<Self> {
        if input_dim == 0 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "mlp dimensions must be >= 1 (input={input_dim}, widths={widths:?})"
            )));
        }
        let w_off = [0, widths[0] * input_dim + widths[0]];
        let b_off = [widths[0] * input_dim, w_off[1] + widths[1] * widths[0]];
        let head_w_off = b_off[1] + widths[1];
        let head_b_off = head_w_off + widths[1];
        Ok(Self {
            input_dim,
            widths,
            params: vec![0.0; head_b_off + 1],
            w_off,
            b_off,
            head_w_off,
            head_b_off,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> [usize; 2] {
        self.widths
    }

    /// Network output for one input row (allocates its own scratch).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "input length {} does not match expected {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut s = self.new_scratch();
        Ok(self.forward_cached(x, &mut s))
    }
}

impl Network for Mlp {
    type Scratch = MlpScratch;

    fn new_scratch(&self) -> MlpScratch {
        MlpScratch {
            acts: [vec![0.0; self.widths[0]], vec![0.0; self.widths[1]]],
            g: [vec![0.0; self.widths[0]], vec![0.0; self.widths[1]]],
        }
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

    fn forward_cached(&self, x: &[f64], s: &mut MlpScratch) -> f64 {
        for j in 0..2 {
            let prev_dim = if j == 0 { self.input_dim } else { self.widths[0] };
            let (lo, hi) = s.acts.split_at_mut(j.max(1));
            let (prev, cur): (&[f64], &mut Vec<f64>) = if j == 0 {
                (x, &mut lo[0])
            } else {
                (&lo[0], &mut hi[0])
            };
            for o in 0..self.widths[j] {
                let base = self.w_off[j] + o * prev_dim;
                let mut acc = self.params[self.b_off[j] + o];
                for (k, &p) in prev.iter().enumerate() {
                    acc += self.params[base + k] * p;
                }
                cur[o] = acc.max(0.0);
            }
        }
        let mut out = self.params[self.head_b_off];
        for (k, &h) in s.acts[1].iter().enumerate() {
            out += self.params[self.head_w_off + k] * h;
        }
        out
    }

    fn backward(&self, x: &[f64], s: &mut MlpScratch, upstream: f64, grad: &mut [f64]) {
        grad[self.head_b_off] += upstream;
        for (k, &h) in s.acts[1].iter().enumerate() {
            grad[self.head_w_off + k] += upstream * h;
            s.g[1][k] = upstream * self.params[self.head_w_off + k];
        }
        for j in (0..2).rev() {
            let prev_dim = if j == 0 { self.input_dim } else { self.widths[0] };
            for o in 0..self.widths[j] {
                if s.acts[j][o] <= 0.0 {
                    s.g[j][o] = 0.0;
                }
            }
            if j == 1 {
                s.g[0].fill(0.0);
            }
            for o in 0..self.widths[j] {
                let g = s.g[j][o];
                if g == 0.0 {
                    continue;
                }
                grad[self.b_off[j] + o] += g;
                let base = self.w_off[j] + o * prev_dim;
                if j == 0 {
                    for (k, &p) in x.iter().enumerate() {
                        grad[base + k] += g * p;
                    }
                } else {
                    // split to read acts[0] while writing g[0]
                    let (a, gprev) = (&s.acts[0], &mut s.g[0]);
                    for k in 0..prev_dim {
                        grad[base + k] += g * a[k];
                        gprev[k] += g * self.params[base + k];
                    }
                }
            }
        }
    }
}
