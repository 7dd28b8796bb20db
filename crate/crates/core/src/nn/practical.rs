//! The practical multi-channel convolutional network used in the numerical
//! experiments: each layer holds several channels, every output channel sums
//! full convolutions of all input channels, and a dense head reads out the
//! flattened final layer. Covariates that are not time series bypass the
//! convolutional stack through a small fully connected branch whose output
//! joins the flattening step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{conv_full_acc, conv_full_adjoint_acc, conv_full_mask_grad_acc};
use super::Network;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Multi-channel 1-D CNN with an optional static-covariate branch.
#[derive(Debug, Clone)]
pub struct PracticalCnn {
    in_channels: usize,
    series_len: usize,
    span: usize,
    conv_channels: Vec<usize>,
    static_dim: usize,
    static_widths: Vec<usize>,
    params: Vec<f64>,
    conv_w_off: Vec<usize>,
    conv_b_off: Vec<usize>,
    static_w_off: Vec<usize>,
    static_b_off: Vec<usize>,
    head_w_off: usize,
    head_b_off: usize,
}

/// Reusable activation and gradient buffers.
#[derive(Debug)]
pub struct PracticalScratch {
    /// Channel-major activations per conv layer (layer 0 is the input copy).
    conv: Vec<Vec<f64>>,
    g_conv: Vec<Vec<f64>>,
    stat: Vec<Vec<f64>>,
    g_stat: Vec<Vec<f64>>,
}

impl PracticalCnn {
    /// He-style initialized network; biases start at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        in_channels: usize,
        series_len: usize,
        span: usize,
        conv_channels: &[usize],
        static_dim: usize,
        static_widths: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(
            in_channels,
            series_len,
            span,
            conv_channels,
            static_dim,
            static_widths,
        )?;
        let taps = span + 1;
        for (i, &c_out) in net.conv_channels.clone().iter().enumerate() {
            let c_in = net.layer_channels(i);
            let scale = (6.0 / (c_in * taps) as f64).sqrt();
            let base = net.conv_w_off[i];
            for k in 0..c_out * c_in * taps {
                net.params[base + k] = rng.uniform(-scale, scale);
            }
        }
        let mut prev = static_dim;
        for (j, &w) in net.static_widths.clone().iter().enumerate() {
            let scale = (6.0 / prev.max(1) as f64).sqrt();
            let base = net.static_w_off[j];
            for k in 0..w * prev {
                net.params[base + k] = rng.uniform(-scale, scale);
            }
            prev = w;
        }
        let head_dim = net.head_input_dim();
        let scale = (6.0 / head_dim as f64).sqrt();
        for k in 0..head_dim {
            net.params[net.head_w_off + k] = rng.uniform(-scale, scale);
        }
        Ok(net)
    }

    /// All-zero network with the same layout.
    pub fn zeros(
        in_channels: usize,
        series_len: usize,
        span: usize,
        conv_channels: &[usize],
        static_dim: usize,
        static_widths: &[usize],
    ) -> Result<Self> {
        if in_channels == 0 || series_len < 2 {
            return Err(Error::Config(format!(
                "need at least one input channel of length >= 2 (channels={in_channels}, len={series_len})"
            )));
        }
        if span < 1 || span > series_len {
            return Err(Error::Config(format!(
                "filter span must satisfy 1 <= s <= series length (s={span}, len={series_len})"
            )));
        }
        if conv_channels.is_empty() || conv_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("conv layers need at least one channel each".into()));
        }
        if static_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("static branch widths must be >= 1".into()));
        }
        if static_dim == 0 && !static_widths.is_empty() {
            return Err(Error::Config(
                "static branch configured but no static covariates".into(),
            ));
        }

        let taps = span + 1;
        let mut offset = 0usize;
        let mut conv_w_off = Vec::with_capacity(conv_channels.len());
        let mut conv_b_off = Vec::with_capacity(conv_channels.len());
        let mut c_in = in_channels;
        for &c_out in conv_channels {
            conv_w_off.push(offset);
            offset += c_out * c_in * taps;
            conv_b_off.push(offset);
            offset += c_out;
            c_in = c_out;
        }
        let mut static_w_off = Vec::with_capacity(static_widths.len());
        let mut static_b_off = Vec::with_capacity(static_widths.len());
        let mut prev = static_dim;
        for &w in static_widths {
            static_w_off.push(offset);
            offset += w * prev;
            static_b_off.push(offset);
            offset += w;
            prev = w;
        }
        let head_w_off = offset;
        let last_t = series_len + span * conv_channels.len();
        let head_dim = conv_channels.last().unwrap() * last_t
            + if static_widths.is_empty() { static_dim } else { *static_widths.last().unwrap() };
        offset += head_dim;
        let head_b_off = offset;
        offset += 1;

        Ok(Self {
            in_channels,
            series_len,
            span,
            conv_channels: conv_channels.to_vec(),
            static_dim,
            static_widths: static_widths.to_vec(),
            params: vec![0.0; offset],
            conv_w_off,
            conv_b_off,
            static_w_off,
            static_b_off,
            head_w_off,
            head_b_off,
        })
    }

    /// Expected input length: all series values followed by the statics.
    pub fn input_dim(&self) -> usize {
        self.in_channels * self.series_len + self.static_dim
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn conv_channels(&self) -> &[usize] {
        &self.conv_channels
    }

    pub fn static_dim(&self) -> usize {
        self.static_dim
    }

    pub fn static_widths(&self) -> &[usize] {
        &self.static_widths
    }

    /// Channel count feeding conv layer `i` (0-based).
    fn layer_channels(&self, i: usize) -> usize {
        if i == 0 { self.in_channels } else { self.conv_channels[i - 1] }
    }

    /// Series length at conv layer boundary `l` (0 = input).
    fn layer_len(&self, l: usize) -> usize {
        self.series_len + self.span * l
    }

    fn head_input_dim(&self) -> usize {
        let last_t = self.layer_len(self.conv_channels.len());
        self.conv_channels.last().unwrap() * last_t
            + if self.static_widths.is_empty() {
                self.static_dim
            } else {
                *self.static_widths.last().unwrap()
            }
    }

    #[inline]
    fn conv_weight(&self, layer: usize, oc: usize, ic: usize) -> &[f64] {
        let taps = self.span + 1;
        let c_in = self.layer_channels(layer);
        let base = self.conv_w_off[layer] + (oc * c_in + ic) * taps;
        &self.params[base..base + taps]
    }

    /// Network output for one input row (allocates its own scratch).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} does not match expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut scratch = self.new_scratch();
        Ok(self.forward_cached(x, &mut scratch))
    }
}

impl Network for PracticalCnn {
    type Scratch = PracticalScratch;

    fn new_scratch(&self) -> PracticalScratch {
        let n_layers = self.conv_channels.len();
        let mut conv = Vec::with_capacity(n_layers + 1);
        conv.push(vec![0.0; self.in_channels * self.series_len]);
        for (i, &c) in self.conv_channels.iter().enumerate() {
            conv.push(vec![0.0; c * self.layer_len(i + 1)]);
        }
        let g_conv = conv.clone();
        let mut stat = Vec::with_capacity(self.static_widths.len() + 1);
        stat.push(vec![0.0; self.static_dim]);
        for &w in &self.static_widths {
            stat.push(vec![0.0; w]);
        }
        let g_stat = stat.clone();
        PracticalScratch { conv, g_conv, stat, g_stat }
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

    fn forward_cached(&self, x: &[f64], s: &mut PracticalScratch) -> f64 {
        let n_series = self.in_channels * self.series_len;
        s.conv[0].copy_from_slice(&x[..n_series]);
        for (i, &c_out) in self.conv_channels.iter().enumerate() {
            let c_in = self.layer_channels(i);
            let t_in = self.layer_len(i);
            let t_out = self.layer_len(i + 1);
            let (prev, cur) = split_pair(&mut s.conv, i, i + 1);
            for oc in 0..c_out {
                let z = &mut cur[oc * t_out..(oc + 1) * t_out];
                z.fill(self.params[self.conv_b_off[i] + oc]);
                for ic in 0..c_in {
                    conv_full_acc(
                        self.conv_weight(i, oc, ic),
                        &prev[ic * t_in..(ic + 1) * t_in],
                        z,
                    );
                }
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        if self.static_dim > 0 {
            s.stat[0].copy_from_slice(&x[n_series..]);
            for (j, &w) in self.static_widths.iter().enumerate() {
                let prev_dim = if j == 0 { self.static_dim } else { self.static_widths[j - 1] };
                let (prev, cur) = split_pair(&mut s.stat, j, j + 1);
                for o in 0..w {
                    let base = self.static_w_off[j] + o * prev_dim;
                    let mut acc = self.params[self.static_b_off[j] + o];
                    for (k, &p) in prev.iter().enumerate() {
                        acc += self.params[base + k] * p;
                    }
                    cur[o] = acc.max(0.0);
                }
            }
        }

        let conv_last = s.conv.last().unwrap();
        let mut out = self.params[self.head_b_off];
        let hw = &self.params[self.head_w_off..self.head_b_off];
        let mut k = 0usize;
        for &v in conv_last.iter() {
            out += hw[k] * v;
            k += 1;
        }
        if self.static_dim > 0 {
            for &v in s.stat.last().unwrap().iter() {
                out += hw[k] * v;
                k += 1;
            }
        }
        out
    }

    fn backward(&self, _x: &[f64], s: &mut PracticalScratch, upstream: f64, grad: &mut [f64]) {
        // head
        grad[self.head_b_off] += upstream;
        let n_layers = self.conv_channels.len();
        {
            let conv_last = &s.conv[n_layers];
            let g_last = &mut s.g_conv[n_layers];
            let mut k = self.head_w_off;
            for (gi, &hv) in g_last.iter_mut().zip(conv_last.iter()) {
                grad[k] += upstream * hv;
                *gi = upstream * self.params[k];
                k += 1;
            }
            if self.static_dim > 0 {
                let stat_last_idx = s.stat.len() - 1;
                let stat_last = &s.stat[stat_last_idx];
                let g_stat_last = &mut s.g_stat[stat_last_idx];
                for (gi, &hv) in g_stat_last.iter_mut().zip(stat_last.iter()) {
                    grad[k] += upstream * hv;
                    *gi = upstream * self.params[k];
                    k += 1;
                }
            }
        }

        // static branch backward
        if self.static_dim > 0 {
            for j in (0..self.static_widths.len()).rev() {
                let w = self.static_widths[j];
                let prev_dim = if j == 0 { self.static_dim } else { self.static_widths[j - 1] };
                // gate on the post-ReLU activation
                for o in 0..w {
                    if s.stat[j + 1][o] <= 0.0 {
                        s.g_stat[j + 1][o] = 0.0;
                    }
                }
                s.g_stat[j].fill(0.0);
                for o in 0..w {
                    let g = s.g_stat[j + 1][o];
                    if g == 0.0 {
                        continue;
                    }
                    grad[self.static_b_off[j] + o] += g;
                    let base = self.static_w_off[j] + o * prev_dim;
                    for k in 0..prev_dim {
                        grad[base + k] += g * s.stat[j][k];
                        s.g_stat[j][k] += g * self.params[base + k];
                    }
                }
            }
        }

        // conv stack backward
        for i in (0..n_layers).rev() {
            let c_out = self.conv_channels[i];
            let c_in = self.layer_channels(i);
            let t_in = self.layer_len(i);
            let t_out = self.layer_len(i + 1);
            let taps = self.span + 1;
            // ReLU gate
            for (g, &h) in s.g_conv[i + 1].iter_mut().zip(s.conv[i + 1].iter()) {
                if h <= 0.0 {
                    *g = 0.0;
                }
            }
            s.g_conv[i].fill(0.0);
            for oc in 0..c_out {
                let (g_in, g_out_all) = split_pair_mut(&mut s.g_conv, i, i + 1);
                let g_out = &g_out_all[oc * t_out..(oc + 1) * t_out];
                grad[self.conv_b_off[i] + oc] += g_out.iter().sum::<f64>();
                let prev = &s.conv[i];
                for ic in 0..c_in {
                    let wbase = self.conv_w_off[i] + (oc * c_in + ic) * taps;
                    conv_full_mask_grad_acc(
                        &prev[ic * t_in..(ic + 1) * t_in],
                        g_out,
                        &mut grad[wbase..wbase + taps],
                    );
                    conv_full_adjoint_acc(
                        &self.params[wbase..wbase + taps],
                        g_out,
                        &mut g_in[ic * t_in..(ic + 1) * t_in],
                    );
                }
            }
        }
    }
}

#[inline]
fn split_pair<'a>(v: &'a mut [Vec<f64>], i: usize, j: usize) -> (&'a [f64], &'a mut Vec<f64>) {
    debug_assert!(i < j);
    let (a, b) = v.split_at_mut(j);
    (&a[i], &mut b[0])
}

#[inline]
fn split_pair_mut<'a>(
    v: &'a mut [Vec<f64>],
    i: usize,
    j: usize,
) -> (&'a mut Vec<f64>, &'a mut Vec<f64>) {
    debug_assert!(i < j);
    let (a, b) = v.split_at_mut(j);
    (&mut a[i], &mut b[0])
}
