//! One-dimensional full convolution and the structured layer types of the
//! single-channel convolutional architecture.
//!
//! A convolutional layer maps a length-`m` vector to length `m + S` through
//! the banded Toeplitz matrix of its filter mask `(w_0, ..., w_S)`:
//! `z_i = Σ_j w_{i-j} h_j` over the valid index range. The helpers here are
//! written as slice axpy/dot loops so the hot paths vectorize.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Shared filter mask of a convolutional layer: `S + 1` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask {
    taps: Vec<f64>,
}

impl FilterMask {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Shape("filter mask needs at least one tap".into()));
        }
        Ok(Self { taps })
    }

    /// Filter span minus one: the `S` in output length `m + S`.
    pub fn span(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }
}

/// Layer bias with repeated middle components.
///
/// Materialized as `(head_1..head_S, mid, ..., mid, tail_1..tail_S)` with
/// `len - 2S` copies of `mid`. Hidden layers `1..L-1` of the structured
/// network carry this form; the final layer's bias is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredBias {
    head: Vec<f64>,
    middle: f64,
    tail: Vec<f64>,
    len: usize,
}

impl StructuredBias {
    pub fn new(head: Vec<f64>, middle: f64, tail: Vec<f64>, len: usize) -> Result<Self> {
        if head.len() != tail.len() {
            return Err(Error::Shape(format!(
                "bias head and tail must have equal length ({} vs {})",
                head.len(),
                tail.len()
            )));
        }
        if len < 2 * head.len() {
            return Err(Error::Shape(format!(
                "bias length {len} shorter than head+tail {}",
                2 * head.len()
            )));
        }
        Ok(Self { head, middle, tail, len })
    }

    /// All-zero structured bias for a layer of size `len` with span `s`.
    pub fn zeros(s: usize, len: usize) -> Result<Self> {
        Self::new(vec![0.0; s], 0.0, vec![0.0; s], len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Expands into the full-length bias vector.
    pub fn materialize(&self) -> Vec<f64> {
        let s = self.head.len();
        let mut b = Vec::with_capacity(self.len);
        b.extend_from_slice(&self.head);
        b.extend(core::iter::repeat(self.middle).take(self.len - 2 * s));
        b.extend_from_slice(&self.tail);
        b
    }
}

/// Full 1-D convolution: `out[i] += Σ_j mask[i-j]·input[j]`.
///
/// `out` must have length `input.len() + mask.len() - 1` and is accumulated
/// into, not overwritten.
#[inline]
pub(crate) fn conv_full_acc(mask: &[f64], input: &[f64], out: &mut [f64]) {
    let m = input.len();
    debug_assert_eq!(out.len(), m + mask.len() - 1);
    for (q, &w) in mask.iter().enumerate() {
        let dst = &mut out[q..q + m];
        for (d, &h) in dst.iter_mut().zip(input) {
            *d += w * h;
        }
    }
}

/// Adjoint of [`conv_full_acc`] with respect to the input:
/// `d_input[j] += Σ_q mask[q]·d_out[j+q]`.
#[inline]
pub(crate) fn conv_full_adjoint_acc(mask: &[f64], d_out: &[f64], d_input: &mut [f64]) {
    let m = d_input.len();
    debug_assert_eq!(d_out.len(), m + mask.len() - 1);
    for (q, &w) in mask.iter().enumerate() {
        let src = &d_out[q..q + m];
        for (d, &g) in d_input.iter_mut().zip(src) {
            *d += w * g;
        }
    }
}

/// Gradient of [`conv_full_acc`] with respect to the mask:
/// `d_mask[q] += Σ_j input[j]·d_out[j+q]`.
#[inline]
pub(crate) fn conv_full_mask_grad_acc(input: &[f64], d_out: &[f64], d_mask: &mut [f64]) {
    let m = input.len();
    debug_assert_eq!(d_out.len(), m + d_mask.len() - 1);
    for (q, dw) in d_mask.iter_mut().enumerate() {
        let src = &d_out[q..q + m];
        let mut acc = 0.0;
        for (&h, &g) in input.iter().zip(src) {
            acc += h * g;
        }
        *dw += acc;
    }
}

/// One structured convolutional layer: `σ(W h - b)` where `W` is the full
/// convolution matrix of `mask` and `σ` the ReLU.
///
/// Output length is `h_prev.len() + mask.span()`.
pub fn conv_layer_forward(
    h_prev: &[f64],
    mask: &FilterMask,
    bias: &StructuredBias,
) -> Result<Vec<f64>> {
    if h_prev.is_empty() {
        return Err(Error::Shape("empty layer input".into()));
    }
    let out_len = h_prev.len() + mask.span();
    if bias.len() != out_len {
        return Err(Error::Shape(format!(
            "bias length {} does not match output length {out_len}",
            bias.len()
        )));
    }
    let mut z = vec![0.0; out_len];
    conv_full_acc(mask.taps(), h_prev, &mut z);
    for (zi, bi) in z.iter_mut().zip(bias.materialize()) {
        *zi = (*zi - bi).max(0.0);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference oracle: materialize the Toeplitz matrix and multiply.
    pub(super) fn toeplitz_forward(mask: &[f64], input: &[f64], bias: &[f64]) -> Vec<f64> {
        let s = mask.len() - 1;
        let rows = input.len() + s;
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let mut acc = 0.0;
            for (j, &h) in input.iter().enumerate() {
                if i >= j && i - j <= s {
                    acc += mask[i - j] * h;
                }
            }
            out[i] = (acc - bias[i]).max(0.0);
        }
        out
    }

    #[test]
    fn hand_example_simple_mask() {
        let mask = FilterMask::new(vec![1.0, 1.0]).unwrap();
        let bias = StructuredBias::zeros(1, 4).unwrap();
        let out = conv_layer_forward(&[1.0, -1.0, 2.0], &mask, &bias).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_mask_zero_bias_gives_zero() {
        let mask = FilterMask::new(vec![0.0, 0.0, 0.0]).unwrap();
        let bias = StructuredBias::zeros(2, 7).unwrap();
        let out = conv_layer_forward(&[3.0, -4.0, 5.0, 6.0, 7.0], &mask, &bias).unwrap();
        assert_eq!(out, vec![0.0; 7]);
    }

    #[test]
    fn hand_example_negative_bias() {
        // sigma((2,0,0) + (1,1,1)) = (3,1,1)
        let mask = FilterMask::new(vec![2.0, 0.0]).unwrap();
        let bias = StructuredBias::new(vec![-1.0], -1.0, vec![-1.0], 3).unwrap();
        let out = conv_layer_forward(&[1.0, 0.0], &mask, &bias).unwrap();
        assert_eq!(out, vec![3.0, 1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let mask = FilterMask::new(vec![1.0, 1.0]).unwrap();
        let bias = StructuredBias::zeros(1, 5).unwrap();
        assert!(conv_layer_forward(&[1.0, 2.0, 3.0], &mask, &bias).is_err());
    }

    #[test]
    fn matches_materialized_toeplitz_product() {
        let mut rng = crate::rng::Rng::new(77);
        for _ in 0..1000 {
            let d = 2 + rng.below(11); // <= 12
            let s = 1 + rng.below(4); // <= 4
            let mask: Vec<f64> = (0..=s).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let input: Vec<f64> = (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let bias: Vec<f64> = (0..d + s).map(|_| rng.uniform(-1.0, 1.0)).collect();

            let mut z = vec![0.0; d + s];
            conv_full_acc(&mask, &input, &mut z);
            for (zi, bi) in z.iter_mut().zip(&bias) {
                *zi = (*zi - bi).max(0.0);
            }
            let oracle = toeplitz_forward(&mask, &input, &bias);
            for (a, b) in z.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12, "sliding {a} vs toeplitz {b}");
            }
        }
    }

    #[test]
    fn structured_bias_materializes_with_repeated_middle() {
        let b = StructuredBias::new(vec![1.0, 2.0], 9.0, vec![3.0, 4.0], 7).unwrap();
        assert_eq!(b.materialize(), vec![1.0, 2.0, 9.0, 9.0, 9.0, 3.0, 4.0]);
        // middle block may be empty when len == 2S
        let b = StructuredBias::new(vec![1.0, 2.0], 9.0, vec![3.0, 4.0], 4).unwrap();
        assert_eq!(b.materialize(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(StructuredBias::new(vec![1.0], 0.0, vec![1.0], 1).is_err());
    }
}
