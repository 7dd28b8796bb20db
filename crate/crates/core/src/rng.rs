//! Deterministic random number generation and standard-normal functions.
//!
//! All stochastic code in the crate draws from [`Rng`], a ChaCha12 stream
//! cipher generator. A generator is addressed by `(seed, stream)`: equal
//! addresses reproduce the exact same draw sequence on every platform, and
//! distinct stream indices under one seed yield independent substreams
//! (distinct cipher nonces). Monte Carlo replication `r` therefore owns
//! `Rng::substream(base_seed, r)`-derived generators and can run in any
//! order, or in parallel, without affecting results.

use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use alloc::format;

/// Deterministic generator with independent substreams.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha12Rng,
    seed: u64,
    stream: u64,
}

impl Rng {
    /// Generator for `(seed, stream 0)`.
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Generator for the given `(seed, stream)` address.
    ///
    /// The 256-bit cipher key is expanded from `seed` (SplitMix64, the
    /// standard `seed_from_u64` construction) and the stream index is used
    /// as the cipher nonce, so substreams are independent by construction.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, seed, stream }
    }

    /// Seed this generator was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream index this generator was created with.
    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Next raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    ///
    /// Uses the top 53 bits of one `u64` draw, offset by half a step, so the
    /// result is never exactly 0 or 1 and the mapping is bit-reproducible.
    pub fn uniform_open01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    /// Uniform draw on `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform_open01()
    }

    /// Integer draw uniform on `0..bound` (`bound > 0`), via rejection on
    /// the top bits so the distribution is exact.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let bound = bound as u64;
        // Lemire-style rejection: draw until the value falls in the largest
        // multiple of `bound` below 2^64.
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Draw from N(`mean`, `sd`²) by inverse-CDF transform of one uniform
    /// draw. `sd = 0` returns `mean` exactly; exactly one draw is consumed
    /// regardless, so stream positions stay aligned across branches.
    pub fn normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd >= 0.0) {
            return Err(Error::Domain(format!("normal sd must be >= 0, got {sd}")));
        }
        let z = std_normal_quantile_unchecked(self.uniform_open01());
        Ok(mean + sd * z)
    }

    /// Bernoulli draw: 1 with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> Result<u8> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("bernoulli p must be in [0,1], got {p}")));
        }
        Ok(u8::from(self.uniform_open01() < p))
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }
}

/// Standard normal quantile Φ⁻¹(p).
///
/// Wichura's algorithm AS 241 (PPND16); absolute error below 1e-15 on
/// (0, 1), comfortably inside the 1e-8 contract used by the confidence
/// intervals.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile requires p in (0,1), got {p}")));
    }
    Ok(std_normal_quantile_unchecked(p))
}

fn std_normal_quantile_unchecked(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_9e0,
        5.769_497_221_460_691_405_5e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_4e0,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2e0,
        5.463_784_911_164_114_369_9e0,
        1.784_826_539_917_291_335_8e0,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * r + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    // libm rather than the platform libm keeps tail draws bit-identical
    // across targets.
    let mut r = libm::sqrt(-libm::log(r));
    let z = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// Standard normal CDF Φ(z), via the complementary error function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * core::f64::consts::FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_symmetry_at_half() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_published_values() {
        // Cross-checked against high-precision inverse-erf evaluations.
        assert!((std_normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
        assert!((std_normal_quantile(0.995).unwrap() - 2.575829).abs() < 1e-6);
        assert!((std_normal_quantile(0.84).unwrap() - 0.994458).abs() < 1e-6);
    }

    #[test]
    fn quantile_rejects_boundary() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.2).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = std_normal_quantile(p).unwrap();
            assert!(
                (std_normal_cdf(z) - p).abs() <= 1e-8,
                "round trip failed at p={p}"
            );
        }
    }

    #[test]
    fn equal_seeds_equal_sequences() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_substreams_differ() {
        let mut a = Rng::substream(42, 1);
        let mut b = Rng::substream(42, 2);
        let same = (0..1000).all(|_| a.next_u64() == b.next_u64());
        assert!(!same);
    }

    #[test]
    fn normal_degenerate_sd_zero() {
        let mut rng = Rng::new(7);
        assert_eq!(rng.normal(100.0, 0.0).unwrap(), 100.0);
        assert!(rng.normal(0.0, -1.0).is_err());
    }

    #[test]
    fn normal_same_seed_same_value() {
        let x = Rng::new(3).normal(1.0, 2.0).unwrap();
        let y = Rng::new(3).normal(1.0, 2.0).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }

    #[test]
    fn normal_law_of_large_numbers() {
        let mut rng = Rng::new(11);
        let n = 100_000;
        let mean = (0..n).map(|_| rng.normal(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        // 4 / sqrt(1e5) ≈ 0.0126
        assert!(mean.abs() < 0.013, "mean = {mean}");
    }

    #[test]
    fn bernoulli_degenerate_and_frequency() {
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            assert_eq!(rng.bernoulli(0.0).unwrap(), 0);
            assert_eq!(rng.bernoulli(1.0).unwrap(), 1);
        }
        assert!(rng.bernoulli(1.5).is_err());
        assert!(rng.bernoulli(-0.1).is_err());

        let n = 100_000;
        let hits: u32 = (0..n).map(|_| u32::from(rng.bernoulli(0.3).unwrap())).sum();
        let freq = f64::from(hits) / f64::from(n);
        // binomial se: sqrt(0.3*0.7/1e5) ≈ 0.00145; 4 se ≈ 0.006
        assert!((freq - 0.3).abs() < 0.006, "freq = {freq}");
    }

    #[test]
    fn uniform_open01_excludes_endpoints() {
        let mut rng = Rng::new(1);
        for _ in 0..100_000 {
            let u = rng.uniform_open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn below_is_unbiased_small_range() {
        let mut rng = Rng::new(9);
        let mut counts = [0u32; 5];
        for _ in 0..50_000 {
            counts[rng.below(5)] += 1;
        }
        for c in counts {
            assert!((f64::from(c) / 10_000.0 - 1.0).abs() < 0.05);
        }
    }
}
