//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, step, index, sample, axis)`,
//! so results do not depend on evaluation order or on how work is split
//! across threads.

/// Independent streams so that different consumers of one seed never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Diffusion = 1,
    FitNoise = 2,
    VelocityPerturb = 3,
    SourcePerturb = 4,
    KappaPerturb = 5,
    Residual = 6,
    Member = 7,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key for one family of draws; `index`/`sample`/`axis` select within it.
#[derive(Debug, Clone, Copy)]
pub struct NoiseKey {
    base: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, stream: Stream, step: u64) -> Self {
        let mut h = splitmix64(seed);
        h = splitmix64(h ^ (stream as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
        h = splitmix64(h ^ step);
        NoiseKey { base: h }
    }

    #[inline]
    fn bits(&self, index: u64, sample: u64, lane: u64) -> u64 {
        let h = splitmix64(self.base ^ index);
        let h = splitmix64(h ^ sample.wrapping_mul(0xa076_1d64_78bd_642f));
        splitmix64(h ^ lane.wrapping_mul(0xe703_7ed1_a0b4_28db))
    }

    /// Uniform draw in (0, 1].
    #[inline]
    pub fn uniform(&self, index: u64, sample: u64, lane: u64) -> f64 {
        ((self.bits(index, sample, lane) >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller on two independent lanes).
    #[inline]
    pub fn normal(&self, index: u64, sample: u64, axis: u64) -> f64 {
        let u1 = self.uniform(index, sample, 2 * axis);
        let u2 = self.uniform(index, sample, 2 * axis + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Three standard normals for axes (z, y, x).
    #[inline]
    pub fn normal3(&self, index: u64, sample: u64) -> [f64; 3] {
        [self.normal(index, sample, 0), self.normal(index, sample, 1), self.normal(index, sample, 2)]
    }
}

/// Derive a child seed for member `k` of a family.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ k.wrapping_mul(0x2545_f491_4f6c_dd1d))
}
