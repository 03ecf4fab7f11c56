//! Deterministic random numbers for reproducible simulation runs.
//!
//! The generator is xoshiro256++ seeded through splitmix64. Every stage of a
//! run derives its own labeled stream from the root seed, so adding a noise
//! draw in one stage never shifts the values drawn by another. All floating
//! point paths go through `libm`, which keeps sequences byte-identical across
//! platforms.

use alloc::string::String;
use alloc::vec::Vec;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded xoshiro256++ generator.
#[derive(Clone, Debug)]
pub struct DetRng {
    s: [u64; 4],
    seed: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        DetRng { s, seed }
    }

    /// The seed this generator was constructed from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for a labeled sub-task of the same run.
    ///
    /// Derivation depends only on the root seed and the label, never on how
    /// many values have already been drawn from `self`.
    pub fn derive(&self, label: &str) -> DetRng {
        DetRng::new(self.seed ^ fnv1a(label.as_bytes()).rotate_left(17))
    }

    /// Like [`derive`](Self::derive), with an index folded in (e.g. one
    /// stream per trial or per sweep point).
    pub fn derive_indexed(&self, label: &str, index: u64) -> DetRng {
        let mixed = index.wrapping_mul(GOLDEN_GAMMA).rotate_left(31);
        DetRng::new(self.seed ^ fnv1a(label.as_bytes()).rotate_left(17) ^ mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in the half-open interval [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in the open interval (0, 1); safe to feed into
    /// logarithm-based transforms.
    pub fn open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased draw from 0..n via rejection sampling.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal draw (Box–Muller; the paired value is discarded to
    /// keep the draw count predictable).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.open_f64();
        let u2 = self.open_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Convenience: `n` standard normal draws.
    pub fn gaussians(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }
}

impl core::fmt::Display for DetRng {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "DetRng(seed={})", self.seed)
    }
}

/// Stable label helper for per-epsilon streams: formats the value with full
/// precision so distinct sweep points always get distinct streams.
pub fn epsilon_label(prefix: &str, epsilon: f64) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    let _ = write!(s, "{}:{}", prefix, epsilon.to_bits());
    s
}
