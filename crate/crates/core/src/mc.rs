//! Monte Carlo bookkeeping: streaming moments, pooled estimates across
//! environments and counter-based seed streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl MCEstimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.se, self.mean + 1.96 * self.se)
    }

    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target).abs() / self.se
        }
    }
}

/// Welford accumulator with Chan's parallel merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let na = self.n as f64;
        let nb = other.n as f64;
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (zero for fewer than two values).
    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Variance with divisor `n`.
    pub fn population_variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }

    pub fn estimate(&self) -> Result<MCEstimate> {
        if self.n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: self.n });
        }
        Ok(MCEstimate { mean: self.mean, se: (self.sample_variance() / self.n as f64).sqrt(), n: self.n })
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// One-pass mean and standard error of `values`.
pub fn stream_accumulate<I: IntoIterator<Item = f64>>(values: I) -> Result<MCEstimate> {
    values.into_iter().collect::<Accumulator>().estimate()
}

/// Pooled estimate over environments with its variance decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pooled {
    pub estimate: MCEstimate,
    /// Draw-weighted mean of the within-environment variances.
    pub within_variance: f64,
    /// Draw-weighted variance of the environment means.
    pub between_variance: f64,
    pub n_env: usize,
}

impl Pooled {
    pub fn total_variance(&self) -> f64 {
        self.within_variance + self.between_variance
    }
}

/// Pools per-environment accumulators by the law of total variance.
///
/// Both variance components use divisor `n`, so that their sum equals the
/// population variance of the flattened draws.
pub fn pooled_conditional(per_env: &[Accumulator]) -> Result<Pooled> {
    if per_env.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: per_env.len() as u64 });
    }
    let mut all = Accumulator::new();
    for acc in per_env {
        all.merge(acc);
    }
    let n = all.count() as f64;
    let mut within = 0.0;
    let mut between = 0.0;
    for acc in per_env {
        let w = acc.count() as f64 / n;
        within += w * acc.population_variance();
        let d = acc.mean() - all.mean();
        between += w * d * d;
    }
    Ok(Pooled { estimate: all.estimate()?, within_variance: within, between_variance: between, n_env: per_env.len() })
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based seed derivation.
///
/// The key depends on the master seed and a module tag; the `(env, rep)` pair
/// selects one of ChaCha's 2^64 independent streams, so two distinct pairs
/// can never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream_id(env: u32, rep: u32) -> u64 {
        ((env as u64) << 32) | rep as u64
    }

    pub fn rng(&self, tag: &str, env: u32, rep: u32) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master ^ fnv1a(tag).rotate_left(17);
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(Self::stream_id(env, rep));
        rng
    }
}
