use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LevyTriplet, Variant};
use crate::error::{ensure, invalid, Error, Result};
use crate::mc::SeedStream;

/// One realised path of an environment process.
///
/// Nodes are the uniform grid plus every jump time. `values[i]` is the
/// right-continuous value at `times[i]` and `jumps[i]` the jump there (zero at
/// plain grid nodes). Between nodes the path is represented by linear
/// interpolation from `values[i]` to the left limit at the next node.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentPath {
    horizon: f64,
    variant: Variant,
    drift: f64,
    sigma: f64,
    branching_slope: f64,
    times: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<f64>,
    gauss: Vec<f64>,
}

/// Continuous stretch of a path between two consecutive nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    /// Value just after `t0`.
    pub k0: f64,
    /// Left limit at `t1`.
    pub k1: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn is_empty(&self) -> bool {
        self.t1 <= self.t0
    }

    pub fn slope(&self) -> f64 {
        (self.k1 - self.k0) / self.len()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.k0 + (self.k1 - self.k0) * (t - self.t0) / self.len()
    }

    /// `∫ exp(c K_s) ds` over the segment.
    pub fn exp_integral(&self, c: f64) -> f64 {
        let a = c * self.k0;
        let d = c * (self.k1 - self.k0);
        self.len() * a.exp() * expm1_ratio(d)
    }

    /// Logarithm of [`Segment::exp_integral`].
    pub fn log_exp_integral(&self, c: f64) -> f64 {
        let a = c * self.k0;
        let d = c * (self.k1 - self.k0);
        let log_ratio = if d > 30.0 {
            // (e^d - 1)/d with e^d dominant
            d + (-(-d).exp_m1()).ln() - d.ln()
        } else {
            expm1_ratio(d).ln()
        };
        self.len().ln() + a + log_ratio
    }
}

/// `(e^d - 1) / d`, continuous at zero.
pub(crate) fn expm1_ratio(d: f64) -> f64 {
    if d.abs() < 1e-8 {
        1.0 + 0.5 * d
    } else {
        d.exp_m1() / d
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl EnvironmentPath {
    /// Builds a path from explicit nodes. `gauss` may be empty, in which case
    /// the continuous increments are attributed to the drift.
    pub fn from_nodes(times: Vec<f64>, values: Vec<f64>, jumps: Vec<f64>, variant: Variant) -> Result<Self> {
        let n = times.len();
        ensure(n >= 2, "times", "a path needs at least two nodes")?;
        ensure(values.len() == n && jumps.len() == n, "values", "node arrays differ in length")?;
        ensure(times[0] == 0.0 && values[0] == 0.0 && jumps[0] == 0.0, "values", "paths start at 0")?;
        for w in times.windows(2) {
            ensure(w[1] > w[0], "times", "node times must be strictly increasing")?;
        }
        ensure(values.iter().chain(&jumps).all(|v| v.is_finite()), "values", "must be finite")?;
        let horizon = times[n - 1];
        let mut gauss = vec![0.0; n];
        for i in 1..n {
            gauss[i] = values[i] - jumps[i] - values[i - 1];
        }
        Ok(EnvironmentPath {
            horizon,
            variant,
            drift: 0.0,
            sigma: 0.0,
            branching_slope: 0.0,
            times,
            values,
            jumps,
            gauss,
        })
    }

    /// Deterministic path `K_s = slope·s` on a uniform grid of step `dt`.
    pub fn linear(slope: f64, horizon: f64, dt: f64, variant: Variant) -> Result<Self> {
        ensure(horizon > 0.0, "horizon", "must be positive")?;
        ensure(dt > 0.0, "dt", "must be positive")?;
        let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
        let h = horizon / n as f64;
        let times: Vec<f64> = (0..=n).map(|i| if i == n { horizon } else { i as f64 * h }).collect();
        let values = times.iter().map(|t| slope * t).collect();
        let mut p = Self::from_nodes(times, values, vec![0.0; n + 1], variant)?;
        p.drift = slope;
        p.gauss.iter_mut().for_each(|g| *g = 0.0);
        Ok(p)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    /// Gaussian increment over the interval ending at each node.
    pub fn gaussian_increments(&self) -> &[f64] {
        &self.gauss
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn path_drift(&self) -> f64 {
        self.drift
    }

    pub fn branching_slope(&self) -> f64 {
        self.branching_slope
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn left_value(&self, i: usize) -> f64 {
        self.values[i] - self.jumps[i]
    }

    /// Jump times with their sizes.
    pub fn jump_events(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().zip(&self.jumps).filter(|(_, &j)| j != 0.0).map(|(&t, &j)| (t, j))
    }

    pub fn segments(&self) -> impl DoubleEndedIterator<Item = Segment> + ExactSizeIterator + '_ {
        (1..self.times.len()).map(move |i| Segment {
            t0: self.times[i - 1],
            t1: self.times[i],
            k0: self.values[i - 1],
            k1: self.left_value(i),
        })
    }

    /// Terminal value rebuilt from drift, Gaussian increments and jumps.
    pub fn recompute_terminal(&self) -> f64 {
        // the node recursion adds drift, Gaussian and jump in this order
        let mut v = 0.0;
        for i in 1..self.times.len() {
            let dt = self.times[i] - self.times[i - 1];
            v = v + self.drift * dt + self.gauss[i] + self.jumps[i];
        }
        v
    }

    /// Right-continuous value at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.horizon {
            return self.terminal();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        if self.times[i] == t {
            return self.values[i];
        }
        let seg = Segment { t0: self.times[i], t1: self.times[i + 1], k0: self.values[i], k1: self.left_value(i + 1) };
        seg.value_at(t)
    }

    /// `∫_0^T exp(c K_s) ds`, exact for the piecewise-linear representation.
    pub fn exp_integral(&self, c: f64) -> f64 {
        self.segments().map(|s| s.exp_integral(c)).sum()
    }

    /// Logarithm of [`EnvironmentPath::exp_integral`], safe for large exponents.
    pub fn log_exp_integral(&self, c: f64) -> f64 {
        self.segments().fold(f64::NEG_INFINITY, |acc, s| log_add(acc, s.log_exp_integral(c)))
    }

    /// `∫_0^T exp(±K_s) ds`.
    pub fn exp_functional(&self, positive: bool) -> f64 {
        self.exp_integral(if positive { 1.0 } else { -1.0 })
    }

    /// The path restricted to `[0, t]`.
    pub fn truncate(&self, t: f64) -> Result<Self> {
        ensure(t > 0.0 && t <= self.horizon + 1e-12, "t", "must lie in (0, horizon]")?;
        if t >= self.horizon {
            return Ok(self.clone());
        }
        let k = self.times.partition_point(|&s| s <= t);
        let mut p = self.clone();
        p.times.truncate(k);
        p.values.truncate(k);
        p.jumps.truncate(k);
        p.gauss.truncate(k);
        if p.times[k - 1] < t {
            let seg =
                Segment { t0: self.times[k - 1], t1: self.times[k], k0: self.values[k - 1], k1: self.left_value(k) };
            let frac = (t - seg.t0) / seg.len();
            p.times.push(t);
            p.values.push(seg.value_at(t));
            p.jumps.push(0.0);
            p.gauss.push(self.gauss[k] * frac);
        }
        p.horizon = t;
        Ok(p)
    }

    /// Keeps every `factor`-th grid node plus all jump nodes. Values at kept
    /// nodes are unchanged, so a scheme run on the result shares randomness
    /// with one run on `self`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        ensure(factor >= 1, "factor", "must be at least 1")?;
        let last = self.times.len() - 1;
        let mut p = self.clone();
        p.times.clear();
        p.values.clear();
        p.jumps.clear();
        p.gauss.clear();
        let mut grid = 0usize;
        let mut g = 0.0;
        for i in 0..=last {
            let on_grid = self.jumps[i] == 0.0;
            if i > 0 && on_grid {
                grid += 1;
            }
            g += self.gauss[i];
            if i == 0 || i == last || !on_grid || grid % factor == 0 {
                p.times.push(self.times[i]);
                p.values.push(self.values[i]);
                p.jumps.push(self.jumps[i]);
                p.gauss.push(g);
                g = 0.0;
            }
        }
        Ok(p)
    }

    /// The same noise seen as another variant: values change by
    /// `(old slope - new slope)·t`.
    pub fn to_variant(&self, variant: Variant, psi_prime0: f64) -> Result<Self> {
        ensure(psi_prime0.is_finite(), "psi_prime0", "must be finite")?;
        let slope = if variant == Variant::K { psi_prime0 } else { 0.0 };
        let shift = self.branching_slope - slope;
        let mut p = self.clone();
        for (v, t) in p.values.iter_mut().zip(&self.times) {
            *v += shift * t;
        }
        p.drift += shift;
        p.branching_slope = slope;
        p.variant = variant;
        Ok(p)
    }

    /// Checks that the path can serve as `variant` up to `horizon`.
    pub fn check(&self, variant: Variant, horizon: f64) -> Result<()> {
        if self.variant != variant {
            return Err(Error::PathMismatch(format!("expected a {variant:?} path, got {:?}", self.variant)));
        }
        if (self.horizon - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::PathMismatch(format!("path horizon {} differs from {}", self.horizon, horizon)));
        }
        Ok(())
    }

    /// Writes `time,K,jump_flag` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,K,jump_flag")?;
        for i in 0..self.times.len() {
            let flag = (self.jumps[i] != 0.0) as u8;
            writeln!(out, "{},{},{}", self.times[i], self.values[i], flag)?;
        }
        Ok(())
    }
}

/// Samples a path of `triplet` on `[0, horizon]` with grid step close to `dt`.
///
/// Jump times are placed exactly; the Gaussian part is sampled exactly at
/// every node.
pub fn sample_path<R: Rng + ?Sized>(
    triplet: &LevyTriplet,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<EnvironmentPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", "must be positive"));
    }
    if !(dt > 0.0 && dt <= horizon) {
        return Err(invalid("dt", "must lie in (0, horizon]"));
    }
    let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / n as f64;
    let drift = triplet.path_drift();
    let sd = triplet.gaussian_variance().sqrt();

    let cap = n + 1 + (triplet.jumps.iter().map(|c| c.rate()).sum::<f64>() * horizon * 1.2) as usize;
    let mut times = Vec::with_capacity(cap);
    let mut values = Vec::with_capacity(cap);
    let mut jumps = Vec::with_capacity(cap);
    let mut gauss = Vec::with_capacity(cap);
    times.push(0.0);
    values.push(0.0);
    jumps.push(0.0);
    gauss.push(0.0);

    let mut events: Vec<(f64, f64)> = Vec::new();
    let mut v = 0.0;
    let mut t_prev = 0.0;
    for cell in 0..n {
        let t0 = cell as f64 * h;
        let t1 = if cell + 1 == n { horizon } else { (cell + 1) as f64 * h };
        events.clear();
        for comp in &triplet.jumps {
            let count = comp.sample_count(t1 - t0, rng);
            for _ in 0..count {
                let u: f64 = rng.random();
                let at = t0 + u * (t1 - t0);
                let size = comp.sample_size(rng);
                events.push((at, size));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(at, size) in events.iter().chain(std::iter::once(&(t1, 0.0))) {
            // a jump landing on an existing node (probability zero) merges into it
            if at <= t_prev {
                let last = values.len() - 1;
                values[last] += size;
                jumps[last] += size;
                v += size;
                continue;
            }
            let span = at - t_prev;
            let g = if sd > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                sd * span.sqrt() * z
            } else {
                0.0
            };
            v = v + drift * span + g + size;
            times.push(at);
            values.push(v);
            jumps.push(size);
            gauss.push(g);
            t_prev = at;
        }
    }
    Ok(EnvironmentPath {
        horizon,
        variant: triplet.variant,
        drift,
        sigma: sd,
        branching_slope: triplet.branching_slope,
        times,
        values,
        jumps,
        gauss,
    })
}

/// [`sample_path`] with the generator derived from `seed`.
pub fn sample_path_seeded(triplet: &LevyTriplet, horizon: f64, dt: f64, seed: u64) -> Result<EnvironmentPath> {
    let mut rng: ChaCha8Rng = SeedStream::new(seed).rng("env", 0, 0);
    sample_path(triplet, horizon, dt, &mut rng)
}
