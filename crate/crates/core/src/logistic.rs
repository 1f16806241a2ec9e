//! Logistic branching in a Lévy environment:
//! `dZ = Z(a - kZ) dt + Z dS`, whose pathwise solution is
//! `Z_t = z e^{K_t} / (1 + k z ∫_0^t e^{K_s} ds)` with `K_t = K0_t + a t`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::levy::{log_add, sample_path, EnvironmentPath, LevyTriplet, Segment, Variant};
use crate::mc::{Accumulator, MCEstimate, SeedStream};
use crate::mechanisms::BranchingMechanism;
use crate::sde::{CBLREConfig, Competition, Status, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConfig {
    pub z0: f64,
    /// Linear growth rate.
    pub a: f64,
    /// Competition strength.
    pub k: f64,
    /// Law of `K`, including the growth rate `a` in its drift.
    pub env: LevyTriplet,
    pub horizon: f64,
    pub dt: f64,
}

impl LogisticConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.z0 > 0.0 && self.z0.is_finite(), "z0", "must be positive")?;
        ensure(self.k > 0.0 && self.k.is_finite(), "k", "must be positive")?;
        ensure(self.a.is_finite(), "a", "must be finite")?;
        ensure(self.env.variant == Variant::K, "env", "must be the K variant")?;
        ensure(self.horizon > 0.0 && self.dt > 0.0 && self.dt <= self.horizon, "dt", "must lie in (0, horizon]")
    }

    /// Branching mechanism `-aλ`, whose `ψ'(0+) = -a` puts `+a t` into `K`.
    pub fn mechanism(&self) -> Result<BranchingMechanism> {
        BranchingMechanism::feller(self.a, 0.0)
    }

    /// The environment `S` driving the SDE.
    pub fn env_s(&self) -> Result<LevyTriplet> {
        let mut k = self.env.clone();
        k.branching_slope = -self.a;
        k.with_variant(Variant::S, -self.a)
    }

    /// Equivalent general simulator configuration.
    pub fn to_cblre(&self) -> Result<CBLREConfig> {
        self.validate()?;
        let mut cfg = CBLREConfig::new(self.z0, self.mechanism()?, self.env_s()?, self.horizon, self.dt);
        cfg.beta = Competition::Quadratic(self.k);
        Ok(cfg)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln Z` from `ln I_t` and `K_t`.
fn log_state(z0: f64, k: f64, log_i: f64, kt: f64) -> f64 {
    z0.ln() + kt - softplus((k * z0).ln() + log_i)
}

/// Pathwise solution on the nodes of a variant-K path.
pub fn exact_solution(path: &EnvironmentPath, z0: f64, k: f64) -> Result<Trajectory> {
    ensure(z0 > 0.0 && k > 0.0, "z0", "z0 and k must be positive")?;
    ensure(path.variant() == Variant::K, "path", "must be a K path")?;
    let mut times = Vec::with_capacity(path.len());
    let mut values = Vec::with_capacity(path.len());
    times.push(0.0);
    values.push(z0);
    let mut log_i = f64::NEG_INFINITY;
    for (seg, &kt) in path.segments().zip(&path.values()[1..]) {
        log_i = log_add(log_i, seg.log_exp_integral(1.0));
        times.push(seg.t1);
        values.push(log_state(z0, k, log_i, kt).exp());
    }
    Ok(Trajectory { times, values, status: Status::Alive })
}

/// `E[Z_∞^n]` for the stationary law when `K` drifts to `+∞`:
/// `k^{-n} ψ_K'(0+) ψ_K(1)⋯ψ_K(n-1) / (n-1)!`.
pub fn stationary_moment(env: &LevyTriplet, k: f64, n: u32) -> Result<f64> {
    ensure(n >= 1, "n", "must be at least 1")?;
    ensure(k > 0.0, "k", "must be positive")?;
    let mean = env.mean();
    ensure(mean > 0.0 && mean.is_finite(), "env", "K must drift to +∞ with finite mean")?;
    let (lo, hi) = env.exp_domain();
    let top = (n - 1) as f64;
    if top >= hi {
        return Err(Error::OutsideExponentialDomain { q: top, lower: lo, upper: hi });
    }
    let mut m = mean / k;
    for j in 1..n {
        m *= env.psi(j as f64)? / (j as f64 * k);
    }
    Ok(m)
}

/// `(1/t) ∫_0^t Z_s ds = ln(1 + k z ∫_0^t e^{K_s} ds) / (k t)` at the path horizon.
pub fn time_average(path: &EnvironmentPath, z0: f64, k: f64) -> Result<f64> {
    ensure(z0 > 0.0 && k > 0.0, "z0", "z0 and k must be positive")?;
    ensure(path.variant() == Variant::K, "path", "must be a K path")?;
    let log_i = path.log_exp_integral(1.0);
    Ok(softplus((k * z0).ln() + log_i) / (k * path.horizon()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageConfig {
    pub n_formula: usize,
    pub n_direct: usize,
    pub dt: f64,
    /// Paths are generated in pieces of this length.
    pub chunk: f64,
    /// Cap on simulated time for both estimators.
    pub t_max: f64,
    pub seed: u64,
}

impl Default for PassageConfig {
    fn default() -> Self {
        PassageConfig { n_formula: 10_000, n_direct: 10_000, dt: 0.01, chunk: 10.0, t_max: 200.0, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageResult {
    pub kappa: f64,
    pub formula: MCEstimate,
    pub direct: MCEstimate,
    /// Mean of the tail term appended to each truncated `I_∞`.
    pub tail: f64,
    /// Direct paths that had not reached `b` by `t_max`; they count as zero.
    pub unresolved: usize,
}

impl PassageResult {
    /// Difference of the two estimates in units of their combined error.
    pub fn z_score(&self) -> f64 {
        let se = self.formula.se.hypot(self.direct.se);
        let d = self.formula.mean - self.direct.mean;
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(d)
            }
        } else {
            d / se
        }
    }
}

/// Appends path chunks of `env` until `done` returns true or `t_max` is hit.
/// `done` sees each segment shifted by the running offset.
fn walk<R: Rng + ?Sized>(
    env: &LevyTriplet,
    chunk: f64,
    dt: f64,
    t_max: f64,
    rng: &mut R,
    mut done: impl FnMut(&Segment) -> bool,
) -> Result<bool> {
    let mut t = 0.0;
    let mut offset = 0.0;
    while t < t_max {
        let span = chunk.min(t_max - t);
        let path = sample_path(env, span, dt, rng)?;
        for seg in path.segments() {
            let s = Segment { t0: seg.t0 + t, t1: seg.t1 + t, k0: seg.k0 + offset, k1: seg.k1 + offset };
            if done(&s) {
                return Ok(true);
            }
        }
        offset += path.terminal();
        t += span;
    }
    Ok(false)
}

/// Ratio estimate `mean(a)/mean(b)` with a delta-method standard error.
fn ratio_estimate(a: &[f64], b: &[f64]) -> Result<MCEstimate> {
    let n = a.len();
    ensure(n >= 2, "n_formula", "need at least two samples")?;
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let r = ma / mb;
    let resid: Accumulator = a.iter().zip(b).map(|(x, y)| x - r * y).collect();
    let se = (resid.sample_variance() / n as f64).sqrt() / mb;
    Ok(MCEstimate { mean: r, se, n: n as u64 })
}

/// Laplace transform `E_z[e^{-λ σ_b}]` of the first time the logistic process
/// falls to `b`, by the Esscher-tilt formula and by direct simulation of the
/// pathwise solution.
pub fn first_passage_laplace(
    z: f64,
    b: f64,
    lambda: f64,
    k: f64,
    env: &LevyTriplet,
    cfg: &PassageConfig,
) -> Result<PassageResult> {
    ensure(b > 0.0 && b <= z, "b", "need 0 < b ≤ z")?;
    ensure(k > 0.0, "k", "must be positive")?;
    ensure(env.variant == Variant::K, "env", "must be the K variant")?;
    ensure(env.is_spectrally_positive(), "env", "K must have no negative jumps")?;
    ensure(env.mean() < 0.0, "env", "K must drift to -∞")?;
    ensure(cfg.t_max > 0.0 && cfg.chunk > 0.0 && cfg.dt > 0.0, "t_max", "must be positive")?;
    let kappa = env.esscher_kappa(lambda)?;
    if kappa <= 1.0 {
        return Err(Error::InvalidParameter {
            name: "lambda".into(), reason: format!("κ(λ) = {kappa} must exceed 1")
        });
    }
    let tilted = env.esscher_tilt(kappa)?;
    // E[∫_t^∞ e^{K_s} ds | K_t] = e^{K_t}/(-ψ(1)) when ψ(1) < 0
    let tail_rate = match tilted.psi(1.0) {
        Ok(p) if p < 0.0 => -p,
        _ => -tilted.mean(),
    };
    let seeds = SeedStream::new(cfg.seed);

    const BLOCK: usize = 256;
    let formula_blocks: Vec<Vec<(f64, f64, f64)>> = (0..cfg.n_formula.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| -> Result<Vec<(f64, f64, f64)>> {
            let mut out = Vec::with_capacity(BLOCK);
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(cfg.n_formula) {
                let mut rng = seeds.rng("passage-formula", 0, i as u32);
                let mut integral = 0.0;
                let mut tail = 0.0;
                walk(&tilted, cfg.chunk, cfg.dt, cfg.t_max, &mut rng, |seg| {
                    integral += seg.exp_integral(1.0);
                    tail = seg.k1.exp() / tail_rate;
                    tail < 1e-8 * integral
                })?;
                let i_inf = integral + tail;
                let x = k * z * i_inf;
                out.push(((1.0 + x).powf(kappa), (z / b + x).powf(kappa), tail));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<(f64, f64, f64)> = formula_blocks.into_iter().flatten().collect();
    let num: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let den: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let tail = samples.iter().map(|s| s.2).sum::<f64>() / samples.len().max(1) as f64;
    let formula = ratio_estimate(&num, &den)?;

    let direct_blocks: Vec<(Accumulator, usize)> = (0..cfg.n_direct.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| -> Result<(Accumulator, usize)> {
            let mut acc = Accumulator::new();
            let mut missed = 0;
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(cfg.n_direct) {
                let mut rng = seeds.rng("passage-direct", 0, i as u32);
                let hit = passage_time(z, b, k, env, cfg, &mut rng)?;
                match hit {
                    Some(t) => acc.push((-lambda * t).exp()),
                    None => {
                        missed += 1;
                        acc.push(0.0);
                    }
                }
            }
            Ok((acc, missed))
        })
        .collect::<Result<_>>()?;
    let mut all = Accumulator::new();
    let mut unresolved = 0;
    for (acc, m) in &direct_blocks {
        all.merge(acc);
        unresolved += m;
    }
    let direct = all.estimate()?;
    Ok(PassageResult { kappa, formula, direct, tail, unresolved })
}

/// First time the pathwise solution started at `z` reaches `b`.
fn passage_time<R: Rng + ?Sized>(
    z: f64,
    b: f64,
    k: f64,
    env: &LevyTriplet,
    cfg: &PassageConfig,
    rng: &mut R,
) -> Result<Option<f64>> {
    if z <= b {
        return Ok(Some(0.0));
    }
    let log_b = b.ln();
    let mut log_i = f64::NEG_INFINITY;
    let mut hit = None;
    walk(env, cfg.chunk, cfg.dt, cfg.t_max, rng, |seg| {
        let end = log_add(log_i, seg.log_exp_integral(1.0));
        if log_state(z, k, end, seg.k1) > log_b {
            log_i = end;
            return false;
        }
        // no negative jumps, so the level is crossed continuously inside the cell
        let at = |t: f64| {
            let part = Segment { t0: seg.t0, t1: t, k0: seg.k0, k1: seg.value_at(t) };
            let li = if t > seg.t0 { log_add(log_i, part.log_exp_integral(1.0)) } else { log_i };
            log_state(z, k, li, part.k1)
        };
        let (mut lo, mut hi) = (seg.t0, seg.t1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if at(mid) > log_b {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hit = Some(hi);
        true
    })?;
    Ok(hit)
}
