//! Pathwise backward equation for the conditional Laplace exponent, the
//! resulting Laplace transform, and closed forms for the Neveu and stable
//! families.
//!
//! On a variant-K path the equation is `∂v/∂s = e^{K_s} ψ₀(v e^{-K_s})`; on a
//! variant-K0 path the full mechanism replaces `ψ₀`. Both are solved backward
//! from `v(t) = λ`.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{ensure, invalid, Error, Result};
use crate::levy::{sample_path, EnvironmentPath, LevyTriplet, Segment, Variant};
use crate::mc::{Accumulator, MCEstimate, SeedStream};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism};
use crate::sde::{simulate_terminal, CBLREConfig};

const MAX_STEP: f64 = 1e-3;
const REL_TOL: f64 = 1e-8;
const INVARIANT_TOL: f64 = 1e-8;
const MIN_STEP: f64 = 1e-14;

/// Solution of the backward equation on `[0, t]`, in increasing `s`.
///
/// At a jump of the path the grid holds `s` twice: once with the left limit
/// of `K` and once with the value after the jump.
#[derive(Debug, Clone)]
pub struct VSolution<'a> {
    pub path: &'a EnvironmentPath,
    pub t: f64,
    pub lambda: f64,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// Path value used at each grid point.
    pub k: Vec<f64>,
    pub max_step: f64,
    pub steps: usize,
    pub rejections: usize,
}

impl VSolution<'_> {
    /// `v(0)`.
    pub fn initial(&self) -> f64 {
        self.v[0]
    }

    /// Linear interpolation of `v` at `s`.
    pub fn value_at(&self, s: f64) -> f64 {
        if s <= self.s[0] {
            return self.v[0];
        }
        let i = self.s.partition_point(|&x| x < s);
        if i >= self.s.len() {
            return self.v[self.v.len() - 1];
        }
        if self.s[i] == s {
            return self.v[i];
        }
        let w = (s - self.s[i - 1]) / (self.s[i] - self.s[i - 1]);
        self.v[i - 1] + w * (self.v[i] - self.v[i - 1])
    }

    /// Writes `s,v` rows, one per distinct grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "s,v")?;
        for i in 0..self.s.len() {
            if i > 0 && self.s[i] == self.s[i - 1] {
                continue;
            }
            writeln!(out, "{},{}", self.s[i], self.v[i])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Form {
    Centered,
    Full,
}

struct Rhs<'m> {
    mech: &'m BranchingMechanism,
    form: Form,
}

impl Rhs<'_> {
    fn eval(&self, k: f64, v: f64) -> f64 {
        let v = v.max(0.0);
        let e = (-k).exp();
        let x = v * e;
        let p = match self.form {
            Form::Centered => self.mech.psi0(x).expect("checked before solving"),
            Form::Full => self.mech.psi(x),
        };
        p / e
    }

    fn rk4(&self, seg: &Segment, s: f64, v: f64, h: f64) -> f64 {
        let mid = seg.value_at(s - 0.5 * h);
        let k1 = self.eval(seg.value_at(s), v);
        let k2 = self.eval(mid, v - 0.5 * h * k1);
        let k3 = self.eval(mid, v - 0.5 * h * k2);
        let k4 = self.eval(seg.value_at(s - h), v - h * k3);
        v - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }
}

/// Segments of `path` restricted to `[lo, hi]`.
fn clipped(path: &EnvironmentPath, lo: f64, hi: f64) -> impl DoubleEndedIterator<Item = Segment> + '_ {
    path.segments().filter(move |g| g.t1 > lo && g.t0 < hi).map(move |g| {
        let (t0, t1) = (g.t0.max(lo), g.t1.min(hi));
        Segment { t0, t1, k0: g.value_at(t0), k1: g.value_at(t1) }
    })
}

/// `∫_lo^hi exp(c K_u) du`, exact for the piecewise-linear path.
pub fn exp_integral_between(path: &EnvironmentPath, c: f64, lo: f64, hi: f64) -> f64 {
    clipped(path, lo, hi).map(|g| g.exp_integral(c)).sum()
}

/// `∫_lo^hi e^{-u} K_u du`, exact for the piecewise-linear path.
pub fn discounted_integral(path: &EnvironmentPath, lo: f64, hi: f64) -> f64 {
    clipped(path, lo, hi)
        .map(|g| {
            let (ea, eb) = ((-g.t0).exp(), (-g.t1).exp());
            ea * g.k0 - eb * g.k1 + g.slope() * (ea - eb)
        })
        .sum()
}

/// Solves the backward equation on `[0, t]` with terminal value `λ`.
///
/// A variant-K path uses `ψ₀` and needs hypothesis (H); a variant-K0 path
/// uses `ψ` itself. Integration restarts at every node of the path, so the
/// path is smooth inside each step, and no step exceeds
/// `min(1e-3, gap/4)` with `gap` the distance between neighbouring jumps.
pub fn solve_v<'a>(path: &'a EnvironmentPath, t: f64, lambda: f64, mech: &BranchingMechanism) -> Result<VSolution<'a>> {
    ensure(lambda >= 0.0 && lambda.is_finite(), "lambda", "must be finite and non-negative")?;
    ensure(t > 0.0 && t <= path.horizon() + 1e-12, "t", "must lie in (0, horizon]")?;
    if mech.q > 0.0 {
        return Err(Error::Unsupported("killing mass q > 0 in the backward equation".into()));
    }
    let form = match path.variant() {
        Variant::K => {
            if !mech.satisfies_h() {
                return Err(Error::HypothesisH);
            }
            Form::Centered
        }
        Variant::K0 => Form::Full,
        Variant::S => return Err(Error::PathMismatch("backward equation needs a K or K0 path".into())),
    };
    let rhs = Rhs { mech, form };

    let mut cuts: Vec<f64> = vec![0.0];
    cuts.extend(path.jump_events().map(|(s, _)| s).filter(|&s| s > 0.0 && s < t));
    cuts.push(t);
    let gap_at = |s: f64| {
        let i = cuts.partition_point(|&c| c < s).clamp(1, cuts.len() - 1);
        cuts[i] - cuts[i - 1]
    };

    let mut s_rev = Vec::with_capacity(path.len() * 2);
    let mut v_rev = Vec::with_capacity(path.len() * 2);
    let mut k_rev = Vec::with_capacity(path.len() * 2);
    let mut v = lambda;
    // running ∫_s^t Φ(λ e^{-K_u}) du for the lower bound
    let mut phi_int = 0.0;
    let phi_at = |k: f64| -> f64 {
        match form {
            Form::Centered => mech.phi_ratio(lambda * (-k).exp()).expect("checked"),
            Form::Full => 0.0,
        }
    };
    let mut max_step: f64 = 0.0;
    let mut steps = 0;
    let mut rejections = 0;

    for seg in clipped(path, 0.0, t).rev() {
        if k_rev.last().is_none_or(|&k| k != seg.k1) {
            s_rev.push(seg.t1);
            v_rev.push(v);
            k_rev.push(seg.k1);
        }
        let h_nom = MAX_STEP.min(gap_at(0.5 * (seg.t0 + seg.t1)) / 4.0);
        let n = (seg.len() / h_nom - 1e-9).ceil().max(1.0);
        let h_nom = seg.len() / n;
        let mut s = seg.t1;
        let mut h = h_nom;
        while s > seg.t0 {
            let rem = s - seg.t0;
            // absorb rounding residue at the segment end into the current step
            let h_try = if rem - h <= 1e-9 * h_nom { rem } else { h };
            if h_try < MIN_STEP {
                return Err(Error::StepUnderflow { s, step: h_try });
            }
            let full = rhs.rk4(&seg, s, v, h_try);
            let half = rhs.rk4(&seg, s, v, 0.5 * h_try);
            let two = rhs.rk4(&seg, s - 0.5 * h_try, half, 0.5 * h_try);
            let err = (two - full).abs() / 15.0;
            if !two.is_finite() || err > REL_TOL * two.abs().max(f64::MIN_POSITIVE) {
                rejections += 1;
                h = 0.5 * h_try;
                continue;
            }
            let s_new = if h_try == s - seg.t0 { seg.t0 } else { s - h_try };
            let mut v_new = two;
            let mut phi_new = phi_int;
            if let Form::Centered = form {
                let (a, m, b) = (seg.value_at(s), seg.value_at(s - 0.5 * h_try), seg.value_at(s_new));
                phi_new += h_try / 6.0 * (phi_at(a) + 4.0 * phi_at(m) + phi_at(b));
                let lower = lambda * (-phi_new).exp();
                let slack = INVARIANT_TOL * lambda;
                let bad = v_new > v + slack || v_new > lambda + slack || v_new < lower - slack;
                if bad {
                    rejections += 1;
                    if h_try <= 1e-10 {
                        return Err(Error::InvariantViolation(format!(
                            "v = {v_new} at s = {s_new} outside [{lower}, min({v}, {lambda})]"
                        )));
                    }
                    h = 0.5 * h_try;
                    continue;
                }
                v_new = v_new.min(v).min(lambda).max(lower);
            }
            v = v_new;
            phi_int = phi_new;
            s = s_new;
            steps += 1;
            max_step = max_step.max(h_try);
            s_rev.push(s);
            v_rev.push(v);
            k_rev.push(seg.value_at(s));
            h = (2.0 * h_try).min(h_nom);
        }
    }
    s_rev.reverse();
    v_rev.reverse();
    k_rev.reverse();
    Ok(VSolution { path, t, lambda, s: s_rev, v: v_rev, k: k_rev, max_step, steps, rejections })
}

/// `E[exp(-λ Z_t e^{-K_t}) | K]` for a process started at `z`.
///
/// The immigration integral uses the trapezoid rule on the grid of `v`.
pub fn conditional_laplace(
    path: &EnvironmentPath,
    z: f64,
    lambda: f64,
    t: f64,
    mech: &BranchingMechanism,
    imm: &ImmigrationMechanism,
) -> Result<f64> {
    ensure(z >= 0.0 && z.is_finite(), "z", "must be non-negative")?;
    let sol = solve_v(path, t, lambda, mech)?;
    let mut exponent = z * sol.initial();
    if !imm.is_zero() {
        let f: Vec<f64> = sol.v.iter().zip(&sol.k).map(|(v, k)| imm.phi(v * (-k).exp())).collect();
        for i in 1..sol.s.len() {
            exponent += 0.5 * (sol.s[i] - sol.s[i - 1]) * (f[i] + f[i - 1]);
        }
    }
    Ok((-exponent).exp())
}

fn require_k0(path: &EnvironmentPath) -> Result<()> {
    match path.variant() {
        Variant::K0 | Variant::S => Ok(()),
        Variant::K => Err(Error::PathMismatch("closed forms take the K0 path".into())),
    }
}

/// `v_t(s, λ)` for the Neveu mechanism `ψ(u) = u ln u`.
pub fn neveu_v(path: &EnvironmentPath, t: f64, lambda: f64, s: f64) -> Result<f64> {
    require_k0(path)?;
    ensure(lambda > 0.0 && lambda.is_finite(), "lambda", "must be positive")?;
    ensure(s >= 0.0 && s <= t && t <= path.horizon() + 1e-12, "s", "need 0 ≤ s ≤ t ≤ horizon")?;
    let inner = discounted_integral(path, s, t) + (-t).exp() * lambda.ln();
    Ok((s.exp() * inner).exp())
}

/// `E[exp(-λ Z_t e^{-K⁰_t}) | K⁰]` for the Neveu process started at `z`.
pub fn neveu_laplace(z: f64, lambda: f64, path: &EnvironmentPath, t: f64) -> Result<f64> {
    ensure(z >= 0.0, "z", "must be non-negative")?;
    Ok((-z * neveu_v(path, t, lambda, 0.0)?).exp())
}

/// Monte Carlo value of `P_z(Z_t e^{-K⁰_t} → 0)` for the Neveu process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeveuExtinction {
    pub estimate: MCEstimate,
    /// `e^{-T} · sqrt(E[K⁰_T²])`, which bounds `e^{-T} E|K⁰_T|`.
    pub truncation_bound: f64,
}

/// Estimates `E[exp(-z e^Y)]` with `Y = ∫_0^T e^{-s} dK⁰_s`.
///
/// `Y` is evaluated per sampled path as `e^{-T} K⁰_T + ∫_0^T e^{-s} K⁰_s ds`.
pub fn neveu_extinction(
    z: f64,
    env_k0: &LevyTriplet,
    t_trunc: f64,
    dt: f64,
    n_mc: usize,
    seed: u64,
) -> Result<NeveuExtinction> {
    ensure(z >= 0.0 && z.is_finite(), "z", "must be non-negative")?;
    ensure(n_mc >= 2, "n_mc", "need at least two samples")?;
    let mean = env_k0.mean();
    let var = env_k0.variance();
    if !mean.is_finite() || !var.is_finite() {
        return Err(invalid("env", "E|K⁰_1| must be finite"));
    }
    let seeds = SeedStream::new(seed);
    const CHUNK: usize = 1024;
    let chunks: Vec<Accumulator> = (0..n_mc.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| -> Result<Accumulator> {
            let mut acc = Accumulator::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_mc) {
                let mut rng = seeds.rng("neveu", 0, i as u32);
                let path = sample_path(env_k0, t_trunc, dt, &mut rng)?;
                let y = (-t_trunc).exp() * path.terminal() + discounted_integral(&path, 0.0, t_trunc);
                acc.push((-z * y.exp()).exp());
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut all = Accumulator::new();
    chunks.iter().for_each(|a| all.merge(a));
    let second = var * t_trunc + (mean * t_trunc).powi(2);
    Ok(NeveuExtinction { estimate: all.estimate()?, truncation_bound: (-t_trunc).exp() * second.sqrt() })
}

fn check_stable(alpha: f64, c: f64) -> Result<()> {
    ensure(alpha > 0.0 && alpha <= 2.0 && alpha != 1.0, "alpha", "must lie in (0,1) ∪ (1,2]")?;
    ensure(c * (alpha - 1.0) > 0.0, "c", "need c(α - 1) > 0")
}

/// `v_t(s, λ)` for `ψ(λ) = c λ^α`.
pub fn stable_v(path: &EnvironmentPath, t: f64, s: f64, lambda: f64, alpha: f64, c: f64) -> Result<f64> {
    require_k0(path)?;
    check_stable(alpha, c)?;
    ensure(lambda > 0.0, "lambda", "must be positive")?;
    ensure(s >= 0.0 && s <= t && t <= path.horizon() + 1e-12, "s", "need 0 ≤ s ≤ t ≤ horizon")?;
    let b = alpha - 1.0;
    let base = lambda.powf(-b) + b * c * exp_integral_between(path, -b, s, t);
    Ok(base.powf(-1.0 / b))
}

/// Survival and non-explosion probabilities at time `t` for the stable
/// family, conditional on the path.
pub fn stable_probs(z: f64, path: &EnvironmentPath, t: f64, alpha: f64, c: f64) -> Result<(f64, f64)> {
    require_k0(path)?;
    check_stable(alpha, c)?;
    ensure(z >= 0.0, "z", "must be non-negative")?;
    ensure(t > 0.0 && t <= path.horizon() + 1e-12, "t", "must lie in (0, horizon]")?;
    let b = alpha - 1.0;
    let limit = (b * c * exp_integral_between(path, -b, 0.0, t)).powf(-1.0 / b);
    let p = (-z * limit).exp();
    Ok(if alpha > 1.0 { (1.0 - p, 1.0) } else { (1.0, p) })
}

/// One environment in a comparison of simulated and computed Laplace values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityRow {
    pub env_id: usize,
    pub mc: f64,
    pub closed_form: f64,
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    /// Share of environments with `|mc - closed_form| ≤ k·se`.
    pub fn fraction_within(&self, k: f64) -> f64 {
        let ok = self.rows.iter().filter(|r| (r.mc - r.closed_form).abs() <= k * r.se).count();
        ok as f64 / self.rows.len() as f64
    }

    /// Mean of `|mc - closed_form| / closed_form` over environments.
    pub fn relative_mad(&self) -> f64 {
        self.rows.iter().map(|r| (r.mc - r.closed_form).abs() / r.closed_form).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean deviation divided by its standard error, from the per-env
    /// standard errors.
    pub fn pooled_z(&self) -> f64 {
        let n = self.rows.len() as f64;
        let dev = self.rows.iter().map(|r| r.mc - r.closed_form).sum::<f64>() / n;
        let se = self.rows.iter().map(|r| r.se * r.se).sum::<f64>().sqrt() / n;
        dev / se
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "env_id,mc,closed_form,se")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.env_id, r.mc, r.closed_form, r.se)?;
        }
        Ok(())
    }
}

/// Compares `e^{-λ Z_t e^{-K_t}}` averaged over branching replicates with
/// [`conditional_laplace`] on `n_env` sampled environments.
///
/// Uses the same seed streams as [`crate::sde::simulate_ensemble`].
pub fn identity_check(
    cfg: &CBLREConfig,
    lambda: f64,
    n_env: usize,
    n_branch: usize,
    seeds: SeedStream,
) -> Result<IdentityReport> {
    cfg.validate()?;
    ensure(n_branch >= 2, "n_branch", "need at least two replicates")?;
    let slope = cfg.mech.psi_prime0().filter(|_| cfg.mech.satisfies_h()).ok_or(Error::HypothesisH)?;
    let t = cfg.horizon;
    let rows = (0..n_env)
        .into_par_iter()
        .map(|i| -> Result<IdentityRow> {
            let mut env_rng = seeds.rng("env", i as u32, 0);
            let path = sample_path(&cfg.env, t, cfg.dt, &mut env_rng)?;
            let k = path.to_variant(Variant::K, slope)?;
            let closed_form = conditional_laplace(&k, cfg.z0, lambda, t, &cfg.mech, &cfg.imm)?;
            let discount = (-k.terminal()).exp();
            let mut acc = Accumulator::new();
            for j in 0..n_branch {
                let mut rng = seeds.rng("branch", i as u32, j as u32);
                let end = simulate_terminal(cfg, &path, &mut rng)?;
                acc.push(if end.is_finite() { (-lambda * end.value * discount).exp() } else { 0.0 });
            }
            let est = acc.estimate()?;
            Ok(IdentityRow { env_id: i, mc: est.mean, closed_form, se: est.se })
        })
        .collect::<Result<_>>()?;
    Ok(IdentityReport { rows })
}
