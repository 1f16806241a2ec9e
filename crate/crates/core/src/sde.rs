//! Operator-split simulation of continuous-state branching processes with
//! immigration and competition in a multiplicative Lévy environment.
//!
//! Each step between consecutive environment nodes applies, in order: the
//! continuous branching part, compensated small branching jumps, large
//! branching jumps thinned at the left-limit state, immigration, the
//! competition drain, a clamp at zero, and finally the exact environment
//! factor `exp(ΔK0)`. The environment path stores the logarithm of the
//! stochastic exponential of `S`, so that factor includes every jump.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{ensure, invalid, Error, Result};
use crate::levy::{sample_path, EnvironmentPath, LevyTriplet, Variant};
use crate::mc::{pooled_conditional, Accumulator, Pooled, SeedStream};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism, PositiveMeasure};

/// Competition kill rate `β(z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Competition {
    None,
    Quadratic(f64),
    /// Piecewise-linear through `(z, β(z))` points, starting at `(0, 0)` and
    /// extended with the last slope.
    Tabulated(Vec<(f64, f64)>),
}

impl Competition {
    pub fn validate(&self) -> Result<()> {
        match self {
            Competition::None => Ok(()),
            Competition::Quadratic(k) => ensure(*k > 0.0 && k.is_finite(), "k", "must be > 0"),
            Competition::Tabulated(pts) => {
                ensure(!pts.is_empty(), "beta", "table needs at least one point")?;
                ensure(pts[0] == (0.0, 0.0), "beta", "table must start at (0, 0)")?;
                for w in pts.windows(2) {
                    ensure(w[1].0 > w[0].0, "beta", "table abscissae must increase")?;
                    ensure(w[1].1 >= w[0].1, "beta", "β must be non-decreasing")?;
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Competition::None => 0.0,
            Competition::Quadratic(k) => k * z * z,
            Competition::Tabulated(pts) => {
                let i = pts.partition_point(|p| p.0 <= z);
                if pts.len() == 1 {
                    return 0.0;
                }
                let (a, b) =
                    if i >= pts.len() { (pts[pts.len() - 2], pts[pts.len() - 1]) } else { (pts[i - 1], pts[i]) };
                a.1 + (b.1 - a.1) * (z - a.0) / (b.0 - a.0)
            }
        }
    }
}

/// Treatment of compensated branching jumps below the cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallJumpMode {
    DriftOnly,
    GaussianCorrection,
}

/// How the branching jump cut is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    /// Always `delta`.
    Fixed,
    /// `delta · min(1, Z)`, which keeps the scheme scale-free near zero.
    Relative,
}

/// Scheme for the `aZ dt + sqrt(2γ²Z) dB` part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FellerStep {
    /// Euler–Maruyama with the state clamped at zero.
    Euler,
    /// Exact Poisson–Gamma transition of the Feller branching diffusion.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CBLREConfig {
    pub z0: f64,
    pub mech: BranchingMechanism,
    pub imm: ImmigrationMechanism,
    pub beta: Competition,
    /// Environment `S`, variant [`Variant::S`].
    pub env: LevyTriplet,
    pub horizon: f64,
    pub dt: f64,
    pub delta: f64,
    pub z_max: f64,
    pub small_jumps: SmallJumpMode,
    pub cut_mode: CutMode,
    pub feller_step: FellerStep,
}

impl CBLREConfig {
    pub fn new(z0: f64, mech: BranchingMechanism, env: LevyTriplet, horizon: f64, dt: f64) -> Self {
        CBLREConfig {
            z0,
            mech,
            imm: ImmigrationMechanism::none(),
            beta: Competition::None,
            env,
            horizon,
            dt,
            delta: 0.01,
            z_max: 1e12,
            small_jumps: SmallJumpMode::DriftOnly,
            cut_mode: CutMode::Fixed,
            feller_step: FellerStep::Euler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.z0 >= 0.0 && self.z0.is_finite(), "z0", "must be non-negative")?;
        ensure(self.delta > 0.0 && self.delta < 1.0, "delta", "must lie in (0, 1)")?;
        ensure(self.z_max > self.z0, "z_max", "must exceed z0")?;
        ensure(self.horizon > 0.0 && self.horizon.is_finite(), "horizon", "must be positive")?;
        ensure(self.dt > 0.0 && self.dt <= self.horizon, "dt", "must lie in (0, horizon]")?;
        if self.env.variant != Variant::S {
            return Err(invalid("env", "the simulator is driven by the S variant"));
        }
        self.beta.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplosionCause {
    /// The state passed the numerical cap.
    Cap,
    /// A jump of infinite size from the killing mass `q`.
    KillingAtom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Alive,
    Absorbed { at: f64 },
    Exploded { at: f64, cause: ExplosionCause },
}

/// State at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub value: f64,
    pub status: Status,
}

impl Terminal {
    pub fn is_positive(&self) -> bool {
        match self.status {
            Status::Exploded { .. } => true,
            _ => self.value > 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self.status, Status::Exploded { .. })
    }
}

/// A simulated path. After explosion the value is reported as infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub status: Status,
}

impl Trajectory {
    pub fn terminal(&self) -> Terminal {
        Terminal { value: *self.values.last().expect("non-empty"), status: self.status }
    }

    /// Writes `time,Z,status` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,Z,status")?;
        for (t, z) in self.times.iter().zip(&self.values) {
            let status = match self.status {
                Status::Absorbed { at } if *t >= at => "absorbed",
                Status::Exploded { at, .. } if *t >= at => "exploded",
                _ => "alive",
            };
            writeln!(out, "{t},{z},{status}")?;
        }
        Ok(())
    }
}

struct JumpTable {
    cut: f64,
    mass: f64,
    weights: Vec<f64>,
    drift: f64,
    variance: f64,
}

fn jump_table(mech: &BranchingMechanism, cut: f64) -> JumpTable {
    if let [PositiveMeasure::PowerLaw { scale, exponent, temper, lo, hi }] = mech.mu[..] {
        if temper == 0.0 && lo == 0.0 && hi.is_infinite() && cut < 1.0 && exponent != 2.0 && exponent != 3.0 {
            // density s·x^{-e} on (0, ∞): one power serves all three integrals
            let p = scale * cut.powf(-exponent);
            return JumpTable {
                cut,
                mass: p * cut / (exponent - 1.0),
                weights: Vec::new(),
                drift: (scale - p * cut * cut) / (2.0 - exponent),
                variance: p * cut.powi(3) / (3.0 - exponent),
            };
        }
    }
    let weights: Vec<f64> = mech.mu.iter().map(|m| m.mass_above(cut)).collect();
    JumpTable {
        cut,
        mass: weights.iter().sum(),
        weights: if weights.len() > 1 { weights } else { Vec::new() },
        drift: mech.first_moment_between(cut, 1.0),
        variance: mech.second_moment_below(cut),
    }
}

struct Stepper<'a> {
    cfg: &'a CBLREConfig,
    fixed: JumpTable,
    imm_cut: f64,
    imm_table: Vec<f64>,
    imm_mass: f64,
    imm_drift: f64,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a CBLREConfig) -> Self {
        let fixed = jump_table(&cfg.mech, cfg.delta);
        let imm_cut = cfg.delta;
        let imm_table: Vec<f64> = cfg.imm.nu.iter().map(|m| m.mass_above(imm_cut)).collect();
        let imm_drift = cfg.imm.d + cfg.imm.nu.iter().map(|m| m.first_moment_between(0.0, imm_cut)).sum::<f64>();
        Stepper { cfg, imm_mass: imm_table.iter().sum(), fixed, imm_cut, imm_table, imm_drift }
    }

    fn feller<R: Rng + ?Sized>(&self, x: f64, h: f64, rng: &mut R) -> f64 {
        let a = self.cfg.mech.a;
        let g2 = self.cfg.mech.gamma2;
        match self.cfg.feller_step {
            FellerStep::Euler => {
                let mut y = x + a * x * h;
                if g2 > 0.0 {
                    let n: f64 = StandardNormal.sample(rng);
                    y += (2.0 * g2 * x.max(0.0) * h).sqrt() * n;
                }
                y
            }
            FellerStep::Exact => {
                if g2 == 0.0 {
                    return x * (a * h).exp();
                }
                if x <= 0.0 {
                    return 0.0;
                }
                let growth = (a * h).exp();
                let scale = if a.abs() * h < 1e-10 { g2 * h } else { g2 * (a * h).exp_m1() / a };
                let count = Poisson::new(x * growth / scale).expect("positive mean").sample(rng);
                if count == 0.0 {
                    0.0
                } else {
                    Gamma::new(count, scale).expect("positive shape").sample(rng)
                }
            }
        }
    }

    /// Advances the state over `h`; returns `Err(())` on a killing jump.
    fn branch<R: Rng + ?Sized>(&self, x: f64, h: f64, rng: &mut R) -> std::result::Result<f64, ()> {
        let cfg = self.cfg;
        let mech = &cfg.mech;
        let mut y = self.feller(x, h, rng);
        if !mech.mu.is_empty() && x > 0.0 {
            let relative;
            let table = match cfg.cut_mode {
                CutMode::Fixed => &self.fixed,
                CutMode::Relative => {
                    relative = jump_table(mech, cfg.delta * x.min(1.0));
                    &relative
                }
            };
            y -= x * h * table.drift;
            if cfg.small_jumps == SmallJumpMode::GaussianCorrection && table.variance > 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                y += (x * h * table.variance).sqrt() * n;
            }
            let intensity = x * h * table.mass;
            if intensity > 0.0 {
                let count = Poisson::new(intensity).expect("positive intensity").sample(rng) as u64;
                for _ in 0..count {
                    let k = pick(&table.weights, table.mass, rng);
                    y += mech.mu[k].sample_above(table.cut, rng);
                }
            }
        }
        if mech.q > 0.0 && x > 0.0 {
            let p = -(-mech.q * x * h).exp_m1();
            if rng.random::<f64>() < p {
                return Err(());
            }
        }
        if !cfg.imm.is_zero() {
            y += self.imm_drift * h;
            if self.imm_mass > 0.0 {
                let count = Poisson::new(self.imm_mass * h).expect("positive intensity").sample(rng) as u64;
                for _ in 0..count {
                    let k = pick(&self.imm_table, self.imm_mass, rng);
                    y += cfg.imm.nu[k].sample_above(self.imm_cut, rng);
                }
            }
        }
        y -= cfg.beta.eval(x) * h;
        Ok(y.max(0.0))
    }
}

fn pick<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    if weights.len() <= 1 {
        return 0;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn run<R: Rng + ?Sized>(
    cfg: &CBLREConfig,
    path: &EnvironmentPath,
    rng: &mut R,
    mut record: Option<&mut Trajectory>,
) -> Result<Terminal> {
    cfg.validate()?;
    path.check(Variant::S, cfg.horizon)?;
    let stepper = Stepper::new(cfg);
    let trap = cfg.imm.is_zero();
    let times = path.times();
    let values = path.values();
    let mut x = cfg.z0;
    if let Some(tr) = record.as_deref_mut() {
        tr.times.push(0.0);
        tr.values.push(x);
    }
    let mut status = Status::Alive;
    for i in 1..times.len() {
        let t = times[i];
        if x == 0.0 && trap {
            status = Status::Absorbed { at: times[i - 1] };
            break;
        }
        let h = t - times[i - 1];
        let next = match stepper.branch(x, h, rng) {
            Ok(y) => y * (values[i] - values[i - 1]).exp(),
            Err(()) => {
                status = Status::Exploded { at: t, cause: ExplosionCause::KillingAtom };
                break;
            }
        };
        if next.is_nan() {
            return Err(Error::NonFinite(format!("state became NaN at t = {t} (previous value {x})")));
        }
        if next > cfg.z_max {
            status = Status::Exploded { at: t, cause: ExplosionCause::Cap };
            break;
        }
        x = next;
        if let Some(tr) = record.as_deref_mut() {
            tr.times.push(t);
            tr.values.push(x);
        }
    }
    if let Status::Exploded { .. } = status {
        x = f64::INFINITY;
    }
    if let Some(tr) = record {
        // frozen after absorption or explosion
        let last = tr.times.len();
        for &t in &times[last..] {
            tr.times.push(t);
            tr.values.push(x);
        }
        tr.status = status;
    }
    Ok(Terminal { value: x, status })
}

/// Simulates one trajectory on a sampled environment path.
pub fn simulate<R: Rng + ?Sized>(cfg: &CBLREConfig, path: &EnvironmentPath, rng: &mut R) -> Result<Trajectory> {
    let mut tr = Trajectory {
        times: Vec::with_capacity(path.len()),
        values: Vec::with_capacity(path.len()),
        status: Status::Alive,
    };
    run(cfg, path, rng, Some(&mut tr))?;
    Ok(tr)
}

/// Like [`simulate`] but keeps only the final state.
pub fn simulate_terminal<R: Rng + ?Sized>(cfg: &CBLREConfig, path: &EnvironmentPath, rng: &mut R) -> Result<Terminal> {
    run(cfg, path, rng, None)
}

/// [`simulate`] with the branching generator derived from `seed`.
pub fn simulate_seeded(cfg: &CBLREConfig, path: &EnvironmentPath, seed: u64) -> Result<Trajectory> {
    let mut rng: ChaCha8Rng = SeedStream::new(seed).rng("branch", 0, 0);
    simulate(cfg, path, &mut rng)
}

/// Per-environment and pooled summaries of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub per_env: Vec<Accumulator>,
    pub pooled: Option<Pooled>,
    pub all: Accumulator,
}

/// Runs `n_branch` branching replicates on each of `n_env` environment paths.
///
/// `reducer` maps `(env index, environment path, final state)` to the
/// quantity being averaged. Environment `i` uses stream `("env", i, 0)` and
/// replicate `j` on it uses `("branch", i, j)`, so results do not depend on
/// scheduling.
pub fn simulate_ensemble<F>(
    cfg: &CBLREConfig,
    n_env: usize,
    n_branch: usize,
    seeds: SeedStream,
    reducer: F,
) -> Result<EnsembleResult>
where
    F: Fn(usize, &EnvironmentPath, &Terminal) -> f64 + Sync,
{
    ensure(n_env >= 1, "n_env", "must be at least 1")?;
    ensure(n_branch >= 1, "n_branch", "must be at least 1")?;
    cfg.validate()?;
    let per_env: Vec<Accumulator> = (0..n_env)
        .into_par_iter()
        .map(|i| -> Result<Accumulator> {
            let mut env_rng = seeds.rng("env", i as u32, 0);
            let path = sample_path(&cfg.env, cfg.horizon, cfg.dt, &mut env_rng)?;
            let mut acc = Accumulator::new();
            for j in 0..n_branch {
                let mut rng = seeds.rng("branch", i as u32, j as u32);
                let end = simulate_terminal(cfg, &path, &mut rng)?;
                acc.push(reducer(i, &path, &end));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut all = Accumulator::new();
    for acc in &per_env {
        all.merge(acc);
    }
    let pooled = if n_env >= 2 { Some(pooled_conditional(&per_env)?) } else { None };
    Ok(EnsembleResult { per_env, pooled, all })
}
