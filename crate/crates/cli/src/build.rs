//! Domain objects from configuration keys.

use cblre::levy::{JumpComponent, JumpLaw, LevyTriplet, PowerLawJumps, Side, Variant};
use cblre::mechanisms::{BranchingMechanism, ImmigrationMechanism, PositiveMeasure};
use cblre::sde::{CBLREConfig, Competition, CutMode, FellerStep, SmallJumpMode};

use crate::config::Config;
use crate::{within, CliError};

fn measure(cfg: &Config, prefix: &str) -> Result<PositiveMeasure, CliError> {
    let key = |f: &str| format!("{prefix}.{f}");
    let kind: String = cfg.req(&key("kind"))?;
    let m = match kind.as_str() {
        "atom" => PositiveMeasure::Atom { at: cfg.req(&key("at"))?, mass: cfg.req(&key("mass"))? },
        "exp" => PositiveMeasure::Exponential { mass: cfg.req(&key("mass"))?, mean: cfg.req(&key("mean"))? },
        "power" => PositiveMeasure::PowerLaw {
            scale: cfg.req(&key("scale"))?,
            exponent: cfg.req(&key("exponent"))?,
            temper: cfg.or(&key("temper"), 0.0)?,
            lo: cfg.or(&key("lo"), 0.0)?,
            hi: cfg.or(&key("hi"), f64::INFINITY)?,
        },
        other => return Err(CliError::Validation(format!("{}: unknown kind {other:?}", key("kind")))),
    };
    within(prefix, m.validate())?;
    Ok(m)
}

fn measures(cfg: &Config, prefix: &str) -> Result<Vec<PositiveMeasure>, CliError> {
    cfg.indices(prefix)?.into_iter().map(|i| measure(cfg, &format!("{prefix}.{i}"))).collect()
}

pub fn mechanism(cfg: &Config) -> Result<BranchingMechanism, CliError> {
    let family: String = cfg.or("mech.family", "feller".to_string())?;
    let m = match family.as_str() {
        "feller" => BranchingMechanism::feller(cfg.or("mech.a", 0.0)?, cfg.req("mech.gamma2")?),
        "stable" => BranchingMechanism::stable(cfg.req("mech.alpha")?, cfg.req("mech.c")?),
        "neveu" => BranchingMechanism::neveu(),
        "general" => BranchingMechanism::new(
            cfg.or("mech.a", 0.0)?,
            cfg.or("mech.gamma2", 0.0)?,
            measures(cfg, "mech.mu")?,
            cfg.or("mech.q", 0.0)?,
        ),
        other => return Err(CliError::Validation(format!("mech.family: unknown family {other:?}"))),
    };
    within("mech", m)
}

pub fn immigration(cfg: &Config) -> Result<ImmigrationMechanism, CliError> {
    within("imm", ImmigrationMechanism::new(cfg.or("imm.d", 0.0)?, measures(cfg, "imm.nu")?))
}

fn jump(cfg: &Config, i: usize) -> Result<JumpComponent, CliError> {
    let key = |f: &str| format!("jumps.{i}.{f}");
    let kind: String = cfg.req(&key("kind"))?;
    let c = match kind.as_str() {
        "cp" => {
            let law: String = cfg.req(&key("law"))?;
            let law = within(&key("law"), JumpLaw::parse(&law))?;
            JumpComponent::compound_poisson(cfg.req(&key("rate"))?, law)
        }
        "power" => {
            let side = match cfg.or(&key("side"), "positive".to_string())?.as_str() {
                "positive" => Side::Positive,
                "negative" => Side::Negative,
                other => return Err(CliError::Validation(format!("{}: unknown side {other:?}", key("side")))),
            };
            PowerLawJumps::new(
                cfg.req(&key("scale"))?,
                cfg.req(&key("index"))?,
                cfg.or(&key("temper"), 0.0)?,
                cfg.or(&key("eps"), 1e-3)?,
                side,
                cfg.or(&key("compensated"), true)?,
            )
            .map(JumpComponent::PowerLaw)
        }
        other => return Err(CliError::Validation(format!("{}: unknown kind {other:?}", key("kind")))),
    };
    within(&format!("jumps.{i}"), c)
}

pub fn variant(cfg: &Config, default: Variant) -> Result<Variant, CliError> {
    match cfg.raw("env.variant") {
        None => Ok(default),
        Some("S") => Ok(Variant::S),
        Some("K") => Ok(Variant::K),
        Some("K0") => Ok(Variant::K0),
        Some(other) => Err(CliError::Validation(format!("env.variant: expected S, K or K0, got {other:?}"))),
    }
}

/// The environment. `env.alpha` builds it from the coefficients of `S`;
/// otherwise `env.drift` is the drift of the chosen variant directly.
pub fn environment(cfg: &Config, default: Variant, psi_prime0: Option<f64>) -> Result<LevyTriplet, CliError> {
    let variant = variant(cfg, default)?;
    let sigma = cfg.or("env.sigma", 0.0)?;
    let jumps = cfg.indices("jumps")?.into_iter().map(|i| jump(cfg, i)).collect::<Result<Vec<_>, _>>()?;
    let mut t = match (cfg.get::<f64>("env.alpha")?, cfg.has("env.drift")) {
        (Some(_), true) => return Err(CliError::Validation("env.alpha and env.drift are exclusive".into())),
        (Some(alpha), false) => within("env", LevyTriplet::make_environment(alpha, sigma, jumps, variant, psi_prime0))?,
        (None, _) => within("env", LevyTriplet::new(cfg.or("env.drift", 0.0)?, sigma, jumps, variant))?,
    };
    t.small_jump_gaussian = cfg.or("env.small_jump_gaussian", false)?;
    Ok(t)
}

pub fn simulation(cfg: &Config) -> Result<CBLREConfig, CliError> {
    let mech = mechanism(cfg)?;
    let env = environment(cfg, Variant::S, None)?;
    if env.variant != Variant::S {
        return Err(CliError::Validation("env.variant must be S for simulation".into()));
    }
    let mut c =
        CBLREConfig::new(cfg.or("sim.z0", 1.0)?, mech, env, cfg.or("sim.horizon", 1.0)?, cfg.or("sim.dt", 1e-3)?);
    c.imm = immigration(cfg)?;
    c.delta = cfg.or("sim.delta", c.delta)?;
    c.z_max = cfg.or("sim.z_max", c.z_max)?;
    c.small_jumps = match cfg.or("sim.small_jumps", "drift".to_string())?.as_str() {
        "drift" => SmallJumpMode::DriftOnly,
        "gaussian" => SmallJumpMode::GaussianCorrection,
        other => return Err(CliError::Validation(format!("sim.small_jumps: unknown mode {other:?}"))),
    };
    c.cut_mode = match cfg.or("sim.cut", "fixed".to_string())?.as_str() {
        "fixed" => CutMode::Fixed,
        "relative" => CutMode::Relative,
        other => return Err(CliError::Validation(format!("sim.cut: unknown mode {other:?}"))),
    };
    c.feller_step = match cfg.or("sim.feller_step", "euler".to_string())?.as_str() {
        "euler" => FellerStep::Euler,
        "exact" => FellerStep::Exact,
        other => return Err(CliError::Validation(format!("sim.feller_step: unknown scheme {other:?}"))),
    };
    c.beta = match cfg.or("sim.beta", "none".to_string())?.as_str() {
        "none" => Competition::None,
        "quadratic" => Competition::Quadratic(cfg.positive("sim.k", None)?),
        other => return Err(CliError::Validation(format!("sim.beta: unknown kind {other:?}"))),
    };
    within("sim", c.validate())?;
    Ok(c)
}
