//! One function per experiment kind. Each reads its keys, validates them
//! all, checks for unknown keys, and only then computes.

use std::io::Write;

use cblre::asymptotics::{classify, clt_check};
use cblre::laplace::{identity_check, neveu_extinction, neveu_v, solve_v, stable_probs, IdentityReport, IdentityRow};
use cblre::levy::{sample_path, EnvironmentPath, LevyTriplet, Variant};
use cblre::logistic::{exact_solution, first_passage_laplace, stationary_moment, time_average, PassageConfig};
use cblre::mc::{stream_accumulate, SeedStream};
use cblre::mechanisms::{check_hypotheses, BranchingMechanism};
use cblre::sde::{simulate, simulate_ensemble};
use rayon::prelude::*;

use crate::build;
use crate::config::Config;
use crate::{within, CliError, Output};

pub const KINDS: [&str; 9] =
    ["sample-env", "simulate", "verify-laplace", "neveu", "stable", "logistic", "passage", "clt", "classify"];

pub fn run(kind: &str, cfg: &Config, seed: u64) -> Result<Output, CliError> {
    let seeds = SeedStream::new(seed);
    match kind {
        "sample-env" => sample_env(cfg, seeds),
        "simulate" => simulate_run(cfg, seeds),
        "verify-laplace" => verify_laplace(cfg, seeds),
        "neveu" => neveu(cfg, seeds),
        "stable" => stable(cfg, seeds),
        "logistic" => logistic(cfg, seeds),
        "passage" => passage(cfg, seed),
        "clt" => clt(cfg, seeds),
        "classify" => classify_run(cfg),
        other => Err(CliError::Validation(format!(
            "experiment: unknown kind {other:?} (expected one of {})",
            KINDS.join(", ")
        ))),
    }
}

fn count(cfg: &Config, key: &str, default: usize, min: usize) -> Result<usize, CliError> {
    let n = cfg.or(key, default)?;
    if n < min {
        return Err(CliError::Validation(format!("{key} must be at least {min}")));
    }
    Ok(n)
}

/// `ψ'(0+)` when the config describes a mechanism; needed for `env.alpha`
/// with a K environment.
fn slope_if_mechanism(cfg: &Config) -> Result<Option<f64>, CliError> {
    if cfg.has("mech.family") || cfg.has("mech.gamma2") {
        Ok(build::mechanism(cfg)?.psi_prime0())
    } else {
        Ok(None)
    }
}

fn env_path(
    env: &LevyTriplet,
    horizon: f64,
    dt: f64,
    seeds: SeedStream,
    i: usize,
) -> Result<EnvironmentPath, CliError> {
    within("env", sample_path(env, horizon, dt, &mut seeds.rng("env", i as u32, 0)))
}

fn sample_env(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let slope = slope_if_mechanism(cfg)?;
    let env = build::environment(cfg, Variant::S, slope)?;
    let horizon = cfg.positive("sim.horizon", Some(1.0))?;
    let dt = cfg.positive("sim.dt", Some(1e-3))?;
    cfg.finish("sample-env")?;
    let path = env_path(&env, horizon, dt, seeds, 0)?;
    let mut out = Output::default();
    out.file("env.csv", |w| path.write_csv(w))?;
    out.put("variant", format!("{:?}", env.variant));
    out.put("nodes", path.len());
    out.put("jumps", path.jump_events().count());
    out.put("terminal", path.terminal());
    Ok(out)
}

fn simulate_run(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let sim = build::simulation(cfg)?;
    let n_env = count(cfg, "mc.n_env", 1, 1)?;
    let n_branch = count(cfg, "mc.n_branch", 1, 1)?;
    cfg.finish("simulate")?;
    let path = env_path(&sim.env, sim.horizon, sim.dt, seeds, 0)?;
    let traj = within("sim", simulate(&sim, &path, &mut seeds.rng("branch", 0, 0)))?;
    let mut out = Output::default();
    out.file("trajectory.csv", |w| traj.write_csv(w))?;
    let end = traj.terminal();
    out.put("terminal", end.value);
    out.put("status", format!("{:?}", end.status));
    if n_env * n_branch >= 2 {
        let res = within("sim", simulate_ensemble(&sim, n_env, n_branch, seeds, |_, _, t| t.value))?;
        out.file("ensemble.csv", |w| {
            writeln!(w, "env_id,n,estimate,se")?;
            for (i, acc) in res.per_env.iter().enumerate() {
                let se = if acc.count() >= 2 { (acc.sample_variance() / acc.count() as f64).sqrt() } else { f64::NAN };
                writeln!(w, "{i},{},{},{se}", acc.count(), acc.mean())?;
            }
            Ok(())
        })?;
        let all = within("mc", res.all.estimate())?;
        out.put("n_env", n_env);
        out.put("n_branch", n_branch);
        out.put("mean_terminal", all.mean);
        out.put("se_terminal", all.se);
    }
    Ok(out)
}

fn verify_laplace(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let sim = build::simulation(cfg)?;
    let lambda: f64 = cfg.or("laplace.lambda", 1.0)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CliError::Validation("laplace.lambda must be >= 0".into()));
    }
    let n_env = count(cfg, "mc.n_env", 200, 1)?;
    let n_branch = count(cfg, "mc.n_branch", 2000, 2)?;
    let max_mad: f64 = cfg.or("laplace.max_rel_dev", 0.02)?;
    let min_within: f64 = cfg.or("laplace.min_within", 0.95)?;
    cfg.finish("verify-laplace")?;
    let report = within("laplace", identity_check(&sim, lambda, n_env, n_branch, seeds))?;
    let within3 = report.fraction_within(3.0);
    let mad = report.relative_mad();
    let mut out = Output::default();
    out.file("identity.csv", |w| report.write_csv(w))?;
    out.put("n_env", n_env);
    out.put("n_branch", n_branch);
    out.put("lambda", lambda);
    out.put("fraction_within_3se", within3);
    out.put("mean_abs_rel_dev", mad);
    out.put("pooled_z", report.pooled_z());
    out.put("pass", within3 >= min_within && mad <= max_mad);
    Ok(out)
}

fn lambdas(cfg: &Config, key: &str) -> Result<Vec<f64>, CliError> {
    let l = cfg.list(key)?.unwrap_or_else(|| vec![1.0]);
    if l.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(CliError::Validation(format!("{key} must be > 0")));
    }
    Ok(l)
}

/// Largest gap between a closed form and the ODE solution over its grid.
fn sup_gap(
    path: &EnvironmentPath,
    t: f64,
    lambda: f64,
    mech: &BranchingMechanism,
    closed: impl Fn(f64) -> cblre::Result<f64>,
    rows: &mut Vec<(f64, f64, f64, f64)>,
) -> Result<f64, CliError> {
    let sol = within("laplace", solve_v(path, t, lambda, mech))?;
    let mut sup = 0.0f64;
    for (i, (&s, &v)) in sol.s.iter().zip(&sol.v).enumerate() {
        if i > 0 && sol.s[i - 1] == s {
            continue;
        }
        let c = within("laplace", closed(s))?;
        sup = sup.max((c - v).abs());
        rows.push((lambda, s, c, v));
    }
    Ok(sup)
}

fn write_gaps(w: &mut Vec<u8>, rows: &[(f64, f64, f64, f64)]) -> std::io::Result<()> {
    writeln!(w, "lambda,s,closed_form,ode,abs_diff")?;
    for (l, s, c, v) in rows {
        writeln!(w, "{l},{s},{c},{v},{}", (c - v).abs())?;
    }
    Ok(())
}

fn neveu(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let env = build::environment(cfg, Variant::K0, None)?;
    if env.variant != Variant::K0 {
        return Err(CliError::Validation("env.variant must be K0 for neveu".into()));
    }
    let t = cfg.positive("neveu.t", Some(1.0))?;
    let dt = cfg.positive("sim.dt", Some(1e-3))?;
    let z: f64 = cfg.or("neveu.z", 1.0)?;
    let lambdas = lambdas(cfg, "neveu.lambda")?;
    let n_mc = cfg.or("neveu.n_mc", 0usize)?;
    let t_trunc = cfg.positive("neveu.t_trunc", Some(30.0))?;
    let mc_dt = cfg.positive("neveu.mc_dt", Some(0.01))?;
    cfg.finish("neveu")?;
    let mech = within("mech", BranchingMechanism::neveu())?;
    let path = env_path(&env, t, dt, seeds, 0)?;
    let mut out = Output::default();
    let mut rows = Vec::new();
    let mut sup = 0.0f64;
    for &l in &lambdas {
        sup = sup.max(sup_gap(&path, t, l, &mech, |s| neveu_v(&path, t, l, s), &mut rows)?);
        let v0 = within("neveu", neveu_v(&path, t, l, 0.0))?;
        out.put(&format!("laplace_lambda_{l}"), (-z * v0).exp());
    }
    out.file("neveu_v.csv", |w| write_gaps(w, &rows))?;
    out.put("sup_abs_diff", sup);
    if n_mc > 0 {
        let ext = within("neveu", neveu_extinction(z, &env, t_trunc, mc_dt, n_mc, seeds.master()))?;
        out.put("extinction_estimate", ext.estimate.mean);
        out.put("extinction_se", ext.estimate.se);
        out.put("truncation_bound", ext.truncation_bound);
    }
    Ok(out)
}

fn stable(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let sim = build::simulation(cfg)?;
    let (alpha, c) = match sim.mech.family {
        cblre::mechanisms::Family::Stable { alpha, c } => (alpha, c),
        _ => return Err(CliError::Validation("mech.family must be stable".into())),
    };
    let n_env = count(cfg, "mc.n_env", 50, 1)?;
    let n_branch = count(cfg, "mc.n_branch", 2000, 2)?;
    let check = cfg.list("stable.lambda")?;
    cfg.finish("stable")?;
    let t = sim.horizon;
    let mut out = Output::default();
    let res =
        within("sim", simulate_ensemble(&sim, n_env, n_branch, seeds, |_, _, e| f64::from(u8::from(e.is_positive()))))?;
    let rows = (0..n_env)
        .into_par_iter()
        .map(|i| {
            let path = env_path(&sim.env, t, sim.dt, seeds, i)?;
            let (surv, nonexp) = within("stable", stable_probs(sim.z0, &path, t, alpha, c))?;
            Ok((surv, nonexp))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = IdentityReport {
        rows: rows
            .iter()
            .zip(&res.per_env)
            .enumerate()
            .map(|(i, ((surv, _), acc))| IdentityRow {
                env_id: i,
                mc: acc.mean(),
                closed_form: *surv,
                se: (acc.sample_variance() / acc.count() as f64).sqrt(),
            })
            .collect(),
    };
    out.file("stable.csv", |w| {
        writeln!(w, "env_id,survival,non_explosion,mc_survival,se")?;
        for (r, (_, nonexp)) in report.rows.iter().zip(&rows) {
            writeln!(w, "{},{},{nonexp},{},{}", r.env_id, r.closed_form, r.mc, r.se)?;
        }
        Ok(())
    })?;
    let n = report.rows.len() as f64;
    out.put("mean_survival", report.rows.iter().map(|r| r.closed_form).sum::<f64>() / n);
    out.put("mean_mc_survival", report.rows.iter().map(|r| r.mc).sum::<f64>() / n);
    out.put("pooled_z", report.pooled_z());
    if let Some(ls) = check {
        let path = env_path(&sim.env, t, sim.dt, seeds, 0)?;
        let path = within("env", path.to_variant(Variant::K0, 0.0))?;
        let mut rows = Vec::new();
        let mut sup = 0.0f64;
        for l in ls {
            let f = |s| cblre::laplace::stable_v(&path, t, s, l, alpha, c);
            sup = sup.max(sup_gap(&path, t, l, &sim.mech, f, &mut rows)?);
        }
        out.file("stable_v.csv", |w| write_gaps(w, &rows))?;
        out.put("sup_abs_diff", sup);
    }
    Ok(out)
}

fn logistic(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let z0 = cfg.positive("logistic.z0", Some(1.0))?;
    let k = cfg.positive("logistic.k", None)?;
    let horizon = cfg.positive("logistic.horizon", Some(50.0))?;
    let dt = cfg.positive("logistic.dt", Some(1e-2))?;
    let env = build::environment(cfg, Variant::K, None)?;
    if env.variant != Variant::K {
        return Err(CliError::Validation("env.variant must be K for logistic".into()));
    }
    let n_paths = count(cfg, "mc.n_paths", 1, 1)?;
    let moments = cfg.or("logistic.moments", 2u32)?;
    cfg.finish("logistic")?;
    let ends = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = env_path(&env, horizon, dt, seeds, i)?;
            let traj = within("logistic", exact_solution(&path, z0, k))?;
            let avg = within("logistic", time_average(&path, z0, k))?;
            Ok((traj, avg))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = Output::default();
    out.file("trajectory.csv", |w| ends[0].0.write_csv(w))?;
    out.put("terminal", ends[0].0.terminal().value);
    out.put("time_average_target", env.mean().max(0.0) / k);
    if n_paths >= 2 {
        let avg = within("mc", stream_accumulate(ends.iter().map(|e| e.1)))?;
        out.put("time_average", avg.mean);
        out.put("time_average_se", avg.se);
        let mut rows = Vec::new();
        for n in 1..=moments {
            let Ok(formula) = stationary_moment(&env, k, n) else { break };
            let mc = within("mc", stream_accumulate(ends.iter().map(|e| e.0.terminal().value.powi(n as i32))))?;
            rows.push((n, formula, mc));
        }
        out.file("moments.csv", |w| {
            writeln!(w, "n,formula,mc,se,rel_err")?;
            for (n, f, mc) in &rows {
                writeln!(w, "{n},{f},{},{},{}", mc.mean, mc.se, (mc.mean - f).abs() / f)?;
            }
            Ok(())
        })?;
    }
    Ok(out)
}

fn passage(cfg: &Config, seed: u64) -> Result<Output, CliError> {
    let env = build::environment(cfg, Variant::K, None)?;
    let z = cfg.positive("passage.z", None)?;
    let b = cfg.positive("passage.b", None)?;
    let k = cfg.positive("passage.k", Some(1.0))?;
    let lambdas = lambdas(cfg, "passage.lambda")?;
    let d = PassageConfig::default();
    let pc = PassageConfig {
        n_formula: count(cfg, "passage.n_formula", d.n_formula, 2)?,
        n_direct: count(cfg, "passage.n_direct", d.n_direct, 2)?,
        dt: cfg.positive("passage.dt", Some(d.dt))?,
        chunk: cfg.positive("passage.chunk", Some(d.chunk))?,
        t_max: cfg.positive("passage.t_max", Some(d.t_max))?,
        seed,
    };
    cfg.finish("passage")?;
    let mut results = Vec::new();
    for l in lambdas {
        results.push((l, within("passage", first_passage_laplace(z, b, l, k, &env, &pc))?));
    }
    let mut out = Output::default();
    out.file("passage.csv", |w| {
        writeln!(w, "lambda,kappa,formula,formula_se,direct,direct_se,se,z_score,unresolved")?;
        for (l, r) in &results {
            let se = r.formula.se.hypot(r.direct.se);
            writeln!(
                w,
                "{l},{},{},{},{},{},{se},{},{}",
                r.kappa,
                r.formula.mean,
                r.formula.se,
                r.direct.mean,
                r.direct.se,
                r.z_score(),
                r.unresolved
            )?;
        }
        Ok(())
    })?;
    let worst = results.iter().map(|(_, r)| r.z_score().abs()).fold(0.0, f64::max);
    out.put("max_abs_z", worst);
    Ok(out)
}

fn clt(cfg: &Config, seeds: SeedStream) -> Result<Output, CliError> {
    let sim = build::simulation(cfg)?;
    let n_paths = count(cfg, "mc.n_paths", 2000, 2)?;
    cfg.finish("clt")?;
    let report = within("clt", clt_check(&sim, n_paths, seeds))?;
    let mut out = Output::default();
    out.file("clt.csv", |w| report.write_csv(w))?;
    out.put_lines("", &report.to_key_values());
    out.put("inconclusive", report.inconclusive());
    Ok(out)
}

fn classify_run(cfg: &Config) -> Result<Output, CliError> {
    let mech = build::mechanism(cfg)?;
    let env = build::environment(cfg, Variant::K, mech.psi_prime0())?;
    cfg.finish("classify")?;
    let mut out = Output::default();
    out.put_lines("hypotheses.", &check_hypotheses(&mech, &env).to_key_values());
    let report = within("classify", classify(&mech, &env))?;
    out.put_lines("", &report.to_key_values());
    Ok(out)
}
