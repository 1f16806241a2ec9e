//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr,
//! bypassing the harness capture, and then asserts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cblre::asymptotics::{clt_check, fraction_below, terminal_states};
use cblre::laplace::{neveu_v, solve_v, stable_probs, stable_v};
use cblre::levy::{sample_path, sample_path_seeded, EnvironmentPath, JumpComponent, JumpLaw, LevyTriplet, Variant};
use cblre::logistic::{
    exact_solution, first_passage_laplace, stationary_moment, time_average, LogisticConfig, PassageConfig,
};
use cblre::mc::{stream_accumulate, SeedStream};
use cblre::mechanisms::{check_hypotheses, BranchingMechanism};
use cblre::sde::{simulate_ensemble, simulate_seeded, CBLREConfig, CutMode, SmallJumpMode};
use cblre_cli::{run, RunOptions, EXIT_OK};

fn report(id: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{id}] {verdict} {detail}");
    assert!(pass, "{id}: {detail}");
}

fn run_config(dir: &Path, name: &str, text: &str) -> BTreeMap<String, String> {
    let config = dir.join(format!("{name}.conf"));
    fs::write(&config, text).unwrap();
    let out = dir.join(name);
    let opts = RunOptions { config, out: out.clone(), seed: None, verbose: false };
    assert_eq!(run(&opts), EXIT_OK, "{name} did not exit cleanly");
    fs::read_to_string(out.join("summary.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn cp(rate: f64, law: JumpLaw) -> JumpComponent {
    JumpComponent::compound_poisson(rate, law).unwrap()
}

/// Ten seeded compound Poisson `K⁰` paths on `[0, 1]`.
fn cp_paths() -> Vec<EnvironmentPath> {
    let env = LevyTriplet::new(0.2, 0.0, vec![cp(2.0, JumpLaw::Normal { mean: 0.0, sd: 0.5 })], Variant::K0).unwrap();
    (0..10).map(|seed| sample_path_seeded(&env, 1.0, 1e-3, seed).unwrap()).collect()
}

fn sup_gap(path: &EnvironmentPath, lambda: f64, mech: &BranchingMechanism, closed: impl Fn(f64) -> f64) -> f64 {
    let sol = solve_v(path, 1.0, lambda, mech).unwrap();
    sol.s.iter().zip(&sol.v).map(|(&s, &v)| (closed(s) - v).abs()).fold(0.0, f64::max)
}

#[test]
fn c01_laplace_identity() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let summary = run_config(
        dir.path(),
        "identity",
        "experiment=verify-laplace\nseed=1\nmech.family=feller\nmech.a=0.2\nmech.gamma2=1\n\
         env.variant=S\nenv.sigma=0.3\njumps.0.kind=cp\njumps.0.rate=1\njumps.0.law=normal(0,0.2)\n\
         sim.z0=1\nsim.horizon=1\nsim.dt=1e-3\nlaplace.lambda=1\nmc.n_env=200\nmc.n_branch=2000\n",
    );
    let within: f64 = summary["fraction_within_3se"].parse().unwrap();
    let mad: f64 = summary["mean_abs_rel_dev"].parse().unwrap();
    let secs = start.elapsed().as_secs_f64();
    report(
        "C1 laplace identity",
        within >= 0.95 && mad <= 0.02 && secs <= 300.0,
        format!("within 3 SE {within:.3} (>= 0.95), mean abs rel dev {mad:.5} (<= 0.02), {secs:.1}s"),
    );
}

#[test]
fn c02_neveu_closed_form() {
    let mech = BranchingMechanism::neveu().unwrap();
    let mut sup = 0.0f64;
    for path in cp_paths() {
        for lambda in [0.5, 1.0, 4.0] {
            sup = sup.max(sup_gap(&path, lambda, &mech, |s| neveu_v(&path, 1.0, lambda, s).unwrap()));
        }
    }
    report("C2 neveu closed form", sup <= 1e-6, format!("sup |closed - ode| = {sup:.2e} (<= 1e-6)"));
}

#[test]
fn c03_stable_closed_form_and_survival() {
    let mech = BranchingMechanism::stable(1.5, 1.0).unwrap();
    let mut sup = 0.0f64;
    for path in cp_paths() {
        for lambda in [0.5, 1.0, 4.0] {
            sup = sup.max(sup_gap(&path, lambda, &mech, |s| stable_v(&path, 1.0, s, lambda, 1.5, 1.0).unwrap()));
        }
    }

    let env = LevyTriplet::new(0.1, 0.0, vec![cp(2.0, JumpLaw::Normal { mean: 0.0, sd: 0.5 })], Variant::S).unwrap();
    let mut cfg = CBLREConfig::new(0.5, mech, env, 1.0, 1e-4);
    cfg.small_jumps = SmallJumpMode::GaussianCorrection;
    cfg.cut_mode = CutMode::Relative;
    let seeds = SeedStream::new(7);
    let (n_env, n_branch) = (50, 2000);
    let res = simulate_ensemble(&cfg, n_env, n_branch, seeds, |_, _, e| f64::from(u8::from(e.is_positive()))).unwrap();
    let mut dev = 0.0;
    let mut var = 0.0;
    for (i, acc) in res.per_env.iter().enumerate() {
        let path = sample_path(&cfg.env, 1.0, cfg.dt, &mut seeds.rng("env", i as u32, 0)).unwrap();
        let (surv, _) = stable_probs(cfg.z0, &path, 1.0, 1.5, 1.0).unwrap();
        dev += acc.mean() - surv;
        var += acc.sample_variance() / acc.count() as f64;
    }
    let n = n_env as f64;
    let (dev, se) = (dev / n, var.sqrt() / n);
    report(
        "C3 stable closed form and survival",
        sup <= 1e-6 && dev.abs() <= 3.0 * se,
        format!("sup |closed - ode| = {sup:.2e} (<= 1e-6); survival MC - formula = {dev:.5}, pooled SE {se:.5} (|z| = {:.2} <= 3)", dev.abs() / se),
    );
}

#[test]
fn c04_logistic_strong_convergence() {
    let a = 0.5;
    let fine_dt = 1.25e-3 / 8.0;
    let env = LevyTriplet::new(0.5, 0.4, vec![cp(1.0, JumpLaw::Normal { mean: 0.0, sd: 0.2 })], Variant::K).unwrap();
    let lc = LogisticConfig { z0: 1.0, a, k: 1.0, env, horizon: 5.0, dt: fine_dt };
    let env_s = lc.env_s().unwrap();
    let factors = [64usize, 32, 16, 8];
    let mut ratios = Vec::new();
    let mut errors = vec![Vec::new(); factors.len()];
    for seed in 0..10u64 {
        let fine = sample_path_seeded(&env_s, lc.horizon, fine_dt, 100 + seed).unwrap();
        let exact = exact_solution(&fine.to_variant(Variant::K, -a).unwrap(), lc.z0, lc.k).unwrap();
        let mut errs = Vec::new();
        for (f, &factor) in factors.iter().enumerate() {
            let coarse = fine.coarsen(factor).unwrap();
            let mut cfg = lc.to_cblre().unwrap();
            cfg.dt = fine_dt * factor as f64;
            let euler = simulate_seeded(&cfg, &coarse, seed).unwrap();
            let err = euler
                .times
                .iter()
                .zip(&euler.values)
                .map(|(t, z)| {
                    let j = exact.times.partition_point(|x| x < t);
                    assert_eq!(exact.times[j], *t);
                    (z - exact.values[j]).abs()
                })
                .fold(0.0, f64::max);
            errors[f].push(err);
            errs.push(err);
        }
        ratios.push(errs[3] / errs[0]);
    }
    let quarter = ratios.iter().filter(|r| **r <= 0.25).count();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[4] + sorted[5]);
    let mean_err: Vec<String> =
        errors.iter().map(|e| format!("{:.2e}", e.iter().sum::<f64>() / e.len() as f64)).collect();
    report(
        "C4 logistic strong convergence",
        median <= 0.35 && quarter >= 8,
        format!(
            "median error ratio dt=1.25e-3 vs 1e-2: {median:.3} (<= 0.35); ratio <= 1/4 on {quarter}/10 seeds (>= 8); mean sup errors by dt [1e-2, 5e-3, 2.5e-3, 1.25e-3]: {}",
            mean_err.join(", ")
        ),
    );
}

#[test]
fn c05_stationary_moments() {
    let env = LevyTriplet::brownian(0.5, 0.4, Variant::K).unwrap();
    let seeds = SeedStream::new(5);
    let ends: Vec<f64> = (0..2000)
        .map(|i| {
            let path = sample_path(&env, 50.0, 1e-2, &mut seeds.rng("env", i, 0)).unwrap();
            exact_solution(&path, 1.0, 1.0).unwrap().terminal().value
        })
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for n in 1..=2 {
        let formula = stationary_moment(&env, 1.0, n).unwrap();
        let mc = stream_accumulate(ends.iter().map(|z| z.powi(n as i32))).unwrap();
        let rel = (mc.mean - formula).abs() / formula;
        pass &= rel <= 0.05;
        detail.push(format!("n={n}: MC {:.4} vs formula {formula:.4} (rel {rel:.4} <= 0.05)", mc.mean));
    }
    report("C5 stationary moments", pass, detail.join("; "));
}

#[test]
fn c06_time_average() {
    let env = LevyTriplet::brownian(0.6, 0.3, Variant::K).unwrap();
    let seeds = SeedStream::new(6);
    let avg = stream_accumulate((0..200).map(|i| {
        let path = sample_path(&env, 200.0, 1e-2, &mut seeds.rng("env", i, 0)).unwrap();
        time_average(&path, 1.0, 1.0).unwrap()
    }))
    .unwrap();
    let rel = (avg.mean - 0.6).abs() / 0.6;
    report(
        "C6 time average",
        rel <= 0.05,
        format!("mean of time averages {:.4} vs 0.6 (rel {rel:.4} <= 0.05)", avg.mean),
    );
}

#[test]
fn c07_first_passage() {
    let det = LevyTriplet::brownian(-1.0, 0.0, Variant::K).unwrap();
    let small = PassageConfig { n_formula: 4, n_direct: 4, ..Default::default() };
    let d = first_passage_laplace(2.0, 1.0, 2.0, 1.0, &det, &small).unwrap();
    let det_gap = (d.formula.mean - 0.5625).abs();

    let env = LevyTriplet::new(
        -1.5,
        0.0,
        vec![cp(0.5, JumpLaw::Exponential { mean: 1.0, side: cblre::levy::Side::Positive })],
        Variant::K,
    )
    .unwrap();
    let cfg = PassageConfig { n_formula: 10_000, n_direct: 10_000, seed: 9, ..Default::default() };
    let r = first_passage_laplace(2.0, 1.0, 2.0, 1.0, &env, &cfg).unwrap();
    let z = r.z_score();
    report(
        "C7 first passage",
        det_gap <= 1e-10 && r.kappa > 1.2 && r.kappa < 3.0 && z.abs() <= 3.0,
        format!(
            "deterministic |value - 9/16| = {det_gap:.1e}; kappa {:.3}; formula {:.4} ± {:.4} vs direct {:.4} ± {:.4} (|z| = {:.2} <= 3)",
            r.kappa,
            r.formula.mean,
            r.formula.se,
            r.direct.mean,
            r.direct.se,
            z.abs()
        ),
    );
}

#[test]
fn c08_subcritical_extinction() {
    let mech = BranchingMechanism::feller(0.0, 1.0).unwrap();
    let env = LevyTriplet::brownian(-0.5, 0.5, Variant::S).unwrap();
    let mean_k = check_hypotheses(&mech, &env).mean_k.unwrap();
    let cfg = CBLREConfig::new(1.0, mech, env, 100.0, 1e-2);
    let ends = terminal_states(&cfg, 500, SeedStream::new(8)).unwrap();
    let below = fraction_below(&ends, 1e-6);
    report(
        "C8 subcritical extinction",
        (mean_k + 0.5).abs() < 1e-12 && below >= 0.95,
        format!("E[K_1] = {mean_k}; fraction below 1e-6 at T=100: {below:.3} (>= 0.95)"),
    );
}

#[test]
fn c09_clt() {
    let mech = BranchingMechanism::feller(0.0, 0.1).unwrap();
    let env = LevyTriplet::new(0.8, 0.5, vec![cp(0.5, JumpLaw::Normal { mean: 0.0, sd: 0.3 })], Variant::S).unwrap();
    let mut cfg = CBLREConfig::new(1.0, mech, env, 50.0, 1e-2);
    cfg.z_max = 1e200;
    let r = clt_check(&cfg, 2000, SeedStream::new(9)).unwrap();
    let p = r.ks.map_or(0.0, |k| k.p_value);
    report("C9 clt", p >= 0.01, format!("{} survivors of {}; KS p-value {p:.3} (>= 0.01)", r.survivors, r.n_paths));
}

#[test]
fn c10_degenerate_environment() {
    let (a, g2, z, lambda, t) = (0.2, 1.0, 1.0, 1.0, 1.0);
    let mech = BranchingMechanism::feller(a, g2).unwrap();
    let env = LevyTriplet::brownian(0.0, 0.0, Variant::S).unwrap();
    let cfg = CBLREConfig::new(z, mech, env, t, 1e-3);
    let res = simulate_ensemble(&cfg, 1, 100_000, SeedStream::new(10), |_, _, e| (-lambda * e.value).exp()).unwrap();
    let mc = res.all.estimate().unwrap();
    // u' = a u - g2 u², u(0) = λ
    let growth = (a * t).exp();
    let u = lambda * a * growth / (a + g2 * lambda * (growth - 1.0));
    let exact = (-z * u).exp();
    let zs = mc.z_score(exact);
    report(
        "C10 degenerate environment",
        zs <= 3.0,
        format!("MC {:.5} ± {:.5} vs closed form {exact:.5} (|z| = {zs:.2} <= 3)", mc.mean, mc.se),
    );
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn c11_determinism() {
    let env = "env.sigma=0.3\njumps.0.kind=cp\njumps.0.rate=1\njumps.0.law=normal(0,0.2)\n";
    let configs = [
        ("sample-env", format!("experiment=sample-env\nseed=42\n{env}sim.horizon=2\n")),
        (
            "simulate",
            format!("experiment=simulate\nmech.family=stable\nmech.alpha=1.5\nmech.c=1\n{env}sim.horizon=1\nmc.n_env=3\nmc.n_branch=20\n"),
        ),
        (
            "verify-laplace",
            format!("experiment=verify-laplace\nmech.gamma2=1\nmech.a=0.2\n{env}mc.n_env=6\nmc.n_branch=50\n"),
        ),
        ("neveu", "experiment=neveu\nenv.variant=K0\nenv.drift=0.2\njumps.0.kind=cp\njumps.0.rate=2\njumps.0.law=normal(0,0.5)\nneveu.lambda=0.5,4\nneveu.n_mc=500\n".to_string()),
        (
            "stable",
            format!("experiment=stable\nmech.family=stable\nmech.alpha=1.5\nmech.c=1\n{env}sim.cut=relative\nstable.lambda=1\nmc.n_env=3\nmc.n_branch=20\n"),
        ),
        ("logistic", "experiment=logistic\nenv.variant=K\nenv.drift=0.5\nenv.sigma=0.4\nlogistic.k=1\nlogistic.horizon=10\nmc.n_paths=20\n".to_string()),
        (
            "passage",
            "experiment=passage\nenv.variant=K\nenv.drift=-1.5\njumps.0.kind=cp\njumps.0.rate=0.5\njumps.0.law=exp(1)\npassage.z=2\npassage.b=1\npassage.lambda=2\npassage.n_formula=50\npassage.n_direct=50\n".to_string(),
        ),
        (
            "clt",
            "experiment=clt\nmech.gamma2=0.1\nenv.drift=0.8\nenv.sigma=0.5\nsim.horizon=5\nsim.dt=1e-2\nmc.n_paths=150\n".to_string(),
        ),
        ("classify", format!("experiment=classify\nmech.gamma2=1\nmech.a=0.2\nenv.variant=K\n{env}")),
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for (name, text) in &configs {
        let config = dir.path().join(format!("{name}.conf"));
        fs::write(&config, text).unwrap();
        let mut outputs = Vec::new();
        for threads in [1, 3] {
            let out = dir.path().join(format!("{name}-{threads}"));
            let opts = RunOptions { config: config.clone(), out: out.clone(), seed: None, verbose: false };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            assert_eq!(pool.install(|| run(&opts)), EXIT_OK, "{name}");
            outputs.push(files(&out));
        }
        if outputs[0] != outputs[1] || !outputs[0].contains_key("manifest.txt") {
            mismatched.push(*name);
        }
    }
    report(
        "C11 determinism",
        mismatched.is_empty(),
        format!("{} experiments re-run on 1 and 3 threads; differing outputs: {mismatched:?}", configs.len()),
    );
}
