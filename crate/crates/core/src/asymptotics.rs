//! Long-term behaviour: regime classification by the drift of `K`, and a
//! Monte Carlo check of the central limit theorem for `log Z_t` on survival.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{ensure, invalid, Error, Result};
use crate::levy::{sample_path, LevyTriplet, Variant};
use crate::mc::SeedStream;
use crate::mechanisms::{a_t_u, check_hypotheses, BranchingMechanism, Criticality, IntcondEstimate};
use crate::sde::{simulate_terminal, CBLREConfig, Terminal};
use crate::stats::{ks_normal, KsResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `K` drifts to `-∞`: `Z_t → 0` almost surely.
    ExtinctionAs,
    /// `K` oscillates: `liminf Z_t = 0`.
    LiminfZero,
    /// `K` drifts to `+∞` and the integral condition converges.
    SurvivalPossible,
    /// `K` drifts to `+∞` but the integral condition could not be confirmed.
    Undetermined,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ExtinctionAs => "extinction_as",
            Regime::LiminfZero => "liminf_zero",
            Regime::SurvivalPossible => "survival_possible",
            Regime::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub mean_k: f64,
    pub drift_sign: Criticality,
    pub regime: Regime,
    pub intcond: Option<IntcondEstimate>,
    pub xlogx: bool,
    /// Share of simulated paths with `Z_T e^{-K_T}` above the threshold.
    pub w_positive: Option<f64>,
}

impl RegimeReport {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        s += &format!("mean_k={}\n", self.mean_k);
        s += &format!(
            "drift_sign={}\n",
            match self.drift_sign {
                Criticality::Subcritical => "negative",
                Criticality::Critical => "zero",
                Criticality::Supercritical => "positive",
            }
        );
        s += &format!("regime={}\n", self.regime.as_str());
        match self.intcond {
            Some(e) => {
                let status = if e.converged { "convergent" } else { "likely divergent" };
                s += &format!("intcond={status}\nintcond_estimate={}\nintcond_cutoff={}\n", e.value, e.cutoff);
            }
            None => s += "intcond=not applicable\n",
        }
        s += &format!("xlogx={}\n", self.xlogx);
        if let Some(w) = self.w_positive {
            s += &format!("w_positive={w}\n");
        }
        s
    }
}

/// Classifies the long-term behaviour of `mech` in the environment `env`
/// (any variant).
pub fn classify(mech: &BranchingMechanism, env: &LevyTriplet) -> Result<RegimeReport> {
    let report = check_hypotheses(mech, env);
    if !report.h_holds {
        return Err(Error::HypothesisH);
    }
    let mean_k = report.mean_k.ok_or(Error::HypothesisH)?;
    let drift_sign = report.regime.ok_or(Error::HypothesisH)?;
    let regime = match drift_sign {
        Criticality::Subcritical => Regime::ExtinctionAs,
        Criticality::Critical => Regime::LiminfZero,
        Criticality::Supercritical => match report.intcond {
            Some(e) if e.converged => Regime::SurvivalPossible,
            _ => Regime::Undetermined,
        },
    };
    Ok(RegimeReport {
        mean_k,
        drift_sign,
        regime,
        intcond: report.intcond,
        xlogx: report.xlogx_holds,
        w_positive: None,
    })
}

/// `a(t) = E[K_1] t` and `b(t) = sqrt(Var K_1 · t)` for a variant-K triplet.
pub fn clt_normalizers(env_k: &LevyTriplet, t: f64) -> Result<(f64, f64)> {
    ensure(env_k.variant == Variant::K, "env", "must be the K variant")?;
    ensure(t >= 0.0, "t", "must be non-negative")?;
    let var = env_k.variance();
    if !var.is_finite() {
        return Err(Error::Unsupported(
            "infinite second moment: Doney–Maller general normalizers not implemented".into(),
        ));
    }
    Ok((env_k.mean() * t, (var * t).sqrt()))
}

/// Final state and `K_T` of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub end: Terminal,
    pub k: f64,
}

/// Simulates `n_paths` independent (environment, branching) pairs and
/// returns their final states. Path `i` uses streams `("env", i, 0)` and
/// `("branch", i, 0)`.
pub fn terminal_states(cfg: &CBLREConfig, n_paths: usize, seeds: SeedStream) -> Result<Vec<PathEnd>> {
    cfg.validate()?;
    let slope = cfg.mech.psi_prime0().ok_or(Error::HypothesisH)?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<PathEnd> {
            let mut env_rng = seeds.rng("env", i as u32, 0);
            let path = sample_path(&cfg.env, cfg.horizon, cfg.dt, &mut env_rng)?;
            let mut rng = seeds.rng("branch", i as u32, 0);
            let end = simulate_terminal(cfg, &path, &mut rng)?;
            Ok(PathEnd { end, k: path.terminal() - slope * cfg.horizon })
        })
        .collect()
}

/// Fraction of paths whose final state is below `threshold`.
pub fn fraction_below(ends: &[PathEnd], threshold: f64) -> f64 {
    ends.iter().filter(|p| p.end.is_finite() && p.end.value < threshold).count() as f64 / ends.len() as f64
}

/// Share of paths on which `{Z_T e^{-K_T} < threshold}` and `{Z_T < threshold}`
/// agree.
pub fn dichotomy_agreement(ends: &[PathEnd], threshold: f64) -> f64 {
    let agree = ends
        .iter()
        .filter(|p| {
            let z = p.end.value;
            ((z * (-p.k).exp()) < threshold) == (z < threshold)
        })
        .count();
    agree as f64 / ends.len() as f64
}

pub const SURVIVAL_THRESHOLD: f64 = 1e-6;
pub const MIN_SURVIVORS: usize = 100;

#[derive(Debug, Clone)]
pub struct CltReport {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub n_paths: usize,
    pub survivors: usize,
    /// `None` when fewer than [`MIN_SURVIVORS`] paths survive.
    pub ks: Option<KsResult>,
    /// KS p-values for other survival thresholds, `(threshold, survivors, p)`.
    pub sensitivity: Vec<(f64, usize, Option<f64>)>,
    /// `U(x)/(x² T(x))` of `K` at `x = 10, 100, 1000`; large values favour
    /// the linear normalizers.
    pub doney_maller: Vec<(f64, f64)>,
    /// `(log Z_t - a)/b` on survivors.
    pub standardized: Vec<f64>,
}

impl CltReport {
    pub fn inconclusive(&self) -> bool {
        self.ks.is_none()
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        s += &format!(
            "t={}\na={}\nb={}\nn_paths={}\nsurvivors={}\n",
            self.t, self.a, self.b, self.n_paths, self.survivors
        );
        match &self.ks {
            Some(k) => s += &format!("ks_statistic={}\nks_p_value={}\n", k.statistic, k.p_value),
            None => s += "status=inconclusive\n",
        }
        for (th, n, p) in &self.sensitivity {
            let p = p.map_or("inconclusive".to_string(), |p| p.to_string());
            s += &format!("survivors_above_{th:e}={n}\np_value_above_{th:e}={p}\n");
        }
        for (x, r) in &self.doney_maller {
            s += &format!("doney_maller_ratio_{x}={r:e}\n");
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "index,standardized_log_z")?;
        for (i, x) in self.standardized.iter().enumerate() {
            writeln!(out, "{i},{x}")?;
        }
        Ok(())
    }
}

fn standardize(ends: &[PathEnd], threshold: f64, a: f64, b: f64) -> Vec<f64> {
    ends.iter().filter(|p| p.end.is_finite() && p.end.value > threshold).map(|p| (p.end.value.ln() - a) / b).collect()
}

/// KS test of `(log Z_t - a(t))/b(t)` against the standard normal on paths
/// with `Z_t` above [`SURVIVAL_THRESHOLD`], at `t = cfg.horizon`.
pub fn clt_check(cfg: &CBLREConfig, n_paths: usize, seeds: SeedStream) -> Result<CltReport> {
    let report = classify(&cfg.mech, &cfg.env)?;
    if report.drift_sign != Criticality::Supercritical {
        return Err(invalid("env", "the CLT check needs E[K_1] > 0"));
    }
    let slope = cfg.mech.psi_prime0().ok_or(Error::HypothesisH)?;
    let env_k = cfg.env.with_variant(Variant::K, slope)?;
    let t = cfg.horizon;
    let (a, b) = clt_normalizers(&env_k, t)?;
    if b <= 0.0 {
        return Err(invalid("env", "b(t) = 0: a deterministic environment has no Gaussian limit"));
    }
    let ends = terminal_states(cfg, n_paths, seeds)?;
    if ends.iter().any(|p| !p.end.is_finite()) {
        return Err(Error::NonFinite("a path exploded; raise z_max".into()));
    }
    let test = |th: f64| -> Result<(usize, Option<KsResult>, Vec<f64>)> {
        let xs = standardize(&ends, th, a, b);
        let ks = if xs.len() >= MIN_SURVIVORS { Some(ks_normal(&xs)?) } else { None };
        Ok((xs.len(), ks, xs))
    };
    let (survivors, ks, standardized) = test(SURVIVAL_THRESHOLD)?;
    let mut sensitivity = Vec::new();
    for th in [1e-4, 1e-8] {
        let (n, ks, _) = test(th)?;
        sensitivity.push((th, n, ks.map(|k| k.p_value)));
    }
    let tails = a_t_u(&env_k);
    let doney_maller = [10.0, 100.0, 1000.0].into_iter().map(|x| (x, tails.doney_maller_ratio(x))).collect();
    Ok(CltReport { t, a, b, n_paths, survivors, ks, sensitivity, doney_maller, standardized })
}
