//! Branching and immigration mechanisms, and the checkable hypotheses of the
//! model.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{ensure, invalid, Error, Result};
use crate::levy::{LevyTriplet, Variant};
use crate::quadrature::integrate_split;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `e^{-y} - 1 + y` without cancellation for small `y`.
pub(crate) fn exp_defect(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        y * y * (0.5 - y * (1.0 / 6.0 - y * (1.0 / 24.0 - y / 120.0)))
    } else {
        (-y).exp_m1() + y
    }
}

/// `∫_a^b c x^k dx` with `b` possibly infinite.
fn power_integral(c: f64, k: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if (k + 1.0).abs() < 1e-12 {
        return c * (b / a).ln();
    }
    let e = k + 1.0;
    let hi = if b.is_infinite() {
        if e < 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        b.powf(e)
    };
    let lo = if a == 0.0 {
        if e > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a.powf(e)
    };
    c * (hi - lo) / e
}

/// A measure on `(0, ∞)` used for offspring (`μ`) or immigrant (`ν`) sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveMeasure {
    Atom {
        at: f64,
        mass: f64,
    },
    /// `mass` times the exponential law with the given mean.
    Exponential {
        mass: f64,
        mean: f64,
    },
    /// Density `scale · x^{-exponent} · e^{-temper x}` on `(lo, hi)`.
    PowerLaw {
        scale: f64,
        exponent: f64,
        temper: f64,
        lo: f64,
        hi: f64,
    },
}

impl PositiveMeasure {
    pub fn power_law(scale: f64, exponent: f64, lo: f64, hi: f64) -> Self {
        PositiveMeasure::PowerLaw { scale, exponent, temper: 0.0, lo, hi }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PositiveMeasure::Atom { at, mass } => {
                ensure(at > 0.0 && at.is_finite(), "at", "atom location must be positive")?;
                ensure(mass > 0.0 && mass.is_finite(), "mass", "atom mass must be positive")
            }
            PositiveMeasure::Exponential { mass, mean } => {
                ensure(mass > 0.0 && mass.is_finite(), "mass", "must be positive")?;
                ensure(mean > 0.0 && mean.is_finite(), "mean", "must be positive")
            }
            PositiveMeasure::PowerLaw { scale, exponent, temper, lo, hi } => {
                ensure(scale > 0.0 && scale.is_finite(), "scale", "must be positive")?;
                ensure(exponent.is_finite(), "exponent", "must be finite")?;
                ensure(temper >= 0.0 && temper.is_finite(), "temper", "must be non-negative")?;
                ensure(lo >= 0.0 && hi > lo, "lo", "support must be a non-empty interval in [0, ∞]")?;
                if lo == 0.0 {
                    ensure(exponent < 3.0, "exponent", "∫(1 ∧ x²) must be finite near 0")?;
                }
                if hi.is_infinite() && temper == 0.0 {
                    ensure(exponent > 1.0, "exponent", "∫(1 ∧ x²) must be finite at ∞")?;
                }
                Ok(())
            }
        }
    }

    fn is_untempered_power(&self) -> bool {
        matches!(self, PositiveMeasure::PowerLaw { temper, .. } if *temper == 0.0)
    }

    /// `∫ f dμ` by quadrature (exact sum for atoms).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, mass } => mass * f(at),
            PositiveMeasure::Exponential { mass, mean } => {
                let g = |x: f64| f(x) * mass * (-x / mean).exp() / mean;
                integrate_split(g, 0.0, f64::INFINITY, &[1.0, mean]).value
            }
            PositiveMeasure::PowerLaw { scale, exponent, temper, lo, hi } => {
                let g = |x: f64| {
                    let damp = if temper == 0.0 { 1.0 } else { (-temper * x).exp() };
                    f(x) * scale * x.powf(-exponent) * damp
                };
                integrate_split(g, lo, hi, &[1.0]).value
            }
        }
    }

    /// Total mass (possibly infinite).
    pub fn total_mass(&self) -> f64 {
        self.mass_above(0.0)
    }

    /// `μ([x, ∞))`.
    pub fn mass_above(&self, x: f64) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, mass } => {
                if at >= x {
                    mass
                } else {
                    0.0
                }
            }
            PositiveMeasure::Exponential { mass, mean } => mass * (-x.max(0.0) / mean).exp(),
            PositiveMeasure::PowerLaw { scale, exponent, lo, hi, .. } if self.is_untempered_power() => {
                power_integral(scale, -exponent, lo.max(x), hi)
            }
            PositiveMeasure::PowerLaw { lo, hi, exponent, .. } => {
                let a = lo.max(x);
                if a == 0.0 && exponent >= 1.0 {
                    return f64::INFINITY;
                }
                if a >= hi {
                    return 0.0;
                }
                self.integrate(|y| (y >= a) as u8 as f64)
            }
        }
    }

    /// `∫_{[a, b)} x μ(dx)`.
    pub fn first_moment_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match *self {
            PositiveMeasure::Atom { at, mass } => {
                if at >= a && at < b {
                    mass * at
                } else {
                    0.0
                }
            }
            PositiveMeasure::Exponential { mass, mean } => {
                let f = |x: f64| if x.is_infinite() { 0.0 } else { (x + mean) * (-x / mean).exp() };
                mass * (f(a) - f(b))
            }
            PositiveMeasure::PowerLaw { scale, exponent, lo, hi, .. } if self.is_untempered_power() => {
                power_integral(scale, 1.0 - exponent, lo.max(a), hi.min(b))
            }
            PositiveMeasure::PowerLaw { .. } => self.integrate(|x| if x >= a && x < b { x } else { 0.0 }),
        }
    }

    /// `∫_{(0, x)} y² μ(dy)`.
    pub fn second_moment_below(&self, x: f64) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, mass } => {
                if at < x {
                    mass * at * at
                } else {
                    0.0
                }
            }
            PositiveMeasure::Exponential { mass, mean } => {
                let e = (-x / mean).exp();
                mass * (2.0 * mean * mean - e * (x * x + 2.0 * mean * x + 2.0 * mean * mean))
            }
            PositiveMeasure::PowerLaw { scale, exponent, lo, hi, .. } if self.is_untempered_power() => {
                power_integral(scale, 2.0 - exponent, lo, hi.min(x))
            }
            PositiveMeasure::PowerLaw { .. } => self.integrate(|y| if y < x { y * y } else { 0.0 }),
        }
    }

    /// `∫ (e^{-λx} - 1 + λx 1_{x<1}) μ(dx)`.
    pub fn laplace_term(&self, lambda: f64) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, mass } => {
                let y = lambda * at;
                if at < 1.0 {
                    mass * exp_defect(y)
                } else {
                    mass * (-y).exp_m1()
                }
            }
            PositiveMeasure::Exponential { mass, mean } => {
                let small = self.first_moment_between(0.0, 1.0) / mass;
                mass * (1.0 / (1.0 + lambda * mean) - 1.0 + lambda * small)
            }
            PositiveMeasure::PowerLaw { .. } => {
                self.integrate(|x| if x < 1.0 { exp_defect(lambda * x) } else { (-lambda * x).exp_m1() })
            }
        }
    }

    /// `∫ (e^{-λx} - 1 + λx) μ(dx)`; infinite when the mean is.
    pub fn centered_term(&self, lambda: f64) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, mass } => mass * exp_defect(lambda * at),
            PositiveMeasure::Exponential { mass, mean } => {
                let y = lambda * mean;
                mass * y * y / (1.0 + y)
            }
            PositiveMeasure::PowerLaw { .. } => self.integrate(|x| exp_defect(lambda * x)),
        }
    }

    /// `∫ (1 - e^{-ux}) ν(dx)`.
    pub fn immigration_term(&self, u: f64) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, mass } => -mass * (-u * at).exp_m1(),
            PositiveMeasure::Exponential { mass, mean } => mass * u * mean / (1.0 + u * mean),
            PositiveMeasure::PowerLaw { .. } => self.integrate(|x| -(-u * x).exp_m1()),
        }
    }

    /// `∫_{[1,∞)} x μ(dx)`, possibly infinite.
    pub fn large_mean(&self) -> f64 {
        match *self {
            PositiveMeasure::PowerLaw { exponent, hi, temper, .. }
                if hi.is_infinite() && temper == 0.0 && exponent <= 2.0 =>
            {
                f64::INFINITY
            }
            _ => self.first_moment_between(1.0, f64::INFINITY),
        }
    }

    /// Whether `∫^∞ x ln x μ(dx)` is finite.
    pub fn xlogx_finite(&self) -> bool {
        match *self {
            PositiveMeasure::PowerLaw { exponent, hi, temper, .. } => {
                !(hi.is_infinite() && temper == 0.0 && exponent <= 2.0)
            }
            _ => true,
        }
    }

    /// Whether `∫_{[1,∞)} x μ(dx) < ∞` holds analytically.
    pub fn has_finite_mean(&self) -> bool {
        self.large_mean().is_finite()
    }

    /// Draw from `μ` restricted to `[cut, ∞)` and normalised.
    pub fn sample_above<R: Rng + ?Sized>(&self, cut: f64, rng: &mut R) -> f64 {
        match *self {
            PositiveMeasure::Atom { at, .. } => at,
            PositiveMeasure::Exponential { mean, .. } => {
                cut.max(0.0) + Exp::new(1.0 / mean).expect("validated").sample(rng)
            }
            PositiveMeasure::PowerLaw { exponent, temper, lo, hi, .. } => {
                let a = lo.max(cut);
                loop {
                    let u: f64 = rng.random();
                    let x = if (exponent - 1.0).abs() < 1e-12 {
                        a * (hi / a).powf(u)
                    } else {
                        let e = 1.0 - exponent;
                        let pa = a.powf(e);
                        let pb = if hi.is_infinite() { 0.0 } else { hi.powf(e) };
                        (pa + u * (pb - pa)).powf(1.0 / e)
                    };
                    if temper == 0.0 || rng.random::<f64>() < (-temper * (x - a)).exp() {
                        return x;
                    }
                }
            }
        }
    }
}

/// Named branching families with closed-form mechanisms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Feller,
    Stable { alpha: f64, c: f64 },
    Neveu,
    FiniteActivity,
    General,
}

/// `ψ(λ) = -q - aλ + γ²λ² + ∫(e^{-λx} - 1 + λx 1_{x<1}) μ(dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMechanism {
    pub a: f64,
    pub gamma2: f64,
    pub mu: Vec<PositiveMeasure>,
    pub q: f64,
    pub family: Family,
}

impl BranchingMechanism {
    pub fn new(a: f64, gamma2: f64, mu: Vec<PositiveMeasure>, q: f64) -> Result<Self> {
        ensure(a.is_finite(), "a", "must be finite")?;
        ensure(gamma2 >= 0.0 && gamma2.is_finite(), "gamma2", "must be non-negative")?;
        ensure(q >= 0.0 && q.is_finite(), "q", "must be non-negative")?;
        for m in &mu {
            m.validate()?;
        }
        let family = if mu.is_empty() {
            Family::Feller
        } else if mu.iter().all(|m| m.total_mass().is_finite()) {
            Family::FiniteActivity
        } else {
            Family::General
        };
        Ok(BranchingMechanism { a, gamma2, mu, q, family })
    }

    /// `ψ(λ) = -aλ + γ²λ²`.
    pub fn feller(a: f64, gamma2: f64) -> Result<Self> {
        Self::new(a, gamma2, Vec::new(), 0.0)
    }

    /// `ψ(λ) = c λ^α` for `α ∈ (0,1) ∪ (1,2]` and `c(α - 1) > 0`.
    pub fn stable(alpha: f64, c: f64) -> Result<Self> {
        ensure(alpha > 0.0 && alpha <= 2.0 && alpha != 1.0, "alpha", "must lie in (0,1) ∪ (1,2]")?;
        ensure(c * (alpha - 1.0) > 0.0 && c.is_finite(), "c", "c(α - 1) must be positive")?;
        if alpha == 2.0 {
            let mut m = Self::feller(0.0, c)?;
            m.family = Family::Stable { alpha, c };
            return Ok(m);
        }
        let density = c * alpha * (alpha - 1.0) / libm::tgamma(2.0 - alpha);
        let a = if alpha > 1.0 { -density / (alpha - 1.0) } else { density / (1.0 - alpha) };
        let mu = vec![PositiveMeasure::power_law(density, 1.0 + alpha, 0.0, f64::INFINITY)];
        let mut m = Self::new(a, 0.0, mu, 0.0)?;
        m.family = Family::Stable { alpha, c };
        Ok(m)
    }

    /// `ψ(u) = u ln u`, with `μ(dx) = x^{-2} dx`.
    pub fn neveu() -> Result<Self> {
        let mu = vec![PositiveMeasure::power_law(1.0, 2.0, 0.0, f64::INFINITY)];
        let mut m = Self::new(EULER_GAMMA - 1.0, 0.0, mu, 0.0)?;
        m.family = Family::Neveu;
        Ok(m)
    }

    pub fn psi(&self, lambda: f64) -> f64 {
        match self.family {
            Family::Stable { alpha, c } => return c * lambda.powf(alpha) - self.q,
            Family::Neveu => return if lambda == 0.0 { 0.0 } else { lambda * lambda.ln() },
            _ => {}
        }
        let mut v = -self.q - self.a * lambda + self.gamma2 * lambda * lambda;
        for m in &self.mu {
            v += m.laplace_term(lambda);
        }
        v
    }

    /// `ψ'(0+) = -a - ∫_{[1,∞)} x μ(dx)`; `None` when it is `-∞`.
    pub fn psi_prime0(&self) -> Option<f64> {
        match self.family {
            Family::Stable { alpha, .. } => return if alpha > 1.0 { Some(0.0) } else { None },
            Family::Neveu => return None,
            _ => {}
        }
        let tail: f64 = self.mu.iter().map(PositiveMeasure::large_mean).sum();
        if tail.is_finite() {
            Some(-self.a - tail)
        } else {
            None
        }
    }

    /// Condition (H): `q = 0` and a finite offspring mean.
    pub fn satisfies_h(&self) -> bool {
        self.q == 0.0 && self.psi_prime0().is_some()
    }

    /// `ψ₀(λ) = ψ(λ) - λψ'(0+)`.
    pub fn psi0(&self, lambda: f64) -> Result<f64> {
        if !self.satisfies_h() {
            return Err(Error::HypothesisH);
        }
        if let Family::Stable { alpha, c } = self.family {
            return Ok(c * lambda.powf(alpha));
        }
        let mut v = self.gamma2 * lambda * lambda;
        for m in &self.mu {
            v += m.centered_term(lambda);
        }
        Ok(v)
    }

    /// `Φ(λ) = ψ₀(λ)/λ`, with `Φ(0) = 0`.
    pub fn phi_ratio(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return if self.satisfies_h() { Ok(0.0) } else { Err(Error::HypothesisH) };
        }
        Ok(self.psi0(lambda)? / lambda)
    }

    /// `∫_{[lo, hi)} x μ(dx)`.
    pub fn first_moment_between(&self, lo: f64, hi: f64) -> f64 {
        self.mu.iter().map(|m| m.first_moment_between(lo, hi)).sum()
    }

    /// `∫_{(0, x)} y² μ(dy)`.
    pub fn second_moment_below(&self, x: f64) -> f64 {
        self.mu.iter().map(|m| m.second_moment_below(x)).sum()
    }

    /// `μ([x, ∞))`.
    pub fn mass_above(&self, x: f64) -> f64 {
        self.mu.iter().map(|m| m.mass_above(x)).sum()
    }
}

/// `φ(u) = d u + ∫(1 - e^{-ux}) ν(dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmigrationMechanism {
    pub d: f64,
    pub nu: Vec<PositiveMeasure>,
}

impl ImmigrationMechanism {
    pub fn new(d: f64, nu: Vec<PositiveMeasure>) -> Result<Self> {
        ensure(d >= 0.0 && d.is_finite(), "d", "must be non-negative")?;
        for m in &nu {
            m.validate()?;
            if let PositiveMeasure::PowerLaw { exponent, lo, hi, temper, .. } = *m {
                if lo == 0.0 {
                    ensure(exponent < 2.0, "exponent", "∫(1 ∧ x) ν(dx) must be finite near 0")?;
                }
                if hi.is_infinite() && temper == 0.0 {
                    ensure(exponent > 1.0, "exponent", "∫(1 ∧ x) ν(dx) must be finite at ∞")?;
                }
            }
        }
        Ok(ImmigrationMechanism { d, nu })
    }

    pub fn none() -> Self {
        ImmigrationMechanism { d: 0.0, nu: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.d == 0.0 && self.nu.is_empty()
    }

    pub fn phi(&self, u: f64) -> f64 {
        self.d * u + self.nu.iter().map(|m| m.immigration_term(u)).sum::<f64>()
    }
}

/// Sign of `E[K_1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Numerical value of the integral condition for survival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntcondEstimate {
    pub value: f64,
    pub cutoff: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub h_holds: bool,
    pub psi_prime0: Option<f64>,
    pub xlogx_holds: bool,
    /// Smallest point beyond which `A(x) > 0`, when it exists.
    pub a_positive_from: Option<f64>,
    pub intcond: Option<IntcondEstimate>,
    pub admissible: bool,
    pub admissibility_notes: Vec<String>,
    pub mean_k: Option<f64>,
    pub regime: Option<Criticality>,
}

impl HypothesisReport {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x}"));
        let mut s = String::new();
        s += &format!("h_holds={}\n", self.h_holds);
        s += &format!("psi_prime0={}\n", self.psi_prime0.map_or("-inf".to_string(), |x| format!("{x}")));
        s += &format!("xlogx_holds={}\n", self.xlogx_holds);
        s += &format!("a_positive_from={}\n", opt(self.a_positive_from));
        match self.intcond {
            Some(e) => {
                s += &format!("intcond_estimate={}\n", e.value);
                s += &format!("intcond_cutoff={}\n", e.cutoff);
                s += &format!("intcond_status={}\n", if e.converged { "convergent" } else { "likely divergent" });
            }
            None => s += "intcond_status=not applicable\n",
        }
        s += &format!("admissible={}\n", self.admissible);
        for n in &self.admissibility_notes {
            s += &format!("admissibility_note={n}\n");
        }
        s += &format!("mean_k={}\n", opt(self.mean_k));
        let regime = match self.regime {
            Some(Criticality::Subcritical) => "subcritical",
            Some(Criticality::Critical) => "critical",
            Some(Criticality::Supercritical) => "supercritical",
            None => "undetermined",
        };
        s += &format!("regime={regime}\n");
        s
    }
}

/// The functions `A`, `T` and `U` attached to an environment.
pub struct TailFunctions<'a> {
    env: &'a LevyTriplet,
}

/// `(A, T, U)` for the environment `K`.
pub fn a_t_u(env: &LevyTriplet) -> TailFunctions<'_> {
    TailFunctions { env }
}

impl TailFunctions<'_> {
    fn tail_above(&self, x: f64) -> f64 {
        self.env.jumps.iter().map(|c| c.tail_above(x)).sum()
    }

    /// `A(x) = m + π((1,∞)) + ∫_1^x π((y,∞)) dy`.
    pub fn a(&self, x: f64) -> f64 {
        let base = self.env.compensated_drift() + self.tail_above(1.0);
        if x >= 1.0 {
            base + self.env.jumps.iter().map(|c| c.integrated_tail(x)).sum::<f64>()
        } else {
            base - integrate_split(|y| self.tail_above(y), x, 1.0, &[]).value
        }
    }

    /// `T(x) = π((x,∞)) + π((-∞,-x))`.
    pub fn t(&self, x: f64) -> f64 {
        self.env.jumps.iter().map(|c| c.tail_above(x) + c.tail_below(x)).sum()
    }

    /// `U(x) = σ² + ∫_0^x y T(y) dy`.
    pub fn u(&self, x: f64) -> f64 {
        self.env.sigma * self.env.sigma + 0.5 * self.env.jumps.iter().map(|c| c.truncated_square(x)).sum::<f64>()
    }

    /// `U(x) / (x² T(x))`; infinite when `T(x) = 0`.
    pub fn doney_maller_ratio(&self, x: f64) -> f64 {
        let t = self.t(x);
        if t == 0.0 {
            f64::INFINITY
        } else {
            self.u(x) / (x * x * t)
        }
    }
}

fn environment_as_k(mech: &BranchingMechanism, env: &LevyTriplet) -> Option<LevyTriplet> {
    match env.variant {
        Variant::K => Some(env.clone()),
        _ => mech.psi_prime0().and_then(|p| env.with_variant(Variant::K, p).ok()),
    }
}

/// Evaluates `∫_{(a,∞)} x/A(x) |dΦ(e^{-x})|` as a Stieltjes sum, doubling
/// the cutoff until the increment drops below `1e-8` or passes `1e6`.
pub fn intcond_estimate(mech: &BranchingMechanism, env_k: &LevyTriplet, start: f64) -> Result<IntcondEstimate> {
    let tails = a_t_u(env_k);
    let phi_at = |x: f64| mech.phi_ratio((-x).exp());
    let piece = |lo: f64, hi: f64| -> Result<f64> {
        let n = 400;
        let h = (hi - lo) / n as f64;
        let mut sum = 0.0;
        let mut prev = phi_at(lo)?;
        for i in 1..=n {
            let x1 = lo + i as f64 * h;
            let cur = phi_at(x1)?;
            let mid = x1 - 0.5 * h;
            sum += mid / tails.a(mid) * (prev - cur).abs();
            prev = cur;
        }
        Ok(sum)
    };
    let mut lo = start;
    let mut hi = start + 1.0;
    let mut total = 0.0;
    loop {
        let inc = piece(lo, hi)?;
        total += inc;
        if inc < 1e-8 {
            return Ok(IntcondEstimate { value: total, cutoff: hi, converged: true });
        }
        if hi > 1e6 {
            return Ok(IntcondEstimate { value: total, cutoff: hi, converged: false });
        }
        lo = hi;
        hi *= 2.0;
    }
}

/// Checks the hypotheses used by the Laplace identity and the long-term
/// classification for `mech` in the environment `env`.
pub fn check_hypotheses(mech: &BranchingMechanism, env: &LevyTriplet) -> HypothesisReport {
    let psi_prime0 = mech.psi_prime0();
    let h_holds = mech.satisfies_h();
    let xlogx_holds = mech.mu.iter().all(PositiveMeasure::xlogx_finite);

    let mut notes = Vec::new();
    if mech.gamma2 < 0.0 {
        notes.push("gamma2 must be non-negative".to_string());
    }
    for m in &mech.mu {
        if let Err(e) = m.validate() {
            notes.push(format!("mu: {e}"));
        }
    }
    if env.sigma < 0.0 {
        notes.push("sigma must be non-negative".to_string());
    }
    let env_k = environment_as_k(mech, env);
    let mean_k = env_k.as_ref().map(LevyTriplet::mean);
    let regime = mean_k.map(|m| {
        if m.abs() <= 1e-12 {
            Criticality::Critical
        } else if m < 0.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        }
    });

    let mut a_positive_from = None;
    let mut intcond = None;
    if let Some(k) = &env_k {
        let tails = a_t_u(k);
        let mut x = 1.0;
        while x < 1e9 && tails.a(x) <= 0.0 {
            x *= 2.0;
        }
        if tails.a(x) > 0.0 {
            // bisect back to the crossing; A is non-decreasing
            let (mut lo, mut hi) = (if x > 1.0 { x / 2.0 } else { 0.0 }, x);
            if tails.a(lo.max(1e-12)) > 0.0 {
                hi = lo.max(1e-12);
            } else {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if tails.a(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            a_positive_from = Some(hi);
            if h_holds && regime == Some(Criticality::Supercritical) {
                intcond = intcond_estimate(mech, k, hi.max(1.0)).ok();
            }
        }
    }
    HypothesisReport {
        h_holds,
        psi_prime0,
        xlogx_holds,
        a_positive_from,
        intcond,
        admissible: notes.is_empty(),
        admissibility_notes: notes,
        mean_k,
        regime,
    }
}

/// Fails with a named parameter error unless `(H)` holds.
pub fn require_h(mech: &BranchingMechanism) -> Result<f64> {
    if mech.q != 0.0 {
        return Err(invalid("q", "the Laplace identity needs q = 0"));
    }
    mech.psi_prime0().ok_or(Error::HypothesisH)
}
