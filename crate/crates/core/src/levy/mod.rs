//! Lévy environments: triplets, Laplace exponents, Esscher tilts and path
//! sampling.
//!
//! A triplet describes `K_t = drift·t + σB_t + (jumps) - (compensators)·t`,
//! where compound Poisson jumps are summed raw and power-law parts are
//! compensated when flagged. The same convention drives [`LevyTriplet::psi`].

mod component;
mod law;
mod path;

pub use component::{JumpComponent, PowerLawJumps};
pub use law::{JumpLaw, Side};
pub(crate) use path::log_add;
pub use path::{sample_path, sample_path_seeded, EnvironmentPath, Segment};

use crate::error::{ensure, invalid, Error, Result};

/// Which process a triplet or path represents.
///
/// `S` is the multiplicative environment; its paths store the logarithm of
/// the stochastic exponential of `S`, which coincides with `K0`. `K` is `K0`
/// shifted by `-ψ'(0+) t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    S,
    K,
    K0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    pub drift: f64,
    pub sigma: f64,
    pub jumps: Vec<JumpComponent>,
    pub variant: Variant,
    /// The `ψ'(0+)` removed from the drift when `variant` is `K`, zero otherwise.
    pub branching_slope: f64,
    /// Replace the dropped small jumps of power-law parts by a Gaussian.
    pub small_jump_gaussian: bool,
}

impl LevyTriplet {
    pub fn new(drift: f64, sigma: f64, jumps: Vec<JumpComponent>, variant: Variant) -> Result<Self> {
        ensure(drift.is_finite(), "drift", "must be finite")?;
        ensure(sigma >= 0.0 && sigma.is_finite(), "sigma", "must be non-negative")?;
        Ok(LevyTriplet { drift, sigma, jumps, variant, branching_slope: 0.0, small_jump_gaussian: false })
    }

    /// Brownian motion with drift.
    pub fn brownian(drift: f64, sigma: f64, variant: Variant) -> Result<Self> {
        Self::new(drift, sigma, Vec::new(), variant)
    }

    /// Builds the environment from the coefficients `(α, σ, π)` of `S`.
    ///
    /// The returned drift is the one of `K` (when `variant` is `K`, using
    /// `psi_prime0 = ψ'(0+)`) or of `K0` otherwise, re-expressed for raw
    /// compound Poisson sums. Jumps of size exactly one are treated as large.
    pub fn make_environment(
        alpha: f64,
        sigma: f64,
        jumps: Vec<JumpComponent>,
        variant: Variant,
        psi_prime0: Option<f64>,
    ) -> Result<Self> {
        ensure(alpha.is_finite(), "alpha", "must be finite")?;
        let slope = match (variant, psi_prime0) {
            (Variant::K, Some(p)) if p.is_finite() => p,
            (Variant::K, _) => {
                return Err(invalid("psi_prime0", "a finite ψ'(0+) is required for the K variant"));
            }
            _ => 0.0,
        };
        let correction: f64 = jumps.iter().map(JumpComponent::exp_correction).sum();
        if !correction.is_finite() {
            return Err(invalid("jumps", "∫(e^v - 1 - v)π(dv) over (-1, 1) is not finite"));
        }
        let compensated_drift = alpha - slope - 0.5 * sigma * sigma - correction;
        let mut t = LevyTriplet::new(0.0, sigma, jumps, variant)?;
        t.drift = compensated_drift - t.uncompensated_small_mean();
        t.branching_slope = slope;
        Ok(t)
    }

    /// Mean of the uncompensated jumps inside `(-1, 1)`, per unit time.
    fn uncompensated_small_mean(&self) -> f64 {
        self.jumps.iter().filter(|c| !c.is_compensated()).map(JumpComponent::mean_inside_unit).sum()
    }

    /// Drift in the convention where all jumps in `(-1, 1)` are compensated.
    pub fn compensated_drift(&self) -> f64 {
        self.drift + self.uncompensated_small_mean()
    }

    /// Recovers the `α` of `S` that produced this triplet.
    pub fn environment_alpha(&self) -> f64 {
        let correction: f64 = self.jumps.iter().map(JumpComponent::exp_correction).sum();
        self.compensated_drift() + self.branching_slope + 0.5 * self.sigma * self.sigma + correction
    }

    /// Same noise, re-expressed as another variant.
    pub fn with_variant(&self, variant: Variant, psi_prime0: f64) -> Result<Self> {
        ensure(psi_prime0.is_finite(), "psi_prime0", "must be finite")?;
        let slope = if variant == Variant::K { psi_prime0 } else { 0.0 };
        let mut t = self.clone();
        t.drift = self.drift + self.branching_slope - slope;
        t.branching_slope = slope;
        t.variant = variant;
        Ok(t)
    }

    /// Linear coefficient of the path between jumps.
    pub fn path_drift(&self) -> f64 {
        self.drift - self.jumps.iter().map(JumpComponent::compensator).sum::<f64>()
    }

    /// Variance rate of the Gaussian part, including the small-jump
    /// substitute when enabled.
    pub fn gaussian_variance(&self) -> f64 {
        let extra = if self.small_jump_gaussian {
            self.jumps.iter().map(JumpComponent::small_jump_variance).sum()
        } else {
            0.0
        };
        self.sigma * self.sigma + extra
    }

    /// Open interval of `q` with `E[exp(q K_1)] < ∞`.
    pub fn exp_domain(&self) -> (f64, f64) {
        self.jumps.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), c| {
            let (a, b) = c.exp_domain();
            (lo.max(a), hi.min(b))
        })
    }

    /// `ψ_K(q) = log E[exp(q K_1)]`.
    pub fn psi(&self, q: f64) -> Result<f64> {
        let mut v = self.drift * q + 0.5 * self.gaussian_variance() * q * q;
        for c in &self.jumps {
            v += c.exponent(q)?;
        }
        Ok(v)
    }

    pub fn psi_deriv(&self, q: f64) -> Result<f64> {
        let mut v = self.drift + self.gaussian_variance() * q;
        for c in &self.jumps {
            v += c.exponent_deriv(q)?;
        }
        Ok(v)
    }

    /// `ψ̂_K(q) = log E[exp(-q K_1)]`.
    pub fn psi_hat(&self, q: f64) -> Result<f64> {
        self.psi(-q)
    }

    pub fn psi_hat_deriv(&self, q: f64) -> Result<f64> {
        Ok(-self.psi_deriv(-q)?)
    }

    /// The pair `(ψ_K, ψ̂_K)` as closures.
    #[allow(clippy::type_complexity)]
    pub fn laplace_exponents(&self) -> (impl Fn(f64) -> Result<f64> + '_, impl Fn(f64) -> Result<f64> + '_) {
        (move |q| self.psi(q), move |q| self.psi_hat(q))
    }

    /// `E[K_1]`.
    pub fn mean(&self) -> f64 {
        self.path_drift() + self.jumps.iter().map(JumpComponent::first_moment).sum::<f64>()
    }

    /// `Var K_1`.
    pub fn variance(&self) -> f64 {
        self.gaussian_variance() + self.jumps.iter().map(JumpComponent::second_moment).sum::<f64>()
    }

    pub fn is_spectrally_positive(&self) -> bool {
        self.jumps.iter().all(JumpComponent::is_nonnegative)
    }

    pub fn is_deterministic(&self) -> bool {
        self.gaussian_variance() == 0.0 && self.jumps.is_empty()
    }

    /// Largest root of `ψ̂_K(u) = λ`.
    pub fn esscher_kappa(&self, lambda: f64) -> Result<f64> {
        ensure(lambda >= 0.0 && lambda.is_finite(), "lambda", "must be non-negative")?;
        let (qlo, qhi) = self.exp_domain();
        // ψ̂ is finite for u in (-qhi, -qlo)
        let (ulo, uhi) = (-qhi, -qlo);
        let f = |u: f64| self.psi_hat(u).map(|v| v - lambda);
        let df = |u: f64| self.psi_hat_deriv(u);

        // start right of the minimiser of the convex function
        let mut lo = 0.0f64.max(ulo);
        if df(lo)? < 0.0 {
            let mut hi = 1.0;
            let mut step = 1.0;
            while df(hi)? < 0.0 {
                step *= 2.0;
                let next = if uhi.is_finite() { hi + (uhi - hi) * 0.5 } else { hi + step };
                if next == hi || next > 1e12 {
                    return Err(Error::Unreachable { level: lambda });
                }
                lo = hi;
                hi = next;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if df(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if f(lo)? >= 0.0 {
            // ψ̂(lo) ≥ λ only at lo = 0 with λ = 0
            return Ok(lo);
        }
        let mut hi = lo + 1.0;
        let mut step = 1.0;
        loop {
            if uhi.is_finite() && hi >= uhi {
                hi = lo + (uhi - lo) * 0.5;
            }
            match f(hi) {
                Ok(v) if v >= 0.0 => break,
                Ok(_) => {}
                Err(e) => return Err(e),
            }
            lo = hi;
            step *= 2.0;
            hi = if uhi.is_finite() { lo + (uhi - lo) * 0.5 } else { lo + step };
            if hi > 1e12 || hi == lo {
                return Err(Error::Unreachable { level: lambda });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        let mut u = 0.5 * (lo + hi);
        for _ in 0..3 {
            let d = df(u)?;
            if d <= 0.0 {
                break;
            }
            let next = u - f(u)? / d;
            if next < lo || next > hi {
                break;
            }
            u = next;
        }
        let residual = f(u)?.abs();
        if residual > 1e-10 * lambda.max(1.0) {
            return Err(Error::ToleranceNotMet { tol: 1e-10, estimate: residual });
        }
        Ok(u)
    }

    /// Triplet of `K` under the measure with density `exp(-κ K_t - ψ̂(κ) t)`.
    pub fn esscher_tilt(&self, kappa: f64) -> Result<Self> {
        let (lo, hi) = self.exp_domain();
        if -kappa <= lo || -kappa >= hi {
            return Err(Error::OutsideExponentialDomain { q: -kappa, lower: lo, upper: hi });
        }
        let mut drift = self.drift - kappa * self.gaussian_variance();
        let mut jumps = Vec::with_capacity(self.jumps.len());
        for c in &self.jumps {
            let (tilted, shift) = c.tilt(kappa)?;
            drift += shift;
            jumps.push(tilted);
        }
        let mut t = self.clone();
        t.drift = drift;
        t.jumps = jumps;
        if self.small_jump_gaussian {
            // the Gaussian substitute is frozen at its untilted variance
            t.small_jump_gaussian = false;
            t.sigma = self.gaussian_variance().sqrt();
        }
        Ok(t)
    }
}
