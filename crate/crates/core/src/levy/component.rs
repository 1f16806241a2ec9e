use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::law::{JumpLaw, Side};
use crate::error::{ensure, Error, Result};
use crate::quadrature::integrate_split;

/// Power-law jump density `c |z|^{-1-index} exp(-temper |z|)` restricted to
/// `eps < |z| < 1` on one side of the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawJumps {
    pub scale: f64,
    pub index: f64,
    pub temper: f64,
    pub eps: f64,
    pub side: Side,
    pub compensated: bool,
    rate: f64,
}

impl PowerLawJumps {
    pub fn new(scale: f64, index: f64, temper: f64, eps: f64, side: Side, compensated: bool) -> Result<Self> {
        ensure(scale > 0.0 && scale.is_finite(), "scale", "must be positive")?;
        ensure(index < 2.0 && index.is_finite(), "index", "must be below 2")?;
        ensure(temper.is_finite(), "temper", "must be finite")?;
        ensure(eps > 0.0 && eps < 1.0, "eps", "truncation level must lie in (0, 1)")?;
        let mut p = PowerLawJumps { scale, index, temper, eps, side, compensated, rate: 0.0 };
        p.rate = p.integrate_magnitude(|_| 1.0);
        ensure(p.rate.is_finite() && p.rate > 0.0, "scale", "component rate is not finite")?;
        Ok(p)
    }

    pub fn density(&self, y: f64) -> f64 {
        self.scale * y.powf(-1.0 - self.index) * (-self.temper * y).exp()
    }

    /// `∫_eps^1 f(y) g(y) dy` over the magnitude `y = |z|`.
    fn integrate_magnitude<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        integrate_split(|y| f(y) * self.density(y), self.eps, 1.0, &[]).value
    }

    /// `∫ f(z) π(dz)` over the signed support.
    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let s = self.side.sign();
        self.integrate_magnitude(|y| f(s * y))
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Variance of the jumps of size below `eps` that the truncation drops.
    pub fn small_jump_variance(&self) -> f64 {
        integrate_split(|y| y * y * self.density(y), 0.0, self.eps, &[]).value
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.index;
        let peak = if self.temper >= 0.0 { self.eps } else { 1.0 };
        loop {
            let u: f64 = rng.random();
            let y = if a.abs() < 1e-12 {
                self.eps.powf(1.0 - u)
            } else {
                let lo = self.eps.powf(-a);
                (lo - u * (lo - 1.0)).powf(-1.0 / a)
            };
            let accept = (-self.temper * (y - peak)).exp();
            if self.temper == 0.0 || rng.random::<f64>() < accept {
                return self.side.sign() * y;
            }
        }
    }
}

/// One independent jump part of a Lévy process.
///
/// Compound Poisson jumps enter uncompensated; a power-law component is
/// compensated when its flag is set.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpComponent {
    CompoundPoisson { rate: f64, law: JumpLaw },
    PowerLaw(PowerLawJumps),
}

impl JumpComponent {
    pub fn compound_poisson(rate: f64, law: JumpLaw) -> Result<Self> {
        ensure(rate > 0.0 && rate.is_finite(), "rate", "jump rate must be positive")?;
        law.validate()?;
        Ok(JumpComponent::CompoundPoisson { rate, law })
    }

    pub fn rate(&self) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, .. } => *rate,
            JumpComponent::PowerLaw(p) => p.rate(),
        }
    }

    pub fn is_compensated(&self) -> bool {
        matches!(self, JumpComponent::PowerLaw(p) if p.compensated)
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { law, .. } => law.sample(rng),
            JumpComponent::PowerLaw(p) => p.sample_size(rng),
        }
    }

    pub fn sample_count<R: Rng + ?Sized>(&self, span: f64, rng: &mut R) -> u64 {
        let lambda = self.rate() * span;
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).expect("positive intensity").sample(rng) as u64
    }

    /// `∫ z π(dz)`.
    pub fn first_moment(&self) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.mean(),
            JumpComponent::PowerLaw(p) => p.integrate(|z| z),
        }
    }

    /// `∫ z² π(dz)`.
    pub fn second_moment(&self) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.second_moment(),
            JumpComponent::PowerLaw(p) => p.integrate(|z| z * z),
        }
    }

    /// Drift removed from the path by compensation.
    pub fn compensator(&self) -> f64 {
        if self.is_compensated() {
            self.first_moment()
        } else {
            0.0
        }
    }

    pub fn exp_domain(&self) -> (f64, f64) {
        match self {
            JumpComponent::CompoundPoisson { law, .. } => law.exp_domain(),
            JumpComponent::PowerLaw(_) => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Contribution `∫(e^{qz} - 1 - qz 1_compensated) π(dz)` to the Laplace exponent.
    pub fn exponent(&self, q: f64) -> Result<f64> {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => Ok(rate * law.mgf_minus_one(q)?),
            JumpComponent::PowerLaw(p) => {
                let c = if p.compensated { q } else { 0.0 };
                Ok(p.integrate(|z| (q * z).exp_m1() - c * z))
            }
        }
    }

    pub fn exponent_deriv(&self, q: f64) -> Result<f64> {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => Ok(rate * law.mgf_deriv(q)?),
            JumpComponent::PowerLaw(p) => {
                let c = if p.compensated { 1.0 } else { 0.0 };
                Ok(p.integrate(|z| z * (q * z).exp() - c * z))
            }
        }
    }

    /// `∫_{(-1,1)} z π(dz)`.
    pub fn mean_inside_unit(&self) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.mean_inside_unit(),
            JumpComponent::PowerLaw(_) => self.first_moment(),
        }
    }

    /// `∫_{(-1,1)} (e^z - 1 - z) π(dz)`.
    pub fn exp_correction(&self) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.exp_correction_inside_unit(),
            JumpComponent::PowerLaw(p) => p.integrate(|z| z.exp_m1() - z),
        }
    }

    /// `π((x, ∞))`.
    pub fn tail_above(&self, x: f64) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.tail_above(x),
            JumpComponent::PowerLaw(p) => match p.side {
                Side::Positive if x < p.eps => p.rate(),
                Side::Positive if x < 1.0 => p.integrate_magnitude(|y| (y > x) as u8 as f64),
                Side::Positive => 0.0,
                Side::Negative if x < -1.0 => p.rate(),
                Side::Negative if x < -p.eps => p.integrate_magnitude(|y| (-y > x) as u8 as f64),
                Side::Negative => 0.0,
            },
        }
    }

    /// `π((-∞, -x))`.
    pub fn tail_below(&self, x: f64) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.tail_below(x),
            JumpComponent::PowerLaw(p) => match p.side {
                Side::Negative if x < p.eps => p.rate(),
                Side::Negative if x < 1.0 => p.integrate_magnitude(|y| (y > x) as u8 as f64),
                Side::Negative => 0.0,
                Side::Positive if x < -1.0 => p.rate(),
                Side::Positive if x < -p.eps => p.integrate_magnitude(|y| (-y > x) as u8 as f64),
                Side::Positive => 0.0,
            },
        }
    }

    /// `∫_1^x π((y, ∞)) dy`; power-law parts live inside the unit ball.
    pub fn integrated_tail(&self, x: f64) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.integrated_tail(x),
            JumpComponent::PowerLaw(_) => 0.0,
        }
    }

    /// `∫ min(|z|, x)² π(dz)`.
    pub fn truncated_square(&self, x: f64) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => rate * law.truncated_square(x),
            JumpComponent::PowerLaw(p) => p.integrate_magnitude(|y| y.min(x).powi(2)),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            JumpComponent::CompoundPoisson { law, .. } => law.is_nonnegative(),
            JumpComponent::PowerLaw(p) => p.side == Side::Positive,
        }
    }

    /// Multiplies the jump measure by `exp(-kappa z)`; the second value is
    /// the change in drift needed to keep compensated parts compensated.
    pub fn tilt(&self, kappa: f64) -> Result<(JumpComponent, f64)> {
        match self {
            JumpComponent::CompoundPoisson { rate, law } => {
                let (factor, law) = law.tilt(kappa)?;
                let new_rate = rate * factor;
                if !new_rate.is_finite() || new_rate <= 0.0 {
                    return Err(Error::NonFinite(format!("tilted jump rate {new_rate}")));
                }
                Ok((JumpComponent::CompoundPoisson { rate: new_rate, law }, 0.0))
            }
            JumpComponent::PowerLaw(p) => {
                let shift = if p.compensated { -p.integrate(|z| -z * (-kappa * z).exp_m1()) } else { 0.0 };
                let tilted = PowerLawJumps::new(
                    p.scale,
                    p.index,
                    p.temper + kappa * p.side.sign(),
                    p.eps,
                    p.side,
                    p.compensated,
                )?;
                Ok((JumpComponent::PowerLaw(tilted), shift))
            }
        }
    }

    pub fn small_jump_variance(&self) -> f64 {
        match self {
            JumpComponent::CompoundPoisson { .. } => 0.0,
            JumpComponent::PowerLaw(p) => p.small_jump_variance(),
        }
    }
}
