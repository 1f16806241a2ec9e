use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{ensure, invalid, Error, Result};
use crate::quadrature::integrate_split;
use crate::stats::normal_cdf;

/// Sign of the support of a one-sided jump law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }
}

/// Law of the jump sizes of a compound Poisson component.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    Atom(f64),
    /// `(value, probability)` pairs; probabilities sum to one.
    Discrete(Vec<(f64, f64)>),
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Exponential magnitude with the given mean, placed on `side`.
    Exponential {
        mean: f64,
        side: Side,
    },
}

fn std_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Atom(c) => ensure(c.is_finite() && *c != 0.0, "law", "atom must be finite and non-zero"),
            JumpLaw::Discrete(pts) => {
                ensure(!pts.is_empty(), "law", "discrete law needs at least one point")?;
                for &(v, p) in pts {
                    ensure(v.is_finite() && v != 0.0, "law", "discrete values must be finite and non-zero")?;
                    ensure(p > 0.0 && p.is_finite(), "law", "discrete probabilities must be positive")?;
                }
                let total: f64 = pts.iter().map(|p| p.1).sum();
                ensure((total - 1.0).abs() < 1e-12, "law", "discrete probabilities must sum to 1")
            }
            JumpLaw::Normal { mean, sd } => {
                ensure(mean.is_finite(), "law", "normal mean must be finite")?;
                ensure(*sd > 0.0 && sd.is_finite(), "law", "normal sd must be positive")
            }
            JumpLaw::Exponential { mean, .. } => {
                ensure(*mean > 0.0 && mean.is_finite(), "law", "exponential mean must be positive")
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Atom(c) => *c,
            JumpLaw::Discrete(pts) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, p) in pts {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                pts[pts.len() - 1].0
            }
            JumpLaw::Normal { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            JumpLaw::Exponential { mean, side } => side.sign() * Exp::new(1.0 / mean).expect("validated").sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::Atom(c) => *c,
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| v * p).sum(),
            JumpLaw::Normal { mean, .. } => *mean,
            JumpLaw::Exponential { mean, side } => side.sign() * mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            JumpLaw::Atom(c) => c * c,
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| v * v * p).sum(),
            JumpLaw::Normal { mean, sd } => mean * mean + sd * sd,
            JumpLaw::Exponential { mean, .. } => 2.0 * mean * mean,
        }
    }

    /// Open interval of `q` for which `E[exp(qJ)]` is finite.
    pub fn exp_domain(&self) -> (f64, f64) {
        match self {
            JumpLaw::Exponential { mean, side: Side::Positive } => (f64::NEG_INFINITY, 1.0 / mean),
            JumpLaw::Exponential { mean, side: Side::Negative } => (-1.0 / mean, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `E[exp(qJ)]`.
    pub fn mgf(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.exp_domain();
        if q <= lo || q >= hi {
            return Err(Error::OutsideExponentialDomain { q, lower: lo, upper: hi });
        }
        Ok(match self {
            JumpLaw::Atom(c) => (q * c).exp(),
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| p * (q * v).exp()).sum(),
            JumpLaw::Normal { mean, sd } => (q * mean + 0.5 * q * q * sd * sd).exp(),
            JumpLaw::Exponential { mean, side } => 1.0 / (1.0 - side.sign() * q * mean),
        })
    }

    /// `E[exp(qJ) - 1]`, accurate for small `q`.
    pub fn mgf_minus_one(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.exp_domain();
        if q <= lo || q >= hi {
            return Err(Error::OutsideExponentialDomain { q, lower: lo, upper: hi });
        }
        Ok(match self {
            JumpLaw::Atom(c) => (q * c).exp_m1(),
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| p * (q * v).exp_m1()).sum(),
            JumpLaw::Normal { mean, sd } => (q * mean + 0.5 * q * q * sd * sd).exp_m1(),
            JumpLaw::Exponential { mean, side } => {
                let x = side.sign() * q * mean;
                x / (1.0 - x)
            }
        })
    }

    /// Derivative of the moment generating function, `E[J exp(qJ)]`.
    pub fn mgf_deriv(&self, q: f64) -> Result<f64> {
        let m = self.mgf(q)?;
        Ok(match self {
            JumpLaw::Atom(c) => c * m,
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| p * v * (q * v).exp()).sum(),
            JumpLaw::Normal { mean, sd } => (mean + q * sd * sd) * m,
            JumpLaw::Exponential { mean, side } => {
                let s = side.sign();
                s * mean * m * m
            }
        })
    }

    /// `P(-1 < J < 1)`.
    pub fn prob_inside_unit(&self) -> f64 {
        match self {
            JumpLaw::Atom(c) => (c.abs() < 1.0) as u8 as f64,
            JumpLaw::Discrete(pts) => pts.iter().filter(|p| p.0.abs() < 1.0).map(|p| p.1).sum(),
            JumpLaw::Normal { mean, sd } => normal_cdf((1.0 - mean) / sd) - normal_cdf((-1.0 - mean) / sd),
            JumpLaw::Exponential { mean, .. } => -(-1.0 / mean).exp_m1(),
        }
    }

    /// `E[J; |J| < 1]`.
    pub fn mean_inside_unit(&self) -> f64 {
        match self {
            JumpLaw::Atom(c) => {
                if c.abs() < 1.0 {
                    *c
                } else {
                    0.0
                }
            }
            JumpLaw::Discrete(pts) => pts.iter().filter(|p| p.0.abs() < 1.0).map(|&(v, p)| v * p).sum(),
            JumpLaw::Normal { mean, sd } => {
                let a = (-1.0 - mean) / sd;
                let b = (1.0 - mean) / sd;
                mean * self.prob_inside_unit() + sd * (std_pdf(a) - std_pdf(b))
            }
            JumpLaw::Exponential { mean, side } => {
                let r = 1.0 / mean;
                side.sign() * (-(-r).exp_m1() / r - (-r).exp())
            }
        }
    }

    /// `E[exp(J) - 1 - J; |J| < 1]`.
    pub fn exp_correction_inside_unit(&self) -> f64 {
        let f = |v: f64| if v.abs() < 1.0 { v.exp_m1() - v } else { 0.0 };
        match self {
            JumpLaw::Atom(c) => f(*c),
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| p * f(v)).sum(),
            JumpLaw::Normal { mean, sd } => {
                let a = (-1.0 - mean) / sd;
                let b = (1.0 - mean) / sd;
                let e = (mean + 0.5 * sd * sd).exp() * (normal_cdf(b - sd) - normal_cdf(a - sd));
                e - self.prob_inside_unit() - self.mean_inside_unit()
            }
            JumpLaw::Exponential { mean, side } => {
                let r = 1.0 / mean;
                let s = side.sign();
                // E[e^J; |J|<1] = r ∫_0^1 e^{(s - r) y} dy
                let k = s - r;
                let e = if k.abs() < 1e-12 { r } else { r * k.exp_m1() / k };
                e - self.prob_inside_unit() - self.mean_inside_unit()
            }
        }
    }

    /// `P(J > x)`.
    pub fn tail_above(&self, x: f64) -> f64 {
        match self {
            JumpLaw::Atom(c) => (*c > x) as u8 as f64,
            JumpLaw::Discrete(pts) => pts.iter().filter(|p| p.0 > x).map(|p| p.1).sum(),
            JumpLaw::Normal { mean, sd } => normal_cdf((mean - x) / sd),
            JumpLaw::Exponential { mean, side } => match side {
                Side::Positive if x >= 0.0 => (-x / mean).exp(),
                Side::Positive => 1.0,
                Side::Negative if x >= 0.0 => 0.0,
                Side::Negative => -(x / mean).exp_m1(),
            },
        }
    }

    /// `P(J < -x)`.
    pub fn tail_below(&self, x: f64) -> f64 {
        self.reflect().tail_above(x)
    }

    fn reflect(&self) -> JumpLaw {
        match self {
            JumpLaw::Atom(c) => JumpLaw::Atom(-c),
            JumpLaw::Discrete(pts) => JumpLaw::Discrete(pts.iter().map(|&(v, p)| (-v, p)).collect()),
            JumpLaw::Normal { mean, sd } => JumpLaw::Normal { mean: -mean, sd: *sd },
            JumpLaw::Exponential { mean, side } => JumpLaw::Exponential {
                mean: *mean,
                side: if *side == Side::Positive { Side::Negative } else { Side::Positive },
            },
        }
    }

    /// `∫_1^x P(J > y) dy` for `x ≥ 1`.
    pub fn integrated_tail(&self, x: f64) -> f64 {
        if x <= 1.0 {
            return 0.0;
        }
        let atom = |v: f64| (v.min(x) - 1.0).max(0.0);
        match self {
            JumpLaw::Atom(c) => atom(*c),
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| p * atom(v)).sum(),
            JumpLaw::Normal { mean, sd } => {
                // antiderivative of the normal survival function in standard units
                let g = |u: f64| u * normal_cdf(-u) - std_pdf(u);
                sd * (g((x - mean) / sd) - g((1.0 - mean) / sd))
            }
            JumpLaw::Exponential { mean, side: Side::Positive } => mean * ((-1.0 / mean).exp() - (-x / mean).exp()),
            JumpLaw::Exponential { side: Side::Negative, .. } => 0.0,
        }
    }

    /// `E[min(|J|, x)^2]`.
    pub fn truncated_square(&self, x: f64) -> f64 {
        let f = |v: f64| {
            let m = v.abs().min(x);
            m * m
        };
        match self {
            JumpLaw::Atom(c) => f(*c),
            JumpLaw::Discrete(pts) => pts.iter().map(|&(v, p)| p * f(v)).sum(),
            JumpLaw::Normal { mean, sd } => {
                let dens = |v: f64| std_pdf((v - mean) / sd) / sd * f(v);
                let lo = mean - 40.0 * sd;
                let hi = mean + 40.0 * sd;
                integrate_split(dens, lo, hi, &[-x, 0.0, x, *mean]).value
            }
            JumpLaw::Exponential { mean, .. } => {
                let r = 1.0 / mean;
                // ∫_0^x y² r e^{-ry} dy + x² e^{-rx}
                let e = (-r * x).exp();
                let inner = 2.0 / (r * r) - e * (x * x + 2.0 * x / r + 2.0 / (r * r));
                inner + x * x * e
            }
        }
    }

    /// Exponential tilt by `exp(-kappa J)`: returns `E[exp(-kappa J)]` and the
    /// renormalised law.
    pub fn tilt(&self, kappa: f64) -> Result<(f64, JumpLaw)> {
        let factor = self.mgf(-kappa)?;
        let law = match self {
            JumpLaw::Atom(c) => JumpLaw::Atom(*c),
            JumpLaw::Discrete(pts) => {
                JumpLaw::Discrete(pts.iter().map(|&(v, p)| (v, p * (-kappa * v).exp() / factor)).collect())
            }
            JumpLaw::Normal { mean, sd } => JumpLaw::Normal { mean: mean - kappa * sd * sd, sd: *sd },
            JumpLaw::Exponential { mean, side } => {
                JumpLaw::Exponential { mean: mean / (1.0 + side.sign() * kappa * mean), side: *side }
            }
        };
        if let JumpLaw::Discrete(pts) = &law {
            // keep the probabilities summing to one exactly enough for validation
            let total: f64 = pts.iter().map(|p| p.1).sum();
            let pts = pts.iter().map(|&(v, p)| (v, p / total)).collect();
            return Ok((factor, JumpLaw::Discrete(pts)));
        }
        Ok((factor, law))
    }

    /// True when the law puts no mass on negative values.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            JumpLaw::Atom(c) => *c > 0.0,
            JumpLaw::Discrete(pts) => pts.iter().all(|p| p.0 > 0.0),
            JumpLaw::Normal { .. } => false,
            JumpLaw::Exponential { side, .. } => *side == Side::Positive,
        }
    }

    /// Parses `atom(c)`, `normal(m,s)`, `exp(m)`, `negexp(m)` or
    /// `discrete(v1:p1;v2:p2;...)`.
    pub fn parse(text: &str) -> Result<JumpLaw> {
        let text = text.trim();
        let (name, rest) = text.split_once('(').ok_or_else(|| invalid("law", format!("cannot parse `{text}`")))?;
        let args = rest.strip_suffix(')').ok_or_else(|| invalid("law", format!("missing `)` in `{text}`")))?;
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| invalid("law", format!("`{s}` is not a number")))
        };
        let nums = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = args.split(',').map(num).collect::<Result<_>>()?;
            if v.len() != n {
                return Err(invalid("law", format!("`{name}` takes {n} argument(s)")));
            }
            Ok(v)
        };
        let law = match name.trim() {
            "atom" => JumpLaw::Atom(nums(1)?[0]),
            "normal" => {
                let v = nums(2)?;
                JumpLaw::Normal { mean: v[0], sd: v[1] }
            }
            "exp" => JumpLaw::Exponential { mean: nums(1)?[0], side: Side::Positive },
            "negexp" => JumpLaw::Exponential { mean: nums(1)?[0], side: Side::Negative },
            "discrete" => {
                let mut pts = Vec::new();
                for item in args.split(';') {
                    let (v, p) =
                        item.split_once(':').ok_or_else(|| invalid("law", "discrete points are written value:prob"))?;
                    pts.push((num(v)?, num(p)?));
                }
                JumpLaw::Discrete(pts)
            }
            other => return Err(invalid("law", format!("unknown jump law `{other}`"))),
        };
        law.validate()?;
        Ok(law)
    }
}
