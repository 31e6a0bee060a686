//! Bivariate Archimedean copulas: Clayton generator algebra, distribution
//! functions, Kendall's tau, and samplers for the Clayton, Gumbel, Frank and
//! product copulas.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp1, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

const DEBYE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Clayton,
    Gumbel,
    Frank,
    Independent,
}

impl CopulaFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Independent => "independent",
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clayton" => Ok(CopulaFamily::Clayton),
            "gumbel" => Ok(CopulaFamily::Gumbel),
            "frank" => Ok(CopulaFamily::Frank),
            "independent" => Ok(CopulaFamily::Independent),
            other => Err(Error::Config(format!("unknown copula family {other:?}"))),
        }
    }
}

/// A copula family with its dependence parameter. `theta` is ignored for
/// the independent copula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    #[serde(default)]
    pub theta: f64,
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self> {
        let spec = CopulaSpec { family, theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        Self::new(CopulaFamily::Clayton, theta)
    }

    pub fn independent() -> Self {
        CopulaSpec {
            family: CopulaFamily::Independent,
            theta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.theta;
        let ok = match self.family {
            CopulaFamily::Clayton => t.is_finite() && t > 0.0,
            CopulaFamily::Gumbel => t.is_finite() && t >= 1.0,
            CopulaFamily::Frank => t.is_finite() && t != 0.0,
            CopulaFamily::Independent => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "theta = {t} is outside the domain of the {} copula",
                self.family
            )))
        }
    }
}

/// Clayton generator `(t^-theta - 1) / theta`.
pub fn clayton_generator(theta: f64, t: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!(
            "Clayton generator needs t in (0, 1], got {t}"
        )));
    }
    Ok((-theta * t.ln()).exp_m1() / theta)
}

/// Inverse Clayton generator `(s theta + 1)^(-1/theta)`.
pub fn clayton_generator_inv(theta: f64, s: f64) -> Result<f64> {
    check_theta(theta)?;
    if s.is_nan() || s < 0.0 {
        return Err(Error::Domain(format!(
            "inverse Clayton generator needs s >= 0, got {s}"
        )));
    }
    Ok((-(s * theta).ln_1p() / theta).exp())
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Clayton theta must be > 0, got {theta}")))
    }
}

/// Evaluate `C_theta(u, v)`.
pub fn copula_cdf(spec: &CopulaSpec, u: f64, v: f64) -> Result<f64> {
    spec.validate()?;
    for (name, x) in [("u", u), ("v", v)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("{name} = {x} is outside [0, 1]")));
        }
    }
    if u == 0.0 || v == 0.0 {
        return Ok(0.0);
    }
    if u == 1.0 {
        return Ok(v);
    }
    if v == 1.0 {
        return Ok(u);
    }
    let theta = spec.theta;
    let c = match spec.family {
        CopulaFamily::Clayton => {
            let s = (-theta * u.ln()).exp_m1() + (-theta * v.ln()).exp_m1();
            (-s.ln_1p() / theta).exp()
        }
        CopulaFamily::Gumbel => {
            let a = (-u.ln()).powf(theta) + (-v.ln()).powf(theta);
            (-a.powf(1.0 / theta)).exp()
        }
        CopulaFamily::Frank => {
            let num = (-theta * u).exp_m1() * (-theta * v).exp_m1();
            -(num / (-theta).exp_m1()).ln_1p() / theta
        }
        CopulaFamily::Independent => u * v,
    };
    Ok(c.clamp(0.0, u.min(v)))
}

/// First-order Debye function `D_1(x) = (1/x) * integral_0^x t / (e^t - 1) dt`.
pub fn debye1(x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(1.0);
    }
    let integrand = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    Ok(adaptive_simpson(integrand, 0.0, x, DEBYE_TOL)? / x)
}

/// Population Kendall's tau implied by the copula.
pub fn kendall_tau(spec: &CopulaSpec) -> Result<f64> {
    spec.validate()?;
    let t = spec.theta;
    Ok(match spec.family {
        CopulaFamily::Clayton => t / (t + 2.0),
        CopulaFamily::Gumbel => (t - 1.0) / t,
        CopulaFamily::Frank => 1.0 + 4.0 / t * (debye1(t)? - 1.0),
        CopulaFamily::Independent => 0.0,
    })
}

/// Draw one pair `(W1, W2)` with uniform margins and joint law `C_theta`.
pub fn sample_pair<R: rand::Rng + ?Sized>(spec: &CopulaSpec, rng: &mut R) -> Result<(f64, f64)> {
    spec.validate()?;
    let theta = spec.theta;
    match spec.family {
        CopulaFamily::Clayton => {
            // Marshall-Olkin with Gamma(1/theta, 1) frailty.
            let gamma = Gamma::new(1.0 / theta, 1.0).map_err(|e| {
                Error::Numeric(format!("Gamma(1/{theta}, 1) frailty unavailable: {e}"))
            })?;
            let k: f64 = gamma.sample(rng);
            let mut draw = || {
                let x: f64 = rng.sample(Open01);
                // (1 - log(x)/k)^(-1/theta)
                (-(-x.ln() / k).ln_1p() / theta).exp()
            };
            Ok((draw(), draw()))
        }
        CopulaFamily::Gumbel => {
            if theta == 1.0 {
                return Ok((rng.sample(Open01), rng.sample(Open01)));
            }
            let alpha = 1.0 / theta;
            let scale = (PI / (2.0 * theta)).cos().powf(theta);
            let v1: f64 = rng.sample(Open01);
            let v2: f64 = rng.sample(Open01);
            let z = stable_cms(alpha, 1.0, scale, 0.0, rng)?;
            if z.is_nan() || z <= 0.0 {
                return Err(Error::Numeric(format!(
                    "positive-stable draw for Gumbel theta={theta} returned {z}"
                )));
            }
            let u = |v: f64| (-(-v.ln() / z).powf(alpha)).exp();
            Ok((u(v1), u(v2)))
        }
        CopulaFamily::Frank => {
            // Conditional inverse of dC/du1.
            let v: f64 = rng.sample(Open01);
            let u1: f64 = rng.sample(Open01);
            let e = (-theta * u1).exp();
            let u2 = -(v * (-theta).exp_m1() / (v + (1.0 - v) * e)).ln_1p() / theta;
            Ok((u1, u2.clamp(0.0, 1.0)))
        }
        CopulaFamily::Independent => Ok((rng.sample(Open01), rng.sample(Open01))),
    }
}

/// Chambers-Mallows-Stuck draw from the stable law `S(alpha, beta, scale,
/// loc)` (1-parameterization), `alpha != 1`.
pub fn stable_cms<R: rand::Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    scale: f64,
    loc: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0 && alpha != 1.0) || !(-1.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!(
            "stable law needs alpha in (0, 2] \\ {{1}} and |beta| <= 1, got alpha={alpha}, beta={beta}"
        )));
    }
    let u: f64 = rng.sample(Open01);
    let v = PI * (u - 0.5);
    let w: f64 = rng.sample(Exp1);
    let tan = beta * (FRAC_PI_2 * alpha).tan();
    let b = tan.atan() / alpha;
    let s = (1.0 + tan * tan).powf(0.5 / alpha);
    let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    let out = scale * x + loc;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Numeric(format!(
            "stable draw (alpha={alpha}, beta={beta}) is not finite"
        )))
    }
}
