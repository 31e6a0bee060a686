//! Standardized (location 0, scale 1) baseline error laws for the AFT model.
//!
//! `sigma` in [`BaselineSpec`] is the scale of the law on the log-time axis,
//! not its standard deviation: the loss divides `log t - yhat` by it
//! directly.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Upper bound on the exponent inside the extreme-value density, keeping
/// `exp(x)` finite.
const EXTREME_EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineFamily {
    /// Gumbel-minimum law, `F(x) = 1 - exp(-e^x)`; log of a Weibull variable.
    Extreme,
    Normal,
    Logistic,
}

impl BaselineFamily {
    pub const ALL: [BaselineFamily; 3] = [
        BaselineFamily::Extreme,
        BaselineFamily::Normal,
        BaselineFamily::Logistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineFamily::Extreme => "extreme",
            BaselineFamily::Normal => "normal",
            BaselineFamily::Logistic => "logistic",
        }
    }

    pub fn cdf(self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.cdf_unchecked(x))
    }

    pub fn pdf(self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.pdf_unchecked(x))
    }

    /// First derivative of the density.
    pub fn pdf_grad(self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.pdf_grad_unchecked(x))
    }

    /// Second derivative of the density.
    pub fn pdf_hess(self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.pdf_hess_unchecked(x))
    }

    /// Survival function `1 - F(x)`, evaluated without the cancellation of
    /// the naive subtraction.
    pub fn sf(self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.sf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(self, x: f64) -> f64 {
        match self {
            BaselineFamily::Extreme => -(-extreme_exp(x)).exp_m1(),
            BaselineFamily::Normal => 0.5 * erfc(-x / SQRT_2),
            BaselineFamily::Logistic => logistic(x),
        }
    }

    pub(crate) fn sf_unchecked(self, x: f64) -> f64 {
        match self {
            BaselineFamily::Extreme => (-extreme_exp(x)).exp(),
            BaselineFamily::Normal => 0.5 * erfc(x / SQRT_2),
            BaselineFamily::Logistic => logistic(-x),
        }
    }

    pub(crate) fn pdf_unchecked(self, x: f64) -> f64 {
        match self {
            BaselineFamily::Extreme => (x - extreme_exp(x)).exp(),
            BaselineFamily::Normal => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            BaselineFamily::Logistic => {
                let p = logistic(x);
                p * logistic(-x)
            }
        }
    }

    pub(crate) fn pdf_grad_unchecked(self, x: f64) -> f64 {
        let f = self.pdf_unchecked(x);
        if f == 0.0 {
            return 0.0;
        }
        match self {
            BaselineFamily::Extreme => f * (1.0 - extreme_exp(x)),
            BaselineFamily::Normal => -x * f,
            // f (e^-x - 1)/(1 + e^-x) = f (1 - 2p)
            BaselineFamily::Logistic => f * (logistic(-x) - logistic(x)),
        }
    }

    pub(crate) fn pdf_hess_unchecked(self, x: f64) -> f64 {
        let f = self.pdf_unchecked(x);
        if f == 0.0 {
            return 0.0;
        }
        match self {
            BaselineFamily::Extreme => {
                let e = extreme_exp(x);
                f * ((1.0 - e).powi(2) - e)
            }
            BaselineFamily::Normal => (x * x - 1.0) * f,
            // With p = F(x): f = p(1-p), f' = f(1-2p), f'' = f((1-2p)^2 - 2f).
            BaselineFamily::Logistic => {
                let d = logistic(-x) - logistic(x);
                f * (d * d - 2.0 * f)
            }
        }
    }
}

impl BaselineFamily {
    /// `ln f(x)` evaluated without underflow in the tails.
    pub(crate) fn ln_pdf_unchecked(self, x: f64) -> f64 {
        match self {
            BaselineFamily::Extreme => x - extreme_exp(x),
            BaselineFamily::Normal => -0.5 * x * x - 0.5 * (2.0 * PI).ln(),
            BaselineFamily::Logistic => -x.abs() - 2.0 * (-x.abs()).exp().ln_1p(),
        }
    }

    /// `(f'(x)/f(x), f''(x)/f(x))` in closed form.
    pub(crate) fn score_ratios_unchecked(self, x: f64) -> (f64, f64) {
        match self {
            BaselineFamily::Extreme => {
                let e = extreme_exp(x);
                (1.0 - e, (1.0 - e).powi(2) - e)
            }
            BaselineFamily::Normal => (-x, x * x - 1.0),
            BaselineFamily::Logistic => {
                let d = logistic(-x) - logistic(x);
                (d, d * d - 2.0 * self.pdf_unchecked(x))
            }
        }
    }
}

impl fmt::Display for BaselineFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extreme" => Ok(BaselineFamily::Extreme),
            "normal" => Ok(BaselineFamily::Normal),
            "logistic" => Ok(BaselineFamily::Logistic),
            other => Err(Error::Config(format!("unknown baseline family {other:?}"))),
        }
    }
}

/// A baseline family together with its scale on the log-time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub family: BaselineFamily,
    pub sigma: f64,
}

impl BaselineSpec {
    pub fn new(family: BaselineFamily, sigma: f64) -> Result<Self> {
        let spec = BaselineSpec { family, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "baseline sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

pub fn cdf(family: BaselineFamily, x: f64) -> Result<f64> {
    family.cdf(x)
}

pub fn pdf(family: BaselineFamily, x: f64) -> Result<f64> {
    family.pdf(x)
}

pub fn pdf_grad(family: BaselineFamily, x: f64) -> Result<f64> {
    family.pdf_grad(x)
}

pub fn pdf_hess(family: BaselineFamily, x: f64) -> Result<f64> {
    family.pdf_hess(x)
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be finite, got {x}")))
    }
}

#[inline]
fn extreme_exp(x: f64) -> f64 {
    x.min(EXTREME_EXP_CLAMP).exp()
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
