//! Per-observation objectives on the predicted log time `yhat = h(x)`.
//!
//! [`ClaytonAftLoss`] is the negative log-likelihood of a right-censored
//! observation when event and censoring times are joined by a Clayton
//! survival copula, with both margins given by AFT models sharing `yhat`.
//! [`IndependentAftLoss`] is the usual AFT likelihood under independent
//! censoring.
//!
//! Survival probabilities are clamped to `[EPS, 1 - EPS]` before use and the
//! reported Hessian is floored at [`HESSIAN_FLOOR`] so the booster's leaf
//! weights stay well defined.

use serde::{Deserialize, Serialize};

use crate::distributions::{BaselineFamily, BaselineSpec};
use crate::error::{Error, Result};

/// Clamp applied to every distribution function value.
pub const EPS: f64 = 1e-12;
/// Smallest curvature handed to the booster.
pub const HESSIAN_FLOOR: f64 = 1e-6;
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossEval {
    pub value: f64,
    pub grad: f64,
    pub hess: f64,
}

/// `(log t - yhat) / sigma`; the standardized residual `s` (event margin) or
/// `r` (censoring margin).
pub fn transform(t: f64, yhat: f64, sigma: f64) -> Result<f64> {
    check_time(t)?;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok((t.ln() - yhat) / sigma)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

fn check_inputs(t: f64, yhat: f64) -> Result<()> {
    check_time(t)?;
    if yhat.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("prediction must be finite, got {yhat}")))
    }
}

/// Everything the objectives need about one margin at one observation, with
/// derivatives taken in `yhat` (so `dq/dyhat = -1/sigma`).
#[derive(Debug, Clone, Copy)]
struct Margin {
    /// ln S(q), S clamped to [EPS, 1 - EPS].
    ln_surv: f64,
    /// dS/dyhat / S.
    dlog_surv: f64,
    /// d2S/dyhat2 / S.
    d2_over_surv: f64,
    /// ln( f(q) / (sigma t) ).
    ln_density: f64,
    /// d/dyhat of -ln f(q).
    dneg_ln_f: f64,
    /// d2/dyhat2 of -ln f(q).
    d2neg_ln_f: f64,
}

impl Margin {
    fn at(spec: &BaselineSpec, t: f64, yhat: f64) -> Margin {
        let sigma = spec.sigma;
        let fam: BaselineFamily = spec.family;
        let q = (t.ln() - yhat) / sigma;
        let surv = fam.sf_unchecked(q).clamp(EPS, 1.0 - EPS);
        let dens = fam.pdf_unchecked(q);
        let (r1, r2) = fam.score_ratios_unchecked(q);
        let hazard = dens / surv;
        Margin {
            ln_surv: surv.ln(),
            // dS/dyhat = -f dq = f/sigma
            dlog_surv: hazard / sigma,
            // d2S/dyhat2 = -f' dq^2 = -f'/sigma^2
            d2_over_surv: -r1 * hazard / (sigma * sigma),
            ln_density: fam.ln_pdf_unchecked(q).max(LOG_FLOOR.ln()) - (sigma * t).ln(),
            dneg_ln_f: r1 / sigma,
            d2neg_ln_f: (r1 * r1 - r2) / (sigma * sigma),
        }
    }
}

/// Dependent-censoring AFT loss with a Clayton survival copula of strength
/// `theta` between event and censoring times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaytonAftLoss {
    pub theta: f64,
    pub event_baseline: BaselineSpec,
    pub censor_baseline: BaselineSpec,
}

impl ClaytonAftLoss {
    pub fn new(theta: f64, event_baseline: BaselineSpec, censor_baseline: BaselineSpec) -> Result<Self> {
        let loss = ClaytonAftLoss {
            theta,
            event_baseline,
            censor_baseline,
        };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::Config(format!(
                "Clayton loss theta must be > 0, got {}",
                self.theta
            )));
        }
        self.event_baseline.validate()?;
        self.censor_baseline.validate()
    }

    /// Value, gradient and unfloored Hessian.
    pub fn evaluate_raw(&self, t: f64, event: bool, yhat: f64) -> Result<LossEval> {
        check_inputs(t, yhat)?;
        let theta = self.theta;
        let z = Margin::at(&self.event_baseline, t, yhat);
        let v = Margin::at(&self.censor_baseline, t, yhat);

        // Copula term (1 + 1/theta) ln(A^-theta + B^-theta - 1), A = S_Z(s), B = S_V(r).
        let em1_a = (-theta * z.ln_surv).exp_m1();
        let em1_b = (-theta * v.ln_surv).exp_m1();
        let bracket = (1.0 + em1_a + em1_b).max(LOG_FLOOR);
        let ln_bracket = if bracket > LOG_FLOOR {
            (em1_a + em1_b).ln_1p()
        } else {
            LOG_FLOOR.ln()
        };
        let copula_value = (1.0 + 1.0 / theta) * ln_bracket;

        // theta is factored out of the bracket derivatives so the limit
        // theta -> 0 stays exact. wa = A^-theta / bracket.
        let wa = (1.0 + em1_a) / bracket;
        let wb = (1.0 + em1_b) / bracket;
        let first = -(wa * z.dlog_surv + wb * v.dlog_surv);
        let second = wa * ((theta + 1.0) * z.dlog_surv.powi(2) - z.d2_over_surv)
            + wb * ((theta + 1.0) * v.dlog_surv.powi(2) - v.d2_over_surv);
        let copula_grad = (1.0 + theta) * first;
        let copula_hess = (1.0 + theta) * (second - theta * first * first);

        // Branch term: (1 + theta) ln S_W(q) - ln f_W(q)/(sigma_W t).
        let w = if event { z } else { v };
        let branch_value = (1.0 + theta) * w.ln_surv - w.ln_density;
        let branch_grad = (1.0 + theta) * w.dlog_surv + w.dneg_ln_f;
        let branch_hess =
            (1.0 + theta) * (w.d2_over_surv - w.dlog_surv.powi(2)) + w.d2neg_ln_f;

        finite(LossEval {
            value: copula_value + branch_value,
            grad: copula_grad + branch_grad,
            hess: copula_hess + branch_hess,
        })
    }

    /// Value, gradient and Hessian floored at [`HESSIAN_FLOOR`].
    pub fn evaluate(&self, t: f64, event: bool, yhat: f64) -> Result<LossEval> {
        self.evaluate_raw(t, event, yhat).map(floor_hessian)
    }
}

/// AFT negative log-likelihood under independent censoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependentAftLoss {
    pub event_baseline: BaselineSpec,
}

impl IndependentAftLoss {
    pub fn new(event_baseline: BaselineSpec) -> Result<Self> {
        event_baseline.validate()?;
        Ok(IndependentAftLoss { event_baseline })
    }

    pub fn evaluate_raw(&self, t: f64, event: bool, yhat: f64) -> Result<LossEval> {
        check_inputs(t, yhat)?;
        let z = Margin::at(&self.event_baseline, t, yhat);
        let eval = if event {
            LossEval {
                value: -z.ln_density,
                grad: z.dneg_ln_f,
                hess: z.d2neg_ln_f,
            }
        } else {
            LossEval {
                value: -z.ln_surv,
                grad: -z.dlog_surv,
                hess: z.dlog_surv.powi(2) - z.d2_over_surv,
            }
        };
        finite(eval)
    }

    pub fn evaluate(&self, t: f64, event: bool, yhat: f64) -> Result<LossEval> {
        self.evaluate_raw(t, event, yhat).map(floor_hessian)
    }
}

fn floor_hessian(mut e: LossEval) -> LossEval {
    e.hess = e.hess.max(HESSIAN_FLOOR);
    e
}

fn finite(e: LossEval) -> Result<LossEval> {
    if e.value.is_finite() && e.grad.is_finite() && e.hess.is_finite() {
        Ok(e)
    } else {
        Err(Error::Numeric(format!("non-finite loss evaluation {e:?}")))
    }
}

pub fn clayton_loss(spec: &ClaytonAftLoss, t: f64, event: bool, yhat: f64) -> Result<f64> {
    Ok(spec.evaluate_raw(t, event, yhat)?.value)
}

pub fn clayton_grad(spec: &ClaytonAftLoss, t: f64, event: bool, yhat: f64) -> Result<f64> {
    Ok(spec.evaluate_raw(t, event, yhat)?.grad)
}

/// Hessian after flooring.
pub fn clayton_hess(spec: &ClaytonAftLoss, t: f64, event: bool, yhat: f64) -> Result<f64> {
    Ok(spec.evaluate(t, event, yhat)?.hess)
}

pub fn independent_loss(spec: &IndependentAftLoss, t: f64, event: bool, yhat: f64) -> Result<f64> {
    Ok(spec.evaluate_raw(t, event, yhat)?.value)
}

pub fn independent_grad(spec: &IndependentAftLoss, t: f64, event: bool, yhat: f64) -> Result<f64> {
    Ok(spec.evaluate_raw(t, event, yhat)?.grad)
}

pub fn independent_hess(spec: &IndependentAftLoss, t: f64, event: bool, yhat: f64) -> Result<f64> {
    Ok(spec.evaluate(t, event, yhat)?.hess)
}

/// The objective a model is trained with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Clayton(ClaytonAftLoss),
    Independent(IndependentAftLoss),
}

impl LossSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            LossSpec::Clayton(_) => "clayton",
            LossSpec::Independent(_) => "independent",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Clayton(l) => l.validate(),
            LossSpec::Independent(l) => l.event_baseline.validate(),
        }
    }

    /// Value, gradient and floored Hessian.
    pub fn evaluate(&self, t: f64, event: bool, yhat: f64) -> Result<LossEval> {
        match self {
            LossSpec::Clayton(l) => l.evaluate(t, event, yhat),
            LossSpec::Independent(l) => l.evaluate(t, event, yhat),
        }
    }

    pub fn value(&self, t: f64, event: bool, yhat: f64) -> Result<f64> {
        Ok(self.evaluate(t, event, yhat)?.value)
    }
}

/// On-disk form: `{"loss": "clayton"|"independent", "theta", "event_baseline",
/// "censor_baseline"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub loss: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub event_baseline: BaselineSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censor_baseline: Option<BaselineSpec>,
}

impl From<&LossSpec> for LossConfig {
    fn from(spec: &LossSpec) -> Self {
        match spec {
            LossSpec::Clayton(l) => LossConfig {
                loss: "clayton".into(),
                theta: Some(l.theta),
                event_baseline: l.event_baseline,
                censor_baseline: Some(l.censor_baseline),
            },
            LossSpec::Independent(l) => LossConfig {
                loss: "independent".into(),
                theta: None,
                event_baseline: l.event_baseline,
                censor_baseline: None,
            },
        }
    }
}

impl TryFrom<LossConfig> for LossSpec {
    type Error = Error;

    fn try_from(cfg: LossConfig) -> Result<Self> {
        match cfg.loss.as_str() {
            "clayton" => {
                let theta = cfg
                    .theta
                    .ok_or_else(|| Error::Config("clayton loss requires \"theta\"".into()))?;
                let censor = cfg.censor_baseline.ok_or_else(|| {
                    Error::Config("clayton loss requires \"censor_baseline\"".into())
                })?;
                Ok(LossSpec::Clayton(ClaytonAftLoss::new(
                    theta,
                    cfg.event_baseline,
                    censor,
                )?))
            }
            "independent" => Ok(LossSpec::Independent(IndependentAftLoss::new(
                cfg.event_baseline,
            )?)),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

impl Serialize for LossSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LossConfig::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for LossSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cfg = LossConfig::deserialize(d)?;
        LossSpec::try_from(cfg).map_err(serde::de::Error::custom)
    }
}
