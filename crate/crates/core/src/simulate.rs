//! Synthetic right-censored data with copula-dependent censoring.
//!
//! Event times follow an AFT model `T = exp(h(X)) * R1` with Weibull noise,
//! censoring times `U = c * R2` ignore the covariates, and the dependence
//! between `T` and `U` is imposed afterwards by reordering both samples so
//! their ranks match a copula draw (Iman-Conover style rank induction). The
//! covariate rows travel with their event times.

use rand_distr::{Distribution, Open01, Weibull};
use serde::{Deserialize, Serialize};

use crate::copula::{kendall_tau, sample_pair, CopulaFamily, CopulaSpec};
use crate::data::{Matrix, SurvivalDataset};
use crate::distributions::{BaselineFamily, BaselineSpec};
use crate::error::{Error, Result};
use crate::loss::LossConfig;

/// Number of covariates; the last two do not enter `h`.
pub const N_FEATURES: usize = 10;

/// Smallest Clayton parameter handed to the loss when the data are
/// (near-)independent.
pub const MIN_CLAYTON_THETA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    /// Censoring scale: `U = c * R2`. Smaller values censor more.
    pub c: f64,
    pub copula: CopulaSpec,
    #[serde(default = "default_shape")]
    pub weibull_shape: f64,
    #[serde(default = "default_scale")]
    pub weibull_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_shape() -> f64 {
    3.0
}

fn default_scale() -> f64 {
    1.0
}

impl DgpConfig {
    pub fn new(n: usize, c: f64, copula: CopulaSpec, seed: u64) -> Self {
        DgpConfig {
            n,
            c,
            copula,
            weibull_shape: default_shape(),
            weibull_scale: default_scale(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        for (name, v) in [
            ("c", self.c),
            ("weibull_shape", self.weibull_shape),
            ("weibull_scale", self.weibull_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.copula.validate()
    }

    /// Clayton parameter the dependent-censoring loss should use for data
    /// from this configuration: the copula's own theta for Clayton data,
    /// otherwise the Clayton theta with the same Kendall's tau.
    pub fn implied_clayton_theta(&self) -> Result<f64> {
        if self.copula.family == CopulaFamily::Clayton {
            return Ok(self.copula.theta);
        }
        let tau = kendall_tau(&self.copula)?;
        Ok((2.0 * tau / (1.0 - tau)).max(MIN_CLAYTON_THETA))
    }

    /// The extreme-value AFT baseline of `log T` and `log U`; its scale is
    /// `1 / weibull_shape`.
    pub fn implied_baseline(&self) -> BaselineSpec {
        BaselineSpec {
            family: BaselineFamily::Extreme,
            sigma: 1.0 / self.weibull_shape,
        }
    }

    pub fn implied_loss(&self) -> Result<LossConfig> {
        Ok(LossConfig {
            loss: "clayton".into(),
            theta: Some(self.implied_clayton_theta()?),
            event_baseline: self.implied_baseline(),
            censor_baseline: Some(self.implied_baseline()),
        })
    }
}

/// `X1 X2 + X3^3 / 2 + X4 X5 + 0.8 exp(-X6) + X7 sin(2 X8)`; `X9`, `X10` are
/// noise.
pub fn h_function(x: &[f64]) -> Result<f64> {
    if x.len() != N_FEATURES {
        return Err(Error::Shape(format!(
            "h needs {N_FEATURES} covariates, got {}",
            x.len()
        )));
    }
    Ok(x[0] * x[1]
        + 0.5 * x[2].powi(3)
        + x[3] * x[4]
        + 0.8 * (-x[5]).exp()
        + x[6] * (2.0 * x[7]).sin())
}

/// Independent draws before dependence is induced.
#[derive(Debug, Clone, PartialEq)]
pub struct Margins {
    pub event_time: Vec<f64>,
    pub censor_time: Vec<f64>,
    pub features: Matrix,
}

pub fn draw_margins<R: rand::Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Result<Margins> {
    config.validate()?;
    let n = config.n;
    let values: Vec<f64> = (0..n * N_FEATURES).map(|_| rng.sample(Open01)).collect();
    let features = Matrix::new(n, N_FEATURES, values)?;
    let weibull = Weibull::new(config.weibull_scale, config.weibull_shape)
        .map_err(|e| Error::Config(format!("invalid Weibull parameters: {e}")))?;
    let r1: Vec<f64> = (0..n).map(|_| weibull.sample(rng)).collect();
    let r2: Vec<f64> = (0..n).map(|_| weibull.sample(rng)).collect();
    let event_time = features
        .rows()
        .zip(&r1)
        .map(|(x, r)| Ok(h_function(x)?.exp() * r))
        .collect::<Result<Vec<_>>>()?;
    let censor_time = r2.iter().map(|r| config.c * r).collect();
    Ok(Margins {
        event_time,
        censor_time,
        features,
    })
}

/// Ranks (0-based) with ties broken by position.
fn ranks(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0; v.len()];
    for (rank, &i) in order.iter().enumerate() {
        r[i] = rank;
    }
    r
}

/// Reorder `margins` so that `(T_W, U_W)` has exactly the ranks of `n`
/// copula draws. Covariate rows follow their event times.
pub fn induce_rank_correlation<R: rand::Rng + ?Sized>(
    margins: &Margins,
    copula: &CopulaSpec,
    rng: &mut R,
) -> Result<Margins> {
    let n = margins.event_time.len();
    if margins.censor_time.len() != n || margins.features.n_rows() != n {
        return Err(Error::Shape(format!(
            "event ({n}), censoring ({}) and covariate ({}) rows differ",
            margins.censor_time.len(),
            margins.features.n_rows()
        )));
    }
    if n < 2 {
        return Err(Error::Shape("rank induction needs at least two rows".into()));
    }
    let (w1, w2): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|_| sample_pair(copula, rng))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(reorder_by_ranks(margins, &w1, &w2))
}

/// Deterministic half of [`induce_rank_correlation`].
pub fn reorder_by_ranks(margins: &Margins, w1: &[f64], w2: &[f64]) -> Margins {
    let t = &margins.event_time;
    let u = &margins.censor_time;
    let mut t_order: Vec<usize> = (0..t.len()).collect();
    t_order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let mut u_sorted = u.clone();
    u_sorted.sort_by(f64::total_cmp);

    let rho1 = ranks(w1);
    let rho2 = ranks(w2);
    let src: Vec<usize> = rho1.iter().map(|&r| t_order[r]).collect();
    Margins {
        event_time: src.iter().map(|&i| t[i]).collect(),
        censor_time: rho2.iter().map(|&r| u_sorted[r]).collect(),
        features: margins.features.select_rows(&src),
    }
}

/// Censoring scale `c` at which a pilot draw of `pilot_n` rows is censored
/// in a fraction `target` of rows.
///
/// Rank induction only looks at ranks, so scaling `U` by `c` leaves the
/// pairing unchanged and a row is censored exactly when
/// `c < T_W / R2_W`; the answer is a quantile of that ratio.
pub fn calibrate_c(
    copula: &CopulaSpec,
    weibull_shape: f64,
    weibull_scale: f64,
    target: f64,
    pilot_n: usize,
    seed: u64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!(
            "censoring target must be in (0, 1), got {target}"
        )));
    }
    let mut cfg = DgpConfig::new(pilot_n, 1.0, *copula, seed);
    cfg.weibull_shape = weibull_shape;
    cfg.weibull_scale = weibull_scale;
    let pilot = generate(&cfg)?;
    let tw = pilot.data.true_event_time.as_ref().expect("simulated data has oracle");
    let uw = pilot.data.true_censor_time.as_ref().expect("simulated data has oracle");
    let mut ratio: Vec<f64> = tw.iter().zip(uw).map(|(t, u)| t / u).collect();
    ratio.sort_by(f64::total_cmp);
    // Censored iff ratio > c: put c between the order statistics that
    // leave round(target * n) rows above it.
    let n = ratio.len();
    let above = ((target * n as f64).round() as usize).clamp(1, n - 1);
    let k = n - above;
    Ok((ratio[k - 1] * ratio[k]).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub dgp: DgpConfig,
    pub n_events: usize,
    pub censoring_fraction: f64,
    /// Loss parameters matching the generating process.
    pub implied_loss: LossConfig,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// Observed data plus oracle `true_event_time` / `true_censor_time`.
    pub data: SurvivalDataset,
    pub metadata: SimulationMetadata,
}

/// Full pipeline: draw margins, induce dependence, censor.
pub fn generate(config: &DgpConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let mut rng = crate::rng_from_seed(config.seed);
    let margins = draw_margins(config, &mut rng)?;
    let induced = induce_rank_correlation(&margins, &config.copula, &mut rng)?;
    let (tw, uw) = (induced.event_time, induced.censor_time);
    let time: Vec<f64> = tw.iter().zip(&uw).map(|(&a, &b)| a.min(b)).collect();
    let event: Vec<bool> = tw.iter().zip(&uw).map(|(a, b)| a <= b).collect();
    let mut data = SurvivalDataset::new(time, event, induced.features)?;
    data.true_event_time = Some(tw);
    data.true_censor_time = Some(uw);
    let metadata = SimulationMetadata {
        dgp: *config,
        n_events: data.n_events(),
        censoring_fraction: data.censoring_fraction(),
        implied_loss: config.implied_loss()?,
    };
    Ok(SimulatedDataset { data, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::kendall_tau_sample;

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    }

    #[test]
    fn h_function_values() {
        assert!((h_function(&[0.0; 10]).unwrap() - 0.8).abs() < 1e-15);
        let expect = 1.0 + 0.5 + 1.0 + 0.8 * (-1f64).exp() + 2f64.sin();
        assert!((h_function(&[1.0; 10]).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 3.703_601).abs() < 1e-6);
        let mut x = [0.3; 10];
        let a = h_function(&x).unwrap();
        x[8] = 0.9;
        x[9] = 0.1;
        assert_eq!(h_function(&x).unwrap(), a);
        assert!(matches!(h_function(&[0.0; 9]), Err(Error::Shape(_))));
    }

    #[test]
    fn weibull_mean_matches_gamma_identity() {
        // Zero covariates are impossible to force through draw_margins, so
        // recover R1 = T / exp(h(X)).
        let cfg = DgpConfig::new(100_000, 1.0, CopulaSpec::independent(), 5);
        let m = draw_margins(&cfg, &mut crate::rng_from_seed(5)).unwrap();
        let mean_r1: f64 = m
            .features
            .rows()
            .zip(&m.event_time)
            .map(|(x, t)| t / h_function(x).unwrap().exp())
            .sum::<f64>()
            / cfg.n as f64;
        // Gamma(1 + 1/3)
        assert!((mean_r1 - 0.892_979_511_569_249).abs() < 0.005, "{mean_r1}");
        let mean_r2 = m.censor_time.iter().sum::<f64>() / cfg.n as f64;
        assert!((mean_r2 - 0.892_979_511_569_249).abs() < 0.005);
    }

    #[test]
    fn huge_c_means_no_censoring() {
        let sim = generate(&DgpConfig::new(2000, 1e9, CopulaSpec::clayton(3.0).unwrap(), 1)).unwrap();
        assert_eq!(sim.metadata.censoring_fraction, 0.0);
    }

    #[test]
    fn induction_preserves_marginals_and_copies_ranks() {
        let cfg = DgpConfig::new(500, 1.49, CopulaSpec::clayton(3.0).unwrap(), 9);
        let mut rng = crate::rng_from_seed(9);
        let m = draw_margins(&cfg, &mut rng).unwrap();
        let (w1, w2): (Vec<f64>, Vec<f64>) = (0..m.event_time.len())
            .map(|_| sample_pair(&cfg.copula, &mut rng).unwrap())
            .unzip();
        let out = reorder_by_ranks(&m, &w1, &w2);
        assert_eq!(sorted(&out.event_time), sorted(&m.event_time));
        assert_eq!(sorted(&out.censor_time), sorted(&m.censor_time));
        assert_eq!(ranks(&out.event_time), ranks(&w1));
        assert_eq!(ranks(&out.censor_time), ranks(&w2));
        assert_eq!(
            kendall_tau_sample(&out.event_time, &out.censor_time).unwrap(),
            kendall_tau_sample(&w1, &w2).unwrap()
        );
        // Each event time still sits next to the covariates that produced it.
        for (i, t) in out.event_time.iter().enumerate() {
            let j = m.event_time.iter().position(|s| s == t).unwrap();
            assert_eq!(out.features.row(i), m.features.row(j));
        }
    }

    #[test]
    fn induced_tau_and_conditional_law() {
        let cfg = DgpConfig::new(20_000, 1.49, CopulaSpec::clayton(3.0).unwrap(), 2);
        let sim = generate(&cfg).unwrap();
        let tw = sim.data.true_event_time.as_ref().unwrap();
        let uw = sim.data.true_censor_time.as_ref().unwrap();
        let tau = kendall_tau_sample(tw, uw).unwrap();
        assert!((tau - 0.6).abs() < 0.02, "{tau}");

        // Slope of log T_W on h(X_W) is 1.
        let hs: Vec<f64> = sim.data.features.rows().map(|x| h_function(x).unwrap()).collect();
        let ys: Vec<f64> = tw.iter().map(|t| t.ln()).collect();
        let n = hs.len() as f64;
        let (mh, my) = (hs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = hs.iter().zip(&ys).map(|(h, y)| (h - mh) * (y - my)).sum();
        let sxx: f64 = hs.iter().map(|h| (h - mh).powi(2)).sum();
        assert!((sxy / sxx - 1.0).abs() < 0.05, "slope {}", sxy / sxx);
    }

    #[test]
    fn rows_are_consistent() {
        let sim = generate(&DgpConfig::new(1000, 1.2, CopulaSpec::clayton(2.0).unwrap(), 4)).unwrap();
        let d = &sim.data;
        let (tw, uw) = (d.true_event_time.as_ref().unwrap(), d.true_censor_time.as_ref().unwrap());
        for i in 0..d.len() {
            if d.event[i] {
                assert_eq!(d.time[i], tw[i]);
                assert!(tw[i] <= uw[i]);
            } else {
                assert_eq!(d.time[i], uw[i]);
                assert!(uw[i] < tw[i]);
            }
        }
    }

    #[test]
    fn censoring_falls_as_c_grows() {
        let mut prev = 1.0;
        for c in [2.0, 3.0, 4.0, 6.0, 8.0] {
            let sim = generate(&DgpConfig::new(2000, c, CopulaSpec::clayton(3.0).unwrap(), 11)).unwrap();
            let frac = sim.metadata.censoring_fraction;
            assert!(frac <= prev, "c={c}: {frac}");
            prev = frac;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn calibrated_c_hits_target_on_pilot_and_fresh_draws() {
        let copula = CopulaSpec::clayton(3.0).unwrap();
        for target in [0.1, 0.5, 0.9] {
            let c = calibrate_c(&copula, 3.0, 1.0, target, 20_000, 77).unwrap();
            let pilot = generate(&DgpConfig::new(20_000, c, copula, 77)).unwrap();
            assert!((pilot.metadata.censoring_fraction - target).abs() < 1e-3);
            let fresh = generate(&DgpConfig::new(5_000, c, copula, 123)).unwrap();
            assert!((fresh.metadata.censoring_fraction - target).abs() < 0.03);
        }
    }

    #[test]
    fn deterministic_and_implied_loss() {
        let cfg = DgpConfig::new(300, 1.49, CopulaSpec::new(CopulaFamily::Gumbel, 2.5).unwrap(), 3);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        let loss = &a.metadata.implied_loss;
        assert!((loss.theta.unwrap() - 3.0).abs() < 1e-12);
        assert!((loss.event_baseline.sigma - 1.0 / 3.0).abs() < 1e-15);
        assert!(DgpConfig::new(1, 1.0, CopulaSpec::independent(), 0).validate().is_err());
    }
}
