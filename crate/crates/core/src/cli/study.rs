//! Repeated simulate / cross-validate / evaluate runs comparing the Clayton
//! loss against the independent-censoring loss.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{run_cv, CvConfig};
use crate::booster::{predict_time, TrainConfig};
use crate::copula::{CopulaFamily, CopulaSpec};
use crate::distributions::{BaselineFamily, BaselineSpec};
use crate::error::{Error, Result};
use crate::loss::{ClaytonAftLoss, IndependentAftLoss, LossSpec};
use crate::metrics::{evaluate, CalibrationCurve, DEFAULT_HORIZONS};
use crate::simulate::{calibrate_c, generate, DgpConfig, MIN_CLAYTON_THETA};

pub const CLAYTON_BOOST: &str = "clayton-boost";
pub const STD_BOOST: &str = "std-boost";

/// One setting of the data-generating process. Exactly one of `c` and
/// `censoring` is given; a `censoring` target is turned into `c` with
/// [`calibrate_c`] on a pilot draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyPoint {
    pub label: String,
    pub copula: CopulaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censoring: Option<f64>,
}

/// Round search settings shared by both methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyCv {
    pub folds: usize,
    pub max_rounds: usize,
    pub checkpoint_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: u8,
    pub repetitions: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Repetition `r` uses seed `base_seed + r` for its train and test draws.
    pub base_seed: u64,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    /// Baseline for both margins in both losses.
    pub baseline: BaselineSpec,
    pub grid: Vec<StudyPoint>,
    pub train: TrainConfig,
    pub cv: StudyCv,
    pub n_horizons: usize,
    /// Rows in the pilot draw used to calibrate `c` from a censoring target.
    pub pilot_n: usize,
}

fn clayton(theta: f64) -> CopulaSpec {
    CopulaSpec::clayton(theta).expect("preset theta is valid")
}

impl StudyConfig {
    /// The built-in configuration of study 1, 2 or 3 at the given number of
    /// repetitions.
    pub fn preset(study: u8, repetitions: usize) -> Result<Self> {
        let at = |label: String, copula: CopulaSpec, censoring: f64| StudyPoint {
            label,
            copula,
            c: None,
            censoring: Some(censoring),
        };
        let grid = match study {
            1 => std::iter::once(MIN_CLAYTON_THETA)
                .chain((1..=8).map(f64::from))
                .map(|t| {
                    let label = if t < 1e-3 { format!("theta={t:e}") } else { format!("theta={t}") };
                    at(label, clayton(t), 0.5)
                })
                .collect(),
            2 => (1..=9)
                .map(|k| {
                    let p = f64::from(k) / 10.0;
                    at(format!("censoring={p}"), clayton(3.0), p)
                })
                .collect(),
            3 => vec![
                at("clayton".into(), clayton(3.0), 0.7),
                at("gumbel".into(), CopulaSpec::new(CopulaFamily::Gumbel, 2.5)?, 0.7),
                at("frank".into(), CopulaSpec::new(CopulaFamily::Frank, 7.5)?, 0.7),
                at("independent".into(), CopulaSpec::independent(), 0.7),
            ],
            _ => return Err(Error::Config(format!("study must be 1, 2 or 3, got {study}"))),
        };
        Ok(StudyConfig {
            study,
            repetitions,
            n_train: 1000,
            n_test: 1000,
            base_seed: 20_240,
            weibull_shape: 3.0,
            weibull_scale: 1.0,
            baseline: BaselineSpec::new(BaselineFamily::Extreme, 1.0 / 3.0)?,
            grid,
            train: TrainConfig::default(),
            cv: StudyCv {
                folds: 2,
                max_rounds: 500,
                checkpoint_stride: 25,
            },
            n_horizons: DEFAULT_HORIZONS,
            pilot_n: 20_000,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.study) {
            return bad(format!("study must be 1, 2 or 3, got {}", self.study));
        }
        if self.repetitions < 1 {
            return bad("repetitions must be >= 1".into());
        }
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        for p in &self.grid {
            p.copula.validate()?;
            match (p.c, p.censoring) {
                (Some(c), None) if c.is_finite() && c > 0.0 => {}
                (None, Some(q)) if q > 0.0 && q < 1.0 => {}
                _ => {
                    return bad(format!(
                        "grid point {:?}: give exactly one of a positive c or a censoring target in (0, 1)",
                        p.label
                    ))
                }
            }
        }
        self.baseline.validate()?;
        self.dgp(&self.grid[0], 1.0, self.n_train, 0).validate()?;
        self.dgp(&self.grid[0], 1.0, self.n_test, 0).validate()?;
        if self.pilot_n < 2 {
            return bad("pilot_n must be >= 2".into());
        }
        self.cv_config(LossSpec::Independent(IndependentAftLoss::new(self.baseline)?), 0)
            .validate()
    }

    fn dgp(&self, point: &StudyPoint, c: f64, n: usize, seed: u64) -> DgpConfig {
        DgpConfig {
            n,
            c,
            copula: point.copula,
            weibull_shape: self.weibull_shape,
            weibull_scale: self.weibull_scale,
            seed,
        }
    }

    fn cv_config(&self, loss: LossSpec, seed: u64) -> CvConfig {
        CvConfig {
            folds: self.cv.folds,
            max_rounds: self.cv.max_rounds,
            checkpoint_stride: self.cv.checkpoint_stride,
            theta_grid: None,
            loss,
            train: self.train,
            seed,
        }
    }

    fn resolve_c(&self, point: &StudyPoint) -> Result<f64> {
        match (point.c, point.censoring) {
            (Some(c), _) => Ok(c),
            (None, Some(q)) => calibrate_c(
                &point.copula,
                self.weibull_shape,
                self.weibull_scale,
                q,
                self.pilot_n,
                self.base_seed,
            ),
            (None, None) => Err(Error::Config(format!("grid point {:?} has no c", point.label))),
        }
    }
}

/// One method on one repetition of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub study: u8,
    pub point: usize,
    pub label: String,
    pub copula: CopulaFamily,
    pub copula_theta: f64,
    pub c: f64,
    pub censoring_target: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    pub method: String,
    pub loss_theta: Option<f64>,
    pub train_censoring: f64,
    pub test_censoring: f64,
    pub rounds: usize,
    pub cv_c_index: f64,
    pub mae: f64,
    pub c_index: f64,
    pub event_mae: Option<f64>,
    pub calibration_mad: f64,
}

/// Mean over repetitions for one grid point and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub study: u8,
    pub point: usize,
    pub label: String,
    pub copula: CopulaFamily,
    pub copula_theta: f64,
    pub c: f64,
    pub censoring_target: Option<f64>,
    pub method: String,
    pub loss_theta: Option<f64>,
    pub repetitions: usize,
    pub mean_test_censoring: f64,
    pub mean_rounds: f64,
    pub mean_mae: f64,
    pub sd_mae: Option<f64>,
    pub mean_c_index: f64,
    pub sd_c_index: Option<f64>,
    pub mean_event_mae: Option<f64>,
    /// Mean absolute diagonal deviation of the averaged calibration curve.
    pub calibration_mad: f64,
}

/// Long-format averaged calibration curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub study: u8,
    pub point: usize,
    pub label: String,
    pub method: String,
    pub horizon_index: usize,
    pub horizon: f64,
    pub predicted_proportion: f64,
    pub observed_proportion: f64,
}

/// Saved result of one `(point, repetition)` task, used to resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Partial {
    config: StudyConfig,
    rows: Vec<RepetitionRow>,
    curves: Vec<CalibrationCurve>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub repetitions: Vec<RepetitionRow>,
    pub summary: Vec<SummaryRow>,
    pub calibration: Vec<CalibrationRow>,
    pub files: Vec<PathBuf>,
}

impl StudyOutcome {
    pub fn summary_for(&self, label: &str, method: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.label == label && r.method == method)
    }

    /// Averaged calibration curve of one grid point and method.
    pub fn curve_for(&self, label: &str, method: &str) -> CalibrationCurve {
        let rows: Vec<&CalibrationRow> = self
            .calibration
            .iter()
            .filter(|r| r.label == label && r.method == method)
            .collect();
        CalibrationCurve {
            horizons: rows.iter().map(|r| r.horizon).collect(),
            predicted_proportion: rows.iter().map(|r| r.predicted_proportion).collect(),
            observed_proportion: rows.iter().map(|r| r.observed_proportion).collect(),
            degenerate: false,
        }
    }
}

fn run_task(
    cfg: &StudyConfig,
    point_idx: usize,
    c: f64,
    rep: usize,
) -> Result<(Vec<RepetitionRow>, Vec<CalibrationCurve>)> {
    let point = &cfg.grid[point_idx];
    let seed = cfg.base_seed + rep as u64;
    let train = generate(&cfg.dgp(point, c, cfg.n_train, 2 * seed))?;
    let test = generate(&cfg.dgp(point, c, cfg.n_test, 2 * seed + 1))?;
    let theta = train.metadata.dgp.implied_clayton_theta()?;
    let methods = [
        (
            CLAYTON_BOOST,
            LossSpec::Clayton(ClaytonAftLoss::new(theta, cfg.baseline, cfg.baseline)?),
        ),
        (STD_BOOST, LossSpec::Independent(IndependentAftLoss::new(cfg.baseline)?)),
    ];
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (name, loss) in methods {
        let (cv, model) = run_cv(&train.data, &cfg.cv_config(loss, seed))?;
        let pred = predict_time(&model, &test.data.features)?;
        let report = evaluate(&test.data, &pred, cfg.n_horizons)?;
        rows.push(RepetitionRow {
            study: cfg.study,
            point: point_idx,
            label: point.label.clone(),
            copula: point.copula.family,
            copula_theta: point.copula.theta,
            c,
            censoring_target: point.censoring,
            repetition: rep,
            seed,
            method: name.to_string(),
            loss_theta: cv.best.theta,
            train_censoring: train.metadata.censoring_fraction,
            test_censoring: test.metadata.censoring_fraction,
            rounds: cv.best.rounds,
            cv_c_index: cv.best.mean_c_index,
            mae: report.mae.ok_or_else(|| Error::Numeric("simulated test set lost its oracle".into()))?,
            c_index: report.c_index,
            event_mae: report.event_mae,
            calibration_mad: report.calibration.mean_abs_deviation(),
        });
        curves.push(report.calibration);
    }
    Ok((rows, curves))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> Option<f64> {
    (v.len() > 1).then(|| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse a CSV written by this module back into its row type.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 2))))
        .collect()
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Run every grid point and repetition, writing results under `out`.
///
/// Each finished `(point, repetition)` task is saved under `out/partial`;
/// a rerun with the same configuration reuses those files. Final tables are
/// sorted by point, repetition and method, so they do not depend on the
/// order in which tasks finish.
pub fn run_study(cfg: &StudyConfig, out: &Path) -> Result<StudyOutcome> {
    cfg.validate()?;
    let partial_dir = out.join("partial");
    fs::create_dir_all(&partial_dir).map_err(|e| Error::io(&partial_dir, e))?;
    let c_values: Vec<f64> = cfg.grid.iter().map(|p| cfg.resolve_c(p)).collect::<Result<_>>()?;
    for (p, c) in cfg.grid.iter().zip(&c_values) {
        log::info!("study {}: {} uses c = {c:.6}", cfg.study, p.label);
    }

    let tasks: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|p| (0..cfg.repetitions).map(move |r| (p, r)))
        .collect();
    let results: Vec<(Vec<RepetitionRow>, Vec<CalibrationCurve>)> = tasks
        .par_iter()
        .map(|&(p, r)| {
            let path = partial_dir.join(format!("study{}_p{p}_r{r}.json", cfg.study));
            if let Ok(text) = fs::read_to_string(&path) {
                if let Ok(saved) = serde_json::from_str::<Partial>(&text) {
                    if saved.config == *cfg {
                        log::info!("reusing {}", path.display());
                        return Ok((saved.rows, saved.curves));
                    }
                }
            }
            let (rows, curves) = run_task(cfg, p, c_values[p], r)?;
            let saved = Partial {
                config: cfg.clone(),
                rows,
                curves,
            };
            let text = serde_json::to_string(&saved).map_err(|e| Error::Persistence(e.to_string()))?;
            write_atomic(&path, &text)?;
            log::info!("study {}: {} repetition {r} done", cfg.study, cfg.grid[p].label);
            Ok((saved.rows, saved.curves))
        })
        .collect::<Result<_>>()?;

    let methods = [CLAYTON_BOOST, STD_BOOST];
    let mut repetitions = Vec::new();
    let mut summary = Vec::new();
    let mut calibration = Vec::new();
    for (p, point) in cfg.grid.iter().enumerate() {
        let block = &results[p * cfg.repetitions..(p + 1) * cfg.repetitions];
        for (m, method) in methods.iter().enumerate() {
            let rows: Vec<&RepetitionRow> = block.iter().map(|(rows, _)| &rows[m]).collect();
            let curves: Vec<&CalibrationCurve> = block.iter().map(|(_, c)| &c[m]).collect();
            let col = |f: fn(&RepetitionRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let maes = col(|r| r.mae);
            let cis = col(|r| r.c_index);
            let event_maes: Option<Vec<f64>> = rows.iter().map(|r| r.event_mae).collect();

            let full: Vec<&&CalibrationCurve> =
                curves.iter().filter(|c| c.horizons.len() == cfg.n_horizons).collect();
            let avg = |f: fn(&CalibrationCurve) -> &Vec<f64>| -> Vec<f64> {
                (0..cfg.n_horizons)
                    .map(|k| full.iter().map(|c| f(c)[k]).sum::<f64>() / full.len().max(1) as f64)
                    .collect()
            };
            let curve = CalibrationCurve {
                horizons: avg(|c| &c.horizons),
                predicted_proportion: avg(|c| &c.predicted_proportion),
                observed_proportion: avg(|c| &c.observed_proportion),
                degenerate: full.is_empty(),
            };
            for k in 0..curve.horizons.len() {
                calibration.push(CalibrationRow {
                    study: cfg.study,
                    point: p,
                    label: point.label.clone(),
                    method: method.to_string(),
                    horizon_index: k + 1,
                    horizon: curve.horizons[k],
                    predicted_proportion: curve.predicted_proportion[k],
                    observed_proportion: curve.observed_proportion[k],
                });
            }
            summary.push(SummaryRow {
                study: cfg.study,
                point: p,
                label: point.label.clone(),
                copula: point.copula.family,
                copula_theta: point.copula.theta,
                c: c_values[p],
                censoring_target: point.censoring,
                method: method.to_string(),
                loss_theta: rows[0].loss_theta,
                repetitions: rows.len(),
                mean_test_censoring: mean(&col(|r| r.test_censoring)),
                mean_rounds: mean(&col(|r| r.rounds as f64)),
                mean_mae: mean(&maes),
                sd_mae: sd(&maes),
                mean_c_index: mean(&cis),
                sd_c_index: sd(&cis),
                mean_event_mae: event_maes.map(|v| mean(&v)),
                calibration_mad: curve.mean_abs_deviation(),
            });
        }
        for (rows, _) in block {
            repetitions.extend(rows.iter().cloned());
        }
    }

    let stem = format!("study{}", cfg.study);
    let files = vec![
        out.join(format!("{stem}_repetitions.csv")),
        out.join(format!("{stem}_summary.csv")),
        out.join(format!("{stem}_calibration.csv")),
    ];
    write_rows(&files[0], &repetitions)?;
    write_rows(&files[1], &summary)?;
    write_rows(&files[2], &calibration)?;
    Ok(StudyOutcome {
        repetitions,
        summary,
        calibration,
        files,
    })
}
