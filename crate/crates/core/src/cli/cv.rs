//! k-fold cross-validation over boosting rounds and the Clayton theta.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::booster::{resolve_base_score, train_with, TrainConfig, TreeEnsemble};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::loss::{ClaytonAftLoss, LossSpec};
use crate::metrics::concordance;

fn default_folds() -> usize {
    2
}

fn default_max_rounds() -> usize {
    500
}

fn default_stride() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Largest round count considered.
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Validation c-index is recorded every `checkpoint_stride` rounds.
    #[serde(default = "default_stride")]
    pub checkpoint_stride: usize,
    /// Clayton theta candidates. Absent means the loss's own theta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<f64>>,
    pub loss: LossSpec,
    /// `rounds` is ignored; the search sets it.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl CvConfig {
    pub fn new(loss: LossSpec, train: TrainConfig) -> Self {
        CvConfig {
            folds: default_folds(),
            max_rounds: default_max_rounds(),
            checkpoint_stride: default_stride(),
            theta_grid: None,
            loss,
            train,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.folds < 2 {
            return bad(format!("folds must be >= 2, got {}", self.folds));
        }
        if self.max_rounds < 1 || self.checkpoint_stride < 1 {
            return bad("max_rounds and checkpoint_stride must be >= 1".into());
        }
        if let Some(grid) = &self.theta_grid {
            if grid.is_empty() {
                return bad("theta_grid is empty".into());
            }
            if !matches!(self.loss, LossSpec::Clayton(_)) {
                return bad("theta_grid needs a clayton loss".into());
            }
        }
        for spec in self.candidate_losses()? {
            spec.validate()?;
        }
        TrainConfig {
            rounds: self.max_rounds,
            ..self.train
        }
        .validate()
    }

    /// Round counts at which validation scores are taken.
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (self.checkpoint_stride..=self.max_rounds)
            .step_by(self.checkpoint_stride)
            .collect();
        if v.last() != Some(&self.max_rounds) {
            v.push(self.max_rounds);
        }
        v
    }

    fn candidate_losses(&self) -> Result<Vec<LossSpec>> {
        match (&self.theta_grid, &self.loss) {
            (Some(grid), LossSpec::Clayton(l)) => grid
                .iter()
                .map(|&t| {
                    ClaytonAftLoss::new(t, l.event_baseline, l.censor_baseline).map(LossSpec::Clayton)
                })
                .collect(),
            _ => Ok(vec![self.loss]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub rounds: usize,
    pub fold_scores: Vec<f64>,
    pub mean_c_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    pub seed: u64,
    pub selection_metric: String,
    pub points: Vec<CvPoint>,
    pub best: CvPoint,
    /// Loss used for the refit on all rows.
    pub best_loss: LossSpec,
}

/// Seeded fold labels, stratified on the event indicator: events and
/// censored rows are shuffled separately and dealt round-robin.
pub fn stratified_folds(event: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("folds must be >= 2, got {folds}")));
    }
    if folds > event.len() {
        return Err(Error::Data(format!(
            "{folds} folds requested for {} rows",
            event.len()
        )));
    }
    let mut rng = crate::rng_from_seed(seed);
    let mut labels = vec![0; event.len()];
    let mut next = 0;
    for stratum in [true, false] {
        let mut idx: Vec<usize> = (0..event.len()).filter(|&i| event[i] == stratum).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            labels[i] = next % folds;
            next += 1;
        }
    }
    Ok(labels)
}

fn theta_of(loss: &LossSpec) -> Option<f64> {
    match loss {
        LossSpec::Clayton(l) => Some(l.theta),
        LossSpec::Independent(_) => None,
    }
}

/// Validation c-index at each checkpoint for one loss and one held-out fold.
fn fold_curve(
    train: &SurvivalDataset,
    valid: &SurvivalDataset,
    loss: &LossSpec,
    config: &TrainConfig,
    checkpoints: &[usize],
) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(checkpoints.len());
    let mut valid_pred = vec![resolve_base_score(train, config.base_score); valid.len()];
    let mut next = 0;
    let eta = config.learning_rate;
    train_with(train, loss, config, |round, tree, _| {
        for (i, p) in valid_pred.iter_mut().enumerate() {
            *p += eta * tree.predict_row(valid.features.row(i));
        }
        if next < checkpoints.len() && checkpoints[next] == round {
            scores.push(concordance(&valid.time, &valid.event, &valid_pred)?);
            next += 1;
        }
        Ok(())
    })?;
    Ok(scores)
}

/// Grid search maximizing mean validation c-index, then refit on all rows.
/// Ties go to the earlier theta and the smaller round count.
pub fn run_cv(data: &SurvivalDataset, config: &CvConfig) -> Result<(CvResult, TreeEnsemble)> {
    config.validate()?;
    data.validate()?;
    let labels = stratified_folds(&data.event, config.folds, config.seed)?;
    let losses = config.candidate_losses()?;
    let checkpoints = config.checkpoints();
    let train_cfg = TrainConfig {
        rounds: config.max_rounds,
        ..config.train
    };

    let splits: Vec<(SurvivalDataset, SurvivalDataset)> = (0..config.folds)
        .map(|f| {
            let (tr, va): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| labels[i] != f);
            (data.subset(&tr), data.subset(&va))
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..losses.len())
        .flat_map(|l| (0..config.folds).map(move |f| (l, f)))
        .collect();
    let curves: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(l, f)| fold_curve(&splits[f].0, &splits[f].1, &losses[l], &train_cfg, &checkpoints))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(losses.len() * checkpoints.len());
    for (l, loss) in losses.iter().enumerate() {
        for (c, &rounds) in checkpoints.iter().enumerate() {
            let fold_scores: Vec<f64> = (0..config.folds)
                .map(|f| curves[l * config.folds + f][c])
                .collect();
            let mean_c_index = fold_scores.iter().sum::<f64>() / config.folds as f64;
            points.push(CvPoint {
                theta: theta_of(loss),
                rounds,
                fold_scores,
                mean_c_index,
            });
        }
    }
    let mut best_idx = 0;
    for (i, p) in points.iter().enumerate() {
        if p.mean_c_index > points[best_idx].mean_c_index {
            best_idx = i;
        }
    }
    let best = points[best_idx].clone();
    let best_loss = losses[best_idx / checkpoints.len()];
    log::info!(
        "cv: best rounds={} theta={:?} mean c-index={:.4}",
        best.rounds,
        best.theta,
        best.mean_c_index
    );
    let model = crate::booster::train(
        data,
        &best_loss,
        &TrainConfig {
            rounds: best.rounds,
            ..config.train
        },
    )?;
    Ok((
        CvResult {
            folds: config.folds,
            seed: config.seed,
            selection_metric: "c_index".into(),
            points,
            best,
            best_loss,
        },
        model,
    ))
}
