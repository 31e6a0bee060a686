//! Second-order gradient boosting of regression trees.
//!
//! Each round evaluates the loss gradient and Hessian at the current
//! predictions, grows one tree on those statistics and adds the tree's leaf
//! weight, scaled by the learning rate, to every row's prediction. The model
//! output `h(x)` lives on the log-time scale.

pub mod tree;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, SurvivalDataset};
use crate::error::{Error, Result};
use crate::loss::LossSpec;

pub use tree::{Direction, Node, RegressionTree, SortedColumns, TreeParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseScore {
    /// Mean log observed time.
    Auto,
    Value(f64),
}

impl Serialize for BaseScore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BaseScore::Auto => s.serialize_str("auto"),
            BaseScore::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BaseScore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(BaseScore::Value(v)),
            Raw::Str(s) if s == "auto" => Ok(BaseScore::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "base_score must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Penalty per leaf; the minimum gain a split must achieve.
    pub gamma: f64,
    /// Minimum Hessian sum in each child of a split.
    pub min_child_weight: f64,
    pub base_score: BaseScore,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 6,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            base_score: BaseScore::Auto,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rounds < 1 {
            return bad("rounds must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1".into());
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("min_child_weight", self.min_child_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let BaseScore::Value(v) = self.base_score {
            if !v.is_finite() {
                return bad(format!("base_score must be finite, got {v}"));
            }
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
        }
    }
}

/// Per-row first and second derivatives of a training objective.
pub trait Objective: Sync {
    fn grad_hess(&self, row: usize, pred: f64) -> Result<(f64, f64)>;
    fn loss(&self, row: usize, pred: f64) -> Result<f64>;
}

/// A survival loss bound to the targets of a dataset.
pub struct SurvivalObjective<'a> {
    pub loss: &'a LossSpec,
    pub time: &'a [f64],
    pub event: &'a [bool],
}

impl Objective for SurvivalObjective<'_> {
    fn grad_hess(&self, row: usize, pred: f64) -> Result<(f64, f64)> {
        let e = self.loss.evaluate(self.time[row], self.event[row], pred)?;
        Ok((e.grad, e.hess))
    }

    fn loss(&self, row: usize, pred: f64) -> Result<f64> {
        self.loss.value(self.time[row], self.event[row], pred)
    }
}

/// Mean objective value over all rows.
pub fn mean_loss<O: Objective>(objective: &O, preds: &[f64]) -> Result<f64> {
    let vals: Vec<f64> = preds
        .par_iter()
        .enumerate()
        .map(|(i, &p)| objective.loss(i, p))
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

/// Boost `config.rounds` trees on `x` for an arbitrary objective, starting
/// from `base_score`. `on_round(k, tree, preds)` runs after round `k`
/// (1-based) with the updated training predictions.
pub fn fit<O, F>(
    x: &Matrix,
    objective: &O,
    base_score: f64,
    config: &TrainConfig,
    mut on_round: F,
) -> Result<Vec<RegressionTree>>
where
    O: Objective,
    F: FnMut(usize, &RegressionTree, &[f64]) -> Result<()>,
{
    config.validate()?;
    if x.n_cols() == 0 {
        return Err(Error::Config("training data has zero features".into()));
    }
    if x.n_rows() == 0 {
        return Err(Error::Data("training data is empty".into()));
    }
    let n = x.n_rows();
    let sorted = SortedColumns::new(x);
    let params = config.tree_params();
    let mut preds = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.rounds);

    for round in 1..=config.rounds {
        grad.par_iter_mut()
            .zip(hess.par_iter_mut())
            .enumerate()
            .try_for_each(|(i, (g, h))| -> Result<()> {
                let (gi, hi) = objective.grad_hess(i, preds[i]).map_err(|e| {
                    Error::Numeric(format!("round {round}, row {i}: {e}"))
                })?;
                if !(gi.is_finite() && hi.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "round {round}, row {i}: non-finite gradient ({gi}, {hi})"
                    )));
                }
                *g = gi;
                *h = hi;
                Ok(())
            })?;
        let tree = tree::grow_tree(x, &sorted, &grad, &hess, &params);
        let eta = config.learning_rate;
        preds
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, p)| *p += eta * tree.predict_row(x.row(i)));
        on_round(round, &tree, &preds)?;
        trees.push(tree);
    }
    Ok(trees)
}

/// Additive tree model on the log-time scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format_version: u32,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub loss: Option<LossSpec>,
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn new(
        base_score: f64,
        learning_rate: f64,
        n_features: usize,
        loss: Option<LossSpec>,
        trees: Vec<RegressionTree>,
    ) -> Self {
        TreeEnsemble {
            format_version: FORMAT_VERSION,
            base_score,
            learning_rate,
            n_features,
            loss,
            trees,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |acc, t| {
            acc + self.learning_rate * t.predict_row(row)
        })
    }

    /// Keep only the first `rounds` trees.
    pub fn truncated(&self, rounds: usize) -> TreeEnsemble {
        let mut m = self.clone();
        m.trees.truncate(rounds);
        m
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Persistence(format!("cannot serialize model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Persistence(format!("model file is not valid JSON: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Persistence(format!(
                    "format_version: unsupported version {v}, expected {FORMAT_VERSION}"
                )))
            }
            None => {
                return Err(Error::Persistence(
                    "format_version: missing or not an integer".into(),
                ))
            }
        }
        let model: TreeEnsemble = serde_json::from_value(value)
            .map_err(|e| Error::Persistence(format!("malformed model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() {
            return Err(Error::Persistence("base_score: not finite".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Persistence("learning_rate: outside (0, 1]".into()));
        }
        for (k, t) in self.trees.iter().enumerate() {
            t.check_structure()
                .map_err(|e| Error::Persistence(format!("trees[{k}]: {e}")))?;
            for node in &t.nodes {
                if let Node::Split { split_feature, .. } = node {
                    if *split_feature >= self.n_features {
                        return Err(Error::Persistence(format!(
                            "trees[{k}]: split_feature {split_feature} >= n_features {}",
                            self.n_features
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Starting prediction for a dataset.
pub fn resolve_base_score(data: &SurvivalDataset, base: BaseScore) -> f64 {
    match base {
        BaseScore::Value(v) => v,
        BaseScore::Auto => data.time.iter().map(|t| t.ln()).sum::<f64>() / data.len() as f64,
    }
}

/// Train a survival booster, reporting each round to `on_round`.
pub fn train_with<F>(
    data: &SurvivalDataset,
    loss: &LossSpec,
    config: &TrainConfig,
    on_round: F,
) -> Result<TreeEnsemble>
where
    F: FnMut(usize, &RegressionTree, &[f64]) -> Result<()>,
{
    loss.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training data is empty".into()));
    }
    data.validate()?;
    let objective = SurvivalObjective {
        loss,
        time: &data.time,
        event: &data.event,
    };
    let base = resolve_base_score(data, config.base_score);
    let trees = fit(&data.features, &objective, base, config, on_round)?;
    Ok(TreeEnsemble::new(
        base,
        config.learning_rate,
        data.n_features(),
        Some(*loss),
        trees,
    ))
}

pub fn train(data: &SurvivalDataset, loss: &LossSpec, config: &TrainConfig) -> Result<TreeEnsemble> {
    train_with(data, loss, config, |_, _, _| Ok(()))
}

/// Predicted log time `h(x)` for every row.
pub fn predict(model: &TreeEnsemble, x: &Matrix) -> Result<Vec<f64>> {
    if x.n_cols() != model.n_features {
        return Err(Error::Shape(format!(
            "model expects {} features, data has {}",
            model.n_features,
            x.n_cols()
        )));
    }
    Ok((0..x.n_rows())
        .into_par_iter()
        .map(|i| model.predict_row(x.row(i)))
        .collect())
}

/// Point prediction of the event time, `exp(h(x))`.
pub fn predict_time(model: &TreeEnsemble, x: &Matrix) -> Result<Vec<f64>> {
    Ok(predict(model, x)?.into_iter().map(f64::exp).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BaselineFamily, BaselineSpec};
    use crate::loss::IndependentAftLoss;

    fn normal_loss() -> LossSpec {
        LossSpec::Independent(
            IndependentAftLoss::new(BaselineSpec::new(BaselineFamily::Normal, 1.0).unwrap())
                .unwrap(),
        )
    }

    #[test]
    fn empty_ensemble_predicts_base() {
        let m = TreeEnsemble::new(0.7, 0.1, 2, None, vec![]);
        let x = Matrix::new(3, 2, vec![0.0; 6]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![0.7; 3]);
    }

    #[test]
    fn single_leaf_prediction() {
        let m = TreeEnsemble::new(1.0, 0.5, 1, None, vec![RegressionTree::single_leaf(2.0)]);
        let x = Matrix::new(1, 1, vec![3.0]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![2.0]);
        let m0 = TreeEnsemble::new(0.0, 1.0, 1, None, vec![]);
        assert_eq!(predict_time(&m0, &x).unwrap(), vec![1.0]);
        let m5 = TreeEnsemble::new(5f64.ln(), 1.0, 1, None, vec![]);
        assert!((predict_time(&m5, &x).unwrap()[0] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn feature_mismatch_is_shape_error() {
        let m = TreeEnsemble::new(0.0, 0.1, 2, None, vec![]);
        let x = Matrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(predict(&m, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn identical_rows_give_single_leaf_trees() {
        let x = Matrix::new(20, 3, vec![0.5; 60]).unwrap();
        let ds = SurvivalDataset::new(vec![2.0; 20], vec![true; 20], x).unwrap();
        let cfg = TrainConfig {
            rounds: 5,
            ..TrainConfig::default()
        };
        let m = train(&ds, &normal_loss(), &cfg).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        let p = predict(&m, &ds.features).unwrap();
        assert!(p.iter().all(|&v| v == p[0]));
    }

    #[test]
    fn zero_features_rejected() {
        let x = Matrix::new(3, 0, vec![]).unwrap();
        let ds = SurvivalDataset::new(vec![1.0; 3], vec![true; 3], x).unwrap();
        let err = train(&ds, &normal_loss(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            TrainConfig { rounds: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { learning_rate: 1.5, ..Default::default() },
            TrainConfig { max_depth: 0, ..Default::default() },
            TrainConfig { lambda: -1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn base_score_serde() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"base_score":"auto","rounds":3}"#).unwrap();
        assert_eq!(cfg.base_score, BaseScore::Auto);
        assert_eq!(cfg.rounds, 3);
        let cfg: TrainConfig = serde_json::from_str(r#"{"base_score":1.5}"#).unwrap();
        assert_eq!(cfg.base_score, BaseScore::Value(1.5));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"base_score":"mean"}"#).is_err());
    }

    #[test]
    fn load_rejects_bad_files() {
        let m = TreeEnsemble::new(0.3, 0.1, 1, Some(normal_loss()), vec![RegressionTree::single_leaf(1.0)]);
        let json = m.to_json().unwrap();
        assert_eq!(TreeEnsemble::from_json(&json).unwrap(), m);

        let truncated = &json[..json.len() / 2];
        assert!(matches!(TreeEnsemble::from_json(truncated), Err(Error::Persistence(_))));

        let wrong_version = json.replace("\"format_version\": 1", "\"format_version\": 2");
        let err = TreeEnsemble::from_json(&wrong_version).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");

        let unknown = json.replace("\"independent\"", "\"weibull\"");
        let err = TreeEnsemble::from_json(&unknown).unwrap_err();
        assert!(err.to_string().contains("unknown loss"), "{err}");
    }
}
