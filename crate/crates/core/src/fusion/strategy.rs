use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Label};
use crate::error::{Error, Result};
use crate::matching::{ComparatorId, ScoreSet, TrialScore};

use super::logreg::{train_llr, FusionModel, TrainedCondition};

/// How fusion functions are trained across capture conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One model per condition, applied to that condition only.
    SensorDependent,
    /// One model trained on all conditions together.
    SensorIndependent,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::SensorDependent, Strategy::SensorIndependent];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SensorDependent => "sensor_dependent",
            Strategy::SensorIndependent => "sensor_independent",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sensor_dependent" => Ok(Strategy::SensorDependent),
            "sensor_independent" => Ok(Strategy::SensorIndependent),
            other => Err(Error::config(format!(
                "unknown fusion strategy '{other}' (expected sensor_dependent or sensor_independent)"
            ))),
        }
    }
}

/// Trained models of one strategy.
#[derive(Clone, Debug, PartialEq)]
pub enum StrategyModels {
    PerCondition(BTreeMap<Condition, FusionModel>),
    Pooled(FusionModel),
}

impl StrategyModels {
    pub fn strategy(&self) -> Strategy {
        match self {
            StrategyModels::PerCondition(_) => Strategy::SensorDependent,
            StrategyModels::Pooled(_) => Strategy::SensorIndependent,
        }
    }

    pub fn model_for(&self, condition: &Condition) -> Result<&FusionModel> {
        match self {
            StrategyModels::PerCondition(m) => m
                .get(condition)
                .ok_or_else(|| Error::data(format!("no fusion model for condition {condition}"))),
            StrategyModels::Pooled(m) => Ok(m),
        }
    }

    /// Models in canonical order.
    pub fn models(&self) -> Vec<&FusionModel> {
        match self {
            StrategyModels::PerCondition(m) => m.values().collect(),
            StrategyModels::Pooled(m) => vec![m],
        }
    }

    pub fn llr(&self, trial: &TrialScore) -> Result<f64> {
        self.model_for(&trial.trial.condition)?.llr_of(trial)
    }

    /// Fused score of every trial, in input order.
    pub fn llrs<'a, I>(&self, trials: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a TrialScore>,
    {
        trials.into_iter().map(|t| self.llr(t)).collect()
    }

    /// File stem for the serialized model of each condition.
    pub fn file_stems(&self) -> Vec<(String, &FusionModel)> {
        self.models()
            .into_iter()
            .map(|m| {
                let stem = match &m.trained_condition {
                    TrainedCondition::SameSensor(s) => format!("model_same_sensor_{s}"),
                    TrainedCondition::CrossSensor => "model_cross_sensor".to_string(),
                    TrainedCondition::Pooled => "model_pooled".to_string(),
                };
                (stem, m)
            })
            .collect()
    }
}

/// Conditions a trial set must cover: same-sensor for every sensor seen, and
/// cross-sensor once two or more sensors appear.
pub fn required_conditions<'a, I>(trials: I) -> Vec<Condition>
where
    I: IntoIterator<Item = &'a TrialScore>,
{
    let mut sensors = BTreeSet::new();
    for t in trials {
        sensors.insert(t.trial.probe.sensor_id.as_str());
        sensors.insert(t.trial.gallery.sensor_id.as_str());
    }
    let mut out: Vec<Condition> = sensors.iter().map(|s| Condition::same(s)).collect();
    if sensors.len() >= 2 {
        out.push(Condition::CrossSensor);
    }
    out
}

fn train_on(
    trials: &[&TrialScore],
    strategy: Strategy,
    comparator_ids: &[ComparatorId],
    prior: f64,
) -> Result<StrategyModels> {
    if trials.is_empty() {
        return Err(Error::data("no trials to train fusion on"));
    }
    let required = required_conditions(trials.iter().copied());
    let mut grouped: BTreeMap<Condition, Vec<&TrialScore>> = BTreeMap::new();
    for t in trials {
        grouped.entry(t.trial.condition.clone()).or_default().push(t);
    }
    for c in &required {
        if !grouped.contains_key(c) {
            return Err(Error::data(format!("score set lacks condition {c}")));
        }
    }
    match strategy {
        Strategy::SensorDependent => {
            let mut models = BTreeMap::new();
            for (cond, ts) in grouped {
                let m = train_llr(&ts, comparator_ids, prior, TrainedCondition::from(&cond))
                    .map_err(|e| context(e, &cond))?;
                models.insert(cond, m);
            }
            Ok(StrategyModels::PerCondition(models))
        }
        Strategy::SensorIndependent => Ok(StrategyModels::Pooled(train_llr(
            trials,
            comparator_ids,
            prior,
            TrainedCondition::Pooled,
        )?)),
    }
}

fn context(e: Error, cond: &Condition) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("{cond}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{cond}: {m}")),
        other => other,
    }
}

/// Trains the models of `strategy` on every trial of `scores`.
pub fn train_strategy(
    scores: &ScoreSet,
    strategy: Strategy,
    comparator_ids: &[ComparatorId],
    prior: f64,
) -> Result<StrategyModels> {
    let refs: Vec<&TrialScore> = scores.trials.iter().collect();
    train_on(&refs, strategy, comparator_ids, prior)
}

/// Out-of-fold fused scores: trials are dealt round-robin into `folds`
/// groups within each (condition, label) stratum, and every group is scored
/// by models trained on the others.
pub fn cross_validated_llrs(
    scores: &ScoreSet,
    strategy: Strategy,
    comparator_ids: &[ComparatorId],
    prior: f64,
    folds: usize,
) -> Result<Vec<f64>> {
    if folds < 2 {
        return Err(Error::config(format!("k-fold training needs at least 2 folds, got {folds}")));
    }
    let mut counters: BTreeMap<(Condition, Label), usize> = BTreeMap::new();
    let assignment: Vec<usize> = scores
        .trials
        .iter()
        .map(|t| {
            let c = counters.entry((t.trial.condition.clone(), t.trial.label)).or_insert(0);
            let f = *c % folds;
            *c += 1;
            f
        })
        .collect();
    let mut out = vec![f64::NAN; scores.len()];
    for fold in 0..folds {
        let train: Vec<&TrialScore> = scores
            .trials
            .iter()
            .zip(&assignment)
            .filter(|(_, &f)| f != fold)
            .map(|(t, _)| t)
            .collect();
        let models = train_on(&train, strategy, comparator_ids, prior)
            .map_err(|e| context_fold(e, fold))?;
        for (i, t) in scores.trials.iter().enumerate() {
            if assignment[i] == fold {
                out[i] = models.llr(t)?;
            }
        }
    }
    Ok(out)
}

fn context_fold(e: Error, fold: usize) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("fold {fold}: {m}")),
        other => other,
    }
}
