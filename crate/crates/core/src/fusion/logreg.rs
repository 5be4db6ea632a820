use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Label, SampleKey};
use crate::error::{Error, Result};
use crate::matching::{ComparatorId, TrialScore};

pub const DEFAULT_PRIOR: f64 = 0.5;
/// L2 penalty on the slope weights, measured in standardized score units.
pub const RIDGE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 1000;
/// Training stops once an iteration lowers the loss by less than this.
pub const MIN_DECREASE: f64 = 1e-10;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Data a fusion model was trained on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedCondition {
    SameSensor(String),
    CrossSensor,
    Pooled,
}

impl From<&Condition> for TrainedCondition {
    fn from(c: &Condition) -> Self {
        match c {
            Condition::SameSensor(s) => TrainedCondition::SameSensor(s.clone()),
            Condition::CrossSensor => TrainedCondition::CrossSensor,
        }
    }
}

impl fmt::Display for TrainedCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainedCondition::SameSensor(s) => write!(f, "same_sensor:{s}"),
            TrainedCondition::CrossSensor => f.write_str("cross_sensor"),
            TrainedCondition::Pooled => f.write_str("pooled"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_loss: f64,
    pub effective_prior: f64,
}

/// Linear fusion `llr = a0 + Σ a_i·s_i` over an ordered comparator list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub comparator_ids: Vec<ComparatorId>,
    pub a0: f64,
    pub a: Vec<f64>,
    pub trained_condition: TrainedCondition,
    pub training_meta: TrainingMeta,
}

/// Fused output for one trial. Positive values favour the same-instance
/// hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedScore {
    pub probe: SampleKey,
    pub gallery: SampleKey,
    pub llr: f64,
}

impl CalibratedScore {
    /// Bayes decision at equal costs and the training prior.
    pub fn accept(&self) -> bool {
        self.llr > 0.0
    }
}

impl FusionModel {
    pub fn llr_of(&self, trial: &TrialScore) -> Result<f64> {
        let mut s = self.a0;
        for (id, w) in self.comparator_ids.iter().zip(&self.a) {
            s += w * trial.score(id)?;
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: FusionModel = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if m.a.len() != m.comparator_ids.len() || !m.a0.is_finite() || m.a.iter().any(|w| !w.is_finite()) {
            return Err(Error::parse(path, "malformed fusion model"));
        }
        Ok(m)
    }
}

/// `llr = a0 + Σ a_i·s_i` for one trial.
pub fn apply_fusion(model: &FusionModel, trial: &TrialScore) -> Result<CalibratedScore> {
    Ok(CalibratedScore {
        probe: trial.trial.probe.clone(),
        gallery: trial.trial.gallery.clone(),
        llr: model.llr_of(trial)?,
    })
}

/// Unweighted average of raw scores; a baseline for comparison only.
pub fn mean_rule(trial: &TrialScore, comparator_ids: &[ComparatorId]) -> Result<f64> {
    if comparator_ids.is_empty() {
        return Err(Error::data("mean rule needs at least one comparator"));
    }
    let mut s = 0.0;
    for id in comparator_ids {
        s += trial.score(id)?;
    }
    Ok(s / comparator_ids.len() as f64)
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standardized design: each comparator column centered and scaled to unit
/// variance. Fitting in these coordinates makes the optimizer path, and so
/// the fused output, invariant to affine rescaling of any input score.
struct Design {
    /// Row-major `n × dims` standardized scores.
    z: Vec<f64>,
    dims: usize,
    target: Vec<bool>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weight_gen: f64,
    weight_imp: f64,
    logit_prior: f64,
}

impl Design {
    fn build(trials: &[&TrialScore], ids: &[ComparatorId], prior: f64) -> Result<Design> {
        if !(prior > 0.0 && prior < 1.0) {
            return Err(Error::config(format!("prior must lie in (0, 1), got {prior}")));
        }
        if ids.is_empty() {
            return Err(Error::data("fusion needs at least one comparator"));
        }
        let dims = ids.len();
        let n = trials.len();
        let mut raw = Vec::with_capacity(n * dims);
        let mut target = Vec::with_capacity(n);
        for t in trials {
            for id in ids {
                let s = t.score(id)?;
                if !s.is_finite() {
                    return Err(Error::numeric(format!("non-finite '{id}' score in training data")));
                }
                raw.push(s);
            }
            target.push(t.trial.label == Label::Genuine);
        }
        let n_gen = target.iter().filter(|&&g| g).count();
        let n_imp = n - n_gen;
        if n_gen == 0 || n_imp == 0 {
            return Err(Error::data(format!(
                "training needs both classes, got {n_gen} genuine and {n_imp} impostor trials"
            )));
        }
        let mut mean = vec![0.0; dims];
        let mut scale = vec![0.0; dims];
        for k in 0..dims {
            let m = (0..n).map(|i| raw[i * dims + k]).sum::<f64>() / n as f64;
            let v = (0..n).map(|i| (raw[i * dims + k] - m).powi(2)).sum::<f64>() / n as f64;
            mean[k] = m;
            scale[k] = if v > 0.0 { v.sqrt() } else { 1.0 };
        }
        let z = raw
            .iter()
            .enumerate()
            .map(|(i, s)| (s - mean[i % dims]) / scale[i % dims])
            .collect();
        Ok(Design {
            z,
            dims,
            target,
            mean,
            scale,
            weight_gen: prior / n_gen as f64,
            weight_imp: (1.0 - prior) / n_imp as f64,
            logit_prior: (prior / (1.0 - prior)).ln(),
        })
    }

    fn rows(&self) -> impl Iterator<Item = (&[f64], bool)> {
        self.z.chunks(self.dims).zip(self.target.iter().copied())
    }

    /// Objective at standardized parameters `w = [w0, w1..]`.
    fn loss(&self, w: &[f64]) -> f64 {
        let mut gen = 0.0;
        let mut imp = 0.0;
        for (row, is_gen) in self.rows() {
            let s = w[0] + row.iter().zip(&w[1..]).map(|(z, wk)| z * wk).sum::<f64>() + self.logit_prior;
            if is_gen {
                gen += softplus(-s);
            } else {
                imp += softplus(s);
            }
        }
        let ridge: f64 = w[1..].iter().map(|v| v * v).sum();
        self.weight_gen * gen + self.weight_imp * imp + RIDGE * ridge
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for (row, is_gen) in self.rows() {
            let s = w[0] + row.iter().zip(&w[1..]).map(|(z, wk)| z * wk).sum::<f64>() + self.logit_prior;
            let d = if is_gen {
                -self.weight_gen * sigmoid(-s)
            } else {
                self.weight_imp * sigmoid(s)
            };
            g[0] += d;
            for (gk, z) in g[1..].iter_mut().zip(row) {
                *gk += d * z;
            }
        }
        for (gk, wk) in g[1..].iter_mut().zip(&w[1..]) {
            *gk += 2.0 * RIDGE * wk;
        }
        g
    }

    /// Maps standardized weights back to raw-score weights `(a0, a)`.
    fn unstandardize(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let a: Vec<f64> = w[1..].iter().zip(&self.scale).map(|(wk, s)| wk / s).collect();
        let a0 = w[0] - a.iter().zip(&self.mean).map(|(ak, m)| ak * m).sum::<f64>();
        (a0, a)
    }

    fn standardize(&self, a0: f64, a: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(a.len() + 1);
        w.push(a0 + a.iter().zip(&self.mean).map(|(ak, m)| ak * m).sum::<f64>());
        w.extend(a.iter().zip(&self.scale).map(|(ak, s)| ak * s));
        w
    }
}

/// Gradient descent from zero with Armijo backtracking. Returns the final
/// parameters and the loss after every iteration (entry 0 is the start).
fn minimize(design: &Design) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![0.0; design.dims + 1];
    let mut loss = design.loss(&w);
    let mut trace = vec![loss];
    let mut step = 1.0;
    for _ in 0..MAX_ITERATIONS {
        let g = design.gradient(&w);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 == 0.0 {
            break;
        }
        step *= 2.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wk, gk)| wk - step * gk).collect();
            let l = design.loss(&cand);
            if l <= loss - ARMIJO * step * g2 {
                accepted = Some((cand, l));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l)) = accepted else { break };
        let decrease = loss - l;
        w = cand;
        loss = l;
        trace.push(loss);
        if decrease < MIN_DECREASE {
            break;
        }
    }
    (w, trace)
}

/// Trains fusion weights by prior-weighted logistic regression, returning the
/// model and the per-iteration loss trace.
pub fn train_llr_traced(
    trials: &[&TrialScore],
    comparator_ids: &[ComparatorId],
    prior: f64,
    trained_condition: TrainedCondition,
) -> Result<(FusionModel, Vec<f64>)> {
    let design = Design::build(trials, comparator_ids, prior)?;
    let (w, trace) = minimize(&design);
    let (a0, a) = design.unstandardize(&w);
    if !a0.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("fusion training diverged"));
    }
    let model = FusionModel {
        comparator_ids: comparator_ids.to_vec(),
        a0,
        a,
        trained_condition,
        training_meta: TrainingMeta {
            iterations: trace.len() - 1,
            final_loss: *trace.last().unwrap(),
            effective_prior: prior,
        },
    };
    Ok((model, trace))
}

/// Trains fusion weights so that the fused score approximates a
/// log-likelihood ratio.
///
/// Minimizes `(π/G)·Σ_gen log(1+e^-(s+logit π)) + ((1-π)/I)·Σ_imp log(1+e^(s+logit π))`
/// plus a `1e-6` ridge on the slope weights in standardized units.
pub fn train_llr(
    trials: &[&TrialScore],
    comparator_ids: &[ComparatorId],
    prior: f64,
    trained_condition: TrainedCondition,
) -> Result<FusionModel> {
    train_llr_traced(trials, comparator_ids, prior, trained_condition).map(|(m, _)| m)
}

/// The training objective of `trials`, evaluated at the model's weights.
pub fn training_objective(model: &FusionModel, trials: &[&TrialScore], prior: f64) -> Result<f64> {
    let design = Design::build(trials, &model.comparator_ids, prior)?;
    Ok(design.loss(&design.standardize(model.a0, &model.a)))
}
