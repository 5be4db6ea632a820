//! Seeded Gaussian score sets for exercising fusion and evaluation without
//! image data.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Eye, Label, SampleKey, TrialSpec};
use crate::error::{Error, Result};
use crate::matching::{ComparatorId, Provenance, ScoreSet, TrialScore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sd: f64) -> Self {
        Gaussian { mean, sd }
    }
}

/// Score distributions of one condition, one entry per comparator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub condition: Condition,
    pub genuine: Vec<Gaussian>,
    pub impostor: Vec<Gaussian>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub comparators: Vec<ComparatorId>,
    /// Correlation between any two comparators' scores within a trial.
    #[serde(default)]
    pub correlation: f64,
    pub conditions: Vec<ConditionSpec>,
}

/// Lower Cholesky factor of the equicorrelation matrix.
fn equicorrelation_factor(n: usize, rho: f64) -> Result<Vec<Vec<f64>>> {
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { rho };
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = target - s;
                if d <= 0.0 {
                    return Err(Error::config(format!(
                        "correlation {rho} is not valid for {n} comparators"
                    )));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (target - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.comparators.len();
        if n == 0 {
            return Err(Error::config("synthetic spec lists no comparators"));
        }
        if !(self.correlation.abs() < 1.0) {
            return Err(Error::config(format!(
                "correlation must satisfy |rho| < 1, got {}",
                self.correlation
            )));
        }
        if self.conditions.is_empty() {
            return Err(Error::config("synthetic spec has no conditions"));
        }
        for c in &self.conditions {
            if c.n_genuine == 0 || c.n_impostor == 0 {
                return Err(Error::config(format!("{}: counts must be positive", c.condition)));
            }
            if c.genuine.len() != n || c.impostor.len() != n {
                return Err(Error::config(format!(
                    "{}: need one distribution per comparator",
                    c.condition
                )));
            }
            for g in c.genuine.iter().chain(&c.impostor) {
                if !(g.sd > 0.0 && g.sd.is_finite() && g.mean.is_finite()) {
                    return Err(Error::config(format!(
                        "{}: invalid gaussian {:?}",
                        c.condition, g
                    )));
                }
            }
        }
        equicorrelation_factor(n, self.correlation)?;
        Ok(())
    }

    /// Sensor ids for probe and gallery of a condition. Cross-sensor trials
    /// use the two smallest same-sensor ids configured.
    fn sensors_for(&self, condition: &Condition) -> (String, String) {
        match condition {
            Condition::SameSensor(s) => (s.clone(), s.clone()),
            Condition::CrossSensor => {
                let mut ids: Vec<&String> = self
                    .conditions
                    .iter()
                    .filter_map(|c| match &c.condition {
                        Condition::SameSensor(s) => Some(s),
                        Condition::CrossSensor => None,
                    })
                    .collect();
                ids.sort();
                ids.dedup();
                match ids.as_slice() {
                    [a, b, ..] => ((*a).clone(), (*b).clone()),
                    [a] => ((*a).clone(), format!("{a}_other")),
                    [] => ("a".to_string(), "b".to_string()),
                }
            }
        }
    }
}

/// Draws a score set. Identical spec and seed give bit-identical output.
pub fn generate_synthetic_scoreset(spec: &SyntheticSpec, seed: u64) -> Result<ScoreSet> {
    spec.validate()?;
    let n = spec.comparators.len();
    let chol = equicorrelation_factor(n, spec.correlation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::new();

    for cs in &spec.conditions {
        let (ps, gs) = spec.sensors_for(&cs.condition);
        let tag = match &cs.condition {
            Condition::SameSensor(s) => format!("{s}-"),
            Condition::CrossSensor => "x-".to_string(),
        };
        for (label, count, dists) in [
            (Label::Genuine, cs.n_genuine, &cs.genuine),
            (Label::Impostor, cs.n_impostor, &cs.impostor),
        ] {
            for i in 0..count {
                let (probe_subject, gallery_subject) = match label {
                    Label::Genuine => (format!("{tag}g{i:06}"), format!("{tag}g{i:06}")),
                    Label::Impostor => (format!("{tag}i{i:06}p"), format!("{tag}i{i:06}q")),
                };
                let e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mut scores = BTreeMap::new();
                for (k, id) in spec.comparators.iter().enumerate() {
                    let z: f64 = (0..=k).map(|j| chol[k][j] * e[j]).sum();
                    scores.insert(id.clone(), dists[k].mean + dists[k].sd * z);
                }
                trials.push(TrialScore {
                    trial: TrialSpec {
                        probe: SampleKey::new(&probe_subject, Eye::Left, &ps, 1),
                        gallery: SampleKey::new(&gallery_subject, Eye::Left, &gs, 2),
                        label,
                        condition: cs.condition.clone(),
                    },
                    scores,
                });
            }
        }
    }

    Ok(ScoreSet {
        comparator_ids: spec.comparators.clone(),
        trials,
        provenance: Provenance::Computed,
    })
}
