use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::Condition;
use crate::error::{Error, Result};
use crate::eval::{eer_by_column, relative_change, Column, ReportRow};
use crate::matching::{ComparatorId, ScoreSet};

use super::strategy::{train_strategy, Strategy};

/// Largest comparator count accepted by [`subset_search`].
pub const MAX_SEARCH_COMPARATORS: usize = 20;

/// One evaluated comparator subset.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetResult {
    pub comparators: Vec<ComparatorId>,
    pub eer: BTreeMap<Column, f64>,
    /// Percent change of each column's EER against the best single
    /// comparator; `None` where that baseline is zero and this EER is not.
    pub relative: BTreeMap<Column, Option<f64>>,
}

impl SubsetResult {
    pub fn name(&self) -> String {
        self.comparators.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("+")
    }

    pub fn report_row(&self) -> ReportRow {
        ReportRow {
            system: self.name(),
            size: self.comparators.len(),
            eer: self.eer.clone(),
            relative: self.relative.clone(),
        }
    }
}

/// Column that ranks subsets: cross-sensor when present, pooled otherwise.
pub fn ranking_column(eer: &BTreeMap<Column, f64>) -> Column {
    let cross = Column::Condition(Condition::CrossSensor);
    if eer.contains_key(&cross) {
        cross
    } else {
        Column::All
    }
}

/// Ranking order: ranking-column EER, then subset size, then comparator names.
pub fn rank_order(a: &(Vec<ComparatorId>, BTreeMap<Column, f64>), b: &(Vec<ComparatorId>, BTreeMap<Column, f64>)) -> Ordering {
    let col = ranking_column(&a.1);
    a.1[&col]
        .total_cmp(&b.1[&col])
        .then(a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.cmp(&b.0))
}

/// Every non-empty subset, in bitmask order, preserving comparator order.
pub fn enumerate_subsets(all: &[ComparatorId]) -> Vec<Vec<ComparatorId>> {
    (1u32..(1u32 << all.len()))
        .map(|mask| {
            all.iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, c)| c.clone())
                .collect()
        })
        .collect()
}

/// Per-column EER of the strategy's fused scores for one subset.
pub fn evaluate_subset(
    scores: &ScoreSet,
    strategy: Strategy,
    subset: &[ComparatorId],
    prior: f64,
) -> Result<BTreeMap<Column, f64>> {
    let models = train_strategy(scores, strategy, subset, prior)?;
    let llr = models.llrs(&scores.trials)?;
    let entries: Vec<_> = scores
        .trials
        .iter()
        .zip(llr)
        .map(|(t, l)| (t.trial.condition.clone(), t.trial.label, l))
        .collect();
    eer_by_column(&entries)
}

/// Trains and evaluates every non-empty comparator subset and ranks them.
/// Relative changes are taken against the best single comparator under the
/// same strategy.
pub fn subset_search(
    scores: &ScoreSet,
    strategy: Strategy,
    all_comparators: &[ComparatorId],
    prior: f64,
) -> Result<Vec<SubsetResult>> {
    if all_comparators.is_empty() {
        return Err(Error::config("subset search needs at least one comparator"));
    }
    if all_comparators.len() > MAX_SEARCH_COMPARATORS {
        return Err(Error::config(format!(
            "subset search over {} comparators refused (limit {MAX_SEARCH_COMPARATORS})",
            all_comparators.len()
        )));
    }
    let mut sorted = all_comparators.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("duplicate comparator in subset search"));
    }

    let subsets = enumerate_subsets(all_comparators);
    let evaluated: Vec<(Vec<ComparatorId>, BTreeMap<Column, f64>)> = subsets
        .into_par_iter()
        .map(|s| evaluate_subset(scores, strategy, &s, prior).map(|e| (s, e)))
        .collect::<Result<_>>()?;

    let mut ranked = evaluated;
    ranked.sort_by(rank_order);
    let baseline = ranked
        .iter()
        .find(|(s, _)| s.len() == 1)
        .map(|(_, e)| e.clone())
        .expect("singletons are always enumerated");

    Ok(ranked
        .into_iter()
        .map(|(comparators, eer)| {
            let relative = eer
                .iter()
                .map(|(col, &v)| (col.clone(), baseline.get(col).and_then(|&b| relative_change(v, b))))
                .collect();
            SubsetResult {
                comparators,
                eer,
                relative,
            }
        })
        .collect())
}
