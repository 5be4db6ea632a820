//! Verification metrics and report tables.

mod cllr;
mod curve;
mod det;
mod report;
mod synthetic;

pub use cllr::{cllr, cllr_min, compute_cllr, pav_posteriors};
pub use curve::{compute_curve, compute_eer, cost_at, eer, min_cost_threshold, write_curve_csv, CurvePoint};
pub use det::{det_points, normal_cdf, probit, write_det_csv, DET_CLAMP};
pub use report::{format_relative, relative_change, report_table, ReportRow, ReportTable};
pub use synthetic::{generate_synthetic_scoreset, ConditionSpec, Gaussian, SyntheticSpec};

use std::collections::BTreeMap;
use std::fmt;

use crate::dataset::{Condition, Label};
use crate::error::Result;

/// A report column: one trial condition, or all conditions pooled.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    Condition(Condition),
    All,
}

impl Column {
    pub fn name(&self) -> String {
        match self {
            Column::Condition(c) => c.column_name(),
            Column::All => "all".to_string(),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Metrics of one column.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnEval {
    pub eer: f64,
    pub curve: Vec<CurvePoint>,
    pub det: Vec<(f64, f64)>,
    pub cllr: f64,
    pub cllr_min: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EvalReport {
    pub columns: BTreeMap<Column, ColumnEval>,
}

impl EvalReport {
    pub fn eer(&self, column: &Column) -> Option<f64> {
        self.columns.get(column).map(|c| c.eer)
    }
}

fn column_eval(genuine: &[f64], impostor: &[f64]) -> Result<ColumnEval> {
    let curve = compute_curve(genuine, impostor)?;
    let (cllr, cllr_min) = compute_cllr(genuine, impostor)?;
    Ok(ColumnEval {
        eer: compute_eer(&curve),
        det: det_points(&curve),
        curve,
        cllr,
        cllr_min,
    })
}

/// Per-condition and pooled metrics for scored trials given as
/// `(condition, label, score)`.
pub fn evaluate(entries: &[(Condition, Label, f64)]) -> Result<EvalReport> {
    let mut split: BTreeMap<Column, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (cond, label, s) in entries {
        for col in [Column::Condition(cond.clone()), Column::All] {
            let slot = split.entry(col).or_default();
            match label {
                Label::Genuine => slot.0.push(*s),
                Label::Impostor => slot.1.push(*s),
            }
        }
    }
    let mut columns = BTreeMap::new();
    for (col, (g, i)) in split {
        columns.insert(col, column_eval(&g, &i)?);
    }
    Ok(EvalReport { columns })
}

/// EER per column only, skipping the curve exports and Cllr.
pub fn eer_by_column(entries: &[(Condition, Label, f64)]) -> Result<BTreeMap<Column, f64>> {
    let mut split: BTreeMap<Column, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (cond, label, s) in entries {
        for col in [Column::Condition(cond.clone()), Column::All] {
            let slot = split.entry(col).or_default();
            match label {
                Label::Genuine => slot.0.push(*s),
                Label::Impostor => slot.1.push(*s),
            }
        }
    }
    split
        .into_iter()
        .map(|(col, (g, i))| Ok((col, eer(&g, &i)?)))
        .collect()
}
