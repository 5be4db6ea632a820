use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::Column;

/// One system of the fusion results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub system: String,
    pub size: usize,
    pub eer: BTreeMap<Column, f64>,
    pub relative: BTreeMap<Column, Option<f64>>,
}

/// The table as CSV and as aligned plain text.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub columns: Vec<Column>,
    pub csv: String,
    pub text: String,
}

/// Percent change of `eer` against `baseline`. A zero baseline gives 0 when
/// `eer` is also zero and `None` otherwise.
pub fn relative_change(eer: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        (eer == 0.0).then_some(0.0)
    } else {
        Some((eer - baseline) / baseline * 100.0)
    }
}

/// Bracketed relative change: one decimal, trailing ".0" dropped, sign
/// always shown, e.g. `(-43.8%)`, `(+0%)`.
pub fn format_relative(pct: Option<f64>) -> String {
    let Some(p) = pct else {
        return "(n/a)".to_string();
    };
    let r = (p * 10.0).round() / 10.0;
    let r = if r == 0.0 { 0.0 } else { r };
    let mut s = format!("{:.1}", r.abs());
    if let Some(t) = s.strip_suffix(".0") {
        s = t.to_string();
    }
    let sign = if r < 0.0 { '-' } else { '+' };
    format!("({sign}{s}%)")
}

fn percent(eer: f64) -> String {
    format!("{:.1}", eer * 100.0)
}

/// Builds the results table. Rows keep their given order; EERs are shown in
/// percent, and rows of a single comparator carry no bracket.
pub fn report_table(rows: &[ReportRow]) -> ReportTable {
    let columns: Vec<Column> = rows
        .iter()
        .flat_map(|r| r.eer.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut csv = String::from("system,size");
    for c in &columns {
        let n = c.name();
        write!(csv, ",{n}_eer,{n}_relative").unwrap();
    }
    csv.push('\n');

    let mut cells: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    let mut header = vec!["system".to_string()];
    header.extend(columns.iter().map(|c| c.name()));
    cells.push(header);

    for r in rows {
        write!(csv, "{},{}", r.system, r.size).unwrap();
        let mut line = vec![r.system.clone()];
        for c in &columns {
            let rel = r.relative.get(c).copied().flatten();
            match r.eer.get(c) {
                Some(&e) => {
                    write!(csv, ",{:.6}", e * 100.0).unwrap();
                    match rel {
                        Some(p) if r.size > 1 => write!(csv, ",{p:.6}").unwrap(),
                        _ => csv.push(','),
                    }
                    if r.size > 1 {
                        line.push(format!("{} {}", percent(e), format_relative(rel)));
                    } else {
                        line.push(percent(e));
                    }
                }
                None => {
                    csv.push_str(",,");
                    line.push("-".to_string());
                }
            }
        }
        csv.push('\n');
        cells.push(line);
    }

    let ncols = columns.len() + 1;
    let widths: Vec<usize> = (0..ncols)
        .map(|k| cells.iter().map(|row| row[k].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &cells {
        let mut line = String::new();
        for (k, cell) in row.iter().enumerate() {
            if k == 0 {
                write!(line, "{:<w$}", cell, w = widths[0]).unwrap();
            } else {
                write!(line, "  {:>w$}", cell, w = widths[k]).unwrap();
            }
        }
        text.push_str(line.trim_end());
        text.push('\n');
    }
    ReportTable { columns, csv, text }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Condition;

    #[test]
    fn bracket_examples() {
        assert_eq!(format_relative(relative_change(0.009, 0.016)), "(-43.8%)");
        assert_eq!(format_relative(relative_change(0.008, 0.008)), "(+0%)");
        assert_eq!(format_relative(relative_change(0.0, 0.0)), "(+0%)");
        assert_eq!(format_relative(relative_change(0.01, 0.0)), "(n/a)");
        assert_eq!(format_relative(Some(12.0)), "(+12%)");
        assert_eq!(format_relative(Some(-0.04)), "(+0%)");
        assert_eq!(format_relative(Some(-7.25)), "(-7.3%)");
    }

    #[test]
    fn single_rows_have_no_brackets() {
        let col = Column::Condition(Condition::CrossSensor);
        let row = |system: &str, size, e, rel| ReportRow {
            system: system.to_string(),
            size,
            eer: BTreeMap::from([(col.clone(), e), (Column::All, e)]),
            relative: BTreeMap::from([(col.clone(), rel), (Column::All, rel)]),
        };
        let t = report_table(&[row("a+b", 2, 0.009, Some(-43.75)), row("a", 1, 0.016, Some(0.0))]);
        let lines: Vec<&str> = t.text.lines().collect();
        assert!(lines[0].starts_with("system") && lines[0].contains("cross-sensor"));
        assert!(lines[1].contains("0.9 (-43.8%)"));
        assert!(!lines[2].contains('('));
        assert_eq!(t.csv.lines().next().unwrap(), "system,size,cross-sensor_eer,cross-sensor_relative,all_eer,all_relative");
        assert_eq!(t.csv.lines().nth(2).unwrap(), "a,1,1.600000,,1.600000,");
    }
}
