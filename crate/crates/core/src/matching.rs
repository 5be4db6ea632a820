//! Template comparison, protocol scoring, and the score CSV format.
//!
//! Scores are similarities: higher means more alike. Histogram templates
//! (LBP, HOG) use the negated chi-square distance; Gabor templates use cosine
//! similarity. Comparators implemented elsewhere enter through
//! [`ingest_external_scores`], keyed on the exact (probe, gallery) pair.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Eye, Label, SampleKey, TrialSpec};
use crate::error::{Error, Result};
use crate::features::{ExtractorKind, Template};

/// Name of a comparator, built-in (`gabor`, `lbp`, `hog`) or external.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComparatorId(String);

impl ComparatorId {
    pub fn new(name: impl Into<String>) -> Self {
        ComparatorId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The built-in extractor behind this id, if any.
    pub fn builtin(&self) -> Option<ExtractorKind> {
        self.0.parse().ok()
    }
}

impl fmt::Display for ComparatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComparatorId {
    fn from(s: &str) -> Self {
        ComparatorId(s.to_string())
    }
}

impl From<ExtractorKind> for ComparatorId {
    fn from(k: ExtractorKind) -> Self {
        ComparatorId(k.as_str().to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialScore {
    pub trial: TrialSpec,
    pub scores: BTreeMap<ComparatorId, f64>,
}

impl TrialScore {
    pub fn score(&self, id: &ComparatorId) -> Result<f64> {
        self.scores.get(id).copied().ok_or_else(|| {
            Error::data(format!(
                "trial {} vs {} has no '{id}' score",
                self.trial.probe, self.trial.gallery
            ))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Computed,
    Ingested,
}

/// Scores of a set of comparators over a list of trials. Every trial carries
/// a finite score for every listed comparator.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub comparator_ids: Vec<ComparatorId>,
    pub trials: Vec<TrialScore>,
    pub provenance: Provenance,
}

impl ScoreSet {
    pub fn empty(comparator_ids: Vec<ComparatorId>, provenance: Provenance) -> Self {
        ScoreSet {
            comparator_ids,
            trials: Vec::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.trials {
            for id in &self.comparator_ids {
                let s = t.score(id)?;
                if !s.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite '{id}' score for {} vs {}",
                        t.trial.probe, t.trial.gallery
                    )));
                }
            }
        }
        Ok(())
    }

    /// Conditions present, in canonical order.
    pub fn conditions(&self) -> Vec<Condition> {
        let mut c: Vec<_> = self.trials.iter().map(|t| t.trial.condition.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn by_condition(&self, condition: &Condition) -> Vec<&TrialScore> {
        self.trials
            .iter()
            .filter(|t| &t.trial.condition == condition)
            .collect()
    }

    /// Raw genuine and impostor scores of one comparator over some trials.
    pub fn split_scores<'a, I>(trials: I, id: &ComparatorId) -> Result<(Vec<f64>, Vec<f64>)>
    where
        I: IntoIterator<Item = &'a TrialScore>,
    {
        let (mut gen, mut imp) = (Vec::new(), Vec::new());
        for t in trials {
            let s = t.score(id)?;
            match t.trial.label {
                Label::Genuine => gen.push(s),
                Label::Impostor => imp.push(s),
            }
        }
        Ok((gen, imp))
    }

    /// Adds the comparators of `other`, matching trials on (probe, gallery).
    /// Both sets must cover exactly the same trials.
    pub fn merge(&mut self, other: &ScoreSet) -> Result<()> {
        if self.trials.is_empty() && self.comparator_ids.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        for id in &other.comparator_ids {
            if self.comparator_ids.contains(id) {
                return Err(Error::data(format!("comparator '{id}' already present")));
            }
        }
        let index: HashMap<_, _> = other
            .trials
            .iter()
            .map(|t| (t.trial.pair_key(), t))
            .collect();
        if index.len() != self.trials.len() {
            return Err(Error::data(format!(
                "cannot merge: {} trials vs {}",
                self.trials.len(),
                other.trials.len()
            )));
        }
        for t in &mut self.trials {
            let src = index.get(&t.trial.pair_key()).ok_or_else(|| {
                Error::data(format!(
                    "trial {} vs {} missing from merged scores",
                    t.trial.probe, t.trial.gallery
                ))
            })?;
            for id in &other.comparator_ids {
                t.scores.insert(id.clone(), src.score(id)?);
            }
        }
        self.comparator_ids.extend(other.comparator_ids.iter().cloned());
        if other.provenance == Provenance::Ingested {
            self.provenance = Provenance::Ingested;
        }
        Ok(())
    }

    /// Writes the long-format score CSV, one row per (trial, comparator).
    /// With `llr`, each row also carries the fused score of its trial.
    pub fn write_csv(&self, path: &Path, llr: Option<&[f64]>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf, llr)
            .map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W, llr: Option<&[f64]>) -> std::io::Result<()> {
        if let Some(l) = llr {
            assert_eq!(l.len(), self.trials.len(), "one llr per trial");
        }
        write!(out, "{SCORE_HEADER}")?;
        if llr.is_some() {
            write!(out, ",llr")?;
        }
        writeln!(out)?;
        for (i, t) in self.trials.iter().enumerate() {
            let (p, g) = (&t.trial.probe, &t.trial.gallery);
            for id in &self.comparator_ids {
                write!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    id,
                    p.subject_id,
                    p.eye,
                    p.sensor_id,
                    p.sample_idx,
                    g.subject_id,
                    g.eye,
                    g.sensor_id,
                    g.sample_idx,
                    t.trial.label,
                    t.trial.condition,
                    format_score(t.scores[id]),
                )?;
                if let Some(l) = llr {
                    write!(out, ",{}", format_score(l[i]))?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Reads a complete score set back from a score CSV. Comparators are
    /// ordered by first appearance, trials by first appearance.
    pub fn read_csv(path: &Path) -> Result<ScoreSet> {
        let rows = read_score_rows(path)?;
        let mut ids: Vec<ComparatorId> = Vec::new();
        let mut order: Vec<(SampleKey, SampleKey)> = Vec::new();
        let mut trials: HashMap<(SampleKey, SampleKey), TrialScore> = HashMap::new();
        for row in rows {
            if !ids.contains(&row.comparator_id) {
                ids.push(row.comparator_id.clone());
            }
            let key = row.trial.pair_key();
            let entry = trials.entry(key.clone()).or_insert_with(|| {
                order.push(key.clone());
                TrialScore {
                    trial: row.trial.clone(),
                    scores: BTreeMap::new(),
                }
            });
            if entry.trial != row.trial {
                return Err(Error::parse(
                    path,
                    format!("line {}: label/condition disagree with earlier rows", row.line),
                ));
            }
            if entry.scores.insert(row.comparator_id.clone(), row.score).is_some() {
                return Err(Error::parse(
                    path,
                    format!("line {}: duplicate '{}' score", row.line, row.comparator_id),
                ));
            }
        }
        let set = ScoreSet {
            comparator_ids: ids,
            trials: order.into_iter().map(|k| trials.remove(&k).unwrap()).collect(),
            provenance: Provenance::Ingested,
        };
        set.validate()
            .map_err(|e| Error::parse(path, format!("incomplete score file: {e}")))?;
        Ok(set)
    }
}

pub const SCORE_HEADER: &str = "comparator_id,probe_subject,probe_eye,probe_sensor,probe_idx,\
gallery_subject,gallery_eye,gallery_sensor,gallery_idx,label,condition,score";

/// Scientific notation with 17 significant digits; parses back bit-exactly.
pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Deserialize)]
struct RawScoreRow {
    comparator_id: String,
    probe_subject: String,
    probe_eye: String,
    probe_sensor: String,
    probe_idx: u32,
    gallery_subject: String,
    gallery_eye: String,
    gallery_sensor: String,
    gallery_idx: u32,
    label: String,
    condition: String,
    score: f64,
}

/// One parsed row of a score CSV.
#[derive(Clone, Debug)]
pub struct ScoreRow {
    pub line: usize,
    pub comparator_id: ComparatorId,
    pub trial: TrialSpec,
    pub score: f64,
}

pub fn read_score_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<RawScoreRow>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        let ctx = |e: Error| Error::parse(path, format!("line {line}: {e}"));
        let probe_eye: Eye = r.probe_eye.parse().map_err(ctx)?;
        let gallery_eye: Eye = r.gallery_eye.parse().map_err(ctx)?;
        let trial = TrialSpec {
            probe: SampleKey::new(&r.probe_subject, probe_eye, &r.probe_sensor, r.probe_idx),
            gallery: SampleKey::new(&r.gallery_subject, gallery_eye, &r.gallery_sensor, r.gallery_idx),
            label: r.label.parse().map_err(ctx)?,
            condition: r.condition.parse().map_err(ctx)?,
        };
        if !r.score.is_finite() {
            return Err(Error::parse(path, format!("line {line}: non-finite score")));
        }
        out.push(ScoreRow {
            line,
            comparator_id: ComparatorId::new(r.comparator_id),
            trial,
            score: r.score,
        });
    }
    Ok(out)
}

/// Negated chi-square distance between two histogram templates. Bins where
/// both entries are zero are skipped.
pub fn compare_hist(a: &Template, b: &Template) -> Result<f64> {
    check_pair(a, b)?;
    if a.comparator_id == ExtractorKind::Gabor {
        return Err(Error::data("chi-square applies to lbp/hog templates only"));
    }
    let chi2: f64 = a
        .vector
        .iter()
        .zip(&b.vector)
        .filter(|(x, y)| *x + *y > 0.0)
        .map(|(x, y)| (x - y) * (x - y) / (x + y))
        .sum();
    Ok(-chi2)
}

/// Cosine similarity of two Gabor templates.
pub fn compare_gabor(a: &Template, b: &Template) -> Result<f64> {
    check_pair(a, b)?;
    if a.comparator_id != ExtractorKind::Gabor {
        return Err(Error::data("cosine similarity applies to gabor templates only"));
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    let na: f64 = a.vector.iter().map(|x| x * x).sum();
    let nb: f64 = b.vector.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::data(format!(
            "zero-norm gabor template ({} or {})",
            a.sample_key, b.sample_key
        )));
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(a: &Template, b: &Template) -> Result<()> {
    if a.comparator_id != b.comparator_id || a.meta != b.meta || a.vector.len() != b.vector.len() {
        return Err(Error::data(format!(
            "template mismatch: {} {} vs {} {}",
            a.comparator_id, a.sample_key, b.comparator_id, b.sample_key
        )));
    }
    Ok(())
}

/// Similarity under the measure assigned to the templates' comparator.
pub fn compare(a: &Template, b: &Template) -> Result<f64> {
    match a.comparator_id {
        ExtractorKind::Gabor => compare_gabor(a, b),
        ExtractorKind::Lbp | ExtractorKind::Hog => compare_hist(a, b),
    }
}

/// Templates keyed by sample and extractor.
#[derive(Clone, Debug, Default)]
pub struct TemplateStore {
    map: HashMap<(SampleKey, ExtractorKind), Template>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Template) {
        self.map.insert((t.sample_key.clone(), t.comparator_id), t);
    }

    pub fn remove(&mut self, key: &SampleKey, kind: ExtractorKind) -> Option<Template> {
        self.map.remove(&(key.clone(), kind))
    }

    pub fn get(&self, key: &SampleKey, kind: ExtractorKind) -> Result<&Template> {
        self.map.get(&(key.clone(), kind)).ok_or_else(|| {
            Error::data(format!("missing {kind} template for sample {key}"))
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Scores every trial with every requested built-in comparator. Output
/// order follows `trials`.
pub fn score_protocol(trials: &[TrialSpec], store: &TemplateStore, comparators: &[ExtractorKind]) -> Result<ScoreSet> {
    let scored: Result<Vec<TrialScore>> = trials
        .par_iter()
        .map(|trial| {
            let mut scores = BTreeMap::new();
            for &kind in comparators {
                let a = store.get(&trial.probe, kind)?;
                let b = store.get(&trial.gallery, kind)?;
                scores.insert(kind.into(), compare(a, b)?);
            }
            Ok(TrialScore {
                trial: trial.clone(),
                scores,
            })
        })
        .collect();
    let set = ScoreSet {
        comparator_ids: comparators.iter().map(|&k| k.into()).collect(),
        trials: scored?,
        provenance: Provenance::Computed,
    };
    set.validate()?;
    Ok(set)
}

/// Reads one comparator's scores from a score CSV and aligns them with the
/// protocol. Rows for other comparators are skipped. Rows that match no
/// protocol trial, and protocol trials without a row, are errors.
pub fn ingest_external_scores(path: &Path, comparator_id: &ComparatorId, protocol: &[TrialSpec]) -> Result<ScoreSet> {
    let index: HashMap<(SampleKey, SampleKey), usize> = protocol
        .iter()
        .enumerate()
        .map(|(i, t)| (t.pair_key(), i))
        .collect();
    let mut found: Vec<Option<f64>> = vec![None; protocol.len()];
    let mut problems = Vec::new();
    for row in read_score_rows(path)? {
        if &row.comparator_id != comparator_id {
            continue;
        }
        match index.get(&row.trial.pair_key()) {
            None => problems.push(format!(
                "line {}: unknown trial {} vs {}",
                row.line, row.trial.probe, row.trial.gallery
            )),
            Some(&i) => {
                let expected = &protocol[i];
                if expected.label != row.trial.label || expected.condition != row.trial.condition {
                    problems.push(format!(
                        "line {}: label/condition disagree with protocol ({} {})",
                        row.line, expected.label, expected.condition
                    ));
                } else if found[i].replace(row.score).is_some() {
                    problems.push(format!("line {}: duplicate score", row.line));
                }
            }
        }
    }
    if !problems.is_empty() {
        let shown: Vec<_> = problems.iter().take(10).cloned().collect();
        return Err(Error::parse(
            path,
            format!(
                "{} bad '{}' rows: {}",
                problems.len(),
                comparator_id,
                shown.join("; ")
            ),
        ));
    }
    let mut trials = Vec::with_capacity(protocol.len());
    for (t, s) in protocol.iter().zip(found) {
        let score = s.ok_or_else(|| {
            Error::data(format!(
                "no '{}' score in {} for trial {} vs {}",
                comparator_id,
                path.display(),
                t.probe,
                t.gallery
            ))
        })?;
        let mut scores = BTreeMap::new();
        scores.insert(comparator_id.clone(), score);
        trials.push(TrialScore {
            trial: t.clone(),
            scores,
        });
    }
    Ok(ScoreSet {
        comparator_ids: vec![comparator_id.clone()],
        trials,
        provenance: Provenance::Ingested,
    })
}
