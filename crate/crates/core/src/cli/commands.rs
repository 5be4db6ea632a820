use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::dataset::{generate_protocol, load_manifest, CircleAnnotation, Label, Manifest, SampleRef, TrialSpec};
use crate::error::{Error, Result};
use crate::eval::{
    det_points, evaluate, generate_synthetic_scoreset, report_table, write_curve_csv, write_det_csv, Column,
    EvalReport, ReportTable,
};
use crate::features::{extract, make_grid, ExtractorKind, GaborBank, Template};
use crate::fusion::{cross_validated_llrs, subset_search, train_strategy, StrategyModels};
use crate::matching::{ingest_external_scores, score_protocol, ScoreSet, TemplateStore};
use crate::preproc::{clahe, load_gray, normalize_geometry, save_png, NormalizedImage, FRAME_SIDE};

const PREPARE_TAG: &[u8] = b"perifuse-prepare-1";

/// Work directory layout.
pub struct WorkDir(PathBuf);

impl WorkDir {
    pub fn new(root: &Path) -> Self {
        WorkDir(root.to_path_buf())
    }

    pub fn root(&self) -> &Path {
        &self.0
    }

    pub fn normalized(&self) -> PathBuf {
        self.0.join("normalized")
    }

    pub fn templates(&self, kind: ExtractorKind) -> PathBuf {
        self.0.join("templates").join(kind.as_str())
    }

    pub fn builtin_scores(&self) -> PathBuf {
        self.0.join("scores_builtin.csv")
    }

    pub fn scores(&self) -> PathBuf {
        self.0.join("scores.csv")
    }

    pub fn fused_scores(&self) -> PathBuf {
        self.0.join("scores_llr.csv")
    }

    pub fn models(&self) -> PathBuf {
        self.0.join("models")
    }

    pub fn curves(&self) -> PathBuf {
        self.0.join("curves")
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Sidecar written next to each normalized image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareSidecar {
    pub source_sample_key: String,
    pub scale_factor: f64,
    pub hash: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrepareSummary {
    pub computed: usize,
    pub skipped: usize,
}

fn load_inputs(cfg: &RunConfig) -> Result<Manifest> {
    let m = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::config("no manifest configured"))?;
    let a = cfg
        .annotations
        .as_ref()
        .ok_or_else(|| Error::config("no annotations configured"))?;
    load_manifest(m, a)
}

fn input_hash(sample: &SampleRef, ann: &CircleAnnotation, cfg: &RunConfig) -> Result<String> {
    let bytes = std::fs::read(&sample.image_path).map_err(|e| Error::io(&sample.image_path, e))?;
    let mut h = Sha256::new();
    h.update(PREPARE_TAG);
    h.update(&bytes);
    for v in [
        ann.iris_center.0,
        ann.iris_center.1,
        ann.iris_radius,
        ann.sclera_center.0,
        ann.sclera_center.1,
        ann.sclera_radius,
    ] {
        h.update(v.to_le_bytes());
    }
    let clahe = serde_json::to_string(&cfg.clahe).expect("clahe params serialize");
    h.update(clahe.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn sample_context(e: Error, key: &impl std::fmt::Display) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("sample {key}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("sample {key}: {m}")),
        other => other,
    }
}

/// Normalizes every manifest image to the fixed frame and equalizes it.
/// Outputs whose sidecar hash matches the current inputs are left alone.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let manifest = load_inputs(cfg)?;
    let work = WorkDir::new(&cfg.work_dir);
    let out_dir = work.normalized();
    ensure_dir(&out_dir)?;

    let done: Vec<bool> = manifest
        .samples
        .par_iter()
        .map(|s| -> Result<bool> {
            let ann = manifest
                .annotation_for(&s.key)
                .ok_or_else(|| Error::data(format!("annotation missing for sample {}", s.key)))?;
            let stem = s.key.file_stem();
            let png = out_dir.join(format!("{stem}.png"));
            let side = out_dir.join(format!("{stem}.json"));
            let hash = input_hash(s, ann, cfg)?;
            if png.is_file() {
                if let Ok(text) = std::fs::read_to_string(&side) {
                    if let Ok(old) = serde_json::from_str::<PrepareSidecar>(&text) {
                        if old.hash == hash {
                            debug!("{stem}: up to date");
                            return Ok(false);
                        }
                    }
                }
            }
            let gray = load_gray(&s.image_path)?;
            let norm = normalize_geometry(&gray, ann).map_err(|e| sample_context(e, &s.key))?;
            let eq = clahe(&norm, &cfg.clahe)?;
            save_png(&eq, &png)?;
            let sidecar = PrepareSidecar {
                source_sample_key: s.key.to_string(),
                scale_factor: eq.scale_factor(),
                hash,
            };
            let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
            write_file(&side, &(json + "\n"))?;
            Ok(true)
        })
        .collect::<Result<_>>()?;

    let computed = done.iter().filter(|&&d| d).count();
    let summary = PrepareSummary {
        computed,
        skipped: done.len() - computed,
    };
    info!("prepare: {} computed, {} up to date", summary.computed, summary.skipped);
    Ok(summary)
}

fn load_normalized(dir: &Path, s: &SampleRef) -> Result<NormalizedImage> {
    let stem = s.key.file_stem();
    let png = dir.join(format!("{stem}.png"));
    let side = dir.join(format!("{stem}.json"));
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: PrepareSidecar = serde_json::from_str(&text).map_err(|e| Error::parse(&side, e.to_string()))?;
    NormalizedImage::from_frame(load_gray(&png)?, meta.scale_factor).map_err(|e| sample_context(e, &s.key))
}

/// Extracts a template per sample and enabled built-in comparator.
pub fn cmd_extract(cfg: &RunConfig) -> Result<usize> {
    let kinds = cfg.builtin_kinds();
    if kinds.is_empty() {
        info!("extract: no built-in comparators enabled");
        return Ok(0);
    }
    let manifest = load_inputs(cfg)?;
    let work = WorkDir::new(&cfg.work_dir);
    let grid = make_grid(FRAME_SIDE, cfg.grid_n)?;
    let bank = GaborBank::new(cfg.gabor)?;
    for &k in &kinds {
        ensure_dir(&work.templates(k))?;
    }
    let norm_dir = work.normalized();
    let counts: Vec<usize> = manifest
        .samples
        .par_iter()
        .map(|s| -> Result<usize> {
            let img = load_normalized(&norm_dir, s)?;
            for &k in &kinds {
                let t = extract(k, &img, &grid, &bank, s.key.clone()).map_err(|e| sample_context(e, &s.key))?;
                t.save(&work.templates(k).join(format!("{}.json", s.key.file_stem())))?;
            }
            Ok(kinds.len())
        })
        .collect::<Result<_>>()?;
    let n = counts.iter().sum();
    info!("extract: {n} templates");
    Ok(n)
}

fn protocol(cfg: &RunConfig) -> Result<Vec<TrialSpec>> {
    let manifest = load_inputs(cfg)?;
    generate_protocol(&manifest.keys())
}

/// Scores the trial protocol with the enabled built-in comparators.
pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreSet> {
    let kinds = cfg.builtin_kinds();
    let manifest = load_inputs(cfg)?;
    let trials = generate_protocol(&manifest.keys())?;
    let work = WorkDir::new(&cfg.work_dir);
    let loaded: Vec<Vec<Template>> = manifest
        .samples
        .par_iter()
        .map(|s| {
            kinds
                .iter()
                .map(|&k| Template::load(&work.templates(k).join(format!("{}.json", s.key.file_stem()))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut store = TemplateStore::new();
    for t in loaded.into_iter().flatten() {
        store.insert(t);
    }
    let set = score_protocol(&trials, &store, &kinds)?;
    ensure_dir(work.root())?;
    set.write_csv(&work.builtin_scores(), None)?;
    info!("score: {} trials x {} comparators", set.len(), kinds.len());
    Ok(set)
}

/// Combines built-in scores and external score files into the score set of
/// all enabled comparators, aligned with the trial protocol.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<ScoreSet> {
    let work = WorkDir::new(&cfg.work_dir);
    let trials = protocol(cfg)?;
    let mut set = ScoreSet::empty(Vec::new(), crate::matching::Provenance::Computed);
    if !cfg.builtin_kinds().is_empty() {
        let path = work.builtin_scores();
        if !path.is_file() {
            return Err(Error::data(format!(
                "{} not found; run the score step first",
                path.display()
            )));
        }
        let builtin = ScoreSet::read_csv(&path)?;
        let mut only = builtin.clone();
        only.comparator_ids.retain(|c| c.builtin().is_some());
        set.merge(&only)?;
    }
    for e in cfg.enabled_external() {
        let ext = ingest_external_scores(&e.path, &e.comparator.as_str().into(), &trials)?;
        set.merge(&ext)?;
    }
    let set = ordered(set, cfg)?;
    ensure_dir(work.root())?;
    set.write_csv(&work.scores(), None)?;
    info!("ingest: {} comparators over {} trials", set.comparator_ids.len(), set.len());
    Ok(set)
}

/// Restricts a score set to the enabled comparators, in config order.
fn ordered(mut set: ScoreSet, cfg: &RunConfig) -> Result<ScoreSet> {
    for c in &cfg.comparators {
        if !set.comparator_ids.contains(c) {
            return Err(Error::data(format!("comparator '{c}' has no scores")));
        }
    }
    set.comparator_ids = cfg.comparators.clone();
    for t in &mut set.trials {
        t.scores.retain(|id, _| cfg.comparators.contains(id));
    }
    Ok(set)
}

/// Draws the configured synthetic score set and writes it as the score file.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<ScoreSet> {
    let spec = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::config("simulate needs a [synthetic] section"))?;
    let set = ordered(generate_synthetic_scoreset(spec, cfg.seed)?, cfg)?;
    let work = WorkDir::new(&cfg.work_dir);
    ensure_dir(work.root())?;
    set.write_csv(&work.scores(), None)?;
    info!("simulate: {} trials", set.len());
    Ok(set)
}

fn load_scores(cfg: &RunConfig) -> Result<ScoreSet> {
    let path = WorkDir::new(&cfg.work_dir).scores();
    if !path.is_file() {
        return Err(Error::data(format!("{} not found; produce scores first", path.display())));
    }
    ordered(ScoreSet::read_csv(&path)?, cfg)
}

/// Fused scores of every trial under the configured strategy, in-sample or
/// out of fold.
fn fused_llrs(cfg: &RunConfig, set: &ScoreSet, models: &StrategyModels) -> Result<Vec<f64>> {
    if cfg.fusion.folds >= 2 {
        cross_validated_llrs(set, cfg.fusion.strategy, &cfg.comparators, cfg.fusion.prior, cfg.fusion.folds)
    } else {
        models.llrs(&set.trials)
    }
}

/// Trains the configured fusion strategy, writes one model file per trained
/// condition and the score file with fused scores attached.
pub fn cmd_fuse(cfg: &RunConfig) -> Result<StrategyModels> {
    let set = load_scores(cfg)?;
    let models = train_strategy(&set, cfg.fusion.strategy, &cfg.comparators, cfg.fusion.prior)?;
    let work = WorkDir::new(&cfg.work_dir);
    let dir = work.models();
    ensure_dir(&dir)?;
    for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let p = entry.map_err(|e| Error::io(&dir, e))?.path();
        if p.extension().is_some_and(|x| x == "json") {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    for (stem, m) in models.file_stems() {
        m.save(&dir.join(format!("{stem}.json")))?;
    }
    let llr = fused_llrs(cfg, &set, &models)?;
    set.write_csv(&work.fused_scores(), Some(&llr))?;
    info!("fuse: {} model(s), strategy {}", models.models().len(), cfg.fusion.strategy);
    Ok(models)
}

/// Files and tables produced by the evaluation step.
#[derive(Clone, Debug)]
pub struct EvalOutputs {
    pub fused: EvalReport,
    pub per_comparator: BTreeMap<String, EvalReport>,
    pub table: ReportTable,
}

fn entries(set: &ScoreSet, values: &[f64]) -> Vec<(crate::dataset::Condition, Label, f64)> {
    set.trials
        .iter()
        .zip(values)
        .map(|(t, &v)| (t.trial.condition.clone(), t.trial.label, v))
        .collect()
}

fn write_curves(dir: &Path, system: &str, report: &EvalReport) -> Result<()> {
    for (col, ev) in &report.columns {
        write_curve_csv(&ev.curve, &dir.join(format!("{system}_{}.csv", col.name())))?;
        write_det_csv(&det_points(&ev.curve), &dir.join(format!("{system}_{}_det.csv", col.name())))?;
    }
    Ok(())
}

/// Per-system metrics. Cllr is only meaningful for the fused scores and is
/// left empty for raw comparator scores.
fn metrics_csv(fused: &EvalReport, per: &BTreeMap<String, EvalReport>, order: &[String]) -> String {
    let mut out = String::from("system,column,eer,cllr,cllr_min\n");
    for name in order {
        for (col, ev) in &per[name].columns {
            writeln!(out, "{name},{col},{:.10},,", ev.eer).unwrap();
        }
    }
    for (col, ev) in &fused.columns {
        writeln!(out, "fused,{col},{:.10},{:.10},{:.10}", ev.eer, ev.cllr, ev.cllr_min).unwrap();
    }
    out
}

/// Evaluates every comparator and the fused system, runs the subset search
/// and writes the report table, metrics and curve exports.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutputs> {
    let set = load_scores(cfg)?;
    let work = WorkDir::new(&cfg.work_dir);
    let curves = work.curves();
    ensure_dir(&curves)?;

    let mut per_comparator = BTreeMap::new();
    let mut order = Vec::new();
    for id in &cfg.comparators {
        let raw: Vec<f64> = set.trials.iter().map(|t| t.score(id)).collect::<Result<_>>()?;
        let report = evaluate(&entries(&set, &raw))?;
        write_curves(&curves, id.as_str(), &report)?;
        order.push(id.as_str().to_string());
        per_comparator.insert(id.as_str().to_string(), report);
    }

    let models = train_strategy(&set, cfg.fusion.strategy, &cfg.comparators, cfg.fusion.prior)?;
    let llr = fused_llrs(cfg, &set, &models)?;
    let fused = evaluate(&entries(&set, &llr))?;
    write_curves(&curves, "fused", &fused)?;

    let ranked = subset_search(&set, cfg.fusion.strategy, &cfg.comparators, cfg.fusion.prior)?;
    let rows: Vec<_> = ranked.iter().map(|r| r.report_row()).collect();
    let table = report_table(&rows);
    write_file(&work.root().join("report.csv"), &table.csv)?;
    write_file(&work.root().join("report.txt"), &table.text)?;
    write_file(&work.root().join("metrics.csv"), &metrics_csv(&fused, &per_comparator, &order))?;

    if let Some(e) = fused.eer(&Column::Condition(crate::dataset::Condition::CrossSensor)) {
        info!("eval: fused cross-sensor EER {:.2}%", e * 100.0);
    }
    Ok(EvalOutputs {
        fused,
        per_comparator,
        table,
    })
}

/// Full experiment: scores (from images, external files or the synthetic
/// spec), fusion, subset search and reports.
pub fn cmd_run_experiment(cfg: &RunConfig) -> Result<EvalOutputs> {
    if cfg.is_synthetic() {
        cmd_simulate(cfg)?;
    } else {
        if !cfg.builtin_kinds().is_empty() {
            cmd_prepare(cfg)?;
            cmd_extract(cfg)?;
            cmd_score(cfg)?;
        }
        cmd_ingest(cfg)?;
    }
    cmd_fuse(cfg)?;
    cmd_eval(cfg)
}
