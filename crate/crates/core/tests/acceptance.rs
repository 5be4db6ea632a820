//! Acceptance checks. Runs without the libtest harness so that every check
//! prints one PASS/FAIL line; the process fails if any check fails.

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use perifuse::cli::{cmd_run_experiment, Overrides, RunConfig};
use perifuse::dataset::{generate_protocol, Condition, Label};
use perifuse::eval::{
    compute_cllr, compute_curve, compute_eer, cost_at, eer, format_relative, min_cost_threshold, relative_change,
    report_table, Column,
};
use perifuse::features::{extract_gabor, extract_hog, extract_lbp, make_grid, GaborBank, GaborParams};
use perifuse::fusion::{subset_search, train_llr, train_strategy, Strategy, TrainedCondition};
use perifuse::matching::{ComparatorId, ScoreSet, TrialScore};
use perifuse::preproc::{GrayImage, FRAME_SIDE};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:?}, limit {limit:?}"))
}

fn split(set: &ScoreSet, cond: &Condition, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut g, mut i) = (Vec::new(), Vec::new());
    for (t, &v) in set.trials.iter().zip(values) {
        if &t.trial.condition == cond {
            match t.trial.label {
                Label::Genuine => g.push(v),
                Label::Impostor => i.push(v),
            }
        }
    }
    (g, i)
}

fn raw(set: &ScoreSet, id: &str) -> Vec<f64> {
    set.trials.iter().map(|t| t.scores[&ComparatorId::new(id)]).collect()
}

fn protocol_counts() -> Outcome {
    let keys = instance_keys(&["iphone", "nokia"], 5);
    let t0 = Instant::now();
    let trials = generate_protocol(&keys).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let mut counts: BTreeMap<(Condition, Label), usize> = BTreeMap::new();
    for t in &trials {
        *counts.entry((t.condition.clone(), t.label)).or_default() += 1;
    }
    let expect = [
        (Condition::same("iphone"), Label::Genuine, 560),
        (Condition::same("nokia"), Label::Genuine, 560),
        (Condition::CrossSensor, Label::Genuine, 1400),
        (Condition::same("iphone"), Label::Impostor, 3080),
        (Condition::same("nokia"), Label::Impostor, 3080),
        (Condition::CrossSensor, Label::Impostor, 3080),
    ];
    for (c, l, n) in &expect {
        let got = counts.get(&(c.clone(), *l)).copied().unwrap_or(0);
        ensure(got == *n, format!("{c} {l}: {got} trials, expected {n}"))?;
    }
    ensure(counts.len() == 6, "unexpected extra trial groups")?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("560/560 same-sensor genuine, 1400 cross-sensor genuine, 3x3080 impostor in {elapsed:?}"))
}

fn eer_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for set in 0..200 {
        let ng = rng.random_range(1..=500);
        let ni = rng.random_range(1..=500);
        let sep: f64 = rng.random_range(-1.0..4.0);
        // every third set is coarsely quantized to force ties
        let q = if set % 3 == 0 { 4.0 } else { 0.0 };
        let mut draw = |shift: f64| {
            let v: f64 = shift + rng.random::<f64>() * 3.0 - 1.5 + rng.random::<f64>() * 2.0;
            if q > 0.0 {
                (v * q).round() / q
            } else {
                v
            }
        };
        let gen: Vec<f64> = (0..ng).map(|_| draw(sep)).collect();
        let imp: Vec<f64> = (0..ni).map(|_| draw(0.0)).collect();
        let curve = compute_curve(&gen, &imp).map_err(|e| e.to_string())?;
        let oracle = oracle_curve(&gen, &imp);
        ensure(curve.len() == oracle.len(), format!("set {set}: curve length differs"))?;
        for (p, o) in curve.iter().zip(&oracle) {
            ensure(
                p.threshold == o.0 && p.far == o.1 && p.frr == o.2,
                format!("set {set}: point {p:?} vs oracle {o:?}"),
            )?;
        }
        let d = (compute_eer(&curve) - oracle_eer(&oracle)).abs();
        worst = worst.max(d);
        ensure(d <= 1e-12, format!("set {set}: EER differs by {d:e}"))?;
    }
    let elapsed = t0.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("200 sets: curves exact, max EER deviation {worst:e}, {elapsed:?}"))
}

fn calibration() -> Outcome {
    let t0 = Instant::now();
    let set = synthetic(
        &["s"],
        0.0,
        vec![condition(Condition::same("a"), vec![gauss(2.0, 1.0)], vec![gauss(0.0, 1.0)], 100_000, 100_000)],
        31,
    );
    let refs: Vec<&TrialScore> = set.trials.iter().collect();
    let m = train_llr(&refs, &set.comparator_ids, 0.5, TrainedCondition::Pooled).map_err(|e| e.to_string())?;
    let (slope, intercept) = (2.0, -2.0);
    let es = (m.a[0] - slope).abs() / slope;
    let ei = (m.a0 - intercept).abs() / intercept.abs();
    ensure(es < 0.05, format!("slope {} vs {slope}", m.a[0]))?;
    ensure(ei < 0.05, format!("intercept {} vs {intercept}", m.a0))?;
    let llr: Vec<f64> = refs.iter().map(|t| m.llr_of(t).unwrap()).collect();
    let (g, i) = split(&set, &Condition::same("a"), &llr);
    let (c, cmin) = compute_cllr(&g, &i).map_err(|e| e.to_string())?;
    ensure(c - cmin < 0.02, format!("cllr {c} - cllr_min {cmin} >= 0.02"))?;
    let elapsed = t0.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "a1={:.4} a0={:.4} (rel err {:.2}%/{:.2}%), cllr-cllr_min={:.4}, {elapsed:?}",
        m.a[0],
        m.a0,
        es * 100.0,
        ei * 100.0,
        c - cmin
    ))
}

fn affine_invariance() -> Outcome {
    let set = synthetic(
        &["x", "y"],
        0.3,
        vec![condition(
            Condition::same("a"),
            vec![gauss(2.0, 1.0), gauss(1.2, 0.7)],
            vec![gauss(0.0, 1.0), gauss(0.0, 0.6)],
            1000,
            1000,
        )],
        41,
    );
    ensure(set.len() == 2000, "expected 2000 trials")?;
    let refs: Vec<&TrialScore> = set.trials.iter().collect();
    let base = train_llr(&refs, &set.comparator_ids, 0.5, TrainedCondition::Pooled).map_err(|e| e.to_string())?;
    let before: Vec<f64> = refs.iter().map(|t| base.llr_of(t).unwrap()).collect();
    let mut worst = 0.0f64;
    for alpha in [0.5, 3.0] {
        for beta in [-1.0, 10.0] {
            // all comparators together, then each one alone
            for target in [None, Some("x"), Some("y")] {
                let mut moved = set.clone();
                for t in &mut moved.trials {
                    for (id, v) in t.scores.iter_mut() {
                        if target.is_none_or(|n| id.as_str() == n) {
                            *v = alpha * *v + beta;
                        }
                    }
                }
                let mrefs: Vec<&TrialScore> = moved.trials.iter().collect();
                let m = train_llr(&mrefs, &moved.comparator_ids, 0.5, TrainedCondition::Pooled)
                    .map_err(|e| e.to_string())?;
                for (t, b) in mrefs.iter().zip(&before) {
                    let d = (m.llr_of(t).unwrap() - b).abs();
                    worst = worst.max(d);
                    ensure(d <= 1e-6, format!("alpha {alpha} beta {beta} {target:?}: llr moved by {d:e}"))?;
                }
            }
        }
    }
    Ok(format!("2000 trials, 12 transforms, max llr deviation {worst:e}"))
}

fn fusion_gain() -> Outcome {
    let t0 = Instant::now();
    // d' = 2.563 puts each comparator's cross-sensor EER near 10%
    let d = 2.563;
    let set = three_condition_set(&["p", "q"], [&[3.5, 3.5], &[3.2, 3.2], &[d, d]], 0.2, (5000, 5000), 51);
    let ids = set.comparator_ids.clone();
    let cross = Condition::CrossSensor;
    let mut best = f64::INFINITY;
    for id in ["p", "q"] {
        let (g, i) = split(&set, &cross, &raw(&set, id));
        let e = eer(&g, &i).map_err(|e| e.to_string())?;
        ensure((0.08..0.12).contains(&e), format!("comparator {id} cross-sensor EER {e} not near 10%"))?;
        best = best.min(e);
    }
    let models = train_strategy(&set, Strategy::SensorDependent, &ids, 0.5).map_err(|e| e.to_string())?;
    let llr = models.llrs(&set.trials).map_err(|e| e.to_string())?;
    let (g, i) = split(&set, &cross, &llr);
    let fused = eer(&g, &i).map_err(|e| e.to_string())?;
    let gain = (best - fused) / best;
    ensure(gain >= 0.30, format!("fused {fused:.4} vs best {best:.4}: gain {:.1}%", gain * 100.0))?;
    let elapsed = t0.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "best single {:.2}% -> fused {:.2}% {}, {elapsed:?}",
        best * 100.0,
        fused * 100.0,
        format_relative(relative_change(fused, best))
    ))
}

fn strategy_alignment() -> Outcome {
    let spec = |c: Condition, g: f64, i: f64| condition(c, vec![gauss(g, 1.0)], vec![gauss(i, 1.0)], 10_000, 10_000);
    let set = synthetic(
        &["s"],
        0.0,
        vec![
            spec(Condition::same("iphone"), 4.0, 0.0),
            spec(Condition::same("nokia"), 7.0, 3.0),
            spec(Condition::CrossSensor, 2.5, 0.0),
        ],
        61,
    );
    let ids = set.comparator_ids.clone();
    let mut detail = Vec::new();
    let mut independent_fails = false;
    for strategy in Strategy::ALL {
        let models = train_strategy(&set, strategy, &ids, 0.5).map_err(|e| e.to_string())?;
        let llr = models.llrs(&set.trials).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for c in set.conditions() {
            let (g, i) = split(&set, &c, &llr);
            let at_zero = cost_at(&g, &i, 0.0, 0.5);
            let (_, best) = min_cost_threshold(&compute_curve(&g, &i).map_err(|e| e.to_string())?, 0.5);
            let ratio = at_zero / best;
            worst = worst.max(ratio);
            if strategy == Strategy::SensorDependent {
                ensure(ratio <= 1.10, format!("{c}: cost at 0 is {ratio:.3}x the minimum"))?;
            }
        }
        if strategy == Strategy::SensorIndependent {
            independent_fails = worst > 1.10;
        }
        detail.push(format!("{strategy} worst {worst:.3}x"));
    }
    ensure(independent_fails, "sensor-independent model unexpectedly meets the 10% bound")?;
    Ok(detail.join(", "))
}

type Row = (Vec<String>, BTreeMap<Column, f64>);

/// Every subset by size then name, each fused and scored with the counting
/// oracle, then ranked.
fn enumerate_oracle(set: &ScoreSet, names: &[&str], strategy: Strategy) -> Vec<Row> {
    let mut subsets: Vec<Vec<String>> = Vec::new();
    fn rec(names: &[&str], start: usize, cur: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        for k in start..names.len() {
            cur.push(names[k].to_string());
            out.push(cur.clone());
            rec(names, k + 1, cur, out);
            cur.pop();
        }
    }
    rec(names, 0, &mut Vec::new(), &mut subsets);
    let mut rows: Vec<Row> = subsets
        .into_iter()
        .map(|s| {
            let ids: Vec<ComparatorId> = names
                .iter()
                .filter(|n| s.iter().any(|x| x == *n))
                .map(|n| ComparatorId::new(*n))
                .collect();
            let models = train_strategy(set, strategy, &ids, 0.5).unwrap();
            let llr = models.llrs(&set.trials).unwrap();
            let mut cols = BTreeMap::new();
            let mut pooled = (Vec::new(), Vec::new());
            for c in set.conditions() {
                let (g, i) = split(set, &c, &llr);
                cols.insert(Column::Condition(c), oracle_eer(&oracle_curve(&g, &i)));
                pooled.0.extend(g);
                pooled.1.extend(i);
            }
            cols.insert(Column::All, oracle_eer(&oracle_curve(&pooled.0, &pooled.1)));
            (s, cols)
        })
        .collect();
    let cross = Column::Condition(Condition::CrossSensor);
    rows.sort_by(|a, b| {
        a.1[&cross]
            .partial_cmp(&b.1[&cross])
            .unwrap()
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.cmp(&b.0))
    });
    rows
}

fn subset_search_oracle() -> Outcome {
    let names = ["gabor", "lbp", "safe"];
    let set = three_condition_set(
        &names,
        [&[2.6, 2.2, 3.0], &[2.2, 2.0, 2.6], &[1.4, 1.1, 1.8]],
        0.2,
        (300, 600),
        71,
    );
    let mut summary = String::new();
    for strategy in Strategy::ALL {
        let ranked = subset_search(&set, strategy, &set.comparator_ids, 0.5).map_err(|e| e.to_string())?;
        let oracle = enumerate_oracle(&set, &names, strategy);
        ensure(ranked.len() == 7 && oracle.len() == 7, "expected 7 subsets")?;
        let best_single = oracle.iter().find(|r| r.0.len() == 1).unwrap().1.clone();
        for (got, want) in ranked.iter().zip(&oracle) {
            let got_names: Vec<String> = got.comparators.iter().map(|c| c.as_str().to_string()).collect();
            ensure(got_names == want.0, format!("{strategy}: ranking {got_names:?} vs oracle {:?}", want.0))?;
            ensure(got.eer.len() == want.1.len(), "column sets differ")?;
            for (col, w) in &want.1 {
                let g = got.eer[col];
                ensure((g - w).abs() <= 1e-12, format!("{strategy} {:?} {col}: EER {g} vs {w}", want.0))?;
                let pct = (w - best_single[col]) / best_single[col] * 100.0;
                let text = format_relative(got.relative[col]);
                ensure(
                    text == oracle_bracket(pct),
                    format!("{strategy} {:?} {col}: bracket {text} vs {}", want.0, oracle_bracket(pct)),
                )?;
            }
        }
        let rows: Vec<_> = ranked.iter().map(|r| r.report_row()).collect();
        let table = report_table(&rows);
        for (line, r) in table.text.lines().skip(1).zip(&ranked) {
            ensure(
                line.contains('(') == (r.comparators.len() > 1),
                format!("bracket presence wrong in '{line}'"),
            )?;
        }
        let top = &ranked[0];
        let cross = Column::Condition(Condition::CrossSensor);
        write!(
            summary,
            "{strategy} top {} {:.1}% {}; ",
            top.name(),
            top.eer[&cross] * 100.0,
            format_relative(top.relative[&cross])
        )
        .unwrap();
    }
    ensure(
        format_relative(relative_change(0.009, 0.016)) == "(-43.8%)",
        "1.6% -> 0.9% must read (-43.8%)",
    )?;
    ensure(format_relative(relative_change(0.008, 0.008)) == "(+0%)", "unchanged must read (+0%)")?;
    Ok(format!("{summary}1.6->0.9 reads (-43.8%)"))
}

fn feature_properties() -> Outcome {
    let t0 = Instant::now();
    let img = GrayImage::constant(FRAME_SIDE, FRAME_SIDE, 0.42).unwrap();
    let grid = make_grid(FRAME_SIDE, 8).map_err(|e| e.to_string())?;
    ensure(grid.retained().len() == 56, format!("{} blocks retained", grid.retained().len()))?;
    let key = perifuse::dataset::SampleKey::new("c", perifuse::dataset::Eye::Left, "x", 1);
    let bank = GaborBank::new(GaborParams::default()).map_err(|e| e.to_string())?;
    let gabor = extract_gabor(&img, &grid, &bank, key.clone()).map_err(|e| e.to_string())?;
    let gmax = gabor.vector.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(gmax <= 1e-9, format!("gabor magnitude {gmax:e} on a constant image"))?;
    let lbp = extract_lbp(&img, &grid, key.clone()).map_err(|e| e.to_string())?;
    ensure(lbp.meta.blocks == 56, "lbp block count")?;
    for b in lbp.blocks() {
        let want: Vec<f64> = (0..b.len()).map(|k| if k + 1 == b.len() { 1.0 } else { 0.0 }).collect();
        ensure(b == want.as_slice(), format!("lbp block {b:?}"))?;
    }
    let hog = extract_hog(&img, &grid, key).map_err(|e| e.to_string())?;
    ensure(hog.meta.blocks == 56, "hog block count")?;
    ensure(hog.blocks().all(|b| b.len() == 8 && b.iter().all(|&v| v == 0.125)), "hog not uniform 1/8")?;
    let elapsed = t0.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("56 blocks, gabor max {gmax:e}, lbp one-hot last bin, hog uniform, {elapsed:?}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let work = dir.path().join(run);
        let cfg_path = dir.path().join(format!("{run}.toml"));
        std::fs::write(&cfg_path, synthetic_config(&work, "sensor_dependent", 99)).map_err(|e| e.to_string())?;
        let cfg = RunConfig::load(&cfg_path, &Overrides::default()).map_err(|e| e.to_string())?;
        cmd_run_experiment(&cfg).map_err(|e| e.to_string())?;
        let mut files = BTreeMap::new();
        for name in ["report.csv", "report.txt", "metrics.csv", "scores_llr.csv"] {
            files.insert(name.to_string(), std::fs::read(work.join(name)).map_err(|e| e.to_string())?);
        }
        let curves = work.join("curves");
        for entry in std::fs::read_dir(&curves).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            files.insert(
                format!("curves/{}", p.file_name().unwrap().to_string_lossy()),
                std::fs::read(&p).map_err(|e| e.to_string())?,
            );
        }
        outputs.push(files);
    }
    ensure(outputs[0].len() == outputs[1].len(), "different file sets")?;
    for (name, bytes) in &outputs[0] {
        ensure(outputs[1].get(name) == Some(bytes), format!("{name} differs between runs"))?;
    }
    Ok(format!("{} output files byte-identical across two runs", outputs[0].len()))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("1 protocol counts", protocol_counts),
        ("2 EER oracle equivalence", eer_oracle),
        ("3 calibration correctness", calibration),
        ("4 affine invariance", affine_invariance),
        ("5 fusion gain", fusion_gain),
        ("6 strategy alignment", strategy_alignment),
        ("7 subset search", subset_search_oracle),
        ("8 feature extractor properties", feature_properties),
        ("9 end-to-end determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{name}] {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
