//! Shared fixtures and independent reference implementations for the
//! integration tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use perifuse::dataset::{Condition, Eye, SampleKey};
use perifuse::eval::{generate_synthetic_scoreset, ConditionSpec, Gaussian, SyntheticSpec};
use perifuse::matching::{ComparatorId, ScoreSet};

/// 28 subjects x 2 eyes = 56 instances, `samples` captures on each sensor.
pub fn instance_keys(sensors: &[&str], samples: u32) -> Vec<SampleKey> {
    let mut keys = Vec::new();
    for subject in 0..28 {
        for eye in [Eye::Left, Eye::Right] {
            for s in sensors {
                for idx in 1..=samples {
                    keys.push(SampleKey::new(&format!("s{subject:03}"), eye, s, idx));
                }
            }
        }
    }
    keys
}

/// Reference FA/FR curve by direct counting at every threshold.
pub fn oracle_curve(genuine: &[f64], impostor: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut t: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(t);
    thresholds.push(f64::INFINITY);
    thresholds
        .into_iter()
        .map(|th| {
            let far = impostor.iter().filter(|&&s| s >= th).count() as f64 / impostor.len() as f64;
            let frr = genuine.iter().filter(|&&s| s < th).count() as f64 / genuine.len() as f64;
            (th, far, frr)
        })
        .collect()
}

/// Reference EER: the crossing of FAR and FRR on the piecewise-linear curve
/// through consecutive operating points.
pub fn oracle_eer(curve: &[(f64, f64, f64)]) -> f64 {
    for w in curve.windows(2) {
        let (_, fa0, fr0) = w[0];
        let (_, fa1, fr1) = w[1];
        let d0 = fa0 - fr0;
        let d1 = fa1 - fr1;
        if d0 == 0.0 {
            return fa0;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            if d1 == 0.0 {
                return fa1;
            }
            // solve fa0 + u (fa1 - fa0) = fr0 + u (fr1 - fr0)
            let u = (fa0 - fr0) / ((fr1 - fr0) - (fa1 - fa0));
            return fa0 + u * (fa1 - fa0);
        }
    }
    let (_, fa, _) = curve[curve.len() - 1];
    fa
}

/// Reference bracket text for a relative change in percent.
pub fn oracle_bracket(pct: f64) -> String {
    let tenths = (pct * 10.0).round() as i64;
    let sign = if tenths < 0 { "-" } else { "+" };
    let a = tenths.unsigned_abs();
    if a.is_multiple_of(10) {
        format!("({sign}{}%)", a / 10)
    } else {
        format!("({sign}{}.{}%)", a / 10, a % 10)
    }
}

pub fn gauss(mean: f64, sd: f64) -> Gaussian {
    Gaussian::new(mean, sd)
}

pub fn condition(c: Condition, genuine: Vec<Gaussian>, impostor: Vec<Gaussian>, n_gen: usize, n_imp: usize) -> ConditionSpec {
    ConditionSpec {
        condition: c,
        genuine,
        impostor,
        n_genuine: n_gen,
        n_impostor: n_imp,
    }
}

pub fn ids(names: &[&str]) -> Vec<ComparatorId> {
    names.iter().map(|n| ComparatorId::new(*n)).collect()
}

pub fn synthetic(names: &[&str], rho: f64, conditions: Vec<ConditionSpec>, seed: u64) -> ScoreSet {
    let spec = SyntheticSpec {
        comparators: ids(names),
        correlation: rho,
        conditions,
    };
    generate_synthetic_scoreset(&spec, seed).unwrap()
}

/// Two-sensor synthetic set with one genuine shift per condition and
/// comparator; impostors are standard normal.
pub fn three_condition_set(names: &[&str], shifts: [&[f64]; 3], rho: f64, counts: (usize, usize), seed: u64) -> ScoreSet {
    let conds = [Condition::same("iphone"), Condition::same("nokia"), Condition::CrossSensor];
    let specs = conds
        .into_iter()
        .zip(shifts)
        .map(|(c, s)| {
            condition(
                c,
                s.iter().map(|&m| gauss(m, 1.0)).collect(),
                vec![gauss(0.0, 1.0); names.len()],
                counts.0,
                counts.1,
            )
        })
        .collect();
    synthetic(names, rho, specs, seed)
}

/// Small image corpus: every eye instance has its own texture, every capture
/// adds noise and a shifted, rescaled eye. Writes PNGs, `manifest.csv` and
/// `annotations.csv` under `dir` and returns the manifest path.
pub fn write_image_corpus(dir: &Path, subjects: usize, sensors: &[&str], samples: u32, side: u32, seed: u64) -> PathBuf {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut manifest = String::from("subject_id,eye,sensor_id,sample_idx,image_path\n");
    let mut ann = String::from("subject_id,eye,sensor_id,sample_idx,iris_cx,iris_cy,iris_r,sclera_cx,sclera_cy,sclera_r\n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for subject in 0..subjects {
        for eye in ["left", "right"] {
            let freq: (f64, f64) = (rng.random_range(0.1..0.6), rng.random_range(0.1..0.6));
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for (si, sensor) in sensors.iter().enumerate() {
                for idx in 1..=samples {
                    let cx = side as f64 / 2.0 + rng.random_range(-3.0..3.0);
                    let cy = side as f64 / 2.0 + rng.random_range(-3.0..3.0);
                    let r = side as f64 / 5.0 + rng.random_range(-1.0..1.0);
                    let tint = 0.1 * si as f64;
                    let mut img = RgbImage::new(side, side);
                    for (x, y, p) in img.enumerate_pixels_mut() {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        let tex = 0.5 + 0.3 * (freq.0 * dx / r * 10.0 + freq.1 * dy / r * 10.0 + phase).sin();
                        let disc = if (dx * dx + dy * dy).sqrt() < r * 0.45 { -0.3 } else { 0.0 };
                        let v = (tex + disc + tint + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0);
                        let b = (v * 255.0) as u8;
                        *p = Rgb([b, b, b.saturating_sub(10)]);
                    }
                    let name = format!("img/s{subject:02}_{eye}_{sensor}_{idx}.png");
                    img.save(dir.join(&name)).unwrap();
                    writeln!(manifest, "s{subject:02},{eye},{sensor},{idx},{name}").unwrap();
                    writeln!(
                        ann,
                        "s{subject:02},{eye},{sensor},{idx},{cx:.3},{cy:.3},{:.3},{cx:.3},{cy:.3},{r:.3}",
                        r * 0.45
                    )
                    .unwrap();
                }
            }
        }
    }
    let m = dir.join("manifest.csv");
    std::fs::write(&m, manifest).unwrap();
    std::fs::write(dir.join("annotations.csv"), ann).unwrap();
    m
}

/// Synthetic-mode config text with three comparators over two sensors.
pub fn synthetic_config(work: &Path, strategy: &str, seed: u64) -> String {
    let g = |m: &[f64]| {
        m.iter()
            .map(|v| format!("{{ mean = {v:?}, sd = 1.0 }}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let imp = g(&[0.0, 0.0, 0.0]);
    let mut s = format!(
        "version = 1\nseed = {seed}\n\n[paths]\nwork_dir = {:?}\n\n[fusion]\nstrategy = \"{strategy}\"\n\n\
         [synthetic]\ncomparators = [\"gabor\", \"lbp\", \"safe\"]\ncorrelation = 0.2\n",
        work.display().to_string()
    );
    for (cond, means, ng) in [
        ("same_sensor:iphone", [3.0, 2.5, 3.5], 560),
        ("same_sensor:nokia", [2.5, 2.0, 3.0], 560),
        ("cross_sensor", [1.5, 1.2, 2.0], 1400),
    ] {
        write!(
            s,
            "\n[[synthetic.conditions]]\ncondition = \"{cond}\"\ngenuine = [{}]\nimpostor = [{imp}]\nn_genuine = {ng}\nn_impostor = 3080\n",
            g(&means)
        )
        .unwrap();
    }
    s
}
