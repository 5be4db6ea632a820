//! Sample manifests, circle annotations, and the genuine/impostor trial protocol.
//!
//! Each eye of each subject is its own instance. Genuine trials pair samples of
//! the same instance; impostor trials pair the first sample of one instance with
//! the second sample of every other instance. Same-sensor conditions use one
//! device for probe and gallery; the cross-sensor condition always draws the
//! probe from the lexicographically smaller sensor id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::Left => "left",
            Eye::Right => "right",
        })
    }
}

impl FromStr for Eye {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Eye::Left),
            "right" | "r" => Ok(Eye::Right),
            other => Err(Error::data(format!("unknown eye '{other}'"))),
        }
    }
}

/// One eye of one subject.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceKey {
    pub subject_id: String,
    pub eye: Eye,
}

impl fmt::Display for InstanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject_id, self.eye)
    }
}

/// Unique identity of one captured image.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleKey {
    pub subject_id: String,
    pub eye: Eye,
    pub sensor_id: String,
    pub sample_idx: u32,
}

impl SampleKey {
    pub fn new(subject_id: &str, eye: Eye, sensor_id: &str, sample_idx: u32) -> Self {
        SampleKey {
            subject_id: subject_id.to_string(),
            eye,
            sensor_id: sensor_id.to_string(),
            sample_idx,
        }
    }

    pub fn instance(&self) -> InstanceKey {
        InstanceKey {
            subject_id: self.subject_id.clone(),
            eye: self.eye,
        }
    }

    /// File-name friendly form, e.g. `s01_left_iphone_3`.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.subject_id, self.eye, self.sensor_id, self.sample_idx
        )
    }
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.subject_id, self.eye, self.sensor_id, self.sample_idx
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRef {
    pub key: SampleKey,
    pub image_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircleAnnotation {
    pub sample: SampleKey,
    pub iris_center: (f64, f64),
    pub iris_radius: f64,
    pub sclera_center: (f64, f64),
    pub sclera_radius: f64,
}

impl CircleAnnotation {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.iris_center.0,
            self.iris_center.1,
            self.iris_radius,
            self.sclera_center.0,
            self.sclera_center.1,
            self.sclera_radius,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "annotation for {} has non-finite values",
                self.sample
            )));
        }
        if !(self.iris_radius > 0.0 && self.sclera_radius > self.iris_radius) {
            return Err(Error::data(format!(
                "annotation for {}: need sclera_r > iris_r > 0, got sclera_r={} iris_r={}",
                self.sample, self.sclera_radius, self.iris_radius
            )));
        }
        Ok(())
    }

    /// Both circle centers must fall inside a `width`×`height` image.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        let inside = |(x, y): (f64, f64)| {
            x >= 0.0 && y >= 0.0 && x <= (width as f64 - 1.0) && y <= (height as f64 - 1.0)
        };
        if !inside(self.iris_center) || !inside(self.sclera_center) {
            return Err(Error::data(format!(
                "annotation for {}: circle center outside {}x{} image",
                self.sample, width, height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::Impostor => "impostor",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "genuine" => Ok(Label::Genuine),
            "impostor" => Ok(Label::Impostor),
            other => Err(Error::data(format!("unknown label '{other}'"))),
        }
    }
}

/// Capture condition of a trial. Same-sensor conditions sort before the
/// cross-sensor one, which fixes column order in reports.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Condition {
    SameSensor(String),
    CrossSensor,
}

impl Condition {
    pub fn same(sensor_id: &str) -> Self {
        Condition::SameSensor(sensor_id.to_string())
    }

    /// Short column name used in report tables.
    pub fn column_name(&self) -> String {
        match self {
            Condition::SameSensor(s) => s.clone(),
            Condition::CrossSensor => "cross-sensor".to_string(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::SameSensor(s) => write!(f, "same_sensor:{s}"),
            Condition::CrossSensor => f.write_str("cross_sensor"),
        }
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Condition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "cross_sensor" {
            return Ok(Condition::CrossSensor);
        }
        match s.strip_prefix("same_sensor:") {
            Some(id) if !id.is_empty() => Ok(Condition::SameSensor(id.to_string())),
            _ => Err(Error::data(format!("unknown condition '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialSpec {
    pub probe: SampleKey,
    pub gallery: SampleKey,
    pub label: Label,
    pub condition: Condition,
}

impl TrialSpec {
    /// Identity used when merging scores from different sources.
    pub fn pair_key(&self) -> (SampleKey, SampleKey) {
        (self.probe.clone(), self.gallery.clone())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub samples: Vec<SampleRef>,
    pub annotations: Vec<CircleAnnotation>,
}

impl Manifest {
    pub fn annotation_for(&self, key: &SampleKey) -> Option<&CircleAnnotation> {
        self.annotations
            .binary_search_by(|a| a.sample.cmp(key))
            .ok()
            .map(|i| &self.annotations[i])
    }

    pub fn keys(&self) -> Vec<SampleKey> {
        self.samples.iter().map(|s| s.key.clone()).collect()
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    subject_id: String,
    eye: String,
    sensor_id: String,
    sample_idx: u32,
    image_path: String,
}

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    subject_id: String,
    eye: String,
    sensor_id: String,
    sample_idx: u32,
    iris_cx: f64,
    iris_cy: f64,
    iris_r: f64,
    sclera_cx: f64,
    sclera_cy: f64,
    sclera_r: f64,
}

/// Conventional location of the annotation file next to a manifest.
pub fn sibling_annotations(manifest: &Path) -> PathBuf {
    manifest.with_file_name("annotations.csv")
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 2))))
        .collect()
}

fn make_key(subject: &str, eye: &str, sensor: &str, idx: u32) -> Result<SampleKey> {
    if subject.is_empty() || sensor.is_empty() {
        return Err(Error::data("empty subject_id or sensor_id"));
    }
    if idx < 1 {
        return Err(Error::data(format!(
            "sample_idx must be >= 1 for {subject}/{eye}/{sensor}"
        )));
    }
    Ok(SampleKey::new(subject, eye.parse()?, sensor, idx))
}

/// Loads a sample manifest and its annotation file.
///
/// Relative image paths are resolved against the manifest's directory. Every
/// sample needs exactly one annotation; annotations for unknown samples are
/// ignored with a warning.
pub fn load_manifest(manifest_path: &Path, annotations_path: &Path) -> Result<Manifest> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples: BTreeMap<SampleKey, SampleRef> = BTreeMap::new();
    for row in read_rows::<ManifestRow>(manifest_path)? {
        let key = make_key(&row.subject_id, &row.eye, &row.sensor_id, row.sample_idx)?;
        let raw = PathBuf::from(&row.image_path);
        let image_path = if raw.is_absolute() { raw } else { base.join(raw) };
        if samples.contains_key(&key) {
            return Err(Error::data(format!("duplicate sample key {key} in manifest")));
        }
        samples.insert(key.clone(), SampleRef { key, image_path });
    }

    let mut annotations: BTreeMap<SampleKey, CircleAnnotation> = BTreeMap::new();
    for row in read_rows::<AnnotationRow>(annotations_path)? {
        let key = make_key(&row.subject_id, &row.eye, &row.sensor_id, row.sample_idx)?;
        let ann = CircleAnnotation {
            sample: key.clone(),
            iris_center: (row.iris_cx, row.iris_cy),
            iris_radius: row.iris_r,
            sclera_center: (row.sclera_cx, row.sclera_cy),
            sclera_radius: row.sclera_r,
        };
        ann.validate()?;
        if !samples.contains_key(&key) {
            log::warn!("annotation for {key} has no manifest entry, ignored");
            continue;
        }
        if annotations.insert(key.clone(), ann).is_some() {
            return Err(Error::data(format!("duplicate annotation for {key}")));
        }
    }

    if let Some(missing) = samples.keys().find(|k| !annotations.contains_key(*k)) {
        return Err(Error::data(format!("annotation missing for sample {missing}")));
    }

    Ok(Manifest {
        samples: samples.into_values().collect(),
        annotations: annotations.into_values().collect(),
    })
}

/// Samples indexed by eye instance, then sensor, then sample index.
type Grouped<'a> = BTreeMap<InstanceKey, BTreeMap<&'a str, BTreeMap<u32, &'a SampleKey>>>;

fn group(samples: &[SampleKey]) -> Grouped<'_> {
    let mut out: Grouped<'_> = BTreeMap::new();
    for s in samples {
        out.entry(s.instance())
            .or_default()
            .entry(s.sensor_id.as_str())
            .or_default()
            .insert(s.sample_idx, s);
    }
    out
}

/// Distinct sensor ids, sorted.
pub fn sensors(samples: &[SampleKey]) -> Vec<String> {
    samples
        .iter()
        .map(|s| s.sensor_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Ordered (probe sensor, gallery sensor) pairs making up a condition.
fn sensor_pairs(samples: &[SampleKey], condition: &Condition) -> Result<Vec<(String, String)>> {
    let known = sensors(samples);
    match condition {
        Condition::SameSensor(id) => {
            if !known.contains(id) {
                return Err(Error::data(format!("unknown sensor_id '{id}' in condition")));
            }
            Ok(vec![(id.clone(), id.clone())])
        }
        Condition::CrossSensor => {
            if known.len() < 2 {
                return Err(Error::data(
                    "cross-sensor condition needs samples from at least two sensors",
                ));
            }
            let mut pairs = Vec::new();
            for (i, a) in known.iter().enumerate() {
                for b in &known[i + 1..] {
                    pairs.push((a.clone(), b.clone()));
                }
            }
            Ok(pairs)
        }
    }
}

/// Genuine trials for one condition.
///
/// Same-sensor: every unordered pair of samples of an instance on that sensor,
/// lower sample index as probe. Cross-sensor: every probe sample on the smaller
/// sensor id against every gallery sample on the larger one.
pub fn generate_genuine_trials(samples: &[SampleKey], condition: &Condition) -> Result<Vec<TrialSpec>> {
    let pairs = sensor_pairs(samples, condition)?;
    let grouped = group(samples);
    let mut trials = Vec::new();
    for by_sensor in grouped.values() {
        for (probe_sensor, gallery_sensor) in &pairs {
            let (Some(probes), Some(galleries)) = (
                by_sensor.get(probe_sensor.as_str()),
                by_sensor.get(gallery_sensor.as_str()),
            ) else {
                continue;
            };
            for (&pi, &probe) in probes {
                for (&gi, &gallery) in galleries {
                    if probe_sensor == gallery_sensor && gi <= pi {
                        continue;
                    }
                    trials.push(TrialSpec {
                        probe: probe.clone(),
                        gallery: gallery.clone(),
                        label: Label::Genuine,
                        condition: condition.clone(),
                    });
                }
            }
        }
    }
    trials.sort();
    Ok(trials)
}

/// Impostor trials for one condition: sample 1 of each instance (probe sensor)
/// against sample 2 of every other instance (gallery sensor).
pub fn generate_impostor_trials(samples: &[SampleKey], condition: &Condition) -> Result<Vec<TrialSpec>> {
    let pairs = sensor_pairs(samples, condition)?;
    let grouped = group(samples);
    let mut trials = Vec::new();
    for (probe_sensor, gallery_sensor) in &pairs {
        let lookup = |inst: &InstanceKey, sensor: &str, idx: u32| -> Result<SampleKey> {
            grouped[inst]
                .get(sensor)
                .and_then(|m| m.get(&idx))
                .map(|k| (*k).clone())
                .ok_or_else(|| {
                    Error::data(format!(
                        "instance {inst} lacks sample_idx {idx} on sensor '{sensor}'"
                    ))
                })
        };
        let mut firsts = Vec::with_capacity(grouped.len());
        let mut seconds = Vec::with_capacity(grouped.len());
        for inst in grouped.keys() {
            firsts.push(lookup(inst, probe_sensor, 1)?);
            seconds.push(lookup(inst, gallery_sensor, 2)?);
        }
        for (i, probe) in firsts.iter().enumerate() {
            for (j, gallery) in seconds.iter().enumerate() {
                if i == j {
                    continue;
                }
                trials.push(TrialSpec {
                    probe: probe.clone(),
                    gallery: gallery.clone(),
                    label: Label::Impostor,
                    condition: condition.clone(),
                });
            }
        }
    }
    trials.sort();
    Ok(trials)
}

/// Every condition present in a sample set: one same-sensor condition per
/// sensor, plus cross-sensor when two or more sensors exist.
pub fn conditions(samples: &[SampleKey]) -> Vec<Condition> {
    let sensors = sensors(samples);
    let mut out: Vec<Condition> = sensors.iter().map(|s| Condition::same(s)).collect();
    if sensors.len() >= 2 {
        out.push(Condition::CrossSensor);
    }
    out
}

/// Full protocol: genuine then impostor trials for every condition.
pub fn generate_protocol(samples: &[SampleKey]) -> Result<Vec<TrialSpec>> {
    let mut all = Vec::new();
    for condition in conditions(samples) {
        all.extend(generate_genuine_trials(samples, &condition)?);
        all.extend(generate_impostor_trials(samples, &condition)?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn synth(instances: usize, per_sensor: u32, sensors: &[&str]) -> Vec<SampleKey> {
        let mut out = Vec::new();
        for i in 0..instances {
            let subject = format!("s{:03}", i / 2);
            let eye = if i % 2 == 0 { Eye::Left } else { Eye::Right };
            for sensor in sensors {
                for idx in 1..=per_sensor {
                    out.push(SampleKey::new(&subject, eye, sensor, idx));
                }
            }
        }
        out
    }

    #[test]
    fn single_pair_gives_one_trial() {
        let s = synth(1, 2, &["a"]);
        let t = generate_genuine_trials(&s, &Condition::same("a")).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].probe.sample_idx, 1);
        assert_eq!(t[0].gallery.sample_idx, 2);
    }

    #[test]
    fn one_instance_has_no_impostors() {
        let s = synth(1, 2, &["a"]);
        assert!(generate_impostor_trials(&s, &Condition::same("a"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn three_instances_match_enumeration() {
        let s = synth(3, 2, &["a"]);
        let got = generate_impostor_trials(&s, &Condition::same("a")).unwrap();
        // brute force over every ordered sample pair
        let mut expected = Vec::new();
        for p in &s {
            for g in &s {
                if p.instance() != g.instance() && p.sample_idx == 1 && g.sample_idx == 2 {
                    expected.push((p.clone(), g.clone()));
                }
            }
        }
        expected.sort();
        let got: Vec<_> = got.iter().map(|t| t.pair_key()).collect();
        assert_eq!(got.len(), 6);
        assert_eq!(got, expected);
    }

    #[test]
    fn cross_sensor_probe_is_smaller_sensor() {
        let s = synth(2, 2, &["nokia", "iphone"]);
        for t in generate_genuine_trials(&s, &Condition::CrossSensor).unwrap() {
            assert_eq!(t.probe.sensor_id, "iphone");
            assert_eq!(t.gallery.sensor_id, "nokia");
        }
        for t in generate_impostor_trials(&s, &Condition::CrossSensor).unwrap() {
            assert_eq!((t.probe.sensor_id.as_str(), t.probe.sample_idx), ("iphone", 1));
            assert_eq!((t.gallery.sensor_id.as_str(), t.gallery.sample_idx), ("nokia", 2));
        }
    }

    #[test]
    fn unknown_sensor_rejected() {
        let s = synth(2, 2, &["a"]);
        assert!(generate_genuine_trials(&s, &Condition::same("zzz")).is_err());
        assert!(generate_genuine_trials(&s, &Condition::CrossSensor).is_err());
    }

    #[test]
    fn missing_second_sample_names_instance() {
        let mut s = synth(2, 2, &["a"]);
        s.retain(|k| !(k.subject_id == "s000" && k.eye == Eye::Right && k.sample_idx == 2));
        let err = generate_impostor_trials(&s, &Condition::same("a")).unwrap_err();
        assert!(err.to_string().contains("s000/right"), "{err}");
    }

    #[test]
    fn condition_text_round_trip() {
        for c in [Condition::same("iphone"), Condition::CrossSensor] {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert!("same_sensor:".parse::<Condition>().is_err());
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    const ANN_HEADER: &str =
        "subject_id,eye,sensor_id,sample_idx,iris_cx,iris_cy,iris_r,sclera_cx,sclera_cy,sclera_r\n";

    #[test]
    fn loads_two_row_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "manifest.csv",
            "subject_id,eye,sensor_id,sample_idx,image_path\n\
             s1,left,iphone,1,img/a.png\n\
             s1,left,iphone,2,img/b.png\n",
        );
        let a = write(
            dir.path(),
            "annotations.csv",
            &format!(
                "{ANN_HEADER}s1,left,iphone,1,10,10,5,10,10,20\ns1,left,iphone,2,11,10,5,11,10,21.5\n"
            ),
        );
        let got = load_manifest(&m, &a).unwrap();
        assert_eq!(got.samples.len(), 2);
        assert_eq!(got.samples[0].image_path, dir.path().join("img/a.png"));
        let ann = got.annotation_for(&got.samples[1].key).unwrap();
        assert_eq!(ann.sclera_radius, 21.5);
        assert_eq!(sibling_annotations(&m), a);
    }

    #[test]
    fn missing_annotation_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "manifest.csv",
            "subject_id,eye,sensor_id,sample_idx,image_path\ns1,left,iphone,1,a.png\ns1,left,iphone,2,b.png\n",
        );
        let a = write(
            dir.path(),
            "annotations.csv",
            &format!("{ANN_HEADER}s1,left,iphone,1,10,10,5,10,10,20\n"),
        );
        let err = load_manifest(&m, &a).unwrap_err();
        assert!(err.to_string().contains("annotation missing"), "{err}");
        assert!(err.to_string().contains("s1/left/iphone/2"), "{err}");
    }

    #[test]
    fn duplicate_sample_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "manifest.csv",
            "subject_id,eye,sensor_id,sample_idx,image_path\ns1,left,iphone,1,a.png\ns1,left,iphone,1,b.png\n",
        );
        let a = write(dir.path(), "annotations.csv", ANN_HEADER);
        assert!(load_manifest(&m, &a).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn bad_radii_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "manifest.csv",
            "subject_id,eye,sensor_id,sample_idx,image_path\ns1,left,iphone,1,a.png\n",
        );
        let a = write(
            dir.path(),
            "annotations.csv",
            &format!("{ANN_HEADER}s1,left,iphone,1,10,10,30,10,10,20\n"),
        );
        assert!(load_manifest(&m, &a).is_err());
    }
}
