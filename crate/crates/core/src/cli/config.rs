use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::sibling_annotations;
use crate::error::{Error, Result};
use crate::eval::SyntheticSpec;
use crate::features::{ExtractorKind, GaborParams};
use crate::fusion::{Strategy, DEFAULT_PRIOR};
use crate::matching::ComparatorId;
use crate::preproc::ClaheParams;

/// Only config format understood by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    /// Defaults to `annotations.csv` next to the manifest.
    pub annotations: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
}

/// Scores of a comparator computed outside this tool.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScores {
    pub comparator: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub strategy: Strategy,
    pub prior: f64,
    /// 0 trains and scores on the same trials; 2 or more scores every trial
    /// out of fold.
    pub folds: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            strategy: Strategy::SensorDependent,
            prior: DEFAULT_PRIOR,
            folds: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    paths: PathsConfig,
    #[serde(default = "default_grid_n")]
    grid_n: usize,
    #[serde(default)]
    gabor: GaborParams,
    #[serde(default)]
    clahe: ClaheParams,
    comparators: Option<Vec<String>>,
    #[serde(default)]
    external: Vec<ExternalScores>,
    #[serde(default)]
    fusion: FusionConfig,
    synthetic: Option<SyntheticSpec>,
}

fn default_grid_n() -> usize {
    8
}

/// Command line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A validated run configuration with every path made absolute.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub grid_n: usize,
    pub gabor: GaborParams,
    pub clahe: ClaheParams,
    /// Enabled comparators, in fusion order.
    pub comparators: Vec<ComparatorId>,
    pub external: Vec<ExternalScores>,
    pub fusion: FusionConfig,
    pub synthetic: Option<SyntheticSpec>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        Self::from_toml(&text, base, overrides)
            .map_err(|e| match e {
                Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    /// Parses a config; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if raw.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                raw.version
            )));
        }
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

        let work_dir = match (&overrides.out, &raw.paths.work_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(w)) => resolve(w),
            (None, None) => base.join("work"),
        };
        let manifest = raw.paths.manifest.as_ref().map(resolve);
        let annotations = match (&raw.paths.annotations, &manifest) {
            (Some(a), _) => Some(resolve(a)),
            (None, Some(m)) => Some(sibling_annotations(m)),
            (None, None) => None,
        };
        let external: Vec<ExternalScores> = raw
            .external
            .iter()
            .map(|e| ExternalScores {
                comparator: e.comparator.clone(),
                path: resolve(&e.path),
            })
            .collect();

        let comparators: Vec<ComparatorId> = match (&raw.comparators, &raw.synthetic) {
            (Some(list), _) => list.iter().map(ComparatorId::new).collect(),
            (None, Some(s)) => s.comparators.clone(),
            (None, None) => ExtractorKind::ALL
                .iter()
                .map(|&k| ComparatorId::from(k))
                .chain(external.iter().map(|e| ComparatorId::new(&e.comparator)))
                .collect(),
        };

        let cfg = RunConfig {
            seed: overrides.seed.unwrap_or(raw.seed),
            manifest,
            annotations,
            work_dir,
            grid_n: raw.grid_n,
            gabor: raw.gabor,
            clahe: raw.clahe,
            comparators,
            external,
            fusion: raw.fusion,
            synthetic: raw.synthetic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.comparators.is_empty() {
            return Err(Error::config("no comparators enabled"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.comparators {
            if !valid_name(c.as_str()) {
                return Err(Error::config(format!(
                    "comparator name '{c}' may only use letters, digits, '_' and '-'"
                )));
            }
            if !seen.insert(c) {
                return Err(Error::config(format!("comparator '{c}' listed twice")));
            }
        }
        if !(self.fusion.prior > 0.0 && self.fusion.prior < 1.0) {
            return Err(Error::config(format!("fusion prior {} outside (0, 1)", self.fusion.prior)));
        }
        if self.fusion.folds == 1 {
            return Err(Error::config("fusion folds must be 0 (in-sample) or at least 2"));
        }

        if let Some(spec) = &self.synthetic {
            spec.validate()?;
            for c in &self.comparators {
                if !spec.comparators.contains(c) {
                    return Err(Error::config(format!(
                        "comparator '{c}' has no scores: not part of the synthetic spec"
                    )));
                }
            }
            return Ok(());
        }

        if self.grid_n < 4 || !self.grid_n.is_multiple_of(2) {
            return Err(Error::config(format!("grid_n must be even and >= 4, got {}", self.grid_n)));
        }
        self.gabor.validate()?;
        self.clahe.validate()?;
        for e in &self.external {
            if !valid_name(&e.comparator) {
                return Err(Error::config(format!("bad external comparator name '{}'", e.comparator)));
            }
            if ExtractorKind::ALL.iter().any(|k| k.as_str() == e.comparator) {
                return Err(Error::config(format!(
                    "external scores may not use the built-in name '{}'",
                    e.comparator
                )));
            }
            if !e.path.is_file() {
                return Err(Error::config(format!(
                    "external score file {} does not exist",
                    e.path.display()
                )));
            }
        }
        for c in &self.comparators {
            if c.builtin().is_none() && !self.external.iter().any(|e| e.comparator == c.as_str()) {
                return Err(Error::config(format!(
                    "comparator '{c}' has no scores: neither built in nor listed under [[external]]"
                )));
            }
        }
        let manifest = self
            .manifest
            .as_ref()
            .ok_or_else(|| Error::config("paths.manifest is required without a [synthetic] section"))?;
        for (what, p) in [("manifest", Some(manifest)), ("annotations", self.annotations.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::config(format!("{what} {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic.is_some()
    }

    /// Enabled built-in extractors, in config order.
    pub fn builtin_kinds(&self) -> Vec<ExtractorKind> {
        self.comparators.iter().filter_map(|c| c.builtin()).collect()
    }

    /// Enabled external comparators with their score files.
    pub fn enabled_external(&self) -> Vec<&ExternalScores> {
        self.external
            .iter()
            .filter(|e| self.comparators.iter().any(|c| c.as_str() == e.comparator))
            .collect()
    }
}
