use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use probefuse::fusion::LateFusionConfig;
use probefuse::probe::GridSpec;
use probefuse::splitter::BalanceTolerances;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One experiment, as a single JSON document. Relative paths resolve
/// against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    #[serde(default)]
    pub split: SplitParams,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub strict: bool,
    /// Worker threads; `None` uses every core.
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub calls: PathBuf,
    /// Pack directories by name. `{seed}` in a path is replaced per seed.
    #[serde(default)]
    pub packs: BTreeMap<String, String>,
    /// Probability score files by name, `{seed}` templated like packs.
    #[serde(default)]
    pub scores: BTreeMap<String, String>,
    /// ASR transcript files by source id.
    #[serde(default)]
    pub transcripts: BTreeMap<String, PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitParams {
    pub seed: u64,
    pub restarts: usize,
    pub tolerances: BalanceTolerances,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            seed: 1,
            restarts: 1000,
            tolerances: BalanceTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub stage1: GridSpec,
    pub stage2: GridSpec,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            stage1: GridSpec::linear(),
            stage2: GridSpec::full(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub early: Option<EarlyParams>,
    pub late: Option<LateParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyParams {
    /// Pack names from `paths.packs`.
    pub audio: String,
    pub text: String,
    #[serde(default)]
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateParams {
    pub sources: Vec<LateSource>,
    #[serde(flatten)]
    pub rule: LateFusionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// A probability file from `paths.scores`.
    Scores,
    /// Decision values written by `probe` for a pack.
    Probe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateSource {
    pub name: String,
    pub kind: SourceKind,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_true() -> bool {
    true
}

/// Command-line overrides of scalar fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strict: Option<bool>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    /// Hex SHA-256 of the effective config serialized as JSON.
    pub hash: String,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
        if let Some(seed) = overrides.seed {
            config.split.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.paths.output_dir = out.clone();
        }
        if let Some(strict) = overrides.strict {
            config.strict = strict;
        }
        if overrides.jobs.is_some() {
            config.jobs = overrides.jobs;
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let loaded = Loaded {
            hash: config_hash(&config),
            config,
            base_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.seeds.is_empty() {
            return Err(CliError::Validation("seeds must not be empty".into()));
        }
        if c.jobs == Some(0) {
            return Err(CliError::Validation("jobs must be at least 1".into()));
        }
        if let Some(early) = &c.fusion.early {
            for name in [&early.audio, &early.text] {
                if !c.paths.packs.contains_key(name) {
                    return Err(CliError::Validation(format!("early fusion names unknown pack {name}")));
                }
            }
        }
        if let Some(late) = &c.fusion.late {
            for s in &late.sources {
                let known = match s.kind {
                    SourceKind::Scores => c.paths.scores.contains_key(&s.name),
                    SourceKind::Probe => c.paths.packs.contains_key(&s.name),
                };
                if !known {
                    return Err(CliError::Validation(format!("late fusion names unknown source {}", s.name)));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: impl AsRef<Path>) -> PathBuf {
        let p = p.as_ref();
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Input path with `{seed}` substituted.
    pub fn templated(&self, template: &str, seed: u64) -> PathBuf {
        self.resolve(template.replace("{seed}", &seed.to_string()))
    }

    pub fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.resolve(&self.config.paths.output_dir).join(rel)
    }

    /// An input file given in the config; absence is a validation error.
    pub fn input(&self, path: PathBuf) -> Result<PathBuf, CliError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::Validation(format!("input not found: {}", path.display())))
        }
    }

    /// An artifact written by an earlier command.
    pub fn artifact(&self, rel: impl AsRef<Path>) -> Result<PathBuf, CliError> {
        let path = self.out(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact(path))
        }
    }
}

/// Hash of everything that can change results. The output directory and
/// thread count are left out, so reruns elsewhere or with other `--jobs`
/// produce identical artifacts.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.paths.output_dir = PathBuf::new();
    c.jobs = None;
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"paths": {"calls": "calls.jsonl", "output_dir": "out"}}"#;

    #[test]
    fn defaults_and_hash() {
        let c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(c.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.grids.stage1, GridSpec::linear());
        assert!(c.strict);
        let mut other = c.clone();
        other.split.restarts = 10;
        assert_ne!(config_hash(&c), config_hash(&other));
        other = c.clone();
        other.jobs = Some(8);
        other.paths.output_dir = "elsewhere".into();
        assert_eq!(config_hash(&c), config_hash(&other));
    }

    #[test]
    fn late_rule_is_flattened() {
        let text = r#"{"sources": [{"name": "t", "kind": "scores"}],
            "weight_rule": "fixed", "fixed_weights": [1.0],
            "score_normalization": "none", "threshold_rule": "fixed_0_5"}"#;
        let p: LateParams = serde_json::from_str(text).unwrap();
        assert_eq!(p.rule.fixed_weights, Some(vec![1.0]));
    }
}
