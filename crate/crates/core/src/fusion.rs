//! Early and late fusion of the audio and text modalities.
//!
//! Late fusion combines per-source scores as a convex combination whose
//! weights are proportional to each source's dev UAR (or fixed). Sources are
//! min-max normalized on dev, so raw SVM decision values and probabilities
//! can be mixed. Early fusion concatenates final-layer embeddings of both
//! modalities and runs an SVM grid search on the joint representation.

use std::collections::BTreeMap;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, SentenceSample};
use crate::error::{Error, Result};
use crate::features::{align, concat, DatasetView, FeaturePack, SplitData};
use crate::metrics::{subgroup_eval, EvalReport, SplitReport};
use crate::probe::{evaluate, grid_search, GridSpec, LeaderboardEntry, SearchOptions};
use crate::splitter::{Partition, PartitionAssignment};
use crate::svm::{standardize_apply, standardize_fit, SvmConfig, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    DevUarProportional,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNormalization {
    None,
    MinmaxOnDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[serde(rename = "fixed_0_5")]
    Fixed05,
    /// Best dev UAR over 0.05, 0.10, ..., 0.95 (lowest on ties).
    DevUarArgmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LateFusionConfig {
    pub weight_rule: WeightRule,
    pub fixed_weights: Option<Vec<f64>>,
    pub score_normalization: ScoreNormalization,
    pub threshold_rule: ThresholdRule,
}

impl Default for LateFusionConfig {
    fn default() -> Self {
        LateFusionConfig {
            weight_rule: WeightRule::DevUarProportional,
            fixed_weights: None,
            score_normalization: ScoreNormalization::MinmaxOnDev,
            threshold_rule: ThresholdRule::DevUarArgmax,
        }
    }
}

/// Candidate thresholds for [`ThresholdRule::DevUarArgmax`].
pub fn threshold_candidates() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Named per-sample scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSource {
    pub name: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetSplit {
    pub sample_ids: Vec<String>,
    pub labels: Vec<bool>,
    pub genders: Vec<Gender>,
}

impl TargetSplit {
    fn from_split(split: &SplitData) -> Self {
        TargetSplit {
            sample_ids: split.sample_ids.clone(),
            labels: split.positives(),
            genders: split.genders.clone(),
        }
    }

    fn evaluate(&self, predictions: &[bool]) -> Result<SplitReport> {
        let groups: Vec<Option<&str>> = self.genders.iter().map(|g| Some(g.as_str())).collect();
        subgroup_eval(predictions, &self.labels, &groups)
    }
}

/// Dev and test samples a fusion is evaluated on, in corpus order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionTargets {
    pub dev: TargetSplit,
    pub test: TargetSplit,
}

impl FusionTargets {
    pub fn new(samples: &[SentenceSample], partition: &PartitionAssignment) -> Result<Self> {
        let mut t = FusionTargets::default();
        for s in samples {
            let split = match partition
                .partition_of(&s.speaker_id)
                .ok_or_else(|| Error::UnknownSpeaker(s.speaker_id.clone()))?
            {
                Partition::Train => continue,
                Partition::Dev => &mut t.dev,
                Partition::Test => &mut t.test,
            };
            split.sample_ids.push(s.sample_id.clone());
            split.labels.push(s.label.is_positive());
            split.genders.push(s.speaker_gender);
        }
        Ok(t)
    }

    pub fn from_view(view: &DatasetView) -> Self {
        FusionTargets {
            dev: TargetSplit::from_split(&view.dev),
            test: TargetSplit::from_split(&view.test),
        }
    }
}

/// Per-source scores after normalization, `[source][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedScores {
    pub dev: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

fn lookup(source: &ScoreSource, ids: &[String]) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| {
            source.scores.get(id).copied().ok_or_else(|| {
                Error::CoverageMismatch(format!("source {} has no score for {id}", source.name))
            })
        })
        .collect()
}

/// Looks up every target in every source and applies the normalization.
/// Min-max bounds come from dev; test values are clamped to `[0, 1]`.
pub fn normalize(
    sources: &[ScoreSource],
    targets: &FusionTargets,
    mode: ScoreNormalization,
) -> Result<NormalizedScores> {
    let mut out = NormalizedScores {
        dev: Vec::new(),
        test: Vec::new(),
    };
    for src in sources {
        let mut dev = lookup(src, &targets.dev.sample_ids)?;
        let mut test = lookup(src, &targets.test.sample_ids)?;
        if mode == ScoreNormalization::MinmaxOnDev {
            let lo = dev.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = dev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let map = |v: f64| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            };
            dev.iter_mut().for_each(|v| *v = map(*v));
            test.iter_mut().for_each(|v| *v = map(*v));
        }
        out.dev.push(dev);
        out.test.push(test);
    }
    Ok(out)
}

/// Nonnegative weights normalized to sum 1.
pub fn fusion_weights(cfg: &LateFusionConfig, dev_uars: &[f64], sources: usize) -> Result<Vec<f64>> {
    let raw: Vec<f64> = match cfg.weight_rule {
        WeightRule::DevUarProportional => {
            if dev_uars.len() != sources {
                return Err(Error::InvalidConfig(format!(
                    "{} dev UARs for {sources} sources",
                    dev_uars.len()
                )));
            }
            dev_uars.to_vec()
        }
        WeightRule::Fixed => {
            let w = cfg
                .fixed_weights
                .clone()
                .ok_or_else(|| Error::InvalidConfig("fixed weight rule without weights".into()))?;
            if w.len() != sources {
                return Err(Error::InvalidConfig(format!("{} weights for {sources} sources", w.len())));
            }
            w
        }
    };
    if raw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidConfig(format!("weights must be nonnegative: {raw:?}")));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Weighted sum per sample.
pub fn fuse(weights: &[f64], per_source: &[Vec<f64>]) -> Vec<f64> {
    let n = per_source.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| weights.iter().zip(per_source).map(|(w, s)| w * s[i]).sum())
        .collect()
}

fn threshold_predictions(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > threshold).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateFusionOutcome {
    pub sources: Vec<String>,
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub report: EvalReport,
    #[serde(skip)]
    pub dev_scores: Vec<f64>,
    #[serde(skip)]
    pub test_scores: Vec<f64>,
}

impl LateFusionOutcome {
    pub fn dev_uar(&self) -> f64 {
        self.report.splits["dev"].uar()
    }
    pub fn test_uar(&self) -> f64 {
        self.report.splits["test"].uar()
    }
}

/// Fuses score sources and evaluates on dev and test.
pub fn late_fuse(
    sources: &[ScoreSource],
    dev_uars: &[f64],
    cfg: &LateFusionConfig,
    targets: &FusionTargets,
) -> Result<LateFusionOutcome> {
    if sources.is_empty() {
        return Err(Error::InvalidConfig("late fusion needs at least one source".into()));
    }
    let weights = fusion_weights(cfg, dev_uars, sources.len())?;
    let normalized = normalize(sources, targets, cfg.score_normalization)?;
    let dev_scores = fuse(&weights, &normalized.dev);
    let test_scores = fuse(&weights, &normalized.test);

    let threshold = match cfg.threshold_rule {
        ThresholdRule::Fixed05 => 0.5,
        ThresholdRule::DevUarArgmax => {
            let mut best = (f64::NEG_INFINITY, 0.5);
            for t in threshold_candidates() {
                let uar = targets
                    .dev
                    .evaluate(&threshold_predictions(&dev_scores, t))?
                    .uar();
                if uar > best.0 {
                    best = (uar, t);
                }
            }
            best.1
        }
    };
    let dev = targets
        .dev
        .evaluate(&threshold_predictions(&dev_scores, threshold))?;
    let test = targets
        .test
        .evaluate(&threshold_predictions(&test_scores, threshold))?;
    Ok(LateFusionOutcome {
        sources: sources.iter().map(|s| s.name.clone()).collect(),
        weights,
        threshold,
        report: EvalReport {
            splits: [("dev".to_string(), dev), ("test".to_string(), test)].into(),
        },
        dev_scores,
        test_scores,
    })
}

/// Evaluates a single source under the same normalization and threshold
/// rules; its dev UAR feeds the proportional weights.
pub fn evaluate_source(
    source: &ScoreSource,
    cfg: &LateFusionConfig,
    targets: &FusionTargets,
) -> Result<LateFusionOutcome> {
    let single = LateFusionConfig {
        weight_rule: WeightRule::DevUarProportional,
        fixed_weights: None,
        ..cfg.clone()
    };
    late_fuse(std::slice::from_ref(source), &[1.0], &single, targets)
}

#[derive(Debug, Clone)]
pub struct EarlyFusionOutcome {
    pub model: SvmModel,
    pub config: SvmConfig,
    pub dim: usize,
    pub block_dims: Vec<usize>,
    pub report: EvalReport,
    pub leaderboard: Vec<LeaderboardEntry>,
}

impl EarlyFusionOutcome {
    pub fn dev_uar(&self) -> f64 {
        self.report.splits["dev"].uar()
    }
    pub fn test_uar(&self) -> f64 {
        self.report.splits["test"].uar()
    }
}

/// Standardizes each column block on train and applies it to every split.
pub fn standardize_blocks(view: &mut DatasetView, block_dims: &[usize]) -> Result<()> {
    let mut offset = 0;
    for &d in block_dims {
        let cols = s![.., offset..offset + d];
        let params = standardize_fit(view.train.features.slice(cols))?;
        for split in [&mut view.train, &mut view.dev, &mut view.test] {
            let z: Array2<f64> = standardize_apply(&params, split.features.slice(cols))?;
            split.features.slice_mut(cols).assign(&z);
        }
        offset += d;
    }
    Ok(())
}

/// Early fusion of the final layers of an audio and a text pack.
pub fn early_fuse(
    audio: &FeaturePack,
    text: &FeaturePack,
    samples: &[SentenceSample],
    partition: &PartitionAssignment,
    grid: &GridSpec,
    opts: &SearchOptions,
    strict: bool,
) -> Result<EarlyFusionOutcome> {
    let audio_layer = audio.final_layer();
    let fused = concat(&[(audio, audio_layer), (text, text.final_layer())])?;
    let mut view = align(&fused, audio_layer, samples, partition, strict)?;
    let block_dims = vec![audio.dim(), text.dim()];
    standardize_blocks(&mut view, &block_dims)?;

    let search = grid_search(&view, grid, opts)?;
    let dev = evaluate(&search.best_model, &view.dev)?;
    let test = evaluate(&search.best_model, &view.test)?;
    Ok(EarlyFusionOutcome {
        config: search.best_config,
        dim: fused.dim(),
        block_dims,
        report: EvalReport {
            splits: [("dev".to_string(), dev), ("test".to_string(), test)].into(),
        },
        leaderboard: search.leaderboard,
        model: search.best_model,
    })
}
