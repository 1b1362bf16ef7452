//! Hyperparameter grids and the two-stage layer probing protocol.
//!
//! Stage 1 trains linear SVMs on every layer of a feature pack and keeps the
//! layer with the best dev UAR. Stage 2 runs the full kernel grid on that
//! layer and on the final layer. Test scores are computed for the selected
//! configurations only and never influence selection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceSample;
use crate::error::{Error, Result};
use crate::features::{align, DatasetView, FeaturePack, SplitData};
use crate::metrics::{subgroup_eval, SplitReport};
use crate::splitter::PartitionAssignment;
use crate::svm::{self, Gamma, KernelKind, SvmConfig, SvmModel, DEFAULT_CACHE_BYTES};

/// Minority-class weight: a number or `"balanced"` (= negatives / positives
/// in the training partition).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "WeightRepr", into = "WeightRepr")]
pub enum ClassWeight {
    Balanced,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightRepr {
    Value(f64),
    Named(BalancedTag),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BalancedTag {
    Balanced,
}

impl From<WeightRepr> for ClassWeight {
    fn from(r: WeightRepr) -> Self {
        match r {
            WeightRepr::Value(v) => ClassWeight::Value(v),
            WeightRepr::Named(_) => ClassWeight::Balanced,
        }
    }
}

impl From<ClassWeight> for WeightRepr {
    fn from(w: ClassWeight) -> Self {
        match w {
            ClassWeight::Value(v) => WeightRepr::Value(v),
            ClassWeight::Balanced => WeightRepr::Named(BalancedTag::Balanced),
        }
    }
}

impl ClassWeight {
    pub fn resolve(self, labels: &[i8]) -> f64 {
        match self {
            ClassWeight::Value(v) => v,
            ClassWeight::Balanced => {
                let pos = labels.iter().filter(|&&y| y > 0).count();
                (labels.len() - pos) as f64 / pos.max(1) as f64
            }
        }
    }
}

/// Missing fields take their values from [`GridSpec::full`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub c: Vec<f64>,
    pub positive_class_weight: Vec<ClassWeight>,
    pub kernels: Vec<KernelKind>,
    pub gamma: Vec<Gamma>,
    pub degree: Vec<u32>,
    pub coef0: Vec<f64>,
    pub tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl GridSpec {
    /// Full search over all four kernels.
    pub fn full() -> Self {
        GridSpec {
            c: vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0],
            positive_class_weight: vec![
                ClassWeight::Value(1.0),
                ClassWeight::Value(2.0),
                ClassWeight::Value(5.0),
                ClassWeight::Value(10.0),
                ClassWeight::Balanced,
            ],
            kernels: KernelKind::ALL.to_vec(),
            gamma: vec![
                Gamma::Scale,
                Gamma::Value(1e-4),
                Gamma::Value(1e-3),
                Gamma::Value(1e-2),
                Gamma::Value(0.1),
                Gamma::Value(1.0),
            ],
            degree: vec![2, 3],
            coef0: vec![0.0],
            tolerance: 1e-3,
        }
    }

    /// The full grid restricted to the linear kernel.
    pub fn linear() -> Self {
        GridSpec {
            kernels: vec![KernelKind::Linear],
            ..Self::full()
        }
    }

    pub fn is_linear_only(&self) -> bool {
        self.kernels.iter().all(|&k| k == KernelKind::Linear)
    }

    /// Cartesian expansion in tie-break order: kernel (list order), C
    /// ascending, class weight, gamma, degree, coef0. Parameters a kernel
    /// does not use are not expanded.
    pub fn expand(&self) -> Result<Vec<GridPoint>> {
        let mut cs = self.c.clone();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            let gammas: Vec<Gamma> = if kernel.uses_gamma() {
                self.gamma.clone()
            } else {
                vec![Gamma::Scale]
            };
            let degrees: Vec<u32> = if kernel.uses_degree() {
                self.degree.clone()
            } else {
                vec![SvmConfig::default().degree]
            };
            let coefs: Vec<f64> = if kernel.uses_coef0() {
                self.coef0.clone()
            } else {
                vec![0.0]
            };
            for &c in &cs {
                for &weight in &self.positive_class_weight {
                    for &gamma in &gammas {
                        for &degree in &degrees {
                            for &coef0 in &coefs {
                                out.push(GridPoint {
                                    config: SvmConfig {
                                        c,
                                        kernel,
                                        gamma,
                                        degree,
                                        coef0,
                                        tolerance: self.tolerance,
                                        ..SvmConfig::default()
                                    },
                                    weight,
                                });
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(out)
    }
}

/// One expanded grid configuration; the class weight is resolved against
/// the training labels at search time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: SvmConfig,
    pub weight: ClassWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub index: usize,
    pub kernel: KernelKind,
    pub c: f64,
    pub class_weight: ClassWeight,
    pub gamma: Option<Gamma>,
    pub degree: Option<u32>,
    pub coef0: Option<f64>,
    pub dev_uar: f64,
    pub converged: bool,
    pub support_vectors: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_index: usize,
    pub best_config: SvmConfig,
    pub best_model: SvmModel,
    pub dev_uar: f64,
    pub leaderboard: Vec<LeaderboardEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub cache_bytes: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            cache_bytes: DEFAULT_CACHE_BYTES,
        }
    }
}

/// Predictions and gender breakdown of a trained model on one partition.
pub fn evaluate(model: &SvmModel, split: &SplitData) -> Result<SplitReport> {
    let predictions: Vec<bool> = svm::predict(model, split.features.view())?
        .into_iter()
        .map(|p| p > 0)
        .collect();
    let groups: Vec<Option<&str>> = split.genders.iter().map(|g| Some(g.as_str())).collect();
    subgroup_eval(&predictions, &split.positives(), &groups)
}

/// Trains every grid configuration on train, scores dev UAR and returns the
/// best (earliest in expansion order on ties). Runs on the ambient rayon
/// pool; the result does not depend on the pool size.
pub fn grid_search(view: &DatasetView, grid: &GridSpec, opts: &SearchOptions) -> Result<SearchOutcome> {
    if view.train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if view.dev.is_empty() {
        return Err(Error::EmptyPartition("dev"));
    }
    let points = grid.expand()?;
    let train_y = &view.train.labels;
    if !(train_y.contains(&1) && train_y.contains(&-1)) {
        return Err(Error::SingleClass);
    }
    let resolve = |p: &GridPoint| SvmConfig {
        positive_class_weight: p.weight.resolve(train_y),
        ..p.config
    };
    let fit = |cfg: &SvmConfig| svm::fit(view.train.features.view(), train_y, cfg, opts.cache_bytes);

    let leaderboard: Vec<LeaderboardEntry> = points
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let model = fit(&resolve(p))?;
            let dev = evaluate(&model, &view.dev)?;
            let k = p.config.kernel;
            Ok(LeaderboardEntry {
                index,
                kernel: k,
                c: p.config.c,
                class_weight: p.weight,
                gamma: k.uses_gamma().then_some(p.config.gamma),
                degree: k.uses_degree().then_some(p.config.degree),
                coef0: k.uses_coef0().then_some(p.config.coef0),
                dev_uar: dev.uar(),
                converged: model.summary.converged,
                support_vectors: model.support_indices.len(),
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for e in &leaderboard[1..] {
        if e.dev_uar > leaderboard[best].dev_uar {
            best = e.index;
        }
    }
    let best_config = resolve(&points[best]);
    let best_model = fit(&best_config)?;
    Ok(SearchOutcome {
        best_index: best,
        best_config,
        best_model,
        dev_uar: leaderboard[best].dev_uar,
        leaderboard,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: u32,
    pub best_index: usize,
    pub best_config: SvmConfig,
    pub best_class_weight: ClassWeight,
    pub dev_uar: f64,
    pub test_uar: f64,
    pub dev: SplitReport,
    pub test: SplitReport,
    pub leaderboard: Vec<LeaderboardEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub model_id: String,
    /// Stage-1 linear probes, ordered by layer id.
    pub stage1: Vec<LayerResult>,
    pub selected_layer: u32,
    pub final_layer: u32,
    /// Stage-2 searches on the selected and final layers (one entry when
    /// they coincide), ordered by layer id.
    pub stage2: Vec<LayerResult>,
}

impl ProbeResult {
    /// Stage-2 entry with the best dev UAR (lower layer on ties).
    pub fn best_stage2(&self) -> &LayerResult {
        let mut best = &self.stage2[0];
        for r in &self.stage2[1..] {
            if r.dev_uar > best.dev_uar {
                best = r;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub stage1: GridSpec,
    pub stage2: GridSpec,
    pub strict: bool,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            stage1: GridSpec::linear(),
            stage2: GridSpec::full(),
            strict: true,
        }
    }
}

/// A grid search on one layer, with the winning model scored on test.
pub fn search_layer(
    view: &DatasetView,
    layer: u32,
    grid: &GridSpec,
    opts: &SearchOptions,
) -> Result<(LayerResult, SvmModel)> {
    let out = grid_search(view, grid, opts)?;
    let dev = evaluate(&out.best_model, &view.dev)?;
    let test = evaluate(&out.best_model, &view.test)?;
    let weight = grid.expand()?[out.best_index].weight;
    Ok((
        LayerResult {
            layer,
            best_index: out.best_index,
            best_config: out.best_config,
            best_class_weight: weight,
            dev_uar: dev.uar(),
            test_uar: test.uar(),
            dev,
            test,
            leaderboard: out.leaderboard,
        },
        out.best_model,
    ))
}

/// Runs both probing stages on a pack. Returns the result together with the
/// stage-2 models keyed by layer.
pub fn probe_layers(
    pack: &FeaturePack,
    samples: &[SentenceSample],
    partition: &PartitionAssignment,
    spec: &ProbeSpec,
    opts: &SearchOptions,
) -> Result<(ProbeResult, BTreeMap<u32, SvmModel>)> {
    if !spec.stage1.is_linear_only() {
        return Err(Error::InvalidConfig("stage-1 grid must be linear only".into()));
    }
    let mut layers = pack.layer_ids();
    layers.sort_unstable();
    let view_of = |layer| align(pack, layer, samples, partition, spec.strict);

    let stage1: Vec<LayerResult> = layers
        .par_iter()
        .map(|&layer| Ok(search_layer(&view_of(layer)?, layer, &spec.stage1, opts)?.0))
        .collect::<Result<_>>()?;

    let mut selected = &stage1[0];
    for r in &stage1[1..] {
        if r.dev_uar > selected.dev_uar {
            selected = r;
        }
    }
    let selected_layer = selected.layer;
    let final_layer = pack.final_layer();
    let mut stage2_layers = vec![selected_layer, final_layer];
    stage2_layers.sort_unstable();
    stage2_layers.dedup();

    let stage2: Vec<(LayerResult, SvmModel)> = stage2_layers
        .par_iter()
        .map(|&layer| search_layer(&view_of(layer)?, layer, &spec.stage2, opts))
        .collect::<Result<_>>()?;
    let models = stage2.iter().map(|(r, m)| (r.layer, m.clone())).collect();
    Ok((
        ProbeResult {
            model_id: pack.model_id().to_string(),
            stage1,
            selected_layer,
            final_layer,
            stage2: stage2.into_iter().map(|(r, _)| r).collect(),
        },
        models,
    ))
}
