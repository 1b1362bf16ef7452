//! Unweighted average recall, word error rate and seed aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[bool], labels: &[bool]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::LengthMismatch(predictions.len(), labels.len()));
        }
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    pub fn recall_positive(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    pub fn recall_negative(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.tn as f64 / self.negatives() as f64)
    }

    /// Mean of the two class recalls; `None` when a class is absent.
    pub fn uar(&self) -> Option<f64> {
        Some(0.5 * (self.recall_positive()? + self.recall_negative()?))
    }
}

/// Confusion counts and recalls. Recalls are `None` for groups lacking a
/// class (only possible inside subgroup breakdowns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub confusion: Confusion,
    pub uar: Option<f64>,
    pub recall_positive: Option<f64>,
    pub recall_negative: Option<f64>,
}

impl ClassEval {
    pub fn from_confusion(confusion: Confusion) -> Self {
        ClassEval {
            confusion,
            uar: confusion.uar(),
            recall_positive: confusion.recall_positive(),
            recall_negative: confusion.recall_negative(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    #[serde(flatten)]
    pub overall: ClassEval,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subgroups: BTreeMap<String, ClassEval>,
}

impl SplitReport {
    /// Overall UAR; always defined for reports built by [`uar`] or
    /// [`subgroup_eval`].
    pub fn uar(&self) -> f64 {
        self.overall.uar.expect("split reports require both classes")
    }
}

/// Evaluation of one prediction vector.
pub fn uar(predictions: &[bool], labels: &[bool]) -> Result<SplitReport> {
    let confusion = Confusion::from_predictions(predictions, labels)?;
    if confusion.positives() == 0 || confusion.negatives() == 0 {
        return Err(Error::SingleClassLabels);
    }
    Ok(SplitReport {
        overall: ClassEval::from_confusion(confusion),
        subgroups: BTreeMap::new(),
    })
}

/// [`uar`] plus a per-group breakdown. Groups holding a single class keep
/// their counts but report undefined recalls.
pub fn subgroup_eval<G: AsRef<str>>(
    predictions: &[bool],
    labels: &[bool],
    group_of_sample: &[Option<G>],
) -> Result<SplitReport> {
    if group_of_sample.len() != labels.len() {
        return Err(Error::LengthMismatch(group_of_sample.len(), labels.len()));
    }
    let mut report = uar(predictions, labels)?;
    let mut groups: BTreeMap<String, Confusion> = BTreeMap::new();
    for (i, g) in group_of_sample.iter().enumerate() {
        let g = g.as_ref().ok_or(Error::UnmappedSample(i))?;
        let c = groups.entry(g.as_ref().to_string()).or_default();
        let single = Confusion::from_predictions(&predictions[i..=i], &labels[i..=i])?;
        c.tp += single.tp;
        c.fp += single.fp;
        c.tn += single.tn;
        c.fn_ += single.fn_;
    }
    report.subgroups = groups
        .into_iter()
        .map(|(g, c)| (g, ClassEval::from_confusion(c)))
        .collect();
    Ok(report)
}

/// Reports for several named splits (e.g. `dev`, `test`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub splits: BTreeMap<String, SplitReport>,
}

impl EvalReport {
    pub fn get(&self, split: &str) -> Option<&SplitReport> {
        self.splits.get(split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 divisor); 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEval {
    pub uar: Option<MeanStd>,
    pub recall_positive: Option<MeanStd>,
    pub recall_negative: Option<MeanStd>,
}

impl AggregateEval {
    fn of(evals: &[&ClassEval]) -> Self {
        let collect = |f: fn(&ClassEval) -> Option<f64>| {
            MeanStd::of(&evals.iter().filter_map(|e| f(e)).collect::<Vec<_>>())
        };
        AggregateEval {
            uar: collect(|e| e.uar),
            recall_positive: collect(|e| e.recall_positive),
            recall_negative: collect(|e| e.recall_negative),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSplit {
    #[serde(flatten)]
    pub overall: AggregateEval,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subgroups: BTreeMap<String, AggregateEval>,
}

/// Mean and standard deviation over per-seed reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seeds: usize,
    pub per_seed: Vec<EvalReport>,
    pub splits: BTreeMap<String, AggregateSplit>,
}

impl SeedAggregate {
    pub fn uar(&self, split: &str) -> Option<MeanStd> {
        self.splits.get(split).and_then(|s| s.overall.uar)
    }
}

/// Aggregates reports with identical split and subgroup structure.
/// Undefined subgroup recalls are left out of their statistics.
pub fn aggregate_seeds(reports: &[EvalReport]) -> Result<SeedAggregate> {
    let first = reports.first().ok_or(Error::NoReports)?;
    for r in &reports[1..] {
        if r.splits.keys().ne(first.splits.keys()) {
            return Err(Error::HeterogeneousReports("split names differ".into()));
        }
        for (name, s) in &r.splits {
            if s.subgroups.keys().ne(first.splits[name].subgroups.keys()) {
                return Err(Error::HeterogeneousReports(format!(
                    "subgroups differ in split {name}"
                )));
            }
        }
    }
    let splits = first
        .splits
        .iter()
        .map(|(name, s)| {
            let overall: Vec<&ClassEval> = reports.iter().map(|r| &r.splits[name].overall).collect();
            let subgroups = s
                .subgroups
                .keys()
                .map(|g| {
                    let evals: Vec<&ClassEval> =
                        reports.iter().map(|r| &r.splits[name].subgroups[g]).collect();
                    (g.clone(), AggregateEval::of(&evals))
                })
                .collect();
            (
                name.clone(),
                AggregateSplit {
                    overall: AggregateEval::of(&overall),
                    subgroups,
                },
            )
        })
        .collect();
    Ok(SeedAggregate {
        seeds: reports.len(),
        per_seed: reports.to_vec(),
        splits,
    })
}

/// Text normalization applied before word alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lowercase: bool,
    /// Drop everything except letters, digits, apostrophes and whitespace.
    pub strip_symbols: bool,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            lowercase: true,
            strip_symbols: true,
        }
    }
}

impl Normalizer {
    pub const IDENTITY: Normalizer = Normalizer {
        lowercase: false,
        strip_symbols: false,
    };

    pub fn words(&self, text: &str) -> Vec<String> {
        let lowered;
        let text = if self.lowercase {
            lowered = text.to_lowercase();
            &lowered
        } else {
            text
        };
        let kept: String = if self.strip_symbols {
            text.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'' || c.is_whitespace())
                .collect()
        } else {
            text.to_string()
        };
        kept.split_whitespace().map(str::to_string).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
}

impl WerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn wer(&self) -> f64 {
        self.errors() as f64 / self.reference_words as f64
    }
}

impl std::ops::AddAssign for WerCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
        self.reference_words += o.reference_words;
    }
}

/// Word-level edit counts between reference and hypothesis.
///
/// Minimises total edits with unit costs; among minimal alignments the one
/// with the fewest insertions plus deletions is taken, which fixes the
/// split into S, D and I independently of argument order.
pub fn wer(reference: &str, hypothesis: &str, normalizer: &Normalizer) -> Result<WerCounts> {
    let r = normalizer.words(reference);
    let h = normalizer.words(hypothesis);
    if r.is_empty() {
        return Err(Error::EmptyReference);
    }
    // (edits, indels) compared lexicographically
    let mut prev: Vec<(usize, usize)> = (0..=h.len()).map(|j| (j, j)).collect();
    let mut cur = vec![(0, 0); h.len() + 1];
    for i in 1..=r.len() {
        cur[0] = (i, i);
        for j in 1..=h.len() {
            let diag = if r[i - 1] == h[j - 1] {
                prev[j - 1]
            } else {
                (prev[j - 1].0 + 1, prev[j - 1].1)
            };
            let del = (prev[j].0 + 1, prev[j].1 + 1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1 + 1);
            cur[j] = diag.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (edits, indels) = prev[h.len()];
    // deletions - insertions = |ref| - |hyp|
    let deletions = ((indels + r.len()) as i64 - h.len() as i64) / 2;
    let deletions = deletions as usize;
    let insertions = indels - deletions;
    Ok(WerCounts {
        substitutions: edits - indels,
        deletions,
        insertions,
        reference_words: r.len(),
    })
}

/// Corpus WER for one transcript source, pooled by counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub source_id: String,
    #[serde(flatten)]
    pub counts: WerCounts,
    pub wer: f64,
    pub samples: usize,
    /// Samples whose normalized reference was empty.
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_sample: Vec<(String, WerCounts)>,
}

/// Pools `(sample_id, reference, hypothesis)` triples into one report.
pub fn corpus_wer<'a>(
    source_id: &str,
    pairs: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    normalizer: &Normalizer,
    keep_per_sample: bool,
) -> Result<WerReport> {
    let mut total = WerCounts::default();
    let mut per_sample = Vec::new();
    let (mut samples, mut skipped) = (0, 0);
    for (id, reference, hypothesis) in pairs {
        match wer(reference, hypothesis, normalizer) {
            Ok(c) => {
                total += c;
                samples += 1;
                if keep_per_sample {
                    per_sample.push((id.to_string(), c));
                }
            }
            Err(Error::EmptyReference) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if total.reference_words == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(WerReport {
        source_id: source_id.to_string(),
        counts: total,
        wer: total.wer(),
        samples,
        skipped,
        per_sample,
    })
}
