//! Sentence-level corpus assembly from annotated calls.
//!
//! A call carries its transcript, externally detected sentence spans, word
//! alignments from a forced aligner and subsentential flattery annotations.
//! Every sentence becomes one [`SentenceSample`]: it is labelled flattery when
//! any annotated span overlaps it by at least one byte, and its audio clip
//! runs from the first to the last aligned word touching it.
//!
//! All character offsets are UTF-8 byte offsets into the transcript and must
//! fall on character boundaries.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::splitter::{Partition, PartitionAssignment};

/// Half-open byte range `[start, end)`.
pub type Span = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "flattery")]
    Flattery,
    #[serde(rename = "none")]
    Neutral,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Flattery
    }

    /// `+1` for flattery, `-1` otherwise.
    pub fn sign(self) -> i8 {
        if self.is_positive() {
            1
        } else {
            -1
        }
    }
}

/// One aligned word: byte range in the transcript plus its time interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordAlignment(pub usize, pub usize, pub f64, pub f64);

impl WordAlignment {
    pub fn span(&self) -> Span {
        (self.0, self.1)
    }
    pub fn start_s(&self) -> f64 {
        self.2
    }
    pub fn end_s(&self) -> f64 {
        self.3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: String,
    pub speaker_id: String,
    pub speaker_gender: Gender,
    pub transcript: String,
    pub sentence_spans: Vec<Span>,
    pub word_alignments: Vec<WordAlignment>,
    #[serde(default)]
    pub flattery_spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSample {
    pub sample_id: String,
    pub call_id: String,
    pub speaker_id: String,
    pub speaker_gender: Gender,
    pub text: String,
    pub clip_start_s: f64,
    pub clip_end_s: f64,
    pub duration_s: f64,
    pub label: Label,
}

/// A sentence with its projected label, before clip boundaries are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub index: usize,
    pub span: Span,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Unaligned,
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub call_id: String,
    pub sentence_span: Span,
    pub reason: ExclusionReason,
}

pub fn sample_id(call_id: &str, sentence_index: usize) -> String {
    format!("{call_id}#{sentence_index}")
}

fn overlaps(a: Span, b: Span) -> bool {
    a.0.max(b.0) < a.1.min(b.1)
}

impl CallRecord {
    /// Checks span ordering, bounds and alignment sanity.
    pub fn validate(&self) -> Result<()> {
        let len = self.transcript.len();
        let span_err = |kind: &'static str, span: Span, reason: String| Error::InvalidSpan {
            call_id: self.call_id.clone(),
            kind,
            start: span.0,
            end: span.1,
            reason,
        };
        let check_bounds = |kind: &'static str, span: Span| -> Result<()> {
            if span.0 > span.1 {
                return Err(span_err(kind, span, "start after end".into()));
            }
            if span.1 > len {
                return Err(span_err(kind, span, format!("exceeds transcript length {len}")));
            }
            if !self.transcript.is_char_boundary(span.0) || !self.transcript.is_char_boundary(span.1)
            {
                return Err(span_err(kind, span, "not on a UTF-8 character boundary".into()));
            }
            Ok(())
        };

        let mut prev_end = 0;
        for &span in &self.sentence_spans {
            check_bounds("sentence", span)?;
            if span.0 < prev_end {
                return Err(span_err(
                    "sentence",
                    span,
                    format!("overlaps or precedes previous sentence ending at {prev_end}"),
                ));
            }
            prev_end = span.1;
        }
        for &span in &self.flattery_spans {
            check_bounds("flattery", span)?;
        }

        let mut prev_end = 0;
        for (index, w) in self.word_alignments.iter().enumerate() {
            let align_err = |reason: String| Error::InvalidAlignment {
                call_id: self.call_id.clone(),
                index,
                reason,
            };
            if w.0 > w.1 || w.1 > len {
                return Err(align_err(format!("byte range [{}, {}) out of bounds", w.0, w.1)));
            }
            if w.0 < prev_end {
                return Err(align_err("overlaps previous word".into()));
            }
            if !w.2.is_finite() || !w.3.is_finite() || w.3 < w.2 {
                return Err(align_err(format!("bad time interval [{}, {}]", w.2, w.3)));
            }
            prev_end = w.1;
        }
        Ok(())
    }
}

/// Projects span-level flattery annotations onto the call's sentences.
///
/// A sentence is positive iff some flattery span shares at least one byte
/// with it.
pub fn project_labels(call: &CallRecord) -> Result<Vec<LabeledSentence>> {
    call.validate()?;
    Ok(call
        .sentence_spans
        .iter()
        .enumerate()
        .map(|(index, &span)| {
            let positive = call.flattery_spans.iter().any(|&f| overlaps(span, f));
            LabeledSentence {
                index,
                span,
                text: call.transcript[span.0..span.1].to_string(),
                label: if positive {
                    Label::Flattery
                } else {
                    Label::Neutral
                },
            }
        })
        .collect())
}

/// Clip interval of a sentence: earliest start and latest end among the
/// words overlapping it. No padding is added.
pub fn clip_bounds(call: &CallRecord, sentence_span: Span) -> Result<(f64, f64)> {
    let mut bounds: Option<(f64, f64)> = None;
    for w in &call.word_alignments {
        if overlaps(w.span(), sentence_span) {
            bounds = Some(match bounds {
                None => (w.start_s(), w.end_s()),
                Some((lo, hi)) => (lo.min(w.start_s()), hi.max(w.end_s())),
            });
        }
    }
    bounds.ok_or_else(|| Error::UnalignedSentence {
        call_id: call.call_id.clone(),
        start: sentence_span.0,
        end: sentence_span.1,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallOutcome {
    pub samples: Vec<SentenceSample>,
    pub exclusions: Vec<Exclusion>,
}

/// Turns one call into samples, dropping blank and unaligned sentences.
pub fn assemble_call(call: &CallRecord) -> Result<CallOutcome> {
    let mut out = CallOutcome::default();
    for sentence in project_labels(call)? {
        let exclude = |reason| Exclusion {
            call_id: call.call_id.clone(),
            sentence_span: sentence.span,
            reason,
        };
        if sentence.text.trim().is_empty() {
            out.exclusions.push(exclude(ExclusionReason::EmptyText));
            continue;
        }
        match clip_bounds(call, sentence.span) {
            Ok((start, end)) => out.samples.push(SentenceSample {
                sample_id: sample_id(&call.call_id, sentence.index),
                call_id: call.call_id.clone(),
                speaker_id: call.speaker_id.clone(),
                speaker_gender: call.speaker_gender,
                text: sentence.text,
                clip_start_s: start,
                clip_end_s: end,
                duration_s: end - start,
                label: sentence.label,
            }),
            Err(Error::UnalignedSentence { .. }) => {
                log::info!(
                    "dropping unaligned sentence {} of call {}",
                    sentence.index,
                    call.call_id
                );
                out.exclusions.push(exclude(ExclusionReason::Unaligned));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Assembles all calls (in parallel) preserving input order.
pub fn assemble(calls: &[CallRecord]) -> Result<CallOutcome> {
    let per_call: Vec<CallOutcome> = calls
        .par_iter()
        .map(assemble_call)
        .collect::<Result<_>>()?;
    let mut out = CallOutcome::default();
    let mut seen = HashSet::new();
    for o in per_call {
        for s in &o.samples {
            if !seen.insert(s.sample_id.clone()) {
                return Err(Error::DuplicateSampleId(s.sample_id.clone()));
            }
        }
        out.samples.extend(o.samples);
        out.exclusions.extend(o.exclusions);
    }
    Ok(out)
}

pub fn read_calls(path: &Path) -> Result<Vec<CallRecord>> {
    jsonl::read(path)
}

pub fn read_manifest(path: &Path) -> Result<Vec<SentenceSample>> {
    jsonl::read(path)
}

pub fn write_manifest(path: &Path, samples: &[SentenceSample]) -> Result<()> {
    jsonl::write(path, samples)
}

pub fn write_exclusions(path: &Path, exclusions: &[Exclusion]) -> Result<()> {
    jsonl::write(path, exclusions)
}

/// Speaker, sample, label and duration statistics for one group of samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub speaker_count: usize,
    pub male_speakers: usize,
    pub female_speakers: usize,
    pub unknown_speakers: usize,
    pub sample_count: usize,
    pub positive_count: usize,
    pub positive_fraction: Option<f64>,
    pub mean_duration_s: Option<f64>,
    /// Population standard deviation.
    pub std_duration_s: Option<f64>,
    pub total_duration_s: f64,
}

impl GroupStats {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a SentenceSample>) -> Self {
        let mut speakers: BTreeMap<&str, Gender> = BTreeMap::new();
        let mut durations = Vec::new();
        let mut positives = 0;
        for s in samples {
            speakers.insert(&s.speaker_id, s.speaker_gender);
            durations.push(s.duration_s);
            positives += usize::from(s.label.is_positive());
        }
        let count_gender = |g| speakers.values().filter(|&&v| v == g).count();
        let n = durations.len();
        let total: f64 = durations.iter().sum();
        let (mean, std) = if n == 0 {
            (None, None)
        } else {
            let mean = total / n as f64;
            let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
            (Some(mean), Some(var.sqrt()))
        };
        GroupStats {
            speaker_count: speakers.len(),
            male_speakers: count_gender(Gender::Male),
            female_speakers: count_gender(Gender::Female),
            unknown_speakers: count_gender(Gender::Unknown),
            sample_count: n,
            positive_count: positives,
            positive_fraction: (n > 0).then(|| positives as f64 / n as f64),
            mean_duration_s: mean,
            std_duration_s: std,
            total_duration_s: total,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: GroupStats,
    pub dev: GroupStats,
    pub test: GroupStats,
    pub total: GroupStats,
}

impl CorpusStats {
    pub fn partition(&self, p: Partition) -> &GroupStats {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }
}

/// Per-partition and overall statistics; fails if a sample's speaker is
/// not assigned.
pub fn corpus_stats(samples: &[SentenceSample], partition: &PartitionAssignment) -> Result<CorpusStats> {
    let mut parts: [Vec<&SentenceSample>; 3] = Default::default();
    for s in samples {
        let p = partition
            .partition_of(&s.speaker_id)
            .ok_or_else(|| Error::UnknownSpeaker(s.speaker_id.clone()))?;
        parts[p.index()].push(s);
    }
    Ok(CorpusStats {
        train: GroupStats::from_samples(parts[0].iter().copied()),
        dev: GroupStats::from_samples(parts[1].iter().copied()),
        test: GroupStats::from_samples(parts[2].iter().copied()),
        total: GroupStats::from_samples(samples),
    })
}
