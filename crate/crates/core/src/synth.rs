//! Seeded synthetic corpora, feature packs and score files.
//!
//! Used for fixtures and tests; nothing here touches real data.

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::corpus::{CallRecord, Gender, SentenceSample, Span, WordAlignment};
use crate::error::Result;
use crate::features::{FeaturePack, Pooling, ScoreFile, TranscriptFile};

const NEUTRAL_WORDS: &[&str] = &[
    "the", "quarter", "revenue", "margin", "guidance", "we", "expect", "growth", "in", "our",
    "segment", "customers", "pricing", "demand", "next", "year", "cost", "capital", "thank",
    "you", "question", "on", "operating", "cash", "flow", "and", "that", "is", "it", "a",
];

/// Marks positive sentences in synthetic transcripts.
pub const FLATTERY_TOKEN: &str = "great";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub speakers: usize,
    pub calls_per_speaker: usize,
    pub sentences_per_call: usize,
    /// Corpus-wide target; each speaker's own rate varies around it.
    pub positive_rate: f64,
    pub female_fraction: f64,
    /// Probability that a sentence gets no word alignments at all.
    pub unaligned_rate: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            speakers: 30,
            calls_per_speaker: 2,
            sentences_per_call: 10,
            positive_rate: 0.2,
            female_fraction: 0.1,
            unaligned_rate: 0.0,
        }
    }
}

/// Builds annotated calls. Positive sentences contain [`FLATTERY_TOKEN`]
/// inside a flattery span covering part of the sentence; speakers differ in
/// positive rate and speaking rate so that splits have something to balance.
pub fn synthetic_calls(spec: &CorpusSpec, seed: u64) -> Vec<CallRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut calls = Vec::new();
    for s in 0..spec.speakers {
        let speaker_id = format!("spk{s:03}");
        let gender = if rng.random_bool(spec.female_fraction) {
            Gender::Female
        } else {
            Gender::Male
        };
        let rate = (spec.positive_rate * rng.random_range(0.4..1.6)).min(1.0);
        let pace = rng.random_range(0.8..1.25);
        for c in 0..spec.calls_per_speaker {
            let call_id = format!("{speaker_id}-c{c}");
            calls.push(synthetic_call(&mut rng, spec, call_id, speaker_id.clone(), gender, rate, pace));
        }
    }
    calls
}

fn synthetic_call(
    rng: &mut ChaCha8Rng,
    spec: &CorpusSpec,
    call_id: String,
    speaker_id: String,
    speaker_gender: Gender,
    positive_rate: f64,
    pace: f64,
) -> CallRecord {
    let mut transcript = String::new();
    let mut sentence_spans = Vec::new();
    let mut word_alignments = Vec::new();
    let mut flattery_spans = Vec::new();
    let mut clock = rng.random_range(0.0..2.0);

    for _ in 0..spec.sentences_per_call {
        if !transcript.is_empty() {
            transcript.push(' ');
        }
        let positive = rng.random_bool(positive_rate);
        let aligned = !rng.random_bool(spec.unaligned_rate);
        let len = rng.random_range(4..=18);
        let mut words: Vec<&str> = (0..len)
            .map(|_| *NEUTRAL_WORDS.choose(rng).expect("non-empty"))
            .collect();
        let marked = positive.then(|| {
            let at = rng.random_range(0..len);
            words[at] = FLATTERY_TOKEN;
            at
        });

        let sentence_start = transcript.len();
        let mut spans: Vec<Span> = Vec::with_capacity(len);
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                transcript.push(' ');
            }
            let start = transcript.len();
            transcript.push_str(w);
            spans.push((start, transcript.len()));
            let dur = pace * (0.12 + 0.055 * w.len() as f64);
            if aligned {
                word_alignments.push(WordAlignment(start, transcript.len(), clock, clock + dur));
            }
            clock += dur + pace * 0.06;
        }
        transcript.push('.');
        sentence_spans.push((sentence_start, transcript.len()));
        if let Some(at) = marked {
            let from = at.saturating_sub(rng.random_range(0..3));
            let to = (at + rng.random_range(1..4)).min(len);
            flattery_spans.push((spans[from].0, spans[to - 1].1));
        }
        clock += rng.random_range(0.2..0.8);
    }
    CallRecord {
        call_id,
        speaker_id,
        speaker_gender,
        transcript,
        sentence_spans,
        word_alignments,
        flattery_spans,
    }
}

/// Per-layer Gaussian features. Layers listed in `signal` get class means at
/// `±separation / 2` on every coordinate (unit variance), so the class means
/// differ by `separation` standard deviations per coordinate; all other
/// layers are pure noise.
pub fn layered_pack(
    model_id: &str,
    samples: &[SentenceSample],
    layers: &[u32],
    signal: &[(u32, f64)],
    dim: usize,
    seed: u64,
) -> Result<FeaturePack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices = layers
        .iter()
        .map(|&layer| {
            let shift = signal.iter().find(|(l, _)| *l == layer).map_or(0.0, |(_, s)| s / 2.0);
            let m = Array2::from_shape_fn((samples.len(), dim), |(i, _)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z + shift * samples[i].label.sign() as f64) as f32
            });
            (layer, m)
        })
        .collect();
    FeaturePack::new(
        model_id,
        Pooling::MeanTokens,
        samples.iter().map(|s| s.sample_id.clone()).collect(),
        matrices,
    )
}

/// Probability-like scores: a logistic of `strength * label + noise`.
pub fn score_file(model_id: &str, seed: u64, samples: &[SentenceSample], strength: f64) -> ScoreFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid");
    let entries = samples
        .iter()
        .map(|s| {
            let z = strength * s.label.sign() as f64 + noise.sample(&mut rng);
            (s.sample_id.clone(), 1.0 / (1.0 + (-z).exp()))
        })
        .collect();
    ScoreFile {
        model_id: model_id.to_string(),
        seed,
        entries,
    }
}

/// Hypotheses derived from the reference text by dropping, replacing and
/// inserting words, each with probability `rate`.
pub fn noisy_transcripts(source_id: &str, samples: &[SentenceSample], rate: f64, seed: u64) -> TranscriptFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = samples
        .iter()
        .map(|s| {
            let mut out: Vec<&str> = Vec::new();
            for w in s.text.split_whitespace() {
                let roll: f64 = rng.random();
                if roll < rate {
                    continue;
                } else if roll < 2.0 * rate {
                    out.push(NEUTRAL_WORDS.choose(&mut rng).expect("non-empty"));
                } else {
                    out.push(w);
                }
                if rng.random_bool(rate) {
                    out.push(NEUTRAL_WORDS.choose(&mut rng).expect("non-empty"));
                }
            }
            (s.sample_id.clone(), out.join(" "))
        })
        .collect();
    TranscriptFile {
        source_id: source_id.to_string(),
        entries,
    }
}
