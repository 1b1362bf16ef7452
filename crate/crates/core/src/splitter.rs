//! Speaker-independent train/dev/test partitioning.
//!
//! Speakers are shuffled into fixed-size groups (70% train, the rest split
//! as evenly as possible between dev and test) many times under seeded
//! random streams; the candidate whose positive rate and mean sample
//! duration deviate least from the corpus-wide values wins.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceTolerances {
    pub positive_rate: f64,
    pub mean_duration: f64,
}

impl Default for BalanceTolerances {
    fn default() -> Self {
        BalanceTolerances {
            positive_rate: 0.15,
            mean_duration: 0.10,
        }
    }
}

/// Relative deviations of one partition from the corpus-wide values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub positive_rate: f64,
    pub mean_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    pub seed: u64,
    pub restarts: usize,
    pub objective: f64,
    pub constraints_met: bool,
    pub tolerances: BalanceTolerances,
    /// Index of the winning candidate among the restarts.
    pub candidate: usize,
    /// Deviations for train, dev and test, in that order.
    pub deviations: [Deviation; 3],
    pub assignments: BTreeMap<String, Partition>,
}

impl PartitionAssignment {
    pub fn partition_of(&self, speaker_id: &str) -> Option<Partition> {
        self.assignments.get(speaker_id).copied()
    }

    pub fn speakers_in(&self, p: Partition) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, &q)| q == p)
            .map(|(s, _)| s.as_str())
    }
}

/// Partition sizes for `speakers` speakers: floor(70%) train, remainder
/// split with dev taking the extra speaker when odd. Train is capped so dev
/// and test keep at least one speaker each.
pub fn partition_sizes(speakers: usize) -> [usize; 3] {
    let train = (speakers * 7 / 10).min(speakers.saturating_sub(2));
    let rest = speakers - train;
    let dev = rest.div_ceil(2);
    [train, dev, rest - dev]
}

#[derive(Debug, Clone, Copy, Default)]
struct SpeakerTotals {
    samples: usize,
    positives: usize,
    duration: f64,
}

/// Per-speaker aggregates used to score candidate partitions.
#[derive(Debug, Clone)]
pub struct SplitProblem {
    speakers: Vec<String>,
    totals: Vec<SpeakerTotals>,
    positive_rate: f64,
    mean_duration: f64,
}

impl SplitProblem {
    pub fn new(samples: &[SentenceSample]) -> Result<Self> {
        let mut by_speaker: BTreeMap<&str, SpeakerTotals> = BTreeMap::new();
        for s in samples {
            let t = by_speaker.entry(&s.speaker_id).or_default();
            t.samples += 1;
            t.positives += usize::from(s.label.is_positive());
            t.duration += s.duration_s;
        }
        if by_speaker.len() < 3 {
            return Err(Error::TooFewSpeakers(by_speaker.len()));
        }
        let n = samples.len();
        let positives: usize = by_speaker.values().map(|t| t.positives).sum();
        if positives == 0 || positives == n {
            return Err(Error::NoPositiveSamples);
        }
        let duration: f64 = by_speaker.values().map(|t| t.duration).sum();
        Ok(SplitProblem {
            speakers: by_speaker.keys().map(|s| s.to_string()).collect(),
            totals: by_speaker.values().copied().collect(),
            positive_rate: positives as f64 / n as f64,
            mean_duration: duration / n as f64,
        })
    }

    /// Sorted speaker ids.
    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    /// Candidate `index` for `seed`: speaker indices shuffled by an
    /// independent ChaCha stream, then cut into train/dev/test.
    pub fn candidate(&self, seed: u64, index: usize) -> Vec<Partition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut order: Vec<usize> = (0..self.speakers.len()).collect();
        order.shuffle(&mut rng);
        let [train, dev, _] = partition_sizes(self.speakers.len());
        let mut out = vec![Partition::Test; self.speakers.len()];
        for (rank, &spk) in order.iter().enumerate() {
            out[spk] = if rank < train {
                Partition::Train
            } else if rank < train + dev {
                Partition::Dev
            } else {
                Partition::Test
            };
        }
        out
    }

    /// Objective and per-partition deviations of an assignment given as one
    /// partition per (sorted) speaker.
    pub fn evaluate(&self, assignment: &[Partition]) -> (f64, [Deviation; 3]) {
        let mut acc = [SpeakerTotals::default(); 3];
        for (t, p) in self.totals.iter().zip(assignment) {
            let a = &mut acc[p.index()];
            a.samples += t.samples;
            a.positives += t.positives;
            a.duration += t.duration;
        }
        let mut devs = [Deviation::default(); 3];
        for (d, a) in devs.iter_mut().zip(&acc) {
            if a.samples == 0 {
                *d = Deviation {
                    positive_rate: 1.0,
                    mean_duration: 1.0,
                };
                continue;
            }
            let n = a.samples as f64;
            d.positive_rate = (a.positives as f64 / n - self.positive_rate).abs() / self.positive_rate;
            d.mean_duration = if self.mean_duration > 0.0 {
                (a.duration / n - self.mean_duration).abs() / self.mean_duration
            } else {
                0.0
            };
        }
        let objective = devs.iter().map(|d| d.positive_rate + d.mean_duration).sum();
        (objective, devs)
    }
}

/// Seeded multi-restart search for a balanced speaker-independent split.
///
/// Candidates are scored independently (in parallel); the minimum objective
/// wins with ties going to the lower candidate index.
pub fn make_split(
    samples: &[SentenceSample],
    seed: u64,
    restarts: usize,
    tolerances: BalanceTolerances,
) -> Result<PartitionAssignment> {
    if restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    let problem = SplitProblem::new(samples)?;
    let (objective, candidate) = (0..restarts)
        .into_par_iter()
        .map(|k| (problem.evaluate(&problem.candidate(seed, k)).0, k))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("restarts >= 1");
    let best = problem.candidate(seed, candidate);
    let (_, deviations) = problem.evaluate(&best);
    let constraints_met = deviations.iter().all(|d| {
        d.positive_rate <= tolerances.positive_rate && d.mean_duration <= tolerances.mean_duration
    });
    if !constraints_met {
        log::warn!("best split (objective {objective:.4}) violates the balance tolerances");
    }
    Ok(PartitionAssignment {
        seed,
        restarts,
        objective,
        constraints_met,
        tolerances,
        candidate,
        deviations,
        assignments: problem.speakers.iter().cloned().zip(best).collect(),
    })
}
