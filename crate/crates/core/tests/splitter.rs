mod common;

use std::collections::BTreeMap;

use common::criteria::{corpus_scale_split, split_corpus};
use probefuse::corpus::SentenceSample;
use probefuse::splitter::{make_split, BalanceTolerances, Partition, SplitProblem};

/// Sum over partitions of relative positive-rate and mean-duration
/// deviations, computed straight from the samples.
fn objective(samples: &[SentenceSample], part: &BTreeMap<String, Partition>) -> f64 {
    let n = samples.len() as f64;
    let rate = samples.iter().filter(|s| s.label.is_positive()).count() as f64 / n;
    let dur = samples.iter().map(|s| s.duration_s).sum::<f64>() / n;
    Partition::ALL
        .iter()
        .map(|p| {
            let mine: Vec<&SentenceSample> = samples.iter().filter(|s| part[&s.speaker_id] == *p).collect();
            let m = mine.len() as f64;
            let r = mine.iter().filter(|s| s.label.is_positive()).count() as f64 / m;
            let d = mine.iter().map(|s| s.duration_s).sum::<f64>() / m;
            (r - rate).abs() / rate + (d - dur).abs() / dur
        })
        .sum()
}

#[test]
fn replay_finds_no_better_candidate() {
    let samples = split_corpus(20, 25, 0.2, 41);
    let seed = 1234;
    let split = make_split(&samples, seed, 200, BalanceTolerances::default()).unwrap();
    let got = objective(&samples, &split.assignments);
    assert!((got - split.objective).abs() < 1e-9);

    let problem = SplitProblem::new(&samples).unwrap();
    let mut best = f64::INFINITY;
    for i in 0..200 {
        let cand = problem.candidate(seed, i);
        let map: BTreeMap<String, Partition> = problem.speakers().iter().cloned().zip(cand).collect();
        let value = objective(&samples, &map);
        assert!(split.objective <= value + 1e-12, "candidate {i} beats the returned split");
        best = best.min(value);
    }
    assert!((best - split.objective).abs() < 1e-9);
}

#[test]
fn corpus_scale_split_meets_tolerances() {
    corpus_scale_split().unwrap();
}
