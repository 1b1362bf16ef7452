//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a description of the first failure instead of panicking.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ndarray::Array2;
use probefuse::corpus::{assemble, project_labels, CallRecord, Gender, SentenceSample, Span};
use probefuse::fusion::{early_fuse, evaluate_source, late_fuse, normalize, FusionTargets, LateFusionConfig, ScoreSource, TargetSplit, WeightRule};
use probefuse::probe::{probe_layers, GridSpec, ProbeSpec, SearchOptions};
use probefuse::splitter::{make_split, BalanceTolerances, Partition, PartitionAssignment};
use probefuse::svm::{decision, predict, train, Gamma, KernelKind, SvmConfig, SvmModel};
use probefuse::synth::{layered_pack, score_file, synthetic_calls, CorpusSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::qp_oracle::{decision as oracle_decision, gram, random_instance, solve_exact, Instance, OracleKernel};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

pub fn config_for(inst: &Instance, tolerance: f64) -> SvmConfig {
    let base = SvmConfig {
        c: inst.c,
        positive_class_weight: inst.weight,
        tolerance,
        ..SvmConfig::default()
    };
    match inst.kernel {
        OracleKernel::Linear => base,
        OracleKernel::Rbf { gamma } => SvmConfig {
            kernel: KernelKind::Rbf,
            gamma: Gamma::Value(gamma),
            ..base
        },
        OracleKernel::Sigmoid { gamma, coef0 } => SvmConfig {
            kernel: KernelKind::Sigmoid,
            gamma: Gamma::Value(gamma),
            coef0,
            ..base
        },
        OracleKernel::Polynomial { gamma, coef0, degree } => SvmConfig {
            kernel: KernelKind::Polynomial,
            gamma: Gamma::Value(gamma),
            coef0,
            degree,
            ..base
        },
    }
}

pub fn matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

fn labels(inst: &Instance) -> Vec<i8> {
    inst.y.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect()
}

/// Full alpha vector recovered from the model's signed dual coefficients.
pub fn alphas(model: &SvmModel, y: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; y.len()];
    for (&i, &coef) in model.support_indices.iter().zip(&model.dual_coef) {
        a[i] = coef * y[i];
    }
    a
}

fn dual_value(inst: &Instance, alpha: &[f64]) -> f64 {
    let k = gram(&inst.x, &inst.kernel);
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * inst.y[i] * inst.y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// One random instance against the exhaustive solver: objective (reported
/// and recomputed from alpha) and predictions on 200 random points. Points
/// where the oracle's decision is within 1e-6 of zero are left out.
pub fn oracle_case(rng: &mut ChaCha8Rng, case: usize) -> Check {
    let inst = random_instance(rng, case % 4, 12);
    let oracle = solve_exact(&gram(&inst.x, &inst.kernel), &inst.y, &inst.upper());
    let x = matrix(&inst.x);
    let model = train(x.view(), &labels(&inst), &config_for(&inst, 1e-10)).map_err(|e| e.to_string())?;
    ensure!(model.summary.converged, "case {case}: not converged");

    let scale = oracle.objective.abs().max(1.0);
    let reported = model.summary.dual_objective;
    let recomputed = dual_value(&inst, &alphas(&model, &inst.y));
    ensure!(
        (reported - oracle.objective).abs() <= 1e-6 * scale,
        "case {case}: reported objective {reported} vs oracle {}",
        oracle.objective
    );
    ensure!(
        (recomputed - oracle.objective).abs() <= 1e-6 * scale,
        "case {case}: objective from alpha {recomputed} vs oracle {}",
        oracle.objective
    );

    let d = inst.x[0].len();
    let probes: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>())
        .filter(|p| oracle_decision(&inst.x, &inst.y, &inst.kernel, &oracle, p).abs() > 1e-6)
        .collect();
    let expected: Vec<i8> = probes
        .iter()
        .map(|p| if oracle_decision(&inst.x, &inst.y, &inst.kernel, &oracle, p) > 0.0 { 1 } else { -1 })
        .collect();
    let got = predict(&model, matrix(&probes).view()).map_err(|e| e.to_string())?;
    let wrong = got.iter().zip(&expected).filter(|(a, b)| a != b).count();
    ensure!(wrong == 0, "case {case}: {wrong} of {} predictions differ", probes.len());
    Ok(())
}

pub fn oracle_suite() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        oracle_case(&mut rng, case)?;
    }
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(())
}

/// `alpha = 0 => y f >= 1 - tol`, `alpha = C => y f <= 1 + tol`, free
/// variables sit on the margin within `tol`.
pub fn kkt_violations(model: &SvmModel, x: &Array2<f64>, y: &[i8], tol: f64) -> usize {
    let yf: Vec<f64> = decision(model, x.view())
        .unwrap()
        .iter()
        .zip(y)
        .map(|(f, &yi)| f * yi as f64)
        .collect();
    let yv: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let alpha = alphas(model, &yv);
    (0..y.len())
        .filter(|&i| {
            let c = model.config.upper_bound(y[i]);
            if alpha[i] == 0.0 {
                yf[i] < 1.0 - tol
            } else if alpha[i] == c {
                yf[i] > 1.0 + tol
            } else {
                (yf[i] - 1.0).abs() > tol
            }
        })
        .count()
}

pub fn kkt_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..20 {
        let n = rng.random_range(50..=200);
        let d = rng.random_range(2..=6);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let y: Vec<i8> = x
            .rows()
            .into_iter()
            .map(|r| if r[0] + 0.5 * r[1] + rng.random_range(-0.8..0.8) > 0.0 { 1 } else { -1 })
            .collect();
        let kernel = KernelKind::ALL[case % 4];
        let cfg = SvmConfig {
            c: [0.1, 1.0, 10.0][case % 3],
            kernel,
            gamma: Gamma::Value(0.5),
            coef0: if kernel == KernelKind::Sigmoid { -0.5 } else { 1.0 },
            degree: 2,
            positive_class_weight: [1.0, 2.0][case % 2],
            ..SvmConfig::default()
        };
        let model = train(x.view(), &y, &cfg).map_err(|e| e.to_string())?;
        ensure!(model.summary.converged, "case {case}: not converged");
        let v = kkt_violations(&model, &x, &y, cfg.tolerance);
        ensure!(v == 0, "case {case}: {v} KKT violations");
    }
    Ok(())
}

/// Transcript of `words` joined by spaces, cut into sentences after the
/// word indices in `breaks`.
pub fn call_from(words: &[String], breaks: &[usize], flattery: Vec<Span>) -> CallRecord {
    let mut transcript = String::new();
    let mut starts = Vec::new();
    for w in words {
        if !transcript.is_empty() {
            transcript.push(' ');
        }
        starts.push(transcript.len());
        transcript.push_str(w);
    }
    let mut cuts: Vec<usize> = breaks.iter().map(|&b| b % words.len()).collect();
    cuts.push(words.len() - 1);
    cuts.sort_unstable();
    cuts.dedup();
    let mut sentence_spans = Vec::new();
    let mut first = 0;
    for c in cuts {
        sentence_spans.push((starts[first], starts[c] + words[c].len()));
        first = c + 1;
    }
    CallRecord {
        call_id: "c".into(),
        speaker_id: "s".into(),
        speaker_gender: Gender::Unknown,
        transcript,
        sentence_spans,
        word_alignments: vec![],
        flattery_spans: flattery,
    }
}

pub fn clamp_span(len: usize, (start, width): (usize, usize)) -> Span {
    let s = start % (len + 1);
    (s, (s + width).min(len))
}

/// Byte-by-byte intersection test.
fn shares_a_byte(a: Span, b: Span) -> bool {
    (a.0..a.1).any(|p| b.0 <= p && p < b.1)
}

pub type Layout = (Vec<String>, Vec<usize>, Vec<(usize, usize)>, (usize, usize));

pub fn layout() -> impl proptest::strategy::Strategy<Value = Layout> {
    use proptest::prelude::*;
    (
        prop::collection::vec("[a-z]{1,6}", 1..30),
        prop::collection::vec(0usize..40, 0..8),
        prop::collection::vec((0usize..400, 0usize..30), 0..5),
        (0usize..400, 0usize..30),
    )
}

/// Any-overlap labelling, and adding a span never turns a positive negative.
pub fn projection_case((words, breaks, spans, extra): Layout) -> Check {
    let base = call_from(&words, &breaks, vec![]);
    let len = base.transcript.len();
    let flattery: Vec<Span> = spans.into_iter().map(|s| clamp_span(len, s)).collect();
    let call = call_from(&words, &breaks, flattery.clone());
    let labels = project_labels(&call).map_err(|e| e.to_string())?;
    for l in &labels {
        let expected = flattery.iter().any(|&f| shares_a_byte(l.span, f));
        ensure!(l.label.is_positive() == expected, "sentence {:?} labelled {:?}", l.span, l.label);
    }
    let mut more = flattery;
    more.push(clamp_span(len, extra));
    let grown = project_labels(&call_from(&words, &breaks, more)).map_err(|e| e.to_string())?;
    for (before, after) in labels.iter().zip(&grown) {
        ensure!(
            !before.label.is_positive() || after.label.is_positive(),
            "sentence {:?} lost its label after adding a span",
            before.span
        );
    }
    Ok(())
}

pub fn projection_suite(cases: u32) -> Check {
    use proptest::test_runner::{Config, TestCaseError, TestRunner};
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&layout(), |l| projection_case(l).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())
}

pub fn split_corpus(speakers: usize, sentences: usize, positive_rate: f64, seed: u64) -> Vec<SentenceSample> {
    let spec = CorpusSpec {
        speakers,
        calls_per_speaker: 1,
        sentences_per_call: sentences,
        positive_rate,
        ..Default::default()
    };
    assemble(&synthetic_calls(&spec, seed)).unwrap().samples
}

/// 255 speakers: 178/39/38, disjoint and complete, within tolerances and
/// reproducible.
pub fn corpus_scale_split() -> Check {
    let samples = split_corpus(255, 40, 0.069, 7);
    let tol = BalanceTolerances::default();
    let split = make_split(&samples, 1, 1000, tol).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = Partition::ALL.iter().map(|&p| split.speakers_in(p).count()).collect();
    ensure!(sizes == vec![178, 39, 38], "partition sizes {sizes:?}");

    let all: BTreeSet<&str> = samples.iter().map(|s| s.speaker_id.as_str()).collect();
    let mut seen = BTreeSet::new();
    for p in Partition::ALL {
        for s in split.speakers_in(p) {
            ensure!(seen.insert(s), "{s} assigned twice");
        }
    }
    ensure!(seen == all, "not every speaker is assigned");
    ensure!(split.constraints_met, "tolerances not met: {:?}", split.deviations);
    for d in &split.deviations {
        ensure!(d.positive_rate <= tol.positive_rate, "{d:?}");
        ensure!(d.mean_duration <= tol.mean_duration, "{d:?}");
    }
    let again = make_split(&samples, 1, 1000, tol).map_err(|e| e.to_string())?;
    ensure!(again == split, "second run differs");
    Ok(())
}

fn probe_fixture(speakers: usize) -> (Vec<SentenceSample>, PartitionAssignment) {
    let spec = CorpusSpec {
        speakers,
        ..Default::default()
    };
    let samples = assemble(&synthetic_calls(&spec, 11)).unwrap().samples;
    let split = make_split(&samples, 3, 200, BalanceTolerances::default()).unwrap();
    (samples, split)
}

/// Six layers of noise except layer 3, whose class means differ by 3
/// standard deviations.
pub fn planted_layer() -> Check {
    let (samples, split) = probe_fixture(30);
    let pack = layered_pack("enc", &samples, &[1, 2, 3, 4, 5, 6], &[(3, 3.0)], 8, 5).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (result, _) = probe_layers(&pack, &samples, &split, &ProbeSpec::default(), &SearchOptions::default())
        .map_err(|e| e.to_string())?;
    let took = started.elapsed();
    ensure!(result.selected_layer == 3, "selected layer {}", result.selected_layer);
    let best = result.stage2.iter().find(|r| r.layer == 3).ok_or("no stage-2 result for layer 3")?;
    ensure!(best.dev_uar >= 0.95, "stage-2 dev UAR {}", best.dev_uar);
    ensure!(took < Duration::from_secs(120), "took {took:?}");
    Ok(())
}

pub fn fusion_fixture(speakers: usize, sentences: usize) -> (Vec<SentenceSample>, PartitionAssignment) {
    let spec = CorpusSpec {
        speakers,
        calls_per_speaker: 1,
        sentences_per_call: sentences,
        ..Default::default()
    };
    let samples = assemble(&synthetic_calls(&spec, 21)).unwrap().samples;
    let split = make_split(&samples, 9, 200, BalanceTolerances::default()).unwrap();
    (samples, split)
}

fn source(name: &str, seed: u64, samples: &[SentenceSample], strength: f64) -> ScoreSource {
    ScoreSource {
        name: name.into(),
        scores: score_file(name, seed, samples, strength).entries,
    }
}

/// Weights (1, 0) reproduce source 1, the fused score lies between the
/// sources on all 500 samples, and early fusion concatenates dimensions.
pub fn fusion_identities() -> Check {
    let err = |e: probefuse::Error| e.to_string();
    let (samples, split) = fusion_fixture(25, 20);
    ensure!(samples.len() == 500, "fixture has {} samples", samples.len());
    let targets = FusionTargets::new(&samples, &split).map_err(err)?;
    let a = source("audio", 1, &samples, 1.0);
    let b = source("text", 2, &samples, 1.5);

    let fixed = LateFusionConfig {
        weight_rule: WeightRule::Fixed,
        fixed_weights: Some(vec![1.0, 0.0]),
        ..Default::default()
    };
    let fused = late_fuse(&[a.clone(), b.clone()], &[], &fixed, &targets).map_err(err)?;
    let alone = evaluate_source(&a, &fixed, &targets).map_err(err)?;
    ensure!(fused.report == alone.report, "weights (1, 0) change the report");
    ensure!(fused.threshold == alone.threshold, "weights (1, 0) change the threshold");
    ensure!(fused.dev_scores == alone.dev_scores && fused.test_scores == alone.test_scores, "weights (1, 0) change scores");

    // Convexity on every sample: min-max statistics still come from dev,
    // the second target set is the whole corpus.
    let everything = FusionTargets {
        dev: targets.dev.clone(),
        test: TargetSplit {
            sample_ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
            labels: samples.iter().map(|s| s.label.is_positive()).collect(),
            genders: samples.iter().map(|s| s.speaker_gender).collect(),
        },
    };
    let cfg = LateFusionConfig::default();
    let dev_uars = [
        evaluate_source(&a, &cfg, &targets).map_err(err)?.dev_uar(),
        evaluate_source(&b, &cfg, &targets).map_err(err)?.dev_uar(),
    ];
    let out = late_fuse(&[a.clone(), b.clone()], &dev_uars, &cfg, &everything).map_err(err)?;
    let total: f64 = out.weights.iter().sum();
    ensure!((total - 1.0).abs() < 1e-12, "weights sum to {total}");
    let norm = normalize(&[a, b], &everything, cfg.score_normalization).map_err(err)?;
    ensure!(out.test_scores.len() == 500, "fused {} samples", out.test_scores.len());
    for (scores, per_source) in [(&out.dev_scores, &norm.dev), (&out.test_scores, &norm.test)] {
        for (i, &f) in scores.iter().enumerate() {
            let lo = per_source.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min);
            let hi = per_source.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max);
            ensure!(lo - 1e-12 <= f && f <= hi + 1e-12, "fused score {f} outside [{lo}, {hi}]");
        }
    }

    let audio = layered_pack("audio", &samples, &[1, 2], &[], 6, 31).map_err(err)?;
    let text = layered_pack("text", &samples, &[12], &[(12, 1.5)], 10, 32).map_err(err)?;
    let early = early_fuse(&audio, &text, &samples, &split, &GridSpec::linear(), &SearchOptions::default(), true)
        .map_err(err)?;
    ensure!(early.dim == 16 && early.block_dims == vec![6, 10], "early fusion dim {} from {:?}", early.dim, early.block_dims);
    ensure!(early.model.dim() == 16, "model dim {}", early.model.dim());
    Ok(())
}

/// UAR from a known confusion matrix, a one-substitution WER and pooled
/// corpus WER over three samples.
pub fn metrics_hand_cases() -> Check {
    use probefuse::metrics::{corpus_wer, uar, wer, Normalizer};
    let err = |e: probefuse::Error| e.to_string();
    // tp 9, fn 1, tn 80, fp 10
    let mut labels = vec![true; 10];
    labels.extend(vec![false; 90]);
    let mut preds = vec![true; 9];
    preds.push(false);
    preds.extend(vec![false; 80]);
    preds.extend(vec![true; 10]);
    let u = uar(&preds, &labels).map_err(err)?.uar();
    let expected = (9.0 / 10.0 + 80.0 / 90.0) / 2.0;
    ensure!((u - expected).abs() <= 1e-12, "UAR {u} vs {expected}");
    ensure!((u - 0.894_444_444_444_444_4).abs() <= 1e-12, "UAR {u}");

    let n = Normalizer::default();
    let c = wer("good morning great quarter", "good morning great order", &n).map_err(err)?;
    ensure!(c.substitutions == 1 && c.deletions == 0 && c.insertions == 0, "{c:?}");
    ensure!(c.wer() == 0.25, "WER {}", c.wer());

    let triples = [
        ("s1", "a b c d", "a x c d"),
        ("s2", "e f", "e"),
        ("s3", "g h i j k l m n", "g h i j k l m n o"),
    ];
    let r = corpus_wer("asr", triples, &n, false).map_err(err)?;
    let pooled = (1.0 + 1.0 + 1.0) / (4.0 + 2.0 + 8.0);
    ensure!(r.wer == pooled, "pooled WER {} vs {pooled}", r.wer);
    Ok(())
}
