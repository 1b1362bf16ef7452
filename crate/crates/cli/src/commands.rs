use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use probefuse::corpus::{
    self, corpus_stats, read_manifest, CorpusStats, ExclusionReason, GroupStats, SentenceSample,
};
use probefuse::features::{align, load_pack, FeaturePack, ScoreFile, TranscriptFile};
use probefuse::fusion::{early_fuse, evaluate_source, late_fuse, FusionTargets, LateFusionOutcome, ScoreSource};
use probefuse::metrics::{aggregate_seeds, corpus_wer, EvalReport, Normalizer, SeedAggregate, WerReport};
use probefuse::probe::{probe_layers, search_layer, LayerResult, LeaderboardEntry, ProbeResult, ProbeSpec, SearchOptions};
use probefuse::report::{corpus_table, pct_mean_std, probe_table, results_table, wer_table, ResultRow, Table};
use probefuse::splitter::{make_split, PartitionAssignment};
use probefuse::svm::{self, write_model, SvmModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, SourceKind};
use crate::error::CliError;

type CliResult<T = ()> = Result<T, CliError>;

const CORPUS: &str = "corpus.jsonl";
const PARTITION: &str = "partition.json";

/// Every JSON artifact starts with the command, config hash and seeds.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    seeds: &'a [u64],
    #[serde(flatten)]
    payload: T,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| probefuse::Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| probefuse::Error::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_artifact<T: Serialize>(cfg: &Loaded, path: &Path, command: &str, seeds: &[u64], payload: T) -> CliResult {
    write_json(
        path,
        &Envelope {
            command,
            config_hash: &cfg.hash,
            seeds,
            payload,
        },
    )
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| probefuse::Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| probefuse::Error::io(path, e))?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| probefuse::Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn ensure_out_dir(cfg: &Loaded) -> CliResult {
    let dir = cfg.out("");
    fs::create_dir_all(&dir).map_err(|e| probefuse::Error::io(&dir, e))?;
    Ok(())
}

/// An input produced by an upstream component (packs, scores, transcripts).
fn upstream(path: PathBuf) -> CliResult<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact(path))
    }
}

fn cache_bytes() -> CliResult<usize> {
    match std::env::var("PROBEFUSE_CACHE") {
        Ok(v) => parse_bytes(&v).ok_or_else(|| CliError::Validation(format!("PROBEFUSE_CACHE: cannot parse {v:?}"))),
        Err(_) => Ok(svm::DEFAULT_CACHE_BYTES),
    }
}

/// Plain byte counts or a `K`, `M` or `G` suffix (powers of 1024).
pub fn parse_bytes(s: &str) -> Option<usize> {
    let s = s.trim();
    let (digits, shift) = match s.chars().last()?.to_ascii_uppercase() {
        'K' => (&s[..s.len() - 1], 10),
        'M' => (&s[..s.len() - 1], 20),
        'G' => (&s[..s.len() - 1], 30),
        _ => (s, 0),
    };
    digits.trim().parse::<usize>().ok()?.checked_mul(1 << shift).filter(|&b| b > 0)
}

fn search_options() -> CliResult<SearchOptions> {
    Ok(SearchOptions {
        cache_bytes: cache_bytes()?,
    })
}

fn split_report(r: &LayerResult) -> EvalReport {
    EvalReport {
        splits: [("dev".to_string(), r.dev.clone()), ("test".to_string(), r.test.clone())].into(),
    }
}

fn aggregate_row(source: &str, method: &str, agg: &SeedAggregate) -> ResultRow {
    let cell = |split| agg.uar(split).map_or_else(|| "n/a".into(), |m| pct_mean_std(&m));
    ResultRow {
        source: source.to_string(),
        method: method.to_string(),
        dev: cell("dev"),
        test: cell("test"),
    }
}

/// Runs `f` once per distinct templated path, reusing results for seeds
/// that resolve to the same input.
fn per_seed<T: Clone>(
    cfg: &Loaded,
    template: &str,
    mut f: impl FnMut(&Path, u64) -> CliResult<T>,
) -> CliResult<Vec<(u64, T)>> {
    let mut done: BTreeMap<PathBuf, T> = BTreeMap::new();
    let mut out = Vec::new();
    for &seed in &cfg.config.seeds {
        let path = cfg.templated(template, seed);
        let value = match done.get(&path) {
            Some(v) => v.clone(),
            None => {
                let v = f(&path, seed)?;
                done.insert(path, v.clone());
                v
            }
        };
        out.push((seed, value));
    }
    Ok(out)
}

fn load_corpus(cfg: &Loaded) -> CliResult<Vec<SentenceSample>> {
    Ok(read_manifest(&cfg.artifact(CORPUS)?)?)
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    #[serde(flatten)]
    assignment: PartitionAssignment,
    stats: CorpusStats,
}

fn load_partition(cfg: &Loaded) -> CliResult<PartitionAssignment> {
    let file: PartitionFile = read_json(&cfg.artifact(PARTITION)?)?;
    Ok(file.assignment)
}

fn check_finite(context: &str, values: &[f64]) -> CliResult {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CliError::Numerical(format!("{context}: non-finite decision value at row {i}"))),
        None => Ok(()),
    }
}

/// Decision values of `model` on dev and test in ScoreFile format.
fn decisions(
    pack: &FeaturePack,
    layer: u32,
    samples: &[SentenceSample],
    split: &PartitionAssignment,
    strict: bool,
    model: &SvmModel,
) -> CliResult<BTreeMap<String, f64>> {
    let view = align(pack, layer, samples, split, strict)?;
    let mut entries = BTreeMap::new();
    for part in [&view.dev, &view.test] {
        let f = svm::decision(model, part.features.view())?;
        check_finite(pack.model_id(), &f)?;
        entries.extend(part.sample_ids.iter().cloned().zip(f));
    }
    Ok(entries)
}

fn score_file(model_id: &str, seed: u64, entries: BTreeMap<String, f64>) -> ScoreFile {
    ScoreFile {
        model_id: model_id.to_string(),
        seed,
        entries,
    }
}

#[derive(Serialize)]
struct LeaderboardLine<'a> {
    stage: u8,
    layer: u32,
    #[serde(flatten)]
    entry: &'a LeaderboardEntry,
}

fn write_leaderboard(path: &Path, results: &[(u8, &LayerResult)]) -> CliResult {
    let lines: Vec<LeaderboardLine> = results
        .iter()
        .flat_map(|(stage, r)| {
            r.leaderboard.iter().map(move |entry| LeaderboardLine {
                stage: *stage,
                layer: r.layer,
                entry,
            })
        })
        .collect();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| probefuse::Error::io(dir, e))?;
    }
    probefuse::jsonl::write(path, &lines)?;
    Ok(())
}

fn strip_leaderboard(mut r: LayerResult) -> LayerResult {
    r.leaderboard.clear();
    r
}

// assemble

#[derive(Serialize)]
struct AssembleSummary {
    calls: usize,
    sentences: usize,
    samples: usize,
    excluded_unaligned: usize,
    excluded_empty_text: usize,
    stats: GroupStats,
}

pub fn assemble(cfg: &Loaded) -> CliResult {
    let calls_path = cfg.input(cfg.resolve(&cfg.config.paths.calls))?;
    let calls = corpus::read_calls(&calls_path)?;
    let out = corpus::assemble(&calls)?;
    ensure_out_dir(cfg)?;
    corpus::write_manifest(&cfg.out(CORPUS), &out.samples)?;
    corpus::write_exclusions(&cfg.out("exclusions.jsonl"), &out.exclusions)?;

    let count = |r| out.exclusions.iter().filter(|e| e.reason == r).count();
    let stats = GroupStats::from_samples(&out.samples);
    let summary = AssembleSummary {
        calls: calls.len(),
        sentences: calls.iter().map(|c| c.sentence_spans.len()).sum(),
        samples: out.samples.len(),
        excluded_unaligned: count(ExclusionReason::Unaligned),
        excluded_empty_text: count(ExclusionReason::EmptyText),
        stats: stats.clone(),
    };
    write_artifact(cfg, &cfg.out("corpus_summary.json"), "assemble", &[], summary)?;
    let table = corpus_table(&CorpusStats {
        total: stats,
        ..Default::default()
    });
    let mut t = Table::new(table.headers.clone());
    t.rows.push(table.rows[3].clone());
    write_text(&cfg.out("corpus.txt"), &t.render())?;
    println!(
        "{} samples from {} calls, {} excluded",
        out.samples.len(),
        calls.len(),
        out.exclusions.len()
    );
    Ok(())
}

// split

pub fn split(cfg: &Loaded) -> CliResult {
    let samples = load_corpus(cfg)?;
    let p = &cfg.config.split;
    let assignment = make_split(&samples, p.seed, p.restarts, p.tolerances)?;
    if !assignment.constraints_met {
        log::warn!(
            "best of {} candidates misses the balance tolerances: {:?}",
            p.restarts,
            assignment.deviations
        );
    }
    let stats = corpus_stats(&samples, &assignment)?;
    let table = corpus_table(&stats).render();
    write_artifact(
        cfg,
        &cfg.out(PARTITION),
        "split",
        &[p.seed],
        PartitionFile { assignment, stats },
    )?;
    write_text(&cfg.out("split.txt"), &table)?;
    print!("{table}");
    Ok(())
}

// probe

#[derive(Clone, Serialize)]
struct ProbeRun {
    seed: u64,
    result: ProbeResult,
}

#[derive(Serialize)]
struct ProbeSummary {
    pack: String,
    runs: Vec<ProbeRun>,
    aggregate: SeedAggregate,
    rows: Vec<ResultRow>,
}

fn pack_names(cfg: &Loaded, only: Option<&str>) -> CliResult<Vec<String>> {
    let names: Vec<String> = match only {
        Some(name) if cfg.config.paths.packs.contains_key(name) => vec![name.to_string()],
        Some(name) => return Err(CliError::Validation(format!("unknown pack {name}"))),
        None => cfg.config.paths.packs.keys().cloned().collect(),
    };
    if names.is_empty() {
        return Err(CliError::Validation("no packs configured".into()));
    }
    Ok(names)
}

pub fn probe(cfg: &Loaded, only: Option<&str>) -> CliResult {
    let samples = load_corpus(cfg)?;
    let split = load_partition(cfg)?;
    let opts = search_options()?;
    let spec = ProbeSpec {
        stage1: cfg.config.grids.stage1.clone(),
        stage2: cfg.config.grids.stage2.clone(),
        strict: cfg.config.strict,
    };
    for name in pack_names(cfg, only)? {
        let dir = cfg.out(Path::new("probe").join(&name));
        // seeds whose template resolves to an already probed pack reuse it
        let mut done: BTreeMap<PathBuf, u64> = BTreeMap::new();
        let mut runs: Vec<ProbeRun> = Vec::new();
        for &seed in &cfg.config.seeds {
            let path = cfg.templated(&cfg.config.paths.packs[&name], seed);
            let run_dir = dir.join(format!("seed{seed}"));
            if let Some(&earlier) = done.get(&path) {
                copy_run(&dir.join(format!("seed{earlier}")), &run_dir, seed)?;
                let result = runs.iter().find(|r| r.seed == earlier).expect("earlier run").result.clone();
                runs.push(ProbeRun { seed, result });
                continue;
            }
            let pack = load_pack(&upstream(path.clone())?)?;
            let (result, models) = probe_layers(&pack, &samples, &split, &spec, &opts)?;
            let best = result.best_stage2();
            let boards: Vec<(u8, &LayerResult)> = result
                .stage1
                .iter()
                .map(|r| (1, r))
                .chain(result.stage2.iter().map(|r| (2, r)))
                .collect();
            write_leaderboard(&run_dir.join("leaderboard.jsonl"), &boards)?;
            let model = &models[&best.layer];
            let entries = decisions(&pack, best.layer, &samples, &split, cfg.config.strict, model)?;
            score_file(&name, seed, entries).write(&run_dir.join("decisions.jsonl"))?;
            write_model(model, &run_dir.join("model.svm"))?;
            let result = ProbeResult {
                stage1: result.stage1.into_iter().map(strip_leaderboard).collect(),
                stage2: result.stage2.into_iter().map(strip_leaderboard).collect(),
                ..result
            };
            done.insert(path, seed);
            runs.push(ProbeRun { seed, result });
        }
        let reports: Vec<EvalReport> = runs.iter().map(|r| split_report(r.result.best_stage2())).collect();
        let aggregate = aggregate_seeds(&reports)?;
        let best = runs[0].result.best_stage2();
        let rows = vec![aggregate_row(
            &name,
            &format!("layer {} {}", best.layer, best.best_config.kernel.as_str()),
            &aggregate,
        )];
        let mut text = String::new();
        for r in &runs {
            text.push_str(&format!("seed {}\n", r.seed));
            text.push_str(&probe_table(std::slice::from_ref(&r.result)).render());
            text.push('\n');
        }
        text.push_str(&results_table(&rows).render());
        write_text(&dir.join("summary.txt"), &text)?;
        print!("{}", results_table(&rows).render());
        write_artifact(
            cfg,
            &dir.join("summary.json"),
            "probe",
            &cfg.config.seeds,
            ProbeSummary {
                pack: name.clone(),
                runs,
                aggregate,
                rows,
            },
        )?;
    }
    Ok(())
}

/// Copies a run directory for a seed that reused another seed's input,
/// rewriting the seed recorded in the decisions file.
fn copy_run(from: &Path, to: &Path, seed: u64) -> CliResult {
    fs::create_dir_all(to).map_err(|e| probefuse::Error::io(to, e))?;
    for name in ["leaderboard.jsonl", "model.svm"] {
        let (a, b) = (from.join(name), to.join(name));
        fs::copy(&a, &b).map_err(|e| probefuse::Error::io(&b, e))?;
    }
    let mut file = ScoreFile::load(&from.join("decisions.jsonl"), "", 0, false)?;
    file.seed = seed;
    file.write(&to.join("decisions.jsonl"))?;
    Ok(())
}

// tune

#[derive(Clone, Serialize)]
struct TuneRun {
    seed: u64,
    result: LayerResult,
}

#[derive(Serialize)]
struct TuneSummary {
    pack: String,
    layer: u32,
    runs: Vec<TuneRun>,
    aggregate: SeedAggregate,
    rows: Vec<ResultRow>,
}

/// Stage-2 grid search on one chosen layer of a pack.
pub fn tune(cfg: &Loaded, name: &str, layer: Option<u32>) -> CliResult {
    let samples = load_corpus(cfg)?;
    let split = load_partition(cfg)?;
    let opts = search_options()?;
    let template = cfg
        .config
        .paths
        .packs
        .get(name)
        .ok_or_else(|| CliError::Validation(format!("unknown pack {name}")))?;
    let mut chosen = None;
    let runs = per_seed(cfg, template, |path, seed| {
        let pack = load_pack(&upstream(path.to_path_buf())?)?;
        let layer = layer.unwrap_or_else(|| pack.final_layer());
        chosen = Some(layer);
        let view = align(&pack, layer, &samples, &split, cfg.config.strict)?;
        let (result, model) = search_layer(&view, layer, &cfg.config.grids.stage2, &opts)?;
        let run_dir = cfg.out(format!("tune/{name}/layer{layer}/seed{seed}"));
        write_leaderboard(&run_dir.join("leaderboard.jsonl"), &[(2, &result)])?;
        let entries = decisions(&pack, layer, &samples, &split, cfg.config.strict, &model)?;
        score_file(name, seed, entries).write(&run_dir.join("decisions.jsonl"))?;
        write_model(&model, &run_dir.join("model.svm"))?;
        Ok(strip_leaderboard(result))
    })?;
    let layer = chosen.expect("at least one seed");
    let reports: Vec<EvalReport> = runs.iter().map(|(_, r)| split_report(r)).collect();
    let aggregate = aggregate_seeds(&reports)?;
    let rows = vec![aggregate_row(name, &format!("layer {layer} tuned"), &aggregate)];
    let dir = cfg.out(format!("tune/{name}/layer{layer}"));
    write_text(&dir.join("summary.txt"), &results_table(&rows).render())?;
    print!("{}", results_table(&rows).render());
    write_artifact(
        cfg,
        &dir.join("summary.json"),
        "tune",
        &cfg.config.seeds,
        TuneSummary {
            pack: name.to_string(),
            layer,
            runs: runs.into_iter().map(|(seed, result)| TuneRun { seed, result }).collect(),
            aggregate,
            rows,
        },
    )
}

// fuse-early

#[derive(Clone, Serialize)]
struct Single {
    layer: u32,
    config: svm::SvmConfig,
    report: EvalReport,
}

#[derive(Clone, Serialize)]
struct EarlyRun {
    seed: u64,
    config: svm::SvmConfig,
    dim: usize,
    block_dims: Vec<usize>,
    report: EvalReport,
    audio_only: Single,
    text_only: Single,
}

#[derive(Serialize)]
struct EarlySummary {
    audio: String,
    text: String,
    runs: Vec<EarlyRun>,
    fused: SeedAggregate,
    audio_only: SeedAggregate,
    text_only: SeedAggregate,
    rows: Vec<ResultRow>,
}

pub fn fuse_early(cfg: &Loaded) -> CliResult {
    let params = cfg
        .config
        .fusion
        .early
        .clone()
        .ok_or_else(|| CliError::Validation("config has no fusion.early section".into()))?;
    let samples = load_corpus(cfg)?;
    let split = load_partition(cfg)?;
    let opts = search_options()?;
    let packs = &cfg.config.paths.packs;
    let single = |pack: &FeaturePack| -> CliResult<Single> {
        let layer = pack.final_layer();
        let view = align(pack, layer, &samples, &split, cfg.config.strict)?;
        let (r, _) = search_layer(&view, layer, &params.grid, &opts)?;
        Ok(Single {
            layer,
            config: r.best_config,
            report: split_report(&r),
        })
    };
    let mut runs = Vec::new();
    for &seed in &cfg.config.seeds {
        let audio = load_pack(&upstream(cfg.templated(&packs[&params.audio], seed))?)?;
        let text = load_pack(&upstream(cfg.templated(&packs[&params.text], seed))?)?;
        let fused = early_fuse(&audio, &text, &samples, &split, &params.grid, &opts, cfg.config.strict)?;
        runs.push(EarlyRun {
            seed,
            config: fused.config,
            dim: fused.dim,
            block_dims: fused.block_dims.clone(),
            report: fused.report.clone(),
            audio_only: single(&audio)?,
            text_only: single(&text)?,
        });
    }
    let agg = |f: &dyn Fn(&EarlyRun) -> EvalReport| aggregate_seeds(&runs.iter().map(f).collect::<Vec<_>>());
    let fused = agg(&|r| r.report.clone())?;
    let audio_only = agg(&|r| r.audio_only.report.clone())?;
    let text_only = agg(&|r| r.text_only.report.clone())?;
    let rows = vec![
        aggregate_row(&params.audio, "final layer", &audio_only),
        aggregate_row(&params.text, "final layer", &text_only),
        aggregate_row(&format!("{}+{}", params.audio, params.text), "early fusion", &fused),
    ];
    let dir = cfg.out("fusion/early");
    write_text(&dir.join("summary.txt"), &results_table(&rows).render())?;
    print!("{}", results_table(&rows).render());
    write_artifact(
        cfg,
        &dir.join("summary.json"),
        "fuse-early",
        &cfg.config.seeds,
        EarlySummary {
            audio: params.audio.clone(),
            text: params.text.clone(),
            runs,
            fused,
            audio_only,
            text_only,
            rows,
        },
    )
}

// fuse-late

#[derive(Serialize)]
struct SourceRun {
    name: String,
    threshold: f64,
    report: EvalReport,
}

#[derive(Serialize)]
struct LateRun {
    seed: u64,
    sources: Vec<SourceRun>,
    fused: LateFusionOutcome,
}

#[derive(Serialize)]
struct LateSummary {
    runs: Vec<LateRun>,
    sources: BTreeMap<String, SeedAggregate>,
    fused: SeedAggregate,
    rows: Vec<ResultRow>,
}

fn load_source(cfg: &Loaded, name: &str, kind: SourceKind, seed: u64) -> CliResult<ScoreSource> {
    let file = match kind {
        SourceKind::Scores => {
            let path = upstream(cfg.templated(&cfg.config.paths.scores[name], seed))?;
            ScoreFile::load(&path, name, seed, true)?
        }
        SourceKind::Probe => {
            let path = cfg.artifact(format!("probe/{name}/seed{seed}/decisions.jsonl"))?;
            ScoreFile::load(&path, name, seed, false)?
        }
    };
    Ok(ScoreSource {
        name: name.to_string(),
        scores: file.entries,
    })
}

pub fn fuse_late(cfg: &Loaded) -> CliResult {
    let params = cfg
        .config
        .fusion
        .late
        .clone()
        .ok_or_else(|| CliError::Validation("config has no fusion.late section".into()))?;
    if params.sources.is_empty() {
        return Err(CliError::Validation("fusion.late.sources is empty".into()));
    }
    let samples = load_corpus(cfg)?;
    let split = load_partition(cfg)?;
    let targets = FusionTargets::new(&samples, &split)?;
    let mut runs = Vec::new();
    for &seed in &cfg.config.seeds {
        let sources = params
            .sources
            .iter()
            .map(|s| load_source(cfg, &s.name, s.kind, seed))
            .collect::<CliResult<Vec<_>>>()?;
        let singles = sources
            .iter()
            .map(|s| evaluate_source(s, &params.rule, &targets))
            .collect::<Result<Vec<_>, _>>()?;
        let dev_uars: Vec<f64> = singles.iter().map(LateFusionOutcome::dev_uar).collect();
        let fused = late_fuse(&sources, &dev_uars, &params.rule, &targets)?;
        check_finite("late fusion", &fused.dev_scores)?;
        runs.push(LateRun {
            seed,
            sources: sources
                .iter()
                .zip(singles)
                .map(|(s, o)| SourceRun {
                    name: s.name.clone(),
                    threshold: o.threshold,
                    report: o.report,
                })
                .collect(),
            fused,
        });
    }
    let mut per_source = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, s) in params.sources.iter().enumerate() {
        let agg = aggregate_seeds(&runs.iter().map(|r| r.sources[i].report.clone()).collect::<Vec<_>>())?;
        rows.push(aggregate_row(&s.name, "single", &agg));
        per_source.insert(s.name.clone(), agg);
    }
    let fused = aggregate_seeds(&runs.iter().map(|r| r.fused.report.clone()).collect::<Vec<_>>())?;
    let names: Vec<&str> = params.sources.iter().map(|s| s.name.as_str()).collect();
    rows.push(aggregate_row(&names.join("+"), "late fusion", &fused));
    let dir = cfg.out("fusion/late");
    write_text(&dir.join("summary.txt"), &results_table(&rows).render())?;
    print!("{}", results_table(&rows).render());
    write_artifact(
        cfg,
        &dir.join("summary.json"),
        "fuse-late",
        &cfg.config.seeds,
        LateSummary {
            runs,
            sources: per_source,
            fused,
            rows,
        },
    )
}

// wer

#[derive(Serialize, Deserialize)]
struct WerSummary {
    normalizer: Normalizer,
    reports: Vec<WerReport>,
}

pub fn wer(cfg: &Loaded) -> CliResult {
    let samples = load_corpus(cfg)?;
    if cfg.config.paths.transcripts.is_empty() {
        return Err(CliError::Validation("no transcripts configured".into()));
    }
    let normalizer = Normalizer::default();
    let mut reports = Vec::new();
    for (source, path) in &cfg.config.paths.transcripts {
        let file = TranscriptFile::load(&upstream(cfg.resolve(path))?, source)?;
        let mut pairs = Vec::new();
        for s in &samples {
            match file.entries.get(&s.sample_id) {
                Some(h) => pairs.push((s.sample_id.as_str(), s.text.as_str(), h.as_str())),
                None if cfg.config.strict => {
                    return Err(probefuse::Error::CoverageMismatch(format!(
                        "transcripts {source} have no hypothesis for {}",
                        s.sample_id
                    ))
                    .into())
                }
                None => log::warn!("transcripts {source} skip {}", s.sample_id),
            }
        }
        reports.push(corpus_wer(source, pairs, &normalizer, false)?);
    }
    let table = wer_table(&reports).render();
    write_text(&cfg.out("wer.txt"), &table)?;
    print!("{table}");
    write_artifact(cfg, &cfg.out("wer.json"), "wer", &[], WerSummary { normalizer, reports })
}

// report

#[derive(Deserialize)]
struct RowsOnly {
    rows: Vec<ResultRow>,
}

fn summaries_under(dir: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "summary.json") {
                found.push(p);
            }
        }
    }
    found.sort();
    found
}

pub fn report(cfg: &Loaded) -> CliResult {
    let partition: PartitionFile = read_json(&cfg.artifact(PARTITION)?)?;
    let mut md = String::from("# Experiment report\n\n");
    md.push_str(&format!("Config hash `{}`, seeds {:?}.\n\n", cfg.hash, cfg.config.seeds));
    md.push_str("## Corpus\n\n");
    md.push_str(&corpus_table(&partition.stats).markdown());
    md.push_str(&format!(
        "\nSplit seed {}, {} restarts, objective {:.4}, tolerances met: {}.\n\n",
        partition.assignment.seed,
        partition.assignment.restarts,
        partition.assignment.objective,
        partition.assignment.constraints_met
    ));

    let wer_path = cfg.out("wer.json");
    if wer_path.exists() {
        let w: WerSummary = read_json(&wer_path)?;
        md.push_str("## Transcription\n\n");
        md.push_str(&wer_table(&w.reports).markdown());
        md.push('\n');
    }

    let sections = [
        ("Layer probing", "probe"),
        ("Tuned layers", "tune"),
        ("Early fusion", "fusion/early"),
        ("Late fusion", "fusion/late"),
    ];
    for (title, sub) in sections {
        let rows: Vec<ResultRow> = summaries_under(&cfg.out(sub))
            .iter()
            .map(|p| read_json::<RowsOnly>(p).map(|r| r.rows))
            .collect::<CliResult<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        if rows.is_empty() {
            continue;
        }
        md.push_str(&format!("## {title}\n\nUAR in percent, mean (±std) over seeds.\n\n"));
        md.push_str(&results_table(&rows).markdown());
        md.push('\n');
    }
    write_text(&cfg.out("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
