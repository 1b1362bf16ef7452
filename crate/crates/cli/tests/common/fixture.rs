use std::fs;
use std::path::{Path, PathBuf};

use probefuse::corpus::{assemble, CallRecord, SentenceSample};
use probefuse::features::write_pack;
use probefuse::synth::{layered_pack, noisy_transcripts, score_file, synthetic_calls, CorpusSpec};

pub const SEEDS: [u64; 2] = [1, 2];

/// Writes a small synthetic experiment under `dir` and returns the config path.
///
/// The audio pack is pure noise, the text pack carries the label on its
/// final layer and `planted` has its signal on layer 3 of 6.
pub fn build_experiment(dir: &Path) -> PathBuf {
    let spec = CorpusSpec {
        speakers: 30,
        calls_per_speaker: 2,
        sentences_per_call: 10,
        unaligned_rate: 0.02,
        ..Default::default()
    };
    let calls = synthetic_calls(&spec, 7);
    write_calls(&dir.join("calls.jsonl"), &calls);
    let samples = assemble(&calls).unwrap().samples;
    write_inputs(dir, &samples);
    let config = dir.join("config.json");
    fs::write(&config, CONFIG).unwrap();
    config
}

pub fn write_calls(path: &Path, calls: &[CallRecord]) {
    probefuse::jsonl::write(path, calls).unwrap();
}

fn write_inputs(dir: &Path, samples: &[SentenceSample]) {
    let packs = dir.join("packs");
    fs::create_dir_all(dir.join("scores")).unwrap();
    fs::create_dir_all(dir.join("transcripts")).unwrap();
    let audio = layered_pack("audio", samples, &[1, 2, 3, 4], &[], 8, 101).unwrap();
    write_pack(&audio, &packs.join("audio")).unwrap();
    let planted = layered_pack("planted", samples, &[1, 2, 3, 4, 5, 6], &[(3, 3.0)], 8, 102).unwrap();
    write_pack(&planted, &packs.join("planted")).unwrap();
    for seed in SEEDS {
        let text = layered_pack("text", samples, &[6, 12], &[(12, 1.5)], 10, 200 + seed).unwrap();
        write_pack(&text, &packs.join(format!("text_seed{seed}"))).unwrap();
        score_file("audio_p", seed, samples, 0.5)
            .write(&dir.join(format!("scores/audio_p_seed{seed}.jsonl")))
            .unwrap();
        score_file("text_p", 10 + seed, samples, 2.0)
            .write(&dir.join(format!("scores/text_p_seed{seed}.jsonl")))
            .unwrap();
    }
    noisy_transcripts("asr_a", samples, 0.05, 3)
        .write(&dir.join("transcripts/asr_a.jsonl"))
        .unwrap();
    noisy_transcripts("asr_b", samples, 0.2, 4)
        .write(&dir.join("transcripts/asr_b.jsonl"))
        .unwrap();
}

const CONFIG: &str = r#"{
  "paths": {
    "calls": "calls.jsonl",
    "packs": {
      "audio": "packs/audio",
      "planted": "packs/planted",
      "text": "packs/text_seed{seed}"
    },
    "scores": {
      "audio_p": "scores/audio_p_seed{seed}.jsonl",
      "text_p": "scores/text_p_seed{seed}.jsonl"
    },
    "transcripts": {
      "asr_a": "transcripts/asr_a.jsonl",
      "asr_b": "transcripts/asr_b.jsonl"
    },
    "output_dir": "out"
  },
  "split": {"seed": 1, "restarts": 300},
  "grids": {
    "stage1": {"kernels": ["linear"], "c": [0.01, 1.0], "positive_class_weight": ["balanced"]},
    "stage2": {
      "kernels": ["linear", "rbf"],
      "c": [0.1, 1.0, 10.0],
      "positive_class_weight": [1.0, "balanced"],
      "gamma": ["scale", 0.1]
    }
  },
  "fusion": {
    "early": {
      "audio": "audio",
      "text": "text",
      "grid": {"kernels": ["linear"], "c": [0.01, 0.1, 1.0], "positive_class_weight": ["balanced"]}
    },
    "late": {
      "sources": [
        {"name": "audio_p", "kind": "scores"},
        {"name": "text_p", "kind": "scores"},
        {"name": "text", "kind": "probe"}
      ]
    }
  },
  "seeds": [1, 2]
}
"#;

