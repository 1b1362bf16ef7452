#![allow(dead_code)]

pub mod fixture;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn probefuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probefuse"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Runs a command and panics with its stderr unless it succeeds.
pub fn ok(args: &[&str]) -> Output {
    let out = probefuse(args);
    assert!(
        out.status.success(),
        "probefuse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// The checked-in synthetic experiment.
pub fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/experiment")
}

pub fn fixture_config() -> String {
    fixture_dir().join("config.json").display().to_string()
}

/// Relative paths of all files under `dir`, sorted.
pub fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
