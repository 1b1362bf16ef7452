//! Writes a small synthetic experiment (calls, packs, score files,
//! transcripts and config.json) into the given directory.
//!
//! cargo run -p probefuse-cli --example demo_experiment -- /tmp/demo

#[path = "../tests/common/fixture.rs"]
mod fixture;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).expect("create output directory");
    let config = fixture::build_experiment(&dir);
    println!("{}", config.display());
}
