//! Plain-text and markdown tables for corpus statistics, probing, fusion
//! and WER results.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStats, GroupStats};
use crate::metrics::{MeanStd, WerReport};
use crate::probe::{LayerResult, ProbeResult};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i < w.len() {
                    w[i] = w[i].max(cell.chars().count());
                }
            }
        }
        w
    }

    /// Aligned columns; the first column is left-aligned, the rest right.
    pub fn render(&self) -> String {
        let w = self.widths();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, width) in w.iter().enumerate() {
                let cell = cells.get(i).map_or("", String::as_str);
                if i > 0 {
                    s.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(s, "{cell:<width$}");
                } else {
                    let _ = write!(s, "{cell:>width$}");
                }
            }
            s.trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&"-".repeat(w.iter().sum::<usize>() + 2 * w.len().saturating_sub(1)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn markdown(&self) -> String {
        let row = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        let mut out = row(&self.headers);
        let sep: Vec<String> = self
            .headers
            .iter()
            .enumerate()
            .map(|(i, _)| if i == 0 { ":--".into() } else { "--:".into() })
            .collect();
        out.push_str(&row(&sep));
        for r in &self.rows {
            out.push_str(&row(r));
        }
        out
    }
}

/// `H:MM:SS`, rounded to the nearest second.
pub fn hms(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!("{}:{:02}:{:02}", total / 3600, total / 60 % 60, total % 60)
}

/// A UAR as a percentage with two decimals.
pub fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn pct_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), pct)
}

/// `mean (±std)` in percent.
pub fn pct_mean_std(m: &MeanStd) -> String {
    format!("{:.2} (±{:.2})", 100.0 * m.mean, 100.0 * m.std)
}

fn stats_row(name: &str, g: &GroupStats) -> Vec<String> {
    vec![
        name.to_string(),
        format!("{} ({}, {})", g.speaker_count, g.male_speakers, g.female_speakers),
        g.sample_count.to_string(),
        format!("{} ({})", g.positive_count, pct_opt(g.positive_fraction)),
        match (g.mean_duration_s, g.std_duration_s) {
            (Some(m), Some(s)) => format!("{m:.2} ({s:.2})"),
            _ => "n/a".into(),
        },
        hms(g.total_duration_s),
    ]
}

/// Speakers, samples, positives and durations per partition.
pub fn corpus_table(stats: &CorpusStats) -> Table {
    let mut t = Table::new([
        "partition",
        "speakers (m, f)",
        "samples",
        "positive (%)",
        "mean dur. s (std)",
        "total dur.",
    ]);
    t.push(stats_row("train", &stats.train));
    t.push(stats_row("dev", &stats.dev));
    t.push(stats_row("test", &stats.test));
    t.push(stats_row("total", &stats.total));
    t
}

fn layer_row(model: &str, stage: &str, r: &LayerResult) -> Vec<String> {
    vec![
        model.to_string(),
        stage.to_string(),
        r.layer.to_string(),
        r.best_config.kernel.as_str().to_string(),
        pct(r.dev_uar),
        pct(r.test_uar),
    ]
}

/// Stage-1 rows for every layer followed by the stage-2 rows.
pub fn probe_table(results: &[ProbeResult]) -> Table {
    let mut t = Table::new(["model", "stage", "layer", "kernel", "dev UAR", "test UAR"]);
    for p in results {
        for r in &p.stage1 {
            t.push(layer_row(&p.model_id, "1", r));
        }
        for r in &p.stage2 {
            let stage = if r.layer == p.selected_layer { "2 (best)" } else { "2 (final)" };
            t.push(layer_row(&p.model_id, stage, r));
        }
    }
    t
}

/// One row of a results table: source, method, dev and test UAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub source: String,
    pub method: String,
    pub dev: String,
    pub test: String,
}

pub fn results_table(rows: &[ResultRow]) -> Table {
    let mut t = Table::new(["source", "method", "dev UAR", "test UAR"]);
    for r in rows {
        t.push([r.source.clone(), r.method.clone(), r.dev.clone(), r.test.clone()]);
    }
    t
}

pub fn wer_table(reports: &[WerReport]) -> Table {
    let mut t = Table::new(["source", "WER (%)", "sub", "del", "ins", "ref words", "samples"]);
    for r in reports {
        t.push([
            r.source_id.clone(),
            pct(r.wer),
            r.counts.substitutions.to_string(),
            r.counts.deletions.to_string(),
            r.counts.insertions.to_string(),
            r.counts.reference_words.to_string(),
            r.samples.to_string(),
        ]);
    }
    t
}
