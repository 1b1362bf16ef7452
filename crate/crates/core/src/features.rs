//! Feature packs, score files and transcript files.
//!
//! A feature pack is a directory:
//!
//! ```text
//! manifest.json     {format_version, model_id, pooling, dim, layers, sample_count}
//! ids.txt           one sample id per line, in row order
//! layer_<k>.fpk     "FPK1" | u32 version | u32 rows | u32 cols | rows*cols f32, all little-endian
//! ```
//!
//! Matrices are kept in single precision on disk and in [`FeaturePack`];
//! [`align`] widens them to `f64` for training.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, SentenceSample};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::splitter::{Partition, PartitionAssignment};

pub const FORMAT_VERSION: u32 = 1;
pub const LAYER_MAGIC: &[u8; 4] = b"FPK1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    ClsToken,
    MeanTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackManifest {
    pub format_version: u32,
    pub model_id: String,
    pub pooling: Pooling,
    pub dim: usize,
    pub layers: Vec<u32>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePack {
    model_id: String,
    pooling: Pooling,
    dim: usize,
    sample_ids: Vec<String>,
    layers: Vec<(u32, Array2<f32>)>,
}

impl FeaturePack {
    /// Builds a pack, checking that ids are unique and every layer matrix is
    /// `sample_ids.len() x dim` with finite entries.
    pub fn new(
        model_id: impl Into<String>,
        pooling: Pooling,
        sample_ids: Vec<String>,
        layers: Vec<(u32, Array2<f32>)>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        let dim = layers.first().map(|(_, m)| m.ncols()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "pack {model_id} needs at least one layer with positive dimension"
            )));
        }
        let mut seen = HashSet::new();
        for id in &sample_ids {
            if id.contains('\n') || id.is_empty() {
                return Err(Error::InvalidConfig(format!("unusable sample id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSampleId(id.clone()));
            }
        }
        let mut layer_ids = HashSet::new();
        for (layer, m) in &layers {
            let context = format!("{model_id} layer {layer}");
            if !layer_ids.insert(*layer) {
                return Err(Error::InvalidConfig(format!("{context} appears twice")));
            }
            if m.nrows() != sample_ids.len() {
                return Err(Error::RowCountMismatch {
                    context,
                    rows: m.nrows(),
                    ids: sample_ids.len(),
                });
            }
            if m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: dim,
                    found: m.ncols(),
                });
            }
            if let Some(((row, col), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite { context, row, col });
            }
        }
        Ok(FeaturePack {
            model_id,
            pooling,
            dim,
            sample_ids,
            layers,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }
    pub fn pooling(&self) -> Pooling {
        self.pooling
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }
    pub fn layer_ids(&self) -> Vec<u32> {
        self.layers.iter().map(|(l, _)| *l).collect()
    }
    /// Highest layer id.
    pub fn final_layer(&self) -> u32 {
        self.layers.iter().map(|(l, _)| *l).max().expect("non-empty")
    }

    pub fn layer(&self, layer: u32) -> Result<&Array2<f32>> {
        self.layers
            .iter()
            .find(|(l, _)| *l == layer)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::MissingLayer {
                model_id: self.model_id.clone(),
                layer: layer.into(),
            })
    }

    pub fn manifest(&self) -> PackManifest {
        PackManifest {
            format_version: FORMAT_VERSION,
            model_id: self.model_id.clone(),
            pooling: self.pooling,
            dim: self.dim,
            layers: self.layer_ids(),
            sample_count: self.sample_ids.len(),
        }
    }
}

fn layer_path(dir: &Path, layer: u32) -> PathBuf {
    dir.join(format!("layer_{layer}.fpk"))
}

pub fn write_pack(pack: &FeaturePack, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let manifest = serde_json::to_string_pretty(&pack.manifest())
        .map_err(|e| Error::json(&manifest_path, 0, e))?;
    fs::write(&manifest_path, manifest + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    let ids_path = dir.join("ids.txt");
    let mut ids = String::new();
    for id in &pack.sample_ids {
        ids.push_str(id);
        ids.push('\n');
    }
    fs::write(&ids_path, ids).map_err(|e| Error::io(&ids_path, e))?;

    for (layer, m) in &pack.layers {
        let path = layer_path(dir, *layer);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        w.write_all(LAYER_MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
        w.write_u32::<LittleEndian>(m.nrows() as u32).map_err(io)?;
        w.write_u32::<LittleEndian>(m.ncols() as u32).map_err(io)?;
        for v in m.iter() {
            w.write_f32::<LittleEndian>(*v).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    Ok(())
}

fn read_layer(path: &Path, expect_rows: usize, expect_cols: usize) -> Result<Array2<f32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let context = path.display().to_string();
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            context,
            found: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != LAYER_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
        });
    }
    let version = LittleEndian::read_u32(&bytes[4..8]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let rows = LittleEndian::read_u32(&bytes[8..12]) as usize;
    let cols = LittleEndian::read_u32(&bytes[12..16]) as usize;
    if rows != expect_rows {
        return Err(Error::RowCountMismatch {
            context,
            rows,
            ids: expect_rows,
        });
    }
    if cols != expect_cols {
        return Err(Error::DimensionMismatch {
            context,
            expected: expect_cols,
            found: cols,
        });
    }
    let expected = HEADER_LEN + rows * cols * 4;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            context,
            found: bytes.len(),
            expected,
        });
    }
    let mut values = vec![0f32; rows * cols];
    LittleEndian::read_f32_into(&bytes[HEADER_LEN..], &mut values);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context,
            row: i / cols,
            col: i % cols,
        });
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

/// Loads and validates a pack directory.
pub fn load_pack(dir: &Path) -> Result<FeaturePack> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: PackManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, 1, e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            path: manifest_path,
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let ids_path = dir.join("ids.txt");
    let ids_text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let sample_ids: Vec<String> = ids_text.lines().map(str::to_string).collect();
    if sample_ids.len() != manifest.sample_count {
        return Err(Error::RowCountMismatch {
            context: format!("{} (manifest sample_count)", ids_path.display()),
            rows: manifest.sample_count,
            ids: sample_ids.len(),
        });
    }
    let layers = manifest
        .layers
        .iter()
        .map(|&l| Ok((l, read_layer(&layer_path(dir, l), sample_ids.len(), manifest.dim)?)))
        .collect::<Result<Vec<_>>>()?;
    FeaturePack::new(manifest.model_id, manifest.pooling, sample_ids, layers)
}

/// Concatenates one chosen layer from each pack, row by row in the given
/// pack order. Rows follow the first pack's sample order; the result is a
/// single-layer pack carrying the first pack's chosen layer id.
pub fn concat(parts: &[(&FeaturePack, u32)]) -> Result<FeaturePack> {
    let (first, first_layer) = *parts
        .first()
        .ok_or_else(|| Error::InvalidConfig("concat needs at least one pack".into()))?;
    let mut models = HashSet::new();
    let first_ids: HashSet<&str> = first.sample_ids.iter().map(String::as_str).collect();
    for (pack, _) in parts {
        if !models.insert(pack.model_id.as_str()) {
            return Err(Error::DuplicateModelId(pack.model_id.clone()));
        }
        if pack.sample_ids.len() != first.sample_ids.len()
            || pack.sample_ids.iter().any(|id| !first_ids.contains(id.as_str()))
        {
            return Err(Error::IdMismatch {
                first: first.model_id.clone(),
                other: pack.model_id.clone(),
            });
        }
    }
    let total_dim: usize = parts.iter().map(|(p, _)| p.dim).sum();
    let n = first.sample_ids.len();
    let mut out = Array2::<f32>::zeros((n, total_dim));
    let mut offset = 0;
    for (pack, layer) in parts {
        let m = pack.layer(*layer)?;
        let row_of: HashMap<&str, usize> = pack
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        for (i, id) in first.sample_ids.iter().enumerate() {
            out.slice_mut(s![i, offset..offset + pack.dim])
                .assign(&m.row(row_of[id.as_str()]));
        }
        offset += pack.dim;
    }
    let model_id = parts
        .iter()
        .map(|(p, _)| p.model_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    FeaturePack::new(
        model_id,
        first.pooling,
        first.sample_ids.clone(),
        vec![(first_layer, out)],
    )
}

/// Rows of one partition, in corpus manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub sample_ids: Vec<String>,
    pub features: Array2<f64>,
    /// `+1` flattery, `-1` otherwise.
    pub labels: Vec<i8>,
    pub genders: Vec<Gender>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
    pub fn positives(&self) -> Vec<bool> {
        self.labels.iter().map(|&y| y > 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetView {
    pub train: SplitData,
    pub dev: SplitData,
    pub test: SplitData,
    /// Corpus samples absent from the pack (non-strict mode only).
    pub missing: Vec<String>,
}

impl DatasetView {
    pub fn split(&self, p: Partition) -> &SplitData {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }

    pub fn dim(&self) -> usize {
        self.train.features.ncols()
    }
}

/// Joins one pack layer with the corpus manifest and partition.
pub fn align(
    pack: &FeaturePack,
    layer: u32,
    samples: &[SentenceSample],
    partition: &PartitionAssignment,
    strict: bool,
) -> Result<DatasetView> {
    let matrix = pack.layer(layer)?;
    let row_of: HashMap<&str, usize> = pack
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut rows: [Vec<(usize, &SentenceSample)>; 3] = Default::default();
    let mut missing = Vec::new();
    for s in samples {
        let p = partition
            .partition_of(&s.speaker_id)
            .ok_or_else(|| Error::UnknownSpeaker(s.speaker_id.clone()))?;
        match row_of.get(s.sample_id.as_str()) {
            Some(&r) => rows[p.index()].push((r, s)),
            None if strict => return Err(Error::MissingSample(s.sample_id.clone())),
            None => missing.push(s.sample_id.clone()),
        }
    }
    if !missing.is_empty() {
        log::warn!(
            "{} corpus samples missing from pack {}",
            missing.len(),
            pack.model_id
        );
    }
    let build = |part: &[(usize, &SentenceSample)]| {
        let mut features = Array2::<f64>::zeros((part.len(), pack.dim));
        for (i, (r, _)) in part.iter().enumerate() {
            features
                .row_mut(i)
                .assign(&matrix.row(*r).mapv(f64::from));
        }
        SplitData {
            sample_ids: part.iter().map(|(_, s)| s.sample_id.clone()).collect(),
            features,
            labels: part.iter().map(|(_, s)| s.label.sign()).collect(),
            genders: part.iter().map(|(_, s)| s.speaker_gender).collect(),
        }
    };
    Ok(DatasetView {
        train: build(&rows[0]),
        dev: build(&rows[1]),
        test: build(&rows[2]),
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreLine {
    sample_id: String,
    score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TranscriptLine {
    sample_id: String,
    text: String,
}

/// Per-sample positive-class scores of one model and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub model_id: String,
    pub seed: u64,
    pub entries: BTreeMap<String, f64>,
}

impl ScoreFile {
    /// Reads `{sample_id, score}` lines. With `bounded`, every score must be
    /// a probability in `[0, 1]`; raw decision values are read unbounded.
    pub fn load(path: &Path, model_id: &str, seed: u64, bounded: bool) -> Result<Self> {
        let lines: Vec<ScoreLine> = jsonl::read(path)?;
        let mut entries = BTreeMap::new();
        for l in lines {
            let in_range = (0.0..=1.0).contains(&l.score);
            if !l.score.is_finite() || (bounded && !in_range) {
                return Err(Error::ScoreOutOfRange {
                    context: path.display().to_string(),
                    sample_id: l.sample_id,
                    value: l.score,
                });
            }
            if entries.insert(l.sample_id.clone(), l.score).is_some() {
                return Err(Error::DuplicateSampleId(l.sample_id));
            }
        }
        Ok(ScoreFile {
            model_id: model_id.to_string(),
            seed,
            entries,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let lines: Vec<ScoreLine> = self
            .entries
            .iter()
            .map(|(id, &score)| ScoreLine {
                sample_id: id.clone(),
                score,
            })
            .collect();
        jsonl::write(path, &lines)
    }
}

/// Hypothesis text per sample for one transcript source.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptFile {
    pub source_id: String,
    pub entries: BTreeMap<String, String>,
}

impl TranscriptFile {
    pub fn load(path: &Path, source_id: &str) -> Result<Self> {
        let lines: Vec<TranscriptLine> = jsonl::read(path)?;
        let mut entries = BTreeMap::new();
        for l in lines {
            if entries.insert(l.sample_id.clone(), l.text).is_some() {
                return Err(Error::DuplicateSampleId(l.sample_id));
            }
        }
        Ok(TranscriptFile {
            source_id: source_id.to_string(),
            entries,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let lines: Vec<TranscriptLine> = self
            .entries
            .iter()
            .map(|(id, text)| TranscriptLine {
                sample_id: id.clone(),
                text: text.clone(),
            })
            .collect();
        jsonl::write(path, &lines)
    }
}
