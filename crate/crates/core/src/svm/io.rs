//! Binary model files.
//!
//! Layout (little-endian): `"SVM1"`, u32 version, then the configuration,
//! resolved kernel, bias, dimensions, optional standardization, support
//! indices, dual coefficients, support rows, optional primal weights and
//! the training summary. All reals are stored as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{Gamma, Kernel, KernelKind, StandardizationParams, SvmConfig, SvmModel, TrainSummary};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SVM1";
pub const MODEL_VERSION: u32 = 1;

fn kind_tag(k: KernelKind) -> u8 {
    match k {
        KernelKind::Linear => 0,
        KernelKind::Rbf => 1,
        KernelKind::Sigmoid => 2,
        KernelKind::Polynomial => 3,
    }
}

fn kind_from_tag(t: u8) -> Option<KernelKind> {
    KernelKind::ALL.get(t as usize).copied()
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    v.iter().try_for_each(|x| w.write_f64::<LE>(*x))
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    (0..n).map(|_| r.read_f64::<LE>()).collect()
}

pub fn write_model(model: &SvmModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_body(model, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_body(m: &SvmModel, w: &mut impl Write) -> std::io::Result<()> {
    let cfg = &m.config;
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LE>(MODEL_VERSION)?;

    w.write_f64::<LE>(cfg.c)?;
    w.write_u8(kind_tag(cfg.kernel))?;
    match cfg.gamma {
        Gamma::Scale => {
            w.write_u8(1)?;
            w.write_f64::<LE>(0.0)?;
        }
        Gamma::Value(g) => {
            w.write_u8(0)?;
            w.write_f64::<LE>(g)?;
        }
    }
    w.write_u32::<LE>(cfg.degree)?;
    w.write_f64::<LE>(cfg.coef0)?;
    w.write_f64::<LE>(cfg.positive_class_weight)?;
    w.write_f64::<LE>(cfg.tolerance)?;
    w.write_u64::<LE>(cfg.max_iterations.map_or(0, |v| v as u64))?;
    w.write_u64::<LE>(cfg.seed)?;

    w.write_u8(kind_tag(m.kernel.kind))?;
    w.write_f64::<LE>(m.kernel.gamma)?;
    w.write_u32::<LE>(m.kernel.degree)?;
    w.write_f64::<LE>(m.kernel.coef0)?;
    w.write_f64::<LE>(m.bias)?;

    let (n_sv, dim) = m.support_vectors.dim();
    w.write_u32::<LE>(dim as u32)?;
    w.write_u32::<LE>(n_sv as u32)?;
    match &m.standardization {
        Some(p) => {
            w.write_u8(1)?;
            write_f64s(w, &p.mean)?;
            write_f64s(w, &p.scale)?;
        }
        None => w.write_u8(0)?,
    }
    for &i in &m.support_indices {
        w.write_u32::<LE>(i as u32)?;
    }
    write_f64s(w, &m.dual_coef)?;
    for v in m.support_vectors.iter() {
        w.write_f64::<LE>(*v)?;
    }
    match &m.weights {
        Some(wt) => {
            w.write_u8(1)?;
            write_f64s(w, wt)?;
        }
        None => w.write_u8(0)?,
    }
    w.write_u64::<LE>(m.summary.iterations as u64)?;
    w.write_f64::<LE>(m.summary.violation)?;
    w.write_u8(m.summary.converged as u8)?;
    w.write_f64::<LE>(m.summary.dual_objective)
}

pub fn read_model(path: &Path) -> Result<SvmModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
        });
    }
    let version = r.read_u32::<LE>().map_err(|e| Error::io(path, e))?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: version,
            expected: MODEL_VERSION,
        });
    }
    read_body(&mut r, path)
}

fn read_body(r: &mut impl Read, path: &Path) -> Result<SvmModel> {
    let io = |e| Error::io(path, e);
    let bad_tag = |t: u8| Error::InvalidConfig(format!("{}: unknown kernel tag {t}", path.display()));

    let c = r.read_f64::<LE>().map_err(io)?;
    let tag = r.read_u8().map_err(io)?;
    let kernel_kind = kind_from_tag(tag).ok_or_else(|| bad_tag(tag))?;
    let is_scale = r.read_u8().map_err(io)? == 1;
    let gamma_value = r.read_f64::<LE>().map_err(io)?;
    let degree = r.read_u32::<LE>().map_err(io)?;
    let coef0 = r.read_f64::<LE>().map_err(io)?;
    let positive_class_weight = r.read_f64::<LE>().map_err(io)?;
    let tolerance = r.read_f64::<LE>().map_err(io)?;
    let max_iterations = match r.read_u64::<LE>().map_err(io)? {
        0 => None,
        v => Some(v as usize),
    };
    let seed = r.read_u64::<LE>().map_err(io)?;
    let config = SvmConfig {
        c,
        kernel: kernel_kind,
        gamma: if is_scale {
            Gamma::Scale
        } else {
            Gamma::Value(gamma_value)
        },
        degree,
        coef0,
        positive_class_weight,
        tolerance,
        max_iterations,
        seed,
    };

    let tag = r.read_u8().map_err(io)?;
    let kernel = Kernel {
        kind: kind_from_tag(tag).ok_or_else(|| bad_tag(tag))?,
        gamma: r.read_f64::<LE>().map_err(io)?,
        degree: r.read_u32::<LE>().map_err(io)?,
        coef0: r.read_f64::<LE>().map_err(io)?,
    };
    let bias = r.read_f64::<LE>().map_err(io)?;
    let dim = r.read_u32::<LE>().map_err(io)? as usize;
    let n_sv = r.read_u32::<LE>().map_err(io)? as usize;
    let standardization = match r.read_u8().map_err(io)? {
        1 => Some(StandardizationParams {
            mean: read_f64s(r, dim).map_err(io)?,
            scale: read_f64s(r, dim).map_err(io)?,
        }),
        _ => None,
    };
    let support_indices = (0..n_sv)
        .map(|_| r.read_u32::<LE>().map(|v| v as usize))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let dual_coef = read_f64s(r, n_sv).map_err(io)?;
    let rows = read_f64s(r, n_sv * dim).map_err(io)?;
    let support_vectors = Array2::from_shape_vec((n_sv, dim), rows).expect("sized");
    let weights = match r.read_u8().map_err(io)? {
        1 => Some(read_f64s(r, dim).map_err(io)?),
        _ => None,
    };
    let summary = TrainSummary {
        iterations: r.read_u64::<LE>().map_err(io)? as usize,
        violation: r.read_f64::<LE>().map_err(io)?,
        converged: r.read_u8().map_err(io)? == 1,
        dual_objective: r.read_f64::<LE>().map_err(io)?,
    };
    Ok(SvmModel {
        config,
        kernel,
        support_indices,
        support_vectors,
        dual_coef,
        bias,
        weights,
        standardization,
        summary,
    })
}
