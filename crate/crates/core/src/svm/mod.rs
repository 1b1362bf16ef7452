//! Binary kernel SVM with per-class box constraints.
//!
//! Training solves the soft-margin dual with an SMO working-set solver.
//! Positive samples get the upper bound `C * positive_class_weight`,
//! negatives `C`. For the linear kernel the trained model additionally
//! collapses its support vectors into a primal weight vector.

mod cache;
mod io;
mod kernel;
mod smo;
mod standardize;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::DEFAULT_CACHE_BYTES;
pub use io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use kernel::{Kernel, KernelKind};
pub use standardize::{standardize_apply, standardize_fit, StandardizationParams};

/// Kernel coefficient: a number, or `"scale"` = 1 / (dim * var(X)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "GammaRepr", into = "GammaRepr")]
pub enum Gamma {
    Scale,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Value(f64),
    Named(ScaleTag),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ScaleTag {
    Scale,
}

impl From<GammaRepr> for Gamma {
    fn from(r: GammaRepr) -> Self {
        match r {
            GammaRepr::Value(v) => Gamma::Value(v),
            GammaRepr::Named(ScaleTag::Scale) => Gamma::Scale,
        }
    }
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Value(v) => GammaRepr::Value(v),
            Gamma::Scale => GammaRepr::Named(ScaleTag::Scale),
        }
    }
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gamma::Scale => f.write_str("scale"),
            Gamma::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelKind,
    pub gamma: Gamma,
    pub degree: u32,
    pub coef0: f64,
    pub positive_class_weight: f64,
    pub tolerance: f64,
    /// `None` means `max(10 * n, 10_000)`.
    pub max_iterations: Option<usize>,
    /// Carried with the configuration; the solver itself draws no random
    /// numbers, so training is deterministic for any seed.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: KernelKind::Linear,
            gamma: Gamma::Scale,
            degree: 3,
            coef0: 0.0,
            positive_class_weight: 1.0,
            tolerance: 1e-3,
            max_iterations: None,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn linear(c: f64) -> Self {
        SvmConfig {
            c,
            ..Default::default()
        }
    }

    pub fn with_kernel(kernel: KernelKind, c: f64, gamma: Gamma) -> Self {
        SvmConfig {
            c,
            kernel,
            gamma,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if !(self.positive_class_weight > 0.0 && self.positive_class_weight.is_finite()) {
            return bad(format!(
                "positive_class_weight must be positive, got {}",
                self.positive_class_weight
            ));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if let Gamma::Value(g) = self.gamma {
            if self.kernel.uses_gamma() && !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        if self.kernel.uses_degree() && self.degree < 2 {
            return bad(format!("polynomial degree must be >= 2, got {}", self.degree));
        }
        Ok(())
    }

    /// Resolves `gamma = scale` against the (already standardized) training
    /// matrix and drops parameters the kernel does not use.
    pub fn resolve_kernel(&self, x: ArrayView2<'_, f64>) -> Kernel {
        let gamma = match self.gamma {
            Gamma::Value(g) => g,
            Gamma::Scale => {
                let n = x.len() as f64;
                let mean = x.sum() / n;
                let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (x.ncols() as f64 * var)
                } else {
                    1.0
                }
            }
        };
        Kernel {
            kind: self.kernel,
            gamma: if self.kernel.uses_gamma() { gamma } else { 1.0 },
            degree: if self.kernel.uses_degree() { self.degree } else { 1 },
            coef0: if self.kernel.uses_coef0() { self.coef0 } else { 0.0 },
        }
    }

    /// Box constraint for a sample with label `y`.
    pub fn upper_bound(&self, y: i8) -> f64 {
        if y > 0 {
            self.c * self.positive_class_weight
        } else {
            self.c
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    /// Largest KKT violation `m(a) - M(a)` at exit.
    pub violation: f64,
    pub converged: bool,
    pub dual_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub config: SvmConfig,
    pub kernel: Kernel,
    /// Row indices of the support vectors in the training matrix.
    pub support_indices: Vec<usize>,
    pub support_vectors: Array2<f64>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Primal weights, linear kernel only.
    pub weights: Option<Vec<f64>>,
    pub standardization: Option<StandardizationParams>,
    pub summary: TrainSummary,
}

fn check_labels(x: ArrayView2<'_, f64>, y: &[i8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::InvalidLabel(bad.into()));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::SingleClass);
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidConfig("feature dimension is zero".into()));
    }
    if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "svm training matrix".into(),
            row,
            col,
        });
    }
    Ok(())
}

/// Trains on `x` as given (callers standardize beforehand).
pub fn train(x: ArrayView2<'_, f64>, y: &[i8], cfg: &SvmConfig) -> Result<SvmModel> {
    train_with_cache(x, y, cfg, DEFAULT_CACHE_BYTES)
}

pub fn train_with_cache(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    cfg: &SvmConfig,
    cache_bytes: usize,
) -> Result<SvmModel> {
    cfg.validate()?;
    check_labels(x, y)?;
    let n = y.len();
    let kernel = cfg.resolve_kernel(x);
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let upper: Vec<f64> = y.iter().map(|&v| cfg.upper_bound(v)).collect();
    let max_iterations = cfg.max_iterations.unwrap_or((10 * n).max(10_000));

    let mut cache = cache::KernelCache::new(x, kernel, cache_bytes);
    let out = smo::solve(&mut cache, &yf, &upper, cfg.tolerance, max_iterations);
    if !out.converged {
        log::warn!(
            "svm ({} kernel, C={}) stopped after {} iterations with violation {:.3e}",
            kernel.kind.as_str(),
            cfg.c,
            out.iterations,
            out.violation
        );
    }

    let support_indices: Vec<usize> = (0..n).filter(|&i| out.alpha[i] > 0.0).collect();
    let dual_coef: Vec<f64> = support_indices.iter().map(|&i| out.alpha[i] * yf[i]).collect();
    let support_vectors = x.select(ndarray::Axis(0), &support_indices);
    let weights = (kernel.kind == KernelKind::Linear).then(|| {
        let mut w = vec![0.0; x.ncols()];
        for (row, coef) in support_vectors.rows().into_iter().zip(&dual_coef) {
            for (wk, v) in w.iter_mut().zip(row) {
                *wk += coef * v;
            }
        }
        w
    });

    Ok(SvmModel {
        config: *cfg,
        kernel,
        support_indices,
        support_vectors,
        dual_coef,
        bias: out.bias,
        weights,
        standardization: None,
        summary: TrainSummary {
            iterations: out.iterations,
            violation: out.violation,
            converged: out.converged,
            dual_objective: out.objective,
        },
    })
}

/// Standardizes `x` with its own moments, trains, and stores the
/// standardization in the model so [`decision`] accepts raw rows.
pub fn fit(x: ArrayView2<'_, f64>, y: &[i8], cfg: &SvmConfig, cache_bytes: usize) -> Result<SvmModel> {
    let params = standardize_fit(x)?;
    let z = standardize_apply(&params, x)?;
    let mut model = train_with_cache(z.view(), y, cfg, cache_bytes)?;
    model.standardization = Some(params);
    Ok(model)
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    fn raw_decision(&self, row: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => kernel::dot(w, row) + self.bias,
            None => {
                self.support_vectors
                    .rows()
                    .into_iter()
                    .zip(&self.dual_coef)
                    .map(|(sv, c)| c * self.kernel.eval(sv.as_slice().expect("contiguous"), row))
                    .sum::<f64>()
                    + self.bias
            }
        }
    }
}

/// `sum_i alpha_i y_i K(x_i, x) + b` for every row of `x`.
pub fn decision(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        return Ok(Vec::new());
    }
    if x.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "svm decision".into(),
            expected: model.dim(),
            found: x.ncols(),
        });
    }
    let z = match &model.standardization {
        Some(p) => standardize_apply(p, x)?,
        None => x.as_standard_layout().into_owned(),
    };
    Ok(z.rows()
        .into_iter()
        .map(|r| model.raw_decision(r.as_slice().expect("standard layout")))
        .collect())
}

/// `+1` where the decision value is strictly positive, `-1` otherwise.
pub fn predict(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Vec<i8>> {
    Ok(decision(model, x)?
        .into_iter()
        .map(|d| if d > 0.0 { 1 } else { -1 })
        .collect())
}
