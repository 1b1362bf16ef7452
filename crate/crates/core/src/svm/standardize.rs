use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    /// Population standard deviation, replaced by 1 for constant features.
    pub scale: Vec<f64>,
}

fn check_finite(x: &ArrayView2<'_, f64>, context: &str) -> Result<()> {
    match x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFinite {
            context: context.to_string(),
            row,
            col,
        }),
        None => Ok(()),
    }
}

pub fn standardize_fit(train: ArrayView2<'_, f64>) -> Result<StandardizationParams> {
    if train.nrows() == 0 {
        return Err(Error::EmptyPartition("standardization needs at least one row"));
    }
    check_finite(&train, "standardize_fit")?;
    let mean = train.mean_axis(Axis(0)).expect("non-empty");
    let scale = train
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    Ok(StandardizationParams {
        mean: mean.to_vec(),
        scale: scale.to_vec(),
    })
}

pub fn standardize_apply(params: &StandardizationParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != params.mean.len() {
        return Err(Error::DimensionMismatch {
            context: "standardize_apply".into(),
            expected: params.mean.len(),
            found: x.ncols(),
        });
    }
    check_finite(&x, "standardize_apply")?;
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&params.mean).zip(&params.scale) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_column_becomes_zero() {
        let x = array![[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]];
        let p = standardize_fit(x.view()).unwrap();
        let z = standardize_apply(&p, x.view()).unwrap();
        assert!(z.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standard_column_unchanged() {
        let x = array![[-1.0], [1.0]];
        let p = standardize_fit(x.view()).unwrap();
        assert_eq!(p.mean, vec![0.0]);
        assert_eq!(p.scale, vec![1.0]);
        assert_eq!(standardize_apply(&p, x.view()).unwrap(), x);
    }

    #[test]
    fn random_matrix_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-10.0..10.0));
        let p = standardize_fit(x.view()).unwrap();
        let z = standardize_apply(&p, x.view()).unwrap();
        for col in z.columns() {
            let mean = col.sum() / 5.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let x = array![[1.0, f64::NAN]];
        assert!(matches!(
            standardize_fit(x.view()),
            Err(Error::NonFinite { row: 0, col: 1, .. })
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(standardize_fit(empty.view()).is_err());
    }
}
