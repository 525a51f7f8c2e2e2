//! Dense symmetric eigendecomposition ordered by eigenvalue magnitude.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::util::dot;

/// Eigenvalues in descending |·| order with the first `m` unit eigenvectors.
#[derive(Debug, Clone)]
pub struct SpikedSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
}

impl SpikedSpectrum {
    pub fn m(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// k-th retained eigenvector (0-based).
    pub fn vector(&self, k: usize) -> &[f64] {
        self.eigenvectors.col_as_slice(k)
    }
}

fn check_input(a: &Mat<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    for j in 0..a.ncols() {
        if a.col_as_slice(j).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

/// Permutation sorting by descending magnitude. The sort is stable, so ties
/// keep the solver's ascending order.
fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    idx
}

pub fn eig_spiked(a: &Mat<f64>, m: usize) -> Result<SpikedSpectrum> {
    check_input(a)?;
    let n = a.nrows();
    if m > n {
        return Err(Error::InvalidInput(format!(
            "requested {m} eigenvectors of a {n}x{n} matrix"
        )));
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let native: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let order = magnitude_order(&native);
    let u = evd.U();
    let eigenvectors = Mat::from_fn(n, m, |i, k| u[(i, order[k])]);
    Ok(SpikedSpectrum {
        eigenvalues: order.iter().map(|&i| native[i]).collect(),
        eigenvectors,
    })
}

/// Eigenvalues only, in descending magnitude. Cheaper than [`eig_spiked`].
pub fn eigenvalues_by_magnitude(a: &Mat<f64>) -> Result<Vec<f64>> {
    check_input(a)?;
    let native = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(magnitude_order(&native)
        .into_iter()
        .map(|i| native[i])
        .collect())
}

/// Flips `v_hat` so that its inner product with `reference` is positive.
/// Without a reference, or when the inner product is exactly zero, the
/// entry of largest magnitude (first one on ties) is made positive.
pub fn align_sign(v_hat: &[f64], reference: Option<&[f64]>) -> Vec<f64> {
    let flip = match reference.map(|r| dot(v_hat, r)) {
        Some(d) if d != 0.0 => d < 0.0,
        _ => {
            let mut best = 0.0f64;
            let mut sign = 0.0;
            for &x in v_hat {
                if x.abs() > best {
                    best = x.abs();
                    sign = x;
                }
            }
            sign < 0.0
        }
    };
    if flip {
        v_hat.iter().map(|x| -x).collect()
    } else {
        v_hat.to_vec()
    }
}
