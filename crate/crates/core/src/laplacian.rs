//! Regularized degrees and the generalized Laplacian X = L^{-α} X̃ L^{-α}.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdjacencyInstance, SignalMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub tau: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: f64,
}

impl RegularizationParams {
    pub fn new(tau: Vec<f64>, lambda: Vec<f64>, alpha: f64) -> Result<Self> {
        if tau.len() != lambda.len() {
            return Err(Error::DimensionMismatch {
                expected: tau.len(),
                actual: lambda.len(),
            });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if tau
            .iter()
            .chain(&lambda)
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "tau and lambda must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { tau, lambda, alpha })
    }

    /// Same (τ, λ) for every node.
    pub fn uniform(n: usize, tau: f64, lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![tau; n], vec![lambda; n], alpha)
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.n(),
            });
        }
        Ok(())
    }
}

/// Diagonal of a regularized degree matrix, either observed (L) or
/// population (Λ), with the degrees it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeScaling {
    pub diag: Vec<f64>,
    pub degrees: Vec<f64>,
    pub mean_degree: f64,
}

fn regularize(degrees: Vec<f64>, reg: &RegularizationParams) -> DegreeScaling {
    let mean_degree = degrees.iter().sum::<f64>() / degrees.len() as f64;
    let diag = degrees
        .iter()
        .zip(reg.tau.iter().zip(&reg.lambda))
        .map(|(d, (t, l))| d + t * mean_degree + l)
        .collect();
    DegreeScaling {
        diag,
        degrees,
        mean_degree,
    }
}

fn col_sums(m: &Mat<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| m.col_as_slice(j).iter().sum())
        .collect()
}

/// L_i = d_i + τ_i d̄ + λ_i with d the row sums of X̃.
pub fn build_l(x: &AdjacencyInstance, reg: &RegularizationParams) -> Result<DegreeScaling> {
    reg.check_len(x.n())?;
    // X̃ symmetric: column sums equal row sums
    let out = regularize(col_sums(&x.matrix), reg);
    if let Some((index, &value)) = out.diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::SingularDegree { index, value });
    }
    Ok(out)
}

/// Λ = E[L], computed exactly from H.
pub fn population_lambda(h: &SignalMatrix, reg: &RegularizationParams) -> Result<DegreeScaling> {
    reg.check_len(h.n())?;
    let out = regularize(col_sums(h.as_mat()), reg);
    if let Some((i, v)) = out.diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::DegenerateModel(format!(
            "Lambda[{i}] = {v} is not positive"
        )));
    }
    Ok(out)
}

/// d_i^{-α} for a positive diagonal.
pub fn inv_power(diag: &[f64], alpha: f64) -> Result<Vec<f64>> {
    diag.iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok((-alpha * value.ln()).exp())
            } else {
                Err(Error::SingularDegree { index, value })
            }
        })
        .collect()
}

/// D^{-α} M D^{-α} for symmetric M and positive diagonal D.
pub fn scale_symmetric(m: &Mat<f64>, diag: &[f64], alpha: f64) -> Result<Mat<f64>> {
    let n = m.nrows();
    if diag.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: diag.len(),
        });
    }
    let p = inv_power(diag, alpha)?;
    let mut out = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let src = m.col_as_slice(j);
        let dst = out.col_as_slice_mut(j);
        for i in 0..n {
            dst[i] = p[i] * src[i] * p[j];
        }
    }
    Ok(out)
}

pub fn generalized_laplacian(
    x: &AdjacencyInstance,
    scaling: &DegreeScaling,
    alpha: f64,
) -> Result<Mat<f64>> {
    scale_symmetric(&x.matrix, &scaling.diag, alpha)
}

pub fn population_laplacian(
    h: &SignalMatrix,
    lambda: &DegreeScaling,
    alpha: f64,
) -> Result<Mat<f64>> {
    scale_symmetric(h.as_mat(), &lambda.diag, alpha).map_err(|e| match e {
        Error::SingularDegree { index, value } => {
            Error::DegenerateModel(format!("Lambda[{index}] = {value} is not positive"))
        }
        other => other,
    })
}
