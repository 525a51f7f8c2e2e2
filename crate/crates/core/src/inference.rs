//! Asymptotic variances and biases of spiked eigenpairs, the one-step
//! noise refinement, CLT standardization and rank estimation.
//!
//! Every function takes population inputs (t_k, v_k, Λ, s). Plug-in use
//! substitutes (t̂_k, v̂_k, L, ŝ) for them.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{inv_power, DegreeScaling, RegularizationParams};
use crate::model::AdjacencyInstance;
use crate::spectral::SpikedSpectrum;
use crate::util::{dot, matvec, pairwise_sum};

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn check_square(s: &Mat<f64>, n: usize) -> Result<()> {
    check_len(n, s.nrows())?;
    check_len(n, s.ncols())
}

/// 𝔖^{xy}_{ij} evaluated directly. O(n) per call because of the τ sum;
/// bulk sums use [`FrakS`].
#[allow(clippy::too_many_arguments)]
pub fn frak_s(
    x: &[f64],
    y: &[f64],
    i: usize,
    j: usize,
    t: f64,
    lambda: &[f64],
    tau: &[f64],
    alpha: f64,
) -> f64 {
    let n = lambda.len() as f64;
    let g: f64 = (0..lambda.len())
        .map(|l| tau[l] * x[l] * y[l] / lambda[l])
        .sum();
    -2.0 * alpha * (x[i] * y[i] / lambda[i] + x[j] * y[j] / lambda[j] + 2.0 / n * g)
        + (x[i] * y[j] + x[j] * y[i]) / (t * (lambda[i] * lambda[j]).powf(alpha))
}

/// 𝔖^{xy} with its O(n) pieces precomputed, so each entry is O(1):
/// 𝔖_ij = -2α(a_i + a_j + g) + t⁻¹(p_i q_j + p_j q_i).
pub struct FrakS {
    a: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    g: f64,
    alpha: f64,
    inv_t: f64,
}

impl FrakS {
    pub fn new(
        x: &[f64],
        y: &[f64],
        t: f64,
        lambda: &[f64],
        tau: &[f64],
        alpha: f64,
    ) -> Result<Self> {
        let n = lambda.len();
        check_len(n, x.len())?;
        check_len(n, y.len())?;
        check_len(n, tau.len())?;
        if !(t != 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_k = {t} must be finite and nonzero"
            )));
        }
        let ia = inv_power(lambda, alpha)?;
        let a: Vec<f64> = (0..n).map(|l| x[l] * y[l] / lambda[l]).collect();
        let tw: Vec<f64> = (0..n).map(|l| tau[l] * a[l]).collect();
        let g = 2.0 / n as f64 * pairwise_sum(&tw);
        Ok(Self {
            p: (0..n).map(|l| x[l] * ia[l]).collect(),
            q: (0..n).map(|l| y[l] * ia[l]).collect(),
            a,
            g,
            alpha,
            inv_t: 1.0 / t,
        })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        -2.0 * self.alpha * (self.a[i] + self.a[j] + self.g)
            + self.inv_t * (self.p[i] * self.q[j] + self.p[j] * self.q[i])
    }

    /// Σ_{i≤j} (𝔖_ij / (1 + δ_ij))² s_ij, summed column by column in a fixed
    /// order so the result does not depend on the thread pool.
    pub fn weighted_square_sum(&self, s: &Mat<f64>) -> f64 {
        let n = self.a.len();
        let cols: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let sj = s.col_as_slice(j);
                let mut terms: Vec<f64> = (0..j)
                    .map(|i| {
                        let f = self.at(i, j);
                        f * f * sj[i]
                    })
                    .collect();
                let d = self.at(j, j) / 2.0;
                terms.push(d * d * sj[j]);
                pairwise_sum(&terms)
            })
            .collect();
        pairwise_sum(&cols)
    }
}

/// σ²_{k,i} = Λ_i^{-2α} t⁻² Σ_l s_il Λ_l^{-2α} v(l)².
pub fn entry_variance(
    i: usize,
    t: f64,
    v: &[f64],
    lambda: &[f64],
    s: &Mat<f64>,
    alpha: f64,
) -> Result<f64> {
    let n = lambda.len();
    check_len(n, v.len())?;
    check_square(s, n)?;
    if i >= n {
        return Err(Error::InvalidInput(format!("node {i} out of range")));
    }
    let p = inv_power(lambda, 2.0 * alpha)?;
    let terms: Vec<f64> = (0..n).map(|l| s[(i, l)] * p[l] * v[l] * v[l]).collect();
    Ok(p[i] * pairwise_sum(&terms) / (t * t))
}

/// σ²_{k,i} for every node at once.
pub fn entry_variances(
    t: f64,
    v: &[f64],
    lambda: &[f64],
    s: &Mat<f64>,
    alpha: f64,
) -> Result<Vec<f64>> {
    let n = lambda.len();
    check_len(n, v.len())?;
    check_square(s, n)?;
    let p = inv_power(lambda, 2.0 * alpha)?;
    let w: Vec<f64> = (0..n).map(|l| p[l] * v[l] * v[l]).collect();
    let sw = matvec(s, &w);
    Ok((0..n).map(|i| p[i] * sw[i] / (t * t)).collect())
}

/// ς²_k = Σ_{i≤j} (t 𝔖^{vv}_ij / (1 + δ_ij))² s_ij.
pub fn eigenvalue_variance(
    t: f64,
    v: &[f64],
    lambda: &[f64],
    s: &Mat<f64>,
    tau: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_square(s, lambda.len())?;
    let fs = FrakS::new(v, v, t, lambda, tau, alpha)?;
    Ok(t * t * fs.weighted_square_sum(s))
}

/// 𝔰²_{u,k} for a unit vector u with |uᵀv_k| ≠ 1, where `delta` and `vecs`
/// hold the K population spikes and `k` is 0-based.
#[allow(clippy::too_many_arguments)]
pub fn projection_variance_perp(
    k: usize,
    u: &[f64],
    t: f64,
    delta: &[f64],
    vecs: &Mat<f64>,
    lambda: &[f64],
    s: &Mat<f64>,
    tau: &[f64],
    alpha: f64,
) -> Result<f64> {
    let n = lambda.len();
    let kk = vecs.ncols();
    check_len(n, u.len())?;
    check_len(n, vecs.nrows())?;
    check_len(kk, delta.len())?;
    check_square(s, n)?;
    if k >= kk {
        return Err(Error::InvalidInput(format!("spike index {k} out of range")));
    }
    let vk = vecs.col_as_slice(k);
    if (dot(u, vk).abs() - 1.0).abs() <= 1e-12 {
        return Err(Error::InvalidInput("u is parallel to v_k".into()));
    }
    // 𝔖^{xy} is linear in x, so the bracket is 𝔖^{x*, v_k} with
    // x* = Σ_{l≠k} uᵀv_l t/(t - δ_l) v_l + w and w = (I - VVᵀ)u.
    let mut xs = u.to_vec();
    for l in 0..kk {
        let vl = vecs.col_as_slice(l);
        let ul = dot(u, vl);
        let mut coef = -ul;
        if l != k {
            let gap = t - delta[l];
            if gap.abs() <= f64::EPSILON * t.abs() {
                return Err(Error::DegenerateGap { k, l });
            }
            coef += ul * t / gap;
        }
        for (x, v) in xs.iter_mut().zip(vl) {
            *x += coef * v;
        }
    }
    let fs = FrakS::new(&xs, vk, t, lambda, tau, alpha)?;
    Ok(fs.weighted_square_sum(s))
}

/// Deterministic bias A_k of δ̂_k - t_k.
pub fn bias_ak(
    t: f64,
    v: &[f64],
    lambda: &[f64],
    s: &Mat<f64>,
    tau: &[f64],
    alpha: f64,
) -> Result<f64> {
    let n = lambda.len();
    check_len(n, v.len())?;
    check_len(n, tau.len())?;
    check_square(s, n)?;
    let nf = n as f64;
    let row: Vec<f64> = (0..n).map(|j| pairwise_sum(s.col_as_slice(j))).collect();
    let sigma_a = pairwise_sum(&row);
    let diag: Vec<f64> = (0..n).map(|i| s[(i, i)]).collect();
    let trace = pairwise_sum(&diag);

    let first: Vec<f64> = (0..n)
        .map(|i| {
            let ti = tau[i];
            let w = (1.0 + 4.0 * ti / nf) * row[i] - 2.0 * ti / nf * diag[i]
                + 2.0 * ti * ti / (nf * nf) * sigma_a
                - ti * ti / (nf * nf) * trace;
            w * v[i] * v[i] / (lambda[i] * lambda[i])
        })
        .collect();

    let ia = inv_power(lambda, alpha)?;
    let u: Vec<f64> = (0..n).map(|j| v[j] * ia[j]).collect();
    let su = matvec(s, &u);
    let second: Vec<f64> = (0..n)
        .map(|i| {
            let left = v[i] * ia[i] / lambda[i];
            (1.0 + 2.0 * tau[i] / nf) * left * su[i] - tau[i] / nf * diag[i] * left * u[i]
        })
        .collect();

    Ok(
        alpha * (1.0 + 2.0 * alpha) * t * pairwise_sum(&first)
            - 4.0 * alpha * pairwise_sum(&second),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStage {
    Initial,
    Refined,
}

/// Residual Ŵ = X̃ - L^α(Σ_k d_k v̂_k v̂_kᵀ)L^α and ŝ = Ŵ² entrywise.
#[derive(Debug, Clone)]
pub struct NoiseEstimate {
    pub w_hat: Mat<f64>,
    pub s_hat: Mat<f64>,
    pub stage: NoiseStage,
}

fn residual(
    x: &Mat<f64>,
    l_alpha: &[f64],
    d: &[f64],
    vecs: &Mat<f64>,
    stage: NoiseStage,
) -> NoiseEstimate {
    let n = x.nrows();
    let kk = d.len();
    let mut w = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let xj = x.col_as_slice(j);
        let coef: Vec<f64> = (0..kk).map(|k| d[k] * vecs[(j, k)] * l_alpha[j]).collect();
        let wj = w.col_as_slice_mut(j);
        for i in 0..n {
            let mut low = 0.0;
            for (k, c) in coef.iter().enumerate() {
                low += vecs[(i, k)] * c;
            }
            wj[i] = xj[i] - l_alpha[i] * low;
        }
    }
    let s = Mat::from_fn(n, n, |i, j| w[(i, j)] * w[(i, j)]);
    NoiseEstimate {
        w_hat: w,
        s_hat: s,
        stage,
    }
}

/// Per-spike output of [`refine`]; `k` is 0-based.
#[derive(Debug, Clone, Serialize)]
pub struct EigInference {
    pub k: usize,
    pub delta_hat: f64,
    /// Â_{k,0}, from the initial residual with t̂_{k,0} = δ̂_k.
    pub a_hat: f64,
    /// t̂_{k,1} = δ̂_k - Â_{k,0}.
    pub t_hat: f64,
    /// Shrunk eigenvalue δ̃_k.
    pub delta_tilde: f64,
    /// ς̂_k from the refined ŝ with t̂_{k,1}, v̂_k and L.
    pub sigma_hat: f64,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub initial: NoiseEstimate,
    pub refined: NoiseEstimate,
    pub eig: Vec<EigInference>,
}

/// The one-step refinement: Ŵ₀ from (δ̂, v̂), Â_{k,0}, t̂_{k,1}, δ̃_k and
/// the refined residual Ŵ built from δ̃.
pub fn refine(
    x: &AdjacencyInstance,
    l: &DegreeScaling,
    spectrum: &SpikedSpectrum,
    k_hat: usize,
    reg: &RegularizationParams,
) -> Result<Refinement> {
    let n = x.n();
    check_len(n, l.diag.len())?;
    check_len(n, reg.n())?;
    if k_hat > spectrum.m() {
        return Err(Error::InvalidInput(format!(
            "K_hat = {k_hat} exceeds the {} retained eigenvectors",
            spectrum.m()
        )));
    }
    let alpha = reg.alpha;
    let l_alpha: Vec<f64> = inv_power(&l.diag, -alpha)?;
    let vecs = Mat::from_fn(n, k_hat, |i, k| spectrum.eigenvectors[(i, k)]);
    let delta_hat = &spectrum.eigenvalues[..k_hat];

    let initial = residual(&x.matrix, &l_alpha, delta_hat, &vecs, NoiseStage::Initial);

    // ĉ_i = diag((L^{-α}Ŵ₀L^{-α})²)_i = L_i^{-2α} Σ_j Ŵ₀_ij² L_j^{-2α}
    let p2 = inv_power(&l.diag, 2.0 * alpha)?;
    let c_hat: Vec<f64> = {
        let sp = matvec(&initial.s_hat, &p2);
        (0..n).map(|i| p2[i] * sp[i]).collect()
    };

    let mut partial = Vec::with_capacity(k_hat);
    for k in 0..k_hat {
        let v = vecs.col_as_slice(k);
        let d = delta_hat[k];
        let a_hat = bias_ak(d, v, &l.diag, &initial.s_hat, &reg.tau, alpha)?;
        let t1 = d - a_hat;
        if !(t1 != 0.0 && t1.is_finite()) {
            return Err(Error::RefinementDegenerate {
                k,
                reason: format!("t_hat_1 = {t1}"),
            });
        }
        let b: f64 = (0..n).map(|i| v[i] * v[i] * c_hat[i]).sum();
        let bracket = 1.0 / t1 + b / (t1 * t1 * t1);
        if !(bracket != 0.0 && bracket.is_finite()) {
            return Err(Error::RefinementDegenerate {
                k,
                reason: format!("shrinkage bracket = {bracket}"),
            });
        }
        partial.push((d, a_hat, t1, 1.0 / bracket));
    }

    let tilde: Vec<f64> = partial.iter().map(|p| p.3).collect();
    let refined = residual(&x.matrix, &l_alpha, &tilde, &vecs, NoiseStage::Refined);

    let mut eig = Vec::with_capacity(k_hat);
    for (k, &(delta_hat, a_hat, t_hat, delta_tilde)) in partial.iter().enumerate() {
        let var = eigenvalue_variance(
            t_hat,
            vecs.col_as_slice(k),
            &l.diag,
            &refined.s_hat,
            &reg.tau,
            alpha,
        )?;
        eig.push(EigInference {
            k,
            delta_hat,
            a_hat,
            t_hat,
            delta_tilde,
            sigma_hat: var.sqrt(),
        });
    }
    Ok(Refinement {
        initial,
        refined,
        eig,
    })
}

/// Default exponent c in the rank threshold.
pub const DEFAULT_C_EXPONENT: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankEstimate {
    pub k0_hat: usize,
    pub threshold: f64,
    pub q_check: f64,
    pub c_exponent: f64,
}

/// Number of leading magnitudes at or above `threshold` (eigenvalues are
/// already in descending |·| order).
pub fn count_above(eigenvalues: &[f64], threshold: f64) -> usize {
    eigenvalues
        .iter()
        .take_while(|d| d.abs() >= threshold)
        .count()
}

/// K̂₀ = #{k : |δ̂_k| ≥ a_n'} with a_n' = q̌ (min L)^{-2α} (log n)^c log log n
/// and q̌² the largest degree of X̃.
pub fn estimate_k0(
    eigenvalues: &[f64],
    l: &[f64],
    x: &AdjacencyInstance,
    alpha: f64,
    c_exponent: f64,
) -> Result<RankEstimate> {
    let n = x.n();
    check_len(n, l.len())?;
    if (n as f64) <= std::f64::consts::E {
        return Err(Error::InvalidInput(format!(
            "n = {n} is too small: log log n is undefined"
        )));
    }
    let max_degree = (0..n)
        .map(|j| x.matrix.col_as_slice(j).iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_degree > 0.0) {
        return Err(Error::InvalidInput("largest degree is not positive".into()));
    }
    let q_check = max_degree.sqrt();
    let l_min = l.iter().copied().fold(f64::INFINITY, f64::min);
    if !(l_min > 0.0) {
        return Err(Error::SingularDegree {
            index: l.iter().position(|&v| v == l_min).unwrap_or(0),
            value: l_min,
        });
    }
    let ln = (n as f64).ln();
    let threshold = q_check / l_min.powf(2.0 * alpha) * ln.powf(c_exponent) * ln.ln();
    Ok(RankEstimate {
        k0_hat: count_above(eigenvalues, threshold),
        threshold,
        q_check,
        c_exponent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// (δ̂_k - t_k - A_k) / ς_k
    Eigenvalue,
    /// ((L_i/Λ_i)^α v̂_k(i) - v_k(i)) / σ_{k,i}
    Entry,
}

pub fn standardize(kind: StatKind, raw: f64, center: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::DegenerateVariance(scale));
    }
    let z = (raw - center) / scale;
    if !z.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite {kind:?} z-score")));
    }
    Ok(z)
}

/// Per-entry record of an [`InferenceReport`] (indices 0-based).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryRecord {
    pub k: usize,
    pub i: usize,
    pub v_hat: f64,
    pub sigma_hat: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub k: usize,
    pub delta_hat: f64,
    pub t_hat: f64,
    #[serde(rename = "A_hat")]
    pub a_hat: f64,
    pub delta_tilde: f64,
    pub sigma_eig: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport {
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "K0_hat")]
    pub k0_hat: usize,
    pub rank: RankEstimate,
    pub spikes: Vec<SpikeRecord>,
    pub entries: Vec<EntryRecord>,
}

/// Full plug-in analysis of one observed matrix: spectrum, K̂₀, refinement
/// with `k` spikes (K̂₀ when `None`) and entrywise SDs for every node.
pub fn infer(
    x: &AdjacencyInstance,
    reg: &RegularizationParams,
    k: Option<usize>,
    c_exponent: f64,
) -> Result<InferenceReport> {
    let l = crate::laplacian::build_l(x, reg)?;
    let lap = crate::laplacian::generalized_laplacian(x, &l, reg.alpha)?;
    let n = x.n();
    let rank_only = crate::spectral::eigenvalues_by_magnitude(&lap)?;
    let rank = estimate_k0(&rank_only, &l.diag, x, reg.alpha, c_exponent)?;
    let k_use = k.unwrap_or(rank.k0_hat).min(n);
    let spectrum = crate::spectral::eig_spiked(&lap, k_use)?;
    let mut aligned = Mat::<f64>::zeros(n, k_use);
    for kk in 0..k_use {
        let v = crate::spectral::align_sign(spectrum.vector(kk), None);
        aligned.col_as_slice_mut(kk).copy_from_slice(&v);
    }
    let spectrum = SpikedSpectrum {
        eigenvalues: spectrum.eigenvalues,
        eigenvectors: aligned,
    };
    let refinement = refine(x, &l, &spectrum, k_use, reg)?;
    let mut entries = Vec::with_capacity(k_use * n);
    for e in &refinement.eig {
        let v = spectrum.vector(e.k);
        let vars = entry_variances(e.t_hat, v, &l.diag, &refinement.refined.s_hat, reg.alpha)?;
        entries.extend((0..n).map(|i| EntryRecord {
            k: e.k,
            i,
            v_hat: v[i],
            sigma_hat: vars[i].sqrt(),
        }));
    }
    Ok(InferenceReport {
        n,
        alpha: reg.alpha,
        k0_hat: rank.k0_hat,
        rank,
        spikes: refinement
            .eig
            .iter()
            .map(|e| SpikeRecord {
                k: e.k,
                delta_hat: e.delta_hat,
                t_hat: e.t_hat,
                a_hat: e.a_hat,
                delta_tilde: e.delta_tilde,
                sigma_eig: e.sigma_hat,
            })
            .collect(),
        entries,
    })
}
