//! Signal-plus-noise generation: the DCMM mean, the mixed-membership
//! simulation design, adjacency sampling and population diagnostics.

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Distribution of the observed entries around their mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// X̃_ij ~ Bernoulli(H_ij).
    #[default]
    Bernoulli,
    /// X̃_ij = B_ij (H_ij + sd Z_ij) + (1 - p) H_ij with B ~ Bernoulli(p),
    /// Z ~ N(0, 1). Mean H_ij, variance p sd² + p(1-p) H_ij².
    GaussianMasked { sd: f64, mask_prob: f64 },
}

impl NoiseKind {
    pub fn variance(&self, h: f64) -> f64 {
        match *self {
            NoiseKind::Bernoulli => h * (1.0 - h),
            NoiseKind::GaussianMasked { sd, mask_prob: p } => p * sd * sd + p * (1.0 - p) * h * h,
        }
    }

    fn validate(&self) -> Result<()> {
        if let NoiseKind::GaussianMasked { sd, mask_prob } = *self {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "noise sd must be finite and >= 0, got {sd}"
                )));
            }
            if !(mask_prob > 0.0 && mask_prob <= 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "mask_prob must lie in (0, 1], got {mask_prob}"
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth of a simulation: H = diag(ϑ) Π P Πᵀ diag(ϑ).
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    membership: Mat<f64>,
    degree: Vec<f64>,
    kernel: Mat<f64>,
    noise: NoiseKind,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl PopulationSpec {
    pub fn new(
        membership: Mat<f64>,
        degree: Vec<f64>,
        kernel: Mat<f64>,
        noise: NoiseKind,
    ) -> Result<Self> {
        let n = membership.nrows();
        let k = membership.ncols();
        if n == 0 || k == 0 {
            return Err(Error::InvalidSpec("membership matrix is empty".into()));
        }
        if degree.len() != n {
            return Err(Error::InvalidSpec(format!(
                "degree has length {}, expected {n}",
                degree.len()
            )));
        }
        if kernel.nrows() != k || kernel.ncols() != k {
            return Err(Error::InvalidSpec(format!(
                "kernel is {}x{}, expected {k}x{k}",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for c in 0..k {
                let p = membership[(i, c)];
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "membership[{i}, {c}] = {p} is negative"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidSpec(format!(
                    "membership row {i} sums to {sum}"
                )));
            }
            if !(degree[i] > 0.0) || !degree[i].is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "degree[{i}] = {} is not positive",
                    degree[i]
                )));
            }
        }
        for a in 0..k {
            for b in 0..k {
                let p = kernel[(a, b)];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidSpec(format!(
                        "kernel[{a}, {b}] = {p} outside [0, 1]"
                    )));
                }
                if p != kernel[(b, a)] {
                    return Err(Error::InvalidSpec("kernel is not symmetric".into()));
                }
            }
        }
        noise.validate()?;
        Ok(Self {
            membership,
            degree,
            kernel,
            noise,
        })
    }

    pub fn n(&self) -> usize {
        self.membership.nrows()
    }

    /// Signal rank K (number of communities).
    pub fn k(&self) -> usize {
        self.membership.ncols()
    }

    pub fn membership(&self) -> &Mat<f64> {
        &self.membership
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn kernel(&self) -> &Mat<f64> {
        &self.kernel
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }
}

/// JSON description of a mixed-membership design: `communities` blocks of
/// `n0` pure nodes followed by the remaining nodes split evenly across the
/// `mixed_rows` profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub communities: usize,
    pub n0: usize,
    pub rho: f64,
    pub theta: f64,
    pub mixed_rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    pub tau: f64,
    pub lambda: f64,
}

impl SimulationDesign {
    /// The 3000-node, five-community design with τ = λ = 1e-4.
    pub fn standard(theta: f64, rho: f64) -> Self {
        Self {
            n: 3000,
            k: 5,
            communities: 5,
            n0: 300,
            rho,
            theta,
            mixed_rows: vec![
                vec![0.1, 0.6, 0.1, 0.1, 0.1],
                vec![0.6, 0.1, 0.1, 0.1, 0.1],
                vec![0.1, 0.1, 0.6, 0.1, 0.1],
                vec![0.2; 5],
            ],
            noise_kind: NoiseKind::Bernoulli,
            tau: 1e-4,
            lambda: 1e-4,
        }
    }

    /// Index of the first node of mixed group `g`.
    pub fn mixed_group_start(&self, g: usize) -> usize {
        let n_pure = self.communities * self.n0;
        let n_mixed = self.n - n_pure;
        let groups = self.mixed_rows.len().max(1);
        n_pure + g * (n_mixed / groups)
    }

    pub fn to_spec(&self) -> Result<PopulationSpec> {
        if self.k != self.communities {
            return Err(Error::InvalidConfig(format!(
                "K = {} but communities = {}",
                self.k, self.communities
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must be >= 0, got {}",
                self.rho
            )));
        }
        if !(self.tau >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("tau and lambda must be >= 0".into()));
        }
        let k = self.k;
        let n_pure = self.communities * self.n0;
        if n_pure > self.n {
            return Err(Error::InvalidConfig(format!(
                "{n_pure} pure nodes exceed n = {}",
                self.n
            )));
        }
        let n_mixed = self.n - n_pure;
        if n_mixed > 0 {
            if self.mixed_rows.is_empty() {
                return Err(Error::InvalidConfig(
                    "mixed nodes present but no mixed_rows given".into(),
                ));
            }
            if !n_mixed.is_multiple_of(self.mixed_rows.len()) {
                return Err(Error::InvalidConfig(format!(
                    "{n_mixed} mixed nodes do not split evenly into {} groups",
                    self.mixed_rows.len()
                )));
            }
        }
        for row in &self.mixed_rows {
            if row.len() != k {
                return Err(Error::InvalidConfig(format!(
                    "mixed row has {} entries, expected {k}",
                    row.len()
                )));
            }
        }

        let per_group = if self.mixed_rows.is_empty() {
            0
        } else {
            n_mixed / self.mixed_rows.len()
        };
        let mixed = &self.mixed_rows;
        let n0 = self.n0;
        let membership = Mat::from_fn(self.n, k, |i, c| {
            if i < n_pure {
                if i / n0 == c {
                    1.0
                } else {
                    0.0
                }
            } else {
                mixed[(i - n_pure) / per_group][c]
            }
        });
        let rho = self.rho;
        let kernel = Mat::from_fn(k, k, |a, b| {
            if a == b {
                1.0
            } else {
                rho / (a as f64 - b as f64).abs()
            }
        });
        // H = θ Π P Πᵀ, i.e. ϑ_i = √θ for every node.
        let degree = vec![self.theta.sqrt(); self.n];
        PopulationSpec::new(membership, degree, kernel, self.noise_kind)
    }
}

/// Mixed-membership spec with n = 3000, K = 5, 300 pure nodes per community.
pub fn build_simulation_spec(theta: f64, rho: f64) -> Result<PopulationSpec> {
    SimulationDesign::standard(theta, rho).to_spec()
}

/// Symmetric low-rank mean matrix H.
#[derive(Debug, Clone)]
pub struct SignalMatrix(pub Mat<f64>);

impl SignalMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.0
    }
}

pub fn build_dcmm_mean(spec: &PopulationSpec) -> Result<SignalMatrix> {
    let n = spec.n();
    let k = spec.k();
    let pi = spec.membership();
    let p = spec.kernel();
    let th = spec.degree();
    // B = diag(ϑ) Π P, then H_ij = Σ_c B_ic ϑ_j Π_jc
    let b = Mat::from_fn(n, k, |i, c| {
        th[i] * (0..k).map(|a| pi[(i, a)] * p[(a, c)]).sum::<f64>()
    });
    let mut h = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let mut acc = 0.0;
            for c in 0..k {
                acc += b[(i, c)] * pi[(j, c)];
            }
            let v = acc * th[j];
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    if spec.noise() == NoiseKind::Bernoulli {
        for j in 0..n {
            for (i, &v) in h.col_as_slice(j).iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidSpec(format!(
                        "H[{i}, {j}] = {v} is not a probability"
                    )));
                }
            }
        }
    }
    Ok(SignalMatrix(h))
}

/// One observed symmetric matrix X̃.
#[derive(Debug, Clone)]
pub struct AdjacencyInstance {
    pub matrix: Mat<f64>,
    pub seed: Option<u64>,
    pub spec_ref: Option<String>,
}

impl AdjacencyInstance {
    /// Wraps observed data after checking it is square, finite and exactly symmetric.
    pub fn observed(matrix: Mat<f64>) -> Result<Self> {
        check_symmetric(&matrix)?;
        Ok(Self {
            matrix,
            seed: None,
            spec_ref: None,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

pub(crate) fn check_symmetric(m: &Mat<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.ncols(),
        });
    }
    for j in 0..n {
        for i in 0..=j {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
            if v != m[(j, i)] {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Samples X̃ with the given seed. The upper triangle (with the diagonal)
/// is drawn column by column and mirrored.
pub fn sample_adjacency(h: &SignalMatrix, noise: NoiseKind, seed: u64) -> AdjacencyInstance {
    let mut r = rng::seeded(seed);
    let mut inst = sample_adjacency_with(h, noise, &mut r);
    inst.seed = Some(seed);
    inst
}

pub fn sample_adjacency_with<R: Rng + ?Sized>(
    h: &SignalMatrix,
    noise: NoiseKind,
    rng: &mut R,
) -> AdjacencyInstance {
    let n = h.n();
    let hm = h.as_mat();
    let mut x = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let mean = hm[(i, j)];
            let v = match noise {
                NoiseKind::Bernoulli => {
                    if rng.random::<f64>() < mean {
                        1.0
                    } else {
                        0.0
                    }
                }
                NoiseKind::GaussianMasked { sd, mask_prob } => {
                    let z: f64 = rng.sample(StandardNormal);
                    let kept = if rng.random::<f64>() < mask_prob {
                        1.0
                    } else {
                        0.0
                    };
                    kept * (mean + sd * z) + (1.0 - mask_prob) * mean
                }
            };
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
    AdjacencyInstance {
        matrix: x,
        seed: None,
        spec_ref: None,
    }
}

/// Entrywise noise variances s_ij = Var(W_ij).
pub fn noise_variances(h: &SignalMatrix, noise: NoiseKind) -> Mat<f64> {
    let hm = h.as_mat();
    Mat::from_fn(h.n(), h.n(), |i, j| noise.variance(hm[(i, j)]))
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationDiagnostics {
    pub theta: f64,
    pub q: f64,
    pub theta_i: Vec<f64>,
    pub theta_bar: f64,
    pub beta_n: f64,
}

pub fn diagnostics(
    spec: &PopulationSpec,
    tau: &[f64],
    lambda: &[f64],
) -> Result<PopulationDiagnostics> {
    let h = build_dcmm_mean(spec)?;
    diagnostics_from_mean(&h, spec.noise(), tau, lambda)
}

pub fn diagnostics_from_mean(
    h: &SignalMatrix,
    noise: NoiseKind,
    tau: &[f64],
    lambda: &[f64],
) -> Result<PopulationDiagnostics> {
    let n = h.n();
    if tau.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: tau.len(),
        });
    }
    if lambda.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: lambda.len(),
        });
    }
    let hm = h.as_mat();
    let mut var_total = 0.0;
    let mut row = vec![0.0; n];
    for j in 0..n {
        let col = hm.col_as_slice(j);
        var_total += col.iter().map(|&v| noise.variance(v)).sum::<f64>();
        // H symmetric: column sums are row sums
        row[j] = col.iter().sum::<f64>();
    }
    let nf = n as f64;
    let theta = var_total / (nf * nf);
    if !(theta > 0.0) {
        return Err(Error::DegenerateModel(
            "noise variance is identically zero (theta = 0)".into(),
        ));
    }
    let q2 = nf * theta;
    let theta_i: Vec<f64> = row.iter().map(|r| r / q2).collect();
    let theta_bar = theta_i.iter().sum::<f64>() / nf;
    let beta_n = (0..n)
        .map(|i| theta_i[i] + tau[i] * theta_bar + lambda[i] / q2)
        .fold(f64::INFINITY, f64::min);
    Ok(PopulationDiagnostics {
        theta,
        q: q2.sqrt(),
        theta_i,
        theta_bar,
        beta_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_block() -> PopulationSpec {
        let pi = Mat::from_fn(4, 2, |i, c| match (i, c) {
            (0, 0) | (1, 1) => 1.0,
            (2, _) => 0.5,
            (3, 0) => 0.25,
            (3, 1) => 0.75,
            _ => 0.0,
        });
        let p = Mat::from_fn(2, 2, |a, b| if a == b { 0.8 } else { 0.3 });
        PopulationSpec::new(pi, vec![0.9, 0.5, 1.0, 0.7], p, NoiseKind::Bernoulli).unwrap()
    }

    #[test]
    fn constant_rank_one_mean() {
        let spec = PopulationSpec::new(
            Mat::from_fn(5, 1, |_, _| 1.0),
            vec![1.0; 5],
            Mat::from_fn(1, 1, |_, _| 0.3),
            NoiseKind::Bernoulli,
        )
        .unwrap();
        let h = build_dcmm_mean(&spec).unwrap();
        for j in 0..5 {
            for i in 0..5 {
                assert_relative_eq!(h.0[(i, j)], 0.3, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn small_mean_matches_triple_product() {
        let spec = two_block();
        let h = build_dcmm_mean(&spec).unwrap();
        let (pi, p, th) = (spec.membership(), spec.kernel(), spec.degree());
        for i in 0..4 {
            for j in 0..4 {
                let mut want = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        want += th[i] * pi[(i, a)] * p[(a, b)] * pi[(j, b)] * th[j];
                    }
                }
                assert_relative_eq!(h.0[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn kernel_entries_of_standard_design() {
        let spec = build_simulation_spec(0.9, 0.2).unwrap();
        let p = spec.kernel();
        assert_relative_eq!(p[(0, 1)], 0.2);
        assert_relative_eq!(p[(0, 2)], 0.1);
        assert_relative_eq!(p[(0, 0)], 1.0);
        let id = build_simulation_spec(0.9, 0.0).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                assert_eq!(id.kernel()[(a, b)], if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn standard_design_layout() {
        let d = SimulationDesign::standard(0.9, 0.2);
        let spec = d.to_spec().unwrap();
        let pi = spec.membership();
        assert_eq!(pi[(0, 0)], 1.0);
        assert_eq!(pi[(1499, 4)], 1.0);
        assert_eq!(pi[(1500, 1)], 0.6);
        assert_eq!(pi[(1875, 0)], 0.6);
        assert_eq!(pi[(2250, 2)], 0.6);
        assert_eq!(pi[(2999, 3)], 0.2);
        assert_eq!(d.mixed_group_start(0), 1500);
        for i in 0..3000 {
            let s: f64 = (0..5).map(|c| pi[(i, c)]).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad_row = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { 0.5 });
        assert!(PopulationSpec::new(
            bad_row,
            vec![1.0; 2],
            Mat::from_fn(1, 1, |_, _| 0.5),
            NoiseKind::Bernoulli
        )
        .is_err());
        // H = 4 * 0.5 > 1
        let spec = PopulationSpec::new(
            Mat::from_fn(2, 1, |_, _| 1.0),
            vec![2.0; 2],
            Mat::from_fn(1, 1, |_, _| 0.5),
            NoiseKind::Bernoulli,
        )
        .unwrap();
        assert!(matches!(build_dcmm_mean(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn design_json_round_trip() {
        let d = SimulationDesign::standard(0.5, 0.2);
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"K\":5"));
        assert!(s.contains("\"noise_kind\":\"bernoulli\""));
        let back: SimulationDesign = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let g = SimulationDesign {
            noise_kind: NoiseKind::GaussianMasked {
                sd: 1.0,
                mask_prob: 0.5,
            },
            ..d
        };
        let back: SimulationDesign =
            serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn degenerate_bernoulli_samples() {
        let zero = SignalMatrix(Mat::zeros(6, 6));
        let x = sample_adjacency(&zero, NoiseKind::Bernoulli, 3);
        assert_eq!(x.matrix.norm_max(), 0.0);
        let one = SignalMatrix(Mat::from_fn(6, 6, |_, _| 1.0));
        let x = sample_adjacency(&one, NoiseKind::Bernoulli, 3);
        for j in 0..6 {
            assert!(x.matrix.col_as_slice(j).iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn sampling_is_symmetric_binary_and_reproducible() {
        let spec = two_block();
        let h = build_dcmm_mean(&spec).unwrap();
        let a = sample_adjacency(&h, NoiseKind::Bernoulli, 11);
        let b = sample_adjacency(&h, NoiseKind::Bernoulli, 11);
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.seed, Some(11));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.matrix[(i, j)].to_bits(), a.matrix[(j, i)].to_bits());
                assert!(a.matrix[(i, j)] == 0.0 || a.matrix[(i, j)] == 1.0);
            }
        }
    }

    #[test]
    fn homogeneous_diagnostics() {
        let c = 0.3;
        let h = SignalMatrix(Mat::from_fn(10, 10, |_, _| c));
        let d = diagnostics_from_mean(&h, NoiseKind::Bernoulli, &[0.0; 10], &[0.0; 10]).unwrap();
        assert_relative_eq!(d.theta, c * (1.0 - c), epsilon = 1e-15);
        assert_relative_eq!(d.q, (10.0 * c * (1.0 - c)).sqrt(), epsilon = 1e-14);
        for t in &d.theta_i {
            assert_relative_eq!(*t, c / (c * (1.0 - c)), epsilon = 1e-13);
        }

        let z = SignalMatrix(Mat::zeros(16, 16));
        let g = NoiseKind::GaussianMasked {
            sd: 1.0,
            mask_prob: 1.0,
        };
        let d = diagnostics_from_mean(&z, g, &[0.0; 16], &[0.0; 16]).unwrap();
        assert_eq!(d.theta, 1.0);
        assert_eq!(d.q, 4.0);

        assert!(matches!(
            diagnostics_from_mean(&z, NoiseKind::Bernoulli, &[0.0; 16], &[0.0; 16]),
            Err(Error::DegenerateModel(_))
        ));
    }
}
