//! Independent oracles shared by the integration tests and the acceptance
//! runner. Each returns (oracle, implementation) so callers choose how to
//! compare and report.

#![allow(dead_code)]

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use genlap::inference::{self, frak_s};
use genlap::laplacian::RegularizationParams;
use genlap::model::{self, AdjacencyInstance, SignalMatrix};
use genlap::qve::{self, QveApprox};
use genlap::spectral;
use genlap::util::dot;

pub const ORACLE_N: usize = 8;

/// Small problem with random Bernoulli means, positive Λ, τ and a unit v.
pub struct Toy {
    pub h: Mat<f64>,
    pub s: Mat<f64>,
    pub lambda: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: f64,
    pub t: f64,
    /// Orthonormal spikes (columns) with eigenvalues `delta`.
    pub vecs: Mat<f64>,
    pub delta: Vec<f64>,
}

pub fn toy(seed: u64) -> Toy {
    let n = ORACLE_N;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let p = r.random_range(0.1..0.9);
            h[(i, j)] = p;
            h[(j, i)] = p;
        }
    }
    let s = Mat::from_fn(n, n, |i, j| h[(i, j)] * (1.0 - h[(i, j)]));
    let lambda: Vec<f64> = (0..n).map(|_| r.random_range(1.0..4.0)).collect();
    let tau: Vec<f64> = (0..n).map(|_| r.random_range(0.0..0.5)).collect();
    let g = Mat::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    let sym = &g + g.transpose();
    let vecs = spectral::eig_spiked(&sym, 3).unwrap().eigenvectors;
    Toy {
        h,
        s,
        lambda,
        tau,
        alpha: 0.7,
        t: 5.4,
        vecs,
        delta: vec![5.0, 3.0, -2.0],
    }
}

/// Symmetric W with W_ij = Bernoulli(h_ij) - h_ij on and above the diagonal.
pub fn draw_noise(h: &Mat<f64>, r: &mut impl Rng) -> Mat<f64> {
    let n = h.nrows();
    let mut w = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let p = h[(i, j)];
            let x = if r.random::<f64>() < p { 1.0 - p } else { -p };
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
    }
    w
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Monte-Carlo variance of a linear statistic of W.
fn mc_variance(toy: &Toy, draws: usize, seed: u64, stat: impl Fn(&Mat<f64>) -> f64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..draws)
        .map(|_| stat(&draw_noise(&toy.h, &mut r)))
        .collect();
    sample_variance(&xs)
}

/// Var of t⁻¹ Λ_i^{-α} Σ_j W_ij Λ_j^{-α} v(j) against σ²_{k,i}.
pub fn entry_variance_oracle(draws: usize, seed: u64) -> (f64, f64) {
    let toy = toy(seed);
    let v = toy.vecs.col_as_slice(0).to_vec();
    let i = 2;
    let la: Vec<f64> = toy.lambda.iter().map(|l| l.powf(-toy.alpha)).collect();
    let mc = mc_variance(&toy, draws, seed + 1, |w| {
        let s: f64 = (0..ORACLE_N).map(|j| w[(i, j)] * la[j] * v[j]).sum();
        la[i] * s / toy.t
    });
    let f = inference::entry_variance(i, toy.t, &v, &toy.lambda, &toy.s, toy.alpha).unwrap();
    (mc, f)
}

/// Var of (t/2) Σ_{ij} 𝔖^{vv}_ij W_ij against ς²_k.
pub fn eigenvalue_variance_oracle(draws: usize, seed: u64) -> (f64, f64) {
    let toy = toy(seed);
    let v = toy.vecs.col_as_slice(0).to_vec();
    let n = ORACLE_N;
    let fs = Mat::from_fn(n, n, |i, j| {
        frak_s(&v, &v, i, j, toy.t, &toy.lambda, &toy.tau, toy.alpha)
    });
    let mc = mc_variance(&toy, draws, seed + 1, |w| {
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += fs[(i, j)] * w[(i, j)];
            }
        }
        0.5 * toy.t * acc
    });
    let f = inference::eigenvalue_variance(toy.t, &v, &toy.lambda, &toy.s, &toy.tau, toy.alpha)
        .unwrap();
    (mc, f)
}

/// Var of ½ Σ_ij B_ij W_ij with B = Σ_{l≠k} uᵀv_l t/(t-δ_l) 𝔖^{v_l v_k} +
/// 𝔖^{w v_k}, each 𝔖 evaluated separately, against 𝔰²_{u,k}.
pub fn projection_variance_oracle(draws: usize, seed: u64) -> (f64, f64) {
    let toy = toy(seed);
    let n = ORACLE_N;
    let k = 0;
    let mut r = ChaCha8Rng::seed_from_u64(seed + 7);
    let u: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let nu = dot(&u, &u).sqrt();
    let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let vk = toy.vecs.col_as_slice(k).to_vec();
    let mut w = u.clone();
    for l in 0..3 {
        let vl = toy.vecs.col_as_slice(l);
        let c = dot(&u, vl);
        for (wi, vi) in w.iter_mut().zip(vl) {
            *wi -= c * vi;
        }
    }
    let fr = |x: &[f64], i: usize, j: usize| {
        frak_s(x, &vk, i, j, toy.t, &toy.lambda, &toy.tau, toy.alpha)
    };
    let b = Mat::from_fn(n, n, |i, j| {
        let mut acc = fr(&w, i, j);
        for l in (0..3).filter(|&l| l != k) {
            let vl = toy.vecs.col_as_slice(l);
            acc += dot(&u, vl) * toy.t / (toy.t - toy.delta[l]) * fr(vl, i, j);
        }
        acc
    });
    let mc = mc_variance(&toy, draws, seed + 1, |wm| {
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += b[(i, j)] * wm[(i, j)];
            }
        }
        0.5 * acc
    });
    let f = inference::projection_variance_perp(
        k,
        &u,
        toy.t,
        &toy.delta,
        &toy.vecs,
        &toy.lambda,
        &toy.s,
        &toy.tau,
        toy.alpha,
    )
    .unwrap();
    (mc, f)
}

/// Σ scaled so that its largest row sum is `m_target`.
pub fn scaled_sigma(seed: u64, m_target: f64) -> qve::SigmaMatrix {
    let toy = toy(seed);
    let sigma = qve::build_sigma(&toy.lambda, toy.alpha, &toy.s).unwrap();
    let scale = m_target / sigma.max_row_sum();
    qve::SigmaMatrix {
        entries: Mat::from_fn(ORACLE_N, ORACLE_N, |i, j| sigma.entries[(i, j)] * scale),
    }
}

/// Largest |Laurent - fixed point| over the diagonal at z = 5·2√𝔐 e^{iφ}.
pub fn laurent_vs_fixed_point(sigma: &qve::SigmaMatrix, lmax: usize, phi: f64) -> f64 {
    let m = sigma.max_row_sum();
    let z = Complex64::from_polar(10.0 * m.sqrt(), phi);
    let approx = QveApprox::new(sigma, lmax).unwrap();
    let series = approx.laurent_eval(z);
    let fixed = qve::qve_fixed_point(sigma, z, 1e-15).unwrap();
    series
        .iter()
        .zip(&fixed)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// Rank-`k` two-scale mean on `n` nodes with the given sparsity; the
/// population is exactly low rank so a noiseless draw equals H.
pub fn block_mean(n: usize, k: usize, theta: f64) -> SignalMatrix {
    let membership = Mat::from_fn(n, k, |i, c| if i * k / n == c { 1.0 } else { 0.0 });
    let kernel = Mat::from_fn(k, k, |a, b| {
        if a == b {
            0.8
        } else {
            0.1 + 0.05 * (a + b) as f64
        }
    });
    let degree: Vec<f64> = (0..n)
        .map(|i| theta.sqrt() * (0.7 + 0.3 * ((i * 37) % 11) as f64 / 10.0))
        .collect();
    let spec = model::PopulationSpec::new(membership, degree, kernel, model::NoiseKind::Bernoulli)
        .unwrap();
    model::build_dcmm_mean(&spec).unwrap()
}

/// Max |Ŵ₀| and max |Ŵ| from refining a noiseless observation X̃ = H.
pub fn refine_noiseless(n: usize, k: usize, alpha: f64) -> (f64, f64, Vec<(f64, f64)>) {
    let h = block_mean(n, k, 0.5);
    let x = AdjacencyInstance::observed(h.0.clone()).unwrap();
    let reg = RegularizationParams::uniform(n, 0.1, 0.5, alpha).unwrap();
    let l = genlap::laplacian::build_l(&x, &reg).unwrap();
    let lap = genlap::laplacian::generalized_laplacian(&x, &l, alpha).unwrap();
    let spec = spectral::eig_spiked(&lap, k).unwrap();
    let r = inference::refine(&x, &l, &spec, k, &reg).unwrap();
    let pairs = r.eig.iter().map(|e| (e.delta_hat, e.delta_tilde)).collect();
    (
        r.initial.w_hat.norm_max(),
        r.refined.w_hat.norm_max(),
        pairs,
    )
}
