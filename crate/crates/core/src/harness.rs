//! Monte-Carlo replication runner over an (α, θ) grid, KDE curves and CSV
//! summaries.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use faer::Mat;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{Error, Result};
use crate::inference::{self, bias_ak, eigenvalue_variance, entry_variance, estimate_k0, StatKind};
use crate::laplacian::{self, inv_power, RegularizationParams};
use crate::model::{self, NoiseKind, SignalMatrix, SimulationDesign};
use crate::qve::{self, QveApprox, DEFAULT_HALF_WIDTH};
use crate::rng;
use crate::spectral::{self, SpikedSpectrum};
use crate::util::{mean, pairwise_sum, sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionMode {
    /// δ̂_k - A_k centered at t_k.
    #[serde(rename = "theoretical_Ak", alias = "theoretical_ak")]
    TheoreticalAk,
    /// δ̂_k - Â_{k,0} centered at t_k.
    #[serde(rename = "plugin_Ak", alias = "plugin_ak")]
    PluginAk,
    /// The shrunk eigenvalue δ̃_k centered at δ_k.
    #[serde(
        rename = "plugin_Ak_plus_empirical",
        alias = "plugin_ak_plus_empirical"
    )]
    PluginAkPlusEmpirical,
}

impl CorrectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionMode::TheoreticalAk => "theoretical_Ak",
            CorrectionMode::PluginAk => "plugin_Ak",
            CorrectionMode::PluginAkPlusEmpirical => "plugin_Ak_plus_empirical",
        }
    }
}

impl fmt::Display for CorrectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "theoretical_ak" | "theoretical" => Ok(CorrectionMode::TheoreticalAk),
            "plugin_ak" | "plugin" => Ok(CorrectionMode::PluginAk),
            "plugin_ak_plus_empirical" | "empirical" => Ok(CorrectionMode::PluginAkPlusEmpirical),
            _ => Err(Error::InvalidConfig(format!(
                "unknown correction mode {s:?}"
            ))),
        }
    }
}

fn default_ks() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_half_width() -> f64 {
    DEFAULT_HALF_WIDTH
}

fn default_kde_grid() -> usize {
    512
}

fn default_true() -> bool {
    true
}

fn default_c_exponent() -> f64 {
    inference::DEFAULT_C_EXPONENT
}

fn default_mode() -> CorrectionMode {
    CorrectionMode::TheoreticalAk
}

/// Experiment grid and run settings. Spike indices `ks` and nodes in
/// `entry_nodes` are 1-based, as they appear in the output tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n0: usize,
    pub rho: f64,
    #[serde(alias = "theta")]
    pub thetas: Vec<f64>,
    #[serde(alias = "alpha")]
    pub alphas: Vec<f64>,
    pub tau: f64,
    pub lambda: f64,
    #[serde(alias = "R")]
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_c_exponent")]
    pub c_exponent: f64,
    #[serde(default = "default_mode")]
    pub correction_mode: CorrectionMode,
    pub output_dir: PathBuf,
    /// Mixed-membership profiles; the standard four when absent.
    #[serde(default)]
    pub mixed_rows: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    /// Defaults to the first mixed node.
    #[serde(default)]
    pub entry_nodes: Option<Vec<usize>>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Spikes removed when estimating the noise in the plug-in modes;
    /// defaults to K.
    #[serde(default)]
    pub refine_rank: Option<usize>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_kde_grid")]
    pub kde_grid: usize,
    #[serde(default = "default_true")]
    pub record_rank: bool,
    #[serde(default = "default_true")]
    pub write_replications: bool,
}

impl ExperimentConfig {
    /// The 3000-node design over the given grid.
    pub fn standard(
        alphas: Vec<f64>,
        thetas: Vec<f64>,
        reps: usize,
        seed: u64,
        output_dir: PathBuf,
    ) -> Self {
        let d = SimulationDesign::standard(1.0, 0.2);
        Self {
            n: d.n,
            k: d.k,
            n0: d.n0,
            rho: d.rho,
            thetas,
            alphas,
            tau: d.tau,
            lambda: d.lambda,
            reps,
            seed,
            c_exponent: inference::DEFAULT_C_EXPONENT,
            correction_mode: CorrectionMode::TheoreticalAk,
            output_dir,
            mixed_rows: None,
            noise_kind: NoiseKind::Bernoulli,
            ks: default_ks(),
            entry_nodes: None,
            threads: None,
            refine_rank: None,
            half_width: DEFAULT_HALF_WIDTH,
            kde_grid: default_kde_grid(),
            record_rank: true,
            write_replications: true,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn design(&self, theta: f64) -> SimulationDesign {
        let standard = SimulationDesign::standard(theta, self.rho);
        SimulationDesign {
            n: self.n,
            k: self.k,
            communities: self.k,
            n0: self.n0,
            rho: self.rho,
            theta,
            mixed_rows: self.mixed_rows.clone().unwrap_or(standard.mixed_rows),
            noise_kind: self.noise_kind,
            tau: self.tau,
            lambda: self.lambda,
        }
    }

    /// 1-based entry nodes after applying the default.
    pub fn entry_nodes(&self) -> Vec<usize> {
        match &self.entry_nodes {
            Some(v) => v.clone(),
            None => vec![self.k * self.n0 + 1],
        }
    }

    pub fn refine_rank(&self) -> usize {
        self.refine_rank.unwrap_or(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.reps == 0 {
            return bad("reps must be >= 1".into());
        }
        if self.reps > u32::MAX as usize {
            return bad(format!("reps = {} is too large", self.reps));
        }
        if self.alphas.is_empty() || self.thetas.is_empty() {
            return bad("alpha and theta lists must be non-empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return bad(format!("alpha must be positive, got {a}"));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return bad(format!("theta must lie in (0, 1], got {t}"));
        }
        if let Some(k) = self.ks.iter().find(|k| **k == 0 || **k > self.k) {
            return bad(format!("spike index {k} outside 1..={}", self.k));
        }
        if let Some(i) = self.entry_nodes().iter().find(|i| **i == 0 || **i > self.n) {
            return bad(format!("entry node {i} outside 1..={}", self.n));
        }
        let r = self.refine_rank();
        if r == 0 || r > self.n {
            return bad(format!("refine_rank = {r} is out of range"));
        }
        if self.correction_mode != CorrectionMode::TheoreticalAk && self.ks.iter().any(|&k| k > r) {
            return bad(format!(
                "refine_rank = {r} is below a requested spike index"
            ));
        }
        if self.kde_grid < 2 {
            return bad("kde_grid must be >= 2".into());
        }
        if !(self.half_width > 0.0) {
            return bad(format!(
                "half_width must be positive, got {}",
                self.half_width
            ));
        }
        for &theta in &self.thetas {
            self.design(theta).to_spec()?;
        }
        Ok(())
    }

    fn needs_vectors(&self) -> bool {
        self.correction_mode != CorrectionMode::TheoreticalAk || !self.entry_nodes().is_empty()
    }
}

/// Population quantities for one spike of one grid cell (k is 0-based).
#[derive(Debug, Clone, Serialize)]
pub struct SpikeTruth {
    pub k: usize,
    pub delta: f64,
    pub t: f64,
    pub a: f64,
    pub varsigma: f64,
}

/// Population eigenvector entry and its SD (k, i 0-based).
#[derive(Debug, Clone, Serialize)]
pub struct EntryTruth {
    pub k: usize,
    pub i: usize,
    pub v: f64,
    pub sigma: f64,
}

/// Everything a cell's replications are compared against.
#[derive(Debug, Clone)]
pub struct CellTruth {
    pub alpha: f64,
    pub theta: f64,
    pub h: SignalMatrix,
    pub reg: RegularizationParams,
    pub lambda: Vec<f64>,
    /// Population eigenvalues by magnitude (all K) and aligned vectors.
    pub spectrum: SpikedSpectrum,
    /// One entry per requested spike; `None` when t_k could not be solved.
    pub spikes: Vec<Option<SpikeTruth>>,
    pub entries: Vec<EntryTruth>,
}

impl CellTruth {
    pub fn spike(&self, k: usize) -> Option<&SpikeTruth> {
        self.spikes.iter().flatten().find(|s| s.k == k)
    }

    pub fn entry(&self, k: usize, i: usize) -> Option<&EntryTruth> {
        self.entries.iter().find(|e| e.k == k && e.i == i)
    }
}

pub fn cell_truth(config: &ExperimentConfig, alpha: f64, theta: f64) -> Result<CellTruth> {
    let spec = config.design(theta).to_spec()?;
    let h = model::build_dcmm_mean(&spec)?;
    let s = model::noise_variances(&h, spec.noise());
    let n = h.n();
    let reg = RegularizationParams::uniform(n, config.tau, config.lambda, alpha)?;
    let lam = laplacian::population_lambda(&h, &reg)?;
    let pop = laplacian::population_laplacian(&h, &lam, alpha)?;
    let raw = spectral::eig_spiked(&pop, config.k)?;
    let mut vecs = Mat::<f64>::zeros(n, config.k);
    for k in 0..config.k {
        vecs.col_as_slice_mut(k)
            .copy_from_slice(&spectral::align_sign(raw.vector(k), None));
    }
    let spectrum = SpikedSpectrum {
        eigenvalues: raw.eigenvalues,
        eigenvectors: vecs,
    };
    let delta = &spectrum.eigenvalues[..config.k];
    let sigma = qve::build_sigma(&lam.diag, alpha, &s)?;
    let approx = QveApprox::quadratic(&sigma);

    let mut spikes = Vec::with_capacity(config.ks.len());
    let mut entries = Vec::new();
    let nodes = config.entry_nodes();
    for &k1 in &config.ks {
        let k = k1 - 1;
        let sol = match qve::solve_tk(k, delta, &spectrum.eigenvectors, &approx, config.half_width)
        {
            Ok(sol) => sol,
            Err(e) => {
                warn!("alpha={alpha} theta={theta} k={k1}: no limit t_k ({e}); spike skipped");
                spikes.push(None);
                continue;
            }
        };
        let v = spectrum.vector(k);
        let a = bias_ak(sol.t_k, v, &lam.diag, &s, &reg.tau, alpha)?;
        let var = eigenvalue_variance(sol.t_k, v, &lam.diag, &s, &reg.tau, alpha)?;
        spikes.push(Some(SpikeTruth {
            k,
            delta: delta[k],
            t: sol.t_k,
            a,
            varsigma: var.sqrt(),
        }));
        for &i1 in &nodes {
            let i = i1 - 1;
            let var = entry_variance(i, sol.t_k, v, &lam.diag, &s, alpha)?;
            entries.push(EntryTruth {
                k,
                i,
                v: v[i],
                sigma: var.sqrt(),
            });
        }
    }
    Ok(CellTruth {
        alpha,
        theta,
        h,
        lambda: lam.diag,
        reg,
        spectrum,
        spikes,
        entries,
    })
}

/// Statistics of one replication (indices 0-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    /// (k, corrected eigenvalue statistic)
    pub eigenvalues: Vec<(usize, f64)>,
    /// (k, i, rescaled entry (L_i/Λ_i)^α v̂_k(i))
    pub entries: Vec<(usize, usize, f64)>,
    pub k0_hat: Option<usize>,
}

fn run_replication(
    config: &ExperimentConfig,
    truth: &CellTruth,
    cell: u32,
    rep: usize,
) -> Result<RepRecord> {
    let mut rng = rng::stream(config.seed, cell, rep as u32);
    let x = model::sample_adjacency_with(&truth.h, config.noise_kind, &mut rng);
    let l = laplacian::build_l(&x, &truth.reg)?;
    let alpha = truth.alpha;
    let lap = laplacian::generalized_laplacian(&x, &l, alpha)?;

    let (eigenvalues, spectrum) = if config.needs_vectors() {
        let max_k = config.ks.iter().copied().max().unwrap_or(0);
        let m = match config.correction_mode {
            CorrectionMode::TheoreticalAk => max_k,
            _ => max_k.max(config.refine_rank()),
        };
        let raw = spectral::eig_spiked(&lap, m)?;
        let mut vecs = Mat::<f64>::zeros(x.n(), m);
        for k in 0..m {
            let reference = (k < truth.spectrum.m()).then(|| truth.spectrum.vector(k));
            vecs.col_as_slice_mut(k)
                .copy_from_slice(&spectral::align_sign(raw.vector(k), reference));
        }
        let s = SpikedSpectrum {
            eigenvalues: raw.eigenvalues,
            eigenvectors: vecs,
        };
        (s.eigenvalues.clone(), Some(s))
    } else {
        (spectral::eigenvalues_by_magnitude(&lap)?, None)
    };

    let k0_hat = if config.record_rank {
        Some(estimate_k0(&eigenvalues, &l.diag, &x, alpha, config.c_exponent)?.k0_hat)
    } else {
        None
    };

    let refinement = match (&config.correction_mode, &spectrum) {
        (CorrectionMode::TheoreticalAk, _) => None,
        (_, Some(s)) => Some(inference::refine(
            &x,
            &l,
            s,
            config.refine_rank(),
            &truth.reg,
        )?),
        (_, None) => unreachable!("plug-in modes always compute eigenvectors"),
    };

    let mut eig_stats = Vec::new();
    for st in truth.spikes.iter().flatten() {
        let k = st.k;
        let value = match (&config.correction_mode, &refinement) {
            (CorrectionMode::TheoreticalAk, _) => eigenvalues[k] - st.a,
            (CorrectionMode::PluginAk, Some(r)) => r.eig[k].t_hat,
            (CorrectionMode::PluginAkPlusEmpirical, Some(r)) => r.eig[k].delta_tilde,
            _ => unreachable!(),
        };
        eig_stats.push((k, value));
    }

    let mut entry_stats = Vec::new();
    if let Some(s) = &spectrum {
        let l_alpha = inv_power(&l.diag, -alpha)?;
        let lam_alpha = inv_power(&truth.lambda, alpha)?;
        for e in &truth.entries {
            let rescaled = l_alpha[e.i] * lam_alpha[e.i] * s.vector(e.k)[e.i];
            entry_stats.push((e.k, e.i, rescaled));
        }
    }
    Ok(RepRecord {
        rep,
        eigenvalues: eig_stats,
        entries: entry_stats,
        k0_hat,
    })
}

/// One row of a summary table (k, i 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub alpha: f64,
    pub theta: f64,
    pub k: usize,
    pub i: Option<usize>,
    pub emp_mean: f64,
    pub asym_value: f64,
    pub emp_sd: f64,
    pub asym_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Standard normal density on `grid`.
    pub reference: Vec<f64>,
}

impl KdeCurve {
    /// Trapezoid rule over the grid.
    pub fn integral(&self) -> f64 {
        let parts: Vec<f64> = self
            .grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .collect();
        pairwise_sum(&parts)
    }
}

/// Silverman's rule: 0.9 min(sd, IQR / 1.34) R^{-1/5}.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "KDE needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::DegenerateBandwidth);
    }
    let s = sd(samples);
    let iqr = Data::new(samples.to_vec()).interquartile_range();
    // a heavily tied sample can have IQR = 0 while sd > 0
    let spread = if iqr > 0.0 { s.min(iqr / 1.34) } else { s };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

pub fn kde_gaussian(samples: &[f64], grid_size: usize) -> Result<KdeCurve> {
    let h = silverman_bandwidth(samples)?;
    kde_with_bandwidth(samples, grid_size, h)
}

/// Gaussian KDE on `grid_size` equispaced points over [min - 3h, max + 3h].
pub fn kde_with_bandwidth(samples: &[f64], grid_size: usize, h: f64) -> Result<KdeCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KDE of an empty sample".into()));
    }
    if grid_size < 2 {
        return Err(Error::InvalidInput(format!(
            "grid_size must be >= 2, got {grid_size}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DegenerateBandwidth);
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|g| lo + step * g as f64).collect();
    let std = Normal::standard();
    let norm = 1.0 / (samples.len() as f64 * h);
    let density = grid
        .iter()
        .map(|&x| {
            let terms: Vec<f64> = samples.iter().map(|&xi| std.pdf((x - xi) / h)).collect();
            norm * pairwise_sum(&terms)
        })
        .collect();
    let reference = grid.iter().map(|&x| std.pdf(x)).collect();
    Ok(KdeCurve {
        grid,
        density,
        bandwidth: h,
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²), the Kolmogorov tail.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // the alternating series converges slowly here and Q is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against N(0, 1), with Stephens'
/// small-sample adjustment of the asymptotic p-value.
pub fn ks_test_normal(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("KS test of an empty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let std = Normal::standard();
    let mut d: f64 = 0.0;
    for (idx, &x) in xs.iter().enumerate() {
        let f = std.cdf(x);
        d = d.max((idx + 1) as f64 / n - f).max(f - idx as f64 / n);
    }
    let sn = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d),
    })
}

/// A KDE curve tagged with the cell and statistic it belongs to.
#[derive(Debug, Clone)]
pub struct TaggedCurve {
    pub stat: String,
    pub alpha: f64,
    pub theta: f64,
    pub k: usize,
    pub curve: KdeCurve,
}

impl TaggedCurve {
    pub fn file_name(&self) -> String {
        format!(
            "kde_{}_{}_{}_{}.csv",
            self.stat, self.alpha, self.theta, self.k
        )
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub alpha: f64,
    pub theta: f64,
    pub spikes: Vec<SpikeTruth>,
    pub entries: Vec<EntryTruth>,
    /// Successful replications in replication order.
    pub reps: Vec<RepRecord>,
    pub failures: usize,
}

impl CellResult {
    pub fn eigenvalue_samples(&self, k: usize) -> Vec<f64> {
        self.reps
            .iter()
            .filter_map(|r| r.eigenvalues.iter().find(|e| e.0 == k).map(|e| e.1))
            .collect()
    }

    pub fn entry_samples(&self, k: usize, i: usize) -> Vec<f64> {
        self.reps
            .iter()
            .filter_map(|r| r.entries.iter().find(|e| e.0 == k && e.1 == i).map(|e| e.2))
            .collect()
    }

    pub fn k0_samples(&self) -> Vec<usize> {
        self.reps.iter().filter_map(|r| r.k0_hat).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    pub eigenvalue_rows: Vec<SummaryRow>,
    pub entry_rows: Vec<SummaryRow>,
    pub curves: Vec<TaggedCurve>,
    pub cells: Vec<CellResult>,
}

/// Center and scale used to standardize a cell's eigenvalue statistic.
fn eigen_reference(mode: CorrectionMode, s: &SpikeTruth) -> (f64, f64) {
    match mode {
        CorrectionMode::PluginAkPlusEmpirical => (s.delta, s.varsigma),
        _ => (s.t, s.varsigma),
    }
}

pub fn run_montecarlo(config: &ExperimentConfig) -> Result<MonteCarloOutput> {
    config.validate()?;
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let mut out = MonteCarloOutput {
        eigenvalue_rows: Vec::new(),
        entry_rows: Vec::new(),
        curves: Vec::new(),
        cells: Vec::new(),
    };
    let mut cell_id = 0u32;
    for &alpha in &config.alphas {
        for &theta in &config.thetas {
            info!("cell alpha={alpha} theta={theta}: population quantities");
            let truth = cell_truth(config, alpha, theta)?;
            let results: Vec<Result<RepRecord>> = pool.install(|| {
                (0..config.reps)
                    .into_par_iter()
                    .map(|rep| run_replication(config, &truth, cell_id, rep))
                    .collect()
            });
            let mut reps = Vec::with_capacity(config.reps);
            let mut failures = 0;
            for (rep, r) in results.into_iter().enumerate() {
                match r {
                    Ok(rec) => reps.push(rec),
                    Err(e) => {
                        warn!("alpha={alpha} theta={theta} rep={rep}: {e}");
                        failures += 1;
                    }
                }
            }
            if failures * 100 > config.reps {
                return Err(Error::TooManyFailures {
                    failed: failures,
                    total: config.reps,
                });
            }
            let cell = CellResult {
                alpha,
                theta,
                spikes: truth.spikes.iter().flatten().cloned().collect(),
                entries: truth.entries.clone(),
                reps,
                failures,
            };
            summarize_cell(config, &cell, &mut out)?;
            out.cells.push(cell);
            cell_id += 1;
        }
    }
    Ok(out)
}

fn summarize_cell(
    config: &ExperimentConfig,
    cell: &CellResult,
    out: &mut MonteCarloOutput,
) -> Result<()> {
    let (alpha, theta) = (cell.alpha, cell.theta);
    let single_node = cell
        .entries
        .iter()
        .map(|e| e.i)
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        <= 1;
    for s in &cell.spikes {
        let xs = cell.eigenvalue_samples(s.k);
        if xs.is_empty() {
            continue;
        }
        let (center, scale) = eigen_reference(config.correction_mode, s);
        out.eigenvalue_rows.push(SummaryRow {
            alpha,
            theta,
            k: s.k + 1,
            i: None,
            emp_mean: mean(&xs),
            asym_value: center,
            emp_sd: sd(&xs),
            asym_sd: scale,
        });
        let z = xs
            .iter()
            .map(|&x| inference::standardize(StatKind::Eigenvalue, x, center, scale))
            .collect::<Result<Vec<_>>>()?;
        match kde_gaussian(&z, config.kde_grid) {
            Ok(curve) => out.curves.push(TaggedCurve {
                stat: "eigenvalue".into(),
                alpha,
                theta,
                k: s.k + 1,
                curve,
            }),
            Err(e) => warn!(
                "alpha={alpha} theta={theta} k={}: no eigenvalue KDE ({e})",
                s.k + 1
            ),
        }
    }
    for e in &cell.entries {
        let xs = cell.entry_samples(e.k, e.i);
        if xs.is_empty() {
            continue;
        }
        out.entry_rows.push(SummaryRow {
            alpha,
            theta,
            k: e.k + 1,
            i: Some(e.i + 1),
            emp_mean: mean(&xs),
            asym_value: e.v,
            emp_sd: sd(&xs),
            asym_sd: e.sigma,
        });
        let z = xs
            .iter()
            .map(|&x| inference::standardize(StatKind::Entry, x, e.v, e.sigma))
            .collect::<Result<Vec<_>>>()?;
        let stat = if single_node {
            "entry".to_string()
        } else {
            format!("entry{}", e.i + 1)
        };
        match kde_gaussian(&z, config.kde_grid) {
            Ok(curve) => out.curves.push(TaggedCurve {
                stat,
                alpha,
                theta,
                k: e.k + 1,
                curve,
            }),
            Err(err) => warn!(
                "alpha={alpha} theta={theta} k={} i={}: no entry KDE ({err})",
                e.k + 1,
                e.i + 1
            ),
        }
    }
    Ok(())
}

const EIGENVALUE_HEADER: [&str; 7] = [
    "alpha",
    "theta",
    "k",
    "emp_mean",
    "asym_value",
    "emp_sd",
    "asym_sd",
];
const ENTRY_HEADER: [&str; 8] = [
    "alpha",
    "theta",
    "k",
    "i",
    "emp_mean",
    "asym_value",
    "emp_sd",
    "asym_sd",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a summary table; rows with `i` set produce the eigenvector layout.
pub fn write_summary(path: &Path, rows: &[SummaryRow], with_entry: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    if with_entry {
        w.write_record(ENTRY_HEADER)?;
    } else {
        w.write_record(EIGENVALUE_HEADER)?;
    }
    for r in rows {
        let mut rec = vec![r.alpha.to_string(), r.theta.to_string(), r.k.to_string()];
        if with_entry {
            let i = r.i.ok_or_else(|| {
                Error::InvalidInput("eigenvector row without a node index".into())
            })?;
            rec.push(i.to_string());
        }
        rec.extend(
            [r.emp_mean, r.asym_value, r.emp_sd, r.asym_sd]
                .iter()
                .map(f64::to_string),
        );
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let with_entry = if header == ENTRY_HEADER {
        true
    } else if header == EIGENVALUE_HEADER {
        false
    } else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unexpected header {header:?}"),
        });
    };
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |idx: usize| -> Result<f64> {
            rec[idx]
                .parse()
                .map_err(|_| bad(format!("bad number {:?}", &rec[idx])))
        };
        let u = |idx: usize| -> Result<usize> {
            rec[idx]
                .parse()
                .map_err(|_| bad(format!("bad index {:?}", &rec[idx])))
        };
        let o = if with_entry { 1 } else { 0 };
        rows.push(SummaryRow {
            alpha: f(0)?,
            theta: f(1)?,
            k: u(2)?,
            i: if with_entry { Some(u(3)?) } else { None },
            emp_mean: f(3 + o)?,
            asym_value: f(4 + o)?,
            emp_sd: f(5 + o)?,
            asym_sd: f(6 + o)?,
        });
    }
    Ok(rows)
}

pub fn write_kde(path: &Path, curve: &KdeCurve) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "density", "normal_ref"])?;
    for ((x, d), r) in curve.grid.iter().zip(&curve.density).zip(&curve.reference) {
        w.write_record([x.to_string(), d.to_string(), r.to_string()])?;
    }
    finish(w, path)
}

fn write_replications(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["alpha", "theta", "rep", "stat", "k", "i", "value"])?;
    for c in cells {
        let (a, t) = (c.alpha.to_string(), c.theta.to_string());
        for r in &c.reps {
            let rep = r.rep.to_string();
            for (k, v) in &r.eigenvalues {
                w.write_record([
                    &a,
                    &t,
                    &rep,
                    "eigenvalue",
                    &(k + 1).to_string(),
                    "",
                    &v.to_string(),
                ])?;
            }
            for (k, i, v) in &r.entries {
                w.write_record([
                    &a,
                    &t,
                    &rep,
                    "entry",
                    &(k + 1).to_string(),
                    &(i + 1).to_string(),
                    &v.to_string(),
                ])?;
            }
            if let Some(k0) = r.k0_hat {
                w.write_record([&a, &t, &rep, "k0_hat", "", "", &k0.to_string()])?;
            }
        }
    }
    finish(w, path)
}

#[derive(Debug, Serialize)]
struct CellManifest {
    alpha: f64,
    theta: f64,
    replications: usize,
    failures: usize,
    spikes: Vec<SpikeTruth>,
    entries: Vec<EntryTruth>,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    config: &'a ExperimentConfig,
    git_describe: String,
    seed: u64,
    version: &'static str,
    cells: Vec<CellManifest>,
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes summaries, KDE curves, the optional replication store and the run
/// manifest to `config.output_dir`. Returns the paths written.
pub fn emit(config: &ExperimentConfig, output: &MonteCarloOutput) -> Result<Vec<PathBuf>> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let p = dir.join("summary_eigenvalues.csv");
    write_summary(&p, &output.eigenvalue_rows, false)?;
    written.push(p);
    let p = dir.join("summary_eigenvectors.csv");
    write_summary(&p, &output.entry_rows, true)?;
    written.push(p);

    for c in &output.curves {
        let p = dir.join(c.file_name());
        write_kde(&p, &c.curve)?;
        written.push(p);
    }
    if config.write_replications {
        let p = dir.join("replications.csv");
        write_replications(&p, &output.cells)?;
        written.push(p);
    }

    let manifest = RunManifest {
        config,
        git_describe: git_describe(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION"),
        cells: output
            .cells
            .iter()
            .map(|c| CellManifest {
                alpha: c.alpha,
                theta: c.theta,
                replications: c.reps.len(),
                failures: c.failures,
                spikes: c.spikes.clone(),
                entries: c.entries.clone(),
            })
            .collect(),
    };
    let p = dir.join("run_manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}
