//! The generalized quadratic vector equation
//!
//! ```text
//! 1 / M_i(z) = -z - Σ_j Σ_ij M_j(z),   Σ_ij = Λ_i^{-2α} Λ_j^{-2α} s_ij,
//! ```
//!
//! its Laurent coefficients at infinity, the quadratic approximation
//! 𝓨(z) = diag(-1/z - c_i/z³), and the spiked-eigenvalue limit t_k.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::laplacian::inv_power;
use crate::util::matvec;

/// Default half-width h of the admissible set |δ|/(1+h) ≤ |x| ≤ (1+h)|δ|.
pub const DEFAULT_HALF_WIDTH: f64 = 0.5;

const NEWTON_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 100;
const MAX_FIXED_POINT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct SigmaMatrix {
    pub entries: Mat<f64>,
}

impl SigmaMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// c_i = Σ_j Σ_ij.
    pub fn row_sums(&self) -> Vec<f64> {
        // symmetric, so column sums
        (0..self.n())
            .map(|j| self.entries.col_as_slice(j).iter().sum())
            .collect()
    }

    /// 𝔐 = max_i Σ_j Σ_ij, the spectral-edge scale: the limiting noise
    /// spectrum lies in [-2√𝔐, 2√𝔐].
    pub fn max_row_sum(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, f64::max)
    }
}

pub fn build_sigma(lambda: &[f64], alpha: f64, s: &Mat<f64>) -> Result<SigmaMatrix> {
    let n = lambda.len();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.nrows(),
        });
    }
    let p = inv_power(lambda, 2.0 * alpha)?;
    Ok(SigmaMatrix {
        entries: Mat::from_fn(n, n, |i, j| p[i] * p[j] * s[(i, j)]),
    })
}

/// Diagonal Laurent coefficients Y_0..=Y_Lmax and the z⁻³ coefficient c.
#[derive(Debug, Clone)]
pub struct QveApprox {
    pub laurent: Vec<Vec<f64>>,
    pub quad_c: Vec<f64>,
}

impl QveApprox {
    pub fn new(sigma: &SigmaMatrix, lmax: usize) -> Result<Self> {
        Ok(Self {
            laurent: laurent_coeffs(sigma, lmax)?,
            quad_c: sigma.row_sums(),
        })
    }

    /// Only the quadratic approximation, without the Laurent table.
    pub fn quadratic(sigma: &SigmaMatrix) -> Self {
        Self {
            laurent: Vec::new(),
            quad_c: sigma.row_sums(),
        }
    }

    /// Diagonal of 𝓨(z).
    pub fn y_quad(&self, z: f64) -> Vec<f64> {
        self.quad_c
            .iter()
            .map(|c| -1.0 / z - c / (z * z * z))
            .collect()
    }

    /// Σ_{l ≤ Lmax} Y_l z^{-l}.
    pub fn laurent_eval(&self, z: Complex64) -> Vec<Complex64> {
        let n = self.quad_c.len();
        let w = 1.0 / z;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        let mut pow = Complex64::new(1.0, 0.0);
        for y in &self.laurent {
            for (o, yi) in out.iter_mut().zip(y) {
                *o += pow * yi;
            }
            pow *= w;
        }
        out
    }
}

/// Y_0 = 0, Y_1 = -I, Y_{l+1} 1 = -Σ_{m=0}^{l} Y_m Σ Y_{l-m} 1, diagonals
/// stored as vectors.
pub fn laurent_coeffs(sigma: &SigmaMatrix, lmax: usize) -> Result<Vec<Vec<f64>>> {
    if lmax < 1 {
        return Err(Error::InvalidInput("Lmax must be at least 1".into()));
    }
    let n = sigma.n();
    let mut y = vec![vec![0.0; n], vec![-1.0; n]];
    // sy[j] = Σ Y_j 1
    let mut sy = vec![vec![0.0; n], matvec(&sigma.entries, &y[1])];
    for l in 1..lmax {
        let mut next = vec![0.0; n];
        for m in 0..=l {
            let (ym, syl) = (&y[m], &sy[l - m]);
            for i in 0..n {
                next[i] -= ym[i] * syl[i];
            }
        }
        sy.push(matvec(&sigma.entries, &next));
        y.push(next);
    }
    y.truncate(lmax + 1);
    Ok(y)
}

/// Solves the QVE by the iteration M ← 1 / (-z - Σ M) started at -1/z,
/// stopping when the sup-norm change is at most `tol`.
pub fn qve_fixed_point(sigma: &SigmaMatrix, z: Complex64, tol: f64) -> Result<Vec<Complex64>> {
    let n = sigma.n();
    let mut m = vec![-1.0 / z; n];
    for _ in 0..MAX_FIXED_POINT {
        let re: Vec<f64> = m.iter().map(|c| c.re).collect();
        let im: Vec<f64> = m.iter().map(|c| c.im).collect();
        let (sr, si) = (matvec(&sigma.entries, &re), matvec(&sigma.entries, &im));
        let mut change = 0.0f64;
        for i in 0..n {
            let next = 1.0 / (-z - Complex64::new(sr[i], si[i]));
            change = change.max((next - m[i]).norm());
            m[i] = next;
        }
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(m);
        }
    }
    Err(Error::OutsideDomain {
        z: format!("{z}"),
        iterations: MAX_FIXED_POINT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TkMethod {
    Newton,
    Bisection,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TkSolution {
    pub k: usize,
    pub t_k: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: TkMethod,
}

/// Root of 1 + δ_k v_kᵀ 𝓨(x) v_k for the spike `k` (0-based).
pub fn solve_tk(
    k: usize,
    delta: &[f64],
    v: &Mat<f64>,
    approx: &QveApprox,
    half_width: f64,
) -> Result<TkSolution> {
    if k >= delta.len() || k >= v.ncols() {
        return Err(Error::InvalidInput(format!("spike index {k} out of range")));
    }
    let vk = v.col_as_slice(k);
    let b: f64 = vk.iter().zip(&approx.quad_c).map(|(x, c)| c * x * x).sum();
    solve_tk_scalar(k, delta[k], b, half_width)
}

/// f(x) = 1 - δ/x - δ b / x³ solved by Newton from x₀ = δ, with bisection
/// over the admissible component containing δ as a fallback.
pub fn solve_tk_scalar(k: usize, delta: f64, b: f64, half_width: f64) -> Result<TkSolution> {
    if !(delta != 0.0 && delta.is_finite()) {
        return Err(Error::NoValidLimit {
            k,
            reason: format!("spiked eigenvalue {delta} is zero or non-finite"),
        });
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "half-width must be positive, got {half_width}"
        )));
    }
    let f = |x: f64| 1.0 - delta / x - delta * b / (x * x * x);
    let df = |x: f64| delta / (x * x) + 3.0 * delta * b / (x * x * x * x);
    let lo_abs = delta.abs() / (1.0 + half_width);
    let hi_abs = delta.abs() * (1.0 + half_width);
    let inside = |x: f64| x.signum() == delta.signum() && x.abs() >= lo_abs && x.abs() <= hi_abs;

    let mut x = delta;
    for it in 0..MAX_NEWTON {
        let fx = f(x);
        if fx.abs() <= NEWTON_TOL {
            return Ok(TkSolution {
                k,
                t_k: x,
                iterations: it,
                residual: fx.abs(),
                method: TkMethod::Newton,
            });
        }
        let d = df(x);
        let next = x - fx / d;
        if !next.is_finite() || !inside(next) {
            break;
        }
        x = next;
    }

    // bisection on the component sign(δ)·[lo, hi]
    let (mut a, mut c) = (delta.signum() * lo_abs, delta.signum() * hi_abs);
    let (mut fa, fc) = (f(a), f(c));
    if fa.signum() == fc.signum() {
        return Err(Error::NoValidLimit {
            k,
            reason: format!(
                "no root of the limit equation within the admissible set around {delta}"
            ),
        });
    }
    let mut it = 0;
    loop {
        let mid = 0.5 * (a + c);
        let fm = f(mid);
        it += 1;
        if fm.abs() <= NEWTON_TOL || mid == a || mid == c || it > 2000 {
            if fm.abs() > NEWTON_TOL * 1e3 {
                return Err(Error::NoValidLimit {
                    k,
                    reason: format!("bisection stalled with residual {fm:e}"),
                });
            }
            return Ok(TkSolution {
                k,
                t_k: mid,
                iterations: it,
                residual: fm.abs(),
                method: TkMethod::Bisection,
            });
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            c = mid;
        }
    }
}

/// Left side of the full limit equation
///
/// ```text
/// 1 + δ_k v_kᵀΥ v_k - δ_k v_kᵀΥV₋ₖ (Δ₋ₖ⁻¹ + V₋ₖᵀΥV₋ₖ)⁻¹ V₋ₖᵀΥ v_k
/// ```
///
/// at real x, with Υ from the fixed-point solver. Validation only.
pub fn full_equation(
    k: usize,
    x: f64,
    delta: &[f64],
    v: &Mat<f64>,
    sigma: &SigmaMatrix,
) -> Result<f64> {
    let kk = v.ncols();
    let m = qve_fixed_point(sigma, Complex64::new(x, 0.0), 1e-14)?;
    let ups: Vec<f64> = m.iter().map(|c| c.re).collect();
    let uv = |a: usize, b: usize| -> f64 {
        let (va, vb) = (v.col_as_slice(a), v.col_as_slice(b));
        (0..ups.len()).map(|i| va[i] * ups[i] * vb[i]).sum()
    };
    let lead = 1.0 + delta[k] * uv(k, k);
    let others: Vec<usize> = (0..kk).filter(|&l| l != k).collect();
    if others.is_empty() {
        return Ok(lead);
    }
    let r = others.len();
    let mut a = Mat::<f64>::zeros(r, r);
    for (p, &lp) in others.iter().enumerate() {
        for (q, &lq) in others.iter().enumerate() {
            a[(p, q)] = uv(lp, lq) + if p == q { 1.0 / delta[lp] } else { 0.0 };
        }
    }
    let rhs = Mat::from_fn(r, 1, |p, _| uv(others[p], k));
    let sol = a.full_piv_lu().solve(&rhs);
    let frac: f64 = (0..r).map(|p| rhs[(p, 0)] * sol[(p, 0)]).sum();
    Ok(lead - delta[k] * frac)
}

/// Root of [`full_equation`] by secant iteration started from the
/// quadratic-approximation root.
pub fn solve_tk_full(
    k: usize,
    delta: &[f64],
    v: &Mat<f64>,
    sigma: &SigmaMatrix,
    start: f64,
) -> Result<f64> {
    let mut x0 = start;
    let mut x1 = start * (1.0 + 1e-6);
    let mut f0 = full_equation(k, x0, delta, v, sigma)?;
    for _ in 0..100 {
        let f1 = full_equation(k, x1, delta, v, sigma)?;
        if f1.abs() <= 1e-13 || f1 == f0 {
            return Ok(x1);
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
    }
    Err(Error::NoValidLimit {
        k,
        reason: "secant iteration on the full equation did not converge".into(),
    })
}
