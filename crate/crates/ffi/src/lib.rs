//! C ABI for genlap.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns a [`GenlapStatus`]; on failure the message is
//! available from [`genlap_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use faer::Mat;
use genlap::inference::{self, InferenceReport};
use genlap::laplacian::{self, RegularizationParams};
use genlap::model::{self, AdjacencyInstance, SimulationDesign};
use genlap::spectral::{self, SpikedSpectrum};
use genlap::{io, qve, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenlapStatus {
    Ok = 0,
    InvalidInput = 1,
    InvalidConfig = 2,
    Numeric = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

impl From<&Error> for GenlapStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) => GenlapStatus::InvalidConfig,
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::Format { .. }
            | Error::Json(_) => GenlapStatus::InvalidInput,
            Error::Io { .. } | Error::Csv(_) => GenlapStatus::Io,
            _ => GenlapStatus::Numeric,
        }
    }
}

/// Dense square matrix.
pub struct GenlapMatrix(Mat<f64>);

/// Leading eigenpairs ordered by eigenvalue magnitude.
pub struct GenlapSpectrum(SpikedSpectrum);

/// Output of [`genlap_infer`].
pub struct GenlapReport(InferenceReport);

/// Per-spike summary of a report (k is 0-based).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GenlapSpike {
    pub k: usize,
    pub delta_hat: f64,
    pub t_hat: f64,
    pub a_hat: f64,
    pub delta_tilde: f64,
    pub sigma_eig: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard<F>(f: F) -> GenlapStatus
where
    F: FnOnce() -> Result<(), GenlapStatus>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GenlapStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside genlap".into());
            GenlapStatus::Panic
        }
    }
}

fn fail(e: Error) -> GenlapStatus {
    let s = GenlapStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> GenlapStatus {
    set_error(format!("{what} is null"));
    GenlapStatus::NullPointer
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, GenlapStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, GenlapStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(Error::InvalidInput("path is not valid UTF-8".into())))?;
    Ok(PathBuf::from(s))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), GenlapStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn instance(m: &GenlapMatrix) -> Result<AdjacencyInstance, GenlapStatus> {
    AdjacencyInstance::observed(m.0.clone()).map_err(fail)
}

fn regularization(
    n: usize,
    alpha: f64,
    tau: f64,
    lambda: f64,
) -> Result<RegularizationParams, GenlapStatus> {
    RegularizationParams::uniform(n, tau, lambda, alpha).map_err(fail)
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next genlap call on the same thread.
#[no_mangle]
pub extern "C" fn genlap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn genlap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies an n x n row-major buffer into a new matrix.
///
/// # Safety
/// `data` must point to n * n readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_matrix_new(
    data: *const f64,
    n: usize,
    out: *mut *mut GenlapMatrix,
) -> GenlapStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| fail(Error::InvalidInput(format!("n = {n} overflows"))))?;
        let buf = std::slice::from_raw_parts(data, len);
        emit(out, GenlapMatrix(Mat::from_fn(n, n, |i, j| buf[i * n + j])))
    })
}

/// Reads a binary (`ATGL`) or `.mtx` Matrix Market file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_matrix_read(
    path: *const c_char,
    out: *mut *mut GenlapMatrix,
) -> GenlapStatus {
    guard(|| {
        let p = path_arg(path)?;
        let m = io::read_matrix(&p).map_err(fail)?;
        emit(out, GenlapMatrix(m))
    })
}

/// # Safety
/// `m` must be a live matrix handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn genlap_matrix_write(
    m: *const GenlapMatrix,
    path: *const c_char,
) -> GenlapStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let p = path_arg(path)?;
        io::write_matrix(&p, &m.0).map_err(fail)
    })
}

/// Dimension of the matrix, 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn genlap_matrix_dim(m: *const GenlapMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.nrows())
}

/// # Safety
/// `m` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_matrix_get(
    m: *const GenlapMatrix,
    i: usize,
    j: usize,
    out: *mut f64,
) -> GenlapStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = m.0.nrows();
        if i >= n || j >= n {
            return Err(fail(Error::InvalidInput(format!(
                "index ({i}, {j}) outside {n}x{n}"
            ))));
        }
        *out = m.0[(i, j)];
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn genlap_matrix_free(m: *mut GenlapMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Draws one network from the 3000-node mixed-membership design.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_simulate_standard(
    theta: f64,
    rho: f64,
    seed: u64,
    out: *mut *mut GenlapMatrix,
) -> GenlapStatus {
    guard(|| {
        let spec = SimulationDesign::standard(theta, rho)
            .to_spec()
            .map_err(fail)?;
        let h = model::build_dcmm_mean(&spec).map_err(fail)?;
        let x = model::sample_adjacency(&h, spec.noise(), seed);
        emit(out, GenlapMatrix(x.matrix))
    })
}

/// X = L^{-α} X̃ L^{-α} with uniform τ and λ.
///
/// # Safety
/// `x` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_laplacian(
    x: *const GenlapMatrix,
    alpha: f64,
    tau: f64,
    lambda: f64,
    out: *mut *mut GenlapMatrix,
) -> GenlapStatus {
    guard(|| {
        let x = instance(borrow(x, "matrix")?)?;
        let reg = regularization(x.n(), alpha, tau, lambda)?;
        let l = laplacian::build_l(&x, &reg).map_err(fail)?;
        let lap = laplacian::generalized_laplacian(&x, &l, alpha).map_err(fail)?;
        emit(out, GenlapMatrix(lap))
    })
}

/// All eigenvalues and the `m` leading eigenvectors of a symmetric matrix.
///
/// # Safety
/// `a` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_eig_spiked(
    a: *const GenlapMatrix,
    m: usize,
    out: *mut *mut GenlapSpectrum,
) -> GenlapStatus {
    guard(|| {
        let a = borrow(a, "matrix")?;
        let s = spectral::eig_spiked(&a.0, m).map_err(fail)?;
        emit(out, GenlapSpectrum(s))
    })
}

/// # Safety
/// `s` must be a live spectrum handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_spectrum_eigenvalue(
    s: *const GenlapSpectrum,
    k: usize,
    out: *mut f64,
) -> GenlapStatus {
    guard(|| {
        let s = borrow(s, "spectrum")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out =
            *s.0.eigenvalues
                .get(k)
                .ok_or_else(|| fail(Error::InvalidInput(format!("eigenvalue {k} out of range"))))?;
        Ok(())
    })
}

/// Copies eigenvector `k` into `buf`, which must hold `len` = n doubles.
///
/// # Safety
/// `s` must be a live spectrum handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn genlap_spectrum_vector(
    s: *const GenlapSpectrum,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> GenlapStatus {
    guard(|| {
        let s = borrow(s, "spectrum")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if k >= s.0.m() {
            return Err(fail(Error::InvalidInput(format!(
                "eigenvector {k} was not retained"
            ))));
        }
        if len != s.0.n() {
            return Err(fail(Error::DimensionMismatch {
                expected: s.0.n(),
                actual: len,
            }));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(s.0.vector(k));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn genlap_spectrum_free(s: *mut GenlapSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Estimated number of strong spikes.
///
/// # Safety
/// `x` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_estimate_rank(
    x: *const GenlapMatrix,
    alpha: f64,
    tau: f64,
    lambda: f64,
    c_exponent: f64,
    out: *mut usize,
) -> GenlapStatus {
    guard(|| {
        let x = instance(borrow(x, "matrix")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let reg = regularization(x.n(), alpha, tau, lambda)?;
        let l = laplacian::build_l(&x, &reg).map_err(fail)?;
        let lap = laplacian::generalized_laplacian(&x, &l, alpha).map_err(fail)?;
        let eigs = spectral::eigenvalues_by_magnitude(&lap).map_err(fail)?;
        *out = inference::estimate_k0(&eigs, &l.diag, &x, alpha, c_exponent)
            .map_err(fail)?
            .k0_hat;
        Ok(())
    })
}

/// Limit t of a spike δ whose weighted noise level is b = Σ_i c_i v_i².
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_solve_tk(
    delta: f64,
    b: f64,
    half_width: f64,
    out: *mut f64,
) -> GenlapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = qve::solve_tk_scalar(0, delta, b, half_width)
            .map_err(fail)?
            .t_k;
        Ok(())
    })
}

/// Plug-in analysis of an observed matrix. `k = 0` uses the rank estimate.
///
/// # Safety
/// `x` must be a live matrix handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_infer(
    x: *const GenlapMatrix,
    alpha: f64,
    tau: f64,
    lambda: f64,
    k: usize,
    c_exponent: f64,
    out: *mut *mut GenlapReport,
) -> GenlapStatus {
    guard(|| {
        let x = instance(borrow(x, "matrix")?)?;
        let reg = regularization(x.n(), alpha, tau, lambda)?;
        let k = (k > 0).then_some(k);
        let r = inference::infer(&x, &reg, k, c_exponent).map_err(fail)?;
        emit(out, GenlapReport(r))
    })
}

/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn genlap_report_k0(r: *const GenlapReport) -> usize {
    r.as_ref().map_or(0, |r| r.0.k0_hat)
}

/// Number of analysed spikes.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn genlap_report_spike_count(r: *const GenlapReport) -> usize {
    r.as_ref().map_or(0, |r| r.0.spikes.len())
}

/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_report_spike(
    r: *const GenlapReport,
    k: usize,
    out: *mut GenlapSpike,
) -> GenlapStatus {
    guard(|| {
        let r = borrow(r, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s =
            r.0.spikes
                .get(k)
                .ok_or_else(|| fail(Error::InvalidInput(format!("spike {k} out of range"))))?;
        *out = GenlapSpike {
            k: s.k,
            delta_hat: s.delta_hat,
            t_hat: s.t_hat,
            a_hat: s.a_hat,
            delta_tilde: s.delta_tilde,
            sigma_eig: s.sigma_eig,
        };
        Ok(())
    })
}

/// The report as JSON. Release with [`genlap_string_free`].
///
/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn genlap_report_json(
    r: *const GenlapReport,
    out: *mut *mut c_char,
) -> GenlapStatus {
    guard(|| {
        let r = borrow(r, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&r.0).map_err(|e| fail(e.into()))?;
        *out = CString::new(text)
            .map_err(|e| fail(Error::InvalidInput(e.to_string())))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn genlap_report_free(r: *mut GenlapReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by genlap and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn genlap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
