//! C ABI for the OTFS toolkit.
//!
//! Objects are opaque handles created and released by this library. Every fallible function
//! returns an [`OtfsStatus`]; on failure, [`otfs_last_error`] describes the most recent error
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use otfs::analysis::{
    ber_lower_bound, ber_lower_bound_asymptotic, pep_exact_rank_one, rank_one_singular_value,
};
use otfs::harness::report::{sweep_csv, write_sweep};
use otfs::harness::{run_rank_analysis, run_sweep, ExperimentConfig, SweepResult};
use otfs::modem::{self, TimeFrame};
use otfs::{Complex64, DDFrame, OtfsError, OtfsGrid};

/// Status codes. Values 2 to 4 match the exit codes of the `otfs` binary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtfsStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Cap = 3,
    Numerical = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// A complex sample, layout-compatible with `double[2]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OtfsComplex {
    pub re: f64,
    pub im: f64,
}

/// One SNR point of a sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OtfsSweepPoint {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Summary of a rank scan. `kappa` saturates at `UINT64_MAX`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OtfsRankSummary {
    pub min_rank: u64,
    pub diversity_order: u64,
    pub kappa: u64,
    /// 1 when every ordered pair was covered, 0 for a sampled scan.
    pub exhaustive: u8,
}

/// Opaque experiment configuration.
pub struct OtfsConfig(ExperimentConfig);

/// Opaque sweep result.
pub struct OtfsSweep(SweepResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &OtfsError) -> OtfsStatus {
    match e.exit_code() {
        1 => OtfsStatus::Io,
        3 => OtfsStatus::Cap,
        4 => OtfsStatus::Numerical,
        _ => OtfsStatus::Config,
    }
}

enum Failure {
    Otfs(OtfsError),
    Arg(&'static str),
}

impl From<OtfsError> for Failure {
    fn from(e: OtfsError) -> Self {
        Failure::Otfs(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OtfsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtfsStatus::Ok,
        Ok(Err(Failure::Otfs(e))) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg.to_string());
            OtfsStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic".into());
            OtfsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg("string argument is not valid UTF-8"))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Arg(what))
}

unsafe fn slice_arg<'a, T>(
    p: *const T,
    len: usize,
    what: &'static str,
) -> Result<&'a [T], Failure> {
    if p.is_null() && len > 0 {
        return Err(Failure::Arg(what));
    }
    if len == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn to_c(v: Complex64) -> OtfsComplex {
    OtfsComplex { re: v.re, im: v.im }
}

fn from_c(v: &OtfsComplex) -> Complex64 {
    Complex64::new(v.re, v.im)
}

/// Message of the last error on this thread, or NULL. Valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn otfs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parse a TOML configuration string.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_from_toml(
    text: *const c_char,
    out: *mut *mut OtfsConfig,
) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Arg("out is NULL"));
        }
        let cfg = ExperimentConfig::from_toml_str(str_arg(text, "text is NULL")?)?;
        *out = Box::into_raw(Box::new(OtfsConfig(cfg)));
        Ok(())
    })
}

/// Load a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_from_file(
    path: *const c_char,
    out: *mut *mut OtfsConfig,
) -> OtfsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Arg("out is NULL"));
        }
        let cfg = ExperimentConfig::from_path(str_arg(path, "path is NULL")?)?;
        *out = Box::into_raw(Box::new(OtfsConfig(cfg)));
        Ok(())
    })
}

/// Release a configuration. NULL is ignored.
///
/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_free(cfg: *mut OtfsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Replace the base seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_set_seed(cfg: *mut OtfsConfig, seed: u64) -> OtfsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or(Failure::Arg("cfg is NULL"))?;
        let mut next = cfg.0.clone();
        next.base_seed = seed;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Copy the hex fingerprint (64 characters plus NUL) into `buf`.
///
/// # Safety
/// `cfg` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn otfs_config_fingerprint(
    cfg: *const OtfsConfig,
    buf: *mut c_char,
    len: usize,
) -> OtfsStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg is NULL")?;
        let fp = cfg.0.fingerprint();
        if buf.is_null() || len < fp.len() + 1 {
            return Err(Failure::Arg("buffer too small for fingerprint"));
        }
        ptr::copy_nonoverlapping(fp.as_ptr() as *const c_char, buf, fp.len());
        *buf.add(fp.len()) = 0;
        Ok(())
    })
}

/// Run the configured BER sweep.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_run_sweep(
    cfg: *const OtfsConfig,
    out: *mut *mut OtfsSweep,
) -> OtfsStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg is NULL")?;
        if out.is_null() {
            return Err(Failure::Arg("out is NULL"));
        }
        let result = run_sweep(&cfg.0)?;
        *out = Box::into_raw(Box::new(OtfsSweep(result)));
        Ok(())
    })
}

/// Number of SNR points in a sweep; 0 for NULL.
///
/// # Safety
/// `sweep` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_len(sweep: *const OtfsSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.0.points.len())
}

/// Bits carried per frame.
///
/// # Safety
/// `sweep` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_bits_per_frame(sweep: *const OtfsSweep) -> u64 {
    sweep.as_ref().map_or(0, |s| s.0.bits_per_frame)
}

/// Copy point `index` into `out`.
///
/// # Safety
/// `sweep` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_point(
    sweep: *const OtfsSweep,
    index: usize,
    out: *mut OtfsSweepPoint,
) -> OtfsStatus {
    guard(|| {
        let sweep = ref_arg(sweep, "sweep is NULL")?;
        let out = out.as_mut().ok_or(Failure::Arg("out is NULL"))?;
        let p = sweep
            .0
            .points
            .get(index)
            .ok_or(Failure::Arg("index out of range"))?;
        *out = OtfsSweepPoint {
            snr_db: p.snr_db,
            frames: p.frames,
            bit_errors: p.bit_errors,
            ber: p.ber,
            seed: p.seed,
            wall_time_s: p.wall_time_s,
        };
        Ok(())
    })
}

/// Write the sweep CSV to `path` and its TOML sidecar next to it.
///
/// # Safety
/// `sweep` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_write_csv(
    sweep: *const OtfsSweep,
    path: *const c_char,
) -> OtfsStatus {
    guard(|| {
        let sweep = ref_arg(sweep, "sweep is NULL")?;
        write_sweep(&sweep.0, Path::new(str_arg(path, "path is NULL")?))?;
        Ok(())
    })
}

/// CSV text of a sweep as a newly allocated string; release it with [`otfs_string_free`].
///
/// # Safety
/// `sweep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_csv(sweep: *const OtfsSweep) -> *mut c_char {
    match sweep.as_ref() {
        Some(s) => CString::new(sweep_csv(&s.0)).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// Release a sweep. NULL is ignored.
///
/// # Safety
/// `sweep` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otfs_sweep_free(sweep: *mut OtfsSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otfs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Rank scan of the configured geometry.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn otfs_rank(
    cfg: *const OtfsConfig,
    out: *mut OtfsRankSummary,
) -> OtfsStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg is NULL")?;
        let out = out.as_mut().ok_or(Failure::Arg("out is NULL"))?;
        let r = run_rank_analysis(&cfg.0)?;
        *out = OtfsRankSummary {
            min_rank: r.min_rank as u64,
            diversity_order: r.diversity_order() as u64,
            kappa: u64::try_from(r.kappa).unwrap_or(u64::MAX),
            exhaustive: matches!(r.certificate, otfs::analysis::Certificate::Exhaustive) as u8,
        };
        Ok(())
    })
}

/// OTFS modulation of an `M x N` delay-Doppler frame stored at `k + N l`; writes `M N`
/// time samples.
///
/// # Safety
/// `dd` must be readable and `out` writable for `m * n` elements.
#[no_mangle]
pub unsafe extern "C" fn otfs_modulate(
    m: usize,
    n: usize,
    dd: *const OtfsComplex,
    out: *mut OtfsComplex,
) -> OtfsStatus {
    guard(|| {
        let grid = OtfsGrid::new(m, n, 1.0)?;
        let x: Vec<Complex64> = slice_arg(dd, grid.frame_size(), "dd is NULL")?
            .iter()
            .map(from_c)
            .collect();
        if out.is_null() {
            return Err(Failure::Arg("out is NULL"));
        }
        let s = modem::otfs_modulate(&DDFrame::devectorize(grid, &x)?);
        for (i, v) in s.as_slice().iter().enumerate() {
            *out.add(i) = to_c(*v);
        }
        Ok(())
    })
}

/// Inverse of [`otfs_modulate`].
///
/// # Safety
/// `samples` must be readable and `out` writable for `m * n` elements.
#[no_mangle]
pub unsafe extern "C" fn otfs_demodulate(
    m: usize,
    n: usize,
    samples: *const OtfsComplex,
    out: *mut OtfsComplex,
) -> OtfsStatus {
    guard(|| {
        let grid = OtfsGrid::new(m, n, 1.0)?;
        let s: Vec<Complex64> = slice_arg(samples, grid.frame_size(), "samples is NULL")?
            .iter()
            .map(from_c)
            .collect();
        if out.is_null() {
            return Err(Failure::Arg("out is NULL"));
        }
        let y = modem::otfs_demodulate(&TimeFrame::new(s), &grid)?.vectorize();
        for (i, v) in y.iter().enumerate() {
            *out.add(i) = to_c(*v);
        }
        Ok(())
    })
}

/// BER lower bound for `kappa` rank-one pairs at linear SNR `gamma`.
#[no_mangle]
pub extern "C" fn otfs_ber_lower_bound(gamma: f64, m: usize, n: usize, kappa: u64) -> f64 {
    ber_lower_bound(gamma, m, n, kappa as u128)
}

/// High-SNR form of [`otfs_ber_lower_bound`].
#[no_mangle]
pub extern "C" fn otfs_ber_lower_bound_asymptotic(
    gamma: f64,
    m: usize,
    n: usize,
    kappa: u64,
) -> f64 {
    ber_lower_bound_asymptotic(gamma, m, n, kappa as u128)
}

/// Exact pairwise error probability of a rank-one BPSK difference.
#[no_mangle]
pub extern "C" fn otfs_pep_rank_one(gamma: f64, m: usize, n: usize) -> f64 {
    pep_exact_rank_one(gamma, m, n)
}

/// Nonzero singular value `sqrt(4 P M N)` of an all-constant BPSK difference.
#[no_mangle]
pub extern "C" fn otfs_rank_one_singular_value(m: usize, n: usize, p: usize) -> f64 {
    rank_one_singular_value(m, n, p)
}
