//! C ABI over `uniformity_lab`.
//!
//! Every function returns a [`UlStatus`]; results go through out-pointers.
//! Handles are opaque and owned by the caller until passed to the matching
//! `_free`. On failure, `ul_last_error_message` returns a description that
//! stays valid until the next call on the same thread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use uniformity_lab::distmodel::{flat_alternative, sample_histogram, uniform};
use uniformity_lab::exponents::{sample_size, SampleSizeKind};
use uniformity_lab::mc::{estimate_error, Side, Tester};
use uniformity_lab::oracle::exact_error_rates_by;
use uniformity_lab::statistics::{default_beta, default_threshold};
use uniformity_lab::varianceopt::{min_nvar, Target};
use uniformity_lab::{Decision, Histogram, LabError, ProbabilityVector, StatisticKind, TesterSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    TooLarge = 3,
    DegenerateStatistic = 4,
    OutOfDomain = 5,
    OutOfValidity = 6,
    DivergentMgf = 7,
    QuadratureFailure = 8,
    Unsupported = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlKind {
    Collisions = 0,
    Squared = 1,
    Tv = 2,
    EmptyBins = 3,
    Singletons = 4,
    Huber = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlSide {
    Uniform = 0,
    Alternative = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlDecision {
    Uniform = 0,
    NonUniform = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlSampleSizeKind {
    Huber = 0,
    Squared = 1,
    Tv = 2,
    Superlinear = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlTarget {
    Qbar = 0,
    Qprime = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UlErrorEstimate {
    pub failures: u64,
    pub trials: u64,
    pub delta_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

/// Opaque tester handle.
pub struct UlTester(Tester);

/// Opaque probability vector handle.
pub struct UlDist(ProbabilityVector);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &LabError) -> UlStatus {
    match e {
        LabError::InvalidParameter(_) => UlStatus::InvalidParameter,
        LabError::TooLarge(_) => UlStatus::TooLarge,
        LabError::DegenerateStatistic(_) => UlStatus::DegenerateStatistic,
        LabError::OutOfDomain(_) => UlStatus::OutOfDomain,
        LabError::OutOfValidity(_) => UlStatus::OutOfValidity,
        LabError::DivergentMgf(_) => UlStatus::DivergentMgf,
        LabError::QuadratureFailure(_) => UlStatus::QuadratureFailure,
        LabError::Unsupported(_) => UlStatus::Unsupported,
    }
}

enum Fail {
    Null(&'static str),
    Lab(LabError),
}

impl From<LabError> for Fail {
    fn from(e: LabError) -> Self {
        Fail::Lab(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> UlStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UlStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            UlStatus::NullPointer
        }
        Ok(Err(Fail::Lab(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            UlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn kind_of(kind: UlKind, beta: f64) -> StatisticKind {
    match kind {
        UlKind::Collisions => StatisticKind::Collisions,
        UlKind::Squared => StatisticKind::Squared,
        UlKind::Tv => StatisticKind::Tv,
        UlKind::EmptyBins => StatisticKind::EmptyBins,
        UlKind::Singletons => StatisticKind::Singletons,
        UlKind::Huber => StatisticKind::Huber { beta },
    }
}

/// Message for the last failed call on this thread; empty after a success.
#[no_mangle]
pub extern "C" fn ul_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ul_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New tester. `beta` is read only for `UL_KIND_HUBER`. A NaN `threshold`
/// selects the default threshold for the kind.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_tester_new(
    kind: UlKind,
    beta: f64,
    n: usize,
    m: usize,
    epsilon: f64,
    threshold: f64,
    out: *mut *mut UlTester,
) -> UlStatus {
    guard(|| {
        let k = kind_of(kind, beta);
        if let StatisticKind::Huber { beta } = k {
            if !(beta >= 0.0) || !beta.is_finite() {
                return Err(Fail::Lab(LabError::InvalidParameter(format!("beta = {beta} must be finite and >= 0"))));
            }
        }
        let tau = if threshold.is_nan() { default_threshold(&k, n, m, epsilon)? } else { threshold };
        let spec = TesterSpec::new(k, n, m, epsilon, tau)?;
        write(out, Box::into_raw(Box::new(UlTester(Tester::Separable(spec)))), "out")
    })
}

/// Tester that accepts iff the empirical distribution is within ε/2 of uniform in TV.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_tester_new_superlinear_tv(n: usize, m: usize, epsilon: f64, out: *mut *mut UlTester) -> UlStatus {
    guard(|| {
        if n == 0 || m == 0 || !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Fail::Lab(LabError::InvalidParameter("need n, m >= 1 and epsilon in (0, 1)".into())));
        }
        write(out, Box::into_raw(Box::new(UlTester(Tester::SuperlinearTv { n, m, epsilon }))), "out")
    })
}

/// # Safety
/// `t` must come from `ul_tester_new*` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ul_tester_free(t: *mut UlTester) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live tester; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_tester_threshold(t: *const UlTester, out: *mut f64) -> UlStatus {
    guard(|| write(out, deref(t, "tester")?.0.threshold(), "out"))
}

/// Distribution from `len` probabilities summing to one.
///
/// # Safety
/// `probs` must point to `len` doubles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_dist_new(probs: *const f64, len: usize, out: *mut *mut UlDist) -> UlStatus {
    guard(|| {
        let p = ProbabilityVector::new(slice(probs, len, "probs")?.to_vec())?;
        write(out, Box::into_raw(Box::new(UlDist(p))), "out")
    })
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_dist_uniform(m: usize, out: *mut *mut UlDist) -> UlStatus {
    guard(|| write(out, Box::into_raw(Box::new(UlDist(uniform(m)?))), "out"))
}

/// Heavy set of `round(γm)` bins at `1/m + ε/l`, the rest at `1/m − ε/(m − l)`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_dist_flat(m: usize, epsilon: f64, gamma: f64, out: *mut *mut UlDist) -> UlStatus {
    guard(|| {
        let p = flat_alternative(m, epsilon, gamma)?.to_vector();
        write(out, Box::into_raw(Box::new(UlDist(p))), "out")
    })
}

/// # Safety
/// `d` must come from `ul_dist_*` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ul_dist_free(d: *mut UlDist) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Decision on a histogram of `len` bin counts.
///
/// # Safety
/// `counts` must point to `len` values; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_decide(t: *const UlTester, counts: *const usize, len: usize, out: *mut UlDecision) -> UlStatus {
    guard(|| {
        let t = deref(t, "tester")?;
        let hist = Histogram::new(slice(counts, len, "counts")?.to_vec());
        let d = match t.0.decide(&hist)? {
            Decision::Uniform => UlDecision::Uniform,
            Decision::NonUniform => UlDecision::NonUniform,
        };
        write(out, d, "out")
    })
}

/// One multinomial histogram; fills `counts_out` (length `len`, must equal m).
///
/// # Safety
/// `d` must be live; `counts_out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ul_sample_histogram(
    d: *const UlDist,
    n: usize,
    seed: u64,
    counts_out: *mut usize,
    len: usize,
) -> UlStatus {
    guard(|| {
        let d = deref(d, "dist")?;
        if len != d.0.m() {
            return Err(Fail::Lab(LabError::InvalidParameter(format!("buffer length {len} != m = {}", d.0.m()))));
        }
        if counts_out.is_null() {
            return Err(Fail::Null("counts_out"));
        }
        let h = sample_histogram(&d.0, n, seed);
        std::slice::from_raw_parts_mut(counts_out, len).copy_from_slice(&h.counts);
        Ok(())
    })
}

/// Monte Carlo failure probability of `t` on samples from `d`.
///
/// # Safety
/// Handles must be live; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_estimate_error(
    t: *const UlTester,
    d: *const UlDist,
    side: UlSide,
    trials: u64,
    master_seed: u64,
    workers: usize,
    out: *mut UlErrorEstimate,
) -> UlStatus {
    guard(|| {
        let side = match side {
            UlSide::Uniform => Side::Uniform,
            UlSide::Alternative => Side::Alternative,
        };
        let e = estimate_error(&deref(t, "tester")?.0, &deref(d, "dist")?.0, side, trials, master_seed, workers)?;
        write(
            out,
            UlErrorEstimate {
                failures: e.failures,
                trials: e.trials,
                delta_hat: e.delta_hat,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                seed: e.seed,
            },
            "out",
        )
    })
}

/// Exact rejection probability under `p` and acceptance probability under `q`.
///
/// # Safety
/// Handles must be live; out-pointers valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn ul_exact_error_rates(
    t: *const UlTester,
    p: *const UlDist,
    q: *const UlDist,
    delta_minus: *mut f64,
    delta_plus: *mut f64,
) -> UlStatus {
    guard(|| {
        let t = deref(t, "tester")?;
        let (p, q) = (deref(p, "p")?, deref(q, "q")?);
        let (dm, dp) = exact_error_rates_by(&p.0, &q.0, t.0.n(), |h: &Histogram| t.0.decide(h))?;
        write(delta_minus, dm, "delta_minus")?;
        write(delta_plus, dp, "delta_plus")
    })
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_sample_size(
    m: usize,
    epsilon: f64,
    delta_minus: f64,
    delta_plus: f64,
    kind: UlSampleSizeKind,
    out: *mut u64,
) -> UlStatus {
    guard(|| {
        let kind = match kind {
            UlSampleSizeKind::Huber => SampleSizeKind::Huber,
            UlSampleSizeKind::Squared => SampleSizeKind::Squared,
            UlSampleSizeKind::Tv => SampleSizeKind::Tv,
            UlSampleSizeKind::Superlinear => SampleSizeKind::Superlinear,
        };
        write(out, sample_size(m, epsilon, delta_minus, delta_plus, kind)?, "out")
    })
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_default_beta(n: usize, m: usize, epsilon: f64, k: f64, out: *mut f64) -> UlStatus {
    guard(|| write(out, default_beta(n, m, epsilon, k)?.0, "out"))
}

/// Minimum normalized variance over per-bin statistics.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ul_min_nvar(n: usize, m: usize, epsilon: f64, target: UlTarget, out: *mut f64) -> UlStatus {
    guard(|| {
        let target = match target {
            UlTarget::Qbar => Target::Qbar,
            UlTarget::Qprime => Target::Qprime,
        };
        write(out, min_nvar(n, m, epsilon, target)?.1, "out")
    })
}
