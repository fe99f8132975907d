//! C ABI over the sharebound library.
//!
//! Problems are parsed from TOML text into opaque handles. Every entry
//! point returns a status code; on any status other than `Ok` the
//! thread-local error message can be fetched with
//! `sb_last_error_message`. Strings returned to the caller are owned
//! by the caller and must be released with `sb_string_free`.

use sharebound::cli::{parse_problem, Problem};
use sharebound::verify;
use sharebound::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Opaque handle to a parsed problem document.
pub struct SbProblem {
    inner: Problem,
}

/// Status code returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// The document could not be parsed or references an unknown name.
    Parse = 3,
    /// A numeric argument was outside its domain.
    Domain = 4,
    /// An array argument had the wrong length.
    Shape = 5,
    /// The welfare does not support the requested construction.
    Unsupported = 6,
    /// The requested computation exceeds the evaluation budget.
    Budget = 7,
    /// An internal invariant failed.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SbStatus {
    match err {
        Error::Domain { .. } | Error::InvalidInterval { .. } => SbStatus::Domain,
        Error::Shape { .. } => SbStatus::Shape,
        Error::Budget { .. } => SbStatus::Budget,
        Error::Document(_) | Error::UnknownName(_) | Error::Io(_) => SbStatus::Parse,
        Error::InvalidFunction(_)
        | Error::InvalidParameter(_)
        | Error::UnsupportedWelfare(_)
        | Error::InvalidHalfGraph(_)
        | Error::NotStrict(_)
        | Error::Infeasible(_) => SbStatus::Unsupported,
    }
}

fn fail(err: &Error) -> SbStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Run `f`, converting panics into `Internal` so unwinding never
/// crosses the ABI boundary.
fn guarded(f: impl FnOnce() -> SbStatus) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            SbStatus::Internal
        }
    }
}

/// Parse a TOML problem document.
///
/// On success writes a freshly allocated handle to `out`; release it
/// with `sb_problem_free`.
///
/// # Safety
///
/// `text` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer; both stay unread after the call returns.
#[no_mangle]
pub unsafe extern "C" fn sb_problem_parse(
    text: *const c_char,
    out: *mut *mut SbProblem,
) -> SbStatus {
    if text.is_null() || out.is_null() {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    }
    guarded(|| {
        // SAFETY: text is non-null and NUL-terminated per the contract.
        let raw = unsafe { CStr::from_ptr(text) };
        let s = match raw.to_str() {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("document is not UTF-8: {e}"));
                return SbStatus::Utf8;
            }
        };
        match parse_problem(s) {
            Ok(problem) => {
                let handle = Box::new(SbProblem { inner: problem });
                // SAFETY: out is writable per the contract.
                unsafe { *out = Box::into_raw(handle) };
                SbStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a handle returned by `sb_problem_parse`. A null handle is
/// ignored.
///
/// # Safety
///
/// `p` must be null or a pointer obtained from `sb_problem_parse` that
/// has not been freed before; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_problem_free(p: *mut SbProblem) {
    if !p.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the contract.
        drop(unsafe { Box::from_raw(p) });
    }
}

unsafe fn deref<'a>(p: *const SbProblem) -> Option<&'a SbProblem> {
    // SAFETY: callers check for null before relying on the reference;
    // validity of non-null handles is the caller's contract.
    unsafe { p.as_ref() }
}

/// Number of agents in the problem.
///
/// # Safety
///
/// `p` must be a live handle and `out` writable for one value.
#[no_mangle]
pub unsafe extern "C" fn sb_problem_n(p: *const SbProblem, out: *mut usize) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, out.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    unsafe { *out = problem.inner.spec.n() };
    SbStatus::Ok
}

/// Common type interval of the problem.
///
/// # Safety
///
/// `p` must be a live handle; `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_problem_interval(
    p: *const SbProblem,
    lo: *mut f64,
    hi: *mut f64,
) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, lo.is_null() || hi.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    let iv = problem.inner.spec.interval();
    unsafe {
        *lo = iv.lo;
        *hi = iv.hi;
    }
    SbStatus::Ok
}

/// Evaluate the welfare at a profile of `len` types.
///
/// # Safety
///
/// `p` must be a live handle, `x` must point to `len` readable values,
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_eval(
    p: *const SbProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, x.is_null() || out.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    guarded(|| {
        // SAFETY: x points to len readable values per the contract.
        let profile = unsafe { std::slice::from_raw_parts(x, len) };
        match problem.inner.spec.evaluate(profile) {
            Ok(w) => {
                unsafe { *out = w };
                SbStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Per-agent unanimity value at type `t`.
///
/// # Safety
///
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sb_unanimity(p: *const SbProblem, t: f64, out: *mut f64) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, out.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    guarded(|| match problem.inner.spec.unanimity_value(t) {
        Ok(v) => {
            unsafe { *out = v };
            SbStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Number of guarantee curves the document defines.
///
/// # Safety
///
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sb_guarantee_count(p: *const SbProblem, out: *mut usize) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, out.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    unsafe { *out = problem.inner.guarantees.len() };
    SbStatus::Ok
}

/// Label of guarantee `index` as a freshly allocated string; release
/// it with `sb_string_free`.
///
/// # Safety
///
/// `p` must be a live handle and `out` writable for one pointer.
#[no_mangle]
pub unsafe extern "C" fn sb_guarantee_label(
    p: *const SbProblem,
    index: usize,
    out: *mut *mut c_char,
) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, out.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    let Some(g) = problem.inner.guarantees.get(index) else {
        set_error(&format!(
            "guarantee index {index} out of range 0..{}",
            problem.inner.guarantees.len()
        ));
        return SbStatus::Shape;
    };
    let c = CString::new(g.label().replace('\0', " ")).unwrap_or_default();
    unsafe { *out = c.into_raw() };
    SbStatus::Ok
}

/// Evaluate guarantee `index` at type `t`.
///
/// # Safety
///
/// `p` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sb_guarantee_eval(
    p: *const SbProblem,
    index: usize,
    t: f64,
    out: *mut f64,
) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, out.is_null()) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    let Some(g) = problem.inner.guarantees.get(index) else {
        set_error(&format!(
            "guarantee index {index} out of range 0..{}",
            problem.inner.guarantees.len()
        ));
        return SbStatus::Shape;
    };
    guarded(|| {
        unsafe { *out = g.eval(t) };
        SbStatus::Ok
    })
}

/// Run the named sharing rule on a profile of `len` types, writing
/// `len` shares to `out`.
///
/// # Safety
///
/// `p` must be a live handle, `name` a NUL-terminated string, `x`
/// readable for `len` values, and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sb_rule_shares(
    p: *const SbProblem,
    name: *const c_char,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SbStatus {
    let (Some(problem), false) = (
        unsafe { deref(p) },
        name.is_null() || x.is_null() || out.is_null(),
    ) else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    guarded(|| {
        // SAFETY: name is non-null and NUL-terminated per the contract.
        let raw = unsafe { CStr::from_ptr(name) };
        let rule_name = match raw.to_str() {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("rule name is not UTF-8: {e}"));
                return SbStatus::Utf8;
            }
        };
        let Some((_, rule)) = problem
            .inner
            .rules
            .iter()
            .find(|(n, _)| n == rule_name)
        else {
            set_error(&format!("unknown rule \"{rule_name}\""));
            return SbStatus::Parse;
        };
        // SAFETY: x points to len readable values per the contract.
        let profile = unsafe { std::slice::from_raw_parts(x, len) };
        match rule.allocate(profile) {
            Ok(shares) => {
                // SAFETY: out is writable for len values per the contract
                // and allocate() returns exactly len shares.
                unsafe {
                    std::ptr::copy_nonoverlapping(shares.as_ptr(), out, shares.len());
                }
                SbStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

fn verify_common(
    problem: &SbProblem,
    index: usize,
    pass: *mut bool,
    worst_gap: *mut f64,
    tight: bool,
) -> SbStatus {
    let Some(g) = problem.inner.guarantees.get(index) else {
        set_error(&format!(
            "guarantee index {index} out of range 0..{}",
            problem.inner.guarantees.len()
        ));
        return SbStatus::Shape;
    };
    let inner = &problem.inner;
    let report = if tight {
        verify::tightness_slack(g, &inner.spec, &inner.grid, &inner.tol)
    } else {
        verify::feasibility_gap(g, &inner.spec, &inner.grid, &inner.tol)
    };
    match report {
        Ok(r) => {
            // SAFETY: both pointers were checked non-null by the caller.
            unsafe {
                *pass = r.pass;
                *worst_gap = r.worst_gap;
            }
            SbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Grid feasibility check for guarantee `index`: `pass` reports the
/// verdict and `worst_gap` the smallest profile slack found.
///
/// # Safety
///
/// `p` must be a live handle; `pass` and `worst_gap` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_verify_feasibility(
    p: *const SbProblem,
    index: usize,
    pass: *mut bool,
    worst_gap: *mut f64,
) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, pass.is_null() || worst_gap.is_null())
    else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    guarded(|| verify_common(problem, index, pass, worst_gap, false))
}

/// Grid tightness check for guarantee `index`: `pass` reports whether
/// every type has a near-contact profile and `worst_gap` the largest
/// per-type contact slack.
///
/// # Safety
///
/// `p` must be a live handle; `pass` and `worst_gap` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_verify_tightness(
    p: *const SbProblem,
    index: usize,
    pass: *mut bool,
    worst_gap: *mut f64,
) -> SbStatus {
    let (Some(problem), false) = (unsafe { deref(p) }, pass.is_null() || worst_gap.is_null())
    else {
        set_error("null pointer argument");
        return SbStatus::NullPointer;
    };
    guarded(|| verify_common(problem, index, pass, worst_gap, true))
}

/// Message of the most recent error on this thread as a freshly
/// allocated string, or null if none; release with `sb_string_free`.
#[no_mangle]
pub extern "C" fn sb_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(c) => c.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library. A null pointer is
/// ignored.
///
/// # Safety
///
/// `s` must be null or a pointer obtained from this library that has
/// not been freed before.
#[no_mangle]
pub unsafe extern "C" fn sb_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the contract.
        drop(unsafe { CString::from_raw(s) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const DOC: &str = r#"
[problem]
interval = [0.0, 1.0]
n = 3

[[welfare]]
kind = "rank_separable"
w = [
  { breakpoints = [0.0, 1.0], coeffs = [[0.0, 1.0]] },
  { breakpoints = [0.0, 1.0], coeffs = [[0.0]] },
  { breakpoints = [0.0, 1.0], coeffs = [[0.0]] },
]

[[guarantee]]
kind = "una"

[[guarantee]]
kind = "stand_alone"
c0 = 0.0

[[rule]]
kind = "serial_up"
"#;

    fn parse(doc: &str) -> *mut SbProblem {
        let text = CString::new(doc).unwrap();
        let mut handle: *mut SbProblem = std::ptr::null_mut();
        let status = unsafe { sb_problem_parse(text.as_ptr(), &mut handle) };
        assert_eq!(status, SbStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    #[test]
    fn round_trip() {
        let h = parse(DOC);
        let mut n = 0usize;
        assert_eq!(unsafe { sb_problem_n(h, &mut n) }, SbStatus::Ok);
        assert_eq!(n, 3);

        let (mut lo, mut hi) = (f64::NAN, f64::NAN);
        assert_eq!(
            unsafe { sb_problem_interval(h, &mut lo, &mut hi) },
            SbStatus::Ok
        );
        assert_eq!((lo, hi), (0.0, 1.0));

        let x = [0.2, 0.9, 0.4];
        let mut w = f64::NAN;
        assert_eq!(unsafe { sb_eval(h, x.as_ptr(), 3, &mut w) }, SbStatus::Ok);
        assert_eq!(w, 0.9);

        let mut u = f64::NAN;
        assert_eq!(unsafe { sb_unanimity(h, 0.6, &mut u) }, SbStatus::Ok);
        assert!((u - 0.2).abs() < 1e-15);

        let mut count = 0usize;
        assert_eq!(unsafe { sb_guarantee_count(h, &mut count) }, SbStatus::Ok);
        assert_eq!(count, 2);

        let mut label: *mut c_char = std::ptr::null_mut();
        assert_eq!(unsafe { sb_guarantee_label(h, 1, &mut label) }, SbStatus::Ok);
        let s = unsafe { CStr::from_ptr(label) }.to_str().unwrap().to_string();
        unsafe { sb_string_free(label) };
        assert_eq!(s, "g_L");

        let mut v = f64::NAN;
        assert_eq!(unsafe { sb_guarantee_eval(h, 1, 0.7, &mut v) }, SbStatus::Ok);
        assert!((v - 0.7).abs() < 1e-15);

        let name = CString::new("serial_up").unwrap();
        let mut shares = [f64::NAN; 3];
        assert_eq!(
            unsafe { sb_rule_shares(h, name.as_ptr(), x.as_ptr(), 3, shares.as_mut_ptr()) },
            SbStatus::Ok
        );
        assert!((shares.iter().sum::<f64>() - 0.9).abs() < 1e-12);

        let (mut pass, mut gap) = (false, f64::NAN);
        assert_eq!(
            unsafe { sb_verify_feasibility(h, 0, &mut pass, &mut gap) },
            SbStatus::Ok
        );
        assert!(pass);
        assert_eq!(
            unsafe { sb_verify_tightness(h, 0, &mut pass, &mut gap) },
            SbStatus::Ok
        );
        assert!(pass);

        unsafe { sb_problem_free(h) };
    }

    #[test]
    fn error_paths() {
        let mut handle: *mut SbProblem = std::ptr::null_mut();
        assert_eq!(
            unsafe { sb_problem_parse(std::ptr::null(), &mut handle) },
            SbStatus::NullPointer
        );

        let bad = CString::new("[problem]\ninterval = [0.0]").unwrap();
        assert_eq!(
            unsafe { sb_problem_parse(bad.as_ptr(), &mut handle) },
            SbStatus::Parse
        );
        let msg = sb_last_error_message();
        assert!(!msg.is_null());
        unsafe { sb_string_free(msg) };

        let h = parse(DOC);
        let mut w = f64::NAN;
        let short = [0.5];
        assert_eq!(
            unsafe { sb_eval(h, short.as_ptr(), 1, &mut w) },
            SbStatus::Shape
        );
        let mut label: *mut c_char = std::ptr::null_mut();
        assert_eq!(
            unsafe { sb_guarantee_label(h, 9, &mut label) },
            SbStatus::Shape
        );
        let name = CString::new("nope").unwrap();
        let x = [0.1, 0.2, 0.3];
        let mut shares = [0.0; 3];
        assert_eq!(
            unsafe { sb_rule_shares(h, name.as_ptr(), x.as_ptr(), 3, shares.as_mut_ptr()) },
            SbStatus::Parse
        );
        unsafe { sb_problem_free(h) };
        unsafe { sb_problem_free(std::ptr::null_mut()) };
        unsafe { sb_string_free(std::ptr::null_mut()) };
    }
}
