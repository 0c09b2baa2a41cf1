//! C ABI over the synsurp library.
//!
//! Every function returns a [`SynsurpStatus`]; on failure the message is
//! available from [`synsurp_last_error`] on the same thread until the next
//! call. Handles are opaque and must be released with their `_free`
//! function. Array arguments are row-major and never retained.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::ArrayView2;
use synsurp::neuro::{cv_r2, hrf_kernel, DesignMatrix, HrfSpec};
use synsurp::scoring::{load_checkpoint, ParserModel, TableScorer};
use synsurp::search::{run_search, LabelMode, RankKey, SearchOptions};
use synsurp::surprisal::{profile_sentences, SurprisalSeries};
use synsurp::treebank::Vocabulary;
use synsurp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynsurpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Incompatible = 5,
    Search = 6,
    Numeric = 7,
    Internal = 8,
}

/// Which surprisal series to read from a profile.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynsurpKind {
    Syntactic = 0,
    Full = 1,
    Lexical = 2,
}

/// A trained parser with its vocabulary.
pub struct SynsurpModel {
    model: ParserModel,
    vocab: Vocabulary,
}

/// Per-word surprisal for a text at one or more k.
pub struct SynsurpProfile {
    series: SurprisalSeries,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SynsurpStatus {
    match e {
        Error::Io { .. } => SynsurpStatus::Io,
        Error::Parse { .. } | Error::Format(_) => SynsurpStatus::Format,
        Error::Incompatible(_) => SynsurpStatus::Incompatible,
        Error::Search(_) => SynsurpStatus::Search,
        Error::RankDeficient(_) | Error::Diverged(_) => SynsurpStatus::Numeric,
        _ => SynsurpStatus::InvalidArgument,
    }
}

struct Fail(SynsurpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SynsurpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SynsurpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SynsurpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SynsurpStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            SynsurpStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn search_options(cap: usize) -> SearchOptions {
    SearchOptions {
        cap: (cap > 0).then_some(cap),
        labels: LabelMode::Participate,
        rank: RankKey::Syntactic,
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library.
#[no_mangle]
pub extern "C" fn synsurp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint together with the vocabulary it was trained with.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn synsurp_model_load(
    checkpoint_path: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut SynsurpModel,
) -> SynsurpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = str_arg(checkpoint_path, "checkpoint_path")?;
        let vp = str_arg(vocab_path, "vocab_path")?;
        let vocab = Vocabulary::load(vp)?;
        let model = load_checkpoint(ck, &vocab)?;
        *out = Box::into_raw(Box::new(SynsurpModel { model, vocab }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`synsurp_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn synsurp_model_free(model: *mut SynsurpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Profiles `text`: one sentence per line, tokens separated by whitespace.
/// `ks` must be strictly increasing; `cap` 0 keeps every path.
///
/// # Safety
/// `model` must be a live handle, `text` NUL-terminated, `ks` readable for
/// `n_ks` values and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn synsurp_profile_text(
    model: *const SynsurpModel,
    text: *const c_char,
    ks: *const usize,
    n_ks: usize,
    cap: usize,
    out: *mut *mut SynsurpProfile,
) -> SynsurpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let text = str_arg(text, "text")?;
        let ks = slice_arg(ks, n_ks, "ks")?;
        if ks.is_empty() {
            return Err(invalid("at least one k is required"));
        }
        let sentences: Vec<Vec<String>> = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        let (series, _) = profile_sentences(&m.model, &m.vocab, &sentences, None, &search_options(cap), ks)?;
        *out = Box::into_raw(Box::new(SynsurpProfile { series }));
        Ok(())
    })
}

/// Profiles a hand-specified score table given as JSON text. Labels do not
/// branch the search.
///
/// # Safety
/// As for [`synsurp_profile_text`].
#[no_mangle]
pub unsafe extern "C" fn synsurp_profile_table(
    table_json: *const c_char,
    ks: *const usize,
    n_ks: usize,
    cap: usize,
    out: *mut *mut SynsurpProfile,
) -> SynsurpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = str_arg(table_json, "table_json")?;
        let ks = slice_arg(ks, n_ks, "ks")?;
        if ks.is_empty() {
            return Err(invalid("at least one k is required"));
        }
        let table = TableScorer::from_json(json)?;
        let opts = SearchOptions {
            labels: LabelMode::Off,
            ..search_options(cap)
        };
        let run = run_search(&table, &opts)?;
        let forms = (1..=run.pools.len()).map(|i| format!("w{i}")).collect();
        let series = SurprisalSeries::from_pools(forms, &run.pools, ks)?;
        *out = Box::into_raw(Box::new(SynsurpProfile { series }));
        Ok(())
    })
}

/// Number of words in a profile.
///
/// # Safety
/// `profile` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn synsurp_profile_len(profile: *const SynsurpProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.series.len())
}

/// Copies one series (bits per word) into `buf`, which must hold
/// [`synsurp_profile_len`] values.
///
/// # Safety
/// `profile` must be a live handle and `buf` writable for `buf_len` values.
#[no_mangle]
pub unsafe extern "C" fn synsurp_profile_values(
    profile: *const SynsurpProfile,
    k: usize,
    kind: SynsurpKind,
    buf: *mut f64,
    buf_len: usize,
) -> SynsurpStatus {
    guard(|| {
        let p = profile.as_ref().ok_or_else(|| null("profile"))?;
        let s = p.series.at(k)?;
        let v = match kind {
            SynsurpKind::Syntactic => &s.syn,
            SynsurpKind::Full => &s.full,
            SynsurpKind::Lexical => &s.lex,
        };
        if buf_len < v.len() {
            return Err(invalid(format!("buffer holds {buf_len} values, need {}", v.len())));
        }
        if !v.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        }
        Ok(())
    })
}

/// # Safety
/// `profile` must come from a profiling call or be null.
#[no_mangle]
pub unsafe extern "C" fn synsurp_profile_free(profile: *mut SynsurpProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Canonical HRF sampled every `dt` seconds, peak 1. Writes the kernel
/// length to `out_len`; when `buf` is null or too short only the length is
/// reported and the status is `InvalidArgument` for a short buffer.
///
/// # Safety
/// `buf` must be writable for `buf_len` values when non-null; `out_len`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn synsurp_hrf_kernel(
    dt: f64,
    buf: *mut f64,
    buf_len: usize,
    out_len: *mut usize,
) -> SynsurpStatus {
    guard(|| {
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        let kernel = hrf_kernel(&HrfSpec::default(), dt)?;
        *out_len = kernel.len();
        if buf.is_null() {
            return Ok(());
        }
        if buf_len < kernel.len() {
            return Err(invalid(format!("buffer holds {buf_len} values, need {}", kernel.len())));
        }
        ptr::copy_nonoverlapping(kernel.as_ptr(), buf, kernel.len());
        Ok(())
    })
}

/// Leave-one-section-out r² per voxel. `design` is `n_scans × n_columns`
/// without an intercept (one is added), `y` is `n_scans × n_voxels`, and
/// `sections` lists section lengths summing to `n_scans`. Writes
/// `n_voxels` values to `out`.
///
/// # Safety
/// All arrays must be readable (or writable, for `out`) at the stated sizes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn synsurp_cv_r2(
    design: *const f64,
    n_scans: usize,
    n_columns: usize,
    y: *const f64,
    n_voxels: usize,
    sections: *const usize,
    n_sections: usize,
    out: *mut f64,
) -> SynsurpStatus {
    guard(|| {
        let x = slice_arg(design, n_scans * n_columns, "design")?;
        let yv = slice_arg(y, n_scans * n_voxels, "y")?;
        let sections = slice_arg(sections, n_sections, "sections")?;
        if n_voxels > 0 && out.is_null() {
            return Err(null("out"));
        }
        let mut d = DesignMatrix::new(n_scans);
        for c in 0..n_columns {
            let col = (0..n_scans).map(|r| x[r * n_columns + c]).collect();
            d.add_column(&format!("x{c}"), col)?;
        }
        let y = ArrayView2::from_shape((n_scans, n_voxels), yv).map_err(|e| invalid(e.to_string()))?;
        let r2 = cv_r2(&d, y, sections)?;
        for (i, v) in r2.iter().enumerate() {
            *out.add(i) = *v;
        }
        Ok(())
    })
}
