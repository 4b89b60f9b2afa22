//! C interface to the quotamatch simulator.
//!
//! Every fallible function returns a [`QmStatus`]; on anything other than
//! `QM_STATUS_OK` a description is available from [`qm_last_error`] on the
//! same thread. Objects are opaque handles released with their `_free`
//! function, and strings returned to the caller are released with
//! [`qm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use quotamatch::cem::{cem_report, read_applications, BootstrapConfig};
use quotamatch::counterfactual::run_pair;
use quotamatch::quota::{promotion_order, verify_flags};
use quotamatch::report::{analyze, CounterfactualReport};
use quotamatch::{
    compute_quota_rate, generate_population, load_population, save_population, Error, MatchConfig, Population,
    QuotaRate, QuotaRule, ScenarioConfig, Track,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an unparseable argument.
    InvalidArgument = 1,
    Config = 2,
    Parse = 3,
    Range = 4,
    Referential = 5,
    Domain = 6,
    Estimation = 7,
    Io = 8,
    /// The list violates the quota (from `qm_verify_compliance`).
    NotCompliant = 9,
    /// A panic was caught at the boundary.
    Internal = 10,
}

/// A generated or loaded population.
pub struct QmPopulation {
    inner: Population,
    matching: MatchConfig,
}

/// Counterfactual report for one quota rule.
pub struct QmReport {
    inner: CounterfactualReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> QmStatus {
    match err {
        Error::Config(_) | Error::Json(_) => QmStatus::Config,
        Error::Parse { .. } => QmStatus::Parse,
        Error::Range { .. } => QmStatus::Range,
        Error::Referential(_) => QmStatus::Referential,
        Error::Domain(_) => QmStatus::Domain,
        Error::Estimation(_) => QmStatus::Estimation,
        Error::Io { .. } => QmStatus::Io,
    }
}

struct Fail(QmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(QmStatus::InvalidArgument, msg.into())
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QmStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error (panic)");
            QmStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(format!("{what} is null")))
}

unsafe fn flags_slice<'a>(flags: *const bool, len: usize) -> Result<&'a [bool], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if flags.is_null() {
        return Err(invalid("flags is null"));
    }
    Ok(std::slice::from_raw_parts(flags, len))
}

fn rate(q: f64) -> Result<QuotaRate, Fail> {
    QuotaRate::new(q).map_err(Fail::from)
}

fn to_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s).map(CString::into_raw).map_err(|_| invalid("string contains NUL"))
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Quota rate (percent) for a program with `n_scholarship` holders among
/// `n_applicants`, under `rule` ("none", "plus2floor5", "floor5",
/// "fixed:<r>").
///
/// # Safety
/// `rule` must be a valid NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_quota_rate(
    n_scholarship: usize,
    n_applicants: usize,
    rule: *const c_char,
    out: *mut f64,
) -> QmStatus {
    guard(|| {
        let rule: QuotaRule = text(rule, "rule")?.parse::<QuotaRule>()?;
        *out_ref(out, "out")? = compute_quota_rate(n_scholarship, n_applicants, rule)?.value();
        Ok(())
    })
}

/// Calling order for an academic list given as scholarship flags: writes
/// `len` indices into the academic list to `out_order`.
///
/// # Safety
/// `flags` must point to `len` bools and `out_order` to room for `len`
/// indices.
#[no_mangle]
pub unsafe extern "C" fn qm_apply_quota(flags: *const bool, len: usize, q: f64, out_order: *mut usize) -> QmStatus {
    guard(|| {
        let flags = flags_slice(flags, len)?;
        let q = rate(q)?;
        if len > 0 && out_order.is_null() {
            return Err(invalid("out_order is null"));
        }
        for (i, idx) in promotion_order(flags, q).into_iter().enumerate() {
            *out_order.add(i) = idx;
        }
        Ok(())
    })
}

/// Check a called list (scholarship flags in calling order) against rate
/// `q`. Returns `QM_STATUS_NOT_COMPLIANT` and writes the 1-based length of
/// the first failing prefix to `out_first_violation` (if non-null) when the
/// list breaks the quota; writes 0 when it complies.
///
/// # Safety
/// `flags` must point to `len` bools; `out_first_violation` may be null.
#[no_mangle]
pub unsafe extern "C" fn qm_verify_compliance(
    flags: *const bool,
    len: usize,
    q: f64,
    out_first_violation: *mut usize,
) -> QmStatus {
    guard(|| {
        let flags = flags_slice(flags, len)?;
        let verdict = verify_flags(flags, rate(q)?);
        if let Some(out) = out_first_violation.as_mut() {
            *out = verdict.first_violation.unwrap_or(0);
        }
        match verdict.first_violation {
            None => Ok(()),
            Some(k) => Err(Fail(QmStatus::NotCompliant, format!("prefix of length {k} lacks scholarship holders"))),
        }
    })
}

/// Generate a population from a scenario config in JSON; a null or empty
/// `config_json` selects the default calibrated scenario.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_population_generate(config_json: *const c_char, out: *mut *mut QmPopulation) -> QmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg = if config_json.is_null() || text(config_json, "config_json")?.is_empty() {
            ScenarioConfig::default()
        } else {
            ScenarioConfig::from_json(text(config_json, "config_json")?)?
        };
        let inner = generate_population(&cfg)?;
        *out = Box::into_raw(Box::new(QmPopulation { inner, matching: cfg.matching }));
        Ok(())
    })
}

/// Load a population directory (applicants.csv, programs.csv and optional
/// committee_scores.csv).
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_population_load(dir: *const c_char, out: *mut *mut QmPopulation) -> QmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = load_population(Path::new(text(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(QmPopulation { inner, matching: MatchConfig::default() }));
        Ok(())
    })
}

/// # Safety
/// `pop` must come from this library; `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qm_population_save(pop: *const QmPopulation, dir: *const c_char) -> QmStatus {
    guard(|| {
        let pop = pop.as_ref().ok_or_else(|| invalid("pop is null"))?;
        save_population(&pop.inner, Path::new(text(dir, "dir")?))?;
        Ok(())
    })
}

/// Number of applicants, or 0 for a null handle.
///
/// # Safety
/// `pop` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qm_population_applicants(pop: *const QmPopulation) -> usize {
    pop.as_ref().map_or(0, |p| p.inner.applicants.len())
}

/// Number of scholarship applicants, or 0 for a null handle.
///
/// # Safety
/// `pop` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qm_population_scholarship(pop: *const QmPopulation) -> usize {
    pop.as_ref().map_or(0, |p| p.inner.n_scholarship())
}

/// # Safety
/// `pop` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qm_population_free(pop: *mut QmPopulation) {
    if !pop.is_null() {
        drop(Box::from_raw(pop));
    }
}

/// Run the quota-off and quota-on arms under `rule` and build the report.
/// `track` is null or "all" for everyone, otherwise "general",
/// "technological" or "vocational".
///
/// # Safety
/// `pop` must come from this library; strings NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn qm_run_pair(
    pop: *const QmPopulation,
    rule: *const c_char,
    track: *const c_char,
    out: *mut *mut QmReport,
) -> QmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let pop = pop.as_ref().ok_or_else(|| invalid("pop is null"))?;
        let rule: QuotaRule = text(rule, "rule")?.parse::<QuotaRule>()?;
        let track: Option<Track> = match track.is_null() {
            true => None,
            false => match text(track, "track")? {
                "all" => None,
                t => Some(t.parse().map_err(invalid)?),
            },
        };
        let pair = run_pair(&pop.inner, rule, &pop.matching)?;
        let (inner, _) = analyze(&pop.inner, &pair, track)?;
        *out = Box::into_raw(Box::new(QmReport { inner }));
        Ok(())
    })
}

/// Complier count, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qm_report_compliers(report: *const QmReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.compliers)
}

/// Mean prestige gain among scored compliers. `QM_STATUS_DOMAIN` when there
/// are none.
///
/// # Safety
/// `report` must come from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_report_ate(report: *const QmReport, out: *mut f64) -> QmStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| invalid("report is null"))?;
        let out = out_ref(out, "out")?;
        *out = report.inner.ate.ok_or_else(|| Fail(QmStatus::Domain, "no scored compliers".into()))?;
        Ok(())
    })
}

/// ATE scaled by the compliance share, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qm_report_itt(report: *const QmReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.itt)
}

/// Share of scholarship applicants who are compliers, or NaN for a null
/// handle.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qm_report_compliance(report: *const QmReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.compliance)
}

/// The full report as JSON, or null on failure. Free with `qm_string_free`.
///
/// # Safety
/// `report` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn qm_report_to_json(report: *const QmReport) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let report = report.as_ref().ok_or_else(|| invalid("report is null"))?;
        result = to_c_string(report.inner.to_json()?)?;
        Ok(())
    });
    result
}

/// # Safety
/// `report` must be null or come from this library, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn qm_report_free(report: *mut QmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Raw and matched admissibility gaps from an applications CSV, as JSON
/// written to `out_json` (free with `qm_string_free`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn qm_cem_from_csv(
    path: *const c_char,
    resamples: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> QmStatus {
    guard(|| {
        let out = out_ref(out_json, "out_json")?;
        let rows = read_applications(Path::new(text(path, "path")?))?;
        let report = cem_report(&rows, &BootstrapConfig { resamples, seed })?;
        *out = to_c_string(serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
