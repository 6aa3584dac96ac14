//! C interface to the blendsurv engine.
//!
//! Every function returns a [`BsStatus`]; results come back through out
//! pointers. On failure a description is available from
//! [`bs_last_error`] on the same thread. Datasets and fitted models are
//! opaque handles released with their `_free` functions; strings returned
//! by the library are released with [`bs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use blendsurv::blend::{blend_survival, weight, BlendSpec};
use blendsurv::curves::CurveDraws;
use blendsurv::elicitation::{fit_external, synthesize_dataset, ElicitationSpec};
use blendsurv::io::{load_dataset, TimeUnit};
use blendsurv::scenario::run_scenario_file;
use blendsurv::special::beta_cdf;
use blendsurv::{fit_mle, kaplan_meier, Error, Family, FittedModel, Grid, SurvivalDataset};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    IoError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque survival dataset.
pub struct BsDataset(SurvivalDataset);

/// Opaque fitted parametric model.
pub struct BsFittedModel(FittedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(BsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_numerical() => BsStatus::NumericalError,
            Error::Data(_) => BsStatus::DataError,
            Error::Io(_) => BsStatus::IoError,
            Error::Stage { source, .. } => match **source {
                Error::Data(_) => BsStatus::DataError,
                Error::Io(_) => BsStatus::IoError,
                _ => BsStatus::InvalidArgument,
            },
            _ => BsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn bs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Regularized incomplete beta function I_x(alpha, beta).
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn bs_beta_cdf(x: f64, alpha: f64, beta: f64, out: *mut f64) -> BsStatus {
    guard(|| write_out(out, beta_cdf(x, alpha, beta)?))
}

/// Blending weight at `t` for the interval [a, b] and horizon T*.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn bs_weight(
    t: f64,
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    horizon: f64,
    out: *mut f64,
) -> BsStatus {
    let spec = BlendSpec { alpha, beta, a, b, horizon };
    guard(|| write_out(out, weight(t, &spec)?))
}

/// Creates a dataset from `n` times (months) and event flags (0 or 1).
///
/// # Safety
/// `times` and `events` must point to `n` readable elements; `out` must
/// be a valid pointer. Free the result with [`bs_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn bs_dataset_new(
    times: *const f64,
    events: *const u8,
    n: usize,
    out: *mut *mut BsDataset,
) -> BsStatus {
    guard(|| {
        let times = slice_arg(times, n, "times")?;
        let events = slice_arg(events, n, "events")?;
        if let Some(i) = events.iter().position(|&e| e > 1) {
            return Err(Failure(BsStatus::DataError, format!("event {i} is not 0 or 1")));
        }
        let flags: Vec<bool> = events.iter().map(|&e| e == 1).collect();
        let data = SurvivalDataset::from_columns(times, &flags)?;
        write_out(out, Box::into_raw(Box::new(BsDataset(data))))
    })
}

/// Reads a `time,event[,arm]` CSV file. `arm` may be NULL when the file
/// holds a single arm.
///
/// # Safety
/// `path` and non-NULL `arm` must be NUL-terminated strings; `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_dataset_from_csv(
    path: *const c_char,
    arm: *const c_char,
    out: *mut *mut BsDataset,
) -> BsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let arm = if arm.is_null() { None } else { Some(str_arg(arm, "arm")?) };
        let data = load_dataset(Path::new(path), arm, TimeUnit::Months)?;
        write_out(out, Box::into_raw(Box::new(BsDataset(data))))
    })
}

/// # Safety
/// `data` must be a valid dataset handle; `n_obs` and `n_events` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bs_dataset_counts(
    data: *const BsDataset,
    n_obs: *mut usize,
    n_events: *mut usize,
) -> BsStatus {
    guard(|| {
        let d = data.as_ref().ok_or_else(|| null("dataset"))?;
        write_out(n_obs, d.0.len())?;
        write_out(n_events, d.0.n_events())
    })
}

/// # Safety
/// `data` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_dataset_free(data: *mut BsDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Kaplan-Meier survival estimate at `t`.
///
/// # Safety
/// `data` must be a valid dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_km_survival(data: *const BsDataset, t: f64, out: *mut f64) -> BsStatus {
    guard(|| {
        let d = data.as_ref().ok_or_else(|| null("dataset"))?;
        write_out(out, kaplan_meier(&d.0).survival_at(t))
    })
}

/// Maximum-likelihood fit of a parametric family ("exponential",
/// "weibull", "gompertz", "lognormal" or "loglogistic").
///
/// # Safety
/// `data` must be a valid dataset handle, `family` a NUL-terminated
/// string and `out` a valid pointer. Free the result with [`bs_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn bs_fit(
    data: *const BsDataset,
    family: *const c_char,
    out: *mut *mut BsFittedModel,
) -> BsStatus {
    guard(|| {
        let d = data.as_ref().ok_or_else(|| null("dataset"))?;
        let family: Family = str_arg(family, "family")?.parse()?;
        let fit = fit_mle(family, &d.0, None)?;
        write_out(out, Box::into_raw(Box::new(BsFittedModel(fit))))
    })
}

/// Copies the fitted parameters into `params` (capacity `cap`) and stores
/// their count in `len`. Returns `BufferTooSmall` when `cap` is too
/// small; `len` is set either way.
///
/// # Safety
/// `fit` must be a valid model handle, `params` must have room for `cap`
/// doubles and `len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_fit_params(
    fit: *const BsFittedModel,
    params: *mut f64,
    cap: usize,
    len: *mut usize,
) -> BsStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("model"))?;
        let values = &f.0.params.values;
        write_out(len, values.len())?;
        if cap < values.len() {
            return Err(Failure(BsStatus::BufferTooSmall, format!("need room for {} values", values.len())));
        }
        if params.is_null() {
            return Err(null("params"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), params, values.len());
        Ok(())
    })
}

/// Log-likelihood, AIC and convergence flag of a fit. Any output pointer
/// may be NULL.
///
/// # Safety
/// `fit` must be a valid model handle; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn bs_fit_summary(
    fit: *const BsFittedModel,
    loglik: *mut f64,
    aic: *mut f64,
    converged: *mut bool,
) -> BsStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("model"))?;
        if !loglik.is_null() {
            loglik.write(f.0.loglik);
        }
        if !aic.is_null() {
            aic.write(f.0.aic);
        }
        if !converged.is_null() {
            converged.write(f.0.converged);
        }
        Ok(())
    })
}

/// Fitted survival S(t).
///
/// # Safety
/// `fit` must be a valid model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_fit_survival(fit: *const BsFittedModel, t: f64, out: *mut f64) -> BsStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("model"))?;
        write_out(out, f.0.distribution()?.survival(t))
    })
}

/// # Safety
/// `fit` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_fit_free(fit: *mut BsFittedModel) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Blends one observed and one external survival curve tabulated at the
/// `n` grid points `times` (starting at 0, increasing), writing `n`
/// values to `out`.
///
/// # Safety
/// `times`, `s_obs`, `s_ext` must hold `n` readable doubles and `out`
/// must have room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_blend_survival(
    times: *const f64,
    s_obs: *const f64,
    s_ext: *const f64,
    n: usize,
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
    horizon: f64,
    out: *mut f64,
) -> BsStatus {
    guard(|| {
        let times = slice_arg(times, n, "times")?;
        let obs = slice_arg(s_obs, n, "s_obs")?;
        let ext = slice_arg(s_ext, n, "s_ext")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = Grid::from_points(times.to_vec())?;
        let spec = BlendSpec { alpha, beta, a, b, horizon };
        let blended = blend_survival(
            &CurveDraws::new(grid.clone(), vec![obs.to_vec()])?,
            &CurveDraws::new(grid, vec![ext.to_vec()])?,
            &spec,
        )?;
        ptr::copy_nonoverlapping(blended.draws()[0].as_ptr(), out, n);
        Ok(())
    })
}

/// Synthesizes a dataset from an elicitation spec (JSON) and fits it.
/// Writes a JSON document with the segment counts, warnings and ranked
/// fits to `out_json`; free it with [`bs_string_free`].
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_elicit(spec_json: *const c_char, out_json: *mut *mut c_char) -> BsStatus {
    guard(|| {
        let text = str_arg(spec_json, "spec_json")?;
        let spec: ElicitationSpec = serde_json::from_str(text)
            .map_err(|e| Failure(BsStatus::InvalidArgument, format!("elicitation spec: {e}")))?;
        let synthetic = synthesize_dataset(&spec)?;
        let external = fit_external(&synthetic.dataset, &[])?;
        let doc = serde_json::json!({
            "segment_counts": synthetic.segment_counts,
            "warnings": synthetic.warnings,
            "best": external.best,
            "ranked": external.ranked,
        });
        write_out(out_json, into_c_string(doc.to_string()))
    })
}

/// Runs a scenario file, writing outputs into `out_dir`. A negative
/// `seed` keeps the scenario's own seed. When `out_json` is not NULL it
/// receives the manifest; free it with [`bs_string_free`].
///
/// # Safety
/// `scenario_path` and `out_dir` must be NUL-terminated strings;
/// `out_json` must be NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bs_run_scenario(
    scenario_path: *const c_char,
    out_dir: *const c_char,
    seed: i64,
    out_json: *mut *mut c_char,
) -> BsStatus {
    guard(|| {
        let scenario = str_arg(scenario_path, "scenario_path")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let seed = u64::try_from(seed).ok();
        let result = run_scenario_file(Path::new(scenario), Path::new(dir), TimeUnit::Months, seed)?;
        if !out_json.is_null() {
            let manifest = serde_json::to_string(&result.manifest(TimeUnit::Months))
                .map_err(|e| Failure(BsStatus::IoError, e.to_string()))?;
            out_json.write(into_c_string(manifest));
        }
        Ok(())
    })
}
