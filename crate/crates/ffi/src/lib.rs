//! C ABI over the oncopipe library.
//!
//! Every fallible function returns an [`OncoStatus`]; on failure a message
//! is kept per thread and can be read with [`onco_last_error`]. Objects
//! cross the boundary as opaque handles owned by the caller and released
//! with the matching `_free` function. Voxel arrays are x-fastest:
//! index = i + nx * (j + ny * k).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use oncopipe::losses::{loss_gradient, loss_value, LossKind, LossParams};
use oncopipe::metrics::{dice_similarity, score_pair};
use oncopipe::nalgebra::DMatrix;
use oncopipe::survival::{concordance_index, corrected_paired_ttest, SurvivalModel};
use oncopipe::volume::{Geometry, Mask3D};
use oncopipe::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OncoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    EmptyMask = 4,
    Io = 5,
    Format = 6,
    NonConvergence = 7,
    Degenerate = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OncoLossKind {
    Dice = 0,
    Focal = 1,
    LogCoshDiceFocal = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OncoSegScore {
    pub dsc: f64,
    pub avg_hd: f64,
    pub hd95: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OncoTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Opaque binary mask.
pub struct OncoMask(Mask3D);

/// Opaque fitted survival model.
pub struct OncoModel(SurvivalModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code(e: &Error) -> OncoStatus {
    match e {
        Error::Case { source, .. } | Error::Context { source, .. } => code(source),
        Error::Io { .. } => OncoStatus::Io,
        Error::Format { .. } | Error::UnsupportedDatatype(_) | Error::Config(_) | Error::Csv(_) | Error::Json(_) => {
            OncoStatus::Format
        }
        Error::LengthMismatch { .. } | Error::ShapeMismatch(_) => OncoStatus::ShapeMismatch,
        Error::InvalidParameter(_) => OncoStatus::InvalidArgument,
        Error::EmptyMask(_) => OncoStatus::EmptyMask,
        Error::Degenerate(_) => OncoStatus::Degenerate,
        Error::NonConvergence { .. } => OncoStatus::NonConvergence,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OncoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OncoStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            OncoStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            code(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            OncoStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn onco_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn onco_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a mask from `nx*ny*nz` bytes (nonzero = foreground).
///
/// # Safety
/// `dims` and `spacing` point to 3 values, `data` to `dims[0]*dims[1]*dims[2]` bytes.
#[no_mangle]
pub unsafe extern "C" fn onco_mask_new(
    dims: *const usize,
    spacing: *const f64,
    data: *const u8,
    out_mask: *mut *mut OncoMask,
) -> OncoStatus {
    guard(|| {
        let d: [usize; 3] = slice(dims, 3, "dims")?.try_into().expect("3 dims");
        let s: [f64; 3] = slice(spacing, 3, "spacing")?.try_into().expect("3 spacings");
        let geom = Geometry::new(d, s, [0.0; 3])?;
        let bytes = slice(data, geom.len(), "data")?;
        let mask = Mask3D::new(geom, bytes.iter().map(|&b| b != 0).collect())?;
        *out(out_mask, "out_mask")? = Box::into_raw(Box::new(OncoMask(mask)));
        Ok(())
    })
}

/// # Safety
/// `mask` is NULL or came from `onco_mask_new` and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn onco_mask_free(mask: *mut OncoMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Foreground voxel count, or 0 for NULL.
///
/// # Safety
/// `mask` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn onco_mask_count(mask: *const OncoMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.count())
}

/// # Safety
/// Handles are live; `out_dsc` is writable.
#[no_mangle]
pub unsafe extern "C" fn onco_dice(pred: *const OncoMask, truth: *const OncoMask, out_dsc: *mut f64) -> OncoStatus {
    guard(|| {
        let v = dice_similarity(&handle(pred, "pred")?.0, &handle(truth, "truth")?.0)?;
        *out(out_dsc, "out_dsc")? = v;
        Ok(())
    })
}

/// DSC, average HD and HD95 in millimetres.
///
/// # Safety
/// Handles are live; `out_score` is writable.
#[no_mangle]
pub unsafe extern "C" fn onco_score_pair(
    pred: *const OncoMask,
    truth: *const OncoMask,
    out_score: *mut OncoSegScore,
) -> OncoStatus {
    guard(|| {
        let s = score_pair(&handle(pred, "pred")?.0, &handle(truth, "truth")?.0)?;
        *out(out_score, "out_score")? = OncoSegScore {
            dsc: s.dsc,
            avg_hd: s.avg_hd,
            hd95: s.hd95,
        };
        Ok(())
    })
}

fn loss_params(gamma: f64, smooth: f64) -> LossParams {
    LossParams {
        gamma,
        smooth,
        ..LossParams::default()
    }
}

fn kind(k: OncoLossKind) -> LossKind {
    match k {
        OncoLossKind::Dice => LossKind::Dice,
        OncoLossKind::Focal => LossKind::Focal,
        OncoLossKind::LogCoshDiceFocal => LossKind::LogCoshDiceFocal,
    }
}

/// Loss of `n` binary labels `y` against probabilities `p`.
///
/// # Safety
/// `y` and `p` point to `n` values; `out_loss` is writable.
#[no_mangle]
pub unsafe extern "C" fn onco_loss(
    loss: OncoLossKind,
    y: *const f64,
    p: *const f64,
    n: usize,
    gamma: f64,
    smooth: f64,
    out_loss: *mut f64,
) -> OncoStatus {
    guard(|| {
        let v = loss_value(kind(loss), slice(y, n, "y")?, slice(p, n, "p")?, &loss_params(gamma, smooth))?;
        *out(out_loss, "out_loss")? = v;
        Ok(())
    })
}

/// Gradient with respect to `p`, written to `out_grad[0..n]`.
///
/// # Safety
/// `y`, `p` and `out_grad` point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn onco_loss_gradient(
    loss: OncoLossKind,
    y: *const f64,
    p: *const f64,
    n: usize,
    gamma: f64,
    smooth: f64,
    out_grad: *mut f64,
) -> OncoStatus {
    guard(|| {
        let g = loss_gradient(kind(loss), slice(y, n, "y")?, slice(p, n, "p")?, &loss_params(gamma, smooth))?;
        if n > 0 {
            if out_grad.is_null() {
                return Err(Fail::Null("out_grad"));
            }
            std::slice::from_raw_parts_mut(out_grad, n).copy_from_slice(&g);
        }
        Ok(())
    })
}

/// Harrell's C-index; `event` bytes are nonzero for an observed event.
///
/// # Safety
/// Arrays hold `n` values; `out_c` is writable.
#[no_mangle]
pub unsafe extern "C" fn onco_concordance_index(
    risk: *const f64,
    time: *const f64,
    event: *const u8,
    n: usize,
    out_c: *mut f64,
) -> OncoStatus {
    guard(|| {
        let ev: Vec<bool> = slice(event, n, "event")?.iter().map(|&e| e != 0).collect();
        let c = concordance_index(slice(risk, n, "risk")?, slice(time, n, "time")?, &ev)?;
        *out(out_c, "out_c")? = c;
        Ok(())
    })
}

/// Corrected paired t-test over `k` fold scores.
///
/// # Safety
/// `a` and `b` hold `k` values; `out_test` is writable.
#[no_mangle]
pub unsafe extern "C" fn onco_corrected_ttest(
    a: *const f64,
    b: *const f64,
    k: usize,
    n_train: usize,
    n_test: usize,
    out_test: *mut OncoTTest,
) -> OncoStatus {
    guard(|| {
        let r = corrected_paired_ttest(slice(a, k, "a")?, slice(b, k, "b")?, n_train, n_test)?;
        *out(out_test, "out_test")? = OncoTTest { t: r.t, p: r.p, df: r.df };
        Ok(())
    })
}

/// Loads a model JSON written by the library or CLI.
///
/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out_model` is writable.
#[no_mangle]
pub unsafe extern "C" fn onco_model_load(path: *const c_char, out_model: *mut *mut OncoModel) -> OncoStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidParameter("path is not UTF-8".into()))?;
        let m = SurvivalModel::load(Path::new(p))?;
        *out(out_model, "out_model")? = Box::into_raw(Box::new(OncoModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` is NULL or came from `onco_model_load` and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn onco_model_free(model: *mut OncoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features the model expects, or 0 for NULL.
///
/// # Safety
/// `model` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn onco_model_n_features(model: *const OncoModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.feature_names().len())
}

/// Risk scores for a row-major `n_rows x n_cols` matrix.
///
/// # Safety
/// `x` holds `n_rows*n_cols` values and `out_risk` has room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn onco_model_risk(
    model: *const OncoModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_risk: *mut f64,
) -> OncoStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let total = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Error::InvalidParameter("matrix size overflows".into()))?;
        let data = slice(x, total, "x")?;
        let risk = m.0.risk(&DMatrix::from_row_slice(n_rows, n_cols, data))?;
        if n_rows > 0 {
            if out_risk.is_null() {
                return Err(Fail::Null("out_risk"));
            }
            std::slice::from_raw_parts_mut(out_risk, n_rows).copy_from_slice(&risk);
        }
        Ok(())
    })
}
