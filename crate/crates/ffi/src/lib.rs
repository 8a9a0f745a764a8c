//! C ABI over the trained classifiers, the edge-based pose measurement and
//! the Welch test.
//!
//! Every fallible call returns an [`HvcpcbStatus`]; on failure the message is
//! available from [`hvcpcb_last_error_message`] on the same thread. Images
//! are row-major, channel-interleaved `f32` buffers with values in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use hvcpcb::experiments::welch_t_test;
use hvcpcb::network::{load_checkpoint, Model, NetworkError};
use hvcpcb::posemeasure::{measure, MeasureConfig};
use hvcpcb::raster::Image;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HvcpcbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    ImageSize = 5,
    Measurement = 6,
    Statistics = 7,
    Internal = 8,
}

/// Opaque trained model.
pub struct HvcpcbModel {
    inner: Model<f32>,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HvcpcbPose {
    /// Degrees, positive for left rotations.
    pub theta_deg: f64,
    /// `(w_bottom - w_top) / w_top`.
    pub ratio: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HvcpcbWelch {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    /// Both samples had zero variance.
    pub degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let s = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: HvcpcbStatus, msg: impl ToString) -> HvcpcbStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> HvcpcbStatus) -> HvcpcbStatus {
    set_error("");
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(HvcpcbStatus::Internal, "panic inside hvcpcb"))
}

fn network_status(e: &NetworkError) -> HvcpcbStatus {
    match e {
        NetworkError::Io(_) => HvcpcbStatus::Io,
        NetworkError::Checkpoint(_) | NetworkError::Config(_) => HvcpcbStatus::Checkpoint,
        NetworkError::ImageSize { .. } => HvcpcbStatus::ImageSize,
        _ => HvcpcbStatus::Internal,
    }
}

unsafe fn image_from_raw(
    pixels: *const f32,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<Image, HvcpcbStatus> {
    if pixels.is_null() {
        return Err(fail(HvcpcbStatus::NullPointer, "pixels is null"));
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .filter(|&n| n > 0)
        .ok_or_else(|| fail(HvcpcbStatus::InvalidArgument, "empty or oversized image"))?;
    let data = unsafe { slice::from_raw_parts(pixels, n) }.to_vec();
    Image::new(width, height, channels, data)
        .map_err(|e| fail(HvcpcbStatus::InvalidArgument, e))
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn hvcpcb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hvcpcb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `hvcpcb`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
/// The model written to `*out` must be released with [`hvcpcb_model_free`].
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_model_load(
    path: *const c_char,
    out: *mut *mut HvcpcbModel,
) -> HvcpcbStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(HvcpcbStatus::NullPointer, "path or out is null");
        }
        unsafe { *out = ptr::null_mut() };
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail(HvcpcbStatus::InvalidArgument, "path is not UTF-8");
        };
        match load_checkpoint::<f32>(Path::new(path)) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(HvcpcbModel { inner })) };
                HvcpcbStatus::Ok
            }
            Err(e) => fail(network_status(&e), e),
        }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`hvcpcb_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_model_free(model: *mut HvcpcbModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of classes, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_model_num_classes(model: *const HvcpcbModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.config().num_classes)
}

/// Expected square input side and channel count.
///
/// # Safety
/// `model` must be a live model; `size` and `channels` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_model_input_shape(
    model: *const HvcpcbModel,
    size: *mut usize,
    channels: *mut usize,
) -> HvcpcbStatus {
    guard(|| {
        let (Some(m), false, false) = (unsafe { model.as_ref() }, size.is_null(), channels.is_null())
        else {
            return fail(HvcpcbStatus::NullPointer, "null argument");
        };
        unsafe {
            *size = m.inner.config().input_size;
            *channels = m.inner.config().input_channels;
        }
        HvcpcbStatus::Ok
    })
}

/// Classifies one image. `logits` may be null; otherwise it receives
/// `logits_len` values, which must equal the class count.
///
/// # Safety
/// `pixels` must hold `width * height * channels` floats; `class_out` must
/// be valid; `logits`, when non-null, must hold `logits_len` floats.
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_model_predict(
    model: *const HvcpcbModel,
    pixels: *const f32,
    width: usize,
    height: usize,
    channels: usize,
    class_out: *mut usize,
    logits: *mut f32,
    logits_len: usize,
) -> HvcpcbStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(HvcpcbStatus::NullPointer, "model is null");
        };
        if class_out.is_null() {
            return fail(HvcpcbStatus::NullPointer, "class_out is null");
        }
        let k = m.inner.config().num_classes;
        if !logits.is_null() && logits_len != k {
            return fail(
                HvcpcbStatus::InvalidArgument,
                format!("logits_len {logits_len} != {k} classes"),
            );
        }
        let image = match unsafe { image_from_raw(pixels, width, height, channels) } {
            Ok(i) => i,
            Err(s) => return s,
        };
        let out = match m.inner.logits(&[&image]) {
            Ok(t) => t,
            Err(e) => return fail(network_status(&e), e),
        };
        let row = out.data();
        let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        unsafe {
            *class_out = best;
            if !logits.is_null() {
                slice::from_raw_parts_mut(logits, k).copy_from_slice(&row[..k]);
            }
        }
        HvcpcbStatus::Ok
    })
}

/// Measures in-plane rotation and bottom/top width ratio of a board image
/// with the default detector settings.
///
/// # Safety
/// `pixels` must hold `width * height * channels` floats; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_measure_pose(
    pixels: *const f32,
    width: usize,
    height: usize,
    channels: usize,
    out: *mut HvcpcbPose,
) -> HvcpcbStatus {
    guard(|| {
        if out.is_null() {
            return fail(HvcpcbStatus::NullPointer, "out is null");
        }
        let image = match unsafe { image_from_raw(pixels, width, height, channels) } {
            Ok(i) => i,
            Err(s) => return s,
        };
        match measure(&image, &MeasureConfig::default()) {
            Ok(m) => {
                unsafe {
                    *out = HvcpcbPose {
                        theta_deg: m.theta_deg,
                        ratio: m.ratio,
                    }
                };
                HvcpcbStatus::Ok
            }
            Err(e) => fail(HvcpcbStatus::Measurement, e),
        }
    })
}

/// Two-sided Welch t-test between two samples of at least two values.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hvcpcb_welch_t_test(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut HvcpcbWelch,
) -> HvcpcbStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(HvcpcbStatus::NullPointer, "null argument");
        }
        let (a, b) = unsafe { (slice::from_raw_parts(a, na), slice::from_raw_parts(b, nb)) };
        match welch_t_test(a, b) {
            Ok(w) => {
                unsafe {
                    *out = HvcpcbWelch {
                        t: w.t,
                        df: w.df,
                        p_value: w.p_value,
                        degenerate: w.degenerate,
                    }
                };
                HvcpcbStatus::Ok
            }
            Err(e) => fail(HvcpcbStatus::Statistics, e),
        }
    })
}
