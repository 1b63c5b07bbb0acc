//! C ABI over `skymask`.
//!
//! Every fallible call returns a [`SkymaskStatus`]; on failure a message for
//! the calling thread is available from [`skymask_last_error`]. Objects are
//! opaque handles created by `*_load` / `*_new` style calls and released with
//! the matching `*_free`. Passing NULL to a `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use skymask::evalkit::{average_precision, EvalError, RankedItem};
use skymask::features::{extract_color_histogram, FeatureError, FeatureVector};
use skymask::imgcore::{load_image, rgb_to_lab, save_image, Image, ImageError};
use skymask::maskaug::{augment, AugmentError, OverlaySpec};
use skymask::superpixel::{slic_segment, SegmentError, Segmentation, SlicParams};
use skymask::svm::{score, LinearModel, SvmError};

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkymaskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Io = 4,
    UnsupportedFormat = 5,
    CorruptData = 6,
    Segmentation = 7,
    Evaluation = 8,
    Model = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Decoded RGB image.
pub struct SkymaskImage(Image);

/// Superpixel label map.
pub struct SkymaskSegmentation(Segmentation);

/// Trained one-vs-rest linear model.
pub struct SkymaskModel(LinearModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SkymaskStatus, String);

impl Failure {
    fn new(status: SkymaskStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        let status = match e {
            ImageError::NotFound(_) => SkymaskStatus::NotFound,
            ImageError::UnsupportedFormat(_) => SkymaskStatus::UnsupportedFormat,
            ImageError::Corrupt { .. } => SkymaskStatus::CorruptData,
            ImageError::Io { .. } => SkymaskStatus::Io,
            ImageError::InvalidRaster(_) => SkymaskStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<SegmentError> for Failure {
    fn from(e: SegmentError) -> Self {
        Failure(SkymaskStatus::Segmentation, e.to_string())
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::Image(e) => e.into(),
            other => Failure(SkymaskStatus::Segmentation, other.to_string()),
        }
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        Failure(SkymaskStatus::InvalidArgument, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure(SkymaskStatus::Evaluation, e.to_string())
    }
}

impl From<SvmError> for Failure {
    fn from(e: SvmError) -> Self {
        let status = match e {
            SvmError::DimensionMismatch { .. } => SkymaskStatus::InvalidArgument,
            SvmError::ModelIo { ref reason, .. } if reason.contains("No such file") => {
                SkymaskStatus::NotFound
            }
            _ => SkymaskStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SkymaskStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            SkymaskStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SkymaskStatus::Panic
        }
    }
}

unsafe fn nonnull<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(SkymaskStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::new(SkymaskStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::new(SkymaskStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(
            SkymaskStatus::NullPointer,
            format!("{what} is NULL"),
        ));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(SkymaskStatus::NullPointer, "output pointer is NULL"));
    }
    *out = ptr::null_mut();
    Ok(())
}

/// Message describing the last failure on this thread, or NULL after a
/// successful call. Valid until the next skymask call on the same thread.
#[no_mangle]
pub extern "C" fn skymask_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn skymask_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Decodes a PNG or JPEG file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_load(
    path: *const c_char,
    out: *mut *mut SkymaskImage,
) -> SkymaskStatus {
    guard(|| {
        out_arg(out)?;
        let img = load_image(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SkymaskImage(img)));
        Ok(())
    })
}

/// Wraps a copy of `len` bytes of interleaved 8-bit RGB, row-major.
///
/// # Safety
/// `rgb` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_new(
    width: u32,
    height: u32,
    rgb: *const u8,
    len: usize,
    out: *mut *mut SkymaskImage,
) -> SkymaskStatus {
    guard(|| {
        out_arg(out)?;
        let data = slice_arg(rgb, len, "rgb")?.to_vec();
        let img = Image::new(width, height, data)?;
        *out = Box::into_raw(Box::new(SkymaskImage(img)));
        Ok(())
    })
}

/// Writes the image as PNG.
///
/// # Safety
/// `img` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_save(img: *const SkymaskImage, path: *const c_char) -> SkymaskStatus {
    guard(|| {
        let img = nonnull(img, "image")?;
        save_image(&img.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `img` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_width(img: *const SkymaskImage) -> u32 {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// # Safety
/// `img` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_height(img: *const SkymaskImage) -> u32 {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Borrowed pointer to the interleaved RGB bytes; `len` receives the byte
/// count. Valid until the image is freed.
///
/// # Safety
/// `img` must be NULL or a live handle; `len` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_data(img: *const SkymaskImage, len: *mut usize) -> *const u8 {
    let Some(img) = img.as_ref() else {
        return ptr::null();
    };
    if let Some(len) = len.as_mut() {
        *len = img.0.data().len();
    }
    img.0.data().as_ptr()
}

/// # Safety
/// `img` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skymask_image_free(img: *mut SkymaskImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// SLIC superpixels with connectivity enforcement and the default
/// iteration budget.
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_segment(
    img: *const SkymaskImage,
    target_count: u32,
    compactness: f64,
    out: *mut *mut SkymaskSegmentation,
) -> SkymaskStatus {
    guard(|| {
        out_arg(out)?;
        let img = nonnull(img, "image")?;
        let params = SlicParams::new(target_count as usize).with_compactness(compactness);
        let seg = slic_segment(&rgb_to_lab(&img.0), &params)?;
        *out = Box::into_raw(Box::new(SkymaskSegmentation(seg)));
        Ok(())
    })
}

/// # Safety
/// `seg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skymask_segmentation_count(seg: *const SkymaskSegmentation) -> usize {
    seg.as_ref().map_or(0, |s| s.0.segment_count())
}

/// Borrowed row-major label array with `width * height` entries, labels in
/// `0..count`.
///
/// # Safety
/// `seg` must be NULL or a live handle; `len` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_segmentation_labels(
    seg: *const SkymaskSegmentation,
    len: *mut usize,
) -> *const u32 {
    let Some(seg) = seg.as_ref() else {
        return ptr::null();
    };
    if let Some(len) = len.as_mut() {
        *len = seg.0.labels().len();
    }
    seg.0.labels().as_ptr()
}

/// # Safety
/// `seg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skymask_segmentation_free(seg: *mut SkymaskSegmentation) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}

/// Paints superpixel boundaries in `r,g,b` onto a copy of `img`.
/// `target_count == 0` returns an unchanged copy.
///
/// # Safety
/// `img` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_augment(
    img: *const SkymaskImage,
    target_count: u32,
    r: u8,
    g: u8,
    b: u8,
    compactness: f64,
    out: *mut *mut SkymaskImage,
) -> SkymaskStatus {
    guard(|| {
        out_arg(out)?;
        let img = nonnull(img, "image")?;
        let mut spec = OverlaySpec::new(target_count as usize).with_color([r, g, b]);
        spec.compactness = compactness;
        let masked = augment(&img.0, &spec)?;
        *out = Box::into_raw(Box::new(SkymaskImage(masked)));
        Ok(())
    })
}

/// Joint RGB histogram with `bins^3` cells, written into `out`.
///
/// # Safety
/// `img` must be a live handle; `out` must have room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn skymask_color_histogram(
    img: *const SkymaskImage,
    bins_per_channel: usize,
    out: *mut f64,
    out_len: usize,
) -> SkymaskStatus {
    guard(|| {
        let img = nonnull(img, "image")?;
        let v = extract_color_histogram("", &img.0, bins_per_channel)?;
        if out_len < v.values.len() {
            return Err(Failure::new(
                SkymaskStatus::BufferTooSmall,
                format!("need {} values, buffer holds {out_len}", v.values.len()),
            ));
        }
        if out.is_null() {
            return Err(Failure::new(SkymaskStatus::NullPointer, "out is NULL"));
        }
        ptr::copy_nonoverlapping(v.values.as_ptr(), out, v.values.len());
        Ok(())
    })
}

/// Non-interpolated average precision of a ranking. `is_positive[i]` is
/// nonzero for positives; equal scores keep input order.
///
/// # Safety
/// `scores` and `is_positive` must each hold `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_average_precision(
    scores: *const f64,
    is_positive: *const u8,
    n: usize,
    out: *mut f64,
) -> SkymaskStatus {
    guard(|| {
        let out = out
            .as_mut()
            .ok_or_else(|| Failure::new(SkymaskStatus::NullPointer, "out is NULL"))?;
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(is_positive, n, "is_positive")?;
        let items: Vec<RankedItem> = scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &p))| RankedItem::new(i.to_string(), s, p != 0))
            .collect();
        *out = average_precision(&items)?;
        Ok(())
    })
}

/// Loads a model JSON written by `skymask train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_model_load(
    path: *const c_char,
    out: *mut *mut SkymaskModel,
) -> SkymaskStatus {
    guard(|| {
        out_arg(out)?;
        let model = LinearModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SkymaskModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skymask_model_dimension(model: *const SkymaskModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dimension())
}

/// `w . x + b` for a feature vector of `n` values.
///
/// # Safety
/// `model` must be a live handle; `x` must hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn skymask_model_score(
    model: *const SkymaskModel,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> SkymaskStatus {
    guard(|| {
        let model = nonnull(model, "model")?;
        let out = out
            .as_mut()
            .ok_or_else(|| Failure::new(SkymaskStatus::NullPointer, "out is NULL"))?;
        let v = FeatureVector::new("", slice_arg(x, n, "x")?.to_vec());
        *out = score(&model.0, &v)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skymask_model_free(model: *mut SkymaskModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
