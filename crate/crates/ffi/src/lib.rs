//! C ABI for the `feattrack` tracker.
//!
//! Every entry point returns an [`FtStatus`]; on failure the message is
//! available from [`ft_last_error`] on the same thread. Trackers are opaque
//! handles owned by the caller and released with [`ft_tracker_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use feattrack::{BoundingBox, DictUpdateMode, EncoderMethod, EncoderSpec, Error, GrayFrame, Tracker, TrackerConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TrackingFailed = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtEncoder {
    SoftThreshold = 0,
    TriangleKmeans = 1,
    SoftAssignment = 2,
    LocalizedSoftAssignment = 3,
    SparseCoding = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtDictUpdate {
    Off = 0,
    Triggered = 1,
    Always = 2,
}

/// Axis-aligned box, top-left origin, 0-based pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FtBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

/// Subset of the tracker configuration exposed over the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtConfig {
    /// One of `FtEncoder`.
    pub encoder: u32,
    /// One of `FtDictUpdate`.
    pub dict_update: u32,
    pub dict_size: u32,
    pub gamma: f64,
    pub seed: u64,
}

/// Opaque tracker handle.
pub struct FtTracker {
    inner: Tracker,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Failure = (FtStatus, String);

fn status_of(e: &Error) -> FtStatus {
    match e {
        Error::AtFrame { source, .. } => status_of(source),
        Error::InvalidBox(_)
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch(_)
        | Error::RegionTooSmall { .. }
        | Error::NotEnoughPatches { .. } => FtStatus::InvalidArgument,
        _ => FtStatus::TrackingFailed,
    }
}

fn from_core(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FtStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            FtStatus::Panic
        }
    }
}

fn to_box(b: FtBox) -> Result<BoundingBox, Failure> {
    BoundingBox::new(b.x, b.y, b.w, b.h).map_err(from_core)
}

fn from_box(b: BoundingBox) -> FtBox {
    FtBox {
        x: b.x,
        y: b.y,
        w: b.w,
        h: b.h,
    }
}

/// Copies a strided 8-bit grayscale buffer into a frame.
///
/// # Safety
/// `pixels` must be readable for `stride * (height - 1) + width` bytes.
unsafe fn read_frame(pixels: *const u8, width: usize, height: usize, stride: usize) -> Result<GrayFrame, Failure> {
    if pixels.is_null() {
        return Err((FtStatus::NullPointer, "pixel buffer is null".into()));
    }
    if width == 0 || height == 0 {
        return Err((FtStatus::InvalidArgument, format!("frame size {width}x{height} is empty")));
    }
    if stride < width {
        return Err((FtStatus::InvalidArgument, format!("stride {stride} < width {width}")));
    }
    let mut data = Vec::with_capacity(width * height);
    for row in 0..height {
        data.extend_from_slice(std::slice::from_raw_parts(pixels.add(row * stride), width));
    }
    GrayFrame::new(width, height, data).map_err(from_core)
}

fn tracker_config(cfg: &FtConfig) -> Result<TrackerConfig, Failure> {
    let method = match cfg.encoder {
        x if x == FtEncoder::SoftThreshold as u32 => EncoderMethod::SoftThreshold,
        x if x == FtEncoder::TriangleKmeans as u32 => EncoderMethod::TriangleKMeans,
        x if x == FtEncoder::SoftAssignment as u32 => EncoderMethod::SoftAssignment,
        x if x == FtEncoder::LocalizedSoftAssignment as u32 => EncoderMethod::LocalizedSoftAssignment,
        x if x == FtEncoder::SparseCoding as u32 => EncoderMethod::SparseCoding,
        x => return Err((FtStatus::InvalidArgument, format!("unknown encoder {x}"))),
    };
    let mode = match cfg.dict_update {
        x if x == FtDictUpdate::Off as u32 => DictUpdateMode::Off,
        x if x == FtDictUpdate::Triggered as u32 => DictUpdateMode::Triggered,
        x if x == FtDictUpdate::Always as u32 => DictUpdateMode::Always,
        x => return Err((FtStatus::InvalidArgument, format!("unknown dictionary update mode {x}"))),
    };
    Ok(TrackerConfig {
        encoder: EncoderSpec::with_method(method),
        dict_update_mode: mode,
        dict_size: cfg.dict_size as usize,
        gamma: cfg.gamma,
        seed: cfg.seed,
        ..TrackerConfig::default()
    })
}

/// Default configuration: soft-threshold encoder, triggered updates,
/// 100 bases, gamma 0.01, seed 0.
#[no_mangle]
pub extern "C" fn ft_config_default() -> FtConfig {
    let d = TrackerConfig::default();
    FtConfig {
        encoder: FtEncoder::SoftThreshold as u32,
        dict_update: FtDictUpdate::Triggered as u32,
        dict_size: d.dict_size as u32,
        gamma: d.gamma,
        seed: d.seed,
    }
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next `ft_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Learns the initial dictionary and model from the first frame.
///
/// `config` may be null for defaults. On success `*out` receives a handle
/// that must be released with `ft_tracker_free`.
///
/// # Safety
/// `pixels` must be readable for `stride * (height - 1) + width` bytes,
/// `config` must be null or valid, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_new(
    config: *const FtConfig,
    pixels: *const u8,
    width: usize,
    height: usize,
    stride: usize,
    init: FtBox,
    out: *mut *mut FtTracker,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            return Err((FtStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let cfg = if config.is_null() { ft_config_default() } else { *config };
        let frame = read_frame(pixels, width, height, stride)?;
        let inner = Tracker::new(&frame, to_box(init)?, tracker_config(&cfg)?).map_err(from_core)?;
        *out = Box::into_raw(Box::new(FtTracker { inner }));
        Ok(())
    })
}

/// Tracks the target into the next frame. `out_box` and `out_score` may be null.
///
/// # Safety
/// `tracker` must come from `ft_tracker_new`; the buffer rules of
/// `ft_tracker_new` apply; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_step(
    tracker: *mut FtTracker,
    pixels: *const u8,
    width: usize,
    height: usize,
    stride: usize,
    out_box: *mut FtBox,
    out_score: *mut f64,
) -> FtStatus {
    guard(|| {
        let t = tracker
            .as_mut()
            .ok_or((FtStatus::NullPointer, "tracker is null".to_string()))?;
        let frame = read_frame(pixels, width, height, stride)?;
        let r = t.inner.step(&frame).map_err(from_core)?;
        if !out_box.is_null() {
            *out_box = from_box(r.bbox);
        }
        if !out_score.is_null() {
            *out_score = r.score;
        }
        Ok(())
    })
}

/// Current box estimate.
///
/// # Safety
/// `tracker` must come from `ft_tracker_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_box(tracker: *const FtTracker, out: *mut FtBox) -> FtStatus {
    guard(|| match (tracker.as_ref(), out.is_null()) {
        (Some(t), false) => {
            *out = from_box(t.inner.current_box());
            Ok(())
        }
        _ => Err((FtStatus::NullPointer, "tracker or out is null".into())),
    })
}

/// Number of dictionary updates so far, or 0 for a null handle.
///
/// # Safety
/// `tracker` must be null or come from `ft_tracker_new`.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_update_count(tracker: *const FtTracker) -> u64 {
    tracker.as_ref().map_or(0, |t| t.inner.update_count() as u64)
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must be null or come from `ft_tracker_new`, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ft_tracker_free(tracker: *mut FtTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

fn metric(a: FtBox, b: FtBox, out: *mut f64, f: fn(&BoundingBox, &BoundingBox) -> f64) -> FtStatus {
    guard(|| {
        if out.is_null() {
            return Err((FtStatus::NullPointer, "out is null".into()));
        }
        let v = f(&to_box(a)?, &to_box(b)?);
        unsafe { *out = v };
        Ok(())
    })
}

/// Overlap ratio (intersection over union) of two boxes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_vor(a: FtBox, b: FtBox, out: *mut f64) -> FtStatus {
    metric(a, b, out, feattrack::vor)
}

/// Euclidean distance between box centers.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_cle(a: FtBox, b: FtBox, out: *mut f64) -> FtStatus {
    metric(a, b, out, feattrack::cle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    fn last() -> String {
        unsafe { CStr::from_ptr(ft_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn metric_errors_set_message() {
        let mut v = 0.0;
        let bad = FtBox { x: 0, y: 0, w: 0, h: 3 };
        let ok = FtBox { x: 0, y: 0, w: 2, h: 2 };
        assert_eq!(unsafe { ft_vor(bad, ok, &mut v) }, FtStatus::InvalidArgument);
        assert!(last().contains("invalid box"));
        assert_eq!(unsafe { ft_vor(ok, ok, &mut v) }, FtStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(last(), "");
        assert_eq!(unsafe { ft_cle(ok, ok, ptr::null_mut()) }, FtStatus::NullPointer);
    }

    #[test]
    fn strided_frames_drop_padding() {
        let buf = [1u8, 2, 99, 3, 4, 99];
        let f = unsafe { read_frame(buf.as_ptr(), 2, 2, 3) }.unwrap();
        assert_eq!(f.pixels(), &[1, 2, 3, 4]);
        assert!(unsafe { read_frame(buf.as_ptr(), 3, 2, 2) }.is_err());
    }
}
