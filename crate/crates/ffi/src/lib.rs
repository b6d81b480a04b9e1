//! C ABI for volcast.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`VcStatus`]; on failure the message is available from
//! [`vc_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ndarray::{Array2, Array4};
use volcast::config::RunConfig;
use volcast::fitting::{fit_fields, forecast_with_fields, FitResult};
use volcast::verify::{cells_to_ms, neighborhood_csi};
use volcast::{nv3d, synth, Error, GridMeta, VolumeSequence};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Config = 6,
    Diverged = 7,
    NonFinite = 8,
    Panic = 9,
}

/// Geographic metadata of a grid; the level altitudes are passed separately.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcGridMeta {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub frame_interval: f64,
}

/// Reflectivity sequence handle.
pub struct VcSequence(VolumeSequence);

/// Fitted fields handle.
pub struct VcFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VcStatus {
    match e {
        Error::Shape(_) | Error::Index { .. } | Error::Bounds { .. } => VcStatus::Shape,
        Error::Input(_) | Error::Meta(_) => VcStatus::InvalidArgument,
        Error::NonFinite { .. } => VcStatus::NonFinite,
        Error::Diverged { .. } => VcStatus::Diverged,
        Error::Config(_) => VcStatus::Config,
        Error::BadMagic(_)
        | Error::VersionMismatch(_)
        | Error::Truncated { .. }
        | Error::DimensionOverflow(_)
        | Error::TrailingBytes(_)
        | Error::StationCsv { .. }
        | Error::Csv(_) => VcStatus::Format,
        Error::Io { .. } => VcStatus::Io,
    }
}

struct Fail(VcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VcStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            VcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(VcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn config_arg(p: *const c_char) -> Result<RunConfig, Fail> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    Ok(RunConfig::from_toml(str_arg(p, "config")?)?)
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

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn voxel_count(dims: [usize; 4]) -> Result<usize, Fail> {
    dims.iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .ok_or_else(|| Fail(VcStatus::Shape, format!("dimensions {dims:?} overflow")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread (empty if none). Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Build a sequence from T·D·H·W reflectivities in T, D, H, W order.
/// `mask` holds one byte per voxel (nonzero = valid) and may be null for a
/// fully valid sequence. Valid voxels are clipped to [-10, 75] dBZ.
///
/// # Safety
/// `data` and a non-null `mask` must point to T·D·H·W elements, `z_levels`
/// to D elements, `meta` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vc_sequence_new(
    t: usize,
    d: usize,
    h: usize,
    w: usize,
    data: *const f32,
    mask: *const u8,
    meta: *const VcGridMeta,
    z_levels: *const f32,
    out: *mut *mut VcSequence,
) -> VcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if meta.is_null() {
            return Err(null("meta"));
        }
        let n = voxel_count([t, d, h, w])?;
        let values = slice_arg(data, n, "data")?.to_vec();
        let valid = if mask.is_null() { vec![true; n] } else { slice_arg(mask, n, "mask")?.iter().map(|&b| b != 0).collect() };
        let m = *meta;
        let meta = GridMeta {
            lat0: m.lat0,
            lon0: m.lon0,
            dlat: m.dlat,
            dlon: m.dlon,
            z_levels: slice_arg(z_levels, d, "z_levels")?.to_vec(),
            frame_interval: m.frame_interval,
        };
        let shape = (t, d, h, w);
        let seq = VolumeSequence::new(
            Array4::from_shape_vec(shape, values).map_err(|e| Fail(VcStatus::Shape, e.to_string()))?,
            Array4::from_shape_vec(shape, valid).map_err(|e| Fail(VcStatus::Shape, e.to_string()))?,
            meta,
        )?;
        put(out, VcSequence(seq));
        Ok(())
    })
}

/// Read an NV3D file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_sequence_read(path: *const c_char, out: *mut *mut VcSequence) -> VcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = nv3d::read(&PathBuf::from(str_arg(path, "path")?))?;
        put(out, VcSequence(seq));
        Ok(())
    })
}

/// Write an NV3D file.
///
/// # Safety
/// `seq` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vc_sequence_write(seq: *const VcSequence, path: *const c_char) -> VcStatus {
    guard(|| {
        let seq = seq.as_ref().ok_or_else(|| null("seq"))?;
        nv3d::write(&PathBuf::from(str_arg(path, "path")?), &seq.0)?;
        Ok(())
    })
}

/// Store T, D, H, W into `dims[0..4]`.
///
/// # Safety
/// `seq` must be a live handle and `dims` point to four writable elements.
#[no_mangle]
pub unsafe extern "C" fn vc_sequence_dims(seq: *const VcSequence, dims: *mut usize) -> VcStatus {
    guard(|| {
        let seq = seq.as_ref().ok_or_else(|| null("seq"))?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let (t, d, h, w) = seq.0.dims();
        for (i, v) in [t, d, h, w].into_iter().enumerate() {
            *dims.add(i) = v;
        }
        Ok(())
    })
}

/// Copy the reflectivities into `buf`, which must hold exactly `len` =
/// T·D·H·W values.
///
/// # Safety
/// `seq` must be a live handle and `buf` point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn vc_sequence_copy_data(seq: *const VcSequence, buf: *mut f32, len: usize) -> VcStatus {
    guard(|| {
        let seq = seq.as_ref().ok_or_else(|| null("seq"))?;
        let data = seq.0.data();
        if len != data.len() {
            return Err(Fail(VcStatus::Shape, format!("buffer holds {len} values, sequence has {}", data.len())));
        }
        if len > 0 && buf.is_null() {
            return Err(null("buf"));
        }
        for (i, &v) in data.iter().enumerate() {
            *buf.add(i) = v;
        }
        Ok(())
    })
}

/// Release a sequence. Null is ignored.
///
/// # Safety
/// `seq` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vc_sequence_free(seq: *mut VcSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Synthetic case by name (`translation`, `rotation`, `growth`,
/// `diffusion`). A NaN `param` selects the case default.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_synth(
    name: *const c_char,
    d: usize,
    h: usize,
    w: usize,
    frames: usize,
    param: f64,
    seed: u64,
    out: *mut *mut VcSequence,
) -> VcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = (!param.is_nan()).then_some(param);
        let case = synth::make_named(str_arg(name, "name")?, (d, h, w), frames, p, seed)?;
        put(out, VcSequence(case.sequence));
        Ok(())
    })
}

/// Fit physical fields to `seq`. `config_toml` is a run configuration
/// document or null for defaults.
///
/// # Safety
/// `seq` must be a live handle, `config_toml` null or a NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_fit(seq: *const VcSequence, config_toml: *const c_char, out: *mut *mut VcFit) -> VcStatus {
    guard(|| {
        let seq = seq.as_ref().ok_or_else(|| null("seq"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_arg(config_toml)?;
        let fit = fit_fields(&seq.0, &cfg.fit())?;
        put(out, VcFit(fit));
        Ok(())
    })
}

/// Best total loss and the epoch it was reached at.
///
/// # Safety
/// `fit` must be a live handle; `loss` and `epoch` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vc_fit_best(fit: *const VcFit, loss: *mut f64, epoch: *mut usize) -> VcStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        if loss.is_null() || epoch.is_null() {
            return Err(null("loss or epoch"));
        }
        *loss = fit.0.best.total;
        *epoch = fit.0.best_epoch;
        Ok(())
    })
}

/// Release a fit. Null is ignored.
///
/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vc_fit_free(fit: *mut VcFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Roll `horizon` frames forward from the last frame of `past` with the
/// final fitted fields held constant.
///
/// # Safety
/// `fit` and `past` must be live handles, `config_toml` null or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vc_forecast(
    fit: *const VcFit,
    past: *const VcSequence,
    horizon: usize,
    config_toml: *const c_char,
    out: *mut *mut VcSequence,
) -> VcStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        let past = past.as_ref().ok_or_else(|| null("past"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_arg(config_toml)?;
        if past.0.frames() == 0 {
            return Err(Fail(VcStatus::InvalidArgument, "past sequence is empty".into()));
        }
        if past.0.spatial_dims() != fit.0.fields.spatial_dims() {
            return Err(Fail(VcStatus::Shape, "past grid differs from the fitted grid".into()));
        }
        let last = past.0.frame_filled(past.0.frames() - 1)?;
        let frames = forecast_with_fields(last.view(), &fit.0.fields, horizon, &cfg.solver())?;
        let data = frames.mapv(|v| v as f32);
        let mask = Array4::from_elem(data.raw_dim(), true);
        put(out, VcSequence(VolumeSequence::from_raw(data, mask, past.0.meta().clone())?));
        Ok(())
    })
}

/// Neighborhood CSI of two H×W row-major fields.
///
/// # Safety
/// `forecast` and `truth` must point to H·W values; `score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vc_csi(
    forecast: *const f64,
    truth: *const f64,
    h: usize,
    w: usize,
    threshold: f64,
    radius: usize,
    score: *mut f64,
) -> VcStatus {
    guard(|| {
        if score.is_null() {
            return Err(null("score"));
        }
        let n = h.checked_mul(w).ok_or_else(|| Fail(VcStatus::Shape, "field size overflows".into()))?;
        let to2 = |p, what| -> Result<Array2<f64>, Fail> {
            Array2::from_shape_vec((h, w), slice_arg(p, n, what)?.to_vec()).map_err(|e| Fail(VcStatus::Shape, e.to_string()))
        };
        let (f, t) = (to2(forecast, "forecast")?, to2(truth, "truth")?);
        *score = neighborhood_csi(f.view(), t.view(), threshold, radius)?.score;
        Ok(())
    })
}

/// Convert a displacement in cells per frame to (u, v) in m/s.
///
/// # Safety
/// `meta`, `u` and `v` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vc_cells_to_ms(
    disp_y: f64,
    disp_x: f64,
    lat: f64,
    meta: *const VcGridMeta,
    u: *mut f64,
    v: *mut f64,
) -> VcStatus {
    guard(|| {
        let m = meta.as_ref().ok_or_else(|| null("meta"))?;
        if u.is_null() || v.is_null() {
            return Err(null("u or v"));
        }
        let grid = GridMeta {
            lat0: m.lat0,
            lon0: m.lon0,
            dlat: m.dlat,
            dlon: m.dlon,
            z_levels: vec![0.0],
            frame_interval: m.frame_interval,
        };
        let (uu, vv) = cells_to_ms(disp_y, disp_x, lat, &grid)?;
        *u = uu;
        *v = vv;
        Ok(())
    })
}
