use std::ffi::{CStr, CString};
use std::ptr;

use volcast_ffi::*;

fn meta() -> VcGridMeta {
    VcGridMeta { lat0: 30.0, lon0: 110.0, dlat: 0.01, dlon: 0.01, frame_interval: 360.0 }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(vc_last_error()) }.to_string_lossy().into_owned()
}

fn small_sequence() -> *mut VcSequence {
    let data: Vec<f32> = (0..2 * 2 * 3 * 3).map(|i| i as f32 * 10.0 - 20.0).collect();
    let z = [500.0f32, 1000.0];
    let mut seq = ptr::null_mut();
    let st = unsafe { vc_sequence_new(2, 2, 3, 3, data.as_ptr(), ptr::null(), &meta(), z.as_ptr(), &mut seq) };
    assert_eq!(st, VcStatus::Ok, "{}", last_error());
    seq
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(vc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn sequence_round_trip_clips_and_reports_dims() {
    let seq = small_sequence();
    let mut dims = [0usize; 4];
    assert_eq!(unsafe { vc_sequence_dims(seq, dims.as_mut_ptr()) }, VcStatus::Ok);
    assert_eq!(dims, [2, 2, 3, 3]);
    let mut buf = vec![0f32; 36];
    assert_eq!(unsafe { vc_sequence_copy_data(seq, buf.as_mut_ptr(), buf.len()) }, VcStatus::Ok);
    assert_eq!(buf[0], -10.0);
    assert_eq!(buf[3], 10.0);
    assert_eq!(buf[35], 75.0);

    let mut short = vec![0f32; 35];
    assert_eq!(unsafe { vc_sequence_copy_data(seq, short.as_mut_ptr(), short.len()) }, VcStatus::Shape);
    assert!(last_error().contains("35"));

    let dir = std::env::temp_dir().join(format!("volcast_ffi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = CString::new(dir.join("rt.nv3d").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { vc_sequence_write(seq, path.as_ptr()) }, VcStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { vc_sequence_read(path.as_ptr(), &mut back) }, VcStatus::Ok);
    let mut buf2 = vec![0f32; 36];
    assert_eq!(unsafe { vc_sequence_copy_data(back, buf2.as_mut_ptr(), buf2.len()) }, VcStatus::Ok);
    assert_eq!(buf, buf2);
    unsafe {
        vc_sequence_free(seq);
        vc_sequence_free(back);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn errors_map_to_codes() {
    let mut seq = ptr::null_mut();
    let z = [500.0f32];
    let data = [0f32; 4];
    assert_eq!(
        unsafe { vc_sequence_new(1, 1, 2, 2, ptr::null(), ptr::null(), &meta(), z.as_ptr(), &mut seq) },
        VcStatus::NullPointer
    );
    let nan = [f32::NAN; 4];
    assert_eq!(
        unsafe { vc_sequence_new(1, 1, 2, 2, nan.as_ptr(), ptr::null(), &meta(), z.as_ptr(), &mut seq) },
        VcStatus::NonFinite
    );
    let bad = VcGridMeta { frame_interval: 0.0, ..meta() };
    assert_eq!(
        unsafe { vc_sequence_new(1, 1, 2, 2, data.as_ptr(), ptr::null(), &bad, z.as_ptr(), &mut seq) },
        VcStatus::InvalidArgument
    );
    assert!(seq.is_null());

    let missing = CString::new("/nonexistent/volcast/x.nv3d").unwrap();
    assert_eq!(unsafe { vc_sequence_read(missing.as_ptr(), &mut seq) }, VcStatus::Io);
    assert!(!last_error().is_empty());

    let name = CString::new("tornado").unwrap();
    assert_eq!(unsafe { vc_synth(name.as_ptr(), 2, 8, 8, 3, f64::NAN, 0, &mut seq) }, VcStatus::InvalidArgument);

    let src = small_sequence();
    let mut fit = ptr::null_mut();
    let cfg = CString::new("epochs = 0").unwrap();
    assert_eq!(unsafe { vc_fit(src, cfg.as_ptr(), &mut fit) }, VcStatus::Config);
    let cfg = CString::new("no_such_key = 1").unwrap();
    assert_eq!(unsafe { vc_fit(src, cfg.as_ptr(), &mut fit) }, VcStatus::Config);
    unsafe {
        vc_sequence_free(src);
        vc_sequence_free(ptr::null_mut());
        vc_fit_free(ptr::null_mut());
    }
}

#[test]
fn synth_fit_forecast_pipeline() {
    let name = CString::new("translation").unwrap();
    let mut seq = ptr::null_mut();
    assert_eq!(unsafe { vc_synth(name.as_ptr(), 2, 16, 16, 4, f64::NAN, 7, &mut seq) }, VcStatus::Ok, "{}", last_error());
    let cfg = CString::new("epochs = 5\nm_samples = 4").unwrap();
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { vc_fit(seq, cfg.as_ptr(), &mut fit) }, VcStatus::Ok, "{}", last_error());
    let (mut loss, mut epoch) = (f64::NAN, usize::MAX);
    assert_eq!(unsafe { vc_fit_best(fit, &mut loss, &mut epoch) }, VcStatus::Ok);
    assert!(loss.is_finite() && epoch < 5);

    let mut fc = ptr::null_mut();
    assert_eq!(unsafe { vc_forecast(fit, seq, 3, cfg.as_ptr(), &mut fc) }, VcStatus::Ok, "{}", last_error());
    let mut dims = [0usize; 4];
    assert_eq!(unsafe { vc_sequence_dims(fc, dims.as_mut_ptr()) }, VcStatus::Ok);
    assert_eq!(dims, [3, 2, 16, 16]);

    let other = small_sequence();
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { vc_forecast(fit, other, 1, ptr::null(), &mut bad) }, VcStatus::Shape);
    unsafe {
        vc_sequence_free(other);
        vc_sequence_free(fc);
        vc_fit_free(fit);
        vc_sequence_free(seq);
    }
}

#[test]
fn csi_and_wind_conversion() {
    let f = [1.0, 1.0, 0.0, 0.0];
    let o = [1.0, 0.0, 1.0, 0.0];
    let mut score = f64::NAN;
    assert_eq!(unsafe { vc_csi(f.as_ptr(), o.as_ptr(), 2, 2, 0.5, 0, &mut score) }, VcStatus::Ok);
    assert!((score - 1.0 / 3.0).abs() < 1e-12);

    let m = VcGridMeta { lat0: 0.0, lon0: 0.0, dlat: 0.01, dlon: 0.01, frame_interval: 360.0 };
    let (mut u, mut v) = (0.0, 0.0);
    assert_eq!(unsafe { vc_cells_to_ms(0.0, 1.0, 0.0, &m, &mut u, &mut v) }, VcStatus::Ok);
    assert!((u - 3.0887).abs() < 1e-3 && v.abs() < 1e-12);
    assert_eq!(unsafe { vc_cells_to_ms(0.0, 1.0, 0.0, &m, ptr::null_mut(), &mut v) }, VcStatus::NullPointer);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/volcast.h")).unwrap();
    for sym in [
        "vc_version",
        "vc_last_error",
        "vc_sequence_new",
        "vc_sequence_read",
        "vc_sequence_write",
        "vc_sequence_dims",
        "vc_sequence_copy_data",
        "vc_sequence_free",
        "vc_synth",
        "vc_fit",
        "vc_fit_best",
        "vc_fit_free",
        "vc_forecast",
        "vc_csi",
        "vc_cells_to_ms",
        "VC_STATUS_PANIC",
    ] {
        assert!(header.contains(sym), "{sym} missing from header");
    }
}
