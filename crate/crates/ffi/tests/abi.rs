use std::ffi::{CStr, CString};
use std::ptr;

use msdoa_ffi::*;

const TABLE1: &str = include_str!("../../core/configs/table1.cfg");

fn last_error() -> String {
    unsafe { CStr::from_ptr(msdoa_last_error()) }.to_string_lossy().into_owned()
}

fn parse(text: &str) -> *mut MsdoaConfig {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { msdoa_config_parse(c.as_ptr(), &mut cfg) }, MsdoaStatus::Ok, "{}", last_error());
    cfg
}

fn set(cfg: *mut MsdoaConfig, kv: &str) -> MsdoaStatus {
    let c = CString::new(kv).unwrap();
    unsafe { msdoa_config_set(cfg, c.as_ptr()) }
}

#[test]
fn parse_and_validate() {
    let cfg = parse(TABLE1);
    assert_eq!(unsafe { msdoa_config_validate(cfg) }, MsdoaStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { msdoa_config_free(cfg) };
}

#[test]
fn validation_error_has_code_and_message() {
    let text = CString::new(TABLE1.replace("harmonics = 15", "harmonics = 14")).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { msdoa_config_parse(text.as_ptr(), &mut cfg) };
    assert_eq!(st, MsdoaStatus::Validation);
    assert!(cfg.is_null());
    assert!(last_error().contains("harmonic"), "{}", last_error());
}

#[test]
fn rejected_override_leaves_config_intact() {
    let cfg = parse(TABLE1);
    assert_eq!(set(cfg, "estimator.harmonics=3"), MsdoaStatus::Validation);
    assert_eq!(unsafe { msdoa_config_validate(cfg) }, MsdoaStatus::Ok);
    unsafe { msdoa_config_free(cfg) };
}

#[test]
fn null_arguments() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { msdoa_config_parse(ptr::null(), &mut cfg) }, MsdoaStatus::InvalidArgument);
    assert_eq!(unsafe { msdoa_config_validate(ptr::null()) }, MsdoaStatus::InvalidArgument);
    assert_eq!(unsafe { msdoa_sweep_rows(ptr::null()) }, 0);
    unsafe {
        msdoa_config_free(ptr::null_mut());
        msdoa_sweep_free(ptr::null_mut());
        msdoa_string_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_is_io() {
    let path = CString::new("/nonexistent/msdoa.cfg").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { msdoa_config_load(path.as_ptr(), &mut cfg) }, MsdoaStatus::Io);
}

#[test]
fn sweep_round_trip() {
    let cfg = parse(&format!("{TABLE1}\n[sweep]\nvariable = \"snr_db\"\nvalues = [0, 10]\n"));
    assert_eq!(set(cfg, "run.trials=4"), MsdoaStatus::Ok);
    let mut sweep = ptr::null_mut();
    assert_eq!(unsafe { msdoa_run_sweep(cfg, 2, &mut sweep) }, MsdoaStatus::Ok, "{}", last_error());
    unsafe {
        assert_eq!(msdoa_sweep_rows(sweep), 2);
        assert_eq!(msdoa_sweep_sources(sweep), 2);
        let (mut pr, mut rmse) = (0.0, 0.0);
        assert_eq!(msdoa_sweep_row(sweep, 1, &mut pr, &mut rmse), MsdoaStatus::Ok);
        assert!((0.0..=1.0).contains(&pr) && rmse >= 0.0);
        assert_eq!(msdoa_sweep_row(sweep, 2, &mut pr, &mut rmse), MsdoaStatus::InvalidArgument);
        let mut crb = [0.0; 2];
        assert_eq!(msdoa_sweep_crb(sweep, 0, crb.as_mut_ptr(), 2), MsdoaStatus::Ok);
        assert!(crb.iter().all(|&c| c > 0.0));
        assert_eq!(msdoa_sweep_crb(sweep, 0, crb.as_mut_ptr(), 1), MsdoaStatus::InvalidArgument);
        let mut csv = ptr::null_mut();
        assert_eq!(msdoa_sweep_csv(sweep, &mut csv), MsdoaStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        msdoa_string_free(csv);
        assert!(text.contains("sweep_var,value,PR,RMSE_deg,sqrt_CRB_deg_1,sqrt_CRB_deg_2"));
        assert_eq!(text.lines().filter(|l| l.starts_with("snr_db,")).count(), 2);
        msdoa_sweep_free(sweep);
        msdoa_config_free(cfg);
    }
}

#[test]
fn crb_table_and_emit() {
    let cfg = parse(TABLE1);
    assert_eq!(set(cfg, "run.trials=2"), MsdoaStatus::Ok);
    unsafe {
        let mut csv = ptr::null_mut();
        assert_eq!(msdoa_crb_csv(cfg, 1, &mut csv), MsdoaStatus::Ok);
        assert!(CStr::from_ptr(csv).to_str().unwrap().contains("sqrt_CRB_deg_2"));
        msdoa_string_free(csv);
        let mut text = ptr::null_mut();
        assert_eq!(msdoa_config_emit(cfg, &mut text), MsdoaStatus::Ok);
        let again = parse(CStr::from_ptr(text).to_str().unwrap());
        msdoa_string_free(text);
        msdoa_config_free(again);
        msdoa_config_free(cfg);
    }
}

#[test]
fn single_run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(TABLE1);
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { msdoa_run_single(cfg, out.as_ptr(), true) }, MsdoaStatus::Ok, "{}", last_error());
    for f in ["fft.csv", "spectrum_1d.csv", "snapshots.csv", "series.bin"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    unsafe { msdoa_config_free(cfg) };
}

#[test]
fn estimate_from_interleaved_samples() {
    let cfg = parse(TABLE1);
    assert_eq!(set(cfg, "noise.snr_db=30"), MsdoaStatus::Ok);
    let text = TABLE1.replace("snr_db = 0.0", "snr_db = 30.0");
    let rust_cfg = msdoa::config::parse_config(&text).unwrap();
    let series = msdoa::harness::run_trial(&rust_cfg, 5).unwrap().series;
    let iq: Vec<f64> = series.samples.iter().flat_map(|z| [z.re, z.im]).collect();
    let (mut th, mut ph, mut found) = ([0.0; 4], [0.0; 4], 0usize);
    let st = unsafe {
        msdoa_estimate_series(cfg, iq.as_ptr(), series.samples.len(), th.as_mut_ptr(), ph.as_mut_ptr(), 4, &mut found)
    };
    assert_eq!(st, MsdoaStatus::Ok, "{}", last_error());
    assert_eq!(found, 2);
    let mut t = th[..2].to_vec();
    t.sort_by(f64::total_cmp);
    assert!((t[0] + 22.0).abs() < 1.0 && (t[1] - 12.0).abs() < 1.0, "{t:?}");
    assert!(ph[..2].iter().all(|&p| (p - 90.0).abs() < 1e-9));

    let st = unsafe {
        msdoa_estimate_series(cfg, iq.as_ptr(), 100, th.as_mut_ptr(), ph.as_mut_ptr(), 4, &mut found)
    };
    assert_eq!(st, MsdoaStatus::Validation);
    unsafe { msdoa_config_free(cfg) };
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/msdoa.h");
    for sym in [
        "msdoa_last_error",
        "msdoa_version",
        "msdoa_config_parse",
        "msdoa_config_load",
        "msdoa_config_set",
        "msdoa_config_validate",
        "msdoa_config_emit",
        "msdoa_config_free",
        "msdoa_run_sweep",
        "msdoa_sweep_rows",
        "msdoa_sweep_sources",
        "msdoa_sweep_row",
        "msdoa_sweep_crb",
        "msdoa_sweep_csv",
        "msdoa_sweep_free",
        "msdoa_crb_csv",
        "msdoa_run_single",
        "msdoa_estimate_series",
        "msdoa_string_free",
        "typedef struct MsdoaConfig MsdoaConfig",
        "MSDOA_STATUS_VALIDATION = 2",
    ] {
        assert!(header.contains(sym), "{sym}");
    }
    let v = unsafe { CStr::from_ptr(msdoa_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
