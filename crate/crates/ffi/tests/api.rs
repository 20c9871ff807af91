use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use wclass_sim_ffi::*;

fn last_error() -> String {
    let p = wcs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(n: usize) -> *mut WcsConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { wcs_config_new(n, &mut cfg) }, WcsStatus::Ok);
    cfg
}

#[test]
fn build_and_measure_fidelity() {
    let cfg = config(3);
    unsafe {
        assert_eq!(wcs_config_set_p_e(cfg, 0.005), WcsStatus::Ok);
        assert_eq!(wcs_config_set_seed(cfg, 4), WcsStatus::Ok);
        let mut state = ptr::null_mut();
        let mut attempts = 0u64;
        assert_eq!(
            wcs_build_w_chain(cfg, &mut state, &mut attempts),
            WcsStatus::Ok
        );
        assert!(attempts >= 1);
        let mut f = 0.0;
        assert_eq!(wcs_state_fidelity(state, &mut f), WcsStatus::Ok);
        assert!(
            f == 1.0 || f < 1e-9 || (f - 1.0).abs() < 1e-9,
            "fidelity {f}"
        );

        let mut text = ptr::null_mut();
        assert_eq!(wcs_state_to_text(state, &mut text), WcsStatus::Ok);
        assert!(CStr::from_ptr(text).to_str().unwrap().contains(':'));
        wcs_string_free(text);
        wcs_state_free(state);

        let mut ideal = ptr::null_mut();
        assert_eq!(wcs_ideal_w_state(cfg, &mut ideal), WcsStatus::Ok);
        assert_eq!(wcs_state_fidelity(ideal, &mut f), WcsStatus::Ok);
        assert!((f - 1.0).abs() < 1e-12);
        wcs_state_free(ideal);
        wcs_config_free(cfg);
    }
}

#[test]
fn batch_report_round_trip() {
    let cfg = config(3);
    unsafe {
        wcs_config_set_seed(cfg, 21);
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(wcs_run_batch(cfg, 100, 1, &mut a), WcsStatus::Ok);
        assert_eq!(wcs_run_batch(cfg, 100, 3, &mut b), WcsStatus::Ok);
        let (mut ja, mut jb) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(wcs_report_to_json(a, &mut ja), WcsStatus::Ok);
        assert_eq!(wcs_report_to_json(b, &mut jb), WcsStatus::Ok);
        assert_eq!(CStr::from_ptr(ja), CStr::from_ptr(jb));
        let value: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(ja).to_str().unwrap()).unwrap();
        assert_eq!(value["trials"], 100);

        let mut s = std::mem::zeroed::<WcsReportSummary>();
        assert_eq!(wcs_report_summary(a, &mut s), WcsStatus::Ok);
        assert_eq!((s.trials, s.successes), (100, 100));
        assert!(s.p_c_hat > 0.0 && s.p_c_hat < 1.0);

        wcs_string_free(ja);
        wcs_string_free(jb);
        wcs_report_free(a);
        wcs_report_free(b);
        wcs_config_free(cfg);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(wcs_config_new(1, &mut cfg), WcsStatus::InvalidArgument);
        assert!(cfg.is_null());
        assert!(last_error().contains("parties"));
        assert_eq!(wcs_config_new(3, ptr::null_mut()), WcsStatus::NullPointer);

        let cfg = config(3);
        assert_eq!(wcs_config_set_eta(cfg, 1.5), WcsStatus::InvalidArgument);
        assert_eq!(
            wcs_config_set_phase(cfg, 1, 0.3),
            WcsStatus::InvalidArgument
        );
        assert_eq!(
            wcs_config_set_phase(cfg, 4, 0.3),
            WcsStatus::InvalidArgument
        );
        assert_eq!(wcs_config_set_phase(cfg, 2, 0.3), WcsStatus::Ok);
        assert!(wcs_last_error_message().is_null());

        wcs_config_set_p_e(cfg, 0.0);
        wcs_config_set_max_attempts(cfg, 10);
        let mut state = ptr::null_mut();
        assert_eq!(
            wcs_build_w_chain(cfg, &mut state, ptr::null_mut()),
            WcsStatus::AttemptsExhausted
        );
        let mut report = ptr::null_mut();
        assert_eq!(
            wcs_run_batch(cfg, 0, 0, &mut report),
            WcsStatus::InvalidArgument
        );
        wcs_config_free(cfg);

        let two = config(2);
        assert_eq!(
            wcs_build_w_chain(two, &mut state, ptr::null_mut()),
            WcsStatus::Precondition
        );
        wcs_config_free(two);

        let mut t = 0.0;
        assert_eq!(
            wcs_predicted_generation_time(3, 0.5, 0.01, 1.0, &mut t),
            WcsStatus::Ok
        );
        assert!((t / 3.2e7 - 1.0).abs() < 1e-12);
        assert_eq!(
            wcs_predicted_generation_time(3, 0.5, 0.0, 1.0, &mut t),
            WcsStatus::Domain
        );
        wcs_config_free(ptr::null_mut());
        wcs_string_free(ptr::null_mut());
    }
}

#[test]
fn config_from_json() {
    unsafe {
        let json = CString::new(r#"{"n": 4, "p_e": 0.02, "seed": 5}"#).unwrap();
        let mut cfg = ptr::null_mut();
        assert_eq!(wcs_config_from_json(json.as_ptr(), &mut cfg), WcsStatus::Ok);
        wcs_config_free(cfg);
        let bad = CString::new(r#"{"n": 4, "colour": 1}"#).unwrap();
        assert_eq!(
            wcs_config_from_json(bad.as_ptr(), &mut cfg),
            WcsStatus::InvalidArgument
        );
        assert_eq!(
            wcs_config_from_json(ptr::null(), &mut cfg),
            WcsStatus::NullPointer
        );
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/wclass_sim.h")).unwrap();
    for name in [
        "wcs_config_new",
        "wcs_build_w_chain",
        "wcs_run_batch",
        "wcs_report_to_json",
        "wcs_predicted_generation_time",
        "wcs_state_fidelity",
        "wcs_last_error_message",
        "wcs_string_free",
        "typedef struct WcsConfig WcsConfig;",
        "WCS_STATUS_ATTEMPTS_EXHAUSTED = 4",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

fn static_lib() -> Option<PathBuf> {
    // tests/<name> lives in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libwclass_sim_ffi.a");
    lib.exists().then_some(lib)
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok()
}

#[test]
fn c_program_links_against_static_library() {
    let (Some(lib), true) = (static_lib(), have("cc")) else {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    };
    let dir = tempfile_dir();
    let exe = dir.join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[2], "200");
    assert_eq!(fields[3], "32000000.0");
}

fn tempfile_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("ffi-smoke");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
