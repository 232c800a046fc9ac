use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use msma_ffi::*;

const SCENARIO: &str = r#"{
    "duration": 3,
    "seed": 5,
    "objects": [
        {"object_id": 1, "class_label": "car", "position": [15, 0], "heading": 0,
         "speed": 2, "dimensions": {"length": 4.5, "width": 1.8, "height": 1.5}}
    ],
    "agents": [
        {"agent_id": "ego", "kind": "ego_vehicle", "mount": {"position": [0, 0, 1.6]},
         "trajectory": {"position": [0, 0], "heading": 0, "speed": 0},
         "sensors": [{"sensor_id": "cam",
           "calibration": {"fx": 80, "fy": 80, "cx": 80, "cy": 60, "width": 160, "height": 120}}]}
    ]
}"#;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        msma_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn parse(text: &str) -> (MsmaStatus, *mut MsmaScenario) {
    let json = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    let s = unsafe { msma_scenario_parse(json.as_ptr(), &mut h) };
    (s, h)
}

#[test]
fn run_through_handles() {
    let (s, scenario) = parse(SCENARIO);
    assert_eq!(s, MsmaStatus::Ok);
    let mut ticks = 0;
    unsafe {
        assert_eq!(msma_scenario_tick_count(scenario, &mut ticks), MsmaStatus::Ok);
        assert_eq!(ticks, 31);
        let mut run = ptr::null_mut();
        assert_eq!(msma_run(scenario, MsmaEgoModel::Ddf as u32, MsmaTopology::Major as u32, true, 11, &mut run), MsmaStatus::Ok);
        let mut map = -1.0;
        assert_eq!(msma_run_map(run, &mut map), MsmaStatus::Ok);
        assert!((0.0..=1.0).contains(&map));
        let mut n = 0;
        assert_eq!(msma_run_evaluated_ticks(run, &mut n), MsmaStatus::Ok);
        assert_eq!(n, 11);
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        assert_eq!(msma_run_counts(run, n - 1, &mut tp, &mut fp, &mut fn_), MsmaStatus::Ok);
        assert_eq!(tp + fn_, 1);
        assert_eq!(msma_run_counts(run, n, &mut tp, &mut fp, &mut fn_), MsmaStatus::InvalidArgument);
        msma_run_free(run);
        msma_scenario_free(scenario);
    }
}

#[test]
fn errors_are_reported() {
    let (s, h) = parse("{ not json");
    assert_eq!(s, MsmaStatus::Parse);
    assert!(h.is_null());
    assert!(last_error().contains("line 1"));

    let (s, _) = parse(&SCENARIO.replace("\"duration\": 3", "\"duration\": -1"));
    assert_eq!(s, MsmaStatus::Validation);
    assert!(last_error().contains("duration"));

    let path = CString::new("/nonexistent/scenario.json").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { msma_scenario_load(path.as_ptr(), &mut h) }, MsmaStatus::Io);

    assert_eq!(unsafe { msma_scenario_parse(ptr::null(), &mut h) }, MsmaStatus::NullPointer);
    let (_, scenario) = parse(SCENARIO);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { msma_run(scenario, 7, 0, false, 0, &mut run) }, MsmaStatus::InvalidArgument);
    assert!(run.is_null());
    unsafe {
        msma_scenario_free(scenario);
        msma_scenario_free(ptr::null_mut());
        msma_run_free(ptr::null_mut());
    }
}

#[test]
fn covariance_intersection_symmetric_case() {
    let mut cov = [0.0; 36];
    for i in 0..6 {
        cov[i * 7] = 1.0;
    }
    let a = [0.0; 6];
    let b = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let (mut m, mut c, mut w) = ([0.0; 6], [0.0; 36], 0.0);
    let s = unsafe { msma_covariance_intersection(a.as_ptr(), cov.as_ptr(), b.as_ptr(), cov.as_ptr(), m.as_mut_ptr(), c.as_mut_ptr(), &mut w) };
    assert_eq!(s, MsmaStatus::Ok);
    assert_eq!(w, 0.5);
    assert!((m[0] - 1.0).abs() < 1e-12);
    assert!(c.iter().zip(&cov).all(|(x, y)| (x - y).abs() < 1e-12));

    let zero = [0.0; 36];
    let s = unsafe { msma_covariance_intersection(a.as_ptr(), zero.as_ptr(), b.as_ptr(), cov.as_ptr(), m.as_mut_ptr(), c.as_mut_ptr(), &mut w) };
    assert_eq!(s, MsmaStatus::Numerical);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(msma_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/msma.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "msma_scenario_parse",
        "msma_scenario_load",
        "msma_scenario_free",
        "msma_run",
        "msma_run_map",
        "msma_run_counts",
        "msma_run_free",
        "msma_covariance_intersection",
        "msma_last_error",
        "typedef struct MsmaScenario MsmaScenario",
        "MSMA_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax check with the system C compiler when there is one.
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
