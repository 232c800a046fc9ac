//! C ABI over the simulator core.
//!
//! Every function returns an [`MsmaStatus`]. Objects are handed out as opaque
//! pointers and must be released with the matching `*_free` function. The
//! message of the last failure on the calling thread is available through
//! [`msma_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use msma_core::fusion::{covariance_intersection, EgoModel};
use msma_core::harness::{run_config, RunOptions, RunOutput};
use msma_core::network::TopologyKind;
use msma_core::scenario::{parse_scenario, ScenarioConfig};
use msma_core::tracking::{GaussianEstimate, StateCovariance, StateVector};
use msma_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Io = 5,
    Numerical = 6,
    Runtime = 7,
    /// The requested value is undefined (for example mAP without ground truth).
    NotAvailable = 8,
    Panic = 9,
}

/// Ego fusion model.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmaEgoModel {
    Local = 0,
    TrackFusion = 1,
    Ddf = 2,
}

/// Infrastructure crosstalk topology.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsmaTopology {
    None = 0,
    Minor = 1,
    Major = 2,
}

/// Parsed, validated scenario.
pub struct MsmaScenario {
    config: ScenarioConfig,
}

/// Result of one simulation run.
pub struct MsmaRun {
    output: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> MsmaStatus {
    match e {
        Error::Parse { .. } => MsmaStatus::Parse,
        Error::Validation(_) => MsmaStatus::Validation,
        Error::Io { .. } => MsmaStatus::Io,
        Error::SingularCovariance | Error::SingularInnovation { .. } => MsmaStatus::Numerical,
        Error::Run { source, .. } => status_of(source),
        _ => MsmaStatus::Runtime,
    }
}

fn fail(e: Error) -> MsmaStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> MsmaStatus) -> MsmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            MsmaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, MsmaStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(MsmaStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        MsmaStatus::InvalidArgument
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 when there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn msma_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parses a scenario from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msma_scenario_parse(json: *const c_char, out: *mut *mut MsmaScenario) -> MsmaStatus {
    guard(|| {
        if out.is_null() {
            return MsmaStatus::NullPointer;
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_scenario(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(MsmaScenario { config }));
                MsmaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msma_scenario_load(path: *const c_char, out: *mut *mut MsmaScenario) -> MsmaStatus {
    guard(|| {
        if out.is_null() {
            return MsmaStatus::NullPointer;
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ScenarioConfig::load(Path::new(path)) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(MsmaScenario { config }));
                MsmaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `scenario` must be null or come from `msma_scenario_parse`/`msma_scenario_load`.
#[no_mangle]
pub unsafe extern "C" fn msma_scenario_free(scenario: *mut MsmaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of ticks a run of this scenario simulates.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msma_scenario_tick_count(scenario: *const MsmaScenario, out: *mut u64) -> MsmaStatus {
    if scenario.is_null() || out.is_null() {
        return MsmaStatus::NullPointer;
    }
    *out = (*scenario).config.max_tick() + 1;
    MsmaStatus::Ok
}

/// Runs the scenario. `ego` takes an [`MsmaEgoModel`] value and `topology` an
/// [`MsmaTopology`] value; `seed` overrides the scenario seed when `use_seed`
/// is true.
///
/// # Safety
/// `scenario` must be valid and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msma_run(
    scenario: *const MsmaScenario,
    ego: u32,
    topology: u32,
    use_seed: bool,
    seed: u64,
    out: *mut *mut MsmaRun,
) -> MsmaStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return MsmaStatus::NullPointer;
        }
        let ego = match ego {
            x if x == MsmaEgoModel::Local as u32 => EgoModel::Local,
            x if x == MsmaEgoModel::TrackFusion as u32 => EgoModel::FusionAtTracking,
            x if x == MsmaEgoModel::Ddf as u32 => EgoModel::FusionPostTracking,
            x => {
                set_error(format!("unknown ego model {x}"));
                return MsmaStatus::InvalidArgument;
            }
        };
        let topology = match topology {
            x if x == MsmaTopology::None as u32 => TopologyKind::NoCorrelation,
            x if x == MsmaTopology::Minor as u32 => TopologyKind::MinorCorrelation,
            x if x == MsmaTopology::Major as u32 => TopologyKind::MajorCorrelation,
            x => {
                set_error(format!("unknown topology {x}"));
                return MsmaStatus::InvalidArgument;
            }
        };
        let mut opts = RunOptions::new(ego, topology);
        opts.seed = use_seed.then_some(seed);
        match run_config(&(*scenario).config, &opts) {
            Ok(output) => {
                *out = Box::into_raw(Box::new(MsmaRun { output }));
                MsmaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `run` must be null or come from `msma_run`.
#[no_mangle]
pub unsafe extern "C" fn msma_run_free(run: *mut MsmaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Mean average precision over classes with ground truth.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msma_run_map(run: *const MsmaRun, out: *mut f64) -> MsmaStatus {
    if run.is_null() || out.is_null() {
        return MsmaStatus::NullPointer;
    }
    match (*run).output.metrics.map {
        Some(m) => {
            *out = m;
            MsmaStatus::Ok
        }
        None => MsmaStatus::NotAvailable,
    }
}

/// Number of evaluated (post burn-in) ticks.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msma_run_evaluated_ticks(run: *const MsmaRun, out: *mut usize) -> MsmaStatus {
    if run.is_null() || out.is_null() {
        return MsmaStatus::NullPointer;
    }
    *out = (*run).output.metrics.ticks.len();
    MsmaStatus::Ok
}

/// True/false positive and false negative counts of the `index`-th evaluated tick.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn msma_run_counts(
    run: *const MsmaRun,
    index: usize,
    tp: *mut usize,
    fp: *mut usize,
    fn_: *mut usize,
) -> MsmaStatus {
    if run.is_null() || tp.is_null() || fp.is_null() || fn_.is_null() {
        return MsmaStatus::NullPointer;
    }
    let m = &(*run).output.metrics;
    if index >= m.ticks.len() {
        set_error(format!("tick index {index} out of range"));
        return MsmaStatus::InvalidArgument;
    }
    *tp = m.true_positives[index];
    *fp = m.false_positives[index];
    *fn_ = m.false_negatives[index];
    MsmaStatus::Ok
}

/// Covariance intersection of two 6-state estimates. Covariances are 36
/// values in row-major order.
///
/// # Safety
/// All pointers must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn msma_covariance_intersection(
    mean_a: *const f64,
    cov_a: *const f64,
    mean_b: *const f64,
    cov_b: *const f64,
    out_mean: *mut f64,
    out_cov: *mut f64,
    out_omega: *mut f64,
) -> MsmaStatus {
    guard(|| {
        let ptrs = [mean_a, cov_a, mean_b, cov_b];
        if ptrs.iter().any(|p| p.is_null()) || out_mean.is_null() || out_cov.is_null() || out_omega.is_null() {
            return MsmaStatus::NullPointer;
        }
        let est = |m: *const f64, c: *const f64| {
            let mean = StateVector::from_column_slice(std::slice::from_raw_parts(m, 6));
            let cov = StateCovariance::from_row_slice(std::slice::from_raw_parts(c, 36));
            GaussianEstimate::new(mean, cov)
        };
        let (a, b) = (est(mean_a, cov_a), est(mean_b, cov_b));
        match covariance_intersection(&a, &b) {
            Ok((f, w)) => {
                ptr::copy_nonoverlapping(f.mean.as_ptr(), out_mean, 6);
                let row_major = f.covariance.transpose();
                ptr::copy_nonoverlapping(row_major.as_ptr(), out_cov, 36);
                *out_omega = w.value();
                MsmaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msma_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
