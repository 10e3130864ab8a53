//! C interface to crnlab.
//!
//! Every function returns a [`CrnStatus`]; results are written through out
//! pointers. On failure a message is available from
//! [`crn_last_error_message`] on the calling thread. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use crnlab::network::{ReactionNetwork, StateVector};
use crnlab::parser::parse_str;
use crnlab::sim::{simulate, SimConfig, SimError, Termination, TrajectoryRecord};
use crnlab::structural::analyze;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    SimulationError = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnTermination {
    TimeLimit = 0,
    EventLimit = 1,
    Absorbed = 2,
    StopRule = 3,
}

impl From<Termination> for CrnTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::TimeLimit => CrnTermination::TimeLimit,
            Termination::EventLimit => CrnTermination::EventLimit,
            Termination::Absorbed => CrnTermination::Absorbed,
            Termination::StopRule => CrnTermination::StopRule,
        }
    }
}

/// Opaque reaction network.
pub struct CrnNetwork {
    net: ReactionNetwork,
}

/// Opaque simulated trajectory.
pub struct CrnTrajectory {
    record: TrajectoryRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let bytes: Vec<u8> = message.into().into_bytes().into_iter().filter(|&b| b != 0).collect();
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: CrnStatus, message: impl Into<String>) -> CrnStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> CrnStatus) -> CrnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CrnStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn crn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a model from NUL-terminated UTF-8 text.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crn_network_parse(text: *const c_char, out: *mut *mut CrnNetwork) -> CrnStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(CrnStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(CrnStatus::InvalidUtf8, "model text is not valid UTF-8");
        };
        match parse_str(text) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(CrnNetwork { net }));
                CrnStatus::Ok
            }
            Err(e) => fail(CrnStatus::ParseError, e.to_string()),
        }
    })
}

/// Releases a network. Null is accepted.
///
/// # Safety
/// `net` must come from [`crn_network_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn crn_network_free(net: *mut CrnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crn_network_species_count(net: *const CrnNetwork, out: *mut usize) -> CrnStatus {
    guard(|| match (net.as_ref(), out.is_null()) {
        (Some(n), false) => {
            *out = n.net.n_species();
            CrnStatus::Ok
        }
        _ => fail(CrnStatus::NullPointer, "null argument"),
    })
}

/// # Safety
/// `net` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crn_network_reaction_count(net: *const CrnNetwork, out: *mut usize) -> CrnStatus {
    guard(|| match (net.as_ref(), out.is_null()) {
        (Some(n), false) => {
            *out = n.net.reactions().len();
            CrnStatus::Ok
        }
        _ => fail(CrnStatus::NullPointer, "null argument"),
    })
}

/// Deficiency and weak reversibility of the network.
///
/// # Safety
/// `net` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn crn_network_structure(
    net: *const CrnNetwork,
    deficiency: *mut i64,
    weakly_reversible: *mut bool,
) -> CrnStatus {
    guard(|| {
        let Some(n) = net.as_ref() else {
            return fail(CrnStatus::NullPointer, "null network");
        };
        if deficiency.is_null() || weakly_reversible.is_null() {
            return fail(CrnStatus::NullPointer, "null out pointer");
        }
        let report = analyze(&n.net);
        *deficiency = report.deficiency;
        *weakly_reversible = report.weakly_reversible;
        CrnStatus::Ok
    })
}

/// Simulates one trajectory from `x0` (length `len`, one count per species).
/// A `max_events` of zero selects the library default.
///
/// # Safety
/// `net` must be a live handle, `x0` must point to `len` values and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crn_simulate(
    net: *const CrnNetwork,
    x0: *const u64,
    len: usize,
    seed: u64,
    max_time: f64,
    max_events: u64,
    out: *mut *mut CrnTrajectory,
) -> CrnStatus {
    guard(|| {
        let Some(n) = net.as_ref() else {
            return fail(CrnStatus::NullPointer, "null network");
        };
        if out.is_null() || (x0.is_null() && len > 0) {
            return fail(CrnStatus::NullPointer, "null argument");
        }
        let init = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(x0, len).to_vec() };
        let mut cfg = SimConfig::new(seed, max_time);
        if max_events > 0 {
            cfg = cfg.with_max_events(max_events);
        }
        match simulate(&n.net, &StateVector(init), &cfg) {
            Ok(record) => {
                *out = Box::into_raw(Box::new(CrnTrajectory { record }));
                CrnStatus::Ok
            }
            Err(e @ (SimError::Config(_) | SimError::Core(_))) => fail(CrnStatus::InvalidArgument, e.to_string()),
            Err(e) => fail(CrnStatus::SimulationError, e.to_string()),
        }
    })
}

/// Releases a trajectory. Null is accepted.
///
/// # Safety
/// `traj` must come from [`crn_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn crn_trajectory_free(traj: *mut CrnTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of stored samples.
///
/// # Safety
/// `traj` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crn_trajectory_len(traj: *const CrnTrajectory, out: *mut usize) -> CrnStatus {
    guard(|| match (traj.as_ref(), out.is_null()) {
        (Some(t), false) => {
            *out = t.record.samples.len();
            CrnStatus::Ok
        }
        _ => fail(CrnStatus::NullPointer, "null argument"),
    })
}

/// Copies sample `index`: its time and `state_len` species counts.
///
/// # Safety
/// `traj` must be a live handle, `time` valid, and `state` must point to
/// `state_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn crn_trajectory_sample(
    traj: *const CrnTrajectory,
    index: usize,
    time: *mut f64,
    state: *mut u64,
    state_len: usize,
) -> CrnStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(CrnStatus::NullPointer, "null trajectory");
        };
        if time.is_null() || (state.is_null() && state_len > 0) {
            return fail(CrnStatus::NullPointer, "null out pointer");
        }
        let Some((s, x)) = t.record.samples.get(index) else {
            return fail(CrnStatus::OutOfRange, format!("sample {index} of {}", t.record.samples.len()));
        };
        if state_len != x.dim() {
            return fail(
                CrnStatus::InvalidArgument,
                format!("state buffer has {state_len} slots, state has {}", x.dim()),
            );
        }
        *time = *s;
        if state_len > 0 {
            std::slice::from_raw_parts_mut(state, state_len).copy_from_slice(&x.0);
        }
        CrnStatus::Ok
    })
}

/// Why the simulation stopped, and how many events it fired.
///
/// # Safety
/// `traj` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn crn_trajectory_termination(
    traj: *const CrnTrajectory,
    termination: *mut CrnTermination,
    events: *mut u64,
) -> CrnStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(CrnStatus::NullPointer, "null trajectory");
        };
        if termination.is_null() || events.is_null() {
            return fail(CrnStatus::NullPointer, "null out pointer");
        }
        *termination = t.record.termination.into();
        *events = t.record.event_count;
        CrnStatus::Ok
    })
}
