//! C ABI over the msrsim simulator.
//!
//! A simulator is an opaque `MsrSim *` created by [`msr_sim_new`] and freed
//! by [`msr_sim_free`]. Every call returns an [`MsrStatus`]; on failure the
//! message is available from [`msr_last_error`] on the same thread. Strings
//! handed out through `char **out` are owned by the caller and must be
//! released with [`msr_string_free`].
//!
//! A handle is not thread safe; callers serialize access to it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use msrsim::forwarding::{forward_packet, trace_report, Packet, DEFAULT_TTL};
use msrsim::msr::render_routes;
use msrsim::net::{IpAddress, ScriptedEvent};
use msrsim::sim::SimError;
use msrsim::{parse_scenario, Approach, SimConfig, Simulator};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    UnknownRouter = 4,
    UnknownAddress = 5,
    UnknownTarget = 6,
    InvalidArgument = 7,
    Internal = 99,
}

pub const MSR_APPROACH_CP: u32 = 0;
pub const MSR_APPROACH_UP: u32 = 1;

/// Opaque simulator handle.
pub struct MsrSim {
    sim: Simulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MsrStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: MsrStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Res<()>) -> MsrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            MsrStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(MsrStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MsrStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn sim_ref<'a>(sim: *const MsrSim) -> Res<&'a MsrSim> {
    sim.as_ref()
        .map_or_else(|| fail(MsrStatus::NullArgument, "sim is null"), Ok)
}

unsafe fn sim_mut<'a>(sim: *mut MsrSim) -> Res<&'a mut MsrSim> {
    sim.as_mut()
        .map_or_else(|| fail(MsrStatus::NullArgument, "sim is null"), Ok)
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Res<()> {
    let c = CString::new(s).or_else(|_| fail(MsrStatus::Internal, "output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Res<()> {
    if out.is_null() {
        fail(MsrStatus::NullArgument, "out is null")
    } else {
        Ok(())
    }
}

/// Parses `scenario` and builds a simulator at t=0.
///
/// `approach` is `MSR_APPROACH_CP` or `MSR_APPROACH_UP`. `seed` may be null
/// to keep the scenario seed. On success `*out` owns the new handle.
///
/// # Safety
/// `scenario` must be a NUL-terminated string; `seed` null or valid; `out`
/// a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_new(
    scenario: *const c_char,
    approach: u32,
    seed: *const u64,
    out: *mut *mut MsrSim,
) -> MsrStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let text = str_arg(scenario, "scenario")?;
        let approach = match approach {
            MSR_APPROACH_CP => Approach::CpBased,
            MSR_APPROACH_UP => Approach::UpBased,
            other => return fail(MsrStatus::InvalidArgument, format!("unknown approach {other}")),
        };
        let sc = parse_scenario(text).or_else(|diags| {
            let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            fail(MsrStatus::ParseError, msg.join("\n"))
        })?;
        let config = SimConfig {
            approach,
            seed: seed.as_ref().copied(),
            ..SimConfig::default()
        };
        let sim = Simulator::new(&sc, config).or_else(|d| fail(MsrStatus::ParseError, d.to_string()))?;
        *out = Box::into_raw(Box::new(MsrSim { sim }));
        Ok(())
    })
}

/// Advances the clock to `until_ms`. `quiescent` may be null.
///
/// # Safety
/// `sim` must come from [`msr_sim_new`]; `quiescent` null or writable.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_run_until(
    sim: *mut MsrSim,
    until_ms: u64,
    quiescent: *mut bool,
) -> MsrStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        if until_ms < s.sim.now() {
            return fail(
                MsrStatus::InvalidArgument,
                format!("clock is already at {} ms", s.sim.now()),
            );
        }
        let stats = s.sim.run_until(until_ms);
        if let Some(q) = quiescent.as_mut() {
            *q = stats.quiescent;
        }
        Ok(())
    })
}

/// Renders the routing table of a router, MS-Router or UPF.
///
/// # Safety
/// `sim` from [`msr_sim_new`], `router` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_routes(
    sim: *const MsrSim,
    router: *const c_char,
    all: bool,
    machine: bool,
    out: *mut *mut c_char,
) -> MsrStatus {
    guard(|| {
        check_out(out)?;
        let s = sim_ref(sim)?;
        let name = str_arg(router, "router")?;
        let rows = s.sim.route_rows(name, all).map_or_else(
            || fail(MsrStatus::UnknownRouter, format!("unknown router `{name}`")),
            Ok,
        )?;
        give_string(out, render_routes(&rows, machine))
    })
}

fn resolve(sim: &Simulator, s: &str) -> Res<IpAddress> {
    let net = sim.network();
    let found = match s.parse::<IpAddress>() {
        Ok(a) => net.owner_of(a).map(|_| a),
        Err(_) => net
            .node_by_name(s)
            .and_then(|n| n.interfaces.first())
            .map(|i| i.address),
    };
    found.map_or_else(
        || fail(MsrStatus::UnknownAddress, format!("unknown address `{s}`")),
        Ok,
    )
}

/// Traces a packet from `src` to `dst`, each an address or node name.
///
/// # Safety
/// `sim` from [`msr_sim_new`], `src` and `dst` NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_trace(
    sim: *const MsrSim,
    src: *const c_char,
    dst: *const c_char,
    machine: bool,
    out: *mut *mut c_char,
) -> MsrStatus {
    guard(|| {
        check_out(out)?;
        let s = sim_ref(sim)?;
        let src = resolve(&s.sim, str_arg(src, "src")?)?;
        let dst = resolve(&s.sim, str_arg(dst, "dst")?)?;
        let dp = s.sim.data_plane();
        let node = dp.network.owner_of(src).expect("resolved above");
        let record = forward_packet(
            &dp,
            node,
            Packet {
                src,
                dst,
                ttl: DEFAULT_TTL,
            },
        );
        give_string(out, trace_report(&dp, &record, machine))
    })
}

/// Schedules a scripted event at `at_ms`. `event` uses the scenario event
/// syntax without the time, e.g. `link-down upf1.pdu-1`.
///
/// # Safety
/// `sim` from [`msr_sim_new`], `event` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_inject(sim: *mut MsrSim, at_ms: u64, event: *const c_char) -> MsrStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        let text = str_arg(event, "event")?;
        let words: Vec<&str> = text.split_whitespace().collect();
        let ev = ScriptedEvent::parse(&words).or_else(|e| fail(MsrStatus::InvalidArgument, e))?;
        s.sim.inject(at_ms, ev).or_else(|e| match e {
            SimError::UnknownTarget(_) => fail(MsrStatus::UnknownTarget, e.to_string()),
            SimError::TimeInPast { .. } => fail(MsrStatus::InvalidArgument, e.to_string()),
        })
    })
}

/// The event log so far.
///
/// # Safety
/// `sim` from [`msr_sim_new`], `out` writable.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_event_log(
    sim: *const MsrSim,
    machine: bool,
    out: *mut *mut c_char,
) -> MsrStatus {
    guard(|| {
        check_out(out)?;
        let s = sim_ref(sim)?;
        give_string(out, s.sim.log().render(machine))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Destroys a simulator. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`msr_sim_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn msr_sim_free(sim: *mut MsrSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn msr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
