//! C ABI for swarmcov.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`SwarmcovStatus`]; on failure a message describing the error can be read
//! with [`swarmcov_last_error_message`] from the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use swarmcov::controller::{ClassicalController, Controller, PolicyController};
use swarmcov::dynamics::DynamicsConfig;
use swarmcov::env::{CoverageEnv, EnvConfig, STATE_DIM};
use swarmcov::harness::load_actor;
use swarmcov::{Error, Polygon, Vec2};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmcovStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidPolygon = 3,
    LengthMismatch = 4,
    Io = 5,
    Checkpoint = 6,
    NonFinite = 7,
    Panic = 8,
}

/// Environment settings; obtain defaults from `swarmcov_env_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmcovEnvParams {
    pub n_agents: usize,
    /// Episode length in seconds; a multiple of `dt`.
    pub horizon: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub dt: f64,
    /// Damping of the classical controller.
    pub damping: f64,
    pub seed: u64,
}

pub struct SwarmcovPolygon {
    inner: Polygon,
}

pub struct SwarmcovEnv {
    inner: CoverageEnv,
}

pub struct SwarmcovPolicy {
    inner: PolicyController,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SwarmcovStatus {
    match e {
        Error::InvalidPolygon(_) | Error::PolygonGeneration { .. } => SwarmcovStatus::InvalidPolygon,
        Error::InvalidArgument(_) | Error::Placement { .. } => SwarmcovStatus::InvalidArgument,
        Error::LengthMismatch { .. } => SwarmcovStatus::LengthMismatch,
        Error::Io { .. } => SwarmcovStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => SwarmcovStatus::Checkpoint,
        Error::NonFinite { .. } => SwarmcovStatus::NonFinite,
        Error::Env { source, .. } => status_of(source),
    }
}

fn describe(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    msg
}

struct Failure(SwarmcovStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), describe(&e))
    }
}

fn fail<T>(status: SwarmcovStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwarmcovStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwarmcovStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SwarmcovStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(SwarmcovStatus::NullPointer, format!("{what} is null")))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(SwarmcovStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(SwarmcovStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(SwarmcovStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), Failure> {
    if expected != got {
        return fail(SwarmcovStatus::LengthMismatch, format!("{what}: expected {expected} values, got {got}"));
    }
    Ok(())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(SwarmcovStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(SwarmcovStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

fn write_vecs(out: &mut [f64], v: &[Vec2]) {
    for (pair, a) in out.chunks_exact_mut(2).zip(v) {
        pair[0] = a.x;
        pair[1] = a.y;
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn swarmcov_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bytes needed for the last error message including the terminating NUL;
/// 0 if no error has been recorded on this thread.
#[no_mangle]
pub extern "C" fn swarmcov_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message (truncated to fit, always NUL-terminated)
/// into `buf` and returns the number of bytes written excluding the NUL.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Builds a polygon from `n_vertices` interleaved `(x, y)` pairs.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_polygon_new(
    xy: *const f64,
    n_vertices: usize,
    out: *mut *mut SwarmcovPolygon,
) -> SwarmcovStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        let coords = slice(xy, 2 * n_vertices, "xy")?;
        let vertices = coords.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        let inner = Polygon::new(vertices)?;
        *out = Box::into_raw(Box::new(SwarmcovPolygon { inner }));
        Ok(())
    })
}

/// Regular polygon with `sides` vertices and the given area.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_polygon_regular(
    sides: usize,
    area: f64,
    out: *mut *mut SwarmcovPolygon,
) -> SwarmcovStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        let inner = Polygon::regular(sides, area)?;
        *out = Box::into_raw(Box::new(SwarmcovPolygon { inner }));
        Ok(())
    })
}

/// Reads a JSON list of `[x, y]` vertices.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_polygon_load(path: *const c_char, out: *mut *mut SwarmcovPolygon) -> SwarmcovStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        let path = path_arg(path)?;
        let inner = swarmcov::harness::DomainSpec::File { path }.build()?;
        *out = Box::into_raw(Box::new(SwarmcovPolygon { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn swarmcov_polygon_area(poly: *const SwarmcovPolygon, out: *mut f64) -> SwarmcovStatus {
    guard(|| {
        *get_mut(out, "out")? = get(poly, "polygon")?.inner.area();
        Ok(())
    })
}

/// Signed distance of `(x, y)` to the boundary, negative inside.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_polygon_signed_distance(
    poly: *const SwarmcovPolygon,
    x: f64,
    y: f64,
    out: *mut f64,
) -> SwarmcovStatus {
    guard(|| {
        *get_mut(out, "out")? = get(poly, "polygon")?.inner.signed_distance(Vec2::new(x, y));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn swarmcov_polygon_free(poly: *mut SwarmcovPolygon) {
    if !poly.is_null() {
        drop(Box::from_raw(poly));
    }
}

/// Fills `out` with the default settings for `n_agents` agents.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_params_default(n_agents: usize, out: *mut SwarmcovEnvParams) -> SwarmcovStatus {
    guard(|| {
        let cfg = EnvConfig::new(Polygon::unit_square(), n_agents);
        *get_mut(out, "out")? = SwarmcovEnvParams {
            n_agents,
            horizon: cfg.horizon,
            v_max: cfg.dynamics.v_max,
            a_max: cfg.dynamics.a_max,
            dt: cfg.dynamics.dt,
            damping: cfg.damping,
            seed: cfg.seed,
        };
        Ok(())
    })
}

/// Creates an environment on a copy of `poly`, reset with `params.seed`.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_new(
    poly: *const SwarmcovPolygon,
    params: *const SwarmcovEnvParams,
    out: *mut *mut SwarmcovEnv,
) -> SwarmcovStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        let poly = get(poly, "polygon")?;
        let p = get(params, "params")?;
        let dynamics = DynamicsConfig { v_max: p.v_max, a_max: p.a_max, dt: p.dt };
        let mut cfg = EnvConfig::new(poly.inner.clone(), p.n_agents).with_horizon(p.horizon).with_dynamics(dynamics);
        cfg.damping = p.damping;
        cfg.seed = p.seed;
        let inner = CoverageEnv::new(cfg)?;
        *out = Box::into_raw(Box::new(SwarmcovEnv { inner }));
        Ok(())
    })
}

/// Starts a new episode from the line placement drawn with `seed`.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_reset(env: *mut SwarmcovEnv, seed: u64) -> SwarmcovStatus {
    guard(|| {
        get_mut(env, "env")?.inner.reset(seed)?;
        Ok(())
    })
}

/// Restarts the episode at rest from `n_agents` interleaved positions.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_reset_to(env: *mut SwarmcovEnv, xy: *const f64, len: usize) -> SwarmcovStatus {
    guard(|| {
        let env = get_mut(env, "env")?;
        check_len("positions", 2 * env.inner.n(), len)?;
        let coords = slice(xy, len, "xy")?;
        let pos: Vec<Vec2> = coords.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        env.inner.reset_to(swarmcov::dynamics::SwarmState::at_rest(&pos))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_num_agents(env: *const SwarmcovEnv, out: *mut usize) -> SwarmcovStatus {
    guard(|| {
        *get_mut(out, "out")? = get(env, "env")?.inner.n();
        Ok(())
    })
}

/// Width of one row of `swarmcov_env_state`.
#[no_mangle]
pub extern "C" fn swarmcov_state_dim() -> usize {
    STATE_DIM
}

/// Copies the `n_agents x swarmcov_state_dim()` state matrix, row-major.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_state(env: *const SwarmcovEnv, out: *mut f64, len: usize) -> SwarmcovStatus {
    guard(|| {
        let env = get(env, "env")?;
        check_len("state buffer", env.inner.n() * STATE_DIM, len)?;
        let out = slice_mut(out, len, "out")?;
        for (row, s) in out.chunks_exact_mut(STATE_DIM).zip(env.inner.state_matrix()) {
            row.copy_from_slice(&s);
        }
        Ok(())
    })
}

/// Copies the `n_agents` interleaved positions.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_positions(env: *const SwarmcovEnv, out: *mut f64, len: usize) -> SwarmcovStatus {
    guard(|| {
        let env = get(env, "env")?;
        check_len("position buffer", 2 * env.inner.n(), len)?;
        let pos: Vec<Vec2> = env.inner.state().positions().collect();
        write_vecs(slice_mut(out, len, "out")?, &pos);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_total_potential(env: *const SwarmcovEnv, out: *mut f64) -> SwarmcovStatus {
    guard(|| {
        *get_mut(out, "out")? = get(env, "env")?.inner.total_potential();
        Ok(())
    })
}

/// Elapsed episode time in seconds.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_time(env: *const SwarmcovEnv, out: *mut f64) -> SwarmcovStatus {
    guard(|| {
        *get_mut(out, "out")? = get(env, "env")?.inner.time();
        Ok(())
    })
}

/// Applies `2 * n_agents` interleaved accelerations. Per-agent rewards go to
/// `rewards` (length `n_agents`) when it is non-null; `done` (nullable) is
/// set to 1 once the horizon is reached.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_step(
    env: *mut SwarmcovEnv,
    actions: *const f64,
    actions_len: usize,
    rewards: *mut f64,
    rewards_len: usize,
    done: *mut i32,
) -> SwarmcovStatus {
    guard(|| {
        let env = get_mut(env, "env")?;
        let n = env.inner.n();
        check_len("actions", 2 * n, actions_len)?;
        if !rewards.is_null() {
            check_len("rewards buffer", n, rewards_len)?;
        }
        if env.inner.is_done() {
            return fail(SwarmcovStatus::InvalidArgument, "episode finished; reset the environment first");
        }
        let a: Vec<Vec2> =
            slice(actions, actions_len, "actions")?.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        let step = env.inner.step(&a)?;
        if !rewards.is_null() {
            slice_mut(rewards, rewards_len, "rewards")?.copy_from_slice(&step.individual_rewards);
        }
        if !done.is_null() {
            *done = i32::from(step.done);
        }
        Ok(())
    })
}

/// Classical controller accelerations for the current state.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_classical_actions(
    env: *const SwarmcovEnv,
    out: *mut f64,
    len: usize,
) -> SwarmcovStatus {
    guard(|| {
        let env = get(env, "env")?;
        check_len("action buffer", 2 * env.inner.n(), len)?;
        let a = ClassicalController.actions(&env.inner);
        write_vecs(slice_mut(out, len, "out")?, &a);
        Ok(())
    })
}

/// Loads the actor of a checkpoint; it runs on any number of agents.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_policy_load(path: *const c_char, out: *mut *mut SwarmcovPolicy) -> SwarmcovStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        let actor = load_actor(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SwarmcovPolicy { inner: PolicyController::deterministic(actor) }));
        Ok(())
    })
}

/// Mean actions of the policy, clamped to `a_max`.
#[no_mangle]
pub unsafe extern "C" fn swarmcov_policy_actions(
    policy: *mut SwarmcovPolicy,
    env: *const SwarmcovEnv,
    out: *mut f64,
    len: usize,
) -> SwarmcovStatus {
    guard(|| {
        let policy = get_mut(policy, "policy")?;
        let env = get(env, "env")?;
        check_len("action buffer", 2 * env.inner.n(), len)?;
        let a = policy.inner.actions(&env.inner);
        write_vecs(slice_mut(out, len, "out")?, &a);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn swarmcov_policy_free(policy: *mut SwarmcovPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

#[no_mangle]
pub unsafe extern "C" fn swarmcov_env_free(env: *mut SwarmcovEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}
