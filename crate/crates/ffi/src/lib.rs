//! C ABI over the `metadr` simulator and policy network.
//!
//! Every entry point returns an [`MdrStatus`]. On failure the message is kept
//! per thread and can be read with [`mdr_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use metadr::checkpoint::MetaCheckpoint;
use metadr::env::{
    self, CurtailShiftPerson, DeterministicPerson, EnvConfig, OfficeEnv, PersonKind, ResponseKind, RewardConfig,
    TaskSpec,
};
use metadr::nn::{NetDims, PolicyParams};
use metadr::seed::stream;
use metadr::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    BadCheckpoint = 5,
    Numeric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdrPerson {
    Linear = 0,
    Sinusoidal = 1,
    ThresholdExponential = 2,
    CurtailAndShift = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdrResponse {
    Linear = 0,
    Sinusoidal = 1,
    ThresholdExponential = 2,
}

/// Opaque policy network handle.
pub struct MdrPolicy {
    params: PolicyParams,
}

/// Opaque single-task environment handle.
pub struct MdrEnv {
    env: OfficeEnv,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MdrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => MdrStatus::ShapeMismatch,
            Error::NonFinite { .. } | Error::NonPositiveCost(_) => MdrStatus::Numeric,
            Error::Checkpoint(_) => MdrStatus::BadCheckpoint,
            Error::Io { .. } => MdrStatus::Io,
            _ => MdrStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MdrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside metadr".into());
            MdrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MdrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn path(ptr: *const c_char) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(MdrStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), Failure> {
    if expected != got {
        return Err(Error::Shape { what, expected, got }.into());
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf`, NUL-terminated
/// and truncated to `len` bytes. Returns the full message length including
/// the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mdr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

#[no_mangle]
pub extern "C" fn mdr_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Fresh Glorot-initialized network with a 256-unit trunk.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_new_random(
    obs_dim: usize,
    act_dim: usize,
    seed: u64,
    out: *mut *mut MdrPolicy,
) -> MdrStatus {
    guard(|| {
        let out = unsafe { self::out(out, "out")? };
        if obs_dim == 0 || act_dim == 0 {
            return Err(Failure(MdrStatus::InvalidArgument, "dimensions must be positive".into()));
        }
        let params = PolicyParams::random(NetDims::new(obs_dim, act_dim), &mut stream(seed));
        *out = Box::into_raw(Box::new(MdrPolicy { params }));
        Ok(())
    })
}

/// Loads the parameters of a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_load(path: *const c_char, out: *mut *mut MdrPolicy) -> MdrStatus {
    guard(|| {
        let out = unsafe { self::out(out, "out")? };
        let ckpt = MetaCheckpoint::load(&unsafe { self::path(path)? })?;
        *out = Box::into_raw(Box::new(MdrPolicy { params: ckpt.theta }));
        Ok(())
    })
}

/// Writes the parameters as a checkpoint tagged with `meta_iteration`.
///
/// # Safety
/// `policy` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_save(policy: *const MdrPolicy, path: *const c_char, meta_iteration: u64) -> MdrStatus {
    guard(|| {
        let policy = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        let ckpt = MetaCheckpoint {
            meta_iteration,
            ..MetaCheckpoint::from_params(policy.params.clone())
        };
        ckpt.save(&unsafe { self::path(path)? })?;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_obs_dim(policy: *const MdrPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.params.dims().obs_dim)
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_act_dim(policy: *const MdrPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.params.dims().act_dim)
}

/// Action mean and value estimate for one observation.
///
/// # Safety
/// `obs` must hold `obs_len` values, `mean_out` room for `act_len`, and
/// `value_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_forward(
    policy: *const MdrPolicy,
    obs: *const f64,
    obs_len: usize,
    mean_out: *mut f64,
    act_len: usize,
    value_out: *mut f64,
) -> MdrStatus {
    guard(|| {
        let policy = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        let obs = unsafe { slice(obs, obs_len, "obs")? };
        let mean_out = unsafe { slice_mut(mean_out, act_len, "mean_out")? };
        let value_out = unsafe { out(value_out, "value_out")? };
        check_len("mean_out", policy.params.dims().act_dim, act_len)?;
        let f = policy.params.forward(obs)?;
        mean_out.copy_from_slice(&f.action_mean);
        *value_out = f.value;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mdr_policy_free(policy: *mut MdrPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

fn person_kind(p: MdrPerson) -> PersonKind {
    match p {
        MdrPerson::Linear => PersonKind::Linear,
        MdrPerson::Sinusoidal => PersonKind::Sinusoidal,
        MdrPerson::ThresholdExponential => PersonKind::ThresholdExponential,
        MdrPerson::CurtailAndShift => PersonKind::CurtailAndShift,
    }
}

/// Environment for one task under the default configuration.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn mdr_env_new(
    person: MdrPerson,
    multiplier: f64,
    baseline_seed: u64,
    price_seed: u64,
    out: *mut *mut MdrEnv,
) -> MdrStatus {
    guard(|| {
        let out = unsafe { self::out(out, "out")? };
        let task = TaskSpec {
            person: person_kind(person),
            multiplier,
            baseline_seed,
            price_seed,
        };
        let env = OfficeEnv::new(task, &EnvConfig::default())?;
        *out = Box::into_raw(Box::new(MdrEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdr_env_obs_dim(env: *const MdrEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.obs_dim())
}

/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mdr_env_act_dim(env: *const MdrEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.act_dim())
}

/// # Safety
/// `env` must be a live handle and `obs_out` hold `obs_len` values.
#[no_mangle]
pub unsafe extern "C" fn mdr_env_reset(env: *mut MdrEnv, obs_out: *mut f64, obs_len: usize) -> MdrStatus {
    guard(|| {
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        let obs_out = unsafe { slice_mut(obs_out, obs_len, "obs_out")? };
        check_len("obs_out", env.env.obs_dim(), obs_len)?;
        obs_out.copy_from_slice(&env.env.reset());
        Ok(())
    })
}

/// Simulates one day. Points are clipped to the allowed range; the cost and
/// penalty flag outputs may be null.
///
/// # Safety
/// `action` must hold `act_len` values, `obs_out` room for `obs_len`, and the
/// non-null scalar outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mdr_env_step(
    env: *mut MdrEnv,
    action: *const f64,
    act_len: usize,
    obs_out: *mut f64,
    obs_len: usize,
    reward_out: *mut f64,
    cost_out: *mut f64,
    penalized_out: *mut bool,
) -> MdrStatus {
    guard(|| {
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        let action = unsafe { slice(action, act_len, "action")? };
        let obs_out = unsafe { slice_mut(obs_out, obs_len, "obs_out")? };
        let reward_out = unsafe { out(reward_out, "reward_out")? };
        check_len("obs_out", env.env.obs_dim(), obs_len)?;
        let step = env.env.step(action)?;
        obs_out.copy_from_slice(&step.obs);
        *reward_out = step.reward;
        if let Some(c) = unsafe { cost_out.as_mut() } {
            *c = step.info.cost;
        }
        if let Some(p) = unsafe { penalized_out.as_mut() } {
            *p = step.info.penalized;
        }
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mdr_env_free(env: *mut MdrEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// `-ln(dᵀg) - lambda·[dᵀg < dhat_fraction·bᵀg]`.
///
/// # Safety
/// The three arrays must hold `len` values; `penalized_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn mdr_reward(
    demand: *const f64,
    price: *const f64,
    baseline: *const f64,
    len: usize,
    lambda: f64,
    dhat_fraction: f64,
    reward_out: *mut f64,
    penalized_out: *mut bool,
) -> MdrStatus {
    guard(|| {
        let d = unsafe { slice(demand, len, "demand")? };
        let g = unsafe { slice(price, len, "price")? };
        let b = unsafe { slice(baseline, len, "baseline")? };
        let reward_out = unsafe { out(reward_out, "reward_out")? };
        let cfg = RewardConfig { lambda, dhat_fraction };
        let r = env::compute_reward(d, g, b, &cfg)?;
        *reward_out = r.reward;
        if let Some(p) = unsafe { penalized_out.as_mut() } {
            *p = r.penalized;
        }
        Ok(())
    })
}

/// Closed-form occupant response clipped to `[d_min, d_max]`.
///
/// # Safety
/// All arrays must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mdr_deterministic_response(
    kind: MdrResponse,
    multiplier: f64,
    threshold: f64,
    points: *const f64,
    baseline: *const f64,
    d_min: *const f64,
    d_max: *const f64,
    len: usize,
    demand_out: *mut f64,
) -> MdrStatus {
    guard(|| {
        let person = DeterministicPerson {
            kind: match kind {
                MdrResponse::Linear => ResponseKind::Linear,
                MdrResponse::Sinusoidal => ResponseKind::Sinusoidal,
                MdrResponse::ThresholdExponential => ResponseKind::ThresholdExponential,
            },
            multiplier,
            d_min: unsafe { slice(d_min, len, "d_min")? }.to_vec(),
            d_max: unsafe { slice(d_max, len, "d_max")? }.to_vec(),
            threshold,
        };
        let p = unsafe { slice(points, len, "points")? };
        let b = unsafe { slice(baseline, len, "baseline")? };
        let out = unsafe { slice_mut(demand_out, len, "demand_out")? };
        out.copy_from_slice(&env::deterministic_response(&person, p, b)?);
        Ok(())
    })
}

/// Curtail-and-shift occupant: drops curtailable load in the `t_curtail`
/// highest-points hours and moves each hour's shiftable load to the cheapest
/// hour within `t_shift`.
///
/// # Safety
/// All arrays must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mdr_curtail_shift_response(
    fixed: *const f64,
    curtailable: *const f64,
    shiftable: *const f64,
    points: *const f64,
    len: usize,
    t_curtail: usize,
    t_shift: usize,
    demand_out: *mut f64,
) -> MdrStatus {
    guard(|| {
        let person = CurtailShiftPerson {
            b_fixed: unsafe { slice(fixed, len, "fixed")? }.to_vec(),
            b_curtail: unsafe { slice(curtailable, len, "curtailable")? }.to_vec(),
            b_shift: unsafe { slice(shiftable, len, "shiftable")? }.to_vec(),
            t_curtail,
            t_shift,
        };
        let p = unsafe { slice(points, len, "points")? };
        let out = unsafe { slice_mut(demand_out, len, "demand_out")? };
        out.copy_from_slice(&env::curtail_shift_response(&person, p)?);
        Ok(())
    })
}
