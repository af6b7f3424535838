//! C ABI over `fdgen`.
//!
//! Every function returns an [`FdgenStatus`]; on failure a message is
//! available from [`fdgen_last_error`] on the same thread. Handles are
//! opaque, created by `*_new`/`*_load` functions and released by the
//! matching `*_free`. Output buffers are caller-allocated; their required
//! lengths are documented per function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use fdgen::env::{label_modes, Env, EnvKind, ShapeKind, StateDescriptor};
use fdgen::eval::{mode_rank_shares, EvalSpec, Policy};
use fdgen::kde::Kde;
use fdgen::models::{Actor, Checkpoint};
use fdgen::trainer::{load_actor, TrainConfig, Trainer};
use fdgen::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdgenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    BufferTooSmall = 4,
    Config = 5,
    Checkpoint = 6,
    EnvironmentTooSparse = 7,
    Io = 8,
    Numerical = 9,
    Panic = 10,
}

/// Feasibility environment.
pub struct FdgenEnv(Env);

/// One environment state.
pub struct FdgenState(StateDescriptor);

/// Gaussian kernel density estimate.
pub struct FdgenKde(Kde);

/// Trained actor together with its configuration.
pub struct FdgenModel {
    cfg: TrainConfig,
    env: Env,
    actor: Actor,
}

/// Training session.
pub struct FdgenTrainer(Trainer);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FdgenStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } => FdgenStatus::DimensionMismatch,
            Error::InvalidBandwidth | Error::Empty(_) | Error::UnsupportedKind(_) => FdgenStatus::InvalidArgument,
            Error::Config(_) => FdgenStatus::Config,
            Error::Checkpoint(_) | Error::Format(_) => FdgenStatus::Checkpoint,
            Error::EnvironmentTooSparse { .. } => FdgenStatus::EnvironmentTooSparse,
            Error::Io(_) => FdgenStatus::Io,
            _ => FdgenStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: FdgenStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FdgenStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdgenStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FdgenStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(FdgenStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(FdgenStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FdgenStatus::NullPointer, format!("{what} is null"));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(FdgenStatus::NullPointer, format!("{what} is null"));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(FdgenStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(FdgenStatus::InvalidArgument, format!("{what} is not utf-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(FdgenStatus::NullPointer, "output handle pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn set<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(FdgenStatus::NullPointer, "output pointer is null");
    }
    *out = value;
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn same_env(env: &Env, state: &StateDescriptor) -> Result<(), Failure> {
    if state.kind() != env.kind {
        return fail(
            FdgenStatus::InvalidArgument,
            format!("state of {} used with environment {}", state.kind(), env.kind),
        );
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fdgen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn fdgen_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------- env

/// Creates an environment: `"bimodal1d"`, `"rings2d"` or `"grasp2d"`.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_new(kind: *const c_char, out: *mut *mut FdgenEnv) -> FdgenStatus {
    guard(|| {
        let kind: EnvKind = text(kind, "kind")?.parse()?;
        put(out, FdgenEnv(Env::new(kind)))
    })
}

/// # Safety
/// `env` must be NULL or a handle from `fdgen_env_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_free(env: *mut FdgenEnv) {
    free(env)
}

/// State feature length and action length (the same for raw and
/// normalized actions).
///
/// # Safety
/// `env` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_dims(
    env: *const FdgenEnv,
    state_dim: *mut usize,
    action_dim: *mut usize,
) -> FdgenStatus {
    guard(|| {
        let env = &handle(env, "env")?.0;
        set(state_dim, env.state_dim())?;
        set(action_dim, env.action_space().raw_dim())
    })
}

/// Draws a random state from a seed.
///
/// # Safety
/// `env` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_sample_state(
    env: *const FdgenEnv,
    seed: u64,
    out: *mut *mut FdgenState,
) -> FdgenStatus {
    guard(|| {
        let env = &handle(env, "env")?.0;
        put(out, FdgenState(env.generate_state(&mut ChaCha8Rng::seed_from_u64(seed))))
    })
}

/// Canonical state of a grasp shape (`"H"`, `"T"`, ...); toy environments
/// ignore the shape.
///
/// # Safety
/// `env` must be a live handle, `shape` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_canonical_state(
    env: *const FdgenEnv,
    shape: *const c_char,
    out: *mut *mut FdgenState,
) -> FdgenStatus {
    guard(|| {
        let env = &handle(env, "env")?.0;
        let shape: ShapeKind = text(shape, "shape")?.parse()?;
        put(out, FdgenState(env.canonical_state(shape)))
    })
}

/// # Safety
/// `state` must be NULL or a state handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn fdgen_state_free(state: *mut FdgenState) {
    free(state)
}

/// Copies the state's feature vector. `written` receives the required
/// length even when `len` is too small.
///
/// # Safety
/// `buf` must hold `len` doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_state_features(
    state: *const FdgenState,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> FdgenStatus {
    guard(|| {
        let f = handle(state, "state")?.0.features();
        set(written, f.len())?;
        if len < f.len() {
            return fail(FdgenStatus::BufferTooSmall, format!("need {} doubles", f.len()));
        }
        output(buf, f.len(), "buf")?.copy_from_slice(&f);
        Ok(())
    })
}

/// Feasibility of a normalized action of length `action_dim`.
///
/// # Safety
/// Handles must be live; `action` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_evaluate(
    env: *const FdgenEnv,
    state: *const FdgenState,
    action: *const f64,
    len: usize,
    feasible: *mut bool,
) -> FdgenStatus {
    guard(|| {
        let env = &handle(env, "env")?.0;
        let state = &handle(state, "state")?.0;
        same_env(env, state)?;
        let dim = env.action_space().critic_dim();
        if len != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: len }.into());
        }
        set(feasible, env.evaluate(state, input(action, len, "action")?))
    })
}

/// Feasibility of a raw actor output: positions are clipped into bounds
/// and grasp angles normalized. Actions at the radius singularity fail.
///
/// # Safety
/// Handles must be live; `action` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_evaluate_raw(
    env: *const FdgenEnv,
    state: *const FdgenState,
    action: *const f64,
    len: usize,
    feasible: *mut bool,
) -> FdgenStatus {
    guard(|| {
        let env = &handle(env, "env")?.0;
        let state = &handle(state, "state")?.0;
        same_env(env, state)?;
        let space = env.action_space();
        if len != space.raw_dim() {
            return Err(Error::DimensionMismatch { expected: space.raw_dim(), got: len }.into());
        }
        let ok = space
            .critic_view(input(action, len, "action")?, 1e-6)
            .is_some_and(|v| env.evaluate(state, &v.input[..space.critic_dim()]));
        set(feasible, ok)
    })
}

/// Number of connected feasible regions on a `gx x gy x ga` grid, and the
/// feasible cell fraction.
///
/// # Safety
/// Handles must be live; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_env_mode_count(
    env: *const FdgenEnv,
    state: *const FdgenState,
    gx: usize,
    gy: usize,
    ga: usize,
    modes: *mut usize,
    feasible_fraction: *mut f64,
) -> FdgenStatus {
    guard(|| {
        let env = &handle(env, "env")?.0;
        let state = &handle(state, "state")?.0;
        same_env(env, state)?;
        if gx == 0 || gy == 0 || ga == 0 {
            return fail(FdgenStatus::InvalidArgument, "grid resolution must be positive");
        }
        let grid = env.feasible_grid(state, [gx, gy, ga]);
        set(modes, label_modes(&grid).count)?;
        set(feasible_fraction, grid.feasible_fraction())
    })
}

// ---------------------------------------------------------------- kde

/// KDE over `n` supports of dimension `dim` (row-major `n * dim`) with a
/// per-dimension bandwidth of length `dim`.
///
/// # Safety
/// `supports` must hold `n * dim` doubles and `bandwidth` `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_kde_new(
    supports: *const f64,
    n: usize,
    dim: usize,
    bandwidth: *const f64,
    out: *mut *mut FdgenKde,
) -> FdgenStatus {
    guard(|| {
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Failure(FdgenStatus::InvalidArgument, "size overflow".into()))?;
        let sup = input(supports, len, "supports")?.to_vec();
        let bw = input(bandwidth, dim, "bandwidth")?.to_vec();
        put(out, FdgenKde(Kde::new(sup, dim, bw)?))
    })
}

/// # Safety
/// `kde` must be NULL or a KDE handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn fdgen_kde_free(kde: *mut FdgenKde) {
    free(kde)
}

/// Log densities of `m` queries (row-major `m * dim`) into `out[m]`.
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_kde_log_eval(
    kde: *const FdgenKde,
    queries: *const f64,
    m: usize,
    out: *mut f64,
) -> FdgenStatus {
    guard(|| {
        let kde = &handle(kde, "kde")?.0;
        let q = input(queries, m * kde.dim(), "queries")?;
        let v = kde.log_eval_many(q)?;
        output(out, m, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Gradient of `log q(query)` with respect to every support, `n * dim`.
///
/// # Safety
/// `query` must hold `dim` doubles and `out` `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_kde_grad_supports(
    kde: *const FdgenKde,
    query: *const f64,
    out: *mut f64,
) -> FdgenStatus {
    guard(|| {
        let kde = &handle(kde, "kde")?.0;
        let g = kde.grad_supports(input(query, kde.dim(), "query")?)?;
        output(out, g.len(), "out")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Draws `m` perturbed copies of every support using the given seed.
/// Support `i` owns rows `[m * i, m * (i + 1))` of the row-major
/// `n * m * dim` output.
///
/// # Safety
/// `out` must hold `n * m * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_kde_sample(kde: *const FdgenKde, m: usize, seed: u64, out: *mut f64) -> FdgenStatus {
    guard(|| {
        let kde = &handle(kde, "kde")?.0;
        let s = kde.sample(m, &mut ChaCha8Rng::seed_from_u64(seed))?;
        debug_assert_eq!(s.len(), kde.len() * m * kde.dim());
        output(out, s.len(), "out")?.copy_from_slice(&s);
        Ok(())
    })
}

// ---------------------------------------------------------------- model

fn model_from_checkpoint(ck: &Checkpoint) -> Result<FdgenModel, Failure> {
    let (cfg, actor) = load_actor(ck)?;
    let env = cfg.make_env();
    Ok(FdgenModel { cfg, env, actor })
}

/// Loads the actor from a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_model_load(path: *const c_char, out: *mut *mut FdgenModel) -> FdgenStatus {
    guard(|| {
        let bytes = std::fs::read(Path::new(text(path, "path")?)).map_err(Error::from)?;
        put(out, model_from_checkpoint(&Checkpoint::decode(&bytes)?)?)
    })
}

/// Loads the actor from checkpoint bytes in memory.
///
/// # Safety
/// `bytes` must hold `len` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_model_from_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut FdgenModel,
) -> FdgenStatus {
    guard(|| {
        if bytes.is_null() {
            return fail(FdgenStatus::NullPointer, "bytes is null");
        }
        put(out, model_from_checkpoint(&Checkpoint::decode(slice::from_raw_parts(bytes, len))?)?)
    })
}

/// # Safety
/// `model` must be NULL or a model handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn fdgen_model_free(model: *mut FdgenModel) {
    free(model)
}

/// New handle to the model's environment (for states and evaluation).
///
/// # Safety
/// `model` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_model_env(model: *const FdgenModel, out: *mut *mut FdgenEnv) -> FdgenStatus {
    guard(|| put(out, FdgenEnv(handle(model, "model")?.env.clone())))
}

/// Samples `count` raw actions (row-major `count * action_dim`).
///
/// # Safety
/// Handles must be live; `out` must hold `count * action_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn fdgen_model_sample(
    model: *const FdgenModel,
    state: *const FdgenState,
    count: usize,
    seed: u64,
    out: *mut f64,
) -> FdgenStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let state = &handle(state, "state")?.0;
        same_env(&model.env, state)?;
        let raw = model.actor.sample_raw(state, count, &mut ChaCha8Rng::seed_from_u64(seed));
        output(out, raw.len(), "out")?.copy_from_slice(&raw);
        Ok(())
    })
}

/// Accuracy and least-mode share (minimum over shape groups) over `states`
/// random states with `actions` actions each, after rejecting the
/// `action_opt` fraction of lowest-density actions.
///
/// # Safety
/// `model` must be live; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_model_evaluate(
    model: *const FdgenModel,
    states: usize,
    actions: usize,
    action_opt: f64,
    seed: u64,
    accuracy: *mut f64,
    least_mode: *mut f64,
) -> FdgenStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let spec = EvalSpec {
            action_opt,
            ..EvalSpec::new(states, actions, model.cfg.sigma.clone(), seed)
        };
        let report = mode_rank_shares(&model.actor, &model.env, &model.cfg.shapes, &spec)?;
        let groups = &report.groups;
        let n: usize = groups.iter().map(|g| g.states * g.actions).sum();
        let acc = groups.iter().map(|g| g.accuracy * (g.states * g.actions) as f64).sum::<f64>() / n as f64;
        set(accuracy, acc)?;
        set(least_mode, groups.iter().map(|g| g.least_mode()).fold(f64::INFINITY, f64::min))
    })
}

// ---------------------------------------------------------------- trainer

/// Starts a training session from `key = value` config text (empty for
/// defaults) and fills the replay memory.
///
/// # Safety
/// `config` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_trainer_new(config: *const c_char, out: *mut *mut FdgenTrainer) -> FdgenStatus {
    guard(|| {
        let cfg = TrainConfig::from_text(text(config, "config")?)?;
        put(out, FdgenTrainer(Trainer::new(cfg)?))
    })
}

/// # Safety
/// `trainer` must be NULL or a trainer handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn fdgen_trainer_free(trainer: *mut FdgenTrainer) {
    free(trainer)
}

/// Runs `steps` outer training steps; `divergence` receives the last
/// logged divergence estimate (NaN when none was available).
///
/// # Safety
/// `trainer` must be live; `divergence` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn fdgen_trainer_run(trainer: *mut FdgenTrainer, steps: u64, divergence: *mut f64) -> FdgenStatus {
    guard(|| {
        let t = &mut handle_mut(trainer, "trainer")?.0;
        let log = t.run(steps as usize, |_, _| Ok(()))?;
        if !divergence.is_null() {
            *divergence = log.last().and_then(|r| r.divergence).unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Completed outer steps.
///
/// # Safety
/// `trainer` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_trainer_steps(trainer: *const FdgenTrainer, out: *mut u64) -> FdgenStatus {
    guard(|| set(out, handle(trainer, "trainer")?.0.step()))
}

/// Writes a checkpoint file.
///
/// # Safety
/// `trainer` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fdgen_trainer_save(trainer: *const FdgenTrainer, path: *const c_char) -> FdgenStatus {
    guard(|| {
        let t = &handle(trainer, "trainer")?.0;
        let path = text(path, "path")?;
        std::fs::write(path, t.to_checkpoint().encode()).map_err(Error::from)?;
        Ok(())
    })
}

/// Snapshot of the current actor as a model handle.
///
/// # Safety
/// `trainer` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fdgen_trainer_model(trainer: *const FdgenTrainer, out: *mut *mut FdgenModel) -> FdgenStatus {
    guard(|| {
        let t = &handle(trainer, "trainer")?.0;
        put(out, model_from_checkpoint(&t.to_checkpoint())?)
    })
}
