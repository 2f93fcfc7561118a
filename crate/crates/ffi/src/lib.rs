//! C ABI over [`gtb_core::env::Env`].
//!
//! Functions returning `i32` use 0 for success and -1 for failure; the
//! failure message is available from [`gtb_last_error`]. Strings returned
//! by this library must be released with [`gtb_string_free`]. Actor index
//! -1 addresses the planner, `0..n` the agents.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;
use std::slice;

use gtb_core::config::EnvConfig;
use gtb_core::env::{ActionId, Env, AGENT_ACTIONS, PLANNER_ACTIONS};
use gtb_core::metrics::dequantize;
use gtb_core::trace::TraceRecord;

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message.into()));
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

pub const PLANNER: i32 = -1;

/// Opaque environment handle plus the trace records not yet drained.
pub struct GtbEnv {
    env: Env,
    pending: Vec<TraceRecord>,
}

impl GtbEnv {
    fn new(env: Env) -> Self {
        let mut h = GtbEnv { env, pending: Vec::new() };
        h.pending = h.env.drain_events();
        h
    }

    fn observation(&self, actor: i32) -> Option<Vec<f64>> {
        match actor {
            PLANNER => Some(self.env.planner_observation()),
            i if i >= 0 && (i as usize) < self.env.n_agents() => Some(self.env.agent_observation(i as usize)),
            _ => None,
        }
    }

    fn mask(&self, actor: i32) -> Option<Vec<bool>> {
        match actor {
            PLANNER => Some(self.env.planner_mask()),
            i if i >= 0 && (i as usize) < self.env.n_agents() => Some(self.env.agent_mask(i as usize)),
            _ => None,
        }
    }
}

unsafe fn handle<'a>(env: *mut GtbEnv) -> Option<&'a mut GtbEnv> {
    if env.is_null() {
        set_error("null environment handle");
        None
    } else {
        Some(&mut *env)
    }
}

/// Creates an environment from a JSON configuration (null or "" for the
/// defaults). Returns null on failure.
///
/// # Safety
/// `config_json` must be null or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_new(config_json: *const c_char, seed: u64) -> *mut GtbEnv {
    let config = if config_json.is_null() {
        EnvConfig::default()
    } else {
        let text = match CStr::from_ptr(config_json).to_str() {
            Ok(t) => t,
            Err(e) => {
                set_error(format!("config is not UTF-8: {e}"));
                return ptr::null_mut();
            }
        };
        if text.trim().is_empty() {
            EnvConfig::default()
        } else {
            match serde_json::from_str(text) {
                Ok(c) => c,
                Err(e) => {
                    set_error(format!("config: {e}"));
                    return ptr::null_mut();
                }
            }
        }
    };
    match Env::new(config, seed) {
        Ok(env) => Box::into_raw(Box::new(GtbEnv::new(env))),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `env` must be null or a handle from [`gtb_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_free(env: *mut GtbEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode from `seed`.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_reset(env: *mut GtbEnv, seed: u64) -> i32 {
    let Some(h) = handle(env) else { return -1 };
    match h.env.reset(seed) {
        Ok(_) => {
            h.pending = h.env.drain_events();
            0
        }
        Err(e) => {
            set_error(e.to_string());
            -1
        }
    }
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_n_agents(env: *mut GtbEnv) -> usize {
    handle(env).map_or(0, |h| h.env.n_agents())
}

/// Number of action ids for `actor` (84 for agents, 161 for the planner).
#[no_mangle]
pub extern "C" fn gtb_action_count(actor: i32) -> usize {
    if actor == PLANNER {
        PLANNER_ACTIONS
    } else {
        AGENT_ACTIONS
    }
}

/// Advances one step. `agent_actions` holds one id per agent;
/// `planner_actions` holds any number of planner ids. Rewards are written
/// to `agent_rewards` (length n) and `planner_reward`.
///
/// # Safety
/// Pointers must be valid for the given lengths; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_step(
    env: *mut GtbEnv,
    agent_actions: *const u32,
    n_agent_actions: usize,
    planner_actions: *const u32,
    n_planner_actions: usize,
    agent_rewards: *mut f64,
    planner_reward: *mut f64,
    done: *mut i32,
) -> i32 {
    let Some(h) = handle(env) else { return -1 };
    let agents: Vec<ActionId> = if n_agent_actions == 0 {
        Vec::new()
    } else if agent_actions.is_null() {
        set_error("null agent action buffer");
        return -1;
    } else {
        slice::from_raw_parts(agent_actions, n_agent_actions)
            .iter()
            .map(|&a| a as ActionId)
            .collect()
    };
    let planner: Vec<ActionId> = if n_planner_actions == 0 || planner_actions.is_null() {
        Vec::new()
    } else {
        slice::from_raw_parts(planner_actions, n_planner_actions)
            .iter()
            .map(|&a| a as ActionId)
            .collect()
    };
    match h.env.step(&agents, &planner) {
        Ok(out) => {
            if !agent_rewards.is_null() {
                let dst = slice::from_raw_parts_mut(agent_rewards, out.agent_rewards.len());
                for (d, &q) in dst.iter_mut().zip(&out.agent_rewards) {
                    *d = dequantize(q);
                }
            }
            if !planner_reward.is_null() {
                *planner_reward = dequantize(out.planner_reward);
            }
            if !done.is_null() {
                *done = i32::from(out.done);
            }
            h.pending.extend(out.events);
            0
        }
        Err(e) => {
            set_error(e.to_string());
            -1
        }
    }
}

/// Length of the observation vector for `actor`, or 0 for an unknown actor.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_obs_size(env: *mut GtbEnv, actor: i32) -> usize {
    let Some(h) = handle(env) else { return 0 };
    match actor {
        PLANNER => h.env.planner_layout().size,
        i if i >= 0 && (i as usize) < h.env.n_agents() => h.env.agent_layout().size,
        _ => 0,
    }
}

/// Copies the observation of `actor` into `out` (at least `len` doubles).
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_observation(env: *mut GtbEnv, actor: i32, out: *mut f64, len: usize) -> i32 {
    let Some(h) = handle(env) else { return -1 };
    let Some(obs) = h.observation(actor) else {
        set_error(format!("unknown actor {actor}"));
        return -1;
    };
    if out.is_null() || len < obs.len() {
        set_error(format!("observation buffer holds {len} values, needs {}", obs.len()));
        return -1;
    }
    slice::from_raw_parts_mut(out, obs.len()).copy_from_slice(&obs);
    0
}

/// Writes 1 for each legal action id of `actor`, 0 otherwise.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_mask(env: *mut GtbEnv, actor: i32, out: *mut u8, len: usize) -> i32 {
    let Some(h) = handle(env) else { return -1 };
    let Some(mask) = h.mask(actor) else {
        set_error(format!("unknown actor {actor}"));
        return -1;
    };
    if out.is_null() || len < mask.len() {
        set_error(format!("mask buffer holds {len} values, needs {}", mask.len()));
        return -1;
    }
    for (d, &m) in slice::from_raw_parts_mut(out, mask.len()).iter_mut().zip(&mask) {
        *d = u8::from(m);
    }
    0
}

/// Observation layouts and catalog sizes as JSON.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_layout_json(env: *mut GtbEnv) -> *mut c_char {
    let Some(h) = handle(env) else { return ptr::null_mut() };
    let doc = serde_json::json!({
        "agent": h.env.agent_layout(),
        "planner": h.env.planner_layout(),
        "agent_actions": AGENT_ACTIONS,
        "planner_actions": PLANNER_ACTIONS,
        "n_agents": h.env.n_agents(),
    });
    into_c_string(doc.to_string())
}

/// Trace records emitted since the last drain, as JSON lines.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gtb_env_drain_trace(env: *mut GtbEnv) -> *mut c_char {
    let Some(h) = handle(env) else { return ptr::null_mut() };
    let mut text = String::new();
    for r in h.pending.drain(..) {
        match serde_json::to_string(&r) {
            Ok(line) => {
                text.push_str(&line);
                text.push('\n');
            }
            Err(e) => {
                set_error(e.to_string());
                return ptr::null_mut();
            }
        }
    }
    into_c_string(text)
}

/// The last error raised on this thread, or null.
#[no_mangle]
pub extern "C" fn gtb_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().clone().map_or(ptr::null_mut(), into_c_string))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn gtb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
