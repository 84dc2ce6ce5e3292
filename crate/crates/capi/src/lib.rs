//! C ABI for the inspection episode environment. One opaque handle per
//! episode, status codes instead of panics; see `include/` for the
//! generated header.
//!
//! Thread safety: a handle may be used from one thread at a time. Run
//! parallel episodes with one handle each.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use inspection_rta::config::RunConfig;
use inspection_rta::episode_env::{Episode, Termination};
use inspection_rta::ControlInput;
use nalgebra::Vector3;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtaStatus {
    RtaOk = 0,
    RtaNullPointer = 1,
    RtaInvalidConfig = 2,
    RtaInvalidAction = 3,
    RtaEpisodeFinished = 4,
    RtaRuntimeError = 5,
}

/// Termination cause, `RtaRunning` while the episode is live.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtaTermination {
    RtaRunning = 0,
    RtaSuccess = 1,
    RtaCrash = 2,
    RtaOutOfBounds = 3,
    RtaTimeout = 4,
    RtaPowerDepleted = 5,
}

impl From<Termination> for RtaTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::Running => RtaTermination::RtaRunning,
            Termination::Success => RtaTermination::RtaSuccess,
            Termination::Crash => RtaTermination::RtaCrash,
            Termination::OutOfBounds => RtaTermination::RtaOutOfBounds,
            Termination::Timeout => RtaTermination::RtaTimeout,
            Termination::PowerDepleted => RtaTermination::RtaPowerDepleted,
        }
    }
}

/// Result of one outer (policy-rate) step.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RtaStepInfo {
    pub reward: f64,
    pub done: bool,
    pub termination: RtaTermination,
    /// Simulated time after the step, s.
    pub t: f64,
    /// Cumulative inspected point weight in [0, 1].
    pub inspected_weight: f64,
}

/// Opaque episode handle.
pub struct RtaEpisode {
    cfg: RunConfig,
    episode: Episode,
}

fn build_episode(cfg: &RunConfig, seed: u64, rta_enabled: bool) -> Result<Episode, RtaStatus> {
    let mut ep_cfg = cfg.episode.clone();
    ep_cfg.seed = seed;
    ep_cfg.rta_enabled = rta_enabled;
    Episode::reset(
        ep_cfg,
        cfg.sim.clone(),
        cfg.constraints.clone(),
        cfg.sensor.clone(),
        cfg.solver.clone(),
    )
    .map_err(|_| RtaStatus::RtaRuntimeError)
}

/// Creates an episode. `config_toml_path` may be null for defaults; the
/// seed and RTA switch override whatever the file says. On success
/// writes the new handle through `out`.
///
/// # Safety
/// `out` must be a valid pointer; `config_toml_path`, when non-null,
/// must be a NUL-terminated path string.
#[no_mangle]
pub unsafe extern "C" fn rta_episode_create(
    config_toml_path: *const c_char,
    seed: u64,
    rta_enabled: bool,
    out: *mut *mut RtaEpisode,
) -> RtaStatus {
    if out.is_null() {
        return RtaStatus::RtaNullPointer;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let mut cfg = if config_toml_path.is_null() {
            RunConfig::default()
        } else {
            let path = match CStr::from_ptr(config_toml_path).to_str() {
                Ok(p) => p,
                Err(_) => return Err(RtaStatus::RtaInvalidConfig),
            };
            RunConfig::load(Path::new(path)).map_err(|_| RtaStatus::RtaInvalidConfig)?
        };
        cfg.episode.seed = seed;
        cfg.episode.rta_enabled = rta_enabled;
        let episode = build_episode(&cfg, seed, rta_enabled)?;
        Ok(Box::new(RtaEpisode { cfg, episode }))
    }));
    match result {
        Ok(Ok(handle)) => {
            *out = Box::into_raw(handle);
            RtaStatus::RtaOk
        }
        Ok(Err(status)) => status,
        Err(_) => RtaStatus::RtaRuntimeError,
    }
}

/// Re-initializes the episode with a new seed, keeping the
/// configuration it was created with.
///
/// # Safety
/// `ep` must be a live handle from `rta_episode_create`.
#[no_mangle]
pub unsafe extern "C" fn rta_episode_reset(ep: *mut RtaEpisode, seed: u64) -> RtaStatus {
    let Some(ep) = ep.as_mut() else {
        return RtaStatus::RtaNullPointer;
    };
    let result = catch_unwind(AssertUnwindSafe(|| {
        build_episode(&ep.cfg, seed, ep.cfg.episode.rta_enabled)
    }));
    match result {
        Ok(Ok(episode)) => {
            ep.episode = episode;
            RtaStatus::RtaOk
        }
        Ok(Err(status)) => status,
        Err(_) => RtaStatus::RtaRuntimeError,
    }
}

/// Number of elements in the observation vector.
#[no_mangle]
pub extern "C" fn rta_observation_len() -> usize {
    26
}

/// Writes the current normalized observation into `out_obs`
/// (`rta_observation_len()` doubles).
///
/// # Safety
/// `ep` must be a live handle; `out_obs` must point at at least 26
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn rta_episode_observe(
    ep: *const RtaEpisode,
    out_obs: *mut f64,
) -> RtaStatus {
    let Some(ep) = ep.as_ref() else {
        return RtaStatus::RtaNullPointer;
    };
    if out_obs.is_null() {
        return RtaStatus::RtaNullPointer;
    }
    let result = catch_unwind(AssertUnwindSafe(|| ep.episode.observe()));
    match result {
        Ok(obs) => {
            std::ptr::copy_nonoverlapping(obs.as_slice().as_ptr(), out_obs, 26);
            RtaStatus::RtaOk
        }
        Err(_) => RtaStatus::RtaRuntimeError,
    }
}

/// Advances one outer step with the desired control `action`
/// (`[Fx, Fy, Fz, tau_x, tau_y, tau_z]`, N and N·m). `out_info` may be
/// null when the caller does not need the step summary.
///
/// # Safety
/// `ep` must be a live handle; `action` must point at 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn rta_episode_step(
    ep: *mut RtaEpisode,
    action: *const f64,
    out_info: *mut RtaStepInfo,
) -> RtaStatus {
    let Some(ep) = ep.as_mut() else {
        return RtaStatus::RtaNullPointer;
    };
    if action.is_null() {
        return RtaStatus::RtaNullPointer;
    }
    let a = std::slice::from_raw_parts(action, 6);
    if a.iter().any(|x| !x.is_finite()) {
        return RtaStatus::RtaInvalidAction;
    }
    if ep.episode.done() {
        return RtaStatus::RtaEpisodeFinished;
    }
    let u = ControlInput {
        f: Vector3::new(a[0], a[1], a[2]),
        tau: Vector3::new(a[3], a[4], a[5]),
    };
    let result = catch_unwind(AssertUnwindSafe(|| ep.episode.step(&u)));
    match result {
        Ok(Ok(step)) => {
            if !out_info.is_null() {
                *out_info = RtaStepInfo {
                    reward: step.reward,
                    done: step.done,
                    termination: step.termination.into(),
                    t: ep.episode.state.t,
                    inspected_weight: ep.episode.points.inspected_weight(),
                };
            }
            RtaStatus::RtaOk
        }
        Ok(Err(inspection_rta::Error::EpisodeFinished)) => RtaStatus::RtaEpisodeFinished,
        Ok(Err(inspection_rta::Error::NonFiniteInput)) => RtaStatus::RtaInvalidAction,
        Ok(Err(_)) => RtaStatus::RtaRuntimeError,
        Err(_) => RtaStatus::RtaRuntimeError,
    }
}

/// Frees a handle. Null is a no-op; a handle must not be used after.
///
/// # Safety
/// `ep` must be null or a live handle from `rta_episode_create`.
#[no_mangle]
pub unsafe extern "C" fn rta_episode_free(ep: *mut RtaEpisode) {
    if !ep.is_null() {
        drop(Box::from_raw(ep));
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn rta_status_str(status: RtaStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        RtaStatus::RtaOk => b"ok\0",
        RtaStatus::RtaNullPointer => b"null pointer argument\0",
        RtaStatus::RtaInvalidConfig => b"invalid or unreadable configuration\0",
        RtaStatus::RtaInvalidAction => b"action must be 6 finite doubles\0",
        RtaStatus::RtaEpisodeFinished => b"episode already terminated; reset first\0",
        RtaStatus::RtaRuntimeError => b"internal error\0",
    };
    s.as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_step_observe_free() {
        let mut handle: *mut RtaEpisode = std::ptr::null_mut();
        let st = unsafe { rta_episode_create(std::ptr::null(), 11, true, &mut handle) };
        assert_eq!(st, RtaStatus::RtaOk);
        assert!(!handle.is_null());

        let mut obs = [0.0f64; 26];
        assert_eq!(
            unsafe { rta_episode_observe(handle, obs.as_mut_ptr()) },
            RtaStatus::RtaOk
        );
        assert!(obs.iter().all(|x| x.is_finite()));

        let action = [0.1, 0.0, -0.1, 0.0, 0.0, 0.0];
        let mut info = RtaStepInfo {
            reward: 0.0,
            done: false,
            termination: RtaTermination::RtaRunning,
            t: 0.0,
            inspected_weight: 0.0,
        };
        assert_eq!(
            unsafe { rta_episode_step(handle, action.as_ptr(), &mut info) },
            RtaStatus::RtaOk
        );
        assert_eq!(info.t, 10.0);
        assert!(info.reward.is_finite());

        unsafe { rta_episode_free(handle) };
    }

    #[test]
    fn matches_direct_api() {
        // Same seed through the C ABI and the Rust API: identical
        // observations and rewards.
        let mut handle: *mut RtaEpisode = std::ptr::null_mut();
        unsafe { rta_episode_create(std::ptr::null(), 42, true, &mut handle) };
        let cfg = RunConfig::default();
        let mut ep_cfg = cfg.episode.clone();
        ep_cfg.seed = 42;
        let mut direct = Episode::reset(
            ep_cfg,
            cfg.sim.clone(),
            cfg.constraints.clone(),
            cfg.sensor.clone(),
            cfg.solver.clone(),
        )
        .unwrap();

        let mut obs = [0.0f64; 26];
        unsafe { rta_episode_observe(handle, obs.as_mut_ptr()) };
        assert_eq!(obs[..], direct.observe().0[..]);

        let action = [0.2, -0.1, 0.0, 1e-4, 0.0, -1e-4];
        let u = ControlInput {
            f: Vector3::new(0.2, -0.1, 0.0),
            tau: Vector3::new(1e-4, 0.0, -1e-4),
        };
        for _ in 0..5 {
            let mut info = RtaStepInfo {
                reward: 0.0,
                done: false,
                termination: RtaTermination::RtaRunning,
                t: 0.0,
                inspected_weight: 0.0,
            };
            unsafe { rta_episode_step(handle, action.as_ptr(), &mut info) };
            let step = direct.step(&u).unwrap();
            assert_eq!(info.reward, step.reward);
            unsafe { rta_episode_observe(handle, obs.as_mut_ptr()) };
            assert_eq!(obs[..], direct.observe().0[..]);
        }
        unsafe { rta_episode_free(handle) };
    }

    #[test]
    fn error_codes() {
        let mut handle: *mut RtaEpisode = std::ptr::null_mut();
        assert_eq!(
            unsafe { rta_episode_create(std::ptr::null(), 1, true, std::ptr::null_mut()) },
            RtaStatus::RtaNullPointer
        );
        let bad_path = std::ffi::CString::new("/nonexistent/cfg.toml").unwrap();
        assert_eq!(
            unsafe { rta_episode_create(bad_path.as_ptr(), 1, true, &mut handle) },
            RtaStatus::RtaInvalidConfig
        );
        assert_eq!(
            unsafe { rta_episode_step(std::ptr::null_mut(), std::ptr::null(), std::ptr::null_mut()) },
            RtaStatus::RtaNullPointer
        );
        let nan_action = [f64::NAN; 6];
        unsafe { rta_episode_create(std::ptr::null(), 1, true, &mut handle) };
        assert_eq!(
            unsafe { rta_episode_step(handle, nan_action.as_ptr(), std::ptr::null_mut()) },
            RtaStatus::RtaInvalidAction
        );
        assert!(!rta_status_str(RtaStatus::RtaInvalidAction).is_null());
        unsafe { rta_episode_free(handle) };
        unsafe { rta_episode_free(std::ptr::null_mut()) };
    }
}
