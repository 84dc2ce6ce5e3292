//! Run configuration: one TOML document covering the whole parameter
//! tree, with every default embedded in the binary and unknown keys
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asif_filter::SolverSettings;
use crate::baseline_ctrl::{LqrParams, PdParams};
use crate::cbf_kit::ConstraintParams;
use crate::episode_env::EpisodeConfig;
use crate::error::{Error, Result};
use crate::inspection_geom::SensorParams;
use crate::quat_dyn::SimParams;

/// Baseline-controller gains in scalar form (the weight matrices are
/// diagonal).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// LQR position weight (per axis).
    pub lqr_q_pos: f64,
    /// LQR velocity weight (per axis).
    pub lqr_q_vel: f64,
    /// LQR control weight (per axis).
    pub lqr_r: f64,
    /// Translation target, m. The origin makes the controller drive at
    /// the chief, deliberately stressing the safety boundary.
    pub lqr_target: [f64; 3],
    pub pd_kp: f64,
    pub pd_kd: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lqr_q_pos: 1e-4,
            lqr_q_vel: 1.0,
            lqr_r: 1e2,
            lqr_target: [0.0, 0.0, 0.0],
            pd_kp: 0.02,
            pd_kd: 0.2,
        }
    }
}

impl ControllerConfig {
    pub fn lqr_params(&self) -> LqrParams {
        let mut p = LqrParams::default();
        for i in 0..3 {
            p.q[(i, i)] = self.lqr_q_pos;
            p.q[(i + 3, i + 3)] = self.lqr_q_vel;
            p.r[(i, i)] = self.lqr_r;
        }
        p.target_p = nalgebra::Vector3::from_row_slice(&self.lqr_target);
        p
    }

    pub fn pd_params(&self) -> PdParams {
        PdParams {
            kp: self.pd_kp,
            kd: self.pd_kd,
            ..Default::default()
        }
    }
}

/// The full parameter tree.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sim: SimParams,
    pub constraints: ConstraintParams,
    pub sensor: SensorParams,
    pub episode: EpisodeConfig,
    pub solver: SolverSettings,
    pub controller: ControllerConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_load_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        // Round-trip is exact: re-serialization is byte-identical.
        assert_eq!(text, back.to_toml().unwrap());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("[episode]\nnot_a_key = 1\n");
        assert!(err.is_err());
        let err = toml::from_str::<RunConfig>("[nope]\nx = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn partial_override_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[episode]\nseed = 99\n").unwrap();
        assert_eq!(cfg.episode.seed, 99);
        assert_eq!(cfg.episode.max_time, 12_236.0);
        assert_eq!(cfg.sim.vehicle.mass, 12.0);
    }

    #[test]
    fn load_missing_file_is_config_error() {
        let err = RunConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn controller_params_mapping() {
        let cc = ControllerConfig::default();
        let lqr = cc.lqr_params();
        assert_eq!(lqr.q[(0, 0)], 1e-4);
        assert_eq!(lqr.q[(3, 3)], 1.0);
        assert_eq!(lqr.r[(0, 0)], 1e2);
        assert_eq!(cc.pd_params().kp, 0.02);
    }
}
