//! Step-level episode traces: one JSON record per simulated second,
//! with enough state to recompute every metric bit-exactly, plus a
//! columnar CSV export for plotting.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cbf_kit::ConstraintId;
use crate::episode_env::RewardBreakdown;
use crate::error::Result;
use crate::metrics_eval::{violation_stats, EpisodeMetrics, ViolationStats};
use crate::quat_dyn::SimState;

/// One inner (1 s) step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub q: [f64; 4],
    pub w: [f64; 3],
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub temp_c: f64,
    pub energy_kj: f64,
    pub theta_s: f64,
    pub u_des: [f64; 6],
    pub u_act: [f64; 6],
    /// Constraint values at the post-step state, `ConstraintId::ALL`
    /// order.
    pub h: Vec<f64>,
    /// QP slack per constraint (zero for the hard row and for dropped
    /// rows), same order.
    pub slack: Vec<f64>,
    /// Indices of points first inspected on this step.
    pub new_points: Vec<usize>,
    /// Present on the last inner record of each outer step.
    pub reward: Option<RewardBreakdown>,
    pub termination: String,
}

impl TraceRecord {
    pub fn from_state(
        state: &SimState,
        u_des: &[f64; 6],
        u_act: &[f64; 6],
        h: Vec<f64>,
        slack: Vec<f64>,
        new_points: Vec<usize>,
        termination: String,
    ) -> Self {
        Self {
            t: state.t,
            q: state.q.as_array(),
            w: [state.w.x, state.w.y, state.w.z],
            p: [state.p.x, state.p.y, state.p.z],
            v: [state.v.x, state.v.y, state.v.z],
            temp_c: state.temp_c,
            energy_kj: state.energy_kj,
            theta_s: state.theta_s,
            u_des: *u_des,
            u_act: *u_act,
            h,
            slack,
            new_points,
            reward: None,
            termination,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub rta_enabled: bool,
    pub policy: String,
}

/// A full episode: a metadata header line followed by one record per
/// simulated second.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl EpisodeTrace {
    pub fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    /// Line-delimited JSON: the meta record first, then the steps in
    /// time order.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{}", serde_json::to_string(&self.meta)?)?;
        for r in &self.records {
            writeln!(f, "{}", serde_json::to_string(r)?)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let meta_line = lines
            .next()
            .ok_or_else(|| crate::error::Error::Config("empty trace file".into()))??;
        let meta: TraceMeta = serde_json::from_str(&meta_line)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(Self { meta, records })
    }

    /// Compact columnar export for plotting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec![
            "t".to_string(),
            "q1".into(),
            "q2".into(),
            "q3".into(),
            "q4".into(),
            "wx".into(),
            "wy".into(),
            "wz".into(),
            "px".into(),
            "py".into(),
            "pz".into(),
            "vx".into(),
            "vy".into(),
            "vz".into(),
            "temp_c".into(),
            "energy_kj".into(),
            "theta_s".into(),
        ];
        for i in 0..6 {
            header.push(format!("u_des_{i}"));
        }
        for i in 0..6 {
            header.push(format!("u_act_{i}"));
        }
        for id in ConstraintId::ALL {
            header.push(format!("h_{}", id.key()));
        }
        writeln!(f, "{}", header.join(","))?;
        for r in &self.records {
            let mut row: Vec<String> = vec![r.t.to_string()];
            row.extend(r.q.iter().map(|x| x.to_string()));
            row.extend(r.w.iter().map(|x| x.to_string()));
            row.extend(r.p.iter().map(|x| x.to_string()));
            row.extend(r.v.iter().map(|x| x.to_string()));
            row.push(r.temp_c.to_string());
            row.push(r.energy_kj.to_string());
            row.push(r.theta_s.to_string());
            row.extend(r.u_des.iter().map(|x| x.to_string()));
            row.extend(r.u_act.iter().map(|x| x.to_string()));
            row.extend(r.h.iter().map(|x| x.to_string()));
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn violation_stats(&self) -> ViolationStats {
        let rows: Vec<Vec<f64>> = self.records.iter().map(|r| r.h.clone()).collect();
        violation_stats(&rows)
    }

    /// Recomputes episode metrics from the stored records alone, so a
    /// trace on disk is a sufficient statistic for the summary tables.
    pub fn recompute_metrics(&self, mass: f64, point_weights: &[f64]) -> EpisodeMetrics {
        let dt = 1.0;
        let mut delta_v = 0.0;
        let mut delta_v_des = 0.0;
        let mut torque = 0.0;
        let mut torque_des = 0.0;
        let mut total_reward = 0.0;
        let mut inspected_weight = 0.0;
        for r in &self.records {
            delta_v += (r.u_act[0].abs() + r.u_act[1].abs() + r.u_act[2].abs()) / mass * dt;
            delta_v_des += (r.u_des[0].abs() + r.u_des[1].abs() + r.u_des[2].abs()) / mass * dt;
            torque += r.u_act[3].abs() + r.u_act[4].abs() + r.u_act[5].abs();
            torque_des += r.u_des[3].abs() + r.u_des[4].abs() + r.u_des[5].abs();
            if let Some(b) = &r.reward {
                total_reward += b.total();
            }
            for idx in &r.new_points {
                inspected_weight += point_weights.get(*idx).copied().unwrap_or(0.0);
            }
        }
        let termination = self
            .records
            .last()
            .map(|r| r.termination.clone())
            .unwrap_or_else(|| "Running".into());
        EpisodeMetrics {
            inspected_weight,
            total_reward,
            episode_length: self.records.last().map(|r| r.t).unwrap_or(0.0),
            delta_v,
            delta_v_desired: delta_v_des,
            total_torque: torque,
            total_torque_desired: torque_des,
            violation: self.violation_stats(),
            termination,
        }
    }
}
