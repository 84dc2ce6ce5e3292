//! Episode lifecycle: randomized initialization, the dual-rate step
//! loop (10 s policy period over 1 s dynamics/safety periods), the
//! 26-element observation, the 9-term reward, and termination logic.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::asif_filter::{AsifFilter, SolveStatus, SolverSettings};
use crate::cbf_kit::{default_specs, eval_h, psm_scan, ConstraintId, ConstraintParams};
use crate::error::{Error, Result};
use crate::inspection_geom::{generate_points, update_inspected, PointSet, SensorParams};
use crate::quat_dyn::{step_rk4, ControlInput, Quaternion, SimParams, SimState};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub seed: u64,
    pub rta_enabled: bool,
    /// Policy (outer) period, s.
    pub policy_period: f64,
    /// Dynamics/safety (inner) period, s.
    pub inner_period: f64,
    /// Episode time limit, s (two orbits at n = 0.001027 rad/s).
    pub max_time: f64,
    pub crash_radius: f64,
    pub bound_radius: f64,
    /// Inspected weight at which the episode succeeds.
    pub success_weight: f64,
    /// Initial radial distance range, m.
    pub init_radius: (f64, f64),
    /// Initial battery energy range, kJ.
    pub init_energy: (f64, f64),
    /// Initial temperature range, deg C.
    pub init_temp: (f64, f64),
    /// Attitude resamples before giving up on a feasible start.
    pub max_quat_resamples: usize,
    /// Uninspected points per k-means cluster (k = ceil(N/this)).
    pub cluster_divisor: usize,
    /// Free-flight horizon for the terminal passive-safety check, s.
    pub success_fft_horizon: f64,
    /// Grid step for the terminal passive-safety scan, s.
    pub success_fft_dt: f64,
    /// Observation normalization denominators.
    pub norm: ObsNorm,
    pub reward: RewardCoeffs,
    /// When true (default), fuel and torque rewards are computed on
    /// the desired control rather than the filtered one.
    pub reward_uses_desired: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rta_enabled: true,
            policy_period: 10.0,
            inner_period: 1.0,
            max_time: 12_236.0,
            crash_radius: 15.0,
            bound_radius: 800.0,
            success_weight: 0.95,
            init_radius: (50.0, 100.0),
            init_energy: (5.0, 7.0),
            init_temp: (3.0, 7.0),
            max_quat_resamples: 10_000,
            cluster_divisor: 20,
            success_fft_horizon: 172_800.0,
            success_fft_dt: 60.0,
            norm: ObsNorm::default(),
            reward: RewardCoeffs::default(),
            reward_uses_desired: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObsNorm {
    pub pos: f64,
    pub vel: f64,
    pub omega: f64,
    pub energy: f64,
    pub temp: f64,
}

impl Default for ObsNorm {
    fn default() -> Self {
        Self {
            pos: 800.0,
            vel: 5.0,
            omega: 0.034906585,
            energy: 10.0,
            temp: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardCoeffs {
    pub points: f64,
    pub delta_v: f64,
    pub torque: f64,
    pub orient_scale: f64,
    pub orient_decay: f64,
    pub time_bonus: f64,
    /// Time bonus cutoff, s (roughly half an orbit).
    pub time_cutoff: f64,
    pub success: f64,
    pub crash: f64,
    pub dist: f64,
    pub energy: f64,
    /// Energy-penalty threshold, kJ.
    pub energy_min: f64,
}

impl Default for RewardCoeffs {
    fn default() -> Self {
        Self {
            points: 1.0,
            delta_v: -0.02,
            torque: -0.1,
            orient_scale: 0.0005,
            orient_decay: 0.15,
            time_bonus: 0.001,
            time_cutoff: 3000.0,
            success: 1.0,
            crash: -1.0,
            dist: -1.0,
            energy: -1.0,
            energy_min: 1.0,
        }
    }
}

/// The 26 observation values, in order: position magnitude and unit
/// vector, velocity magnitude and unit vector, body rates, energy,
/// temperature, Sun vector and its position dot product, priority
/// vector and dot product, uninspected-cluster vector and dot product,
/// inspected weight. All vectors in the deputy body frame; magnitudes
/// normalized by `ObsNorm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; 26]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Running,
    Success,
    Crash,
    OutOfBounds,
    Timeout,
    PowerDepleted,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Individually logged reward terms; `total` is their exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RewardBreakdown {
    pub points: f64,
    pub delta_v: f64,
    pub torque: f64,
    pub orient: f64,
    pub time: f64,
    pub success: f64,
    pub crash: f64,
    pub dist: f64,
    pub energy: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.points
            + self.delta_v
            + self.torque
            + self.orient
            + self.time
            + self.success
            + self.crash
            + self.dist
            + self.energy
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub reward_breakdown: RewardBreakdown,
    pub done: bool,
    pub termination: Termination,
    /// Constraint h values at the final inner state, `ConstraintId::ALL`
    /// order, with strict-negativity violation flags.
    pub safety_h: Vec<f64>,
    pub violations: Vec<bool>,
    /// One record per simulated second this step.
    pub inner_records: Vec<TraceRecord>,
}

/// One inspection episode. Single-owner; run many instances in
/// parallel for batch evaluation.
pub struct Episode {
    pub cfg: EpisodeConfig,
    pub sim: SimParams,
    pub cp: ConstraintParams,
    pub sensor: SensorParams,
    pub state: SimState,
    pub points: PointSet,
    /// Priority direction, Hill's frame.
    pub priority_hat: Vector3<f64>,
    pub termination: Termination,
    filter: AsifFilter,
    /// Safe control applied on the previous inner step; the filter's
    /// desired control for inner iterations after the first.
    prev_u_act: ControlInput,
    kmeans_seed: u64,
    /// Count of solver statuses over inner steps, for diagnostics.
    pub solver_optimal_steps: usize,
    pub total_inner_steps: usize,
}

impl Episode {
    /// Builds and resets an episode. Sampling order is fixed, so a
    /// seed fully determines the initial condition.
    pub fn reset(
        cfg: EpisodeConfig,
        sim: SimParams,
        cp: ConstraintParams,
        sensor: SensorParams,
        solver: SolverSettings,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let r = rng.gen_range(cfg.init_radius.0..=cfg.init_radius.1);
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let e = rng.gen_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
        let p = spherical_position(r, a, e);
        let energy = rng.gen_range(cfg.init_energy.0..=cfg.init_energy.1);
        let temp = rng.gen_range(cfg.init_temp.0..=cfg.init_temp.1);
        let theta_s = rng.gen_range(0.0..std::f64::consts::TAU);
        let pa = rng.gen_range(0.0..std::f64::consts::TAU);
        let pe = rng.gen_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
        let priority_hat = spherical_position(1.0, pa, pe);
        let points = generate_points(&sensor, &priority_hat, &mut rng);

        let mut state = SimState {
            p,
            v: Vector3::zeros(),
            q: Quaternion::IDENTITY,
            w: Vector3::zeros(),
            temp_c: temp,
            energy_kj: energy,
            theta_s,
            t: 0.0,
        };
        // Attitude rejection sampling: all constraints must hold at
        // the start.
        let mut feasible = false;
        for _ in 0..cfg.max_quat_resamples {
            state.q = Quaternion::random_uniform(&mut rng);
            let ok = ConstraintId::ALL
                .iter()
                .all(|id| eval_h(*id, &state, &cp, &sim) >= 0.0);
            if ok {
                feasible = true;
                break;
            }
        }
        if !feasible {
            return Err(Error::InitFeasibilityExhausted(cfg.max_quat_resamples));
        }

        let filter = AsifFilter::new(default_specs(), cp.clone(), solver);
        let kmeans_seed = cfg.seed ^ 0x9e37_79b9_7f4a_7c15;
        Ok(Self {
            cfg,
            sim,
            cp,
            sensor,
            state,
            points,
            priority_hat,
            termination: Termination::Running,
            filter,
            prev_u_act: ControlInput::ZERO,
            kmeans_seed,
            solver_optimal_steps: 0,
            total_inner_steps: 0,
        })
    }

    pub fn done(&self) -> bool {
        self.termination != Termination::Running
    }

    /// Builds the current observation.
    pub fn observe(&self) -> Observation {
        let s = &self.state;
        let cfg = &self.cfg;
        let mut o = [0.0; 26];

        let p_body = s.q.rotate_inv(&s.p);
        let p_mag = p_body.norm();
        let p_hat = unit_or_zero(&p_body);
        o[0] = p_mag / cfg.norm.pos;
        o[1..4].copy_from_slice(p_hat.as_slice());

        let v_body = s.q.rotate_inv(&s.v);
        let v_mag = v_body.norm();
        let v_hat = unit_or_zero(&v_body);
        o[4] = v_mag / cfg.norm.vel;
        o[5..8].copy_from_slice(v_hat.as_slice());

        o[8] = s.w.x / cfg.norm.omega;
        o[9] = s.w.y / cfg.norm.omega;
        o[10] = s.w.z / cfg.norm.omega;
        o[11] = s.energy_kj / cfg.norm.energy;
        o[12] = s.temp_c / cfg.norm.temp;

        let sun_body = s.q.rotate_inv(&s.sun_dir());
        o[13..16].copy_from_slice(sun_body.as_slice());
        o[16] = sun_body.dot(&p_hat);

        let pri_body = s.q.rotate_inv(&self.priority_hat);
        o[17..20].copy_from_slice(pri_body.as_slice());
        o[20] = pri_body.dot(&p_hat);

        let ups_hill = self.uninspected_cluster_dir();
        let ups_body = s.q.rotate_inv(&ups_hill);
        o[21..24].copy_from_slice(ups_body.as_slice());
        o[24] = ups_body.dot(&p_hat);

        o[25] = self.points.inspected_weight();
        Observation(o)
    }

    /// Unit vector toward the nearest cluster of uninspected points,
    /// via seeded k-means (k = ceil(N/cluster_divisor)); zero sentinel
    /// when everything is inspected.
    fn uninspected_cluster_dir(&self) -> Vector3<f64> {
        let idx = self.points.uninspected_indices();
        if idx.is_empty() {
            return Vector3::zeros();
        }
        let pts: Vec<Vector3<f64>> = idx.iter().map(|i| self.points.points[*i]).collect();
        let k = idx.len().div_ceil(self.cfg.cluster_divisor).max(1);
        let centroids = kmeans(&pts, k, self.kmeans_seed);
        let nearest = centroids
            .iter()
            .min_by(|a, b| {
                (*a - self.state.p)
                    .norm()
                    .partial_cmp(&(*b - self.state.p).norm())
                    .unwrap()
            })
            .unwrap();
        unit_or_zero(nearest)
    }

    /// Advances one policy period. Inner iteration 0 filters `u_des`;
    /// later iterations re-filter the previously applied safe control,
    /// so between policy updates the filter drifts toward its own
    /// latest output.
    pub fn step(&mut self, u_des: &ControlInput) -> Result<StepResult> {
        if self.done() {
            return Err(Error::EpisodeFinished);
        }
        if !u_des.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let u_des = u_des.clamped(&self.sim.vehicle);
        let w_p_before = self.points.inspected_weight();
        let n_inner = (self.cfg.policy_period / self.cfg.inner_period).round() as usize;
        let mut inner_records = Vec::with_capacity(n_inner);
        let mut applied_sum = [0.0; 6];

        for i in 0..n_inner {
            let desired = if i == 0 { u_des } else { self.prev_u_act };
            let (u_act, slacks) = if self.cfg.rta_enabled {
                let (u, report) = self.filter.filter(&self.state, &desired, &self.sim)?;
                if report.status == SolveStatus::Optimal {
                    self.solver_optimal_steps += 1;
                }
                let mut slack_row = vec![0.0; ConstraintId::ALL.len()];
                for c in &report.constraints {
                    let pos = ConstraintId::ALL.iter().position(|id| *id == c.id).unwrap();
                    slack_row[pos] = c.slack;
                }
                (u, slack_row)
            } else {
                self.solver_optimal_steps += 1;
                (desired.clamped(&self.sim.vehicle), vec![0.0; ConstraintId::ALL.len()])
            };

            self.state = step_rk4(&self.state, &u_act, self.cfg.inner_period, &self.sim)?;
            self.total_inner_steps += 1;
            for (acc, c) in applied_sum.iter_mut().zip(u_act.as_array()) {
                *acc += c.abs();
            }

            let boresight_hill = self.state.q.rotate(&self.sensor.boresight_body);
            let before: Vec<bool> = self.points.inspected.clone();
            update_inspected(
                &mut self.points,
                &self.state.p,
                &boresight_hill,
                &self.state.sun_dir(),
                &self.sensor,
            );
            let new_points: Vec<usize> = self
                .points
                .inspected
                .iter()
                .zip(&before)
                .enumerate()
                .filter(|(_, (now, was))| **now && !**was)
                .map(|(j, _)| j)
                .collect();

            let h_row: Vec<f64> = ConstraintId::ALL
                .iter()
                .map(|id| eval_h(*id, &self.state, &self.cp, &self.sim))
                .collect();

            self.termination = self.termination_check();
            inner_records.push(TraceRecord::from_state(
                &self.state,
                &desired.as_array(),
                &u_act.as_array(),
                h_row,
                slacks,
                new_points,
                self.termination.to_string(),
            ));
            self.prev_u_act = u_act;
            if self.done() {
                break;
            }
        }

        let breakdown = self.reward(w_p_before, &u_des);
        if let Some(last) = inner_records.last_mut() {
            last.reward = Some(breakdown);
        }
        let safety_h: Vec<f64> = inner_records
            .last()
            .map(|r| r.h.clone())
            .unwrap_or_default();
        let violations = safety_h.iter().map(|h| *h < 0.0).collect();
        Ok(StepResult {
            obs: self.observe(),
            reward: breakdown.total(),
            reward_breakdown: breakdown,
            done: self.done(),
            termination: self.termination,
            safety_h,
            violations,
            inner_records,
        })
    }

    /// Priority order pins simultaneous conditions: safety failures
    /// dominate, then power, then success, then the clock.
    pub fn termination_check(&self) -> Termination {
        let d = self.state.p.norm();
        if d < self.cfg.crash_radius {
            Termination::Crash
        } else if d > self.cfg.bound_radius {
            Termination::OutOfBounds
        } else if self.state.energy_kj <= 0.0 {
            Termination::PowerDepleted
        } else if self.points.inspected_weight() >= self.cfg.success_weight {
            Termination::Success
        } else if self.state.t >= self.cfg.max_time {
            Termination::Timeout
        } else {
            Termination::Running
        }
    }

    /// The 9-term reward for the outer step that just completed. Fuel
    /// and torque terms use the desired control (the action the agent
    /// chose), per `reward_uses_desired`.
    fn reward(&self, w_p_before: f64, u_des: &ControlInput) -> RewardBreakdown {
        let rc = &self.cfg.reward;
        let s = &self.state;
        let mut b = RewardBreakdown::default();

        b.points = rc.points * (self.points.inspected_weight() - w_p_before);

        let (f_src, tau_src) = if self.cfg.reward_uses_desired {
            (u_des.f, u_des.tau)
        } else {
            (self.prev_u_act.f, self.prev_u_act.tau)
        };
        let dv = (f_src.x.abs() + f_src.y.abs() + f_src.z.abs()) / self.sim.vehicle.mass
            * self.cfg.policy_period;
        b.delta_v = rc.delta_v * dv;
        b.torque = rc.torque * (tau_src.x.abs() + tau_src.y.abs() + tau_src.z.abs());

        let boresight_hill = s.q.rotate(&self.sensor.boresight_body);
        let to_chief = unit_or_zero(&(-s.p));
        let dot = boresight_hill.dot(&to_chief);
        if (dot - 1.0).abs() <= 1.0 {
            b.orient = rc.orient_scale * (-(dot - 1.0).abs() / rc.orient_decay).exp();
        }

        if s.t <= rc.time_cutoff {
            b.time = rc.time_bonus;
        }

        match self.termination {
            Termination::Success => {
                // Passive safety over the post-success free flight: a
                // crash within the horizon flips the sign.
                let keep_out = self.cp.r_d + self.cp.r_c;
                let (h_psm, _) = psm_scan(
                    &s.p,
                    &s.v,
                    self.sim.vehicle.n,
                    keep_out,
                    self.cfg.success_fft_horizon,
                    self.cfg.success_fft_dt,
                );
                b.success = if h_psm >= 0.0 { rc.success } else { -rc.success };
            }
            Termination::Crash => b.crash = rc.crash,
            Termination::OutOfBounds => b.dist = rc.dist,
            _ => {}
        }
        if self.done() && s.energy_kj < rc.energy_min {
            b.energy = rc.energy;
        }
        b
    }
}

/// Spherical parameterization used for initial position and the
/// priority direction.
pub fn spherical_position(r: f64, azimuth: f64, elevation: f64) -> Vector3<f64> {
    Vector3::new(
        r * azimuth.cos() * elevation.cos(),
        r * azimuth.sin() * elevation.cos(),
        r * elevation.sin(),
    )
}

fn unit_or_zero(v: &Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        Vector3::zeros()
    }
}

/// Plain Lloyd k-means with deterministic k-means++ seeding.
fn kmeans(points: &[Vector3<f64>], k: usize, seed: u64) -> Vec<Vector3<f64>> {
    let k = k.min(points.len());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // k-means++ initialization.
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| (p - c).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // All remaining points coincide with a centroid.
            centroids.push(points[rng.gen_range(0..points.len())]);
            continue;
        }
        let mut target = rng.gen_range(0.0..total);
        let mut chosen = points.len() - 1;
        for (i, w) in d2.iter().enumerate() {
            if target < *w {
                chosen = i;
                break;
            }
            target -= w;
        }
        centroids.push(points[chosen]);
    }
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = centroids
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (p - a.1)
                        .norm_squared()
                        .partial_cmp(&(p - b.1).norm_squared())
                        .unwrap()
                })
                .unwrap()
                .0;
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (ci, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vector3<f64>> = points
                .iter()
                .zip(&assign)
                .filter(|(_, a)| **a == ci)
                .map(|(p, _)| p)
                .collect();
            if !members.is_empty() {
                *c = members.iter().fold(Vector3::zeros(), |acc, p| acc + **p)
                    / members.len() as f64;
            }
        }
    }
    centroids
}
