//! The safety constraint library.
//!
//! Every scalar safety constraint is represented as a value `h(x)`
//! (`h >= 0` means safe) together with a barrier-condition row that is
//! linear in the control input `u = [F; tau]`:
//!
//! ```text
//!   BC(x, u) = grad_u . u + drift + alpha(h) >= 0
//! ```
//!
//! Relative-degree-two constraints (attitude exclusion, temperature,
//! battery) are lifted once: `Psi_1 = h_dot + alpha_1(h)` and the row
//! enforces `Psi_1_dot + alpha_2(Psi_1) >= 0`. All gradients are
//! analytic; a finite-difference oracle lives only in the test suites.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat_dyn::{cw_natural_accel, SimParams, SimState};
use crate::thermal_power::{incidence_angle, EARTH_DIR, CELSIUS_TO_KELVIN};

/// Identifier for each scalar safety constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    /// Safe separation (braking-law form). Hard constraint.
    Collision,
    /// Dynamic speed limit tied to separation distance.
    Speed,
    /// Keep-in zone (braking-law form).
    Kiz,
    /// Passively safe maneuvers over the free-flight horizon.
    Psm,
    VxLim,
    VyLim,
    VzLim,
    /// Sensor boresight kept out of the Sun cone.
    AttEz,
    /// Component temperature limit.
    Temp,
    /// Battery charge limit.
    Batt,
    W1Lim,
    W2Lim,
    W3Lim,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 13] = [
        ConstraintId::Collision,
        ConstraintId::Speed,
        ConstraintId::Kiz,
        ConstraintId::Psm,
        ConstraintId::VxLim,
        ConstraintId::VyLim,
        ConstraintId::VzLim,
        ConstraintId::AttEz,
        ConstraintId::Temp,
        ConstraintId::Batt,
        ConstraintId::W1Lim,
        ConstraintId::W2Lim,
        ConstraintId::W3Lim,
    ];

    /// Human-readable label (also the violation-table row name).
    pub fn label(&self) -> &'static str {
        match self {
            ConstraintId::Collision => "Safe separation",
            ConstraintId::Speed => "Dynamic speed",
            ConstraintId::Kiz => "Keep in zone",
            ConstraintId::Psm => "PSM",
            ConstraintId::VxLim => "x-dot limit",
            ConstraintId::VyLim => "y-dot limit",
            ConstraintId::VzLim => "z-dot limit",
            ConstraintId::AttEz => "Attitude exclusion",
            ConstraintId::Temp => "Temperature",
            ConstraintId::Batt => "Power",
            ConstraintId::W1Lim => "omega_1 limit",
            ConstraintId::W2Lim => "omega_2 limit",
            ConstraintId::W3Lim => "omega_3 limit",
        }
    }

    /// Stable key used in config tables and trace records.
    pub fn key(&self) -> &'static str {
        match self {
            ConstraintId::Collision => "collision",
            ConstraintId::Speed => "speed",
            ConstraintId::Kiz => "kiz",
            ConstraintId::Psm => "psm",
            ConstraintId::VxLim => "vx_lim",
            ConstraintId::VyLim => "vy_lim",
            ConstraintId::VzLim => "vz_lim",
            ConstraintId::AttEz => "att_ez",
            ConstraintId::Temp => "temp",
            ConstraintId::Batt => "batt",
            ConstraintId::W1Lim => "w1_lim",
            ConstraintId::W2Lim => "w2_lim",
            ConstraintId::W3Lim => "w3_lim",
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.key() == key)
            .ok_or_else(|| Error::UnknownConstraint(key.to_string()))
    }
}

/// Strengthening function `alpha(h) = c1 h + c3 h^3` with
/// `c1, c3 >= 0`, not both zero. Class-kappa by construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlphaCoeffs {
    pub c1: f64,
    pub c3: f64,
}

impl AlphaCoeffs {
    pub fn new(c1: f64, c3: f64) -> Result<Self> {
        if c1 < 0.0 || c3 < 0.0 || (c1 == 0.0 && c3 == 0.0) {
            return Err(Error::InvalidCoefficients);
        }
        Ok(Self { c1, c3 })
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.c1 * h + self.c3 * h * h * h
    }

    /// d(alpha)/dh.
    pub fn slope(&self, h: f64) -> f64 {
        self.c1 + 3.0 * self.c3 * h * h
    }
}

/// Validated strengthening-function evaluation.
pub fn strengthening(coeffs: &AlphaCoeffs, h: f64) -> Result<f64> {
    let c = AlphaCoeffs::new(coeffs.c1, coeffs.c3)?;
    Ok(c.eval(h))
}

/// All constraint constants in one record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintParams {
    /// Deputy collision radius, m.
    pub r_d: f64,
    /// Chief collision radius, m.
    pub r_c: f64,
    /// Worst-case deceleration available for braking, m/s^2.
    /// Default: thrust authority minus natural CW drift over the
    /// keep-in zone, `f_max/m - (3 n^2 r_max + 2 n v_max)`.
    pub a_max: f64,
    /// Minimum allowable speed near the chief, m/s.
    pub nu0: f64,
    /// Dynamic speed limit slope, rad/s.
    pub nu1: f64,
    /// Keep-in zone radius, m.
    pub r_max: f64,
    /// PSM evaluation horizon, s.
    pub t_f_psm: f64,
    /// PSM evaluation grid step, s.
    pub psm_grid_dt: f64,
    /// Axial velocity limit, m/s.
    pub v_max: f64,
    /// Sensor boresight, body frame.
    pub boresight_body: Vector3<f64>,
    /// Sensor field of view, rad.
    pub alpha_fov: f64,
    /// Exclusion-zone safety buffer, rad.
    pub beta_buf: f64,
    /// Maximum component temperature, deg C.
    pub t_max_c: f64,
    /// Sun-incidence augmentation weight in the temperature constraint.
    pub delta0: f64,
    /// Earth-incidence augmentation weight in the temperature constraint.
    pub delta1: f64,
    /// Minimum battery energy, kJ.
    pub e_min_kj: f64,
    /// Sun-incidence augmentation weight in the battery constraint.
    pub delta2: f64,
    /// Angular velocity limit, rad/s.
    pub omega_max: f64,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self::for_vehicle(&crate::quat_dyn::VehicleParams::default())
    }
}

impl ConstraintParams {
    pub fn for_vehicle(vp: &crate::quat_dyn::VehicleParams) -> Self {
        let n = vp.n;
        let r_max = 800.0;
        let v_max = 5.0;
        Self {
            r_d: 5.0,
            r_c: 10.0,
            a_max: vp.f_max / vp.mass - (3.0 * n * n * r_max + 2.0 * n * v_max),
            nu0: 0.2,
            nu1: 7.5 * n,
            r_max,
            t_f_psm: 500.0,
            psm_grid_dt: 1.0,
            v_max,
            boresight_body: Vector3::new(1.0, 0.0, 0.0),
            alpha_fov: 60f64.to_radians(),
            beta_buf: 10f64.to_radians(),
            t_max_c: 10.0,
            delta0: 0.05,
            delta1: 0.01,
            e_min_kj: 1.0,
            delta2: 0.05,
            omega_max: 2f64.to_radians(),
        }
    }

    pub fn keep_out_radius(&self) -> f64 {
        self.r_d + self.r_c
    }
}

/// One scalar constraint with its strengthening coefficients and slack
/// policy. `slack_weight: None` marks a hard constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub id: ConstraintId,
    pub relative_degree: u8,
    /// Shared by both HOCBF levels.
    pub alpha: AlphaCoeffs,
    pub slack_weight: Option<f64>,
}

/// The full constraint set: every constraint slacked at 1e12 except
/// safe separation, which has no slack variable at all. The attitude
/// channel gets the gentle gains: its control authority is tiny
/// (tau_max/J ~ 0.017 rad/s^2), so aggressive strengthening would
/// demand torque the box cannot provide.
pub fn default_specs() -> Vec<ConstraintSpec> {
    const SLACK_W: f64 = 1e12;
    ConstraintId::ALL
        .iter()
        .map(|&id| {
            let (relative_degree, alpha) = match id {
                ConstraintId::Collision
                | ConstraintId::Speed
                | ConstraintId::Kiz
                | ConstraintId::Psm => (1, AlphaCoeffs { c1: 0.05, c3: 0.001 }),
                ConstraintId::VxLim | ConstraintId::VyLim | ConstraintId::VzLim => {
                    (1, AlphaCoeffs { c1: 1.0, c3: 0.0 })
                }
                ConstraintId::AttEz | ConstraintId::Temp | ConstraintId::Batt => {
                    (2, AlphaCoeffs { c1: 0.1, c3: 0.01 })
                }
                ConstraintId::W1Lim | ConstraintId::W2Lim | ConstraintId::W3Lim => {
                    (1, AlphaCoeffs { c1: 1.0, c3: 0.0 })
                }
            };
            ConstraintSpec {
                id,
                relative_degree,
                alpha,
                slack_weight: (id != ConstraintId::Collision).then_some(SLACK_W),
            }
        })
        .collect()
}

/// Linear-in-`u` barrier condition for one constraint at one state.
#[derive(Debug, Clone, Copy)]
pub struct BarrierRow {
    /// Coefficients of `u = [F(3); tau(3)]`.
    pub grad_u: [f64; 6],
    /// Control-free part of the highest Lie derivative.
    pub drift: f64,
    /// Strengthening term(s) evaluated at the current state.
    pub strengthen: f64,
    /// Raw constraint value `h(x)`.
    pub h_value: f64,
    /// Lifted value: `h` for relative degree one, `Psi_1` otherwise.
    pub psi_value: f64,
}

impl BarrierRow {
    /// Constant part of the inequality `grad_u . u + affine >= 0`.
    pub fn affine(&self) -> f64 {
        self.drift + self.strengthen
    }

    /// Evaluates the barrier condition at a control.
    pub fn bc(&self, u: &[f64; 6]) -> f64 {
        self.grad_u.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>() + self.affine()
    }
}

// ---------------------------------------------------------------------------
// Closed-form free flight

/// Closed-form Clohessy-Wiltshire free-flight position.
pub fn fft_position(p0: &Vector3<f64>, v0: &Vector3<f64>, t: f64, n: f64) -> Vector3<f64> {
    let (phi_pp, phi_pv) = cw_stm_position(t, n);
    phi_pp * p0 + phi_pv * v0
}

/// Position rows of the CW state-transition matrix: `p(t) = Phi_pp p0 + Phi_pv v0`.
pub fn cw_stm_position(t: f64, n: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = (n * t).sin_cos();
    let nt = n * t;
    let phi_pp = Matrix3::new(
        4.0 - 3.0 * c, 0.0, 0.0,
        6.0 * (s - nt), 1.0, 0.0,
        0.0, 0.0, c,
    );
    let phi_pv = Matrix3::new(
        s / n, 2.0 * (1.0 - c) / n, 0.0,
        -2.0 * (1.0 - c) / n, (4.0 * s - 3.0 * nt) / n, 0.0,
        0.0, 0.0, s / n,
    );
    (phi_pp, phi_pv)
}

/// Minimum free-flight separation margin over a sampled horizon.
/// Returns `(min ||p(t)|| - keep_out, argmin t)`; ties take the
/// smallest `t`.
pub fn psm_scan(
    p0: &Vector3<f64>,
    v0: &Vector3<f64>,
    n: f64,
    keep_out: f64,
    horizon: f64,
    grid_dt: f64,
) -> (f64, f64) {
    let steps = (horizon / grid_dt).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let t = k as f64 * grid_dt;
        let d = fft_position(p0, v0, t, n).norm();
        if d < best.0 {
            best = (d, t);
        }
    }
    (best.0 - keep_out, best.1)
}

/// PSM constraint value and argmin time for a state.
pub fn psm_h(state: &SimState, cp: &ConstraintParams, n: f64) -> (f64, f64) {
    psm_scan(
        &state.p,
        &state.v,
        n,
        cp.keep_out_radius(),
        cp.t_f_psm,
        cp.psm_grid_dt,
    )
}

// ---------------------------------------------------------------------------
// Constraint values

/// Evaluates the (post-transformation) constraint value `h(x)`.
pub fn eval_h(id: ConstraintId, state: &SimState, cp: &ConstraintParams, sp: &SimParams) -> f64 {
    let n = sp.vehicle.n;
    match id {
        ConstraintId::Collision => {
            let d = state.p.norm();
            let radicand = 2.0 * cp.a_max * (d - cp.keep_out_radius()).max(0.0);
            radicand.sqrt() + radial_speed(&state.p, &state.v)
        }
        ConstraintId::Speed => cp.nu0 + cp.nu1 * state.p.norm() - state.v.norm(),
        ConstraintId::Kiz => {
            let d = state.p.norm();
            let radicand = 2.0 * cp.a_max * (cp.r_max - d).max(0.0);
            radicand.sqrt() - radial_speed(&state.p, &state.v)
        }
        ConstraintId::Psm => psm_h(state, cp, n).0,
        ConstraintId::VxLim => cp.v_max * cp.v_max - state.v.x * state.v.x,
        ConstraintId::VyLim => cp.v_max * cp.v_max - state.v.y * state.v.y,
        ConstraintId::VzLim => cp.v_max * cp.v_max - state.v.z * state.v.z,
        ConstraintId::AttEz => {
            let boresight = state.q.rotate(&cp.boresight_body);
            let theta_ez = incidence_angle(&boresight, &state.sun_dir());
            theta_ez - 0.5 * cp.alpha_fov - cp.beta_buf
        }
        ConstraintId::Temp => {
            let n_hill = state.q.rotate(&sp.thermal.normal_body);
            let theta_si = incidence_angle(&n_hill, &state.sun_dir());
            let theta_ei = incidence_angle(&n_hill, &EARTH_DIR);
            use std::f64::consts::FRAC_PI_2;
            cp.t_max_c - state.temp_c
                - cp.delta0 * (FRAC_PI_2 - theta_si)
                - cp.delta1 * (FRAC_PI_2 - theta_ei)
        }
        ConstraintId::Batt => {
            let panel = state.q.rotate(&sp.power.panel_normal_body);
            let theta_si = incidence_angle(&panel, &state.sun_dir());
            state.energy_kj - cp.e_min_kj - cp.delta2 * theta_si
        }
        ConstraintId::W1Lim => cp.omega_max * cp.omega_max - state.w.x * state.w.x,
        ConstraintId::W2Lim => cp.omega_max * cp.omega_max - state.w.y * state.w.y,
        ConstraintId::W3Lim => cp.omega_max * cp.omega_max - state.w.z * state.w.z,
    }
}

fn radial_speed(p: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    v.dot(p) / p.norm()
}

// ---------------------------------------------------------------------------
// Barrier rows

/// Builds the linear-in-`u` barrier condition for a constraint.
///
/// Returns `DegenerateGradient` when no control component appears in
/// the row; callers drop the row for that step (the constraint is not
/// approaching its boundary along directions the control can affect).
pub fn barrier_row(
    spec: &ConstraintSpec,
    state: &SimState,
    cp: &ConstraintParams,
    sp: &SimParams,
) -> Result<BarrierRow> {
    let row = match spec.id {
        ConstraintId::Collision => {
            let (dh_dp, dh_dv) = collision_gradient(state, cp, 1.0);
            translational_row(spec, state, sp, dh_dp, dh_dv, eval_h(spec.id, state, cp, sp))
        }
        ConstraintId::Kiz => {
            let (dh_dp, dh_dv) = kiz_gradient(state, cp);
            translational_row(spec, state, sp, dh_dp, dh_dv, eval_h(spec.id, state, cp, sp))
        }
        ConstraintId::Speed => {
            let d = state.p.norm();
            let vn = state.v.norm();
            let dh_dp = cp.nu1 * state.p / d;
            let dh_dv = if vn > 1e-12 {
                -state.v / vn
            } else {
                Vector3::zeros()
            };
            translational_row(spec, state, sp, dh_dp, dh_dv, eval_h(spec.id, state, cp, sp))
        }
        ConstraintId::Psm => {
            let (h, t_star) = psm_h(state, cp, sp.vehicle.n);
            let (phi_pp, phi_pv) = cw_stm_position(t_star, sp.vehicle.n);
            let p_star = phi_pp * state.p + phi_pv * state.v;
            let dir = p_star / p_star.norm();
            let dh_dp = phi_pp.transpose() * dir;
            let dh_dv = phi_pv.transpose() * dir;
            translational_row(spec, state, sp, dh_dp, dh_dv, h)
        }
        ConstraintId::VxLim | ConstraintId::VyLim | ConstraintId::VzLim => {
            let axis = match spec.id {
                ConstraintId::VxLim => 0,
                ConstraintId::VyLim => 1,
                _ => 2,
            };
            let mut dh_dv = Vector3::zeros();
            dh_dv[axis] = -2.0 * state.v[axis];
            translational_row(
                spec,
                state,
                sp,
                Vector3::zeros(),
                dh_dv,
                eval_h(spec.id, state, cp, sp),
            )
        }
        ConstraintId::W1Lim | ConstraintId::W2Lim | ConstraintId::W3Lim => {
            angular_limit_row(spec, state, cp, sp)
        }
        ConstraintId::AttEz => att_ez_row(spec, state, cp, sp),
        ConstraintId::Temp => temp_row(spec, state, cp, sp),
        ConstraintId::Batt => batt_row(spec, state, cp, sp),
    };
    if row.grad_u.iter().all(|g| g.abs() < 1e-14) {
        return Err(Error::DegenerateGradient);
    }
    Ok(row)
}

/// Gradient of the braking-law safe-separation constraint. `sign` is
/// +1 for collision (outward) and reused negated by the keep-in zone.
fn collision_gradient(
    state: &SimState,
    cp: &ConstraintParams,
    _sign: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let d = state.p.norm();
    let p_hat = state.p / d;
    let margin = d - cp.keep_out_radius();
    let sqrt_term = (2.0 * cp.a_max * margin.max(0.0)).sqrt();
    let mut dh_dp = dvpr_dp(&state.p, &state.v);
    if sqrt_term > 1e-9 {
        dh_dp += (cp.a_max / sqrt_term) * p_hat;
    }
    (dh_dp, p_hat)
}

fn kiz_gradient(state: &SimState, cp: &ConstraintParams) -> (Vector3<f64>, Vector3<f64>) {
    let d = state.p.norm();
    let p_hat = state.p / d;
    let sqrt_term = (2.0 * cp.a_max * (cp.r_max - d).max(0.0)).sqrt();
    let mut dh_dp = -dvpr_dp(&state.p, &state.v);
    if sqrt_term > 1e-9 {
        dh_dp -= (cp.a_max / sqrt_term) * p_hat;
    }
    (dh_dp, -p_hat)
}

/// d(v . p / ||p||)/dp.
fn dvpr_dp(p: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let d = p.norm();
    v / d - (v.dot(p) / (d * d * d)) * p
}

/// Relative-degree-one row for a constraint depending on (p, v) only:
/// `h_dot = dh/dp . v + dh/dv . (a_nat + R F / m)`.
fn translational_row(
    spec: &ConstraintSpec,
    state: &SimState,
    sp: &SimParams,
    dh_dp: Vector3<f64>,
    dh_dv: Vector3<f64>,
    h: f64,
) -> BarrierRow {
    let a_nat = cw_natural_accel(&state.p, &state.v, sp.vehicle.n);
    let f_coeff = state.q.rotate_inv(&dh_dv) / sp.vehicle.mass;
    BarrierRow {
        grad_u: [f_coeff.x, f_coeff.y, f_coeff.z, 0.0, 0.0, 0.0],
        drift: dh_dp.dot(&state.v) + dh_dv.dot(&a_nat),
        strengthen: spec.alpha.eval(h),
        h_value: h,
        psi_value: h,
    }
}

/// Gyroscopic part of Euler's equations, `omega_dot` with zero torque.
fn gyro_accel(state: &SimState, sp: &SimParams) -> Vector3<f64> {
    let vp = &sp.vehicle;
    let w = &state.w;
    Vector3::new(
        (vp.j2 - vp.j3) * w.y * w.z / vp.j1,
        (vp.j3 - vp.j1) * w.x * w.z / vp.j2,
        (vp.j1 - vp.j2) * w.x * w.y / vp.j3,
    )
}

fn angular_limit_row(
    spec: &ConstraintSpec,
    state: &SimState,
    cp: &ConstraintParams,
    sp: &SimParams,
) -> BarrierRow {
    let axis = match spec.id {
        ConstraintId::W1Lim => 0,
        ConstraintId::W2Lim => 1,
        _ => 2,
    };
    let j = [sp.vehicle.j1, sp.vehicle.j2, sp.vehicle.j3][axis];
    let w_i = state.w[axis];
    let h = cp.omega_max * cp.omega_max - w_i * w_i;
    let mut grad_u = [0.0; 6];
    grad_u[3 + axis] = -2.0 * w_i / j;
    BarrierRow {
        grad_u,
        drift: -2.0 * w_i * gyro_accel(state, sp)[axis],
        strengthen: spec.alpha.eval(h),
        h_value: h,
        psi_value: h,
    }
}

// ---------------------------------------------------------------------------
// Incidence-angle kinematics shared by the relative-degree-two rows

/// A target direction in Hill's frame with its first two time
/// derivatives along the flow.
struct TargetDir {
    r: Vector3<f64>,
    r_dot: Vector3<f64>,
    r_ddot: Vector3<f64>,
}

impl TargetDir {
    fn sun(state: &SimState, n: f64) -> Self {
        let r = state.sun_dir();
        let theta_dot = -n;
        Self {
            r,
            r_dot: theta_dot * Vector3::new(-state.theta_s.sin(), state.theta_s.cos(), 0.0),
            // theta_S moves at constant rate, so r_ddot = -theta_dot^2 r.
            r_ddot: -theta_dot * theta_dot * r,
        }
    }

    fn earth() -> Self {
        Self {
            r: EARTH_DIR,
            r_dot: Vector3::zeros(),
            r_ddot: Vector3::zeros(),
        }
    }
}

/// Incidence angle between a body-fixed unit vector and a moving
/// target direction, with drift and control derivatives up to second
/// order.
struct IncidenceKin {
    cos: f64,
    cos_dot: f64,
    theta: f64,
    theta_dot: f64,
    theta_ddot_drift: f64,
    /// d(theta_ddot)/d(tau), one entry per wheel axis.
    dtheta_ddot_dtau: Vector3<f64>,
}

fn incidence_kin(state: &SimState, body_axis: &Vector3<f64>, target: &TargetDir, sp: &SimParams) -> IncidenceKin {
    let b = body_axis;
    let w = &state.w;
    let q = &state.q;
    let m = q.rotate_inv(&target.r);
    let m_dot = q.rotate_inv(&target.r_dot);
    let n_hat = q.rotate(b);
    let wxb = w.cross(b);

    let cos = b.dot(&m);
    let cos_dot = wxb.dot(&m) + n_hat.dot(&target.r_dot);
    let gyro = gyro_accel(state, sp);
    let cos_ddot_drift = w.cross(&wxb).dot(&m)
        + gyro.cross(b).dot(&m)
        + 2.0 * wxb.dot(&m_dot)
        + n_hat.dot(&target.r_ddot);
    // d(cos_ddot)/d(omega_dot) = b x m; omega_dot = J^-1 tau + gyro.
    let bxm = b.cross(&m);
    let dcos_ddot_dtau = Vector3::new(
        bxm.x / sp.vehicle.j1,
        bxm.y / sp.vehicle.j2,
        bxm.z / sp.vehicle.j3,
    );

    let c = cos.clamp(-1.0, 1.0);
    let sin = (1.0 - c * c).max(1e-18).sqrt();
    IncidenceKin {
        cos,
        cos_dot,
        theta: c.acos(),
        theta_dot: -cos_dot / sin,
        theta_ddot_drift: -cos_ddot_drift / sin - c * cos_dot * cos_dot / (sin * sin * sin),
        dtheta_ddot_dtau: -dcos_ddot_dtau / sin,
    }
}

/// Assembles the lifted (`Psi_2`) row from `h`, `h_dot`, the drift of
/// `h_ddot`, and the control coefficients of `h_ddot`.
fn lifted_row(
    spec: &ConstraintSpec,
    h: f64,
    h_dot: f64,
    h_ddot_drift: f64,
    dh_ddot_dtau: Vector3<f64>,
) -> BarrierRow {
    let psi1 = h_dot + spec.alpha.eval(h);
    // Psi_1_dot = h_ddot + alpha'(h) h_dot.
    let drift = h_ddot_drift + spec.alpha.slope(h) * h_dot;
    BarrierRow {
        grad_u: [
            0.0,
            0.0,
            0.0,
            dh_ddot_dtau.x,
            dh_ddot_dtau.y,
            dh_ddot_dtau.z,
        ],
        drift,
        strengthen: spec.alpha.eval(psi1),
        h_value: h,
        psi_value: psi1,
    }
}

fn att_ez_row(spec: &ConstraintSpec, state: &SimState, cp: &ConstraintParams, sp: &SimParams) -> BarrierRow {
    let sun = TargetDir::sun(state, sp.vehicle.n);
    let kin = incidence_kin(state, &cp.boresight_body, &sun, sp);
    let h = kin.theta - 0.5 * cp.alpha_fov - cp.beta_buf;
    lifted_row(spec, h, kin.theta_dot, kin.theta_ddot_drift, kin.dtheta_ddot_dtau)
}

fn temp_row(spec: &ConstraintSpec, state: &SimState, cp: &ConstraintParams, sp: &SimParams) -> BarrierRow {
    use std::f64::consts::FRAC_PI_2;
    let th = &sp.thermal;
    let sun = TargetDir::sun(state, sp.vehicle.n);
    let kin_s = incidence_kin(state, &th.normal_body, &sun, sp);
    let kin_e = incidence_kin(state, &th.normal_body, &TargetDir::earth(), sp);

    let temp_k = state.temp_c + CELSIUS_TO_KELVIN;
    let heat_cap = th.m_n * th.c_p;
    let n_hill = state.q.rotate(&th.normal_body);
    let t_dot = th.temperature_deriv(temp_k, &n_hill, &state.sun_dir());

    // Q_dot: clamped source terms switch with the incidence cosines;
    // rejection feeds back through T itself.
    let solar_gain = th.alpha_abs * th.area * th.solar_const;
    let earth_gain = 0.8
        * (th.alpha_abs * th.area * th.solar_const * th.albedo_factor
            + th.sigma * th.eps * th.area * th.t_earth.powi(4));
    let mut q_dot = -4.0 * th.sigma * th.eps * th.area * temp_k.powi(3) * t_dot;
    if kin_s.cos > 0.0 {
        q_dot += solar_gain * kin_s.cos_dot;
    }
    if kin_e.cos > 0.0 {
        q_dot += earth_gain * kin_e.cos_dot;
    }
    let t_ddot = q_dot / heat_cap;

    let h = cp.t_max_c - state.temp_c
        - cp.delta0 * (FRAC_PI_2 - kin_s.theta)
        - cp.delta1 * (FRAC_PI_2 - kin_e.theta);
    let h_dot = -t_dot + cp.delta0 * kin_s.theta_dot + cp.delta1 * kin_e.theta_dot;
    let h_ddot_drift =
        -t_ddot + cp.delta0 * kin_s.theta_ddot_drift + cp.delta1 * kin_e.theta_ddot_drift;
    let dh_ddot_dtau = cp.delta0 * kin_s.dtheta_ddot_dtau + cp.delta1 * kin_e.dtheta_ddot_dtau;
    lifted_row(spec, h, h_dot, h_ddot_drift, dh_ddot_dtau)
}

fn batt_row(spec: &ConstraintSpec, state: &SimState, cp: &ConstraintParams, sp: &SimParams) -> BarrierRow {
    let pw = &sp.power;
    let sun = TargetDir::sun(state, sp.vehicle.n);
    let kin = incidence_kin(state, &pw.panel_normal_body, &sun, sp);

    let e_dot = pw.energy_deriv(kin.theta);
    // E_ddot from the clamped generation term, kJ/s^2.
    let e_ddot = if kin.cos > 0.0 {
        pw.p_ideal * pw.degradation * pw.area * kin.cos_dot / 1000.0
    } else {
        0.0
    };

    let h = state.energy_kj - cp.e_min_kj - cp.delta2 * kin.theta;
    let h_dot = e_dot - cp.delta2 * kin.theta_dot;
    let h_ddot_drift = e_ddot - cp.delta2 * kin.theta_ddot_drift;
    let dh_ddot_dtau = -cp.delta2 * kin.dtheta_ddot_dtau;
    lifted_row(spec, h, h_dot, h_ddot_drift, dh_ddot_dtau)
}
