//! Quaternion algebra, 6-DoF equations of motion, and the fixed-step
//! RK4 integrator.
//!
//! Translational motion uses the Clohessy-Wiltshire linearization in
//! Hill's frame; attitude uses Euler's rigid body equations with a
//! scalar-last quaternion. Thrust is commanded in the body frame and
//! rotated into Hill's frame by the current attitude.
//!
//! Convention (pinned, used everywhere): `q` is scalar-last
//! `[q1,q2,q3,q4]` with Hamilton product, kinematics
//! `q_dot = 1/2 q (x) omega` for body rates, and the sandwich
//! `q (x) v (x) q*` maps body-frame vectors into Hill's frame.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal_power::{sun_vector, PowerParams, ThermalNodeParams, CELSIUS_TO_KELVIN};

/// Scalar-last unit quaternion, identity is `[0,0,0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    /// Vector part `[q1,q2,q3]`.
    pub v: Vector3<f64>,
    /// Scalar part `q4`.
    pub s: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        v: Vector3::new(0.0, 0.0, 0.0),
        s: 1.0,
    };

    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self {
            v: Vector3::new(q1, q2, q3),
            s: q4,
        }
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let a = axis.normalize();
        let half = 0.5 * angle;
        Self {
            v: a * half.sin(),
            s: half.cos(),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.v.x, self.v.y, self.v.z, self.s]
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.s * self.s).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            v: self.v / n,
            s: self.s / n,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            v: -self.v,
            s: self.s,
        }
    }

    /// Hamilton product `self (x) rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Quaternion {
        Quaternion {
            v: self.s * rhs.v + rhs.s * self.v + self.v.cross(&rhs.v),
            s: self.s * rhs.s - self.v.dot(&rhs.v),
        }
    }

    /// Rotates a body-frame vector into Hill's frame:
    /// `p_hill = q (x) p (x) q*`.
    pub fn rotate(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let pq = Quaternion { v: *p, s: 0.0 };
        self.mul(&pq).mul(&self.conjugate()).v
    }

    /// Inverse mapping, Hill's frame into the body frame.
    pub fn rotate_inv(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.conjugate().rotate(p)
    }

    /// Quaternion kinematics `q_dot = 1/2 Xi(q) omega` for body rates.
    pub fn deriv(&self, w: &Vector3<f64>) -> [f64; 4] {
        let wq = Quaternion { v: *w, s: 0.0 };
        let d = self.mul(&wq);
        [0.5 * d.v.x, 0.5 * d.v.y, 0.5 * d.v.z, 0.5 * d.s]
    }

    /// Uniformly random unit quaternion (Shoemake's method).
    pub fn random_uniform<R: rand::Rng>(rng: &mut R) -> Self {
        use std::f64::consts::TAU;
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen::<f64>() * TAU;
        let u3: f64 = rng.gen::<f64>() * TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        Self::new(a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos())
    }

    /// Rotation angle between this attitude and another, rad.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        let e = self.conjugate().mul(other);
        2.0 * e.v.norm().atan2(e.s.abs())
    }
}

/// Body-frame thrust and reaction wheel torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Thrust, N, body frame.
    pub f: Vector3<f64>,
    /// Wheel torque, N m, body frame.
    pub tau: Vector3<f64>,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        f: Vector3::new(0.0, 0.0, 0.0),
        tau: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn from_slice(u: &[f64; 6]) -> Self {
        Self {
            f: Vector3::new(u[0], u[1], u[2]),
            tau: Vector3::new(u[3], u[4], u[5]),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.f.x, self.f.y, self.f.z, self.tau.x, self.tau.y, self.tau.z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
    }

    /// Componentwise clamp into the actuation box.
    pub fn clamped(&self, params: &VehicleParams) -> Self {
        Self {
            f: self.f.map(|x| x.clamp(-params.f_max, params.f_max)),
            tau: self.tau.map(|x| x.clamp(-params.tau_max, params.tau_max)),
        }
    }
}

/// Deputy mass properties, orbit rate, and actuation limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Deputy mass, kg.
    pub mass: f64,
    /// Mean motion of the chief's orbit, rad/s.
    pub n: f64,
    /// Principal moments of inertia, kg m^2.
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    /// Reaction wheel spin axis inertia, kg m^2.
    pub wheel_inertia: f64,
    /// Thrust limit per axis, N.
    pub f_max: f64,
    /// Wheel torque limit per axis, N m.
    pub tau_max: f64,
    /// Angular acceleration limit, rad/s^2.
    pub w_dot_max: f64,
    /// Wheel acceleration limit, rad/s^2.
    pub psi_dot_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 12.0,
            n: 0.001027,
            j1: 0.0573,
            j2: 0.0573,
            j3: 0.0573,
            wheel_inertia: 4.1e-5,
            f_max: 1.0,
            tau_max: 0.001,
            w_dot_max: 0.017453,
            psi_dot_max: 181.3,
        }
    }
}

/// Full simulation state of the deputy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Relative position, m, Hill's frame.
    pub p: Vector3<f64>,
    /// Relative velocity, m/s, Hill's frame.
    pub v: Vector3<f64>,
    /// Attitude, body frame relative to Hill's frame.
    pub q: Quaternion,
    /// Angular velocity, rad/s, body frame.
    pub w: Vector3<f64>,
    /// Tracked component temperature, deg C.
    pub temp_c: f64,
    /// Battery energy, kJ.
    pub energy_kj: f64,
    /// Sun angle from the Hill +x axis, rad, in [0, 2pi).
    pub theta_s: f64,
    /// Simulation clock, s.
    pub t: f64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.q.as_array().iter().all(|x| x.is_finite())
            && self.w.iter().all(|x| x.is_finite())
            && self.temp_c.is_finite()
            && self.energy_kj.is_finite()
            && self.theta_s.is_finite()
            && self.t.is_finite()
    }

    /// Sun direction at the current Sun angle, Hill's frame.
    pub fn sun_dir(&self) -> Vector3<f64> {
        sun_vector(self.theta_s)
    }
}

impl Default for SimState {
    /// A quiescent state in the middle of the operating envelope.
    fn default() -> Self {
        Self {
            p: Vector3::new(75.0, 0.0, 0.0),
            v: Vector3::zeros(),
            q: Quaternion::IDENTITY,
            w: Vector3::zeros(),
            temp_c: 5.0,
            energy_kj: 6.0,
            theta_s: 0.0,
            t: 0.0,
        }
    }
}

/// Everything the equations of motion need.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub vehicle: VehicleParams,
    pub thermal: ThermalNodeParams,
    pub power: PowerParams,
}

/// Attitude equations of motion: quaternion kinematics plus Euler's
/// rigid body equations with wheel torque input.
pub fn attitude_deriv(state: &SimState, tau: &Vector3<f64>, vp: &VehicleParams) -> ([f64; 4], Vector3<f64>) {
    let q_dot = state.q.deriv(&state.w);
    let w = &state.w;
    let w_dot = Vector3::new(
        ((vp.j2 - vp.j3) * w.y * w.z + tau.x) / vp.j1,
        ((vp.j3 - vp.j1) * w.x * w.z + tau.y) / vp.j2,
        ((vp.j1 - vp.j2) * w.x * w.y + tau.z) / vp.j3,
    );
    (q_dot, w_dot)
}

/// Natural Clohessy-Wiltshire acceleration (no thrust), Hill's frame.
pub fn cw_natural_accel(p: &Vector3<f64>, v: &Vector3<f64>, n: f64) -> Vector3<f64> {
    Vector3::new(
        3.0 * n * n * p.x + 2.0 * n * v.y,
        -2.0 * n * v.x,
        -n * n * p.z,
    )
}

/// Translational acceleration: CW natural motion plus body-frame
/// thrust rotated into Hill's frame.
pub fn translational_deriv(state: &SimState, f: &Vector3<f64>, vp: &VehicleParams) -> Vector3<f64> {
    cw_natural_accel(&state.p, &state.v, vp.n) + state.q.rotate(f) / vp.mass
}

/// Time derivative of the packed 16-component state
/// `[q(4), w(3), p(3), v(3), T, E, theta_S]`.
fn full_deriv(state: &SimState, u: &ControlInput, params: &SimParams) -> [f64; 16] {
    let (q_dot, w_dot) = attitude_deriv(state, &u.tau, &params.vehicle);
    let accel = translational_deriv(state, &u.f, &params.vehicle);
    let r_sun = state.sun_dir();

    let n_hill = state.q.rotate(&params.thermal.normal_body);
    let t_dot = params
        .thermal
        .temperature_deriv(state.temp_c + CELSIUS_TO_KELVIN, &n_hill, &r_sun);

    let panel_hill = state.q.rotate(&params.power.panel_normal_body);
    let theta_si = crate::thermal_power::incidence_angle(&panel_hill, &r_sun);
    let e_dot = params.power.energy_deriv(theta_si);

    [
        q_dot[0], q_dot[1], q_dot[2], q_dot[3],
        w_dot.x, w_dot.y, w_dot.z,
        state.v.x, state.v.y, state.v.z,
        accel.x, accel.y, accel.z,
        t_dot,
        e_dot,
        -params.vehicle.n,
    ]
}

fn pack(state: &SimState) -> [f64; 16] {
    let q = state.q.as_array();
    [
        q[0], q[1], q[2], q[3],
        state.w.x, state.w.y, state.w.z,
        state.p.x, state.p.y, state.p.z,
        state.v.x, state.v.y, state.v.z,
        state.temp_c,
        state.energy_kj,
        state.theta_s,
    ]
}

fn unpack(y: &[f64; 16], t: f64) -> SimState {
    SimState {
        q: Quaternion::new(y[0], y[1], y[2], y[3]),
        w: Vector3::new(y[4], y[5], y[6]),
        p: Vector3::new(y[7], y[8], y[9]),
        v: Vector3::new(y[10], y[11], y[12]),
        temp_c: y[13],
        energy_kj: y[14],
        theta_s: y[15],
        t,
    }
}

/// One classical RK4 step with zero-order-hold control. The quaternion
/// is renormalized afterwards and the Sun angle wrapped to [0, 2pi).
pub fn step_rk4(state: &SimState, u: &ControlInput, dt: f64, params: &SimParams) -> Result<SimState> {
    debug_assert!(dt > 0.0);
    let y0 = pack(state);
    let k1 = full_deriv(state, u, params);
    let k2 = full_deriv(&unpack(&add_scaled(&y0, &k1, 0.5 * dt), state.t + 0.5 * dt), u, params);
    let k3 = full_deriv(&unpack(&add_scaled(&y0, &k2, 0.5 * dt), state.t + 0.5 * dt), u, params);
    let k4 = full_deriv(&unpack(&add_scaled(&y0, &k3, dt), state.t + dt), u, params);

    let mut y = [0.0; 16];
    for i in 0..16 {
        y[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut next = unpack(&y, state.t + dt);
    next.q = next.q.normalized();
    next.theta_s = next.theta_s.rem_euclid(std::f64::consts::TAU);
    if !next.is_finite() {
        return Err(Error::NonFiniteState);
    }
    Ok(next)
}

fn add_scaled(y: &[f64; 16], k: &[f64; 16], h: f64) -> [f64; 16] {
    let mut out = [0.0; 16];
    for i in 0..16 {
        out[i] = y[i] + h * k[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state_at(p: Vector3<f64>, v: Vector3<f64>) -> SimState {
        SimState {
            p,
            v,
            q: Quaternion::IDENTITY,
            w: Vector3::zeros(),
            temp_c: 5.0,
            energy_kj: 6.0,
            theta_s: 0.0,
            t: 0.0,
        }
    }

    /// Rotation matrix built directly from quaternion components,
    /// independent of the Hamilton-sandwich path.
    fn rotation_matrix(q: &Quaternion) -> nalgebra::Matrix3<f64> {
        let (q1, q2, q3, q4) = (q.v.x, q.v.y, q.v.z, q.s);
        nalgebra::Matrix3::new(
            1.0 - 2.0 * (q2 * q2 + q3 * q3),
            2.0 * (q1 * q2 - q3 * q4),
            2.0 * (q1 * q3 + q2 * q4),
            2.0 * (q1 * q2 + q3 * q4),
            1.0 - 2.0 * (q1 * q1 + q3 * q3),
            2.0 * (q2 * q3 - q1 * q4),
            2.0 * (q1 * q3 - q2 * q4),
            2.0 * (q2 * q3 + q1 * q4),
            1.0 - 2.0 * (q1 * q1 + q2 * q2),
        )
    }

    #[test]
    fn rotate_identity_and_zero() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_relative_eq!(Quaternion::IDENTITY.rotate(&p), p);
        let q = Quaternion::from_axis_angle(&Vector3::new(0.3, -0.5, 0.8), 1.1);
        assert_relative_eq!(q.rotate(&Vector3::zeros()), Vector3::zeros());
    }

    #[test]
    fn rotate_quarter_turn_about_z() {
        let q = Quaternion::from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        let r = q.rotate(&Vector3::x());
        assert_relative_eq!(r, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn rotate_matches_rotation_matrix_oracle() {
        use rand::Rng as _;
        let mut rng = rand::SeedableRng::seed_from_u64(7u64);
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        for _ in 0..200 {
            let q = Quaternion::random_uniform(rng);
            let p = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let by_quat = q.rotate(&p);
            let by_mat = rotation_matrix(&q) * p;
            assert_relative_eq!(by_quat, by_mat, epsilon = 1e-12);
            // Norm preservation.
            assert_relative_eq!(by_quat.norm(), p.norm(), epsilon = 1e-12);
            // Inverse really inverts.
            assert_relative_eq!(q.rotate_inv(&by_quat), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn attitude_deriv_equilibrium() {
        let vp = VehicleParams::default();
        let s = state_at(Vector3::zeros(), Vector3::zeros());
        let (q_dot, w_dot) = attitude_deriv(&s, &Vector3::zeros(), &vp);
        assert_eq!(q_dot, [0.0; 4]);
        assert_eq!(w_dot, Vector3::zeros());
    }

    #[test]
    fn attitude_deriv_hand_values() {
        let vp = VehicleParams::default();
        let mut s = state_at(Vector3::zeros(), Vector3::zeros());
        s.w = Vector3::new(0.1, 0.0, 0.0);
        let (q_dot, w_dot) = attitude_deriv(&s, &Vector3::zeros(), &vp);
        assert_relative_eq!(q_dot[0], 0.05);
        assert_eq!(&q_dot[1..], &[0.0, 0.0, 0.0]);
        assert_eq!(w_dot, Vector3::zeros());

        s.w = Vector3::zeros();
        let (_, w_dot) = attitude_deriv(&s, &Vector3::new(0.001, 0.0, 0.0), &vp);
        assert_relative_eq!(w_dot.x, 0.001 / 0.0573, epsilon = 1e-12);
        assert_relative_eq!(w_dot.x, 0.017452, epsilon = 1e-5);
    }

    #[test]
    fn translational_deriv_hand_values() {
        let vp = VehicleParams::default();
        let s = state_at(Vector3::zeros(), Vector3::zeros());
        assert_eq!(translational_deriv(&s, &Vector3::zeros(), &vp), Vector3::zeros());

        let s = state_at(Vector3::new(100.0, 0.0, 0.0), Vector3::zeros());
        let a = translational_deriv(&s, &Vector3::zeros(), &vp);
        assert_relative_eq!(a.x, 3.0 * vp.n * vp.n * 100.0, epsilon = 1e-15);
        assert_relative_eq!(a.x, 3.164e-4, epsilon = 1e-6);
        assert_eq!((a.y, a.z), (0.0, 0.0));

        let s = state_at(Vector3::zeros(), Vector3::zeros());
        let a = translational_deriv(&s, &Vector3::new(1.0, 0.0, 0.0), &vp);
        assert_relative_eq!(a, Vector3::new(1.0 / 12.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn rk4_pure_spin_rotation_angle() {
        let params = SimParams::default();
        let mut s = state_at(Vector3::new(200.0, 0.0, 0.0), Vector3::zeros());
        s.w = Vector3::new(0.0, 0.0, 0.01);
        let q0 = s.q;
        for _ in 0..100 {
            s = step_rk4(&s, &ControlInput::ZERO, 1.0, &params).unwrap();
        }
        // 0.01 rad/s for 100 s is exactly 1 rad about z.
        assert_relative_eq!(q0.angle_to(&s.q), 1.0, epsilon = 1e-8);
        assert!((s.q.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rk4_spin_rate_conserved() {
        let params = SimParams::default();
        let mut s = state_at(Vector3::new(200.0, 0.0, 0.0), Vector3::zeros());
        s.w = Vector3::new(0.01, -0.004, 0.007);
        let rate0 = s.w.norm();
        for _ in 0..1000 {
            s = step_rk4(&s, &ControlInput::ZERO, 1.0, &params).unwrap();
        }
        assert!((s.w.norm() - rate0).abs() < 1e-10);
    }

    #[test]
    fn rk4_equilibrium_translation() {
        let params = SimParams::default();
        let s0 = state_at(Vector3::zeros(), Vector3::zeros());
        let s1 = step_rk4(&s0, &ControlInput::ZERO, 1.0, &params).unwrap();
        assert_relative_eq!(s1.p, Vector3::zeros());
        assert_relative_eq!(s1.v, Vector3::zeros());
        assert_relative_eq!(s1.t, 1.0);
        assert_relative_eq!(s1.theta_s, (0.0f64 - params.vehicle.n).rem_euclid(std::f64::consts::TAU));
    }

    proptest! {
        #[test]
        fn quaternion_norm_holds_through_steps(
            wx in -0.02f64..0.02, wy in -0.02f64..0.02, wz in -0.02f64..0.02,
            tx in -0.001f64..0.001,
        ) {
            let params = SimParams::default();
            let mut s = state_at(Vector3::new(100.0, 0.0, 0.0), Vector3::zeros());
            s.w = Vector3::new(wx, wy, wz);
            let u = ControlInput { f: Vector3::zeros(), tau: Vector3::new(tx, 0.0, 0.0) };
            for _ in 0..20 {
                s = step_rk4(&s, &u, 1.0, &params).unwrap();
                prop_assert!((s.q.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
