//! Baseline controllers: an LQR translation loop and a PD attitude
//! loop tuned to push against the safety boundary, scripted zero and
//! random policies, and a line-delimited JSON bridge to an external
//! policy process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::time::Duration;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, Matrix6, Matrix6x3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat_dyn::{ControlInput, Quaternion, SimState, VehicleParams};

#[derive(Debug, Clone)]
pub struct LqrParams {
    /// State weight over [p, v].
    pub q: Matrix6<f64>,
    /// Control weight over thrust.
    pub r: Matrix3<f64>,
    pub target_p: Vector3<f64>,
    pub target_v: Vector3<f64>,
}

impl Default for LqrParams {
    fn default() -> Self {
        let mut q = Matrix6::zeros();
        for i in 0..3 {
            q[(i, i)] = 1e-4;
            q[(i + 3, i + 3)] = 1.0;
        }
        Self {
            q,
            r: Matrix3::identity() * 1e2,
            target_p: Vector3::zeros(),
            target_v: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdParams {
    pub kp: f64,
    pub kd: f64,
    #[serde(skip)]
    pub target_q: Quaternion,
}

impl Default for PdParams {
    fn default() -> Self {
        Self {
            kp: 0.02,
            kd: 0.2,
            target_q: Quaternion::IDENTITY,
        }
    }
}

/// Relative-motion plant over [p, v] with thrust input in newtons.
pub fn cw_matrices(n: f64, mass: f64) -> (Matrix6<f64>, Matrix6x3<f64>) {
    let mut a = Matrix6::zeros();
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    a[(3, 0)] = 3.0 * n * n;
    a[(3, 4)] = 2.0 * n;
    a[(4, 3)] = -2.0 * n;
    a[(5, 2)] = -n * n;
    let mut b = Matrix6x3::zeros();
    for i in 0..3 {
        b[(i + 3, i)] = 1.0 / mass;
    }
    (a, b)
}

/// Solves `A_cl' P + P A_cl = -S` for symmetric P by the Kronecker
/// vectorization (the plant is 6x6, so the linear system is 36x36).
fn lyapunov(a_cl: &Matrix6<f64>, s: &Matrix6<f64>) -> Option<Matrix6<f64>> {
    let at = a_cl.transpose();
    let mut m = DMatrix::zeros(36, 36);
    // vec(A' P) = (I (x) A') vec(P); vec(P A) = (A' (x) I) vec(P),
    // with column-major vec.
    for col in 0..6 {
        for row in 0..6 {
            let vi = col * 6 + row;
            for k in 0..6 {
                m[(vi, col * 6 + k)] += at[(row, k)];
                m[(vi, k * 6 + row)] += at[(col, k)];
            }
        }
    }
    let mut rhs = DVector::zeros(36);
    for col in 0..6 {
        for row in 0..6 {
            rhs[col * 6 + row] = -s[(row, col)];
        }
    }
    let sol = m.lu().solve(&rhs)?;
    let mut p = Matrix6::zeros();
    for col in 0..6 {
        for row in 0..6 {
            p[(row, col)] = sol[col * 6 + row];
        }
    }
    // Symmetrize away the solver's rounding.
    Some((p + p.transpose()) * 0.5)
}

/// Continuous-time Riccati solve by Kleinman iteration from a
/// stabilizing spring-damper seed. Returns the gain and the value
/// matrix.
pub fn care(
    a: &Matrix6<f64>,
    b: &Matrix6x3<f64>,
    q: &Matrix6<f64>,
    r: &Matrix3<f64>,
    mass: f64,
) -> Result<(Matrix3x6<f64>, Matrix6<f64>)> {
    let r_inv = r.try_inverse().ok_or(Error::RiccatiDivergence)?;
    // Seed: per-axis spring-damper at 0.05 rad/s, damping 0.7. This
    // stabilizes the plant for orbital rates well below the loop
    // bandwidth.
    let (w0, zeta) = (0.05, 0.7);
    let mut k = Matrix3x6::zeros();
    for i in 0..3 {
        k[(i, i)] = mass * w0 * w0;
        k[(i, i + 3)] = mass * 2.0 * zeta * w0;
    }
    for iter in 0..200 {
        let a_cl = a - b * k;
        let s = q + k.transpose() * r * k;
        let p = lyapunov(&a_cl, &s).ok_or(Error::RiccatiDivergence)?;
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::RiccatiDivergence);
        }
        let k_next = r_inv * b.transpose() * p;
        let delta = (k_next - k).abs().max();
        k = k_next;
        if delta < 1e-13 && iter > 0 {
            // Verify the Riccati residual before accepting.
            let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
            if res.abs().max() < 1e-8 {
                return Ok((k, p));
            }
        }
    }
    Err(Error::RiccatiDivergence)
}

/// LQR thrust gain for the relative-motion plant.
pub fn lqr_gain(params: &LqrParams, n: f64, mass: f64) -> Result<Matrix3x6<f64>> {
    let (a, b) = cw_matrices(n, mass);
    care(&a, &b, &params.q, &params.r, mass).map(|(k, _)| k)
}

/// LQR thrust command toward the target, clamped to the thrust box so
/// any later filter delta is attributable to safety, not saturation.
pub fn lqr_control(
    state: &SimState,
    params: &LqrParams,
    gain: &Matrix3x6<f64>,
    vp: &VehicleParams,
) -> Vector3<f64> {
    let x = Vector6::new(
        state.p.x - params.target_p.x,
        state.p.y - params.target_p.y,
        state.p.z - params.target_p.z,
        state.v.x - params.target_v.x,
        state.v.y - params.target_v.y,
        state.v.z - params.target_v.z,
    );
    let f = -gain * x;
    f.map(|c| c.clamp(-vp.f_max, vp.f_max))
}

/// PD attitude torque toward the target quaternion, clamped to the
/// torque box. Invariant under the quaternion double cover.
pub fn pd_attitude(state: &SimState, params: &PdParams, vp: &VehicleParams) -> Vector3<f64> {
    let mut q_err = params.target_q.conjugate().mul(&state.q);
    if q_err.s < 0.0 {
        q_err = Quaternion::new(-q_err.v.x, -q_err.v.y, -q_err.v.z, -q_err.s);
    }
    let tau = -params.kp * q_err.v - params.kd * state.w;
    tau.map(|c| c.clamp(-vp.tau_max, vp.tau_max))
}

/// Handle to an external policy child process speaking line-delimited
/// JSON over stdin/stdout.
pub struct PolicyBridge {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<std::io::Result<String>>,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct ObsRecord<'a> {
    t: f64,
    obs: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionRecord {
    #[serde(rename = "F")]
    f: [f64; 3],
    tau: [f64; 3],
}

#[derive(Deserialize)]
struct Handshake {
    v: u32,
}

impl PolicyBridge {
    /// Spawns `cmd` through the shell and performs the version
    /// handshake: the child's first output line must be `{"v":1}`.
    pub fn spawn(cmd: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let bridge = Self {
            child,
            stdin,
            rx,
            timeout: Duration::from_secs(5),
        };
        let line = bridge.recv_line()?;
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedAction(format!("handshake: {e}")))?;
        if hs.v != 1 {
            return Err(Error::MalformedAction(format!(
                "unsupported bridge version {}",
                hs.v
            )));
        }
        Ok(bridge)
    }

    fn recv_line(&self) -> Result<String> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Io(e)),
            Err(_) => Err(Error::BridgeTimeout),
        }
    }

    /// One observation out, one action back.
    pub fn act(&mut self, t: f64, obs: &[f64]) -> Result<ControlInput> {
        let rec = serde_json::to_string(&ObsRecord { t, obs })?;
        writeln!(self.stdin, "{rec}")?;
        self.stdin.flush()?;
        let line = self.recv_line()?;
        let action: ActionRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedAction(e.to_string()))?;
        let u = ControlInput {
            f: Vector3::from_row_slice(&action.f),
            tau: Vector3::from_row_slice(&action.tau),
        };
        if !u.is_finite() {
            return Err(Error::MalformedAction("non-finite action".into()));
        }
        Ok(u)
    }
}

impl Drop for PolicyBridge {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A policy producing desired controls each outer step.
pub enum Controller {
    Zero,
    /// Uniform in the actuation box, seeded per episode.
    Random(ChaCha12Rng),
    LqrPd {
        lqr: LqrParams,
        gain: Matrix3x6<f64>,
        pd: PdParams,
    },
    External(PolicyBridge),
}

impl Controller {
    pub fn zero() -> Self {
        Controller::Zero
    }

    pub fn random(seed: u64) -> Self {
        Controller::Random(ChaCha12Rng::seed_from_u64(seed))
    }

    pub fn lqr_pd(lqr: LqrParams, pd: PdParams, n: f64, mass: f64) -> Result<Self> {
        let gain = lqr_gain(&lqr, n, mass)?;
        Ok(Controller::LqrPd { lqr, gain, pd })
    }

    pub fn external(cmd: &str) -> Result<Self> {
        Ok(Controller::External(PolicyBridge::spawn(cmd)?))
    }

    /// Desired control for the coming outer step. `obs` is the flat
    /// observation vector as shown to an external policy.
    pub fn act(&mut self, state: &SimState, obs: &[f64], vp: &VehicleParams) -> Result<ControlInput> {
        match self {
            Controller::Zero => Ok(ControlInput::ZERO),
            Controller::Random(rng) => {
                let mut u = [0.0; 6];
                for (i, c) in u.iter_mut().enumerate() {
                    let lim = if i < 3 { vp.f_max } else { vp.tau_max };
                    *c = rng.gen_range(-lim..=lim);
                }
                Ok(ControlInput::from_slice(&u))
            }
            Controller::LqrPd { lqr, gain, pd } => Ok(ControlInput {
                f: lqr_control(state, lqr, gain, vp),
                tau: pd_attitude(state, pd, vp),
            }),
            Controller::External(bridge) => bridge.act(state.t, obs),
        }
    }
}
