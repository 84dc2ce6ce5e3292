//! Shared test utilities: an independent dense active-set QP solver
//! used as an oracle against the runtime operator-splitting solver, and
//! samplers for random states inside the operating envelope.
#![allow(dead_code)] // each test binary uses a different subset

use inspection_rta::asif_filter::QpProblem;
use inspection_rta::cbf_kit::ConstraintParams;
use inspection_rta::quat_dyn::{ControlInput, Quaternion, SimState, VehicleParams};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Pseudo-inverse application through an SVD, truncating small singular
/// values. Returns `pinv(b) * y`.
fn pinv_apply(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, y: &DVector<f64>) -> DVector<f64> {
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(1.0);
    let mut w = u.transpose() * y;
    for i in 0..w.len() {
        if svd.singular_values[i] > tol {
            w[i] /= svd.singular_values[i];
        } else {
            w[i] = 0.0;
        }
    }
    vt.transpose() * w
}

/// Like `pinv_apply` but for the transpose: `pinv(b') * y`.
fn pinv_t_apply(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, y: &DVector<f64>) -> DVector<f64> {
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(1.0);
    let mut w = vt * y;
    for i in 0..w.len() {
        if svd.singular_values[i] > tol {
            w[i] /= svd.singular_values[i];
        } else {
            w[i] = 0.0;
        }
    }
    u * w
}

/// Dense active-set solve of the assembled QP, written independently of
/// the runtime solver (SVD-based equality subproblems, add-one /
/// drop-one pivoting, no warm start, no operator splitting). Returns
/// the decision vector in original units, or `None` if the pivoting
/// fails to settle.
pub fn oracle_solve(qp: &QpProblem) -> Option<DVector<f64>> {
    let n = qp.dim();
    let m = qp.g.nrows();
    // Substitute v_j = sqrt(H_jj / 2) z_j so the objective is
    // v'v + c'v.
    let d: DVector<f64> = qp.h_diag.map(|h| (2.0 / h).sqrt());
    let c: DVector<f64> = DVector::from_iterator(n, (0..n).map(|j| qp.f_lin[j] * d[j]));
    let mut g = DMatrix::zeros(m, n);
    for r in 0..m {
        for j in 0..n {
            g[(r, j)] = qp.g[(r, j)] * d[j];
        }
    }
    let lb = &qp.g_lb;

    let mut active: Vec<usize> = Vec::new();
    let mut v = -0.5 * c.clone();
    for _pivot in 0..400 {
        // Most violated inactive row joins the set.
        let gv = &g * &v;
        let mut worst = (usize::MAX, -1e-9);
        for r in 0..m {
            if active.contains(&r) {
                continue;
            }
            let gap = (gv[r] - lb[r]) / lb[r].abs().max(1.0);
            if gap < worst.1 {
                worst = (r, gap);
            }
        }
        if worst.0 == usize::MAX {
            return Some(DVector::from_iterator(n, (0..n).map(|j| v[j] * d[j])));
        }
        active.push(worst.0);

        // Re-solve the equality subproblem, dropping wrong-sign
        // multipliers until the set is dual feasible.
        loop {
            let k = active.len();
            let mut b_act = DMatrix::zeros(k, n);
            let mut rhs = DVector::zeros(k);
            for (i, &r) in active.iter().enumerate() {
                for j in 0..n {
                    b_act[(i, j)] = g[(r, j)];
                }
                rhs[i] = lb[r];
            }
            let svd = b_act.clone().svd(true, true);
            // v = pinv(B) b + (I - pinv(B) B)(-c/2).
            let x0 = -0.5 * c.clone();
            let vp = pinv_apply(&svd, &rhs) + &x0 - pinv_apply(&svd, &(&b_act * &x0));
            // Stationarity 2v + c = B' lambda.
            let lam = pinv_t_apply(&svd, &(2.0 * &vp + &c));
            let lam_tol = -1e-8 * lam.amax().max(1.0);
            let mut drop = (usize::MAX, lam_tol);
            for i in 0..k {
                if lam[i] < drop.1 {
                    drop = (i, lam[i]);
                }
            }
            if drop.0 == usize::MAX {
                v = vp;
                break;
            }
            active.remove(drop.0);
            if active.is_empty() {
                v = x0;
                break;
            }
        }
    }
    None
}

/// Uniform direction on the unit sphere.
pub fn sample_direction(rng: &mut ChaCha12Rng) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let az: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(s * az.cos(), s * az.sin(), z)
}

/// A random state strictly inside the operating envelope: outside the
/// keep-out sphere, inside the keep-in zone, below the speed and rate
/// limits, thermally and electrically alive.
pub fn sample_envelope_state(rng: &mut ChaCha12Rng, cp: &ConstraintParams) -> SimState {
    let dist = rng.gen_range(25.0..700.0);
    let p = dist * sample_direction(rng);
    // Speed bounded away from zero: |v| appears in denominators of the
    // speed-limit derivatives, and finite-difference checks lose
    // accuracy to the curvature spike near v = 0.
    let vmax_here = (cp.nu0 + cp.nu1 * dist).min(cp.v_max) * 0.7;
    let v = rng.gen_range(0.02..vmax_here) * sample_direction(rng);
    let w = Vector3::new(
        rng.gen_range(-0.7..0.7) * cp.omega_max,
        rng.gen_range(-0.7..0.7) * cp.omega_max,
        rng.gen_range(-0.7..0.7) * cp.omega_max,
    );
    SimState {
        p,
        v,
        q: Quaternion::random_uniform(rng),
        w,
        temp_c: rng.gen_range(-5.0..9.0),
        energy_kj: rng.gen_range(2.0..9.0),
        theta_s: rng.gen_range(0.0..std::f64::consts::TAU),
        t: 0.0,
    }
}

/// A random control inside the actuation box.
pub fn sample_box_control(rng: &mut ChaCha12Rng, vp: &VehicleParams) -> ControlInput {
    ControlInput {
        f: Vector3::new(
            rng.gen_range(-vp.f_max..vp.f_max),
            rng.gen_range(-vp.f_max..vp.f_max),
            rng.gen_range(-vp.f_max..vp.f_max),
        ),
        tau: Vector3::new(
            rng.gen_range(-vp.tau_max..vp.tau_max),
            rng.gen_range(-vp.tau_max..vp.tau_max),
            rng.gen_range(-vp.tau_max..vp.tau_max),
        ),
    }
}
