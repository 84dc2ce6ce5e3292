//! The active set invariance filter: assemble the safety QP from
//! barrier rows and control box bounds, solve it, and return the
//! minimally modified safe control.
//!
//! The QP minimizes `||u_des - u||^2 + sum_i w_i slack_i^2` subject to
//! one barrier-condition row per constraint (relaxed by its slack when
//! the constraint allows it) and the actuation box. The solver is a
//! first-order operator-splitting iteration with diagonal
//! preconditioning and warm starting; an independent dense active-set
//! oracle lives in the test suite only.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cbf_kit::{barrier_row, BarrierRow, ConstraintId, ConstraintParams, ConstraintSpec};
use crate::error::{Error, Result};
use crate::quat_dyn::{ControlInput, SimParams, SimState};

/// What a QP row encodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKind {
    /// Barrier condition for a constraint; `hard` rows have no slack.
    Barrier { id: ConstraintId, hard: bool },
    /// One side of the actuation box for decision component `axis`
    /// (`upper` is the `u_i <= lim` side written as `-u_i >= -lim`).
    Box { axis: usize, upper: bool },
}

/// The assembled QP in decision variables `[u(6), slacks]`, all
/// inequalities one-sided: `G z >= g_lb`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub n_u: usize,
    pub n_slack: usize,
    /// Diagonal of the objective Hessian: 2 for controls, `2 w_i` for
    /// slacks.
    pub h_diag: DVector<f64>,
    /// Linear objective term (`-2 u_des` on the control block).
    pub f_lin: DVector<f64>,
    pub g: DMatrix<f64>,
    pub g_lb: DVector<f64>,
    pub row_kinds: Vec<RowKind>,
    /// Constraint id -> slack column, for relaxed constraints only.
    pub slack_index_map: Vec<(ConstraintId, usize)>,
    /// Rows dropped this step because their control gradient vanished.
    pub dropped: Vec<ConstraintId>,
    /// Barrier rows as evaluated (for reporting).
    pub rows_eval: Vec<(ConstraintId, BarrierRow)>,
    pub u_des: [f64; 6],
    pub box_limits: [f64; 6],
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.n_u + self.n_slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u_act: ControlInput,
    /// Slack value per relaxed constraint, in `slack_index_map` order.
    pub slacks: Vec<(ConstraintId, f64)>,
    pub status: SolveStatus,
    /// (primal, dual, complementarity) residuals.
    pub kkt_residuals: (f64, f64, f64),
    pub iterations: usize,
    /// Full primal/dual iterates, kept for warm starting.
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

/// Builds the safety QP at a state. `u_des` must already be inside the
/// actuation box.
pub fn assemble(
    state: &SimState,
    u_des: &ControlInput,
    specs: &[ConstraintSpec],
    cp: &ConstraintParams,
    sp: &SimParams,
) -> QpProblem {
    let mut rows_eval = Vec::new();
    let mut dropped = Vec::new();
    for spec in specs {
        match barrier_row(spec, state, cp, sp) {
            Ok(row) => rows_eval.push((spec.id, row)),
            Err(Error::DegenerateGradient) => dropped.push(spec.id),
            Err(_) => unreachable!("barrier_row only fails with DegenerateGradient"),
        }
    }

    let mut slack_index_map = Vec::new();
    let mut slack_weights = Vec::new();
    for (id, _) in &rows_eval {
        let spec = specs.iter().find(|s| s.id == *id).unwrap();
        if let Some(w) = spec.slack_weight {
            slack_index_map.push((*id, 6 + slack_weights.len()));
            slack_weights.push(w);
        }
    }
    let n_slack = slack_weights.len();
    let dim = 6 + n_slack;

    let mut h_diag = DVector::from_element(dim, 2.0);
    for (k, w) in slack_weights.iter().enumerate() {
        h_diag[6 + k] = 2.0 * w;
    }
    let mut f_lin = DVector::zeros(dim);
    for i in 0..6 {
        f_lin[i] = -2.0 * u_des.as_array()[i];
    }

    let vp = &sp.vehicle;
    let box_limits = [vp.f_max, vp.f_max, vp.f_max, vp.tau_max, vp.tau_max, vp.tau_max];
    let n_rows = rows_eval.len() + 12;
    let mut g = DMatrix::zeros(n_rows, dim);
    let mut g_lb = DVector::zeros(n_rows);
    let mut row_kinds = Vec::with_capacity(n_rows);

    for (r, (id, row)) in rows_eval.iter().enumerate() {
        for c in 0..6 {
            g[(r, c)] = row.grad_u[c];
        }
        // BC(x, u) >= slack  <=>  grad_u . u - slack >= -affine.
        let hard = if let Some((_, col)) = slack_index_map.iter().find(|(sid, _)| sid == id) {
            g[(r, *col)] = -1.0;
            false
        } else {
            true
        };
        g_lb[r] = -row.affine();
        row_kinds.push(RowKind::Barrier { id: *id, hard });
    }
    for axis in 0..6 {
        let r0 = rows_eval.len() + 2 * axis;
        g[(r0, axis)] = 1.0; // u_i >= -lim
        g_lb[r0] = -box_limits[axis];
        row_kinds.push(RowKind::Box { axis, upper: false });
        g[(r0 + 1, axis)] = -1.0; // -u_i >= -lim
        g_lb[r0 + 1] = -box_limits[axis];
        row_kinds.push(RowKind::Box { axis, upper: true });
    }

    QpProblem {
        n_u: 6,
        n_slack,
        h_diag,
        f_lin,
        g,
        g_lb,
        row_kinds,
        slack_index_map,
        dropped,
        rows_eval,
        u_des: u_des.as_array(),
        box_limits,
    }
}

/// Solver tolerances.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub over_relax: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-5,
            max_iter: 4000,
            rho: 0.1,
            sigma: 1e-6,
            over_relax: 1.6,
        }
    }
}

/// Warm-start state carried between consecutive solves.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    z: Option<(DVector<f64>, DVector<f64>, DVector<f64>)>,
}

impl WarmStart {
    pub fn reset(&mut self) {
        self.z = None;
    }
}

/// Solves the QP by over-relaxed ADMM splitting on the one-sided
/// inequality cone, with column/row equilibration so the huge slack
/// weights do not wreck the conditioning.
pub fn solve(qp: &QpProblem, settings: &SolverSettings, warm: &mut WarmStart) -> Result<QpSolution> {
    let dim = qp.dim();
    let m = qp.g.nrows();

    // Hard-row feasibility against the box: sup over the box of
    // grad_u . u + affine. Slack columns never appear in hard rows.
    for (r, kind) in qp.row_kinds.iter().enumerate() {
        if let RowKind::Barrier { hard: true, .. } = kind {
            let mut sup = 0.0;
            for c in 0..6 {
                sup += qp.g[(r, c)].abs() * qp.box_limits[c];
            }
            if sup < qp.g_lb[r] {
                // No admissible control satisfies the hard row: return
                // the box-clamped least-violating control, flagged.
                let mut u = [0.0; 6];
                for c in 0..6 {
                    u[c] = qp.box_limits[c] * qp.g[(r, c)].signum();
                    if qp.g[(r, c)] == 0.0 {
                        u[c] = qp.u_des[c].clamp(-qp.box_limits[c], qp.box_limits[c]);
                    }
                }
                return Ok(QpSolution {
                    u_act: ControlInput::from_slice(&u),
                    slacks: qp.slack_index_map.iter().map(|(id, _)| (*id, 0.0)).collect(),
                    status: SolveStatus::Infeasible,
                    kkt_residuals: (f64::INFINITY, f64::INFINITY, f64::INFINITY),
                    iterations: 0,
                    z: DVector::zeros(dim),
                    y: DVector::zeros(m),
                });
            }
        }
    }

    // Diagonal preconditioning: scale column j by d_j = 1/sqrt(H_jj/2)
    // (so the scaled Hessian is 2I) and each row to unit norm.
    let col_scale: DVector<f64> = qp.h_diag.map(|h| (2.0 / h).sqrt());
    let mut a = DMatrix::zeros(m, dim);
    for r in 0..m {
        for c in 0..dim {
            a[(r, c)] = qp.g[(r, c)] * col_scale[c];
        }
    }
    let mut row_scale = DVector::from_element(m, 1.0);
    for r in 0..m {
        let norm = a.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            row_scale[r] = 1.0 / norm;
            for c in 0..dim {
                a[(r, c)] *= row_scale[r];
            }
        }
    }
    let lb: DVector<f64> = DVector::from_iterator(m, (0..m).map(|r| qp.g_lb[r] * row_scale[r]));
    // Scaled objective: min x'x + q'x with x = D^-1 z.
    let q: DVector<f64> =
        DVector::from_iterator(dim, (0..dim).map(|j| qp.f_lin[j] * col_scale[j]));

    let mut rho = settings.rho;
    let sigma = settings.sigma;
    // KKT: (2I + sigma I + rho A'A) is SPD.
    let factor = |rho: f64| {
        let mut kkt = DMatrix::identity(dim, dim) * (2.0 + sigma);
        kkt += rho * a.transpose() * &a;
        kkt.cholesky().expect("ADMM KKT matrix is positive definite")
    };
    let mut chol = factor(rho);

    let (mut x, mut zc, mut y) = match warm.z.take() {
        Some((x, zc, y)) if x.len() == dim && zc.len() == m => (x, zc, y),
        _ => (DVector::zeros(dim), DVector::zeros(m), DVector::zeros(m)),
    };

    // Accepts a polish candidate only when it passes an exact KKT
    // check: feasible, stationary relative to the dual magnitude, and
    // correctly signed.
    let try_polish = |x: &DVector<f64>, y: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        let (xp, yp) = polish(&a, &lb, &q, x, y)?;
        let axp = &a * &xp;
        let r_prim = (0..m).map(|r| (lb[r] - axp[r]).max(0.0)).fold(0.0, f64::max);
        let dual_vec = 2.0 * &xp + &q + a.transpose() * &yp;
        let dual_scale = (a.transpose() * &yp).amax().max(1.0);
        let ok = r_prim < 1e-8
            && dual_vec.amax() < 1e-7 * dual_scale
            && (0..m).all(|r| yp[r] <= 1e-9 * yp[r].abs().max(1.0));
        ok.then_some((xp, yp))
    };

    let mut status = SolveStatus::MaxIter;
    let mut iterations = settings.max_iter;
    let mut polished = false;
    let alpha = settings.over_relax;
    for iter in 0..settings.max_iter {
        // x-update.
        let rhs = sigma * &x - &q + a.transpose() * (rho * &zc - &y);
        x = chol.solve(&rhs);
        // Over-relaxed z/y updates; z projects onto [lb, inf).
        let ax = &a * &x;
        let ax_rel = alpha * &ax + (1.0 - alpha) * &zc;
        let z_cand = &ax_rel + &y / rho;
        let z_new = DVector::from_iterator(m, (0..m).map(|r| z_cand[r].max(lb[r])));
        y += rho * (&ax_rel - &z_new);
        zc = z_new;

        if iter % 25 == 24 || iter + 1 == settings.max_iter {
            let r_prim = (&ax - &zc).amax();
            let dual_vec = 2.0 * &x + &q + a.transpose() * &y;
            let r_dual = dual_vec.amax();
            let prim_scale = ax.amax().max(zc.amax()).max(1.0);
            let dual_scale = (2.0 * x.amax()).max(q.amax()).max(1.0);
            if r_prim < settings.eps_abs + settings.eps_rel * prim_scale
                && r_dual < settings.eps_abs + settings.eps_rel * dual_scale
            {
                status = SolveStatus::Optimal;
                iterations = iter + 1;
                break;
            }
            // The iterates localize the active set long before the
            // duals finish growing (active slack rows carry multipliers
            // of order weight x deficit); once the guess is right, the
            // exact equality solve finishes the job instantly.
            if iter % 100 == 99 {
                if let Some((xp, yp)) = try_polish(&x, &y) {
                    x = xp;
                    y = yp;
                    status = SolveStatus::Optimal;
                    iterations = iter + 1;
                    polished = true;
                    break;
                }
            }
            // Residual balancing: retune rho when primal and dual
            // progress diverge, refactoring the KKT system.
            let ratio = (r_prim / prim_scale) / (r_dual / dual_scale).max(1e-30);
            let rho_new = (rho * ratio.sqrt()).clamp(1e-6, 1e6);
            if rho_new > 5.0 * rho || rho_new < rho / 5.0 {
                rho = rho_new;
                chol = factor(rho);
            }
        }
    }

    // Polish: refine the active set the iterates suggest and solve the
    // equality-constrained subproblem on it exactly. This recovers the
    // true duals directly, which matters because an active slack row
    // carries a multiplier of order its weight times the deficit - far
    // beyond what the rho-scaled dual updates accumulate per sweep.
    if !polished {
        if let Some((xp, yp)) = try_polish(&x, &y) {
            x = xp;
            y = yp;
            status = SolveStatus::Optimal;
        }
    }

    warm.z = Some((x.clone(), zc.clone(), y.clone()));

    // Undo scaling.
    let z_full: DVector<f64> =
        DVector::from_iterator(dim, (0..dim).map(|j| x[j] * col_scale[j]));
    let mut u = [0.0; 6];
    for c in 0..6 {
        u[c] = z_full[c].clamp(-qp.box_limits[c], qp.box_limits[c]);
    }
    let slacks: Vec<(ConstraintId, f64)> = qp
        .slack_index_map
        .iter()
        .map(|(id, col)| (*id, z_full[*col]))
        .collect();

    let kkt_res = kkt_residuals(qp, &z_full, &y, &row_scale, &col_scale);
    if status == SolveStatus::MaxIter {
        return Ok(QpSolution {
            u_act: ControlInput::from_slice(&u),
            slacks,
            status,
            kkt_residuals: kkt_res,
            iterations,
            z: z_full,
            y,
        });
    }
    Ok(QpSolution {
        u_act: ControlInput::from_slice(&u),
        slacks,
        status,
        kkt_residuals: kkt_res,
        iterations,
        z: z_full,
        y,
    })
}

/// Equality-constrained refinement on the rows the iterates mark
/// active: solve the KKT system on the guessed set, then repair the
/// guess - add rows the candidate violates, drop rows whose multiplier
/// has the wrong sign - until the set is consistent. Returns the primal
/// iterate and the full dual vector (`y[r] <= 0` on active rows, zero
/// elsewhere).
fn polish(
    a: &DMatrix<f64>,
    lb: &DVector<f64>,
    q: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = a.nrows();
    let ax = a * x;
    let mut active: Vec<bool> = (0..m)
        .map(|r| y[r] < -1e-10 || (ax[r] - lb[r]).abs() < 1e-7)
        .collect();

    for _pass in 0..60 {
        let rows: Vec<usize> = (0..m).filter(|&r| active[r]).collect();
        let k = rows.len();
        let (xp, nu) = if k == 0 {
            (-0.5 * q.clone(), DVector::zeros(0))
        } else {
            // Equality-constrained subproblem, solved by a nullspace
            // method. The scaled Hessian is exactly 2I, so every step
            // here conditions like A itself - unlike the saddle KKT
            // system, whose conditioning squares through the tiny slack
            // column entries and caps LU accuracy near the violation
            // tolerance.
            match eqp_solve(&a, &rows, lb, q) {
                EqpOutcome::Solved(x, nu) => (x, nu),
                EqpOutcome::Inconsistent(row) => {
                    // The equalities contradict each other; this row is
                    // linearly dependent on earlier ones with a
                    // mismatched bound, so it cannot be binding.
                    active[row] = false;
                    continue;
                }
                EqpOutcome::Degenerate => return None,
            }
        };

        // Wrong-sign multiplier: that row is not binding; drop the
        // worst offender and re-solve. The threshold is relative to the
        // largest multiplier because dual rounding scales with it.
        let mut worst = (0usize, 0.0f64);
        for (i, &r) in rows.iter().enumerate() {
            if nu[i] > worst.1 {
                worst = (r, nu[i]);
            }
        }
        if worst.1 > 1e-8 * nu.amax().max(1.0) {
            active[worst.0] = false;
            continue;
        }
        // Violated inactive rows must join the set.
        let axp = a * &xp;
        let mut grew = false;
        for r in 0..m {
            if !active[r] && axp[r] < lb[r] - 1e-9 {
                active[r] = true;
                grew = true;
            }
        }
        if grew {
            continue;
        }
        let mut y_full = DVector::zeros(m);
        for (i, &r) in rows.iter().enumerate() {
            y_full[r] = nu[i].min(0.0);
        }
        return Some((xp, y_full));
    }
    None
}

enum EqpOutcome {
    /// Primal iterate and one multiplier per selected row.
    Solved(DVector<f64>, DVector<f64>),
    /// The selected equalities contradict each other; the named row
    /// (index into the full row set) should leave the active set.
    Inconsistent(usize),
    Degenerate,
}

/// Minimizes `x'x + q'x` subject to the selected rows of `a` holding
/// with equality, via a pivoted QR of the selected-row transpose:
/// `x = Q_r w - (I - Q_r Q_r') q / 2` with `R' w` matching the bounds,
/// and the multipliers recovered by a triangular solve. Everything here
/// conditions like `a`, never like its square.
fn eqp_solve(
    a: &DMatrix<f64>,
    rows: &[usize],
    lb: &DVector<f64>,
    q: &DVector<f64>,
) -> EqpOutcome {
    let dim = a.ncols();
    let k = rows.len();
    let mut at = DMatrix::zeros(dim, k);
    let mut b = DVector::zeros(k);
    for (i, &r) in rows.iter().enumerate() {
        for c in 0..dim {
            at[(c, i)] = a[(r, c)];
        }
        b[i] = lb[r];
    }
    // at * P = Q R; the same index map permutes the bounds.
    let qr = at.col_piv_qr();
    let qmat = qr.q();
    let rmat = qr.r();
    let perm = qr.p();
    let kd = dim.min(k);
    let rtol = 1e-10 * rmat[(0, 0)].abs().max(1.0);
    let rank = (0..kd)
        .take_while(|&i| rmat[(i, i)].abs() > rtol)
        .count();
    if rank == 0 {
        return EqpOutcome::Degenerate;
    }
    let mut pb = b.clone();
    perm.permute_rows(&mut pb);
    // Forward solve R[..rank]' w = pb[..rank].
    let mut w = DVector::zeros(rank);
    for i in 0..rank {
        let mut s = pb[i];
        for j in 0..i {
            s -= rmat[(j, i)] * w[j];
        }
        w[i] = s / rmat[(i, i)];
    }
    // Dependent rows must agree with the independent ones; a mismatch
    // means the equalities are contradictory.
    for i in rank..k {
        let mut s = 0.0;
        for j in 0..rank {
            s += rmat[(j, i)] * w[j];
        }
        if (s - pb[i]).abs() > 1e-8 * pb[i].abs().max(1.0) {
            // Pivot column i of the transpose is full row rows[p(i)].
            let mut idx = DVector::from_iterator(k, (0..k).map(|j| j as f64));
            perm.permute_rows(&mut idx);
            return EqpOutcome::Inconsistent(rows[idx[i] as usize]);
        }
    }
    // x = Q_r w + (I - Q_r Q_r')(-q/2).
    let q_r = qmat.columns(0, rank);
    let x = &q_r * &w - 0.5 * (q - &q_r * (q_r.transpose() * q));
    // Multipliers: R[..rank, ..rank] t = Q_r' (-(2x + q)), zero on the
    // dependent rows, undo the pivoting.
    let g = q_r.transpose() * (-(2.0 * &x + q));
    let mut t = DVector::zeros(rank);
    for i in (0..rank).rev() {
        let mut s = g[i];
        for j in i + 1..rank {
            s -= rmat[(i, j)] * t[j];
        }
        t[i] = s / rmat[(i, i)];
    }
    let mut s_full = DVector::zeros(k);
    for i in 0..rank {
        s_full[i] = t[i];
    }
    perm.inv_permute_rows(&mut s_full);
    EqpOutcome::Solved(x, s_full)
}

/// Independent KKT residual evaluation in the original (unscaled)
/// variables: primal feasibility, stationarity, complementarity.
pub fn kkt_residuals(
    qp: &QpProblem,
    z: &DVector<f64>,
    y_scaled: &DVector<f64>,
    row_scale: &DVector<f64>,
    col_scale: &DVector<f64>,
) -> (f64, f64, f64) {
    let m = qp.g.nrows();
    let dim = qp.dim();
    // Unscale duals: the scaled row was row_scale * G * col_scale, so
    // lambda_orig = row_scale * y_scaled (col scaling folds into the
    // stationarity check below).
    let lambda: DVector<f64> =
        DVector::from_iterator(m, (0..m).map(|r| y_scaled[r] * row_scale[r]));
    let gz = &qp.g * z;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for r in 0..m {
        let s = gz[r] - qp.g_lb[r];
        primal = primal.max((-s).max(0.0));
        // Normalized by the multiplier so active slacked rows (duals of
        // order weight x deficit) are judged by their gap, not the
        // product's raw magnitude.
        comp = comp.max((lambda[r] * s).abs() / lambda[r].abs().max(1.0));
    }
    let mut dual: f64 = 0.0;
    for j in 0..dim {
        let mut station = qp.h_diag[j] * z[j] + qp.f_lin[j];
        for r in 0..m {
            station += lambda[r] * qp.g[(r, j)];
        }
        // Normalize by the column scale so slack columns (weight 1e12)
        // are judged in their own units.
        dual = dual.max((station * col_scale[j]).abs());
    }
    (primal, dual, comp)
}

/// Per-constraint entry of a filter report.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    pub id: ConstraintId,
    pub h: f64,
    pub psi: f64,
    /// Barrier condition evaluated at the returned safe control.
    pub bc_at_u_act: f64,
    pub slack: f64,
    pub dropped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub constraints: Vec<ConstraintReport>,
    pub status: SolveStatus,
    pub kkt_residuals: (f64, f64, f64),
    pub iterations: usize,
    /// True when the safe control differs from the desired control by
    /// more than 1e-9 in any component.
    pub modified: bool,
}

/// The run-time-assurance filter. Owns warm-start state, so use one
/// instance per episode.
pub struct AsifFilter {
    pub specs: Vec<ConstraintSpec>,
    pub cp: ConstraintParams,
    pub settings: SolverSettings,
    warm: WarmStart,
}

impl AsifFilter {
    pub fn new(specs: Vec<ConstraintSpec>, cp: ConstraintParams, settings: SolverSettings) -> Self {
        Self {
            specs,
            cp,
            settings,
            warm: WarmStart::default(),
        }
    }

    pub fn reset(&mut self) {
        self.warm.reset();
    }

    /// Filters a desired control into a safe one.
    pub fn filter(
        &mut self,
        state: &SimState,
        u_des: &ControlInput,
        sp: &SimParams,
    ) -> Result<(ControlInput, FilterReport)> {
        if !u_des.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let u_des = u_des.clamped(&sp.vehicle);
        let qp = assemble(state, &u_des, &self.specs, &self.cp, sp);
        let sol = solve(&qp, &self.settings, &mut self.warm)?;

        let u_act_arr = sol.u_act.as_array();
        let modified = u_act_arr
            .iter()
            .zip(u_des.as_array().iter())
            .any(|(a, b)| (a - b).abs() > 1e-9);

        let mut constraints = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            if qp.dropped.contains(&spec.id) {
                constraints.push(ConstraintReport {
                    id: spec.id,
                    h: crate::cbf_kit::eval_h(spec.id, state, &self.cp, sp),
                    psi: f64::NAN,
                    bc_at_u_act: f64::NAN,
                    slack: 0.0,
                    dropped: true,
                });
                continue;
            }
            let (_, row) = qp.rows_eval.iter().find(|(id, _)| *id == spec.id).unwrap();
            let slack = sol
                .slacks
                .iter()
                .find(|(id, _)| *id == spec.id)
                .map(|(_, s)| *s)
                .unwrap_or(0.0);
            constraints.push(ConstraintReport {
                id: spec.id,
                h: row.h_value,
                psi: row.psi_value,
                bc_at_u_act: row.bc(&u_act_arr),
                slack,
                dropped: false,
            });
        }

        let report = FilterReport {
            constraints,
            status: sol.status,
            kkt_residuals: sol.kkt_residuals,
            iterations: sol.iterations,
            modified,
        };
        Ok((sol.u_act, report))
    }
}
