//! The acceptance gate: every release-blocking criterion in one place,
//! printing a single pass/fail line per criterion (run with
//! `--nocapture` to see the lines as they complete).

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use inspection_rta::asif_filter::{assemble, solve, AsifFilter, SolveStatus, SolverSettings, WarmStart};
use inspection_rta::baseline_ctrl::Controller;
use inspection_rta::cbf_kit::{
    barrier_row, default_specs, eval_h, fft_position, psm_scan, ConstraintId, ConstraintParams,
};
use inspection_rta::cli::run_episode;
use inspection_rta::config::RunConfig;
use inspection_rta::episode_env::Episode;
use inspection_rta::metrics_eval::{bootstrap_ci, iqm, EpisodeMetrics};
use inspection_rta::quat_dyn::{step_rk4, ControlInput, SimParams, SimState};
use inspection_rta::thermal_power::{PowerParams, ThermalNodeParams};
use inspection_rta::trace::{EpisodeTrace, TraceMeta};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

#[test]
fn acceptance_criteria() {
    let checks: Vec<(&str, fn() -> String)> = vec![
        ("1 filter holds the aggressive scenario", criterion_1),
        ("2 minimal invasiveness", criterion_2),
        ("3 gradient conformance", criterion_3),
        ("4 closed-form free flight vs integrator", criterion_4),
        ("5 QP solver vs oracle", criterion_5),
        ("6 thermal/power analytic checks", criterion_6),
        ("7 batch bookkeeping", criterion_7),
        ("8 aggregate statistics oracle", criterion_8),
        ("9 scope statement and policy bridge", criterion_9),
    ];
    let mut failed = Vec::new();
    for (name, f) in checks {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                println!("criterion {name}: FAIL ({msg})");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

/// One inner step of the 2000 s boundary-pushing scenario, shared by
/// the RTA-on and RTA-off arms.
struct ScenarioOutcome {
    hard_violations: usize,
    slack_bc_violations: usize,
    total_step_violations: usize,
    optimal_frac: f64,
}

fn run_scenario(rta: bool) -> ScenarioOutcome {
    let cfg = RunConfig::default();
    let env = Episode::reset(
        cfg.episode.clone(),
        cfg.sim.clone(),
        cfg.constraints.clone(),
        cfg.sensor.clone(),
        cfg.solver.clone(),
    )
    .unwrap();
    let mut state = env.state;
    let mut controller = Controller::lqr_pd(
        cfg.controller.lqr_params(),
        cfg.controller.pd_params(),
        cfg.sim.vehicle.n,
        cfg.sim.vehicle.mass,
    )
    .unwrap();
    let mut filter = AsifFilter::new(default_specs(), cfg.constraints.clone(), cfg.solver.clone());

    let outer = cfg.episode.policy_period.round() as usize;
    let mut u_outer = ControlInput::ZERO;
    let mut u_prev = ControlInput::ZERO;
    let mut out = ScenarioOutcome {
        hard_violations: 0,
        slack_bc_violations: 0,
        total_step_violations: 0,
        optimal_frac: 0.0,
    };
    let mut optimal = 0usize;
    for step in 0..2000usize {
        if step % outer == 0 {
            u_outer = controller
                .act(&state, &[0.0; 26], &cfg.sim.vehicle)
                .unwrap()
                .clamped(&cfg.sim.vehicle);
        }
        let desired = if !rta || step % outer == 0 { u_outer } else { u_prev };
        let u_act = if rta {
            let (u, report) = filter.filter(&state, &desired, &cfg.sim).unwrap();
            if report.status == SolveStatus::Optimal {
                optimal += 1;
            }
            for c in &report.constraints {
                if !c.dropped && c.bc_at_u_act < -1e-6 {
                    out.slack_bc_violations += 1;
                }
            }
            u
        } else {
            optimal += 1;
            desired
        };
        state = step_rk4(&state, &u_act, 1.0, &cfg.sim).unwrap();
        for (i, id) in ConstraintId::ALL.iter().enumerate() {
            if eval_h(*id, &state, &cfg.constraints, &cfg.sim) < 0.0 {
                out.total_step_violations += 1;
                if i == 0 {
                    out.hard_violations += 1;
                }
            }
        }
        u_prev = u_act;
    }
    out.optimal_frac = optimal as f64 / 2000.0;
    out
}

fn criterion_1() -> String {
    let t0 = Instant::now();
    let on = run_scenario(true);
    let secs = t0.elapsed().as_secs_f64();
    assert_eq!(on.hard_violations, 0, "safe separation violated with the filter on");
    assert_eq!(on.slack_bc_violations, 0, "relaxed row beyond slack tolerance");
    assert!(on.optimal_frac >= 0.99, "optimal fraction {}", on.optimal_frac);
    assert!(secs < 10.0, "filtered scenario took {secs:.1} s");
    let off = run_scenario(false);
    assert!(off.total_step_violations >= 1, "unfiltered scenario shows no violations");
    format!(
        "0 separation violations filtered, {} step-constraint violations unfiltered, {:.2} s",
        off.total_step_violations, secs
    )
}

fn criterion_2() -> String {
    let sp = SimParams::default();
    let cp = ConstraintParams::default();
    let specs = default_specs();
    let settings = SolverSettings::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0xd2e9);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut worst: f64 = 0.0;
    while accepted < 1000 {
        attempts += 1;
        assert!(attempts < 500_000, "deep-interior sampler starved ({accepted} found)");
        let state = common::sample_envelope_state(&mut rng, &cp);
        let mut u_des = common::sample_box_control(&mut rng, &sp.vehicle);
        u_des.f *= 0.5;
        u_des.tau *= 0.5;
        let qp = assemble(&state, &u_des, &specs, &cp, &sp);
        // Deep interior: every barrier row clears its condition at the
        // desired control by a margin proportional to its gradient (the
        // solver's activity detection works in row-normalized units).
        let u_arr = u_des.as_array();
        let interior = qp.rows_eval.iter().all(|(_, row)| {
            let gnorm = row.grad_u.iter().map(|g| g * g).sum::<f64>().sqrt();
            row.bc(&u_arr) > 1e-5 * gnorm + 1e-12
        });
        if !interior {
            continue;
        }
        let sol = solve(&qp, &settings, &mut WarmStart::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        for i in 0..6 {
            let d = (sol.u_act.as_array()[i] - u_arr[i]).abs();
            worst = worst.max(d);
            assert!(d < 1e-8, "filter moved an untouched control by {d:.3e}");
        }
        accepted += 1;
    }
    format!("1000 states, max |u_act - u_des| = {worst:.2e}")
}

fn criterion_3() -> String {
    let sp = SimParams::default();
    let cp = ConstraintParams::default();
    let specs = default_specs();
    let mut rng = ChaCha12Rng::seed_from_u64(0x6fd1);
    let dt = 1e-3;
    let mut checked = vec![0usize; specs.len()];
    let mut sampled = 0usize;
    let mut worst: f64 = 0.0;
    while checked.iter().any(|&c| c < 1000) && sampled < 20_000 {
        sampled += 1;
        let state = common::sample_envelope_state(&mut rng, &cp);
        let u = common::sample_box_control(&mut rng, &sp.vehicle);
        let fwd = step_rk4(&state, &u, dt, &sp).unwrap();
        let bwd = step_rk4(&state, &u, -dt, &sp).unwrap();
        for (k, spec) in specs.iter().enumerate() {
            let (Ok(row), Ok(row_f), Ok(row_b)) = (
                barrier_row(spec, &state, &cp, &sp),
                barrier_row(spec, &fwd, &cp, &sp),
                barrier_row(spec, &bwd, &cp, &sp),
            ) else {
                continue;
            };
            if spec.id == ConstraintId::Psm {
                let t_star = |s: &SimState| {
                    psm_scan(&s.p, &s.v, sp.vehicle.n, cp.keep_out_radius(), cp.t_f_psm, cp.psm_grid_dt).1
                };
                if t_star(&fwd) != t_star(&bwd) {
                    continue;
                }
            }
            let value = |r: &inspection_rta::cbf_kit::BarrierRow| {
                if spec.relative_degree == 2 { r.psi_value } else { r.h_value }
            };
            let fd = (value(&row_f) - value(&row_b)) / (2.0 * dt);
            let mut analytic = row.drift;
            for (g, ui) in row.grad_u.iter().zip(u.as_array()) {
                analytic += g * ui;
            }
            let rel = (fd - analytic).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "{:?}: relative error {rel:.3e}", spec.id);
            checked[k] += 1;
        }
    }
    for (k, spec) in specs.iter().enumerate() {
        assert!(checked[k] >= 1000, "{:?} checked only {} times", spec.id, checked[k]);
    }
    format!("13 constraints x 1000 states, worst relative error {worst:.2e}")
}

fn criterion_4() -> String {
    let sp = SimParams::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0x3355);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let p0 = rng.gen_range(50.0..100.0) * common::sample_direction(&mut rng);
        let v0 = rng.gen_range(0.0..0.2) * common::sample_direction(&mut rng);
        let mut state = SimState {
            p: p0,
            v: v0,
            ..common::sample_envelope_state(&mut rng, &ConstraintParams::default())
        };
        for step in 1..=500usize {
            state = step_rk4(&state, &ControlInput::ZERO, 1.0, &sp).unwrap();
            let closed = fft_position(&p0, &v0, step as f64, sp.vehicle.n);
            for c in 0..3 {
                let d = (state.p[c] - closed[c]).abs();
                worst = worst.max(d);
                assert!(d < 1e-6, "free-flight mismatch {d:.3e} m at t = {step} s");
            }
        }
    }
    format!("20 trajectories x 500 s, worst component error {worst:.2e} m")
}

fn criterion_5() -> String {
    let sp = SimParams::default();
    let cp = ConstraintParams::default();
    let specs = default_specs();
    let settings = SolverSettings::default();
    let mut rng = ChaCha12Rng::seed_from_u64(0x51ca);
    let mut compared = 0usize;
    let mut worst_u: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    while compared < 500 {
        let state = common::sample_envelope_state(&mut rng, &cp);
        let u_des = common::sample_box_control(&mut rng, &sp.vehicle);
        let qp = assemble(&state, &u_des, &specs, &cp, &sp);
        let sol = solve(&qp, &settings, &mut WarmStart::default()).unwrap();
        if sol.status == SolveStatus::Infeasible {
            continue;
        }
        assert_eq!(sol.status, SolveStatus::Optimal);
        let (prim, dual, comp) = sol.kkt_residuals;
        worst_kkt = worst_kkt.max(prim).max(dual).max(comp);
        assert!(worst_kkt < 1e-5, "KKT residuals ({prim:.2e}, {dual:.2e}, {comp:.2e})");
        let z = common::oracle_solve(&qp).expect("oracle did not settle");
        for i in 0..6 {
            let u_o = z[i].clamp(-qp.box_limits[i], qp.box_limits[i]);
            let d = (sol.u_act.as_array()[i] - u_o).abs();
            worst_u = worst_u.max(d);
            assert!(d < 1e-5, "u[{i}]: runtime vs oracle differ by {d:.3e}");
        }
        compared += 1;
    }
    format!("500 QPs, max |u| gap {worst_u:.2e}, max KKT residual {worst_kkt:.2e}")
}

fn criterion_6() -> String {
    let tp = ThermalNodeParams::default();
    // Radiative equilibrium under normal-incidence sun with the Earth
    // terms clamped: alpha S A = sigma eps A T^4.
    let t_eq = (tp.alpha_abs * tp.solar_const / (tp.sigma * tp.eps)).powf(0.25);
    let n = Vector3::new(0.0, 1.0, 0.0);
    let q = tp.heat_total(t_eq, &n, &n);
    assert!(q.abs() < 1e-9, "net heat {q:.3e} W at equilibrium");

    let pp = PowerParams::default();
    // Generation balances the bus load at cos(theta) = P_out / P_gen,max.
    let theta = (pp.p_out / (pp.p_ideal * pp.degradation * pp.area)).acos();
    let de = pp.energy_deriv(theta);
    assert!(de.abs() < 1e-9, "dE/dt {de:.3e} kJ/s at break-even");
    format!("|Q({t_eq:.2} K)| = {:.1e} W, |dE/dt({theta:.3} rad)| = {:.1e} kJ/s", q.abs(), de.abs())
}

/// Runs one zero-policy episode, asserting the inspected weight never
/// decreases; returns the trace and its metrics.
fn run_zero_episode(cfg: &RunConfig, seed: u64) -> (EpisodeTrace, EpisodeMetrics) {
    let mut ep_cfg = cfg.episode.clone();
    ep_cfg.seed = seed;
    let mut env = Episode::reset(
        ep_cfg,
        cfg.sim.clone(),
        cfg.constraints.clone(),
        cfg.sensor.clone(),
        cfg.solver.clone(),
    )
    .unwrap();
    let mut trace = EpisodeTrace::new(TraceMeta {
        seed,
        rta_enabled: cfg.episode.rta_enabled,
        policy: "zero".into(),
    });
    let mut w_prev = env.points.inspected_weight();
    while !env.done() {
        let res = env.step(&ControlInput::ZERO).unwrap();
        let w_now = env.points.inspected_weight();
        assert!(w_now >= w_prev, "inspected weight decreased: {w_prev} -> {w_now} (seed {seed})");
        w_prev = w_now;
        trace.records.extend(res.inner_records);
    }
    let metrics = trace.recompute_metrics(cfg.sim.vehicle.mass, &env.points.weights);
    (trace, metrics)
}

fn criterion_7() -> String {
    let cfg = RunConfig::default();
    let keep = [0u64, 41, 99];
    let t0 = Instant::now();
    let results: Vec<(u64, Option<EpisodeTrace>, EpisodeMetrics)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (trace, metrics) = run_zero_episode(&cfg, seed);
            let kept = keep.contains(&seed).then_some(trace);
            (seed, kept, metrics)
        })
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    assert!(secs < 120.0, "batch took {secs:.1} s");

    for (seed, _, m) in &results {
        assert_eq!(
            m.violation.per_constraint[0], 0.0,
            "safe-separation violation percentage nonzero for seed {seed}"
        );
        assert!(
            m.episode_length <= cfg.episode.max_time,
            "seed {seed} ran {} s", m.episode_length
        );
    }

    // Determinism: re-running a seed reproduces the trace and metrics
    // bit for bit.
    for &seed in &keep {
        let (_, first, m_first) = results.iter().find(|(s, _, _)| *s == seed).unwrap();
        let (again, m_again) = run_zero_episode(&cfg, seed);
        assert_eq!(first.as_ref().unwrap(), &again, "trace differs on rerun (seed {seed})");
        assert_eq!(
            serde_json::to_string(m_first).unwrap(),
            serde_json::to_string(&m_again).unwrap(),
            "metrics differ on rerun (seed {seed})"
        );
    }
    format!("100 episodes in {secs:.1} s, safe-separation 0.0 throughout, reruns bit-identical")
}

fn criterion_8() -> String {
    // Replicating every sample 4x puts the quartile cuts on integer
    // indices, so a plain trimmed mean is an exact reference.
    fn trimmed_oracle(samples: &[f64]) -> f64 {
        let mut rep = Vec::with_capacity(samples.len() * 4);
        for s in samples {
            rep.extend_from_slice(&[*s; 4]);
        }
        rep.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len();
        rep[n..3 * n].iter().sum::<f64>() / (2 * n) as f64
    }
    let mut rng = ChaCha12Rng::seed_from_u64(0x1a9b);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..300);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let got = iqm(&xs).unwrap();
        let want = trimmed_oracle(&xs);
        worst = worst.max((got - want).abs());
        assert!((got - want).abs() < 1e-12, "IQM {got} vs oracle {want}");

        let a = bootstrap_ci(&xs, 0.95, 500, 7).unwrap();
        let b = bootstrap_ci(&xs, 0.95, 500, 7).unwrap();
        assert_eq!(a, b, "bootstrap CI not deterministic under a fixed seed");
        assert!(a.0 <= got && got <= a.1, "CI [{}, {}] excludes IQM {got}", a.0, a.1);
    }
    format!("100 lists, max |IQM - trimmed mean| = {worst:.1e}, CIs deterministic")
}

fn criterion_9() -> String {
    println!(
        "  not reproducible at desk scale: final trained-policy metrics, the \
         no-assurance violation column, and the training curves all require \
         multi-million-step policy training; substituted by the checks above \
         plus this external-policy bridge round trip."
    );
    let mut cfg = RunConfig::default();
    cfg.episode.max_time = 300.0;
    let stub = r#"echo '{"v":1}'; while read -r line; do echo '{"F":[0.0,0.0,0.0],"tau":[0.0,0.0,0.0]}'; done"#;
    let (t_zero, _) = run_episode(&cfg, "zero", 5).unwrap();
    let (t_ext, _) = run_episode(&cfg, &format!("external:{stub}"), 5).unwrap();
    assert_eq!(t_zero.records, t_ext.records, "bridge round trip diverged");
    format!("external zero stub reproduced the built-in zero policy over {} records", t_zero.records.len())
}
