//! Command-line front end: `check-filter`, `episode`, `batch`, and
//! `dump-defaults`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::asif_filter::{AsifFilter, SolveStatus};
use crate::baseline_ctrl::Controller;
use crate::cbf_kit::{default_specs, eval_h, ConstraintId};
use crate::config::RunConfig;
use crate::episode_env::Episode;
use crate::error::{Error, Result};
use crate::metrics_eval::{summarize, EpisodeMetrics};
use crate::quat_dyn::{step_rk4, ControlInput};
use crate::trace::{EpisodeTrace, TraceMeta, TraceRecord};

#[derive(Parser)]
#[command(name = "inspection-rta", version, about = "6-DoF spacecraft inspection simulator with run time assurance")]
pub struct Cli {
    /// Configuration file (TOML); defaults are embedded.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Episode seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Safety filter on/off override.
    #[arg(long, global = true, value_enum)]
    pub rta: Option<RtaFlag>,
    /// Policy: zero | random | lqr-pd | external:<cmd>.
    #[arg(long, global = true)]
    pub policy: Option<String>,
    /// Output directory for traces and summaries.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Batch episode count.
    #[arg(long, global = true, default_value_t = 100)]
    pub episodes: usize,
    /// Worker threads for batch runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RtaFlag {
    On,
    Off,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Run the aggressive LQR+PD scenario for 2000 s and verify the
    /// safety filter holds every constraint.
    CheckFilter,
    /// Run one episode and write its trace and metrics.
    Episode,
    /// Run a batch of seeded episodes and write the summary tables.
    Batch,
    /// Print the full default configuration as TOML.
    DumpDefaults,
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SAFETY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub fn run(cli: Cli) -> i32 {
    let mut cfg = match cli.config.as_deref().map(RunConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.episode.seed = seed;
    }
    if let Some(flag) = cli.rta {
        cfg.episode.rta_enabled = flag == RtaFlag::On;
    }
    let policy = cli.policy.clone().unwrap_or_else(|| match cli.cmd {
        Cmd::CheckFilter => "lqr-pd".into(),
        _ => "zero".into(),
    });

    let outcome = match cli.cmd {
        Cmd::DumpDefaults => {
            return match RunConfig::default().to_toml() {
                Ok(text) => {
                    // A closed pipe (e.g. `| head`) is not an error here.
                    use std::io::Write;
                    let _ = writeln!(std::io::stdout(), "{text}");
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_RUNTIME;
                }
            };
        }
        Cmd::CheckFilter => cmd_check_filter(&cfg, &cli.out),
        Cmd::Episode => cmd_episode(&cfg, &policy, &cli.out).map(|_| EXIT_OK),
        Cmd::Batch => cmd_batch(&cfg, &policy, cli.episodes, cli.jobs, &cli.out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn build_controller(cfg: &RunConfig, policy: &str, seed: u64) -> Result<Controller> {
    match policy {
        "zero" => Ok(Controller::zero()),
        "random" => Ok(Controller::random(seed ^ 0x5bd1_e995)),
        "lqr-pd" => Controller::lqr_pd(
            cfg.controller.lqr_params(),
            cfg.controller.pd_params(),
            cfg.sim.vehicle.n,
            cfg.sim.vehicle.mass,
        ),
        other => {
            if let Some(cmd) = other.strip_prefix("external:") {
                Controller::external(cmd)
            } else {
                Err(Error::Config(format!("unknown policy: {other}")))
            }
        }
    }
}

/// The 2000 s boundary-pushing run: LQR drives at the chief while PD
/// regulates attitude; with the filter on, every constraint must hold
/// at every 1 s step.
fn cmd_check_filter(cfg: &RunConfig, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let env = Episode::reset(
        cfg.episode.clone(),
        cfg.sim.clone(),
        cfg.constraints.clone(),
        cfg.sensor.clone(),
        cfg.solver.clone(),
    )?;
    let mut state = env.state;
    let mut controller = build_controller(cfg, "lqr-pd", cfg.episode.seed)?;
    let mut filter = AsifFilter::new(
        default_specs(),
        cfg.constraints.clone(),
        cfg.solver.clone(),
    );

    let rta = cfg.episode.rta_enabled;
    let duration = 2000usize;
    let outer = cfg.episode.policy_period.round() as usize;
    let mut trace = EpisodeTrace::new(TraceMeta {
        seed: cfg.episode.seed,
        rta_enabled: rta,
        policy: "lqr-pd".into(),
    });

    let mut u_outer = ControlInput::ZERO;
    let mut u_prev = ControlInput::ZERO;
    let mut optimal = 0usize;
    let mut hard_violations = 0usize;
    let mut slack_violations = 0usize;
    let mut worst_bc: f64 = f64::INFINITY;
    let mut per_constraint_viol = vec![0usize; ConstraintId::ALL.len()];

    for step in 0..duration {
        if step % outer == 0 {
            u_outer = controller
                .act(&state, &[0.0; 26], &cfg.sim.vehicle)?
                .clamped(&cfg.sim.vehicle);
        }
        let desired = if rta {
            if step % outer == 0 {
                u_outer
            } else {
                u_prev
            }
        } else {
            u_outer
        };
        let (u_act, slacks) = if rta {
            let (u, report) = filter.filter(&state, &desired, &cfg.sim)?;
            if report.status == SolveStatus::Optimal {
                optimal += 1;
            }
            let mut slack_row = vec![0.0; ConstraintId::ALL.len()];
            for c in &report.constraints {
                let pos = ConstraintId::ALL.iter().position(|id| *id == c.id).unwrap();
                slack_row[pos] = c.slack;
                if !c.dropped && c.bc_at_u_act < worst_bc {
                    worst_bc = c.bc_at_u_act;
                }
                if !c.dropped && c.bc_at_u_act < -1e-6 {
                    slack_violations += 1;
                }
            }
            (u, slack_row)
        } else {
            optimal += 1;
            (desired, vec![0.0; ConstraintId::ALL.len()])
        };

        state = step_rk4(&state, &u_act, 1.0, &cfg.sim)?;
        let h_row: Vec<f64> = ConstraintId::ALL
            .iter()
            .map(|id| eval_h(*id, &state, &cfg.constraints, &cfg.sim))
            .collect();
        for (i, h) in h_row.iter().enumerate() {
            if *h < 0.0 {
                per_constraint_viol[i] += 1;
            }
        }
        if h_row[0] < 0.0 {
            hard_violations += 1;
        }
        trace.records.push(TraceRecord::from_state(
            &state,
            &desired.as_array(),
            &u_act.as_array(),
            h_row,
            slacks,
            Vec::new(),
            "Running".into(),
        ));
        u_prev = u_act;
    }

    trace.write_jsonl(&out.join("check_filter.jsonl"))?;
    trace.write_csv(&out.join("check_filter.csv"))?;

    let optimal_frac = optimal as f64 / duration as f64;
    println!("check-filter: rta={rta} steps={duration}");
    println!("  solver optimal fraction: {optimal_frac:.4}");
    println!("  safe-separation violations: {hard_violations}");
    println!("  slacked-row BC < -1e-6 count: {slack_violations} (worst BC {worst_bc:.3e})");
    for (i, id) in ConstraintId::ALL.iter().enumerate() {
        if per_constraint_viol[i] > 0 {
            println!(
                "  {}: {} violating steps",
                id.label(),
                per_constraint_viol[i]
            );
        }
    }
    let pass = hard_violations == 0 && slack_violations == 0 && optimal_frac >= 0.99;
    if rta && !pass {
        println!("result: FAIL");
        return Ok(EXIT_SAFETY);
    }
    if !rta {
        let any: usize = per_constraint_viol.iter().sum();
        println!(
            "result: {} ({} total violating step-constraints without the filter)",
            if any > 0 { "violations observed" } else { "no violations" },
            any
        );
        return Ok(if any > 0 { EXIT_SAFETY } else { EXIT_OK });
    }
    println!("result: PASS");
    Ok(EXIT_OK)
}

/// Runs one episode to termination; returns the trace-derived metrics.
pub fn run_episode(cfg: &RunConfig, policy: &str, seed: u64) -> Result<(EpisodeTrace, EpisodeMetrics)> {
    let mut ep_cfg = cfg.episode.clone();
    ep_cfg.seed = seed;
    let mut env = Episode::reset(
        ep_cfg,
        cfg.sim.clone(),
        cfg.constraints.clone(),
        cfg.sensor.clone(),
        cfg.solver.clone(),
    )?;
    let mut controller = build_controller(cfg, policy, seed)?;
    let mut trace = EpisodeTrace::new(TraceMeta {
        seed,
        rta_enabled: cfg.episode.rta_enabled,
        policy: policy.into(),
    });
    while !env.done() {
        let obs = env.observe();
        let u_des = controller.act(&env.state, obs.as_slice(), &cfg.sim.vehicle)?;
        let res = env.step(&u_des)?;
        trace.records.extend(res.inner_records);
    }
    let metrics = trace.recompute_metrics(cfg.sim.vehicle.mass, &env.points.weights);
    Ok((trace, metrics))
}

fn cmd_episode(cfg: &RunConfig, policy: &str, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let seed = cfg.episode.seed;
    let (trace, metrics) = run_episode(cfg, policy, seed)?;
    trace.write_jsonl(&out.join(format!("episode_{seed}.jsonl")))?;
    trace.write_csv(&out.join(format!("episode_{seed}.csv")))?;
    std::fs::write(
        out.join(format!("metrics_{seed}.json")),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    println!(
        "episode seed={seed} policy={policy} rta={} -> {} at t={} s, w_p={:.4}, reward={:.4}",
        cfg.episode.rta_enabled,
        metrics.termination,
        metrics.episode_length,
        metrics.inspected_weight,
        metrics.total_reward
    );
    Ok(())
}

fn cmd_batch(
    cfg: &RunConfig,
    policy: &str,
    episodes: usize,
    jobs: usize,
    out: &Path,
) -> Result<i32> {
    if episodes == 0 {
        return Err(Error::Config("--episodes must be at least 1".into()));
    }
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let base = cfg.episode.seed;
    // Each worker owns its environment, filter, and RNG stream; the
    // reduce is ordered by episode index, so the summary is identical
    // for any worker count.
    let results: Vec<(u64, Result<EpisodeMetrics>)> = pool.install(|| {
        (0..episodes)
            .into_par_iter()
            .map(|i| {
                let seed = base + i as u64;
                (seed, run_episode(cfg, policy, seed).map(|(_, m)| m))
            })
            .collect()
    });

    let mut metrics = Vec::with_capacity(episodes);
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(m) => metrics.push(m),
            Err(e) => failures.push((seed, e)),
        }
    }
    if !failures.is_empty() {
        eprintln!("{} of {episodes} episodes failed:", failures.len());
        for (seed, e) in &failures {
            eprintln!("  seed {seed}: {e}");
        }
    }
    if metrics.is_empty() {
        return Ok(EXIT_RUNTIME);
    }
    let summary = summarize(&metrics, base)?;
    let table = summary.render_table();
    println!("{table}");
    std::fs::write(out.join("summary.txt"), &table)?;
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}
