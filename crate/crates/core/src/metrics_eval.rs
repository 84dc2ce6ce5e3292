//! Episode and batch evaluation metrics: interquartile means,
//! percentile-bootstrap confidence intervals, and per-constraint
//! violation percentages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::cbf_kit::ConstraintId;
use crate::error::{Error, Result};

/// The six per-episode evaluation metrics plus the violation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub inspected_weight: f64,
    pub total_reward: f64,
    /// Episode length, s.
    pub episode_length: f64,
    /// Total delta-v of the applied (safe) control, m/s.
    pub delta_v: f64,
    /// Total delta-v of the desired control, m/s. Matches `delta_v`
    /// when the filter never intervenes or is off.
    pub delta_v_desired: f64,
    /// Sum over inner steps of |tau_x|+|tau_y|+|tau_z| applied, N m.
    pub total_torque: f64,
    pub total_torque_desired: f64,
    pub violation: ViolationStats,
    pub termination: String,
}

/// Violation percentages over 1 s steps, strict `h < 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationStats {
    /// Percentage per constraint, in `ConstraintId::ALL` order.
    pub per_constraint: Vec<f64>,
    /// Percentage of steps where at least one constraint is violated.
    pub any: f64,
    pub steps: usize,
}

/// Counts violations from per-step h rows (each row aligned with
/// `ConstraintId::ALL`).
pub fn violation_stats(h_rows: &[Vec<f64>]) -> ViolationStats {
    let n_c = ConstraintId::ALL.len();
    let mut counts = vec![0usize; n_c];
    let mut any_count = 0usize;
    for row in h_rows {
        let mut any = false;
        for (i, h) in row.iter().enumerate().take(n_c) {
            if *h < 0.0 {
                counts[i] += 1;
                any = true;
            }
        }
        if any {
            any_count += 1;
        }
    }
    let total = h_rows.len().max(1) as f64;
    ViolationStats {
        per_constraint: counts.iter().map(|c| 100.0 * *c as f64 / total).collect(),
        any: 100.0 * any_count as f64 / total,
        steps: h_rows.len(),
    }
}

/// Interquartile mean with fractional boundary weights: each sorted
/// sample carries 1/n of probability mass and contributes by its
/// overlap with the [0.25, 0.75] band, so exactly the middle half of
/// the mass is averaged.
pub fn iqm(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut num = 0.0;
    let mut mass = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        let w = (hi.min(0.75) - lo.max(0.25)).max(0.0);
        num += w * x;
        mass += w;
    }
    Ok(num / mass)
}

/// Percentile bootstrap of the IQM statistic. Deterministic under the
/// seed; the interval is widened (if needed) to contain the point
/// estimate.
pub fn bootstrap_ci(
    samples: &[f64],
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let point = iqm(samples)?;
    let n = samples.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = samples[rng.gen_range(0..n)];
        }
        stats.push(iqm(&buf)?);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - confidence) / 2.0;
    let lo = percentile(&stats, tail);
    let hi = percentile(&stats, 1.0 - tail);
    Ok((lo.min(point), hi.max(point)))
}

/// Linear-interpolation percentile of a sorted slice, p in [0, 1].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let idx = p * (n - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub iqm: f64,
    pub ci95: (f64, f64),
    pub mean: f64,
}

/// Batch aggregate: IQM with bootstrap CI for the scalar metrics, and
/// mean violation percentages (means, so outliers are not hidden).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_episodes: usize,
    pub inspected_weight: MetricSummary,
    pub total_reward: MetricSummary,
    pub episode_length: MetricSummary,
    pub delta_v: MetricSummary,
    pub total_torque: MetricSummary,
    pub violation_any: MetricSummary,
    /// (row label, mean percentage) with the any-constraint aggregate
    /// first, then one row per constraint.
    pub violation_rows: Vec<(String, f64)>,
}

fn summarize_metric(values: &[f64], seed: u64) -> Result<MetricSummary> {
    Ok(MetricSummary {
        iqm: iqm(values)?,
        ci95: bootstrap_ci(values, 0.95, 10_000, seed)?,
        mean: values.iter().sum::<f64>() / values.len() as f64,
    })
}

pub fn summarize(metrics: &[EpisodeMetrics], seed: u64) -> Result<BatchSummary> {
    if metrics.is_empty() {
        return Err(Error::EmptySample);
    }
    let col = |f: fn(&EpisodeMetrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
    let mut violation_rows = vec![(
        "Any constraint".to_string(),
        metrics.iter().map(|m| m.violation.any).sum::<f64>() / metrics.len() as f64,
    )];
    for (i, id) in ConstraintId::ALL.iter().enumerate() {
        let mean = metrics
            .iter()
            .map(|m| m.violation.per_constraint[i])
            .sum::<f64>()
            / metrics.len() as f64;
        violation_rows.push((id.label().to_string(), mean));
    }
    Ok(BatchSummary {
        n_episodes: metrics.len(),
        inspected_weight: summarize_metric(&col(|m| m.inspected_weight), seed)?,
        total_reward: summarize_metric(&col(|m| m.total_reward), seed.wrapping_add(1))?,
        episode_length: summarize_metric(&col(|m| m.episode_length), seed.wrapping_add(2))?,
        delta_v: summarize_metric(&col(|m| m.delta_v), seed.wrapping_add(3))?,
        total_torque: summarize_metric(&col(|m| m.total_torque), seed.wrapping_add(4))?,
        violation_any: summarize_metric(&col(|m| m.violation.any), seed.wrapping_add(5))?,
        violation_rows,
    })
}

impl BatchSummary {
    /// Plain-text table for console output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("episodes: {}\n", self.n_episodes));
        out.push_str("metric                 IQM        95% CI                  mean\n");
        let row = |name: &str, m: &MetricSummary| {
            format!(
                "{:<20} {:>10.4} [{:>10.4}, {:>10.4}] {:>10.4}\n",
                name, m.iqm, m.ci95.0, m.ci95.1, m.mean
            )
        };
        out.push_str(&row("inspected weight", &self.inspected_weight));
        out.push_str(&row("total reward", &self.total_reward));
        out.push_str(&row("episode length [s]", &self.episode_length));
        out.push_str(&row("delta-v [m/s]", &self.delta_v));
        out.push_str(&row("total torque [N m]", &self.total_torque));
        out.push_str("\nmean safety violation percentage (1 s steps)\n");
        for (label, pct) in &self.violation_rows {
            out.push_str(&format!("{:<46} {:>8.4}\n", label, pct));
        }
        out
    }
}
