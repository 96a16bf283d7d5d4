//! Force-trace summaries over recorded episodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Trajectory;
use crate::gripper::OutcomeLabel;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("batch has no episodes")]
    EmptyBatch,
    #[error("baseline mean peak force is zero")]
    ZeroBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: u64,
    pub task: String,
    pub label: Option<OutcomeLabel>,
    /// N
    pub peak_force: f64,
    /// Mean sensed force over recorded steps with non-zero force (N).
    pub mean_hold_force: f64,
    /// Sensed force at each recorded step (N).
    pub force_curve: Vec<f64>,
}

impl EpisodeSummary {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        let f_max = t.header.f_max;
        let force_curve: Vec<f64> = t.steps.iter().map(|s| s.observation.force_norm * f_max).collect();
        let held: Vec<f64> = force_curve.iter().copied().filter(|f| *f > 0.0).collect();
        let mean_hold_force = if held.is_empty() {
            0.0
        } else {
            held.iter().sum::<f64>() / held.len() as f64
        };
        let peak_force = match &t.header.outcome {
            Some(o) => o.peak_force,
            None => force_curve.iter().copied().fold(0.0, f64::max),
        };
        Self {
            episode_id: t.header.episode_id,
            task: t.header.task.clone(),
            label: t.header.outcome.map(|o| o.label),
            peak_force,
            mean_hold_force,
            force_curve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: usize,
    /// Episodes carrying an outcome label; rates are fractions of these.
    pub labeled: usize,
    pub success_rate: f64,
    pub slip_rate: f64,
    pub damage_rate: f64,
    pub mean_peak_force: f64,
    pub mean_hold_force: f64,
    /// Mean force per recorded step, over the episodes that reach that step.
    pub mean_curve: Vec<f64>,
}

impl BatchSummary {
    pub fn from_episodes(episodes: &[EpisodeSummary]) -> Result<Self, AnalysisError> {
        if episodes.is_empty() {
            return Err(AnalysisError::EmptyBatch);
        }
        let n = episodes.len() as f64;
        let count = |l: OutcomeLabel| episodes.iter().filter(|e| e.label == Some(l)).count();
        let labeled = episodes.iter().filter(|e| e.label.is_some()).count();
        let rate = |c: usize| if labeled == 0 { 0.0 } else { c as f64 / labeled as f64 };
        let len = episodes.iter().map(|e| e.force_curve.len()).max().unwrap_or(0);
        let mean_curve = (0..len)
            .map(|k| {
                let vals: Vec<f64> = episodes.iter().filter_map(|e| e.force_curve.get(k).copied()).collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect();
        Ok(Self {
            episodes: episodes.len(),
            labeled,
            success_rate: rate(count(OutcomeLabel::Success)),
            slip_rate: rate(count(OutcomeLabel::Slip)),
            damage_rate: rate(count(OutcomeLabel::Damage)),
            mean_peak_force: episodes.iter().map(|e| e.peak_force).sum::<f64>() / n,
            mean_hold_force: episodes.iter().map(|e| e.mean_hold_force).sum::<f64>() / n,
            mean_curve,
        })
    }

    pub fn from_trajectories(ts: &[Trajectory]) -> Result<Self, AnalysisError> {
        let eps: Vec<EpisodeSummary> = ts.iter().map(EpisodeSummary::from_trajectory).collect();
        Self::from_episodes(&eps)
    }

    /// Two-column `step mean_force_n` text for plotting.
    pub fn curve_data(&self) -> String {
        let mut out = String::from("# step mean_force_n\n");
        for (k, f) in self.mean_curve.iter().enumerate() {
            out.push_str(&format!("{k} {f}\n"));
        }
        out
    }
}

/// Relative drop of the mean peak force from batch `a` to batch `b`.
pub fn percentage_reduction(a: &BatchSummary, b: &BatchSummary) -> Result<f64, AnalysisError> {
    if a.mean_peak_force == 0.0 {
        return Err(AnalysisError::ZeroBaseline);
    }
    Ok((a.mean_peak_force - b.mean_peak_force) / a.mean_peak_force)
}
