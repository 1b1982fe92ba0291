use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{play_greedy, EpisodeFactory, IntersectionTask};
use crate::harness::HarnessError;
use crate::nn::QNetwork;
use crate::sim::{Outcome, ScenarioId};

/// Aggregate greedy-policy performance on one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: ScenarioId,
    pub n_episodes: usize,
    pub pct_success: f64,
    pub pct_collision: f64,
    pub pct_timeout: f64,
    /// Mean episode duration over successful episodes, 0 if none succeeded.
    pub avg_time_success: f64,
    /// Mean over all episodes of the summed time other vehicles spent braking.
    pub avg_brake_time: f64,
}

impl EvaluationReport {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Success => self.pct_success,
            Metric::Collision => self.pct_collision,
            Metric::AvgTime => self.avg_time_success,
            Metric::AvgBrake => self.avg_brake_time,
        }
    }
}

/// The four reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "pct_success")]
    Success,
    #[serde(rename = "pct_collision")]
    Collision,
    #[serde(rename = "avg_time_success")]
    AvgTime,
    #[serde(rename = "avg_brake_time")]
    AvgBrake,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Success, Metric::Collision, Metric::AvgTime, Metric::AvgBrake];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Success => "pct_success",
            Metric::Collision => "pct_collision",
            Metric::AvgTime => "avg_time_success",
            Metric::AvgBrake => "avg_brake_time",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Parse(format!("unknown metric `{s}`")))
    }
}

struct EpisodeResult {
    outcome: Outcome,
    time: f64,
    brake: f64,
}

/// Runs `n_episodes` greedy episodes. Episode `i` always uses the same
/// traffic seed for a given `seed`, so different networks evaluated with the
/// same seed face identical arrival streams.
pub fn evaluate(
    net: &QNetwork,
    task: &IntersectionTask,
    n_episodes: usize,
    seed: u64,
) -> Result<EvaluationReport, HarnessError> {
    if n_episodes == 0 {
        return Err(HarnessError::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_episodes).map(|_| rng.next_u64()).collect();
    let results = seeds
        .par_iter()
        .map(|&s| {
            let mut env = task.episode(s);
            play_greedy(net, &mut env)?;
            let sim = env.simulation();
            Ok(EpisodeResult {
                outcome: env.outcome().expect("greedy play runs to termination"),
                time: sim.state().elapsed(sim.config()),
                brake: sim.brake_time(),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let n = n_episodes as f64;
    let count = |o| results.iter().filter(|r| r.outcome == o).count();
    let successes = count(Outcome::Success);
    let collisions = count(Outcome::Collision);
    let timeouts = count(Outcome::Timeout);
    let success_time: f64 = results
        .iter()
        .filter(|r| r.outcome == Outcome::Success)
        .map(|r| r.time)
        .sum();
    Ok(EvaluationReport {
        task: task.scenario(),
        n_episodes,
        pct_success: 100.0 * successes as f64 / n,
        pct_collision: 100.0 * collisions as f64 / n,
        pct_timeout: 100.0 * timeouts as f64 / n,
        avg_time_success: if successes == 0 {
            0.0
        } else {
            success_time / successes as f64
        },
        avg_brake_time: results.iter().map(|r| r.brake).sum::<f64>() / n,
    })
}
