use std::sync::Arc;

use crate::agent::{ActionId, AgentError};
use crate::encoder::{encode, OccupancyGrid};
use crate::sim::{build_scenario, EgoCommand, Outcome, RoadNetwork, ScenarioId, SimConfig, Simulation};

/// Per-step rewards produced by one macro-action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionResult {
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

/// An episodic decision problem driven by macro-actions.
pub trait Environment {
    type Obs;

    fn observe(&self) -> Self::Obs;
    fn is_terminal(&self) -> bool;
    fn execute(&mut self, action: ActionId) -> Result<ActionResult, AgentError>;
}

/// Creates independent episodes from a seed.
pub trait EpisodeFactory: Sync {
    type Env: Environment;

    fn episode(&self, seed: u64) -> Self::Env;
}

/// One intersection episode seen through the occupancy grid.
#[derive(Debug, Clone)]
pub struct IntersectionEnv {
    sim: Simulation,
}

impl IntersectionEnv {
    pub fn new(network: Arc<RoadNetwork>, cfg: SimConfig, seed: u64) -> Self {
        Self {
            sim: Simulation::new(network, cfg, seed),
        }
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.sim.state().outcome()
    }
}

impl Environment for IntersectionEnv {
    type Obs = OccupancyGrid;

    fn observe(&self) -> OccupancyGrid {
        let state = self.sim.state();
        encode(state, &state.network().grid_frame)
    }

    fn is_terminal(&self) -> bool {
        self.sim.state().is_terminal()
    }

    /// Waits run for their duration unless the episode ends first; Go hands
    /// the ego to its car-following model until the episode ends.
    fn execute(&mut self, action: ActionId) -> Result<ActionResult, AgentError> {
        if self.is_terminal() {
            return Err(AgentError::EpisodeOver);
        }
        let (command, limit) = match action.wait_steps() {
            Some(k) => (EgoCommand::Wait, k),
            None => (EgoCommand::Go, u32::MAX),
        };
        let mut rewards = Vec::new();
        for _ in 0..limit {
            let (events, reward) = self.sim.step(command)?;
            rewards.push(reward);
            if events.outcome().is_some() {
                break;
            }
        }
        Ok(ActionResult {
            rewards,
            terminal: self.is_terminal(),
        })
    }
}

/// Episode source for one scenario.
#[derive(Debug, Clone)]
pub struct IntersectionTask {
    pub network: Arc<RoadNetwork>,
    pub cfg: SimConfig,
}

impl IntersectionTask {
    pub fn new(scenario: ScenarioId, cfg: SimConfig) -> Self {
        Self {
            network: Arc::new(build_scenario(scenario)),
            cfg,
        }
    }

    pub fn scenario(&self) -> ScenarioId {
        self.network.scenario
    }
}

impl EpisodeFactory for IntersectionTask {
    type Env = IntersectionEnv;

    fn episode(&self, seed: u64) -> IntersectionEnv {
        IntersectionEnv::new(Arc::clone(&self.network), self.cfg, seed)
    }
}
