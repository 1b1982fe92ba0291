//! Microscopic simulator for the intersection scenarios.
//!
//! Traffic vehicles drive straight along their lanes under IDM with Krauss
//! imperfection and treat the ego as an obstacle once it occupies their lane.
//! The ego waits at the stop line until it receives its first `Go`; from then
//! on it follows its path under IDM and ignores further commands.

mod idm;
mod scenario;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedRect, Point};

pub use idm::{idm_acceleration, krauss_speed_update, IdmParams};
pub use scenario::{
    build_scenario, LaneGeometry, Maneuver, RoadNetwork, ScenarioCatalog, ScenarioId,
    BUILTIN_SCENARIOS,
};

pub const STEP_COST: f64 = 0.01;
pub const SUCCESS_REWARD: f64 = 1.0;
pub const COLLISION_REWARD: f64 = -1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step called on an episode that already ended ({0:?})")]
    EpisodeTerminated(Outcome),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario geometry: {0}")]
    Geometry(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step length in seconds.
    pub dt: f64,
    pub max_steps: u32,
    /// Per-lane probability per second that a vehicle is emitted.
    pub depart_probability: f64,
    pub idm: IdmParams,
    pub krauss_sigma: f64,
    /// Traffic-only simulation before the episode clock starts, so lanes
    /// begin in a populated steady state.
    pub warmup_seconds: f64,
    /// A traffic vehicle counts as braking when its acceleration is below this.
    pub brake_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            max_steps: 100,
            depart_probability: 0.2,
            idm: IdmParams::default(),
            krauss_sigma: 0.5,
            warmup_seconds: 10.0,
            brake_threshold: -0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(0.0..=1.0).contains(&self.depart_probability) {
            return bad("depart_probability must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.krauss_sigma) {
            return bad("krauss_sigma must lie in [0, 1]");
        }
        if !self.idm.is_valid() {
            return bad("idm parameters must be strictly positive");
        }
        if !(self.warmup_seconds >= 0.0 && self.warmup_seconds.is_finite()) {
            return bad("warmup_seconds must be non-negative");
        }
        if !(self.brake_threshold < 0.0) {
            return bad("brake_threshold must be negative");
        }
        Ok(())
    }

    /// Per-step emission probability equivalent to the per-second rate:
    /// `1 − (1 − p)^dt`.
    pub fn spawn_probability_per_step(&self) -> f64 {
        1.0 - (1.0 - self.depart_probability).powf(self.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EgoCommand {
    Wait,
    Go,
}

/// A traffic vehicle. `position` is the arc length of its center along its lane.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: u64,
    pub lane: usize,
    pub position: f64,
    pub speed: f64,
    /// Acceleration realized over the last step.
    pub accel: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoState {
    /// Arc length of the ego center along its path.
    pub path_position: f64,
    pub speed: f64,
    pub accel: f64,
    /// Set by the first `Go`; never cleared.
    pub committed: bool,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepEvents {
    pub collision: bool,
    pub ego_reached_goal: bool,
    pub timeout: bool,
    pub braking_vehicle_count: usize,
}

impl StepEvents {
    pub fn outcome(&self) -> Option<Outcome> {
        if self.collision {
            Some(Outcome::Collision)
        } else if self.ego_reached_goal {
            Some(Outcome::Success)
        } else if self.timeout {
            Some(Outcome::Timeout)
        } else {
            None
        }
    }

    /// Step cost plus any terminal reward.
    pub fn reward(&self) -> f64 {
        -STEP_COST
            + match self.outcome() {
                Some(Outcome::Success) => SUCCESS_REWARD,
                Some(Outcome::Collision) => COLLISION_REWARD,
                _ => 0.0,
            }
    }
}

/// Independent random streams: lane emissions and driver imperfection.
///
/// Keeping emissions on their own stream means two policies evaluated with
/// the same seed see the same arrival attempts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficRng {
    pub spawn: ChaCha8Rng,
    pub driver: ChaCha8Rng,
}

impl TrafficRng {
    pub fn from_seed(seed: u64) -> Self {
        let mut spawn = ChaCha8Rng::seed_from_u64(seed);
        spawn.set_stream(0);
        let mut driver = ChaCha8Rng::seed_from_u64(seed);
        driver.set_stream(1);
        Self { spawn, driver }
    }
}

/// Every vehicle's kinematic state plus the episode clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    network: Arc<RoadNetwork>,
    traffic: Vec<VehicleState>,
    ego: EgoState,
    step: u32,
    next_id: u64,
    outcome: Option<Outcome>,
}

impl SimState {
    /// Fresh state with an empty road and the ego waiting at the stop line.
    pub fn empty(network: Arc<RoadNetwork>) -> Self {
        let ego = EgoState {
            path_position: 0.0,
            speed: 0.0,
            accel: 0.0,
            committed: false,
            length: network.vehicle_length,
            width: network.vehicle_width,
        };
        Self {
            network,
            traffic: Vec::new(),
            ego,
            step: 0,
            next_id: 0,
            outcome: None,
        }
    }

    /// Empty state followed by `cfg.warmup_seconds` of traffic-only simulation.
    pub fn with_warmup(network: Arc<RoadNetwork>, cfg: &SimConfig, rng: &mut TrafficRng) -> Self {
        let mut state = Self::empty(network);
        let warmup_steps = (cfg.warmup_seconds / cfg.dt).round() as usize;
        for _ in 0..warmup_steps {
            state.advance_traffic(cfg, &mut rng.driver);
            state.despawn();
            spawn_traffic(&mut state, cfg, &mut rng.spawn);
        }
        state
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.network
    }

    pub fn traffic(&self) -> &[VehicleState] {
        &self.traffic
    }

    pub fn ego(&self) -> &EgoState {
        &self.ego
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    pub fn elapsed(&self, cfg: &SimConfig) -> f64 {
        self.step as f64 * cfg.dt
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    /// Inserts a traffic vehicle directly (test and scripting hook).
    pub fn insert_vehicle(&mut self, lane: usize, position: f64, speed: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.traffic.push(VehicleState {
            id,
            lane,
            position,
            speed,
            accel: 0.0,
            length: self.network.vehicle_length,
            width: self.network.vehicle_width,
        });
        id
    }

    /// Moves the ego along its path (test and scripting hook).
    pub fn place_ego(&mut self, path_position: f64, speed: f64, committed: bool) {
        self.ego.path_position = path_position;
        self.ego.speed = speed;
        self.ego.committed = committed;
    }

    pub fn vehicle_center(&self, v: &VehicleState) -> Point {
        let lane = &self.network.lanes[v.lane];
        lane.centerline.points()[0] + lane.travel_direction * v.position
    }

    pub fn vehicle_rect(&self, v: &VehicleState) -> OrientedRect {
        OrientedRect {
            center: self.vehicle_center(v),
            heading: self.network.lanes[v.lane].travel_direction,
            length: v.length,
            width: v.width,
        }
    }

    /// Ego center and unit heading.
    pub fn ego_pose(&self) -> (Point, Point) {
        self.network.ego_path.pose_at(self.ego.path_position)
    }

    pub fn ego_rect(&self) -> OrientedRect {
        let (center, heading) = self.ego_pose();
        OrientedRect {
            center,
            heading,
            length: self.ego.length,
            width: self.ego.width,
        }
    }

    fn lane_order(&self) -> Vec<Vec<usize>> {
        let mut by_lane = vec![Vec::new(); self.network.lanes.len()];
        for (i, v) in self.traffic.iter().enumerate() {
            by_lane[v.lane].push(i);
        }
        for idx in &mut by_lane {
            idx.sort_by(|&a, &b| {
                self.traffic[a]
                    .position
                    .total_cmp(&self.traffic[b].position)
                    .then(self.traffic[a].id.cmp(&self.traffic[b].id))
            });
        }
        by_lane
    }

    /// The ego as an obstacle in `lane`: (rear coordinate along the lane,
    /// center coordinate, speed along the lane). `None` unless the ego
    /// footprint laterally overlaps the lane strip.
    fn ego_in_lane(&self, lane: &LaneGeometry) -> Option<(f64, f64, f64)> {
        let rect = self.ego_rect();
        let (x_lo, x_hi) = rect.project(Point::new(1.0, 0.0));
        let overlap = x_hi.min(lane.x_range.1) - x_lo.max(lane.x_range.0);
        if overlap <= crate::geometry::CONTACT_TOLERANCE {
            return None;
        }
        let origin = lane.centerline.points()[0].dot(lane.travel_direction);
        let (lo, _) = rect.project(lane.travel_direction);
        let center = lane.longitudinal(rect.center);
        let speed = (rect.heading.dot(lane.travel_direction) * self.ego.speed).max(0.0);
        Some((lo - origin, center, speed))
    }

    /// IDM + Krauss update of every traffic vehicle. Returns how many braked
    /// harder than the configured threshold.
    fn advance_traffic<R: Rng + ?Sized>(&mut self, cfg: &SimConfig, rng: &mut R) -> usize {
        let order = self.lane_order();
        let mut new_speeds = vec![0.0; self.traffic.len()];
        for (lane_idx, idx) in order.iter().enumerate() {
            let lane = &self.network.lanes[lane_idx];
            let ego = self.ego_in_lane(lane);
            for (k, &i) in idx.iter().enumerate() {
                let v = &self.traffic[i];
                let front = v.position + v.length / 2.0;
                let mut gap = f64::INFINITY;
                let mut lead_speed = 0.0;
                if let Some(&j) = idx.get(k + 1) {
                    let lead = &self.traffic[j];
                    gap = lead.position - lead.length / 2.0 - front;
                    lead_speed = lead.speed;
                }
                if let Some((ego_rear, ego_center, ego_speed)) = ego {
                    if ego_center > v.position && ego_rear - front < gap {
                        gap = ego_rear - front;
                        lead_speed = ego_speed;
                    }
                }
                let mut params = cfg.idm;
                params.desired_speed = params.desired_speed.min(lane.speed_limit);
                let acc = idm_acceleration(v.speed, gap, lead_speed, &params);
                let desired = (v.speed + acc * cfg.dt).max(0.0);
                new_speeds[i] = krauss_speed_update(
                    v.speed,
                    desired,
                    cfg.krauss_sigma,
                    cfg.idm.max_accel,
                    cfg.dt,
                    rng,
                );
            }
        }
        let mut braking = 0;
        for (v, new_speed) in self.traffic.iter_mut().zip(new_speeds) {
            v.accel = (new_speed - v.speed) / cfg.dt;
            v.speed = new_speed;
            v.position += new_speed * cfg.dt;
            if v.accel < cfg.brake_threshold {
                braking += 1;
            }
        }
        braking
    }

    /// Nearest traffic vehicle ahead of the ego in the lane it merges into.
    fn ego_leader(&self) -> (f64, f64) {
        let Some(m) = self.network.merge_lane else {
            return (f64::INFINITY, 0.0);
        };
        let lane = &self.network.lanes[m];
        let (center, _) = self.ego_pose();
        let ego_center = lane.longitudinal(center);
        let ego_front = ego_center + self.ego.length / 2.0;
        self.traffic
            .iter()
            .filter(|v| v.lane == m && v.position > ego_center)
            .map(|v| (v.position - v.length / 2.0 - ego_front, v.speed))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::INFINITY, 0.0))
    }

    fn advance_ego(&mut self, cfg: &SimConfig) {
        if !self.ego.committed {
            self.ego.accel = 0.0;
            return;
        }
        let (gap, lead_speed) = self.ego_leader();
        let acc = idm_acceleration(self.ego.speed, gap, lead_speed, &cfg.idm);
        let new_speed = (self.ego.speed + acc * cfg.dt).max(0.0);
        self.ego.accel = (new_speed - self.ego.speed) / cfg.dt;
        self.ego.speed = new_speed;
        self.ego.path_position += new_speed * cfg.dt;
    }

    fn despawn(&mut self) {
        let lanes = &self.network.lanes;
        self.traffic
            .retain(|v| v.position - v.length / 2.0 <= lanes[v.lane].length());
    }
}

/// Emits at most one vehicle per lane at the lane start, at the speed limit.
///
/// Each lane consumes exactly one uniform draw per call. Emission is skipped
/// when a vehicle near the entry would leave less than the kinematically safe
/// gap `s0 + max(0, v² − v_lead²) / (2·emergency_decel)`.
pub fn spawn_traffic<R: Rng + ?Sized>(state: &mut SimState, cfg: &SimConfig, rng: &mut R) -> usize {
    let p = cfg.spawn_probability_per_step();
    let mut spawned = 0;
    for lane_idx in 0..state.network.lanes.len() {
        let u: f64 = rng.gen();
        if u >= p {
            continue;
        }
        let speed = state.network.lanes[lane_idx].speed_limit;
        let length = state.network.vehicle_length;
        let front = length;
        let blocked = state.traffic.iter().filter(|v| v.lane == lane_idx).any(|v| {
            let gap = v.position - v.length / 2.0 - front;
            let needed = cfg.idm.min_gap
                + (speed * speed - v.speed * v.speed).max(0.0) / (2.0 * cfg.idm.emergency_decel);
            gap < needed
        });
        if blocked {
            continue;
        }
        state.insert_vehicle(lane_idx, length / 2.0, speed);
        spawned += 1;
    }
    spawned
}

/// Collision and goal flags for the current state.
///
/// A collision requires strictly positive overlap between the ego footprint
/// and a traffic footprint; it takes precedence over reaching the goal.
pub fn detect_collisions(state: &SimState) -> StepEvents {
    let ego = state.ego_rect();
    let collision = state
        .traffic
        .iter()
        .any(|v| state.vehicle_rect(v).overlaps(&ego));
    let reached = state.ego.path_position >= state.network.ego_path.length() - 1e-9;
    StepEvents {
        collision,
        ego_reached_goal: reached && !collision,
        timeout: false,
        braking_vehicle_count: 0,
    }
}

/// Number of same-lane traffic pairs whose footprints overlap.
pub fn traffic_conflicts(state: &SimState) -> usize {
    state
        .lane_order()
        .iter()
        .map(|idx| {
            idx.windows(2)
                .filter(|w| {
                    let a = &state.traffic[w[0]];
                    let b = &state.traffic[w[1]];
                    (b.position - b.length / 2.0) - (a.position + a.length / 2.0)
                        < -crate::geometry::CONTACT_TOLERANCE
                })
                .count()
        })
        .sum()
}

/// Advances the simulation by one step.
pub fn step(
    state: &mut SimState,
    command: EgoCommand,
    cfg: &SimConfig,
    rng: &mut TrafficRng,
) -> Result<StepEvents, SimError> {
    if let Some(outcome) = state.outcome {
        return Err(SimError::EpisodeTerminated(outcome));
    }
    if command == EgoCommand::Go {
        state.ego.committed = true;
    }
    let braking = state.advance_traffic(cfg, &mut rng.driver);
    state.advance_ego(cfg);
    state.despawn();
    spawn_traffic(state, cfg, &mut rng.spawn);
    state.step += 1;

    let mut events = detect_collisions(state);
    events.braking_vehicle_count = braking;
    events.timeout = state.step >= cfg.max_steps && !events.collision && !events.ego_reached_goal;
    state.outcome = events.outcome();
    Ok(events)
}

/// One scenario episode with its own random streams and bookkeeping.
#[derive(Debug, Clone)]
pub struct Simulation {
    state: SimState,
    cfg: SimConfig,
    rng: TrafficRng,
    brake_time: f64,
    total_reward: f64,
}

impl Simulation {
    pub fn new(network: Arc<RoadNetwork>, cfg: SimConfig, seed: u64) -> Self {
        let mut rng = TrafficRng::from_seed(seed);
        let state = SimState::with_warmup(network, &cfg, &mut rng);
        Self {
            state,
            cfg,
            rng,
            brake_time: 0.0,
            total_reward: 0.0,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn brake_time(&self) -> f64 {
        self.brake_time
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// Steps once; returns the events and the reward earned in that step.
    pub fn step(&mut self, command: EgoCommand) -> Result<(StepEvents, f64), SimError> {
        let events = step(&mut self.state, command, &self.cfg, &mut self.rng)?;
        self.brake_time += events.braking_vehicle_count as f64 * self.cfg.dt;
        let reward = events.reward();
        self.total_reward += reward;
        Ok((events, reward))
    }
}

/// Anything that can drive the ego one step at a time.
pub trait EgoPolicy {
    fn command(&mut self, state: &SimState) -> EgoCommand;
}

impl<F: FnMut(&SimState) -> EgoCommand> EgoPolicy for F {
    fn command(&mut self, state: &SimState) -> EgoCommand {
        self(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub command: EgoCommand,
    pub ego_position: f64,
    pub ego_speed: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub outcome: Outcome,
    pub steps_taken: u32,
    pub elapsed_time: f64,
    pub total_other_brake_time: f64,
    pub total_reward: f64,
    pub trajectory: Vec<StepRecord>,
}

/// Runs one episode to termination under `policy`.
pub fn run_episode<P: EgoPolicy + ?Sized>(
    policy: &mut P,
    network: &Arc<RoadNetwork>,
    cfg: &SimConfig,
    seed: u64,
) -> Result<EpisodeRecord, SimError> {
    let mut sim = Simulation::new(Arc::clone(network), *cfg, seed);
    let mut trajectory = Vec::new();
    loop {
        let command = policy.command(sim.state());
        let (events, reward) = sim.step(command)?;
        trajectory.push(StepRecord {
            command,
            ego_position: sim.state().ego.path_position,
            ego_speed: sim.state().ego.speed,
            reward,
        });
        if let Some(outcome) = events.outcome() {
            return Ok(EpisodeRecord {
                scenario: network.scenario,
                seed,
                outcome,
                steps_taken: sim.state().step,
                elapsed_time: sim.state().elapsed(cfg),
                total_other_brake_time: sim.brake_time,
                total_reward: sim.total_reward,
                trajectory,
            });
        }
    }
}
