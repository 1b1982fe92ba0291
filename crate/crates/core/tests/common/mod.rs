//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use crossroads_core::agent::{ActionId, ActionResult, AgentError, Environment, EpisodeFactory};
use crossroads_core::encoder::OccupancyGrid;
use crossroads_core::nn::{ForwardCache, QFunction, QNetwork, NUM_ACTIONS};
use rand::Rng;

/// One finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradSample {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// Relative error with a floor so that vanishing gradients compare absolutely.
    pub fn rel_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-6)
    }
}

/// Loss `sum_a c_a Q_a`; its gradient w.r.t. Q is exactly `c`.
fn probe_loss(net: &QNetwork, input: &OccupancyGrid, c: &[f64; NUM_ACTIONS]) -> f64 {
    let q = net.forward(input).unwrap().q_values();
    q.iter().zip(c).map(|(q, c)| q * c).sum()
}

/// Central differences on `per_tensor` random entries of every parameter tensor.
pub fn grad_check<R: Rng>(net: &QNetwork, input: &OccupancyGrid, per_tensor: usize, h: f64, rng: &mut R) -> Vec<GradSample> {
    let c: [f64; NUM_ACTIONS] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let cache = net.forward(input).unwrap();
    let grads = net.backward(&cache, &c).unwrap();
    let mut out = Vec::new();
    let mut probe = net.clone();
    for (t, g) in grads.iter().enumerate() {
        for _ in 0..per_tensor {
            let i = rng.gen_range(0..g.len());
            let orig = probe.params()[t].data()[i];
            probe.params_mut()[t].data_mut()[i] = orig + h;
            let up = probe_loss(&probe, input, &c);
            probe.params_mut()[t].data_mut()[i] = orig - h;
            let down = probe_loss(&probe, input, &c);
            probe.params_mut()[t].data_mut()[i] = orig;
            out.push(GradSample {
                tensor: t,
                index: i,
                analytic: g.data()[i],
                numeric: (up - down) / (2.0 * h),
            });
        }
    }
    out
}

pub fn random_grid<R: Rng>(rng: &mut R) -> OccupancyGrid {
    let data = (0..crossroads_core::encoder::GRID_LEN).map(|_| rng.gen_range(0.0..1.0)).collect();
    OccupancyGrid::from_vec(data).unwrap()
}

/// Forward power sums: `G_t = sum_k gamma^k r_{t+k}` over the flattened step rewards.
pub fn naive_returns(rewards: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let flat: Vec<f64> = rewards.iter().flatten().copied().collect();
    let mut start = 0;
    rewards
        .iter()
        .map(|d| {
            let g = flat[start..]
                .iter()
                .enumerate()
                .map(|(k, r)| gamma.powi(k as i32) * r)
                .sum();
            start += d.len();
            g
        })
        .collect()
}

/// Deterministic 5-state chain. Action 0 advances at a small cost; from
/// the last state it exits instead. Actions 1 to 4 stop immediately, paying
/// more in the last state. Stopping is optimal only there, so every
/// non-greedy action is terminal and its return does not depend on the
/// exploration policy.
pub const CHAIN_STATES: usize = 5;
pub const CHAIN_ADVANCE_COST: f64 = -0.05;
pub const CHAIN_EXIT_REWARD: f64 = 0.5;
pub const CHAIN_STOP_REWARD: [f64; 4] = [0.5, 0.55, 0.6, 0.65];
pub const CHAIN_GOAL_STOP_REWARD: [f64; 4] = [0.6, 0.7, 0.9, 0.8];

#[derive(Debug, Clone, Copy)]
pub struct ChainOutcome {
    pub reward: f64,
    pub next: Option<usize>,
}

pub fn chain_step(state: usize, action: usize) -> ChainOutcome {
    let last = state + 1 == CHAIN_STATES;
    match action {
        0 if last => ChainOutcome {
            reward: CHAIN_EXIT_REWARD,
            next: None,
        },
        0 => ChainOutcome {
            reward: CHAIN_ADVANCE_COST,
            next: Some(state + 1),
        },
        a if last => ChainOutcome {
            reward: CHAIN_GOAL_STOP_REWARD[a - 1],
            next: None,
        },
        a => ChainOutcome {
            reward: CHAIN_STOP_REWARD[a - 1],
            next: None,
        },
    }
}

/// Bellman optimality iteration to a fixed point; returns Q*(s, a).
pub fn chain_value_iteration(gamma: f64) -> [[f64; NUM_ACTIONS]; CHAIN_STATES] {
    let mut v = [0.0; CHAIN_STATES];
    let mut q = [[0.0; NUM_ACTIONS]; CHAIN_STATES];
    loop {
        for s in 0..CHAIN_STATES {
            for a in 0..NUM_ACTIONS {
                let o = chain_step(s, a);
                q[s][a] = o.reward + gamma * o.next.map_or(0.0, |n| v[n]);
            }
        }
        let next: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::MIN, f64::max)).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v.copy_from_slice(&next);
        if delta < 1e-14 {
            return q;
        }
    }
}

pub fn one_hot(state: usize) -> Vec<f64> {
    let mut v = vec![0.0; CHAIN_STATES];
    v[state] = 1.0;
    v
}

#[derive(Debug, Clone)]
pub struct ChainEnv {
    state: Option<usize>,
    last: usize,
}

impl Environment for ChainEnv {
    type Obs = Vec<f64>;

    fn observe(&self) -> Vec<f64> {
        one_hot(self.state.unwrap_or(self.last))
    }

    fn is_terminal(&self) -> bool {
        self.state.is_none()
    }

    fn execute(&mut self, action: ActionId) -> Result<ActionResult, AgentError> {
        let s = self.state.ok_or(AgentError::EpisodeOver)?;
        let o = chain_step(s, action.index());
        self.state = o.next;
        self.last = s;
        Ok(ActionResult {
            rewards: vec![o.reward],
            terminal: o.next.is_none(),
        })
    }
}

/// Episodes start in a state chosen uniformly from the seed.
pub struct ChainTask;

impl EpisodeFactory for ChainTask {
    type Env = ChainEnv;

    fn episode(&self, seed: u64) -> ChainEnv {
        let s = (seed % CHAIN_STATES as u64) as usize;
        ChainEnv { state: Some(s), last: s }
    }
}

pub const CHAIN_GAMMA: f64 = 1.0;
pub const CHAIN_EPSILON: f64 = 0.02;
/// (iterations, learning rate) per phase; the last phase anneals.
pub const CHAIN_SCHEDULE: [(u64, f64); 2] = [(12_000, 3e-4), (4_000, 1e-4)];

/// Trains a small dense network on the chain with the production trainer.
pub fn train_chain(seed: u64) -> crossroads_core::nn::MlpQNetwork {
    use crossroads_core::agent::{TrainConfig, Trainer};
    use crossroads_core::nn::{MlpQNetwork, RmsPropConfig};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut net = MlpQNetwork::init(CHAIN_STATES, &[32], 0.01, &mut rng);
    for (phase, (iterations, learning_rate)) in CHAIN_SCHEDULE.into_iter().enumerate() {
        let cfg = TrainConfig {
            epsilon: CHAIN_EPSILON,
            gamma: CHAIN_GAMMA,
            seed: seed.wrapping_add(phase as u64),
            optimizer: RmsPropConfig {
                learning_rate,
                ..RmsPropConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(net, cfg).unwrap();
        trainer
            .train(&ChainTask, iterations, 0, |_, _| Ok::<_, AgentError>(()))
            .unwrap();
        net = trainer.into_net();
    }
    net
}

#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct FuzzReport {
    pub steps: usize,
    pub episodes: usize,
    pub traffic_conflicts: usize,
    pub negative_speeds: usize,
    pub non_finite: usize,
    pub vehicles_seen: usize,
}

/// Random Wait/Go episodes until `steps` simulator steps have elapsed.
/// Returns the invariant tally and a bit-level trace of every state.
pub fn fuzz_scenario(
    id: crossroads_core::sim::ScenarioId,
    cfg: crossroads_core::sim::SimConfig,
    steps: usize,
    seed: u64,
) -> (FuzzReport, Vec<u64>) {
    use crossroads_core::sim::{build_scenario, traffic_conflicts, EgoCommand, Simulation};
    use rand::SeedableRng;
    use std::sync::Arc;

    let network = Arc::new(build_scenario(id));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport::default();
    let mut trace = Vec::new();
    while report.steps < steps {
        let mut sim = Simulation::new(Arc::clone(&network), cfg, rng.gen());
        report.episodes += 1;
        let go_prob = rng.gen_range(0.0..0.1);
        while !sim.state().is_terminal() && report.steps < steps {
            let cmd = if rng.gen_bool(go_prob) { EgoCommand::Go } else { EgoCommand::Wait };
            sim.step(cmd).unwrap();
            report.steps += 1;
            let s = sim.state();
            report.traffic_conflicts += traffic_conflicts(s);
            report.vehicles_seen += s.traffic().len();
            for v in s.traffic() {
                report.negative_speeds += usize::from(v.speed < 0.0);
                report.non_finite += usize::from(!(v.position.is_finite() && v.speed.is_finite()));
                trace.extend([v.id, v.lane as u64, v.position.to_bits(), v.speed.to_bits()]);
            }
            let e = s.ego();
            report.negative_speeds += usize::from(e.speed < 0.0);
            trace.extend([e.path_position.to_bits(), e.speed.to_bits()]);
        }
    }
    (report, trace)
}
