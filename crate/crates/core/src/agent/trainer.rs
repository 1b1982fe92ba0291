use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::agent::action::argmax;
use crate::agent::{
    compute_returns, select_action, ActionId, AgentError, Decision, Environment, EpisodeFactory,
    Experience, ReplayMemory, TrainConfig, Trajectory,
};
use crate::nn::{Features, ForwardCache, QFunction, RmsPropState, NUM_ACTIONS};

/// One gradient step on the mean squared error between each target and the
/// Q-value of the action that was taken. Returns the mean loss before the
/// update.
pub fn train_step<Q: QFunction>(
    net: &mut Q,
    optimizer: &mut RmsPropState,
    batch: &[&Experience<Q::Input>],
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grads = net.zero_grads();
    let mut loss = 0.0;
    for e in batch {
        let cache = net.forward(&e.state)?;
        let a = e.action.index();
        let err = cache.q_values()[a] - e.target;
        loss += err * err;
        let mut dq = [0.0; NUM_ACTIONS];
        dq[a] = 2.0 * err / n;
        net.backward_into(&cache, &dq, &mut grads)?;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(AgentError::NonFiniteLoss(format!(
            "mean loss {loss} over {} experiences",
            batch.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| g.data().iter().any(|v| !v.is_finite())) {
        return Err(AgentError::NonFiniteLoss(format!("gradient of parameter tensor {i}")));
    }
    optimizer.update(net.params_mut(), &grads)?;
    Ok(loss)
}

/// Runs one episode with an ε-greedy policy and records every decision.
pub fn rollout<Q, E, R>(net: &Q, env: &mut E, epsilon: f64, rng: &mut R) -> Result<Trajectory<Q::Input>, AgentError>
where
    Q: QFunction,
    E: Environment<Obs = Q::Input>,
    R: Rng + ?Sized,
{
    let mut traj = Trajectory::default();
    while !env.is_terminal() {
        let state = env.observe();
        let action = select_action(&net.q_values(&state)?, epsilon, rng);
        let result = env.execute(action)?;
        traj.decisions.push(Decision {
            state,
            action,
            rewards: result.rewards,
        });
    }
    traj.terminal = true;
    Ok(traj)
}

/// Runs the greedy policy to the end of the episode without recording.
pub fn play_greedy<Q, E>(net: &Q, env: &mut E) -> Result<(), AgentError>
where
    Q: QFunction,
    E: Environment<Obs = Q::Input>,
{
    while !env.is_terminal() {
        let q = net.q_values(&env.observe())?;
        env.execute(ActionId::ALL[argmax(&q)])?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub decisions: usize,
    pub steps: usize,
    pub undiscounted_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    /// 1-based index of the completed iteration.
    pub iteration: u64,
    /// `None` while the buffer holds less than one batch.
    pub loss: Option<f64>,
    pub episode: EpisodeSummary,
}

/// Owns a network, its optimizer state, the replay memory and the random
/// stream used for exploration, episode seeds and batch sampling.
#[derive(Debug, Clone)]
pub struct Trainer<Q: QFunction> {
    net: Q,
    optimizer: RmsPropState,
    memory: ReplayMemory<Q::Input>,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl<Q: QFunction> Trainer<Q> {
    pub fn new(net: Q, cfg: TrainConfig) -> Result<Self, AgentError> {
        cfg.validate()?;
        let optimizer = RmsPropState::new(cfg.optimizer, &net.params());
        Ok(Self {
            optimizer,
            memory: ReplayMemory::new(cfg.replay, cfg.buffer_capacity),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            net,
            cfg,
            iteration: 0,
        })
    }

    pub fn net(&self) -> &Q {
        &self.net
    }

    pub fn into_net(self) -> Q {
        self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn memory(&self) -> &ReplayMemory<Q::Input> {
        &self.memory
    }

    pub fn optimizer(&self) -> &RmsPropState {
        &self.optimizer
    }

    /// Iterations completed so far.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Zeroes the optimizer accumulators, as done at a task switch.
    pub fn reset_optimizer(&mut self) {
        self.optimizer.reset();
    }

    /// Empties the replay memory.
    pub fn clear_memory(&mut self) {
        self.memory = ReplayMemory::new(self.cfg.replay, self.cfg.buffer_capacity);
    }

    /// Restarts the random stream from a new seed.
    pub fn reseed(&mut self, seed: u64) {
        self.cfg.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// One episode, its returns pushed to memory, then one batch update.
    pub fn iterate<F>(&mut self, task: &F) -> Result<IterationStats, AgentError>
    where
        F: EpisodeFactory,
        F::Env: Environment<Obs = Q::Input>,
    {
        let mut env = task.episode(self.rng.next_u64());
        let traj = rollout(&self.net, &mut env, self.cfg.epsilon, &mut self.rng)?;
        let episode = EpisodeSummary {
            decisions: traj.decisions.len(),
            steps: traj.total_steps(),
            undiscounted_return: traj.undiscounted_return(),
        };
        for e in compute_returns(traj, self.cfg.gamma)? {
            self.memory.push(e, &mut self.rng);
        }
        let loss = match self.memory.sample(self.cfg.batch_size, &mut self.rng) {
            Some(batch) => Some(train_step(&mut self.net, &mut self.optimizer, &batch)?),
            None => None,
        };
        self.iteration += 1;
        Ok(IterationStats {
            iteration: self.iteration,
            loss,
            episode,
        })
    }

    /// Runs `iterations` iterations. `on_snapshot` sees the network before
    /// the first iteration, after every `snapshot_every` iterations and after
    /// the last one.
    pub fn train<F, S, E>(
        &mut self,
        task: &F,
        iterations: u64,
        snapshot_every: u64,
        mut on_snapshot: S,
    ) -> Result<Vec<IterationStats>, E>
    where
        F: EpisodeFactory,
        F::Env: Environment<Obs = Q::Input>,
        S: FnMut(u64, &Q) -> Result<(), E>,
        E: From<AgentError>,
    {
        let mut stats = Vec::with_capacity(iterations as usize);
        let start = self.iteration;
        on_snapshot(start, &self.net)?;
        for i in 1..=iterations {
            stats.push(self.iterate(task)?);
            if i == iterations || (snapshot_every > 0 && i % snapshot_every == 0) {
                on_snapshot(start + i, &self.net)?;
            }
        }
        Ok(stats)
    }

    /// SHA-256 over every parameter value.
    pub fn params_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in self.net.params() {
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// SHA-256 over the replay contents in storage order.
    pub fn memory_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for e in self.memory.iter() {
            for v in e.state.features() {
                h.update(v.to_le_bytes());
            }
            h.update([e.action.index() as u8]);
            h.update(e.target.to_le_bytes());
        }
        h.finalize().into()
    }

    /// SHA-256 over the random stream position.
    pub fn rng_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.rng.get_seed());
        h.update(self.rng.get_stream().to_le_bytes());
        h.update(self.rng.get_word_pos().to_le_bytes());
        h.finalize().into()
    }
}
