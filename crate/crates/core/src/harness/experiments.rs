use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{IntersectionTask, IterationStats, Trainer, TrainConfig};
use crate::harness::{derive_seed, eval_seed, evaluate, mean_std, EvaluationReport, ExperimentConfig, HarnessError, Role};
use crate::nn::QNetwork;
use crate::sim::ScenarioId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Iterations completed since the start of the curve.
    pub iteration: u64,
    pub report: EvaluationReport,
}

/// Reports for every (training task, evaluation task) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    tasks: Vec<ScenarioId>,
    /// Row-major over (train, eval).
    cells: Vec<EvaluationReport>,
}

impl TransferMatrix {
    pub fn new(tasks: Vec<ScenarioId>, cells: Vec<EvaluationReport>) -> Result<Self, HarnessError> {
        if cells.len() != tasks.len() * tasks.len() {
            return Err(HarnessError::InvalidConfig(format!(
                "{} cells for {} tasks",
                cells.len(),
                tasks.len()
            )));
        }
        Ok(Self { tasks, cells })
    }

    pub fn tasks(&self) -> &[ScenarioId] {
        &self.tasks
    }

    pub fn get(&self, train: ScenarioId, eval: ScenarioId) -> Option<&EvaluationReport> {
        let n = self.tasks.len();
        let i = self.tasks.iter().position(|&t| t == train)?;
        let j = self.tasks.iter().position(|&t| t == eval)?;
        self.cells.get(i * n + j)
    }

    /// Success rate of the `train` network on `eval`, panicking on unknown tasks.
    pub fn success(&self, train: ScenarioId, eval: ScenarioId) -> f64 {
        self.get(train, eval)
            .unwrap_or_else(|| panic!("no cell for {train} on {eval}"))
            .pct_success
    }

    /// (train, eval, report) triples in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (ScenarioId, ScenarioId, &EvaluationReport)> {
        let n = self.tasks.len();
        self.cells
            .iter()
            .enumerate()
            .map(move |(k, r)| (self.tasks[k / n], self.tasks[k % n], r))
    }
}

fn task_map(cfg: &ExperimentConfig, extra: &[ScenarioId]) -> BTreeMap<ScenarioId, IntersectionTask> {
    cfg.tasks
        .iter()
        .chain(extra)
        .map(|&s| (s, IntersectionTask::new(s, cfg.sim)))
        .collect()
}

fn new_trainer(cfg: &ExperimentConfig, init_seed: u64, train_seed: u64) -> Result<Trainer<QNetwork>, HarnessError> {
    let net = QNetwork::init(cfg.leaky_slope, &mut ChaCha8Rng::seed_from_u64(init_seed));
    let train = TrainConfig {
        seed: train_seed,
        ..cfg.train
    };
    Ok(Trainer::new(net, train)?)
}

/// Trains while evaluating on `task` every `cfg.eval_every` iterations.
/// Iteration numbers in the curve count from the trainer's current position.
pub fn train_curve(
    cfg: &ExperimentConfig,
    trainer: &mut Trainer<QNetwork>,
    task: &IntersectionTask,
    iterations: u64,
    seed: u64,
) -> Result<(Vec<CurvePoint>, Vec<IterationStats>), HarnessError> {
    let start = trainer.iteration();
    let mut curve = Vec::new();
    let stats = trainer.train(task, iterations, cfg.eval_every, |i, net| {
        curve.push(CurvePoint {
            iteration: i - start,
            report: evaluate(net, task, cfg.curve_eval_episodes, seed)?,
        });
        Ok::<_, HarnessError>(())
    })?;
    Ok((curve, stats))
}

/// An untrained trainer for `task`, seeded from the replicate.
pub fn task_trainer(cfg: &ExperimentConfig, task: ScenarioId, replicate: u64) -> Result<Trainer<QNetwork>, HarnessError> {
    let t = task.index() as u64;
    new_trainer(
        cfg,
        derive_seed(replicate, &[Role::Init as u64, t]),
        derive_seed(replicate, &[Role::Train as u64, t]),
    )
}

/// A freshly initialized network trained on one task for
/// `cfg.train_iterations` iterations.
pub fn train_task(cfg: &ExperimentConfig, task: ScenarioId, replicate: u64) -> Result<Trainer<QNetwork>, HarnessError> {
    let mut trainer = task_trainer(cfg, task, replicate)?;
    let env = IntersectionTask::new(task, cfg.sim);
    trainer.train(&env, cfg.train_iterations, 0, |_, _| Ok::<_, HarnessError>(()))?;
    Ok(trainer)
}

/// One replicate of the direct-copy protocol: the trained networks and
/// every network evaluated on every task.
#[derive(Debug, Clone)]
pub struct DirectCopyRun {
    pub replicate: u64,
    pub trainers: Vec<(ScenarioId, Trainer<QNetwork>)>,
    pub matrix: TransferMatrix,
}

impl DirectCopyRun {
    pub fn trainer(&self, task: ScenarioId) -> Option<&Trainer<QNetwork>> {
        self.trainers.iter().find(|(t, _)| *t == task).map(|(_, tr)| tr)
    }
}

pub fn direct_copy(cfg: &ExperimentConfig, replicate: u64) -> Result<DirectCopyRun, HarnessError> {
    cfg.validate()?;
    let envs = task_map(cfg, &[]);
    let trainers = cfg
        .tasks
        .par_iter()
        .map(|&t| Ok((t, train_task(cfg, t, replicate)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let pairs: Vec<_> = cfg
        .tasks
        .iter()
        .enumerate()
        .flat_map(|(i, _)| cfg.tasks.iter().map(move |&e| (i, e)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(i, e)| evaluate(trainers[i].1.net(), &envs[&e], cfg.eval_episodes, eval_seed(replicate, e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DirectCopyRun {
        replicate,
        matrix: TransferMatrix::new(cfg.tasks.clone(), cells)?,
        trainers,
    })
}

/// Learning curve of a randomly initialized network on `target`.
pub fn fresh_curve(cfg: &ExperimentConfig, replicate: u64, target: ScenarioId) -> Result<Vec<CurvePoint>, HarnessError> {
    let t = target.index() as u64;
    let mut trainer = new_trainer(
        cfg,
        derive_seed(replicate, &[Role::Fresh as u64, t, 0]),
        derive_seed(replicate, &[Role::Fresh as u64, t, 1]),
    )?;
    let env = IntersectionTask::new(target, cfg.sim);
    let (curve, _) = train_curve(cfg, &mut trainer, &env, cfg.finetune_iterations, eval_seed(replicate, target))?;
    Ok(curve)
}

#[derive(Debug, Clone)]
pub struct FineTuneResult {
    pub replicate: u64,
    pub source: ScenarioId,
    pub target: ScenarioId,
    /// Target-task curve starting from the source network.
    pub pretrained: Vec<CurvePoint>,
    /// Target-task curve starting from random weights.
    pub fresh: Vec<CurvePoint>,
    /// The network after fine tuning.
    pub net: QNetwork,
}

impl FineTuneResult {
    /// First-point success difference, pretrained minus fresh.
    pub fn jumpstart(&self) -> f64 {
        self.pretrained[0].report.pct_success - self.fresh[0].report.pct_success
    }
}

/// Continues training a source-task trainer on `target`. The first curve
/// point is the unmodified source network.
pub fn fine_tune(
    cfg: &ExperimentConfig,
    replicate: u64,
    source: ScenarioId,
    pretrained: &Trainer<QNetwork>,
    target: ScenarioId,
    fresh: Vec<CurvePoint>,
) -> Result<FineTuneResult, HarnessError> {
    let mut trainer = pretrained.clone();
    if cfg.reset_optimizer {
        trainer.reset_optimizer();
    }
    if !cfg.keep_buffer {
        trainer.clear_memory();
    }
    trainer.reseed(derive_seed(
        replicate,
        &[Role::FineTune as u64, source.index() as u64, target.index() as u64],
    ));
    let env = IntersectionTask::new(target, cfg.sim);
    let (curve, _) = train_curve(cfg, &mut trainer, &env, cfg.finetune_iterations, eval_seed(replicate, target))?;
    Ok(FineTuneResult {
        replicate,
        source,
        target,
        pretrained: curve,
        fresh,
        net: trainer.into_net(),
    })
}

/// Fine tunes every ordered pair of distinct tasks in `run`.
pub fn fine_tune_all(cfg: &ExperimentConfig, run: &DirectCopyRun) -> Result<Vec<FineTuneResult>, HarnessError> {
    let fresh: BTreeMap<ScenarioId, Vec<CurvePoint>> = cfg
        .tasks
        .par_iter()
        .map(|&t| Ok((t, fresh_curve(cfg, run.replicate, t)?)))
        .collect::<Result<_, HarnessError>>()?;
    let pairs: Vec<(ScenarioId, ScenarioId)> = cfg
        .tasks
        .iter()
        .flat_map(|&s| cfg.tasks.iter().filter(move |&&t| t != s).map(move |&t| (s, t)))
        .collect();
    pairs
        .par_iter()
        .map(|&(s, t)| {
            let src = run
                .trainer(s)
                .ok_or_else(|| HarnessError::InvalidConfig(format!("no trained network for {s}")))?;
            fine_tune(cfg, run.replicate, s, src, t, fresh[&t].clone())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionEntry {
    pub source: ScenarioId,
    pub target: ScenarioId,
    /// Fine-tuned network's source success minus the target-trained
    /// network's source success, in percentage points.
    pub retention_points: f64,
}

/// Evaluates a fine-tuned network back on its source task.
pub fn reverse_transfer(
    cfg: &ExperimentConfig,
    result: &FineTuneResult,
    matrix: &TransferMatrix,
) -> Result<(RetentionEntry, EvaluationReport), HarnessError> {
    let baseline = matrix
        .get(result.target, result.source)
        .ok_or_else(|| HarnessError::InvalidConfig(format!("matrix lacks {} on {}", result.target, result.source)))?
        .pct_success;
    let env = IntersectionTask::new(result.source, cfg.sim);
    let report = evaluate(&result.net, &env, cfg.eval_episodes, eval_seed(result.replicate, result.source))?;
    Ok((
        RetentionEntry {
            source: result.source,
            target: result.target,
            retention_points: report.pct_success - baseline,
        },
        report,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifelongPoint {
    /// Iterations completed since the start of the schedule.
    pub iteration: u64,
    /// Index into the schedule of the block being trained.
    pub block: usize,
    /// One report per task in [`ScenarioId::ALL`] order.
    pub reports: Vec<EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifelongResult {
    pub replicate: u64,
    pub schedule: Vec<(ScenarioId, u64)>,
    pub points: Vec<LifelongPoint>,
}

impl LifelongResult {
    /// Cumulative iteration count at the end of each block.
    pub fn block_ends(&self) -> Vec<u64> {
        self.schedule
            .iter()
            .scan(0, |acc, &(_, n)| {
                *acc += n;
                Some(*acc)
            })
            .collect()
    }
}

/// Trains one network through `cfg.lifelong_order`, keeping a single replay
/// memory, and evaluates every task at each snapshot.
pub fn lifelong(cfg: &ExperimentConfig, replicate: u64) -> Result<LifelongResult, HarnessError> {
    cfg.validate()?;
    let schedule: Vec<(ScenarioId, u64)> = cfg
        .lifelong_order
        .iter()
        .map(|&t| (t, cfg.lifelong_iterations))
        .collect();
    let envs = task_map(cfg, &ScenarioId::ALL);
    let mut trainer = new_trainer(
        cfg,
        derive_seed(replicate, &[Role::Lifelong as u64, 0]),
        derive_seed(replicate, &[Role::Lifelong as u64, 1]),
    )?;
    let mut points: Vec<LifelongPoint> = Vec::new();
    for (block, &(task, iterations)) in schedule.iter().enumerate() {
        if block > 0 && cfg.reset_optimizer {
            trainer.reset_optimizer();
        }
        trainer.train(&envs[&task], iterations, cfg.eval_every, |i, net| {
            if points.last().is_some_and(|p| p.iteration == i) {
                return Ok(());
            }
            let reports = ScenarioId::ALL
                .par_iter()
                .map(|&t| evaluate(net, &envs[&t], cfg.curve_eval_episodes, eval_seed(replicate, t)))
                .collect::<Result<Vec<_>, _>>()?;
            points.push(LifelongPoint {
                iteration: i,
                block,
                reports,
            });
            Ok::<_, HarnessError>(())
        })?;
    }
    Ok(LifelongResult {
        replicate,
        schedule,
        points,
    })
}

/// Success lost by a task between its best value so far and the end of a
/// later training block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgettingEvent {
    pub task: ScenarioId,
    /// Block in which the task was (first) trained.
    pub trained_in: usize,
    /// Later block whose end is measured.
    pub after_block: usize,
    pub peak: f64,
    pub peak_iteration: u64,
    pub value: f64,
    pub drop: f64,
}

/// Compares, for every task trained before the last block, the replicate-mean
/// success at the end of each later block against the task's peak up to that
/// point. Replicates must share a schedule and cadence.
pub fn forgetting_events(results: &[LifelongResult]) -> Vec<ForgettingEvent> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let ends = first.block_ends();
    let n_points = results.iter().map(|r| r.points.len()).min().unwrap_or(0);
    let mean_success = |p: usize, task: ScenarioId| {
        let v: Vec<f64> = results.iter().map(|r| r.points[p].reports[task.index()].pct_success).collect();
        mean_std(&v).0
    };
    let mut events = Vec::new();
    for (b, &(task, _)) in first.schedule.iter().enumerate() {
        if first.schedule[..b].iter().any(|&(t, _)| t == task) {
            continue;
        }
        for (k, &end) in ends.iter().enumerate().skip(b + 1) {
            let Some(end_idx) = (0..n_points).rfind(|&p| first.points[p].iteration <= end) else {
                continue;
            };
            let (peak_idx, peak) = (0..=end_idx)
                .map(|p| (p, mean_success(p, task)))
                .fold((0, f64::NEG_INFINITY), |a, c| if c.1 > a.1 { c } else { a });
            let value = mean_success(end_idx, task);
            events.push(ForgettingEvent {
                task,
                trained_in: b,
                after_block: k,
                peak,
                peak_iteration: first.points[peak_idx].iteration,
                value,
                drop: peak - value,
            });
        }
    }
    events
}
