use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use crossroads_core::agent::{IntersectionTask, IterationStats};
use crossroads_core::harness::output::{
    curve_rows, matrix_rows, retention_rows, write_csv, CsvRow, CurveRow, LearningRow,
};
use crossroads_core::harness::{
    direct_copy, eval_seed, evaluate, fine_tune, forgetting_events, fresh_curve, lifelong, mean_std,
    reverse_transfer, task_trainer, train_curve, train_task, CurvePoint, EvaluationReport, ExperimentConfig,
    FineTuneResult, Metric,
};
use crossroads_core::nn::{load_params, save_params, QNetwork};
use crossroads_core::sim::ScenarioId;

use crate::config::{ConfigSources, RunConfig};
use crate::manifest::{describe, write_atomic, RunManifest, MANIFEST_VERSION};

pub const OUT_ENV: &str = "CROSSROADS_OUT";

/// Output root: explicit flag, then the environment, then `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// One run directory and the artifacts written into it.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    cfg: RunConfig,
    sources: ConfigSources,
    config_file: Option<PathBuf>,
    started: chrono::DateTime<Utc>,
    clock: Instant,
    artifacts: Vec<String>,
}

impl Run {
    pub fn create(
        root: &Path,
        command: &str,
        cfg: RunConfig,
        sources: ConfigSources,
        config_file: Option<PathBuf>,
    ) -> Result<Self> {
        let started = Utc::now();
        let base = format!(
            "{}-seed{}-{command}",
            started.format("%Y%m%dT%H%M%S%.3fZ"),
            cfg.experiment.master_seed
        );
        fs::create_dir_all(root).with_context(|| format!("output directory {} is not writable", root.display()))?;
        let mut dir = root.join(&base);
        let mut n = 1;
        while dir.exists() {
            dir = root.join(format!("{base}-{n}"));
            n += 1;
        }
        fs::create_dir(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
        let mut run = Self {
            dir,
            command: command.to_string(),
            cfg,
            sources,
            config_file,
            started,
            clock: Instant::now(),
            artifacts: Vec::new(),
        };
        let toml = run.cfg.to_toml();
        run.write_bytes("config.toml", toml.as_bytes())?;
        Ok(run)
    }

    fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    pub fn csv<T: CsvRow>(&mut self, rel: &str, rows: &[T]) -> Result<()> {
        write_csv(&self.dir.join(rel), rows).with_context(|| format!("writing {rel}"))?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    pub fn checkpoint(&mut self, rel: &str, net: &QNetwork) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        save_params(net, &path).with_context(|| format!("writing checkpoint {rel}"))?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let finished = Utc::now();
        let artifacts = self
            .artifacts
            .iter()
            .map(|a| describe(&self.dir, a))
            .collect::<Result<Vec<_>>>()?;
        RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.cfg.entries(),
            config_file: self.config_file.as_ref().map(|p| p.display().to_string()),
            file_values: self.sources.file.clone(),
            flag_values: self.sources.flags.clone(),
            started_at: self.started.to_rfc3339(),
            finished_at: finished.to_rfc3339(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            artifacts,
        }
        .write(&self.dir)?;
        Ok(self.dir)
    }
}

fn learning_rows(curve: &[CurvePoint], stats: &[IterationStats], start: u64) -> Vec<LearningRow> {
    let mut prev = 0;
    curve
        .iter()
        .map(|p| {
            let losses: Vec<f64> = stats
                .iter()
                .filter(|s| s.iteration - start > prev && s.iteration - start <= p.iteration)
                .filter_map(|s| s.loss)
                .collect();
            prev = p.iteration;
            LearningRow {
                iteration: p.iteration,
                mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
                eval_success_rate: p.report.pct_success,
                eval_collision_rate: p.report.pct_collision,
            }
        })
        .collect()
}

fn print_report(r: &EvaluationReport) {
    println!(
        "{:<10} success {:6.2}%  collision {:6.2}%  timeout {:6.2}%  avg time {:5.2}s  avg brake {:5.2}s  ({} episodes)",
        r.task.name(),
        r.pct_success,
        r.pct_collision,
        r.pct_timeout,
        r.avg_time_success,
        r.avg_brake_time,
        r.n_episodes
    );
}

pub fn train(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.experiment.clone();
    let task_id = run.cfg.scenario;
    let rep = cfg.replicate_seeds()[0];
    let mut trainer = task_trainer(&cfg, task_id, rep)?;
    let task = IntersectionTask::new(task_id, cfg.sim);
    let (curve, stats) = train_curve(&cfg, &mut trainer, &task, cfg.train_iterations, eval_seed(rep, task_id))?;
    for p in &curve {
        println!(
            "iteration {:>6}  success {:6.2}%  collision {:6.2}%",
            p.iteration, p.report.pct_success, p.report.pct_collision
        );
    }
    run.csv("learning_curve.csv", &learning_rows(&curve, &stats, 0))?;
    run.checkpoint("model.ckpt", trainer.net())
}

pub fn evaluate_cmd(run: &mut Run) -> Result<()> {
    let Some(path) = run.cfg.checkpoint.clone() else {
        bail!("evaluate needs a checkpoint (--checkpoint or `checkpoint` key)");
    };
    let net = load_params(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let cfg = run.cfg.experiment.clone();
    let tasks = if run.sources.file.contains_key("tasks") || run.sources.flags.contains_key("tasks") {
        cfg.tasks.clone()
    } else {
        vec![run.cfg.scenario]
    };
    let rep = cfg.replicate_seeds()[0];
    let mut rows = Vec::new();
    for t in tasks {
        let report = evaluate(&net, &IntersectionTask::new(t, cfg.sim), cfg.eval_episodes, eval_seed(rep, t))?;
        print_report(&report);
        rows.push(report);
    }
    run.csv("evaluation.csv", &rows)
}

fn print_matrix(tasks: &[ScenarioId], success: impl Fn(ScenarioId, ScenarioId) -> f64) {
    print!("{:<12}", "eval\\train");
    for t in tasks {
        print!("{:>10}", t.name());
    }
    println!();
    for &e in tasks {
        print!("{:<12}", e.name());
        for &t in tasks {
            print!("{:>10.1}", success(t, e));
        }
        println!();
    }
}

pub fn direct_copy_cmd(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.experiment.clone();
    let mut matrices = Vec::new();
    for (k, rep) in cfg.replicate_seeds().into_iter().enumerate() {
        let dc = direct_copy(&cfg, rep)?;
        for (task, trainer) in &dc.trainers {
            run.checkpoint(&format!("checkpoints/{task}-r{k}.ckpt"), trainer.net())?;
        }
        matrices.push(dc.matrix);
    }
    let rows = matrix_rows(&matrices);
    print_matrix(&cfg.tasks, |t, e| {
        rows.iter()
            .find(|r| r.train_task == t && r.eval_task == e && r.metric == Metric::Success)
            .map_or(f64::NAN, |r| r.value)
    });
    run.csv("matrix.csv", &rows)
}

fn pairs(run: &RunConfig) -> Vec<(ScenarioId, ScenarioId)> {
    let tasks = &run.experiment.tasks;
    match (run.source, run.target) {
        (Some(s), Some(t)) => vec![(s, t)],
        (Some(s), None) => tasks.iter().filter(|&&t| t != s).map(|&t| (s, t)).collect(),
        (None, Some(t)) => tasks.iter().filter(|&&s| s != t).map(|&s| (s, t)).collect(),
        (None, None) => tasks
            .iter()
            .flat_map(|&s| tasks.iter().filter(move |&&t| t != s).map(move |&t| (s, t)))
            .collect(),
    }
}

fn pair_curve_rows(results: &[Vec<FineTuneResult>]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    let Some(first) = results.first() else {
        return rows;
    };
    let mut fresh_done = BTreeSet::new();
    for (i, r) in first.iter().enumerate() {
        let pre: Vec<&[CurvePoint]> = results.iter().map(|rep| rep[i].pretrained.as_slice()).collect();
        rows.extend(curve_rows(&format!("fine-tune:{}->{}", r.source, r.target), r.target, &pre));
        if fresh_done.insert(r.target) {
            let fresh: Vec<&[CurvePoint]> = results.iter().map(|rep| rep[i].fresh.as_slice()).collect();
            rows.extend(curve_rows(&format!("fresh:{}", r.target), r.target, &fresh));
        }
    }
    rows
}

pub fn fine_tune_cmd(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.experiment.clone();
    let pairs = pairs(&run.cfg);
    let mut all = Vec::new();
    for (k, rep) in cfg.replicate_seeds().into_iter().enumerate() {
        let sources: BTreeSet<ScenarioId> = pairs.iter().map(|p| p.0).collect();
        let targets: BTreeSet<ScenarioId> = pairs.iter().map(|p| p.1).collect();
        let pretrained = sources
            .iter()
            .map(|&s| Ok((s, train_task(&cfg, s, rep)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let fresh = targets
            .iter()
            .map(|&t| Ok((t, fresh_curve(&cfg, rep, t)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mut results = Vec::new();
        for &(s, t) in &pairs {
            let r = fine_tune(&cfg, rep, s, &pretrained[&s], t, fresh[&t].clone())?;
            println!(
                "replicate {k} {s}->{t}: first point {:.1}% (fresh {:.1}%), last point {:.1}% (fresh {:.1}%)",
                r.pretrained[0].report.pct_success,
                r.fresh[0].report.pct_success,
                r.pretrained.last().map_or(0.0, |p| p.report.pct_success),
                r.fresh.last().map_or(0.0, |p| p.report.pct_success),
            );
            run.checkpoint(&format!("checkpoints/{s}-{t}-r{k}.ckpt"), &r.net)?;
            results.push(r);
        }
        all.push(results);
    }
    run.csv("curve.csv", &pair_curve_rows(&all))
}

pub fn reverse_cmd(run: &mut Run) -> Result<()> {
    let pairs = pairs(&run.cfg);
    let mut cfg: ExperimentConfig = run.cfg.experiment.clone();
    let involved: BTreeSet<ScenarioId> = pairs.iter().flat_map(|&(s, t)| [s, t]).collect();
    cfg.tasks = ScenarioId::ALL.into_iter().filter(|t| involved.contains(t)).collect();
    let mut all = Vec::new();
    let mut entries = Vec::new();
    let mut matrices = Vec::new();
    for (k, rep) in cfg.replicate_seeds().into_iter().enumerate() {
        let dc = direct_copy(&cfg, rep)?;
        let mut results = Vec::new();
        let mut fresh = BTreeMap::new();
        for &(s, t) in &pairs {
            if let Entry::Vacant(e) = fresh.entry(t) {
                e.insert(fresh_curve(&cfg, rep, t)?);
            }
            let src = dc.trainer(s).expect("direct copy trains every involved task");
            let r = fine_tune(&cfg, rep, s, src, t, fresh[&t].clone())?;
            let (entry, report) = reverse_transfer(&cfg, &r, &dc.matrix)?;
            println!(
                "replicate {k} {s}->{t}: back on {s} {:.1}%, baseline {:.1}%, retention {:+.1} points",
                report.pct_success,
                dc.matrix.success(t, s),
                entry.retention_points
            );
            run.checkpoint(&format!("checkpoints/{s}-{t}-r{k}.ckpt"), &r.net)?;
            entries.push(entry);
            results.push(r);
        }
        all.push(results);
        matrices.push(dc.matrix);
    }
    let retention = retention_rows(&entries);
    let mean = retention.iter().map(|r| r.retention_points).sum::<f64>() / retention.len().max(1) as f64;
    println!("mean retention {mean:+.2} points over {} pairs", retention.len());
    run.csv("retention.csv", &retention)?;
    run.csv("curve.csv", &pair_curve_rows(&all))?;
    run.csv("matrix.csv", &matrix_rows(&matrices))
}

pub fn lifelong_cmd(run: &mut Run) -> Result<()> {
    let cfg = run.cfg.experiment.clone();
    let mut results = Vec::new();
    for (k, rep) in cfg.replicate_seeds().into_iter().enumerate() {
        let r = lifelong(&cfg, rep)?;
        println!("replicate {k}: {} evaluation sweeps", r.points.len());
        results.push(r);
    }
    let n = results.iter().map(|r| r.points.len()).min().unwrap_or(0);
    let mut rows = Vec::new();
    for i in 0..n {
        for task in ScenarioId::ALL {
            let v: Vec<f64> = results.iter().map(|r| r.points[i].reports[task.index()].pct_success).collect();
            let (mean, stddev) = mean_std(&v);
            rows.push(CurveRow {
                experiment_id: "lifelong".into(),
                iteration: results[0].points[i].iteration,
                task,
                success_rate: mean,
                stddev,
            });
        }
    }
    for e in forgetting_events(&results).iter().filter(|e| e.drop > 0.0) {
        println!(
            "{} (trained in block {}) peak {:.1}% at iteration {}, {:.1}% after block {}: drop {:.1} points",
            e.task, e.trained_in, e.peak, e.peak_iteration, e.value, e.after_block, e.drop
        );
    }
    run.csv("curve.csv", &rows)
}
