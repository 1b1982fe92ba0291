//! Aggregation across finished run directories. Runs are only read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use crossroads_core::harness::output::{read_csv, write_csv, CsvRow, CurveRow, MatrixRow, RetentionRow};
use crossroads_core::harness::{mean_std, EvaluationReport, Metric};
use crossroads_core::sim::ScenarioId;
use serde::Serialize;

use crate::manifest::{RunManifest, MANIFEST_FILE};

/// A path is a run if it holds a manifest; otherwise its direct children are scanned.
pub fn discover(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            runs.push(p.clone());
            continue;
        }
        let entries = fs::read_dir(p).with_context(|| format!("reading {}", p.display()))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(MANIFEST_FILE).is_file())
            .collect();
        found.sort();
        runs.extend(found);
    }
    if runs.is_empty() {
        let shown: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        bail!("no runs found in {}", shown.join(", "));
    }
    Ok(runs)
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixSummary {
    pub train_task: ScenarioId,
    pub eval_task: ScenarioId,
    pub metric: Metric,
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetentionSummary {
    pub source: ScenarioId,
    pub target: ScenarioId,
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub experiment_id: String,
    pub iteration: u64,
    pub task: ScenarioId,
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub task: ScenarioId,
    pub metric: Metric,
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
}

macro_rules! finite_summary {
    ($($t:ty),*) => {$(
        impl CsvRow for $t {
            fn is_finite(&self) -> bool {
                self.mean.is_finite() && self.stddev.is_finite()
            }
        }
    )*};
}
finite_summary!(MatrixSummary, RetentionSummary, CurveSummary, EvaluationSummary);

#[derive(Debug, Default)]
pub struct Summary {
    pub runs: Vec<PathBuf>,
    pub matrix: Vec<MatrixSummary>,
    pub retention: Vec<RetentionSummary>,
    pub curves: Vec<CurveSummary>,
    pub evaluation: Vec<EvaluationSummary>,
}

fn stats(v: &[f64]) -> (f64, f64, usize) {
    let (m, s) = mean_std(v);
    (m, s, v.len())
}

/// Reads every run, checking artifact checksums first.
pub fn summarize(runs: Vec<PathBuf>) -> Result<Summary> {
    let mut matrix: BTreeMap<(usize, usize, usize), Vec<f64>> = BTreeMap::new();
    let mut retention: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut curves: BTreeMap<(String, u64, usize), Vec<f64>> = BTreeMap::new();
    let mut evaluation: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let metric_idx = |m: Metric| Metric::ALL.iter().position(|&x| x == m).unwrap_or(0);

    for run in &runs {
        let manifest = RunManifest::read(run)?;
        manifest.verify(run)?;
        if manifest.artifact("matrix.csv").is_some() {
            for r in read_csv::<MatrixRow>(&run.join("matrix.csv"))? {
                matrix
                    .entry((r.train_task.index(), r.eval_task.index(), metric_idx(r.metric)))
                    .or_default()
                    .push(r.value);
            }
        }
        if manifest.artifact("retention.csv").is_some() {
            for r in read_csv::<RetentionRow>(&run.join("retention.csv"))? {
                retention
                    .entry((r.source.index(), r.target.index()))
                    .or_default()
                    .push(r.retention_points);
            }
        }
        if manifest.artifact("curve.csv").is_some() {
            for r in read_csv::<CurveRow>(&run.join("curve.csv"))? {
                curves
                    .entry((r.experiment_id, r.iteration, r.task.index()))
                    .or_default()
                    .push(r.success_rate);
            }
        }
        if manifest.artifact("evaluation.csv").is_some() {
            for r in read_csv::<EvaluationReport>(&run.join("evaluation.csv"))? {
                for m in Metric::ALL {
                    evaluation
                        .entry((r.task.index(), metric_idx(m)))
                        .or_default()
                        .push(r.metric(m));
                }
            }
        }
    }

    let matrix = matrix
        .into_iter()
        .map(|((t, e, m), v)| {
            let (mean, stddev, runs) = stats(&v);
            MatrixSummary {
                train_task: ScenarioId::ALL[t],
                eval_task: ScenarioId::ALL[e],
                metric: Metric::ALL[m],
                mean,
                stddev,
                runs,
            }
        })
        .collect();
    let retention = retention
        .into_iter()
        .map(|((s, t), v)| {
            let (mean, stddev, runs) = stats(&v);
            RetentionSummary {
                source: ScenarioId::ALL[s],
                target: ScenarioId::ALL[t],
                mean,
                stddev,
                runs,
            }
        })
        .collect();
    let curves = curves
        .into_iter()
        .map(|((id, i, t), v)| {
            let (mean, stddev, runs) = stats(&v);
            CurveSummary {
                experiment_id: id,
                iteration: i,
                task: ScenarioId::ALL[t],
                mean,
                stddev,
                runs,
            }
        })
        .collect();
    let evaluation = evaluation
        .into_iter()
        .map(|((t, m), v)| {
            let (mean, stddev, runs) = stats(&v);
            EvaluationSummary {
                task: ScenarioId::ALL[t],
                metric: Metric::ALL[m],
                mean,
                stddev,
                runs,
            }
        })
        .collect();
    Ok(Summary {
        runs,
        matrix,
        retention,
        curves,
        evaluation,
    })
}

fn cell(mean: f64, sd: f64) -> String {
    format!("{mean:.2} ± {sd:.2}")
}

impl Summary {
    /// Plain-text tables: one block per metric, rows are the evaluation
    /// task and columns the task the network was trained on.
    pub fn render(&self) -> String {
        let mut out = format!("{} run(s)\n", self.runs.len());
        let trained: Vec<ScenarioId> = ScenarioId::ALL
            .into_iter()
            .filter(|t| self.matrix.iter().any(|r| r.train_task == *t))
            .collect();
        let evaluated: Vec<ScenarioId> = ScenarioId::ALL
            .into_iter()
            .filter(|t| self.matrix.iter().any(|r| r.eval_task == *t))
            .collect();
        if !self.matrix.is_empty() {
            for m in Metric::ALL {
                out.push_str(&format!("\n{m}\n{:<12}", "eval\\train"));
                for t in &trained {
                    out.push_str(&format!("{:>18}", t.name()));
                }
                out.push('\n');
                for e in &evaluated {
                    out.push_str(&format!("{:<12}", e.name()));
                    for t in &trained {
                        let c = self
                            .matrix
                            .iter()
                            .find(|r| r.train_task == *t && r.eval_task == *e && r.metric == m)
                            .map_or_else(|| "-".to_string(), |r| cell(r.mean, r.stddev));
                        out.push_str(&format!("{c:>18}"));
                    }
                    out.push('\n');
                }
            }
        }
        if !self.retention.is_empty() {
            out.push_str("\nretention (points)\n");
            for r in &self.retention {
                out.push_str(&format!("{:>8} -> {:<8} {}\n", r.source.name(), r.target.name(), cell(r.mean, r.stddev)));
            }
        }
        if !self.curves.is_empty() {
            out.push_str("\ncurves (first and last point, success %)\n");
            let mut keys: Vec<(&str, ScenarioId)> = self
                .curves
                .iter()
                .map(|c| (c.experiment_id.as_str(), c.task))
                .collect();
            keys.dedup();
            for (id, task) in keys {
                let pts: Vec<&CurveSummary> = self
                    .curves
                    .iter()
                    .filter(|c| c.experiment_id == id && c.task == task)
                    .collect();
                let (first, last) = (pts[0], pts[pts.len() - 1]);
                out.push_str(&format!(
                    "{id:<24} {:<10} it {:>6}: {:>16}   it {:>6}: {:>16}\n",
                    task.name(),
                    first.iteration,
                    cell(first.mean, first.stddev),
                    last.iteration,
                    cell(last.mean, last.stddev)
                ));
            }
        }
        if !self.evaluation.is_empty() {
            out.push_str("\nevaluation\n");
            for r in &self.evaluation {
                out.push_str(&format!("{:<10} {:<18} {}\n", r.task.name(), r.metric.name(), cell(r.mean, r.stddev)));
            }
        }
        out
    }

    /// Writes tidy summary CSVs into `dir`, which must not be a run.
    pub fn emit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        if dir.join(MANIFEST_FILE).exists() {
            bail!("refusing to write into run directory {}", dir.display());
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        let mut put = |name: &str, ok: bool, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            if ok {
                let p = dir.join(name);
                f(&p)?;
                written.push(p);
            }
            Ok(())
        };
        put("summary_matrix.csv", !self.matrix.is_empty(), &|p| Ok(write_csv(p, &self.matrix)?))?;
        put("summary_retention.csv", !self.retention.is_empty(), &|p| Ok(write_csv(p, &self.retention)?))?;
        put("summary_curve.csv", !self.curves.is_empty(), &|p| Ok(write_csv(p, &self.curves)?))?;
        put("summary_evaluation.csv", !self.evaluation.is_empty(), &|p| Ok(write_csv(p, &self.evaluation)?))?;
        Ok(written)
    }
}
