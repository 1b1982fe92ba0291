//! CSV artifacts. Column order is part of the format; see the README.
//!
//! * `matrix.csv`: train_task, eval_task, metric, value
//! * `curve.csv`: experiment_id, iteration, task, success_rate, stddev
//! * `retention.csv`: source, target, retention_points
//! * `learning_curve.csv`: iteration, mean_loss, eval_success_rate, eval_collision_rate
//!
//! Rates are percentages. Values are means over the replicates of a run and
//! `stddev` is their sample standard deviation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::harness::{mean_std, CurvePoint, EvaluationReport, HarnessError, Metric, RetentionEntry, TransferMatrix};
use crate::sim::ScenarioId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub train_task: ScenarioId,
    pub eval_task: ScenarioId,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub experiment_id: String,
    pub iteration: u64,
    pub task: ScenarioId,
    pub success_rate: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub source: ScenarioId,
    pub target: ScenarioId,
    pub retention_points: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRow {
    pub iteration: u64,
    /// Mean batch loss since the previous row; empty before training starts.
    pub mean_loss: Option<f64>,
    pub eval_success_rate: f64,
    pub eval_collision_rate: f64,
}

/// Replicate-mean matrix rows, ordered by train task, eval task, metric.
pub fn matrix_rows(matrices: &[TransferMatrix]) -> Vec<MatrixRow> {
    let Some(first) = matrices.first() else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (train, eval, _) in first.iter() {
        for metric in Metric::ALL {
            let values: Vec<f64> = matrices
                .iter()
                .filter_map(|m| m.get(train, eval))
                .map(|r| r.metric(metric))
                .collect();
            rows.push(MatrixRow {
                train_task: train,
                eval_task: eval,
                metric,
                value: mean_std(&values).0,
            });
        }
    }
    rows
}

/// Mean and spread of replicate curves sharing an evaluation cadence.
pub fn curve_rows(experiment_id: &str, task: ScenarioId, curves: &[&[CurvePoint]]) -> Vec<CurveRow> {
    let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let v: Vec<f64> = curves.iter().map(|c| c[i].report.pct_success).collect();
            let (mean, stddev) = mean_std(&v);
            CurveRow {
                experiment_id: experiment_id.to_string(),
                iteration: curves[0][i].iteration,
                task,
                success_rate: mean,
                stddev,
            }
        })
        .collect()
}

/// Replicate-mean retention per ordered pair, in report task order.
pub fn retention_rows(entries: &[RetentionEntry]) -> Vec<RetentionRow> {
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for e in entries {
        groups
            .entry((e.source.index(), e.target.index()))
            .or_default()
            .push(e.retention_points);
    }
    groups
        .into_iter()
        .map(|((s, t), v)| RetentionRow {
            source: ScenarioId::ALL[s],
            target: ScenarioId::ALL[t],
            retention_points: mean_std(&v).0,
        })
        .collect()
}

/// Rows whose numeric fields can be checked before writing.
pub trait CsvRow: Serialize {
    fn is_finite(&self) -> bool;
}

impl CsvRow for MatrixRow {
    fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

impl CsvRow for CurveRow {
    fn is_finite(&self) -> bool {
        self.success_rate.is_finite() && self.stddev.is_finite()
    }
}

impl CsvRow for RetentionRow {
    fn is_finite(&self) -> bool {
        self.retention_points.is_finite()
    }
}

impl CsvRow for EvaluationReport {
    fn is_finite(&self) -> bool {
        [
            self.pct_success,
            self.pct_collision,
            self.pct_timeout,
            self.avg_time_success,
            self.avg_brake_time,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

impl CsvRow for LearningRow {
    fn is_finite(&self) -> bool {
        self.mean_loss.is_none_or(f64::is_finite)
            && self.eval_success_rate.is_finite()
            && self.eval_collision_rate.is_finite()
    }
}

/// Refuses to write any non-finite value.
pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    if rows.iter().any(|r| !r.is_finite()) {
        return Err(HarnessError::Parse(format!("non-finite value for {}", path.display())));
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes only the header row for a schema with no data yet.
pub fn write_header(path: &Path, columns: &[&str]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let dir = std::env::temp_dir().join(format!("xr-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("matrix.csv");
        let rows = vec![MatrixRow {
            train_task: ScenarioId::Left2,
            eval_task: ScenarioId::Right,
            metric: Metric::AvgBrake,
            value: 0.25,
        }];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "train_task,eval_task,metric,value\nleft2,right,avg_brake_time,0.25\n");
        assert_eq!(read_csv::<MatrixRow>(&path).unwrap(), rows);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_non_finite() {
        let path = std::env::temp_dir().join(format!("xr-nan-{}.csv", std::process::id()));
        let row = RetentionRow {
            source: ScenarioId::Right,
            target: ScenarioId::Left,
            retention_points: f64::NAN,
        };
        assert!(write_csv(&path, &[row]).is_err());
        assert!(!path.exists());
    }
}
