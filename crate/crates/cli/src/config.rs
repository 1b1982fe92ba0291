//! Flat dotted-key configuration.
//!
//! A config file is TOML whose keys are written as dotted paths
//! (`train.epsilon = 0.05`). `--set key=value` flags use the same keys and
//! win over the file. Unknown keys are rejected by name.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use crossroads_core::agent::ReplayKind;
use crossroads_core::harness::ExperimentConfig;
use crossroads_core::sim::ScenarioId;
use toml::Value;

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "seeds",
    "scenario",
    "source",
    "target",
    "tasks",
    "checkpoint",
    "train.iterations",
    "train.epsilon",
    "train.gamma",
    "train.batch_size",
    "train.buffer_capacity",
    "train.replay",
    "train.learning_rate",
    "train.rmsprop_decay",
    "train.rmsprop_epsilon",
    "net.leaky_slope",
    "sim.dt",
    "sim.max_steps",
    "sim.depart_probability",
    "sim.krauss_sigma",
    "sim.warmup_seconds",
    "sim.brake_threshold",
    "sim.idm.desired_speed",
    "sim.idm.max_accel",
    "sim.idm.comfortable_decel",
    "sim.idm.min_gap",
    "sim.idm.headway_time",
    "sim.idm.emergency_decel",
    "eval.episodes",
    "eval.curve_episodes",
    "eval.every",
    "finetune.iterations",
    "finetune.keep_buffer",
    "finetune.reset_optimizer",
    "lifelong.order",
    "lifelong.iterations",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub scenario: ScenarioId,
    pub source: Option<ScenarioId>,
    pub target: Option<ScenarioId>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            scenario: ScenarioId::Right,
            source: None,
            target: None,
            checkpoint: None,
        }
    }
}

/// Where each explicitly set key came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigSources {
    pub file: BTreeMap<String, Value>,
    pub flags: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

pub fn parse_file(path: &Path) -> Result<BTreeMap<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_str(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse_str(text: &str) -> Result<BTreeMap<String, Value>> {
    let table: toml::Table = text.parse().context("malformed config")?;
    let mut out = BTreeMap::new();
    flatten("", &table, &mut out);
    Ok(out)
}

/// Parses `key=value`; the value is TOML, with bare words taken as strings.
pub fn parse_flag(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("expected key=value, got `{s}`"))?;
    let (k, v) = (k.trim(), v.trim());
    let value = match format!("x = {v}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").expect("parsed key"),
        Err(_) => Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => bail!("`{key}` must be a number"),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => bail!("`{key}` must be a non-negative integer"),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| anyhow!("`{key}` must be true or false"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| anyhow!("`{key}` must be a string"))
}

fn as_scenario(key: &str, v: &Value) -> Result<ScenarioId> {
    as_str(key, v)?
        .parse()
        .map_err(|e| anyhow!("`{key}`: {e}"))
}

fn as_scenarios(key: &str, v: &Value) -> Result<Vec<ScenarioId>> {
    match v {
        Value::Array(items) => items.iter().map(|i| as_scenario(key, i)).collect(),
        Value::String(s) => s
            .split(',')
            .map(|p| p.trim().parse().map_err(|e| anyhow!("`{key}`: {e}")))
            .collect(),
        _ => bail!("`{key}` must be a list of scenario names"),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let e = &mut self.experiment;
        match key {
            "seed" => e.master_seed = as_u64(key, v)?,
            "seeds" => e.seeds = as_u64(key, v)? as usize,
            "scenario" => self.scenario = as_scenario(key, v)?,
            "source" => self.source = Some(as_scenario(key, v)?),
            "target" => self.target = Some(as_scenario(key, v)?),
            "tasks" => e.tasks = as_scenarios(key, v)?,
            "checkpoint" => self.checkpoint = Some(PathBuf::from(as_str(key, v)?)),
            "train.iterations" => e.train_iterations = as_u64(key, v)?,
            "train.epsilon" => e.train.epsilon = as_f64(key, v)?,
            "train.gamma" => e.train.gamma = as_f64(key, v)?,
            "train.batch_size" => e.train.batch_size = as_u64(key, v)? as usize,
            "train.buffer_capacity" => e.train.buffer_capacity = as_u64(key, v)? as usize,
            "train.replay" => {
                e.train.replay = match as_str(key, v)? {
                    "fifo" => ReplayKind::Fifo,
                    "split" => ReplayKind::Split,
                    other => bail!("`{key}` must be \"fifo\" or \"split\", got \"{other}\""),
                }
            }
            "train.learning_rate" => e.train.optimizer.learning_rate = as_f64(key, v)?,
            "train.rmsprop_decay" => e.train.optimizer.decay = as_f64(key, v)?,
            "train.rmsprop_epsilon" => e.train.optimizer.epsilon = as_f64(key, v)?,
            "net.leaky_slope" => e.leaky_slope = as_f64(key, v)?,
            "sim.dt" => e.sim.dt = as_f64(key, v)?,
            "sim.max_steps" => e.sim.max_steps = as_u64(key, v)? as u32,
            "sim.depart_probability" => e.sim.depart_probability = as_f64(key, v)?,
            "sim.krauss_sigma" => e.sim.krauss_sigma = as_f64(key, v)?,
            "sim.warmup_seconds" => e.sim.warmup_seconds = as_f64(key, v)?,
            "sim.brake_threshold" => e.sim.brake_threshold = as_f64(key, v)?,
            "sim.idm.desired_speed" => e.sim.idm.desired_speed = as_f64(key, v)?,
            "sim.idm.max_accel" => e.sim.idm.max_accel = as_f64(key, v)?,
            "sim.idm.comfortable_decel" => e.sim.idm.comfortable_decel = as_f64(key, v)?,
            "sim.idm.min_gap" => e.sim.idm.min_gap = as_f64(key, v)?,
            "sim.idm.headway_time" => e.sim.idm.headway_time = as_f64(key, v)?,
            "sim.idm.emergency_decel" => e.sim.idm.emergency_decel = as_f64(key, v)?,
            "eval.episodes" => e.eval_episodes = as_u64(key, v)? as usize,
            "eval.curve_episodes" => e.curve_eval_episodes = as_u64(key, v)? as usize,
            "eval.every" => e.eval_every = as_u64(key, v)?,
            "finetune.iterations" => e.finetune_iterations = as_u64(key, v)?,
            "finetune.keep_buffer" => e.keep_buffer = as_bool(key, v)?,
            "finetune.reset_optimizer" => e.reset_optimizer = as_bool(key, v)?,
            "lifelong.order" => e.lifelong_order = as_scenarios(key, v)?,
            "lifelong.iterations" => e.lifelong_iterations = as_u64(key, v)?,
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let e = &self.experiment;
        let f = Value::Float;
        let i = |n: u64| Value::Integer(n as i64);
        let list = |ts: &[ScenarioId]| Value::Array(ts.iter().map(|t| Value::String(t.to_string())).collect());
        Some(match key {
            "seed" => i(e.master_seed),
            "seeds" => i(e.seeds as u64),
            "scenario" => Value::String(self.scenario.to_string()),
            "source" => Value::String(self.source?.to_string()),
            "target" => Value::String(self.target?.to_string()),
            "tasks" => list(&e.tasks),
            "checkpoint" => Value::String(self.checkpoint.as_ref()?.display().to_string()),
            "train.iterations" => i(e.train_iterations),
            "train.epsilon" => f(e.train.epsilon),
            "train.gamma" => f(e.train.gamma),
            "train.batch_size" => i(e.train.batch_size as u64),
            "train.buffer_capacity" => i(e.train.buffer_capacity as u64),
            "train.replay" => Value::String(
                match e.train.replay {
                    ReplayKind::Fifo => "fifo",
                    ReplayKind::Split => "split",
                }
                .into(),
            ),
            "train.learning_rate" => f(e.train.optimizer.learning_rate),
            "train.rmsprop_decay" => f(e.train.optimizer.decay),
            "train.rmsprop_epsilon" => f(e.train.optimizer.epsilon),
            "net.leaky_slope" => f(e.leaky_slope),
            "sim.dt" => f(e.sim.dt),
            "sim.max_steps" => i(e.sim.max_steps as u64),
            "sim.depart_probability" => f(e.sim.depart_probability),
            "sim.krauss_sigma" => f(e.sim.krauss_sigma),
            "sim.warmup_seconds" => f(e.sim.warmup_seconds),
            "sim.brake_threshold" => f(e.sim.brake_threshold),
            "sim.idm.desired_speed" => f(e.sim.idm.desired_speed),
            "sim.idm.max_accel" => f(e.sim.idm.max_accel),
            "sim.idm.comfortable_decel" => f(e.sim.idm.comfortable_decel),
            "sim.idm.min_gap" => f(e.sim.idm.min_gap),
            "sim.idm.headway_time" => f(e.sim.idm.headway_time),
            "sim.idm.emergency_decel" => f(e.sim.idm.emergency_decel),
            "eval.episodes" => i(e.eval_episodes as u64),
            "eval.curve_episodes" => i(e.curve_eval_episodes as u64),
            "eval.every" => i(e.eval_every),
            "finetune.iterations" => i(e.finetune_iterations),
            "finetune.keep_buffer" => Value::Boolean(e.keep_buffer),
            "finetune.reset_optimizer" => Value::Boolean(e.reset_optimizer),
            "lifelong.order" => list(&e.lifelong_order),
            "lifelong.iterations" => i(e.lifelong_iterations),
            _ => return None,
        })
    }

    /// Applies file values, then flag values, then validates everything.
    pub fn build(file: Option<&Path>, flags: &[String]) -> Result<(Self, ConfigSources)> {
        let mut cfg = Self::default();
        let mut sources = ConfigSources::default();
        if let Some(path) = file {
            sources.file = parse_file(path)?;
        }
        for f in flags {
            let (k, v) = parse_flag(f)?;
            sources.flags.insert(k, v);
        }
        for (k, v) in sources.file.iter().chain(&sources.flags) {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok((cfg, sources))
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate().map_err(|e| anyhow!("{e}"))?;
        if let (Some(s), Some(t)) = (self.source, self.target) {
            if s == t {
                bail!("`source` and `target` must differ");
            }
        }
        Ok(())
    }

    /// Effective configuration as `key = value` lines that parse back into
    /// the same configuration.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out
    }

    pub fn entries(&self) -> BTreeMap<String, Value> {
        KEYS.iter()
            .filter_map(|k| Some((k.to_string(), self.get(k)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let (cfg, _) = RunConfig::build(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let e = &cfg.experiment;
        assert_eq!(e.train.epsilon, 0.05);
        assert_eq!(e.train.buffer_capacity, 1000);
        assert_eq!(e.train.batch_size, 60);
        assert_eq!(e.sim.dt, 0.2);
        assert_eq!(e.sim.depart_probability, 0.2);
        assert_eq!(e.sim.max_steps, 100);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("train.gamma", &Value::Float(0.9)).unwrap();
        cfg.set("lifelong.order", &Value::String("left,right".into())).unwrap();
        cfg.set("source", &Value::String("left2".into())).unwrap();
        let mut back = RunConfig::default();
        for (k, v) in parse_str(&cfg.to_toml()).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        let err = RunConfig::build(None, &["train.epsilonn=0.1".into()]).unwrap_err();
        assert!(err.to_string().contains("train.epsilonn"));
        let err = RunConfig::build(None, &["train.epsilon=1.5".into()]).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn flag_parsing() {
        assert_eq!(parse_flag("seed=3").unwrap(), ("seed".into(), Value::Integer(3)));
        assert_eq!(
            parse_flag("scenario=left").unwrap(),
            ("scenario".into(), Value::String("left".into()))
        );
        assert!(parse_flag("seed").is_err());
    }
}
