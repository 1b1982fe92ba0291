mod commands;
mod config;
mod manifest;
mod report;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands::{output_root, Run};
use crate::config::RunConfig;

/// Transfer experiments for deep Q-network intersection handling.
#[derive(Parser)]
#[command(name = "crossroads", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network on one scenario and save it.
    Train(RunArgs),
    /// Evaluate a saved network with the greedy policy.
    Evaluate(RunArgs),
    /// Train on each task and evaluate every network on every task.
    DirectCopy(RunArgs),
    /// Fine-tune pretrained networks on a new task, against fresh training.
    FineTune(RunArgs),
    /// Fine-tune, then measure how much of the source task is retained.
    Reverse(RunArgs),
    /// Train one network on a sequence of tasks, evaluating all of them.
    Lifelong(RunArgs),
    /// Aggregate finished runs into mean ± stddev tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file of dotted keys, e.g. `train.gamma = 0.95`.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key; repeatable. Wins over the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root (default: $CROSSROADS_OUT, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Training iterations per task.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl RunArgs {
    fn flags(&self) -> Vec<String> {
        let mut flags = self.set.clone();
        let quoted = |s: &str| format!("{:?}", s);
        if let Some(v) = self.seed {
            flags.push(format!("seed={v}"));
        }
        if let Some(v) = &self.scenario {
            flags.push(format!("scenario={}", quoted(v)));
        }
        if let Some(v) = &self.source {
            flags.push(format!("source={}", quoted(v)));
        }
        if let Some(v) = &self.target {
            flags.push(format!("target={}", quoted(v)));
        }
        if let Some(v) = self.iterations {
            flags.push(format!("train.iterations={v}"));
        }
        if let Some(v) = &self.checkpoint {
            flags.push(format!("checkpoint={}", quoted(&v.display().to_string())));
        }
        flags
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, or directories containing runs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write tidy summary CSVs into this directory.
    #[arg(long)]
    emit: Option<PathBuf>,
}

fn run(name: &str, args: RunArgs, body: fn(&mut Run) -> Result<()>) -> Result<()> {
    let (cfg, sources) = RunConfig::build(args.config.as_deref(), &args.flags())?;
    println!("# {name}\n{}", cfg.to_toml());
    let mut r = Run::create(&output_root(args.out.as_deref()), name, cfg, sources, args.config.clone())?;
    body(&mut r)?;
    let dir = r.finish()?;
    println!("run directory: {}", dir.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => run("train", a, commands::train),
        Command::Evaluate(a) => run("evaluate", a, commands::evaluate_cmd),
        Command::DirectCopy(a) => run("direct-copy", a, commands::direct_copy_cmd),
        Command::FineTune(a) => run("fine-tune", a, commands::fine_tune_cmd),
        Command::Reverse(a) => run("reverse", a, commands::reverse_cmd),
        Command::Lifelong(a) => run("lifelong", a, commands::lifelong_cmd),
        Command::Report(a) => {
            let summary = report::summarize(report::discover(&a.runs)?)?;
            print!("{}", summary.render());
            if let Some(dir) = a.emit {
                for p in summary.emit(&dir)? {
                    println!("wrote {}", p.display());
                }
            }
            Ok(())
        }
    }
}
