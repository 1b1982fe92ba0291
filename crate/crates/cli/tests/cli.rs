use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "train.iterations=30",
    "--set",
    "eval.episodes=6",
    "--set",
    "eval.curve_episodes=4",
    "--set",
    "eval.every=10",
    "--set",
    "seeds=1",
];

fn crossroads(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossroads"))
        .args(args)
        .env("CROSSROADS_OUT", out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = crossroads(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn err(args: &[&str], out: &Path) -> String {
    let o = crossroads(args, out);
    assert!(!o.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(o.stderr).unwrap()
}

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).copied().collect()
}

fn run_dir(stdout: &str) -> PathBuf {
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .expect("run directory printed");
    PathBuf::from(line)
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.clone(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn train_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&with_small(&["train", "--scenario", "left", "--seed", "3"]), tmp.path());
    assert!(out.contains("scenario = \"left\""), "effective config is echoed");
    let run = run_dir(&out);
    for f in ["config.toml", "learning_curve.csv", "model.ckpt", "manifest.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let curve = csv_rows(&run.join("learning_curve.csv"));
    let iters: Vec<&str> = curve.iter().map(|r| r["iteration"].as_str()).collect();
    assert_eq!(iters, ["0", "10", "20", "30"]);
    assert_eq!(curve[0]["mean_loss"], "", "no loss before training starts");

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["flag_values"]["seed"], 3);
    assert_eq!(manifest["config"]["train.epsilon"], 0.05);

    let ckpt = run.join("model.ckpt");
    let ev = ok(
        &with_small(&["evaluate", "--scenario", "left", "--checkpoint", ckpt.to_str().unwrap()]),
        tmp.path(),
    );
    let rows = csv_rows(&run_dir(&ev).join("evaluation.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["task"], "left");
    assert_eq!(rows[0]["n_episodes"], "6");
    let total: f64 = ["pct_success", "pct_collision", "pct_timeout"]
        .iter()
        .map(|k| rows[0][*k].parse::<f64>().unwrap())
        .sum();
    assert!((total - 100.0).abs() < 1e-9);
}

#[test]
fn direct_copy_two_tasks_fills_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&with_small(&["direct-copy", "--set", "tasks=[\"right\", \"left\"]"]), tmp.path());
    let rows = csv_rows(&run_dir(&out).join("matrix.csv"));
    for metric in ["pct_success", "pct_collision", "avg_time_success", "avg_brake_time"] {
        let cells: Vec<_> = rows.iter().filter(|r| r["metric"] == metric).collect();
        assert_eq!(cells.len(), 4, "{metric}");
    }
    assert_eq!(rows.len(), 16);
}

#[test]
fn lifelong_curve_covers_every_task() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        &with_small(&["lifelong", "--set", "lifelong.iterations=20", "--set", "lifelong.order=[\"right\", \"left\"]"]),
        tmp.path(),
    );
    let rows = csv_rows(&run_dir(&out).join("curve.csv"));
    let mut per_iter: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for r in &rows {
        per_iter.entry(r["iteration"].parse().unwrap()).or_default().push(r["task"].clone());
    }
    assert_eq!(per_iter.keys().copied().collect::<Vec<_>>(), [0, 10, 20, 30, 40]);
    for tasks in per_iter.values() {
        assert_eq!(tasks, &["right", "left", "left2", "forward", "challenge"]);
    }
}

#[test]
fn identical_seeds_give_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = with_small(&["direct-copy", "--seed", "11", "--set", "tasks=[\"forward\", \"left2\"]"]);
    let a = run_dir(&ok(&args, tmp.path()));
    let b = run_dir(&ok(&args, tmp.path()));
    assert_ne!(a, b, "each invocation gets its own run directory");
    assert_eq!(fs::read(a.join("matrix.csv")).unwrap(), fs::read(b.join("matrix.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("checkpoints/forward-r0.ckpt")).unwrap(),
        fs::read(b.join("checkpoints/forward-r0.ckpt")).unwrap()
    );
}

#[test]
fn report_aggregates_runs_without_touching_them() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let mut dirs = Vec::new();
    for seed in ["1", "2"] {
        let args = with_small(&["direct-copy", "--seed", seed, "--set", "tasks=[\"right\", \"left\"]"]);
        dirs.push(run_dir(&ok(&args, &runs)));
    }
    let before = snapshot(&runs);
    let summary = tmp.path().join("summary");
    let text = ok(&["report", runs.to_str().unwrap(), "--emit", summary.to_str().unwrap()], &runs);
    assert!(text.contains("2 run(s)"));
    assert!(text.contains("eval\\train"));
    assert_eq!(before, snapshot(&runs), "report must not modify runs");

    let per_run: Vec<_> = dirs.iter().map(|d| csv_rows(&d.join("matrix.csv"))).collect();
    let agg = csv_rows(&summary.join("summary_matrix.csv"));
    assert_eq!(agg.len(), 16);
    for row in &agg {
        let vals: Vec<f64> = per_run
            .iter()
            .map(|rows| {
                rows.iter()
                    .find(|r| r["train_task"] == row["train_task"] && r["eval_task"] == row["eval_task"] && r["metric"] == row["metric"])
                    .unwrap()["value"]
                    .parse()
                    .unwrap()
            })
            .collect();
        let mean = (vals[0] + vals[1]) / 2.0;
        let sd = (vals[0] - vals[1]).abs() / 2f64.sqrt();
        assert!((row["mean"].parse::<f64>().unwrap() - mean).abs() < 1e-9);
        assert!((row["stddev"].parse::<f64>().unwrap() - sd).abs() < 1e-9);
        assert_eq!(row["runs"], "2");
    }
}

#[test]
fn report_rejects_tampered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let run = run_dir(&ok(&with_small(&["direct-copy", "--set", "tasks=[\"right\"]"]), tmp.path()));
    fs::write(run.join("matrix.csv"), "train_task,eval_task,metric,value\n").unwrap();
    let e = err(&["report", run.to_str().unwrap()], tmp.path());
    assert!(e.contains("does not match its checksum"), "{e}");
}

#[test]
fn config_file_then_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("exp.toml");
    fs::write(&file, "[train]\ngamma = 0.9\nepsilon = 0.1\n").unwrap();
    let out = ok(
        &with_small(&["train", "--config", file.to_str().unwrap(), "--set", "train.gamma=0.8"]),
        tmp.path(),
    );
    let cfg = fs::read_to_string(run_dir(&out).join("config.toml")).unwrap();
    assert!(cfg.contains("train.gamma = 0.8"), "{cfg}");
    assert!(cfg.contains("train.epsilon = 0.1"), "{cfg}");
}

#[test]
fn bad_input_is_reported_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let e = err(&["train", "--set", "train.epsilom=0.1"], tmp.path());
    assert!(e.contains("unknown config key `train.epsilom`"), "{e}");
    let e = err(&["train", "--set", "train.epsilon=1.5"], tmp.path());
    assert!(e.contains("epsilon"), "{e}");
    let e = err(&["train", "--scenario", "roundabout"], tmp.path());
    assert!(e.contains("roundabout"), "{e}");
    let e = err(&["fine-tune", "--source", "left", "--target", "left"], tmp.path());
    assert!(e.contains("must differ"), "{e}");
    let empty = tmp.path().join("nothing");
    fs::create_dir(&empty).unwrap();
    let e = err(&["report", empty.to_str().unwrap()], tmp.path());
    assert!(e.contains("no runs found"), "{e}");
    let e = err(&["evaluate"], tmp.path());
    assert!(e.contains("checkpoint"), "{e}");
}

#[test]
fn evaluate_rejects_foreign_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let run = run_dir(&ok(&with_small(&["train", "--set", "train.iterations=0"]), tmp.path()));
    let mut bytes = fs::read(run.join("model.ckpt")).unwrap();
    bytes[8] = 9;
    let bad = tmp.path().join("future.ckpt");
    fs::write(&bad, &bytes).unwrap();
    let e = err(&["evaluate", "--checkpoint", bad.to_str().unwrap()], tmp.path());
    assert!(e.contains("version"), "{e}");
    let e = err(&["evaluate", "--checkpoint", tmp.path().join("absent.ckpt").to_str().unwrap()], tmp.path());
    assert!(e.contains("absent.ckpt"), "{e}");
}

#[test]
fn fine_tune_and_reverse_write_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let ft = run_dir(&ok(
        &with_small(&["fine-tune", "--source", "right", "--target", "left", "--set", "finetune.iterations=20"]),
        tmp.path(),
    ));
    let rows = csv_rows(&ft.join("curve.csv"));
    let ids: std::collections::BTreeSet<&str> = rows.iter().map(|r| r["experiment_id"].as_str()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), ["fine-tune:right->left", "fresh:left"]);
    assert!(ft.join("checkpoints/right-left-r0.ckpt").is_file());

    let rv = run_dir(&ok(
        &with_small(&["reverse", "--source", "right", "--target", "left", "--set", "finetune.iterations=20"]),
        tmp.path(),
    ));
    let ret = csv_rows(&rv.join("retention.csv"));
    assert_eq!(ret.len(), 1);
    assert_eq!((ret[0]["source"].as_str(), ret[0]["target"].as_str()), ("right", "left"));
    assert!(ret[0]["retention_points"].parse::<f64>().unwrap().abs() <= 100.0);
}
