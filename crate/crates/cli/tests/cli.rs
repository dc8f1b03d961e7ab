use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hecgcn::synthetic::{planted_dataset, PlantedSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hecgcn"));
    c.env("RUST_LOG", "warn");
    c
}

fn exec(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

/// Writes the planted dataset as TSV files plus a manifest and returns the
/// manifest path.
fn write_dataset(dir: &Path) -> PathBuf {
    let ds = planted_dataset(PlantedSpec::default()).unwrap();
    let mut histories: Vec<Vec<(u32, u32)>> = ds.train_edges.clone();
    let target = ds.target_index();
    for (&u, &i) in &ds.val_positive {
        histories[target].push((u, i));
    }
    for (&u, &i) in &ds.test_positive {
        histories[target].push((u, i));
    }
    let mut behaviors = Vec::new();
    for (k, name) in ds.behaviors.iter().enumerate() {
        let file = format!("{name}.tsv");
        let mut text = String::new();
        // Stable per-user order: train edges, then validation, then test.
        let mut by_user: Vec<Vec<u32>> = vec![Vec::new(); ds.num_users];
        for &(u, i) in &histories[k] {
            by_user[u as usize].push(i);
        }
        for (u, items) in by_user.iter().enumerate() {
            for i in items {
                text.push_str(&format!("u{u}\ti{i}\n"));
            }
        }
        fs::write(dir.join(&file), text).unwrap();
        behaviors.push(serde_json::json!({"name": name, "path": file}));
    }
    let manifest = dir.join("data.json");
    fs::write(
        &manifest,
        serde_json::to_string(&serde_json::json!({"name": "planted", "behaviors": behaviors}))
            .unwrap(),
    )
    .unwrap();
    manifest
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("c.toml");
    fs::write(
        &path,
        "dim = 16\nhyperedges = 4\nbatch_size = 64\nmax_epochs = 4\ninit_scale = 0.1\neval_ns = [10]\n",
    )
    .unwrap();
    path
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let data = write_dataset(dir);
    let cfg = write_config(dir);
    exec(bin()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(dir.join(out))
        .args(extra))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_run_directory_and_eval_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "run1", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run1");
    for f in ["checkpoint.bin", "history.csv", "manifest.json", "report.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss_bpr,loss_gb,loss_gh,loss_bh,val_hr10,val_ndcg10"
    );
    assert_eq!(lines.count(), 4);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("HR@10") && stdout.contains("NDCG@10"));

    let trained = json(&run.join("report.json"));
    let ev = exec(bin().arg("eval").arg(&run));
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    assert_eq!(json(&run.join("report.json")), trained);

    let ev = exec(bin().arg("eval").arg(&run).args(["--split", "val", "--ns", "5,10,20", "--per-user-csv"]));
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    let val = json(&run.join("report_val.json"));
    let hr = |n: &str| val["hr"][n].as_f64().unwrap();
    assert!(hr("5") <= hr("10") && hr("10") <= hr("20"));
    assert_eq!(val["num_eval_users"], 20);
    let csv = fs::read_to_string(run.join("per_user_val.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "frozen", &["--set", "lr=0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("frozen");
    let manifest = json(&run.join("manifest.json"));
    let cfg: hecgcn::trainer::TrainConfig =
        serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(cfg.lr, 0.0);
    let ds = planted_dataset(PlantedSpec::default()).unwrap();
    let init = hecgcn::trainer::initial_checkpoint(&ds, &cfg, 0).unwrap();
    let ckpt = hecgcn::trainer::load_checkpoint(run.join("checkpoint.bin"), None).unwrap();
    assert_eq!(ckpt.params, init.params);
}

#[test]
fn ablation_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "ab", &["--ablate", "no_hyper", "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.path().join("ab/manifest.json"));
    assert_eq!(manifest["ablations"], serde_json::json!(["no_hyper"]));
    assert_eq!(manifest["config"]["seed"], 9);
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "bad", &["--set", "learning_rate=0.1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn unknown_ablation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "bad", &["--ablate", "no_such_thing"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_thing"));
}

#[test]
fn missing_data_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = exec(bin()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .args(["--data", "/nonexistent/data.json", "--out"])
        .arg(dir.path().join("o")));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/data.json"));
}

#[test]
fn eval_refuses_changed_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "run", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let view = dir.path().join("view.tsv");
    let mut text = fs::read_to_string(&view).unwrap();
    text.push_str("u0\ti29\n");
    fs::write(&view, text).unwrap();
    let ev = exec(bin().arg("eval").arg(dir.path().join("run")));
    assert!(!ev.status.success());
    let err = String::from_utf8_lossy(&ev.stderr);
    assert!(err.contains("hash"), "{err}");
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let ok = exec(bin().arg("gradcheck"));
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("worst:") && stdout.contains("PASS"));

    let ablated = exec(bin().args(["gradcheck", "--ablate", "no_mutual"]));
    assert!(ablated.status.success());

    let broken = exec(bin().args(["gradcheck", "--break", "stop_gradient"]));
    assert!(!broken.status.success());
    assert!(String::from_utf8_lossy(&broken.stdout).contains("FAIL"));
}
