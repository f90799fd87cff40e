use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn reveal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reveal")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("c.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn tiling_episode_succeeds_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "setting = \"sparse-vines\"\n");
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = reveal(&["episode", "--config", &cfg, "--seed", "4", "--out", out.to_str().unwrap(), "--policy", "tiling", "--steps", "3"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("trace.jsonl")).unwrap()
    };
    let a = run("a");
    assert_eq!(a.lines().count(), 4);
    assert_eq!(a, run("b"));
    let meta = fs::read_to_string(dir.path().join("a/meta.json")).unwrap();
    assert!(meta.contains("ground-truth reveal"));
}

#[test]
fn empty_target_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let mask = dir.path().join("t.pbm");
    fs::write(&mask, format!("P1\n80 80\n{}", "0 ".repeat(6400))).unwrap();
    let o = reveal(&[
        "episode", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap(),
        "--policy", "handcrafted", "--target", mask.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("target region is empty"));
}

#[test]
fn targeted_handcrafted_episode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[cem]\nsamples = 20\niterations = 1\n");
    let mask = dir.path().join("t.pbm");
    let rows: Vec<String> = (0..80).map(|r| (0..80).map(|c| if (30..50).contains(&r) && c < 40 { "1" } else { "0" }).collect()).collect();
    fs::write(&mask, format!("P1\n80 80\n{}\n", rows.join("\n"))).unwrap();
    let out = dir.path().join("o");
    let o = reveal(&[
        "episode", "--config", &cfg, "--out", out.to_str().unwrap(), "--policy", "handcrafted",
        "--steps", "2", "--target", mask.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert!(first.lines().next().unwrap().contains("\"initial_area\":5600"));
}

#[test]
fn invalid_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let bad = write_config(dir.path(), "trials = 0\n");
    assert_eq!(code(&reveal(&["experiment", "--config", &bad, "--out", out])), 2);
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&reveal(&["collect", "--config", missing.to_str().unwrap(), "--out", out])), 2);
    let cfg = write_config(dir.path(), "experiment = \"single-action\"\n[checkpoints]\nvine = \"absent.ckpt\"\n");
    let o = reveal(&["experiment", "--config", &cfg, "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&reveal(&["episode", "--config", &cfg, "--out", out, "--policy", "greedy"])), 2);
    assert_eq!(code(&reveal(&["episode", "--config", &cfg, "--out", out, "--policy", "ppg"])), 2);
    assert_eq!(code(&reveal(&["train", "--config", &cfg, "--out", out, "--ablation", "no-legs"])), 2);
    assert_eq!(code(&reveal(&["frobnicate"])), 2);
}

#[test]
fn collect_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let cfg = write_config(
        dir.path(),
        "setting = \"vine-base\"\n[dataset]\npath = \"data\"\nsamples = 30\n[train]\nepochs = 1\n[checkpoints]\nvine = \"model/model.ckpt\"\n",
    );
    let o = reveal(&["collect", "--config", &cfg, "--seed", "1", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("direction_stats.csv").is_file());
    let o = reveal(&["train", "--config", &cfg, "--seed", "1", "--out", model.to_str().unwrap(), "--ablation", "full"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(model.join("history.csv").is_file());
    let ev = dir.path().join("ev");
    let o = reveal(&["eval-ap", "--config", &cfg, "--out", ev.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(ev.join("eval_ap.csv")).unwrap();
    assert!(csv.starts_with("checkpoint,ablation,test_ap\r\n"));
}
