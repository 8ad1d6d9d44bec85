use std::path::{Path, PathBuf};
use std::process::{Command, Output};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

fn avril(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avril"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen(ws: &Workspace, env: &str, n: &str, out: &str) -> PathBuf {
    let env_path = ws.write(&format!("{out}.env.json"), env);
    let demos = ws.path(out);
    ok(&avril(&[&"gen-demos", &"--env", &env_path, &"--n", &n, &"--seed", &"4", &"--out", &demos]));
    demos
}

const GRID_CONFIG: &str = r#"{"env":{"kind":"gridworld"},"avril":{"encoder_form":"tabular","decoder_form":"tabular","lr":0.01,"max_iters":400}}"#;

fn train(ws: &Workspace, config: &str, demos: &Path, out: &str) -> PathBuf {
    let config_path = ws.write(&format!("{out}.json"), config);
    let out_dir = ws.path(out);
    ok(&avril(&[&"train", &"--config", &config_path, &"--demos", &demos, &"--out", &out_dir]));
    out_dir
}

#[test]
fn gen_demos_is_byte_identical() {
    let ws = Workspace::new();
    let a = gen(&ws, r#"{"kind":"cartpole","max_steps":100}"#, "3", "a.jsonl");
    let b = gen(&ws, r#"{"kind":"cartpole","max_steps":100}"#, "3", "b.jsonl");
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 3);
}

#[test]
fn config_errors_exit_with_2() {
    let ws = Workspace::new();
    let demos = gen(&ws, r#"{"kind":"gridworld"}"#, "2", "d.jsonl");
    let bad = ws.write("bad.json", r#"{"env":{"kind":"gridworld"},"avril":{"beta":"hot"}}"#);
    let out = avril(&[&"train", &"--config", &bad, &"--demos", &demos, &"--out", &ws.path("o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("avril.beta"));

    let invalid = ws.write("invalid.json", r#"{"env":{"kind":"gridworld"},"avril":{"gamma":2}}"#);
    let out = avril(&[&"train", &"--config", &invalid, &"--demos", &demos, &"--out", &ws.path("o")]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = ws.write("garbage.jsonl", "{\"states\":[0],\"actions\":\n");
    let good = ws.write("good.json", GRID_CONFIG);
    let out = avril(&[&"train", &"--config", &good, &"--demos", &garbage, &"--out", &ws.path("o")]);
    assert_eq!(out.status.code(), Some(2));

    let out = avril(&[&"train", &"--config", &ws.path("missing.json"), &"--demos", &demos, &"--out", &ws.path("o")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_with_3_and_keeps_a_checkpoint() {
    let ws = Workspace::new();
    let demos = gen(&ws, r#"{"kind":"gridworld"}"#, "3", "d.jsonl");
    let config = ws.write(
        "c.json",
        r#"{"env":{"kind":"gridworld"},"avril":{"encoder_form":"tabular","decoder_form":"tabular","lr":1e300,"max_iters":50}}"#,
    );
    let out_dir = ws.path("run");
    let out = avril(&[&"train", &"--config", &config, &"--demos", &demos, &"--out", &out_dir]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("diverged.json").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn gridworld_pipeline() {
    let ws = Workspace::new();
    let demos = gen(&ws, r#"{"kind":"gridworld"}"#, "10", "d.jsonl");
    let run = train(&ws, GRID_CONFIG, &demos, "run");
    let ckpt = run.join("checkpoint.json");
    assert_eq!(std::fs::read_to_string(run.join("log.csv")).unwrap().lines().count(), 401);

    let maps = ws.path("maps");
    let text = ok(&avril(&[&"eval", &"--checkpoint", &ckpt, &"--mode", &"heatmaps", &"--demos", &demos, &"--out", &maps]));
    assert!(text.contains("spearman"));
    for name in ["true_reward", "occupancy", "posterior_mean", "posterior_std"] {
        let csv = std::fs::read_to_string(maps.join(format!("{name}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 10, "{name}");
        assert!(csv.starts_with("width,height\n8,8\n"));
    }

    let eval_dir = ws.path("eval");
    ok(&avril(&[&"eval", &"--checkpoint", &ckpt, &"--mode", &"match", &"--demos", &demos, &"--out", &eval_dir]));
    assert!(std::fs::read_to_string(eval_dir.join("match.csv")).unwrap().starts_with("acc,auc,aps"));
    let text = ok(&avril(&[&"eval", &"--checkpoint", &ckpt, &"--mode", &"rollout", &"--episodes", &"20", &"--out", &eval_dir]));
    assert!(text.starts_with("mean return"));
    assert_eq!(std::fs::read_to_string(eval_dir.join("returns.csv")).unwrap().lines().count(), 21);

    // a slice of a tabular model is a usage error
    let out = avril(&[&"eval", &"--checkpoint", &ckpt, &"--mode", &"slice", &"--out", &eval_dir]);
    assert_eq!(out.status.code(), Some(2));

    let text = ok(&avril(&[&"reproduce", &"--manifest", &run.join("manifest.json"), &"--out", &ws.path("again")]));
    assert!(text.contains("identical"));
}

#[test]
fn baselines_train_from_the_cli() {
    let ws = Workspace::new();
    let demos = gen(&ws, r#"{"kind":"gridworld"}"#, "10", "d.jsonl");
    let reward_run = train(&ws, GRID_CONFIG, &demos, "avril");
    let bc = train(
        &ws,
        r#"{"method":"bc","env":{"kind":"gridworld"},"avril":{"decoder_form":"tabular","lr":0.01,"max_iters":200}}"#,
        &demos,
        "bc",
    );
    assert!(bc.join("checkpoint.json").exists());
    let arl_config = format!(
        r#"{{"method":"arl","env":{{"kind":"gridworld"}},"arl":{{"decoder_form":"tabular","n_sweeps":500}},"reward_checkpoint":{}}}"#,
        serde_json::to_string(&reward_run.join("checkpoint.json")).unwrap()
    );
    let arl = train(&ws, &arl_config, &demos, "arl");
    let text = ok(&avril(&[&"reproduce", &"--manifest", &arl.join("manifest.json"), &"--out", &ws.path("arl2")]));
    assert!(text.contains("identical"));
    // a fitted-Q checkpoint has no reward posterior to draw
    let out = avril(&[&"eval", &"--checkpoint", &arl.join("checkpoint.json"), &"--mode", &"heatmaps", &"--demos", &demos, &"--out", &ws.path("m")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cartpole_slice() {
    let ws = Workspace::new();
    let demos = gen(&ws, r#"{"kind":"cartpole","max_steps":100}"#, "2", "d.jsonl");
    let run = train(&ws, r#"{"env":{"kind":"cartpole"},"avril":{"max_iters":50,"lr":0.001}}"#, &demos, "run");
    let out_dir = ws.path("slice");
    ok(&avril(&[
        &"eval", &"--checkpoint", &run.join("checkpoint.json"), &"--mode", &"slice", &"--dim", &"2", &"--lo", &"-0.2",
        &"--hi", &"0.2", &"--samples", &"9", &"--out", &out_dir,
    ]));
    let csv = std::fs::read_to_string(out_dir.join("slice.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.lines().nth(1).unwrap().starts_with("-0.2,"));
}

#[test]
fn reproduce_refuses_changed_demos() {
    let ws = Workspace::new();
    let demos = gen(&ws, r#"{"kind":"gridworld"}"#, "3", "d.jsonl");
    let run = train(&ws, GRID_CONFIG, &demos, "run");
    let mut text = std::fs::read_to_string(&demos).unwrap();
    text.push('\n');
    std::fs::write(&demos, text).unwrap();
    let out = avril(&[&"reproduce", &"--manifest", &run.join("manifest.json"), &"--out", &ws.path("again")]);
    assert_eq!(out.status.code(), Some(2));
}
