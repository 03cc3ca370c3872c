use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dqs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqs"))
        .args(args)
        .env("DQS_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tiny_cfg(dir: &Path, env: &str, extra: &str) -> PathBuf {
    let text = format!(
        "[run]\nenv = {env}\nagent = dqs\nseeds = 0, 1\nout = {}\ntotal_steps = 120\neval_episodes = 4\n\n\
         [train]\nbatch_size = 8\nseed_steps = 40\ncritic_hidden = 16, 16\n\n\
         [dqs]\npolicy_hidden = 16, 16\nembed_dim = 8\nmc_samples = 8\nintegration_steps = 5\n\
         temperature_mode = fixed\ntemperature_start = 1\n{extra}",
        dir.join("runs").display()
    );
    let p = dir.join(format!("{env}.cfg"));
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn train_writes_run_directory_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path(), "gmm", "");
    let out = dir.path().join("out");
    ok(&dqs(&["train", "--config", cfg.to_str().unwrap(), "--seed", "0", "--out", out.to_str().unwrap(),
        "--override", "total_steps=200", "--override", "run.eval_interval=100"]));
    let metrics = std::fs::read_to_string(out.join("run_0/metrics.csv")).unwrap();
    assert!(metrics.lines().last().unwrap().starts_with("200,"));
    assert!(!out.join("run_1").exists(), "--seed selects a single seed");
    let snapshot = std::fs::read_to_string(out.join("run_0/config.cfg")).unwrap();
    assert!(snapshot.contains("total_steps = 200"), "{snapshot}");
    assert!(out.join("run_0/ckpt_200/agent.dqsc").exists());

    // the snapshot relaunches the same run
    let again = dir.path().join("again");
    ok(&dqs(&["train", "--config", out.join("run_0/config.cfg").to_str().unwrap(), "--out", again.to_str().unwrap()]));
    assert_eq!(metrics, std::fs::read_to_string(again.join("run_0/metrics.csv")).unwrap());
}

#[test]
fn unknown_key_is_named_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path(), "gmm", "learningrate = 0.1\n");
    let out = dqs(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learningrate") && err.contains("line 21"), "{err}");
}

#[test]
fn eval_plot_and_sample_on_trained_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    for env in ["gmm", "maze"] {
        let cfg = tiny_cfg(dir.path(), env, "");
        let out = dir.path().join(env);
        ok(&dqs(&["train", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()]));
        let run = out.join("run_3");
        let ckpt = run.join("ckpt_120/agent.dqsc");

        let e1 = dir.path().join(format!("{env}_e1"));
        let e2 = dir.path().join(format!("{env}_e2"));
        let r1 = ok(&dqs(&["eval", ckpt.to_str().unwrap(), "--episodes", "5", "--seed", "9", "--out", e1.to_str().unwrap()]));
        ok(&dqs(&["eval", ckpt.to_str().unwrap(), "--episodes", "5", "--seed", "9", "--out", e2.to_str().unwrap()]));
        let report = std::fs::read_to_string(e1.join("eval_report.txt")).unwrap();
        let numbers = |r: &str| r.lines().filter(|l| !l.starts_with("samples")).map(str::to_owned).collect::<Vec<_>>();
        assert_eq!(numbers(&report), numbers(&std::fs::read_to_string(e2.join("eval_report.txt")).unwrap()));
        assert!(r1.contains("episodes = 5"));
        if env == "maze" {
            assert!(report.contains("goal_0_rate") && report.contains("goal_1_rate"), "{report}");
        }
        assert!(e1.join("trajectories.csv").exists());

        let empty = ok(&dqs(&["eval", ckpt.to_str().unwrap(), "--episodes", "0", "--out", dir.path().join("e0").to_str().unwrap()]));
        assert!(empty.contains("episodes = 0"));

        let printed = ok(&dqs(&["plot", run.to_str().unwrap()]));
        let images: &[&str] = if env == "gmm" { &["samples.png", "logZ.png", "curves.png"] } else { &["trajectories.png", "curves.png"] };
        for img in images {
            assert!(run.join(img).exists() && printed.contains(img), "{env}: {img}");
        }

        let csv = ok(&dqs(&["sample", ckpt.to_str().unwrap(), "--state", if env == "gmm" { "-1,2" } else { "0,0,0,0" }, "-n", "6"]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "a0,a1");
        assert_eq!(lines.len(), 7);
        let bound = if env == "gmm" { 1.0 } else { 2.0 };
        for l in &lines[1..] {
            for v in l.split(',') {
                assert!(v.parse::<f64>().unwrap().abs() < bound);
            }
        }
    }
}

#[test]
fn checkpoint_directory_and_file_are_interchangeable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path(), "gmm", "");
    let out = dir.path().join("o");
    ok(&dqs(&["train", "--config", cfg.to_str().unwrap(), "--seed", "0", "--out", out.to_str().unwrap()]));
    let ckpt_dir = out.join("run_0/ckpt_120");
    let ckpt_file = ckpt_dir.join("agent.dqsc");
    let args = |c: &Path| dqs(&["sample", c.to_str().unwrap(), "--state", "1,-2", "-n", "5", "--seed", "3"]);
    assert_eq!(ok(&args(&ckpt_dir)), ok(&args(&ckpt_file)));
    ok(&dqs(&["eval", ckpt_dir.to_str().unwrap(), "--episodes", "2"]));
    assert!(ckpt_dir.join("eval_seed0/eval_report.txt").exists());
}

#[test]
fn plot_skips_curves_for_empty_metrics_and_names_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_cfg(dir.path(), "gmm", "");
    let out = dir.path().join("o");
    ok(&dqs(&["train", "--config", cfg.to_str().unwrap(), "--seed", "0", "--out", out.to_str().unwrap()]));
    let run = out.join("run_0");
    std::fs::write(run.join("metrics.csv"), format!("{}\n", dqs::eval::METRICS_HEADER)).unwrap();
    let res = dqs(&["plot", run.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    assert!(!run.join("curves.png").exists());
    assert!(run.join("samples.png").exists());

    std::fs::remove_file(run.join("logz.csv")).unwrap();
    std::fs::remove_file(run.join("samples.csv")).unwrap();
    let res = dqs(&["plot", run.to_str().unwrap()]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("logz.csv") && err.contains("samples.csv"), "{err}");
}

#[test]
fn damaged_or_missing_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dqs(&["eval", dir.path().join("nope.dqsc").to_str().unwrap()]);
    assert!(!missing.status.success());
    let cfg = tiny_cfg(dir.path(), "gmm", "");
    let out = dir.path().join("o");
    ok(&dqs(&["train", "--config", cfg.to_str().unwrap(), "--seed", "0", "--out", out.to_str().unwrap()]));
    let ckpt = out.join("run_0/ckpt_120/agent.dqsc");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&ckpt, bytes).unwrap();
    let res = dqs(&["eval", ckpt.to_str().unwrap(), "--episodes", "1"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).to_lowercase().contains("checksum"));
}
