use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qbelief::cli::run_cli;
use qbelief::config::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_qbelief");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["qbelief"];
    argv.extend_from_slice(args);
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn miniature() -> String {
    configs().join("miniature.toml").display().to_string()
}

#[test]
fn shipped_configs_validate() {
    for name in ["defaults", "tmaze-l10", "tmaze-l10-irrelevant", "hike", "miniature"] {
        let path = configs().join(format!("{name}.toml"));
        let (code, out, err) = run(&["validate-config", "--config", path.to_str().unwrap()]);
        assert_eq!(code, 0, "{name}: {err}");
        let resolved = RunConfig::from_toml_str(&out).unwrap();
        assert_eq!(resolved, RunConfig::load(&path).unwrap(), "{name}");
    }
}

#[test]
fn missing_config_exits_with_two() {
    let output = Command::new(BIN)
        .args(["train", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8(output.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn invalid_field_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(
        &path,
        "[env]\nkind = \"tmaze\"\nlength = 3\n\n[protocol.mine]\nwidth = 0\n",
    )
    .unwrap();
    let (code, _, err) = run(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("protocol.mine.width"), "{err}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn unknown_flags_and_keys_are_rejected() {
    let (code, _, _) = run(&["train", "--config", &miniature(), "--bogus"]);
    assert_eq!(code, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    fs::write(&path, "[env]\nkind = \"tmaze\"\nlength = 3\n\n[drqn]\nepisdoes = 3\n").unwrap();
    let (code, _, err) = run(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("episdoes"), "{err}");
}

#[test]
fn zero_episodes_emit_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::load(&configs().join("miniature.toml")).unwrap();
    config.drqn.episodes = 0;
    config.cells.truncate(1);
    config.seeds.truncate(1);
    let path = dir.path().join("zero.toml");
    fs::write(&path, config.to_toml()).unwrap();
    let out = dir.path().join("out");
    let (code, stdout, err) = run(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let metrics = fs::read_to_string(stdout.trim()).unwrap();
    let episodes: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(episodes, ["0", "0", "0"]);
}

#[test]
fn reruns_rewrite_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let args = |cmd: &'static str| {
        vec![
            cmd.to_string(),
            "--config".into(),
            miniature(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let call = |cmd: &'static str| {
        let a = args(cmd);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        let (code, _, err) = run(&refs);
        assert_eq!(code, 0, "{cmd}: {err}");
    };
    call("train");
    call("sweep-generalization");
    let first = tree(&out);
    assert!(first.keys().any(|p| p.ends_with("sweep.csv")));

    call("train");
    call("eval-mi");
    call("sweep-generalization");
    assert_eq!(tree(&out), first);

    // Fresh outputs from scratch, with a different worker count.
    let again = dir.path().join("again");
    let a = [
        "train",
        "--config",
        &miniature(),
        "--out",
        again.to_str().unwrap(),
        "--workers",
        "2",
    ];
    assert_eq!(run(&a).0, 0);
    let b = [
        "sweep-generalization",
        "--config",
        &miniature(),
        "--out",
        again.to_str().unwrap(),
    ];
    assert_eq!(run(&b).0, 0);
    assert_eq!(tree(&again), first);
}

#[test]
fn overrides_narrow_the_job_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, stdout, err) = run(&[
        "train",
        "--config",
        &miniature(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--cell",
        "mgu",
        "--cadence",
        "40",
    ]);
    assert_eq!(code, 0, "{err}");
    let metrics = fs::read_to_string(stdout.trim()).unwrap();
    for line in metrics.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[1], f[2]), ("mgu", "7"));
        assert!(f[3] == "0" || f[3] == "40", "{line}");
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::load(&configs().join("miniature.toml")).unwrap();
    config.drqn.episodes = 0;
    config.cells.truncate(1);
    config.seeds.truncate(1);
    let path = dir.path().join("c.toml");
    fs::write(&path, config.to_toml()).unwrap();
    let root = dir.path().join("from-env");
    let output = Command::new(BIN)
        .args(["train", "--config", path.to_str().unwrap()])
        .env("QBELIEF_OUT", &root)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(root.join("tmaze-l3-irr1/metrics.csv").exists());
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn help_documents_every_flag() {
    let (code, top, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["train", "eval-mi", "sweep-generalization", "report", "validate-config"] {
        assert!(top.contains(sub), "{sub}");
    }
    for sub in ["train", "eval-mi", "sweep-generalization", "validate-config"] {
        let (code, help, _) = run(&[sub, "--help"]);
        assert_eq!(code, 0);
        for flag in [
            "--config",
            "--out",
            "--seed",
            "--cell",
            "--workers",
            "--cadence",
            "QBELIEF_OUT",
        ] {
            assert!(help.contains(flag), "{sub} {flag}");
        }
        let documented = help.lines().filter(|l| l.trim_start().starts_with('-')).count();
        assert_eq!(documented, 7, "{help}");
    }
    let (_, help, _) = run(&["report", "--help"]);
    assert!(help.contains("--input") && help.contains("--out"));
}

#[test]
fn report_reproduces_the_golden_table() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, err) = run(&[
        "report",
        "--input",
        golden("sample.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let expected = fs::read_to_string(golden("report.txt")).unwrap();
    assert_eq!(stdout, expected);
    assert_eq!(
        fs::read_to_string(dir.path().join("correlations.txt")).unwrap(),
        expected
    );
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("env,cell,metric,tag,epsilon,episode,seeds,mean,min,max\n"));
    assert_eq!(summary.lines().count(), 1 + 2 * 3 * 3);
}

#[test]
fn report_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "env,cell,seed\nx,gru,0\n").unwrap();
    let (code, _, err) = run(&["report", "--input", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn protocol_changes_reuse_trained_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut config = RunConfig::load(&configs().join("miniature.toml")).unwrap();
    config.cells.truncate(1);
    config.seeds.truncate(1);
    let path = dir.path().join("c.toml");
    fs::write(&path, config.to_toml()).unwrap();
    let train = || {
        run(&[
            "train",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
    };
    assert_eq!(train().0, 0);
    let job = out.join("tmaze-l3-irr1/gru/seed-0");
    let stamp = |name: &str| fs::metadata(job.join(name)).unwrap().modified().unwrap();
    let (meta, metrics_hash) = (
        stamp("meta.json"),
        fs::read_to_string(job.join("metrics.hash")).unwrap(),
    );

    config.protocol.eval_rollouts += 1;
    fs::write(&path, config.to_toml()).unwrap();
    assert_eq!(train().0, 0);
    assert_eq!(stamp("meta.json"), meta);
    assert_ne!(fs::read_to_string(job.join("metrics.hash")).unwrap(), metrics_hash);

    config.drqn.episodes = 20;
    fs::write(&path, config.to_toml()).unwrap();
    assert_eq!(train().0, 0);
    let episodes: Vec<String> = fs::read_dir(job.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(episodes.len(), 2, "{episodes:?}");
}
