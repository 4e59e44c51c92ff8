use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn duet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duet")).args(args).env_remove("DUET_DATA_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = duet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let (data, run, s1, s2, eval) = (p("data"), p("train"), p("s1"), p("s2"), p("eval"));
    ok(&["gen-data", "--scenario", "mirror", "--clips", "2", "--frames", "200", "--out", &data]);
    assert!(Path::new(&data).join("config.toml").exists());

    ok(&["train", "--data", &data, "--out", &run, "--iters", "20", "--batch", "2", "--windows", "1"]);
    let model = Path::new(&run).join("model.json");
    assert!(model.exists());
    assert!(fs::read_to_string(Path::new(&run).join("loss.csv")).unwrap().lines().count() > 1);

    let ckpt = model.to_string_lossy().into_owned();
    for out in [&s1, &s2] {
        ok(&[
            "--deterministic", "sample", "--checkpoint", &ckpt, "--data", &data, "--out", out, "--max-windows", "1",
            "--steps", "2",
        ]);
    }
    let (a, b) = (files(Path::new(&s1)), files(Path::new(&s2)));
    assert!(a.len() > 2);
    assert_eq!(a, b);

    ok(&["evaluate", "--generated", &s1, "--reference", &data, "--out", &eval, "--diversity-subset", "2"]);
    let metrics = fs::read_to_string(Path::new(&eval).join("metrics.txt")).unwrap();
    assert!(metrics.contains("fid"));
    assert!(Path::new(&eval).join("windows.csv").exists());

    let info = ok(&["inspect", &data]);
    assert!(!info.stdout.is_empty());
}

#[test]
fn skeleton_mismatch_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.mclip");
    let names: Vec<String> = (0..24).map(|i| format!("j{i}")).collect();
    let header = serde_json::json!({
        "version": 1, "fps": 30.0, "joint_count": 24, "joint_names": names, "agent_id": "actor"
    });
    fs::write(&path, format!("{header}\n")).unwrap();
    let out = duet(&["inspect", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skeleton mismatch"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(duet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(duet(&["train", "--iters", "many"]).status.code(), Some(2));
}

#[test]
fn help_lists_defaults() {
    let out = ok(&["train", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[default: 8]"));
    assert!(text.contains("[default: tiny]"));
    let top = String::from_utf8_lossy(&ok(&["--help"]).stdout).into_owned();
    assert!(top.contains("30 fps"));
}
