use std::path::Path;
use std::process::{Command, Output};

fn gpda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpda")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

#[test]
fn missing_or_broken_config_exits_with_one() {
    let out = gpda(&["simulate"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"case\": 1,\n").unwrap();
    let out = gpda(&["--config", bad.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line "));
}

#[test]
fn sampling_before_surrogate_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let cfg = config("pair");
    let sim = gpda(&["--config", &cfg, "--out", out_dir, "simulate"]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let out = gpda(&["--config", &cfg, "--out", out_dir, "sample", "--mode", "two-stage"]);
    assert_eq!(out.status.code(), Some(1));
    let out = gpda(&["--config", &cfg, "--out", out_dir, "compare"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing baseline"));
}

#[test]
fn seed_override_changes_the_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("pair");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let run = gpda(&[
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "simulate",
        ]);
        assert!(run.status.success());
    }
    let read = |p: &Path| std::fs::read(p.join("case/y_obs.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}
