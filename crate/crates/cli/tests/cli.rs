use std::path::Path;
use std::process::{Command, Output};

fn ase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ase"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{
    "rounds": 120,
    "batch": {"batch_size": 20, "burn_in": 40, "initial_policy": 0.5},
    "variants": ["oracle", "ase", "a2ipw_naive"],
    "seeds": [0, 1]
}"#;

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = ase(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert!(ta.iter().any(|(name, _)| name.ends_with(".csv")));
    assert_eq!(ta, tb);
}

#[test]
fn simulate_seed_override_and_missing_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("one");
    let res = ase(&[
        "simulate",
        "--config",
        &cfg,
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("ORACLE"));
    assert_eq!(ase(&["simulate", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn policy_prints_csv() {
    let res = ase(&["policy", "--criterion", "d", "--grid", "11"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,pi"));
    let rows: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|p| (0.05..=0.95).contains(p)));

    let twins = ase(&["policy", "--dgp", "twins"]);
    assert_eq!(String::from_utf8(twins.stdout).unwrap().lines().count(), 3);
}

#[test]
fn reproduce_policy_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (preset, file, rows) in [
        ("POLICY_FIG2", "policy_fig2.csv", 20),
        ("ratio-fig5", "ratio_fig5.csv", 41),
    ] {
        let res = ase(&["reproduce", "--preset", preset, "--out", out]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().count(), rows + 1);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let unknown = ase(&["reproduce", "--preset", "NOPE", "--out", out]);
    assert_eq!(unknown.status.code(), Some(2));

    let bad_field = write_config(dir.path(), r#"{"roundz": 5}"#);
    assert_eq!(
        ase(&["simulate", "--config", &bad_field, "--out", out])
            .status
            .code(),
        Some(2)
    );

    assert_eq!(ase(&["policy", "--clip", "0.7"]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let res = ase(&[
        "simulate",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(res.status.code(), Some(1));

    let no_overlap = write_config(
        dir.path(),
        r#"{"dgp": {"kind": "twins", "event_control": 1.0, "censor_control": 0.0},
            "rounds": 50, "batch": {"batch_size": 10, "burn_in": 10, "initial_policy": 0.5},
            "seeds": [0], "variants": ["oracle"]}"#,
    );
    let res = ase(&["simulate", "--config", &no_overlap, "--out", out]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
}
