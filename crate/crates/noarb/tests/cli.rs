use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
tasks = ["characteristics"]

[model]
kind = "black_scholes"
mu = 0.05
sigma = 0.2

[grid]
n_steps = 64

[mc]
n_paths = 40
master_seed = 7
chunk_size = 16
"#;

fn noarb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noarb")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {err}"))
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "dat" || x == "txt"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn empty_tasks_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace(r#"["characteristics"]"#, "[]"));
    let o = noarb(&["run", "-c", &cfg, "-o", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let j = stderr_json(&o);
    assert_eq!(j["error"], "config");
    assert_eq!(j["exit_code"], 2);
}

#[test]
fn unknown_task_override_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = noarb(&["run", "-c", &cfg, "--tasks", "characteristics,hedging"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("hedging"));
}

#[test]
fn missing_config_file_fails_cleanly() {
    let o = noarb(&["run", "-c", "/nonexistent/noarb.toml"]);
    assert!(!o.status.success());
    assert!(stderr_json(&o)["exit_code"].as_i64().unwrap() > 0);
}

#[test]
fn equal_seeds_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(noarb(&["run", "-c", &cfg, "-o", a.to_str().unwrap()]).status.success());
    assert!(noarb(&["run", "-c", &cfg, "-o", b.to_str().unwrap()]).status.success());
    let (fa, fb) = (outputs(&a), outputs(&b));
    assert!(fa.iter().any(|(n, _)| n == "levels.csv"));
    assert_eq!(fa, fb);

    let c = tmp.path().join("c");
    assert!(noarb(&["run", "-c", &cfg, "--seed", "8", "-o", c.to_str().unwrap()]).status.success());
    let levels = |d: &Path| fs::read(d.join("levels.csv")).unwrap();
    assert_ne!(levels(&a), levels(&c));
}

#[test]
fn manifest_lists_outputs_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    assert!(noarb(&["run", "-c", &cfg, "-o", a.to_str().unwrap()]).status.success());
    let manifest: toml::Table = fs::read_to_string(a.join("manifest.toml")).unwrap().parse().unwrap();
    let files: Vec<&str> = manifest["run"]["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for (name, _) in outputs(&a) {
        assert!(files.contains(&name.as_str()), "{name} missing from manifest");
    }
    for f in &files {
        assert!(a.join(f).exists(), "manifest names absent file {f}");
    }
    assert_eq!(manifest["run"]["master_seed"].as_integer(), Some(7));

    let b = tmp.path().join("b");
    let m = a.join("manifest.toml");
    assert!(noarb(&["run", "-c", m.to_str().unwrap(), "-o", b.to_str().unwrap()]).status.success());
    assert_eq!(outputs(&a), outputs(&b));
}

#[test]
fn reproduce_rejects_too_few_paths() {
    let o = noarb(&["reproduce", "--n-paths", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty(), "validation must happen before any run");
}

#[test]
fn reproduce_single_model_prints_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = noarb(&[
        "reproduce",
        "--model",
        "black_scholes",
        "--n-paths",
        "1000",
        "-o",
        tmp.path().to_str().unwrap(),
    ]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}\n{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<&str> = out.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(rows.len(), 2, "{out}");
    assert!(rows[1].starts_with("black_scholes") && rows[1].ends_with("ok"));
    let csv = fs::read_to_string(tmp.path().join("reproduce.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(tmp.path().join("black_scholes").join("spectrum.csv").exists());
}

#[test]
fn unknown_model_is_rejected() {
    let o = noarb(&["reproduce", "--model", "heston"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_print_and_parse() {
    for name in ["black_scholes", "bridge_exp", "power_vol"] {
        let o = noarb(&["preset", name]);
        assert!(o.status.success());
        let cfg = noarb::ExperimentConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
        cfg.validate().unwrap();
    }
    assert_eq!(noarb(&["preset", "nope"]).status.code(), Some(2));
}
