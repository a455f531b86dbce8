//! End-to-end tests of the `spinesim` binary: subcommand wiring, exit codes,
//! artifact layout, and bit-for-bit determinism of reports across runs and
//! worker counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinesim"))
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

static DIR_SEQ: AtomicU32 = AtomicU32::new(0);

/// Fresh scratch directory per call; unique across parallel tests.
fn scratch() -> PathBuf {
    let n = DIR_SEQ.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "spinesim-cli-{}-{n}",
        std::process::id()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY_SIMULATE: &str = r#"
schema_version = 1
name = "tiny"

[model]
name = "bbm"
[model.motion]
kind = "brownian"
diffusion = 1.0
[model.rate]
kind = "constant"
beta = 1.0
[model.offspring]
kind = "explicit"
probs = [0.0, 0.0, 1.0]

[experiment]
kind = "simulate"
seed = 7
replicates = 300
horizon = 0.5
trace-replicates = 5

[experiment.start]
kind = "point"
x = 0.0

[experiment.simulate]
times = [0.5]
functionals = [{ kind = "population" }]

[output]
dir = "out"
formats = ["json", "csv", "svg"]
"#;

#[test]
fn validates_every_checked_in_config() {
    let mut seen = 0;
    for entry in fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let out = bin().arg("validate").arg(&path).output().unwrap();
        assert!(
            out.status.success(),
            "{}: {}{}",
            path.display(),
            stdout(&out),
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(stdout(&out).starts_with("ok: "));
        seen += 1;
    }
    assert!(seen >= 17, "expected the full config catalog, saw {seen}");
}

#[test]
fn list_covers_all_criteria() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for c in 1..=13 {
        let id = format!("C{c}");
        assert!(
            text.split_whitespace().any(|w| w == id),
            "missing criterion {id} in list output"
        );
    }
}

#[test]
fn run_is_deterministic_and_writes_artifacts() {
    let dir = scratch();
    let cfg = write_config(&dir, "tiny.toml", TINY_SIMULATE);

    let mut reports = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.join(sub);
        let out = bin().arg("run").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read(out_dir.join("tiny.report.json")).unwrap());
        assert!(out_dir.join("tiny.traces.csv").exists());
    }
    assert_eq!(reports[0], reports[1], "same seed must reproduce the report byte for byte");

    let text = String::from_utf8(reports.pop().unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut keys: Vec<&str> = report.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["experiment", "items", "model", "replicates", "seed"]);
    // declared order in the serialized text
    let positions: Vec<usize> = ["experiment", "model", "seed", "replicates", "items"]
        .iter()
        .map(|k| text.find(&format!("\"{k}\"")).unwrap())
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "key order in the report text");

    let traces = fs::read_to_string(dir.join("a/tiny.traces.csv")).unwrap();
    assert!(traces.starts_with("replicate,kind,t,value\n"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_is_independent_of_worker_count() {
    let dir = scratch();
    let cfg = write_config(&dir, "tiny.toml", TINY_SIMULATE);
    let mut reports = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.join(workers);
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--workers")
            .arg(workers)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read(out_dir.join("tiny.report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1], "worker count must not change the report");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_override_changes_the_estimate() {
    let dir = scratch();
    let cfg = write_config(&dir, "tiny.toml", TINY_SIMULATE);
    let mut estimates = Vec::new();
    for seed in ["7", "8"] {
        let out_dir = dir.join(seed);
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--seed")
            .arg(seed)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        let report: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(out_dir.join("tiny.report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report["seed"].as_u64(), seed.parse::<u64>().ok());
        estimates.push(report["items"][0]["estimate"].as_f64().unwrap());
    }
    assert_ne!(estimates[0], estimates[1]);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn eigen_report_artifact_has_tiny_residual() {
    let dir = scratch();
    let out = bin()
        .arg("run")
        .arg(config_dir().join("c12-eigen-report.toml"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eigen: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.join("c12-eigen-report.eigen.json")).unwrap(),
    )
    .unwrap();
    assert!(eigen["residual"].as_f64().unwrap() < 1e-10);
    assert!(eigen["lambda1"].as_f64().unwrap().is_finite());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn failing_item_exits_one() {
    let dir = scratch();
    // residual tolerance far below float precision: the item must fail
    let cfg = write_config(
        &dir,
        "fail.toml",
        r#"
schema_version = 1
name = "fail"

[model]
name = "two-type-chain"
[model.motion]
kind = "finite-chain"
generator = [[-2.0, 2.0], [1.0, -1.0]]
[model.rate]
kind = "constant"
beta = 1.0
[model.offspring]
kind = "per-state"
table = [
    { kind = "explicit", probs = [0.0, 0.0, 1.0] },
    { kind = "explicit", probs = [0.0, 1.0] },
]

[experiment]
kind = "eigen-report"
seed = 1
horizon = 1.0
[experiment.start]
kind = "type"
index = 0
[experiment.eigen-report]
residual-tolerance = 1e-30

[output]
dir = "out"
formats = ["json"]
"#,
    );
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("[FAIL]"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn capped_replicates_exit_two() {
    let dir = scratch();
    // node budget small enough that a visible share of trees hit the cap
    let cfg = write_config(
        &dir,
        "capped.toml",
        &TINY_SIMULATE
            .replace("horizon = 0.5", "horizon = 3.0\nmax-nodes = 64")
            .replace("times = [0.5]", "times = [3.0]")
            .replace("name = \"tiny\"", "name = \"capped\""),
    );
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).contains("[INCONCLUSIVE]"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = scratch();
    let cfg = write_config(
        &dir,
        "typo.toml",
        &TINY_SIMULATE.replace("replicates = 300", "replicates = 300\nreplicate_count = 5"),
    );
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replicate_count"));
    fs::remove_dir_all(&dir).ok();
}
