use std::path::Path;
use std::process::{Command, Output};

fn stepsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepsync")).args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = "schema_version = 1\ntempos = [0.8]\nmodalities = [\"AuditoryVisual\"]\ntrials_per_cell = 3\n";

#[test]
fn help_succeeds_and_unknown_flags_fail() {
    assert_eq!(code(&stepsync(&["--help"])), 0);
    assert_eq!(code(&stepsync(&["run", "--bogus"])), 1);
    assert_eq!(code(&stepsync(&[])), 1);
}

#[test]
fn run_twice_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let outputs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = stepsync(&["run", "--config", &config, "--seed", "42", "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(out.join("results.json")).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);

    let curves = dir.path().join("a/curves");
    assert_eq!(std::fs::read_dir(&curves).unwrap().count(), 2);
    assert_eq!(std::fs::read_dir(dir.path().join("a/plots")).unwrap().count(), 2);
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "schema_version = 1\ntempos = [-0.4]\n");
    let o = stepsync(&["run", "--config", &config, "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tempos[0]"));

    let typo = write_config(dir.path(), "schema_version = 1\ntempo = [0.4]\n");
    assert_eq!(code(&stepsync(&["run", "--config", &typo, "--out", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn missing_or_malformed_data_exits_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("out.json");
    assert_eq!(
        code(&stepsync(&["analyze", "--onsets", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])),
        2
    );
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,foot,source\n1.0,L,participant\n").unwrap();
    let o = stepsync(&["analyze", "--onsets", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn simulate_detect_analyze_report_chain() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let s = sim.to_str().unwrap();
    let o = stepsync(&["simulate", "--tempo", "0.8", "--direction", "negative", "--seed", "5", "--traces", "--out", s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["onsets.csv", "schedule.json", "participant_trace.csv", "cue_trace.csv"] {
        assert!(sim.join(file).exists(), "{file}");
    }

    let detected = sim.join("detected.csv");
    let o = stepsync(&[
        "detect",
        "--trace",
        sim.join("participant_trace.csv").to_str().unwrap(),
        "--out",
        detected.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let rows = std::fs::read_to_string(&detected).unwrap();
    assert_eq!(rows.lines().count(), 31);

    let trial = sim.join("trial.json");
    let o = stepsync(&[
        "analyze",
        "--onsets",
        sim.join("onsets.csv").to_str().unwrap(),
        "--out",
        trial.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trial).unwrap()).unwrap();
    assert_eq!(record["schema_version"], 1);
    assert!(record["trial"]["estimate"]["alpha_hat"].is_number());

    let o = stepsync(&[
        "analyze",
        "--participant-trace",
        sim.join("participant_trace.csv").to_str().unwrap(),
        "--cue-trace",
        sim.join("cue_trace.csv").to_str().unwrap(),
        "--out",
        sim.join("trial_traces.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let run = dir.path().join("run");
    let config = write_config(dir.path(), SMALL);
    assert_eq!(code(&stepsync(&["run", "--config", &config, "--format", "none", "--out", run.to_str().unwrap()])), 0);
    assert!(!run.join("curves").exists());
    let o = stepsync(&[
        "report",
        "--results",
        run.join("results.json").to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}
