//! End-to-end runs of the command-line tool: exit codes, diagnostics and
//! reproducible artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entry_guidance::cli::sha256_hex;

const BIN: &str = env!("CARGO_BIN_EXE_entry-guidance");

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// Copies the bundled scenario into `dir`, applying `edit` to the TOML text.
fn scenario_copy(dir: &Path, edit: impl FnOnce(String) -> String) -> PathBuf {
    for f in ["msl_atmosphere.csv", "msl_bank.csv"] {
        fs::copy(scenarios().join(f), dir.join(f)).unwrap();
    }
    let text = fs::read_to_string(scenarios().join("msl.toml")).unwrap();
    let path = dir.join("scenario.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("ENTRY_GUIDANCE_WORKERS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_field_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_copy(dir.path(), |t| {
        t.lines()
            .filter(|l| !l.starts_with("mass_kg"))
            .collect::<Vec<_>>()
            .join("\n")
    });
    let out = dir.path().join("out");
    let o = run(&["nominal", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("mass_kg"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("absent.toml");
    let o = run(&["nominal", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unattainable_constraints_exit_as_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_copy(dir.path(), |t| t.replace("altitude_limit_m = 2000.0", "altitude_limit_m = 1.0"));
    let out = dir.path().join("out");
    let o = run(&[
        "gains", "--config", s(&cfg), "--method", "stochastic", "--trigger", "time", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn ensemble_with_every_trial_flagged_is_degraded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("msl.toml");
    let out = dir.path().join("out");
    let o = run(&[
        "gains", "--config", s(&cfg), "--method", "zero", "--trigger", "velocity", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // A trigger speed above the entry speed fails every trial at its start.
    let gains = out.join("zero_velocity_gains.csv");
    let text = fs::read_to_string(&gains).unwrap();
    assert!(text.contains("# beta = 500.0"));
    let broken = dir.path().join("broken_gains.csv");
    fs::write(&broken, text.replace("# beta = 500.0", "# beta = 100000.0")).unwrap();

    let mc = dir.path().join("mc");
    let o = run(&[
        "montecarlo", "--config", s(&cfg), "--schedule", s(&broken), "-n", "4", "--seed", "1", "--workers", "1",
        "--out", s(&mc),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let trials = fs::read_to_string(mc.join("broken_trials.csv")).unwrap();
    assert_eq!(trials.matches("flagged").count(), 4, "{trials}");
    assert!(mc.join("montecarlo_manifest.json").exists());
}

#[test]
fn nominal_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("msl.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["nominal", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["reference.csv", "events.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("nominal_manifest.json")).unwrap()).unwrap();
    let entry = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["path"] == "reference.csv")
        .unwrap();
    let digest = sha256_hex(&fs::read(a.join("reference.csv")).unwrap());
    assert_eq!(entry["sha256"], digest.as_str());
}
