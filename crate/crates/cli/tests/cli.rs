use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rotorsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotorsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_bundled_hover_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotorsim(&["run", "--config", "hover", "--out", "artifacts"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("artifacts/hover.csv")).unwrap();
    assert!(csv.starts_with("t,x_x,x_y,x_z,"));
    assert_eq!(csv.lines().count(), 5002);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("artifacts/hover.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["seed"], 1);
    assert_eq!(json["config"]["name"], "hover");
    assert!(json["summary"]["max_position_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let res = rotorsim(&["run", "--config", "dryden_wind", "--seed", "17", "--out", out], dir.path());
        assert!(res.status.success(), "{}", stderr(&res));
    }
    for file in ["dryden_wind.csv", "dryden_wind.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn seed_override_changes_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    for (out, seed) in [("a", "1"), ("b", "2")] {
        assert!(rotorsim(&["run", "--config", "hover", "--seed", seed, "--out", out], dir.path())
            .status
            .success());
    }
    let a = fs::read(dir.path().join("a/hover.csv")).unwrap();
    let b = fs::read(dir.path().join("b/hover.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_file_path_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let text = "schema_version = 1\nname = \"short\"\nduration = 0.5\nseed = 3\n\n[trajectory]\nkind = \"hover\"\nposition = [0.0, 0.0, 1.0]\n";
    fs::write(dir.path().join("short.toml"), text).unwrap();
    let out = rotorsim(&["run", "--config", "short.toml", "--no-aero"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let json = fs::read_to_string(dir.path().join("out/short.json")).unwrap();
    assert!(json.contains("\"aero\": false"));
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "schema_version = 1\nname = \"bad\"\nduration = 1.0\nseed = 1\nbogus_field = 3\n\n[trajectory]\nkind = \"hover\"\nposition = [0.0, 0.0, 1.0]\n",
    )
    .unwrap();
    let out = rotorsim(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("bogus_field"), "{msg}");
    assert!(msg.contains("line 5"), "{msg}");
}

#[test]
fn unknown_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotorsim(&["run", "--config", "no_such_thing"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no_such_thing"));
}

#[test]
fn unknown_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotorsim(&["run", "--config", "hover", "--frobnicate"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--frobnicate"));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = String::from_utf8(rotorsim(&["run", "--help"], dir.path()).stdout).unwrap();
    for flag in ["--config", "--out", "--seed", "--no-aero"] {
        assert!(run.contains(flag), "run --help lacks {flag}");
    }
    let mc = String::from_utf8(rotorsim(&["montecarlo", "--help"], dir.path()).stdout).unwrap();
    for flag in ["--config", "--out", "--seed", "--trials", "--parallel", "--no-aero"] {
        assert!(mc.contains(flag), "montecarlo --help lacks {flag}");
    }
}

#[test]
fn simulation_failure_exits_3_with_record() {
    let dir = tempfile::tempdir().unwrap();
    // Hover thrust is out of reach, so the vehicle falls away from the setpoint.
    let text = "schema_version = 1\nname = \"weak\"\nduration = 5.0\nseed = 1\nabort_position_error = 0.5\n\n[vehicle]\npreset = \"default\"\neta_max = 400.0\n\n[trajectory]\nkind = \"hover\"\nposition = [0.0, 0.0, 1.0]\n";
    fs::write(dir.path().join("weak.toml"), text).unwrap();
    let out = rotorsim(&["run", "--config", "weak.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("weak.json"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/weak.json")).unwrap()).unwrap();
    assert!(json["failure"]["cause"].is_string());
}

#[test]
fn montecarlo_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotorsim(
        &["montecarlo", "--trials", "3", "--parallel", "2", "--seed", "5", "--out", "mc"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mc/wind_study/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["summary"]["trials"], 3);
    assert!(summary["summary"]["fraction_within_threshold"].is_number());
    let trials = fs::read_to_string(dir.path().join("mc/wind_study/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 4);
}

#[test]
fn benchmark_circle_emits_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotorsim(&["benchmark-circle", "--out", "bench"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["circle_aero.csv", "circle_aero.json", "circle_no_aero.csv", "circle_no_aero.json"] {
        assert!(dir.path().join("bench").join(f).exists(), "{f}");
    }
}

#[test]
fn calibrate_reports_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotorsim(&["calibrate", "--config", "calibration"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/calibration.json")).unwrap()).unwrap();
    assert_eq!(json["calibration"]["coefficients"].as_array().unwrap().len(), 3);
}

#[test]
fn list_names_every_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = String::from_utf8(rotorsim(&["list-scenarios"], dir.path()).stdout).unwrap();
    for name in ["hover", "circle", "calibration", "constant_wind", "dryden_wind", "saturation", "wind_study"] {
        assert!(out.contains(name), "{name}");
    }
}
