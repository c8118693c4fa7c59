use std::path::{Path, PathBuf};
use std::process::Command;

use uav_wpcn_cli::{commands, Context, Flags, ScenarioFile};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_uav-wpcn")).args(args).output().unwrap()
}

fn two_user(period: f64) -> ScenarioFile {
    let mut f = ScenarioFile::load(&scenario_path("two_user_d10.toml")).unwrap();
    f.period_s = period;
    f
}

#[test]
fn malformed_file_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "users = [[0.0, 0.0]]\naltitude_m = 5.0\n").unwrap();
    let out = run(&["plan", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("beta0_db"), "{err}");
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenario_path("two_user_d5.toml");
    let mut reports = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "optimize",
            "--scenario",
            scn.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "9",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(out_dir.join("two_user_d5/scp/report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let text = String::from_utf8(reports.pop().unwrap()).unwrap();
    assert!(text.contains("\"seed\": 9"));
}

#[test]
fn relaxed_run_writes_hover_locations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve-relaxed",
        "--scenario",
        scenario_path("two_user_d10.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("two_user_d10/relaxed/hovering.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r.starts_with("wpt")).count(), 2);
}

#[test]
fn single_user_relaxed_hovers_above_user() {
    let mut f = two_user(5.0);
    f.users = vec![[3.0, -1.0]];
    let ctx = Context::new("one", f, &Flags::default()).unwrap();
    let art = commands::run_relaxed(&ctx).unwrap();
    let h = art.hovering.unwrap();
    assert_eq!(h.wpt.len(), 1);
    assert!((h.wpt[0].position.x - 3.0).abs() < 1e-9 && (h.wpt[0].position.y + 1.0).abs() < 1e-9);
    assert!(art.throughput.common_rate > 0.0);
}

#[test]
fn short_period_takes_scaled_branch() {
    let ctx = Context::new("short", two_user(0.5), &Flags::default()).unwrap();
    let art = commands::run_plan(&ctx).unwrap();
    assert_eq!(art.solution["branch"]["kind"], "scaled");
    let traj = art.trajectory.unwrap();
    assert!((traj.path_length() - 5.0).abs() < 1e-6, "{}", traj.path_length());
}

#[test]
fn period_equal_to_flight_time_is_pure_flight() {
    let ctx = Context::new("edge", two_user(1.0), &Flags::default()).unwrap();
    let art = commands::run_plan(&ctx).unwrap();
    assert_eq!(art.solution["branch"]["kind"], "hover-fly");
    let hovers: f64 = art.solution["hover_points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["hover_s"].as_f64().unwrap())
        .sum();
    assert!(hovers < 1e-9);
    let traj = art.trajectory.unwrap();
    assert!((traj.path_length() - 10.0).abs() < 1e-9);
}

#[test]
fn slot_flag_and_json_input() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("pair.json");
    std::fs::write(&json, serde_json::to_string(&two_user(2.0)).unwrap()).unwrap();
    let out = run(&[
        "plan",
        "--scenario",
        json.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--slots",
        "40",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sched: uav_wpcn::Schedule =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pair/hover-fly/schedule.json")).unwrap()).unwrap();
    // flight slots respect the requested length; hover slots may be longer
    assert!(sched.slots.iter().filter(|s| s.wpt_duration > 0.0 && s.wit_durations.iter().any(|&t| t > 0.0)).all(|s| s.duration <= 0.05 + 1e-12));
}

#[test]
fn sweep_writes_long_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--scenario",
        scenario_path("two_user_d5.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--periods",
        "1,3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("two_user_d5/sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    assert!(csv.starts_with("method,period_s,common_rate"));
}
