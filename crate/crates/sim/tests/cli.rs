use std::path::PathBuf;
use std::process::{Command, Output};

use mpcc_core::trajectory::Trajectory;
use mpcc_sim::Summary;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn mpcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpcc")).args(args).output().unwrap()
}

#[test]
fn plan_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/plan.csv");
    for planner in ["pmm", "minsnap"] {
        let o = mpcc(&[
            "plan",
            "--track",
            fixture("figure_eight.json").to_str().unwrap(),
            "--planner",
            planner,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("total time"));
        let traj = Trajectory::read_csv(std::fs::File::open(&out).unwrap()).unwrap();
        assert!(traj.duration() > 1.0, "{planner}: {}", traj.duration());
    }
}

#[test]
fn race_on_straight_track() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mpcc(&["race", "--track", fixture("straight.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["log.csv", "events.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.completed);
    assert_eq!(summary.gates_passed, 1);
    assert_eq!(summary.lap_times.len(), 1);
}

#[test]
fn bad_input_exits_with_error() {
    let o = mpcc(&["race", "--track", "/nonexistent/track.json", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let o = mpcc(&[
        "plan",
        "--track",
        fixture("straight.json").to_str().unwrap(),
        "--planner",
        "rrt",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown planner"));
}
