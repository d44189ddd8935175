use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_assist");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn assist(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn assist")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn run_is_byte_identical_across_invocations_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("three_goal.json");
    let mut outs = Vec::new();
    for (tag, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let stem = dir.path().join(tag);
        let o = assist(&[
            "run",
            "--scenario",
            sc.to_str().unwrap(),
            "--method",
            "blend",
            "--episodes",
            "6",
            "--seed",
            "11",
            "--jobs",
            jobs,
            "--out",
            stem.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push((
            std::fs::read(dir.path().join(format!("{tag}.jsonl"))).unwrap(),
            std::fs::read(dir.path().join(format!("{tag}.csv"))).unwrap(),
        ));
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);

    let text = String::from_utf8(outs[0].0.clone()).unwrap();
    let seeds: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, (11..17).collect::<Vec<_>>());
}

#[test]
fn autonomy_on_single_goal_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("three_goal.json")).unwrap()).unwrap();
    s["goals"].as_array_mut().unwrap().truncate(1);
    let path = dir.path().join("one.json");
    std::fs::write(&path, s.to_string()).unwrap();
    let stem = dir.path().join("out");
    let o = assist(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--method",
        "autonomy",
        "--episodes",
        "1",
        "--user",
        "idle",
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("out.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "autonomy");
    assert_eq!(rows[0][2], "1", "success_rate");
}

#[test]
fn unknown_method_is_a_usage_error() {
    let o = assist(&["run", "--scenario", scenario("three_goal.json").to_str().unwrap(), "--method", "nope"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown method"));
}

#[test]
fn invalid_scenario_reports_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"name": "bad", "n": 2, "goals": []}"#).unwrap();
    let o = assist(&["run", "--scenario", path.to_str().unwrap(), "--method", "policy"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid scenario"));
}

#[test]
fn cli_flags_override_scenario_and_are_echoed() {
    let o = assist(&[
        "run",
        "--scenario",
        scenario("three_goal.json").to_str().unwrap(),
        "--method",
        "blend",
        "--episodes",
        "1",
        "--blend-distance",
        "0.7",
        "--tick-limit",
        "50",
    ]);
    assert!(o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("blend_distance   0.7"), "{err}");
    assert!(err.contains("tick_limit       50"), "{err}");
    let out = String::from_utf8_lossy(&o.stdout);
    // 50 ticks is too short to reach any goal
    assert!(out.lines().nth(1).unwrap().starts_with("blend\t1\t0\t50\t"), "{out}");
}

#[test]
fn compare_orders_policy_before_blend() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("cmp");
    let o = assist(&[
        "compare",
        "--scenario",
        scenario("three_goal.json").to_str().unwrap(),
        "--methods",
        "policy,blend,direct",
        "--episodes",
        "20",
        "--jobs",
        "4",
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("cmp.csv"));
    let steps = |m: &str| -> f64 { rows.iter().find(|r| r[0] == m).unwrap()[3].parse().unwrap() };
    assert!(steps("policy") < steps("blend"));
    let pairs = read_csv(&dir.path().join("cmp.pairs.csv"));
    assert_eq!(pairs.len(), 3);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("[ok] steps policy"), "{out}");
    assert!(!out.contains("VIOLATED"), "{out}");
}

#[test]
fn compare_same_method_twice_gives_identical_columns() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("dd");
    let o = assist(&[
        "compare",
        "--scenario",
        scenario("three_goal.json").to_str().unwrap(),
        "--methods",
        "direct,direct",
        "--episodes",
        "3",
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rows = read_csv(&dir.path().join("dd.csv"));
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn compare_needs_two_methods() {
    let sc = scenario("three_goal.json");
    for methods in ["policy", ""] {
        let o = assist(&["compare", "--scenario", sc.to_str().unwrap(), "--methods", methods]);
        assert!(!o.status.success(), "methods={methods:?}");
    }
}

#[test]
fn compare_teaming_with_feint_user_flags_orderings() {
    let o = assist(&[
        "compare",
        "--scenario",
        scenario("four_boxes.json").to_str().unwrap(),
        "--methods",
        "policy,plan,fixed",
        "--episodes",
        "1",
        "--user-model",
        scenario("four_boxes_feint_user.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("[ok] collision policy"), "{out}");
    assert!(out.contains("[ok] idle policy"), "{out}");
}

#[test]
fn oracle_check_passes_and_detects_fault() {
    let ok = assist(&["oracle-check"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let out = String::from_utf8_lossy(&ok.stdout);
    assert!(out.contains("gradients") && out.contains("posterior"));
    assert!(!out.contains("FAIL"));

    let bad = assist(&["oracle-check", "--inject-fault", "negate-alpha"]);
    assert!(!bad.status.success());
    let out = String::from_utf8_lossy(&bad.stdout);
    assert!(out.lines().any(|l| l.starts_with("FAIL") && l.contains("min-decomposition")), "{out}");
}

#[test]
fn help_lists_every_flag() {
    let o = assist(&["run", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--scenario",
        "--method",
        "--user",
        "--user-model",
        "--episodes",
        "--seed",
        "--out",
        "--jobs",
        "--tick-limit",
        "--noise-level",
        "--blend-distance",
        "--commit-threshold",
        "--conf-floor",
        "--conf-ceil",
        "--alpha-max",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
}
