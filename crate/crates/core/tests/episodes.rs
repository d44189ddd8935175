//! End-to-end episode properties on the shipped scenarios.

use assist_core::sim::{run_episode, Method, UserModel};
use assist_core::Scenario;

const THREE_GOAL: &str = include_str!("../../../scenarios/three_goal.json");
const FOUR_BOXES: &str = include_str!("../../../scenarios/four_boxes.json");

fn methods(s: &Scenario) -> Vec<Method> {
    let names: &[&str] = if s.is_teaming() {
        &["policy", "plan", "fixed"]
    } else {
        &["direct", "blend", "policy", "autonomy"]
    };
    names.iter().map(|n| Method::parse(n, s).unwrap()).collect()
}

#[test]
fn shipped_scenarios_round_trip() {
    for text in [THREE_GOAL, FOUR_BOXES] {
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn traces_are_deterministic_and_metrics_consistent() {
    let user = UserModel::NoisyGreedy { noise_level: 0.2 };
    for text in [THREE_GOAL, FOUR_BOXES] {
        let s = Scenario::from_json(text).unwrap();
        for m in methods(&s) {
            let (ta, ma) = run_episode(&s, m, &user, 3, 1500).unwrap();
            let (tb, mb) = run_episode(&s, m, &user, 3, 1500).unwrap();
            assert_eq!(ta, tb, "{m}");
            assert_eq!(ma, mb, "{m}");
            assert_eq!(ma.exec_time, ma.steps as f64 * s.dt);
            assert_eq!(ma.mode_switches, 0);
            if ma.assist_fraction == 1.0 {
                assert_ne!(m.as_str(), "direct");
            }
        }
    }
}
