//! Simulated users. Each produces the velocity the user wants to apply; the
//! episode driver turns that into device input (including mode switches when
//! the scenario uses modal control).

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::prediction::{action_log_probs, user_target_q, CandidateActionSet};
use crate::types::{Goal, ModalConfig, Velocity, WorkspacePoint};
use crate::value::{best_target, ValueParams};

/// One tick of operator input at the device level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserInput {
    /// Device axes (length `device_dof` under modal control, else `n`).
    pub device: Vec<f64>,
    #[serde(default)]
    pub mode_switch: bool,
}

impl UserInput {
    pub fn zeros(m: usize) -> Self {
        Self {
            device: vec![0.0; m],
            mode_switch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UserModel {
    /// Never touches the controls.
    Idle,
    NoisyGreedy { noise_level: f64 },
    MaxEnt,
    /// Workspace velocities replayed tick by tick.
    Scripted { script: Vec<Velocity> },
    /// Device-level inputs replayed verbatim (e.g. a recorded live session).
    Recorded { inputs: Vec<UserInput> },
    /// Closed-loop waypoint follower at full user speed.
    Route { legs: Vec<Leg> },
}

/// One waypoint of a [`UserModel::Route`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub to: WorkspacePoint,
    /// Ticks to hold still after arriving.
    #[serde(default)]
    pub pause_ticks: usize,
    /// If set, the user does not start this leg while a still-working robot
    /// is within this distance of `to`. Checked only before the leg starts.
    #[serde(default)]
    pub wait_clearance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum LegPhase {
    #[default]
    Pending,
    Moving,
    Pausing(usize),
}

/// Progress along a route.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteState {
    leg: usize,
    phase: LegPhase,
}

impl RouteState {
    pub fn finished(&self, legs: &[Leg]) -> bool {
        self.leg >= legs.len()
    }
}

/// Velocity for the current tick of a route; advances `state`.
pub fn route_velocity(
    legs: &[Leg],
    state: &mut RouteState,
    x: &WorkspacePoint,
    robot: Option<&WorkspacePoint>,
    speed: f64,
    dt: f64,
) -> Velocity {
    let zero = Velocity::zeros(x.dim());
    loop {
        let Some(leg) = legs.get(state.leg) else {
            return zero;
        };
        match state.phase {
            LegPhase::Pending => {
                if let (Some(r), Some(robot)) = (leg.wait_clearance, robot) {
                    if robot.euclidean(&leg.to) < r {
                        return zero;
                    }
                }
                state.phase = LegPhase::Moving;
            }
            LegPhase::Moving => {
                let diff: Vec<f64> = leg.to.coords().iter().zip(x.coords()).map(|(t, c)| t - c).collect();
                let d = diff.iter().map(|c| c * c).sum::<f64>().sqrt();
                if d > 1e-9 {
                    let v = speed.min(d / dt);
                    return Velocity(diff.iter().map(|c| c / d * v).collect());
                }
                state.phase = LegPhase::Pausing(leg.pause_ticks);
            }
            LegPhase::Pausing(0) => {
                state.leg += 1;
                state.phase = LegPhase::Pending;
            }
            LegPhase::Pausing(k) => {
                state.phase = LegPhase::Pausing(k - 1);
                return zero;
            }
        }
    }
}

/// Full speed toward the best target plus isotropic Gaussian noise with
/// standard deviation `noise_level * user_speed` per axis, re-clamped to the
/// speed limit. Speed ramps down linearly inside the target's near field.
pub fn simulated_user_noisy_greedy<R: Rng + ?Sized>(
    x: &WorkspacePoint,
    goal: &Goal,
    rng: &mut R,
    noise_level: f64,
    p: &ValueParams,
) -> Velocity {
    let speed = p.speed();
    let (_, k) = best_target(x, goal, p);
    let d = p.distance(x, k);
    let mut v: Vec<f64> = if d > 0.0 {
        let scale = speed * (d / k.delta).min(1.0);
        let diff: Vec<f64> = k.pose.coords().iter().zip(x.coords()).map(|(t, c)| t - c).collect();
        let n = diff.iter().map(|c| c * c).sum::<f64>().sqrt();
        diff.iter().map(|c| c / n * scale).collect()
    } else {
        vec![0.0; x.dim()]
    };
    if noise_level > 0.0 {
        let normal = Normal::new(0.0, noise_level * speed).expect("finite std");
        for c in &mut v {
            *c += normal.sample(rng);
        }
    }
    Velocity(v).clamped(speed)
}

/// Samples an input from the user model's likelihood over the candidate set.
pub fn simulated_user_maxent<R: Rng + ?Sized>(
    x: &WorkspacePoint,
    goal: &Goal,
    cas: &CandidateActionSet,
    rng: &mut R,
    p: &ValueParams,
) -> Velocity {
    let lp = action_log_probs(&user_target_q(x, goal, cas, p));
    let w: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    let idx = WeightedIndex::new(&w).map(|d| d.sample(rng)).unwrap_or(0);
    cas.actions()[idx].clone()
}

/// Entry `t` of the script, repeating the last entry past the end; an empty
/// script yields zeros.
pub fn simulated_user_scripted(script: &[Velocity], t: usize, n: usize) -> Velocity {
    script
        .get(t)
        .or_else(|| script.last())
        .cloned()
        .unwrap_or_else(|| Velocity::zeros(n))
}

/// Velocity script that walks through `waypoints` at `speed`, pausing
/// `pause_ticks` at each one.
pub fn waypoint_script(
    start: &WorkspacePoint,
    waypoints: &[WorkspacePoint],
    speed: f64,
    dt: f64,
    pause_ticks: usize,
) -> Vec<Velocity> {
    let n = start.dim();
    let mut out = Vec::new();
    let mut x = start.clone();
    for w in waypoints {
        loop {
            let diff: Vec<f64> = w.coords().iter().zip(x.coords()).map(|(a, b)| a - b).collect();
            let d = diff.iter().map(|c| c * c).sum::<f64>().sqrt();
            if d < 1e-12 {
                break;
            }
            let step = (speed * dt).min(d);
            let v = Velocity(diff.iter().map(|c| c / d * step / dt).collect());
            x = x.advanced(&v, dt);
            out.push(v);
            if step >= d {
                x = w.clone();
                break;
            }
        }
        out.extend(std::iter::repeat_n(Velocity::zeros(n), pause_ticks));
    }
    out
}

/// Projects a desired velocity onto the best control mode. Returns the device
/// vector and whether a mode switch is needed first.
pub fn modal_input(desired: &Velocity, current_mode: usize, cfg: &ModalConfig) -> UserInput {
    let energy = |mode: &Vec<usize>| mode.iter().map(|&i| desired.0[i] * desired.0[i]).sum::<f64>();
    let mut best = current_mode;
    let mut best_e = energy(&cfg.modes[current_mode]);
    for (i, mode) in cfg.modes.iter().enumerate() {
        let e = energy(mode);
        if e > best_e {
            best = i;
            best_e = e;
        }
    }
    let mut device = vec![0.0; cfg.device_dof];
    for (slot, &axis) in cfg.modes[best].iter().enumerate() {
        device[slot] = desired.0[axis];
    }
    UserInput {
        device,
        mode_switch: best != current_mode,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Metric, Target};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ValueParams {
        ValueParams::new(0.2, 0.02, Metric::unweighted(2))
    }

    fn goal() -> Goal {
        Goal::new("g", vec![Target::new(vec![1.0, 0.0], 1.0, 0.1)])
    }

    #[test]
    fn noiseless_greedy_heads_straight_at_full_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = simulated_user_noisy_greedy(&WorkspacePoint(vec![0.0, 0.0]), &goal(), &mut rng, 0.0, &params());
        assert!((v.0[0] - 0.2).abs() < 1e-12 && v.0[1].abs() < 1e-12);
    }

    #[test]
    fn greedy_at_target_is_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let at = WorkspacePoint(vec![1.0, 0.0]);
        let v = simulated_user_noisy_greedy(&at, &goal(), &mut rng, 0.0, &params());
        assert!(v.is_zero());
        let v = simulated_user_noisy_greedy(&at, &goal(), &mut rng, 0.5, &params());
        assert!(v.norm() <= 0.2 + 1e-12);
    }

    #[test]
    fn greedy_replays_under_fixed_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..100)
                .map(|_| simulated_user_noisy_greedy(&WorkspacePoint(vec![0.0, 0.3]), &goal(), &mut rng, 0.3, &params()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn maxent_matches_exact_frequencies() {
        // two actions with equal soft Q: empirical frequency within 3 sigma of 1/2
        let p = ValueParams::new(0.2, 0.02, Metric::unweighted(1));
        let cas = CandidateActionSet::new(
            vec![Velocity(vec![0.0]), Velocity(vec![0.2]), Velocity(vec![-0.2])],
            0.2,
        )
        .unwrap();
        let g = Goal::new(
            "g",
            vec![Target::new(vec![-0.5], 1.0, 0.1), Target::new(vec![0.5], 1.0, 0.1)],
        );
        let x = WorkspacePoint(vec![0.0]);
        let lp = action_log_probs(&user_target_q(&x, &g, &cas, &p));
        let p_plus = lp[1].exp() / (lp[1].exp() + lp[2].exp());
        assert!((p_plus - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let (mut plus, mut moving) = (0usize, 0usize);
        for _ in 0..draws {
            let v = simulated_user_maxent(&x, &g, &cas, &mut rng, &p);
            if v.0[0] > 0.0 {
                plus += 1;
            }
            if v.0[0] != 0.0 {
                moving += 1;
            }
        }
        let expected_moving = (lp[1].exp() + lp[2].exp()) * draws as f64;
        let sd_moving = (expected_moving * (1.0 - expected_moving / draws as f64)).sqrt();
        assert!((moving as f64 - expected_moving).abs() <= 3.0 * sd_moving);
        let sd = (moving as f64 * 0.25).sqrt();
        assert!((plus as f64 - moving as f64 / 2.0).abs() <= 3.0 * sd);
    }

    #[test]
    fn maxent_concentrates_when_costs_scale() {
        let p = ValueParams::new(0.2, 0.02, Metric::unweighted(2));
        let cas = CandidateActionSet::default_for(2, 0.2);
        let g = Goal::new("g", vec![Target::new(vec![1.0, 0.0], 100.0, 0.1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = simulated_user_maxent(&WorkspacePoint(vec![0.0, 0.0]), &g, &cas, &mut rng, &p);
            assert!((v.0[0] - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn script_replay_rules() {
        let s = vec![Velocity(vec![1.0]), Velocity(vec![2.0])];
        assert_eq!(simulated_user_scripted(&s, 0, 1), Velocity(vec![1.0]));
        assert_eq!(simulated_user_scripted(&s, 5, 1), Velocity(vec![2.0]));
        assert_eq!(simulated_user_scripted(&[], 3, 1), Velocity(vec![0.0]));
        let t = vec![Velocity(vec![3.0])];
        let cat: Vec<Velocity> = s.iter().chain(&t).cloned().collect();
        let replay: Vec<Velocity> = (0..3).map(|i| simulated_user_scripted(&cat, i, 1)).collect();
        assert_eq!(replay, cat);
    }

    #[test]
    fn waypoint_script_reaches_waypoints() {
        let start = WorkspacePoint(vec![0.0, 0.0]);
        let w = vec![WorkspacePoint(vec![0.1, 0.0]), WorkspacePoint(vec![0.1, 0.1])];
        let script = waypoint_script(&start, &w, 0.3, 0.02, 2);
        let mut x = start;
        for v in &script {
            x = x.advanced(v, 0.02);
        }
        assert!((x.0[0] - 0.1).abs() < 1e-12 && (x.0[1] - 0.1).abs() < 1e-12);
        assert!(script.iter().all(|v| v.norm() <= 0.3 + 1e-12));
    }

    #[test]
    fn route_visits_legs_and_waits_for_clearance() {
        let legs = vec![
            Leg { to: WorkspacePoint(vec![0.1, 0.0]), pause_ticks: 2, wait_clearance: None },
            Leg { to: WorkspacePoint(vec![0.1, 0.1]), pause_ticks: 0, wait_clearance: Some(0.05) },
        ];
        let mut st = RouteState::default();
        let mut x = WorkspacePoint(vec![0.0, 0.0]);
        let blocker = WorkspacePoint(vec![0.1, 0.12]);
        let mut held = 0;
        for t in 0..200 {
            let robot = if t < 40 { &blocker } else { &x };
            let v = route_velocity(&legs, &mut st, &x, Some(robot), 0.3, 0.02);
            assert!(v.norm() <= 0.3 + 1e-12);
            if v.is_zero() && t > 20 && t < 40 {
                held += 1;
            }
            x = x.advanced(&v, 0.02);
        }
        assert!(held > 0);
        assert!(st.finished(&legs));
        assert!(x.euclidean(&WorkspacePoint(vec![0.1, 0.1])) < 1e-9);
    }

    #[test]
    fn modal_projection_switches_to_dominant_mode() {
        let cfg = ModalConfig { device_dof: 2, modes: vec![vec![0, 1], vec![2, 3]] };
        let desired = Velocity(vec![0.0, 0.01, 0.2, -0.1]);
        let inp = modal_input(&desired, 0, &cfg);
        assert!(inp.mode_switch);
        assert_eq!(inp.device, vec![0.2, -0.1]);
        let again = modal_input(&desired, 1, &cfg);
        assert!(!again.mode_switch);
    }
}
