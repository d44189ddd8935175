//! Shared-control action selection: hindsight-optimized assistance and the
//! blend, direct and full-autonomy baselines.

use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AssistError;
use crate::prediction::{
    action_log_probs, distance_confidence, map_goal, prob_confidence, user_target_q,
    CandidateActionSet,
};
use crate::types::{Belief, Goal, Scenario, Velocity, WorkspacePoint};
use crate::value::{best_target, grad_q_goal_over_a, q_goal, ValueParams};

/// Gradients whose per-step displacement is below this are treated as zero.
pub const GRADIENT_DEADBAND: f64 = 1e-6;

/// Piecewise-linear arbitration `alpha(conf)` for the blend baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationProfile {
    pub conf_floor: f64,
    pub conf_ceil: f64,
    pub alpha_max: f64,
}

impl Default for ArbitrationProfile {
    fn default() -> Self {
        Self {
            conf_floor: 0.15,
            conf_ceil: 0.75,
            alpha_max: 1.0,
        }
    }
}

impl ArbitrationProfile {
    pub fn alpha(&self, conf: f64) -> f64 {
        if conf <= self.conf_floor {
            0.0
        } else if conf >= self.conf_ceil {
            self.alpha_max
        } else {
            self.alpha_max * (conf - self.conf_floor) / (self.conf_ceil - self.conf_floor)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceKind {
    /// `max(0, 1 - d/D)` to the most probable goal.
    Distance,
    /// `max_g p(g) - min_g p(g)`.
    Probability,
}

/// How the user's future input is estimated when computing goal action-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserEstimate {
    /// The user stops and the robot completes the task alone.
    RobotTakesOver,
    /// The most likely input under each goal's user model.
    DeterministicUser,
    /// A sample from each goal's user model, drawn from a stream seeded by
    /// `seed` and the current state so evaluation stays a pure function.
    StochasticUser { seed: u64 },
}

/// Shared-control method names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopMethod {
    Direct,
    Blend,
    Policy,
    Autonomy,
}

impl TeleopMethod {
    pub const ALL: [TeleopMethod; 4] = [Self::Direct, Self::Blend, Self::Policy, Self::Autonomy];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Blend => "blend",
            Self::Policy => "policy",
            Self::Autonomy => "autonomy",
        }
    }
}

impl fmt::Display for TeleopMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeleopMethod {
    type Err = AssistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AssistError::UnknownMethod(s.to_owned()))
    }
}

/// Everything the policies need besides the scenario and the belief.
#[derive(Debug, Clone)]
pub struct AssistContext {
    pub robot: ValueParams,
    pub user: ValueParams,
    pub cas: CandidateActionSet,
    pub estimate: UserEstimate,
    pub user_speed: f64,
    pub robot_speed: f64,
}

impl AssistContext {
    pub fn new(s: &Scenario) -> Self {
        Self {
            robot: ValueParams::robot(s),
            user: ValueParams::user(s),
            cas: CandidateActionSet::for_scenario(s),
            estimate: s.settings.user_estimate,
            user_speed: s.user_speed,
            robot_speed: s.robot_speed,
        }
    }

    /// Estimated user input for goal `g` at `x` (zero under robot-takes-over).
    pub fn user_estimate(&self, x: &WorkspacePoint, g: &Goal) -> Velocity {
        match self.estimate {
            UserEstimate::RobotTakesOver => Velocity::zeros(x.dim()),
            UserEstimate::DeterministicUser => {
                let lp = action_log_probs(&user_target_q(x, g, &self.cas, &self.user));
                let (i, _) = crate::value::min_decompose(lp.iter().map(|l| -l)).expect("nonempty");
                self.cas.actions()[i].clone()
            }
            UserEstimate::StochasticUser { seed } => {
                let lp = action_log_probs(&user_target_q(x, g, &self.cas, &self.user));
                let w: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
                for c in x.coords() {
                    h = h.rotate_left(17) ^ c.to_bits();
                }
                let mut rng = ChaCha8Rng::seed_from_u64(h);
                let i = WeightedIndex::new(&w).map(|d| d.sample(&mut rng)).unwrap_or(0);
                self.cas.actions()[i].clone()
            }
        }
    }
}

/// Belief-weighted expectation of per-goal quantities (values in belief order).
pub fn hindsight_value(b: &Belief, per_goal: &[f64]) -> f64 {
    assert_eq!(b.len(), per_goal.len(), "one value per goal");
    b.iter().zip(per_goal).map(|((_, p), v)| if p > 0.0 { p * v } else { 0.0 }).sum()
}

fn goals_of<'s>(b: &Belief, s: &'s Scenario) -> Vec<&'s Goal> {
    b.ids()
        .iter()
        .map(|id| s.goal(id).unwrap_or_else(|| panic!("belief goal `{id}` not in scenario")))
        .collect()
}

/// Expected goal action-value under the belief.
pub fn hindsight_q(
    ctx: &AssistContext,
    b: &Belief,
    x: &WorkspacePoint,
    _u: &Velocity,
    a: &Velocity,
    s: &Scenario,
) -> f64 {
    let q: Vec<f64> = goals_of(b, s)
        .into_iter()
        .map(|g| q_goal(x, &ctx.user_estimate(x, g), a, g, &ctx.robot))
        .collect();
    hindsight_value(b, &q)
}

/// Gradient of [`hindsight_q`] with respect to the robot action at `a = 0`.
pub fn hindsight_gradient(ctx: &AssistContext, b: &Belief, x: &WorkspacePoint, s: &Scenario) -> Vec<f64> {
    let mut grad = vec![0.0; x.dim()];
    for (g, (_, p)) in goals_of(b, s).into_iter().zip(b.iter()) {
        if p == 0.0 {
            continue;
        }
        let gg = grad_q_goal_over_a(x, &ctx.user_estimate(x, g), g, &ctx.robot);
        for (acc, gi) in grad.iter_mut().zip(gg) {
            *acc += p * gi;
        }
    }
    grad
}

/// First-order assistance: step against the expected action-value gradient.
///
/// The speed is `robot_speed` scaled by the belief-weighted near-field taper
/// `sum_g p(g) min(1, d_g / delta_g)`, and capped so a single tick never
/// carries the end-effector past the best target of a goal holding at least
/// half the belief.
pub fn hindsight_action(
    ctx: &AssistContext,
    b: &Belief,
    x: &WorkspacePoint,
    _u: &Velocity,
    s: &Scenario,
) -> Velocity {
    let grad = hindsight_gradient(ctx, b, x, s);
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm * ctx.robot.dt <= GRADIENT_DEADBAND {
        return Velocity::zeros(x.dim());
    }
    let goals = goals_of(b, s);
    let mut taper = 0.0;
    let mut cap = f64::INFINITY;
    for (g, (_, p)) in goals.iter().zip(b.iter()) {
        if p == 0.0 {
            continue;
        }
        let (_, k) = best_target(x, g, &ctx.robot);
        let d = ctx.robot.distance(x, k);
        taper += p * (d / k.delta).min(1.0);
        if p >= 0.5 {
            cap = cap.min(d / ctx.robot.dt);
        }
    }
    let speed = (ctx.robot_speed * taper).min(cap);
    Velocity(grad.iter().map(|g| -g / norm * speed).collect())
}

/// Full autonomy toward a known goal.
pub fn autonomy_action(ctx: &AssistContext, x: &WorkspacePoint, g: &Goal, s: &Scenario) -> Velocity {
    let b = Belief::degenerate(vec![g.id.clone()], &g.id).expect("single goal");
    hindsight_action(ctx, &b, x, &Velocity::zeros(x.dim()), s)
}

/// Predict-then-act blend `alpha(conf) a + (1 - alpha(conf)) u` toward the MAP goal.
#[allow(clippy::too_many_arguments)]
pub fn blend_action(
    ctx: &AssistContext,
    x: &WorkspacePoint,
    u: &Velocity,
    b: &Belief,
    s: &Scenario,
    arb: &ArbitrationProfile,
    max_distance: f64,
    kind: ConfidenceKind,
) -> (Velocity, f64) {
    let gid = map_goal(b);
    let g = s.goal(gid).expect("belief goal in scenario");
    let conf = match kind {
        ConfidenceKind::Distance => distance_confidence(x, g, max_distance, &ctx.robot),
        ConfidenceKind::Probability => prob_confidence(b),
    };
    let alpha = arb.alpha(conf);
    if alpha == 0.0 {
        return (u.clone(), conf);
    }
    let a = autonomy_action(ctx, x, g, s);
    let out = a.scaled(alpha).plus(&u.scaled(1.0 - alpha));
    (out.clamped(ctx.user_speed.max(ctx.robot_speed)), conf)
}

pub fn direct_action(u: &Velocity, user_speed: f64) -> Velocity {
    u.clamped(user_speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::fixtures::two_goal_2d;
    use crate::types::{GoalId, Target};
    use proptest::prelude::*;

    fn belief(s: &Scenario, p: &[f64]) -> Belief {
        Belief::from_probabilities(s.goal_ids(), p).unwrap()
    }

    /// Goals mirrored about x = 0 at height 0.5; midpoint is (0, 0.5).
    fn mirrored() -> Scenario {
        two_goal_2d()
    }

    #[test]
    fn arbitration_profile_shape() {
        let arb = ArbitrationProfile::default();
        assert_eq!(arb.alpha(0.0), 0.0);
        assert_eq!(arb.alpha(0.15), 0.0);
        assert!((arb.alpha(0.45) - 0.5).abs() < 1e-12);
        assert_eq!(arb.alpha(0.75), 1.0);
        assert_eq!(arb.alpha(0.99), 1.0);
    }

    #[test]
    fn expectation_of_goal_values() {
        let s = mirrored();
        assert!((hindsight_value(&belief(&s, &[0.5, 0.5]), &[2.0, 4.0]) - 3.0).abs() < 1e-12);
        let ctx = AssistContext::new(&s);
        let x = WorkspacePoint(vec![0.1, 0.2]);
        let z = Velocity::zeros(2);
        let a = Velocity(vec![0.05, 0.1]);
        let q = hindsight_q(&ctx, &belief(&s, &[1.0, 0.0]), &x, &z, &a, &s);
        assert_eq!(q, q_goal(&x, &z, &a, &s.goals[0], &ctx.robot));
    }

    #[test]
    fn degenerate_belief_matches_autonomy() {
        let s = mirrored();
        let ctx = AssistContext::new(&s);
        let x = s.start.clone();
        let a = hindsight_action(&ctx, &belief(&s, &[1.0, 0.0]), &x, &Velocity::zeros(2), &s);
        let auto = autonomy_action(&ctx, &x, &s.goals[0], &s);
        assert_eq!(a, auto);
        assert!((a.norm() - s.robot_speed).abs() < 1e-12);
        // points at the left target
        let dir = [-0.5, 0.5];
        let cos = a.dot(&dir) / (a.norm() * (0.5f64).sqrt());
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn autonomy_at_target_is_zero() {
        let s = mirrored();
        let ctx = AssistContext::new(&s);
        let x = s.goals[1].targets[0].pose.clone();
        assert!(autonomy_action(&ctx, &x, &s.goals[1], &s).is_zero());
    }

    #[test]
    fn midpoint_gives_no_lateral_assistance() {
        let s = mirrored();
        let ctx = AssistContext::new(&s);
        let x = WorkspacePoint(vec![0.0, 0.5]);
        let a = hindsight_action(&ctx, &belief(&s, &[0.5, 0.5]), &x, &Velocity::zeros(2), &s);
        assert!(a.coords()[0].abs() <= 1e-9);
    }

    #[test]
    fn behind_both_goals_moves_forward() {
        let s = mirrored();
        let ctx = AssistContext::new(&s);
        let b = belief(&s, &[0.5, 0.5]);
        assert!(prob_confidence(&b) < 1e-15);
        let x = WorkspacePoint(vec![0.0, 0.0]);
        let a = hindsight_action(&ctx, &b, &x, &Velocity::zeros(2), &s);
        for g in &s.goals {
            let to: Vec<f64> = g.targets[0].pose.coords().iter().zip(x.coords()).map(|(k, x)| k - x).collect();
            assert!(a.dot(&to) > 0.0);
        }
    }

    #[test]
    fn blend_degenerates_to_inputs() {
        let s = mirrored();
        let ctx = AssistContext::new(&s);
        let b = belief(&s, &[0.8, 0.2]);
        let x = WorkspacePoint(vec![0.0, 0.0]);
        let u = Velocity(vec![0.1, -0.05]);
        let never = ArbitrationProfile { conf_floor: 0.99, conf_ceil: 1.0, alpha_max: 1.0 };
        let (out, _) = blend_action(&ctx, &x, &u, &b, &s, &never, 0.4, ConfidenceKind::Distance);
        assert_eq!(out, u);
        let always = ArbitrationProfile { conf_floor: 0.0, conf_ceil: 1e-9, alpha_max: 1.0 };
        let near = WorkspacePoint(vec![-0.4, 0.45]);
        let (out, conf) = blend_action(&ctx, &near, &u, &b, &s, &always, 0.4, ConfidenceKind::Distance);
        assert!(conf > 0.0);
        assert_eq!(out, autonomy_action(&ctx, &near, &s.goals[0], &s));
    }

    #[test]
    fn blend_midway_uses_ramp() {
        let s = mirrored();
        let ctx = AssistContext::new(&s);
        let b = belief(&s, &[0.8, 0.2]);
        let arb = ArbitrationProfile::default();
        let x = WorkspacePoint(vec![-0.3, 0.3]);
        let u = Velocity::zeros(2);
        let (out, conf) = blend_action(&ctx, &x, &u, &b, &s, &arb, 0.6, ConfidenceKind::Distance);
        // independent evaluation of the ramp
        let d = (0.2f64 * 0.2 + 0.2 * 0.2).sqrt();
        let expected_conf = 1.0 - d / 0.6;
        assert!((conf - expected_conf).abs() < 1e-12);
        let alpha = ((expected_conf - 0.15) / 0.6).clamp(0.0, 1.0);
        let auto = autonomy_action(&ctx, &x, &s.goals[0], &s);
        for i in 0..2 {
            assert!((out.coords()[i] - alpha * auto.coords()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_clamps() {
        assert_eq!(direct_action(&Velocity(vec![0.1, 0.0]), 0.2), Velocity(vec![0.1, 0.0]));
        let v = direct_action(&Velocity(vec![0.3, 0.4]), 0.2);
        assert!((v.norm() - 0.2).abs() < 1e-12);
        assert!(direct_action(&Velocity::zeros(2), 0.2).is_zero());
    }

    #[test]
    fn method_names_round_trip() {
        for m in TeleopMethod::ALL {
            assert_eq!(m.as_str().parse::<TeleopMethod>().unwrap(), m);
        }
        assert!("teleport".parse::<TeleopMethod>().is_err());
    }

    #[test]
    fn alternative_user_estimates_produce_bounded_actions() {
        let mut s = mirrored();
        for est in [UserEstimate::DeterministicUser, UserEstimate::StochasticUser { seed: 7 }] {
            s.settings.user_estimate = est;
            let ctx = AssistContext::new(&s);
            let b = belief(&s, &[0.7, 0.3]);
            let x = WorkspacePoint(vec![0.1, 0.0]);
            let a = hindsight_action(&ctx, &b, &x, &Velocity::zeros(2), &s);
            assert!(a.norm() <= s.robot_speed + 1e-12);
            assert_eq!(a, hindsight_action(&ctx, &b, &x, &Velocity::zeros(2), &s));
        }
    }

    fn three_goal() -> Scenario {
        let mut s = two_goal_2d();
        s.goals.push(Goal::new("up", vec![Target::new(vec![0.0, 0.8], 1.0, 0.1)]));
        s
    }

    proptest! {
        #[test]
        fn action_never_exceeds_robot_speed(
            x in prop::collection::vec(-1.0f64..1.0, 2),
            w in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let s = three_goal();
            let ctx = AssistContext::new(&s);
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let b = Belief::from_probabilities(s.goal_ids(), &w).unwrap();
            let a = hindsight_action(&ctx, &b, &WorkspacePoint(x), &Velocity::zeros(2), &s);
            prop_assert!(a.norm() <= s.robot_speed * (1.0 + 1e-12));
        }

        #[test]
        fn relabeling_goals_is_equivariant(
            x in prop::collection::vec(-1.0f64..1.0, 2),
            w in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let s = three_goal();
            let ctx = AssistContext::new(&s);
            let xp = WorkspacePoint(x);
            let b = Belief::from_probabilities(s.goal_ids(), &w).unwrap();
            let a = hindsight_action(&ctx, &b, &xp, &Velocity::zeros(2), &s);
            // same goals, same probabilities, permuted order and renamed ids
            let mut t = s.clone();
            t.goals = vec![s.goals[2].clone(), s.goals[0].clone(), s.goals[1].clone()];
            for (i, g) in t.goals.iter_mut().enumerate() {
                g.id = GoalId(format!("g{i}"));
            }
            let bp = Belief::from_probabilities(t.goal_ids(), &[w[2], w[0], w[1]]).unwrap();
            let ap = hindsight_action(&ctx, &bp, &xp, &Velocity::zeros(2), &t);
            for i in 0..2 {
                prop_assert!((a.coords()[i] - ap.coords()[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn midpoint_assistance_grows_with_belief(p1 in 0.5f64..1.0, dp in 0.0f64..0.5) {
            let s = mirrored();
            let ctx = AssistContext::new(&s);
            let x = WorkspacePoint(vec![0.0, 0.5]);
            let toward = |p: f64| {
                let p = p.min(1.0);
                let b = belief(&s, &[p, 1.0 - p]);
                let a = hindsight_action(&ctx, &b, &x, &Velocity::zeros(2), &s);
                -a.coords()[0]
            };
            prop_assert!(toward(p1 + dp) >= toward(p1) - 1e-12);
        }
    }
}
