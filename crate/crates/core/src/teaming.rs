//! Human-robot teaming: user and robot each work through a goal set, and the
//! robot avoids goals restricted against the user's (inferred) current goal.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AssistError, Result};
use crate::policies::{AssistContext, GRADIENT_DEADBAND};
use crate::types::{Belief, Goal, GoalId, Scenario, Velocity, WorkspacePoint};
use crate::value::{best_target, grad_q_target_over_a_at, min_decompose, value_goal, ValueParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeamingMethod {
    Policy,
    Plan,
    Fixed,
}

impl TeamingMethod {
    pub const ALL: [TeamingMethod; 3] = [Self::Policy, Self::Plan, Self::Fixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Policy => "policy",
            Self::Plan => "plan",
            Self::Fixed => "fixed",
        }
    }
}

impl fmt::Display for TeamingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TeamingMethod {
    type Err = AssistError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AssistError::UnknownMethod(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    User,
    Robot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamState {
    pub user_pos: WorkspacePoint,
    pub robot_pos: WorkspacePoint,
    pub user_goals_remaining: BTreeSet<GoalId>,
    pub robot_goals_remaining: BTreeSet<GoalId>,
}

impl TeamState {
    /// Initial state with every scenario goal outstanding for both agents.
    pub fn start(s: &Scenario) -> Result<Self> {
        let setup = s
            .teaming
            .as_ref()
            .ok_or_else(|| AssistError::InvalidArgument("scenario has no teaming setup".into()))?;
        let all: BTreeSet<GoalId> = s.goal_ids().into_iter().collect();
        Ok(Self {
            user_pos: setup.user_start.clone(),
            robot_pos: setup.robot_start.clone(),
            user_goals_remaining: all.clone(),
            robot_goals_remaining: all,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.user_goals_remaining.is_empty() && self.robot_goals_remaining.is_empty()
    }
}

/// Remaining robot goals that may be pursued while the user pursues `g_user`,
/// in scenario order.
pub fn permitted_robot_goals<'s>(g_user: &GoalId, team: &TeamState, s: &'s Scenario) -> Vec<&'s Goal> {
    s.goals
        .iter()
        .filter(|g| team.robot_goals_remaining.contains(&g.id) && s.permitted(g_user, &g.id))
        .collect()
}

/// Robot value when the user pursues `g_user`: min over permitted remaining
/// robot goals of the goal value.
pub fn restricted_value(
    x_robot: &WorkspacePoint,
    g_user: &GoalId,
    team: &TeamState,
    s: &Scenario,
    p: &ValueParams,
) -> Result<f64> {
    let permitted = permitted_robot_goals(g_user, team, s);
    min_decompose(permitted.iter().map(|g| value_goal(x_robot, g, p)))
        .map(|(_, v)| v)
        .ok_or_else(|| AssistError::Deadlock(g_user.0.clone()))
}

/// Best permitted robot goal for `g_user` at `x_robot`, if any.
pub fn best_permitted_goal<'s>(
    x_robot: &WorkspacePoint,
    g_user: &GoalId,
    team: &TeamState,
    s: &'s Scenario,
    p: &ValueParams,
) -> Option<&'s Goal> {
    let permitted = permitted_robot_goals(g_user, team, s);
    min_decompose(permitted.iter().map(|g| value_goal(x_robot, g, p))).map(|(i, _)| permitted[i])
}

fn step_toward_goal(ctx: &AssistContext, x: &WorkspacePoint, g: &Goal) -> Velocity {
    let (_, k) = best_target(x, g, &ctx.robot);
    let grad = grad_q_target_over_a_at(x, k, &ctx.robot);
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm * ctx.robot.dt <= GRADIENT_DEADBAND {
        return Velocity::zeros(x.dim());
    }
    let d = ctx.robot.distance(x, k);
    let speed = (ctx.robot_speed * (d / k.delta).min(1.0)).min(d / ctx.robot.dt);
    Velocity(grad.iter().map(|v| -v / norm * speed).collect())
}

/// Hindsight-optimized robot action over the restriction-set values.
///
/// User goals whose permitted set is empty contribute nothing; if none has a
/// permitted robot goal the robot idles.
pub fn teaming_policy_action(ctx: &AssistContext, b: &Belief, team: &TeamState, s: &Scenario) -> Velocity {
    let x = &team.robot_pos;
    let n = x.dim();
    let mut grad = vec![0.0; n];
    let mut taper = 0.0;
    let mut mass = 0.0;
    for (gid, p) in b.iter() {
        if p == 0.0 {
            continue;
        }
        let Some(g) = best_permitted_goal(x, gid, team, s, &ctx.robot) else {
            continue;
        };
        let (_, k) = best_target(x, g, &ctx.robot);
        for (acc, gi) in grad.iter_mut().zip(grad_q_target_over_a_at(x, k, &ctx.robot)) {
            *acc += p * gi;
        }
        taper += p * (ctx.robot.distance(x, k) / k.delta).min(1.0);
        mass += p;
    }
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if mass == 0.0 || norm * ctx.robot.dt <= GRADIENT_DEADBAND {
        return Velocity::zeros(n);
    }
    let speed = ctx.robot_speed * taper / mass;
    Velocity(grad.iter().map(|v| -v / norm * speed).collect())
}

/// Commitment state of the predict-then-act teaming baseline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanCommitment {
    pub committed: Option<GoalId>,
}

/// Predict-then-act: idle until some user goal reaches `commit_threshold`,
/// then commit to the best permitted robot goal and pursue it to completion
/// without looking at the belief again.
pub fn teaming_plan_action(
    ctx: &AssistContext,
    b: Option<&Belief>,
    team: &TeamState,
    s: &Scenario,
    commit_threshold: f64,
    state: &PlanCommitment,
) -> (Velocity, PlanCommitment) {
    let x = &team.robot_pos;
    let mut next = state.clone();
    if let Some(c) = &next.committed {
        if !team.robot_goals_remaining.contains(c) {
            next.committed = None;
        }
    }
    if next.committed.is_none() {
        if let Some(b) = b {
            let probs = b.probabilities();
            let (i, pmax) = min_decompose(probs.iter().map(|p| -p)).expect("belief nonempty");
            if -pmax >= commit_threshold {
                next.committed =
                    best_permitted_goal(x, &b.ids()[i], team, s, &ctx.robot).map(|g| g.id.clone());
            }
        } else if let Some(g) = s
            .goals
            .iter()
            .filter(|g| team.robot_goals_remaining.contains(&g.id))
            .min_by(|a, b| value_goal(x, a, &ctx.robot).total_cmp(&value_goal(x, b, &ctx.robot)))
        {
            // user finished everything: no restriction left to respect
            next.committed = Some(g.id.clone());
        }
    }
    let v = match &next.committed {
        Some(id) => step_toward_goal(ctx, x, s.goal(id).expect("committed goal exists")),
        None => Velocity::zeros(x.dim()),
    };
    (v, next)
}

/// Seed-determined visiting order over all scenario goals.
pub fn fixed_order(s: &Scenario, seed: u64) -> Vec<GoalId> {
    let mut ids = s.goal_ids();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

/// Non-adaptive baseline: visit the robot goals in a random fixed order.
pub fn teaming_fixed_action(ctx: &AssistContext, team: &TeamState, s: &Scenario, seed: u64) -> Velocity {
    fixed_order(s, seed)
        .into_iter()
        .find(|id| team.robot_goals_remaining.contains(id))
        .map(|id| step_toward_goal(ctx, &team.robot_pos, s.goal(&id).expect("goal exists")))
        .unwrap_or_else(|| Velocity::zeros(team.robot_pos.dim()))
}

/// Removes goals the agent has reached (within `completion_eps` of any of their
/// targets). Returns the new state and the goals removed.
pub fn complete_goal_if_reached(
    team: &TeamState,
    agent: Agent,
    s: &Scenario,
    p: &ValueParams,
) -> (TeamState, Vec<GoalId>) {
    let mut next = team.clone();
    let (pos, remaining) = match agent {
        Agent::User => (&team.user_pos, &mut next.user_goals_remaining),
        Agent::Robot => (&team.robot_pos, &mut next.robot_goals_remaining),
    };
    let reached: Vec<GoalId> = s
        .goals
        .iter()
        .filter(|g| remaining.contains(&g.id))
        .filter(|g| g.targets.iter().any(|k| p.distance(pos, k) <= s.completion_eps))
        .map(|g| g.id.clone())
        .collect();
    for id in &reached {
        remaining.remove(id);
    }
    (next, reached)
}


#[cfg(test)]
mod tests {
    use super::fixtures::four_boxes;
    use super::*;

    fn two_boxes() -> Scenario {
        let mut s = four_boxes();
        s.goals.truncate(2);
        s.restriction.truncate(2);
        s
    }

    #[test]
    fn restriction_excludes_same_goal() {
        let s = two_boxes();
        let team = TeamState::start(&s).unwrap();
        let p = ValueParams::robot(&s);
        let v = restricted_value(&team.robot_pos, &GoalId::from("box1"), &team, &s, &p).unwrap();
        assert_eq!(v, value_goal(&team.robot_pos, &s.goals[1], &p));
    }

    #[test]
    fn single_permitted_goal_value() {
        let mut s = four_boxes();
        s.restriction = vec![
            (GoalId::from("box1"), GoalId::from("box1")),
            (GoalId::from("box1"), GoalId::from("box2")),
            (GoalId::from("box1"), GoalId::from("box4")),
        ];
        let team = TeamState::start(&s).unwrap();
        let p = ValueParams::robot(&s);
        let v = restricted_value(&team.robot_pos, &GoalId::from("box1"), &team, &s, &p).unwrap();
        assert_eq!(v, value_goal(&team.robot_pos, &s.goals[2], &p));
    }

    #[test]
    fn all_restricted_is_deadlock_and_idle() {
        let mut s = two_boxes();
        for a in ["box1", "box2"] {
            for b in ["box1", "box2"] {
                s.restriction.push((GoalId::from(a), GoalId::from(b)));
            }
        }
        let team = TeamState::start(&s).unwrap();
        let ctx = AssistContext::new(&s);
        let p = ValueParams::robot(&s);
        assert!(matches!(
            restricted_value(&team.robot_pos, &GoalId::from("box1"), &team, &s, &p),
            Err(AssistError::Deadlock(_))
        ));
        let b = Belief::uniform(s.goal_ids()).unwrap();
        assert!(teaming_policy_action(&ctx, &b, &team, &s).is_zero());
    }

    #[test]
    fn certain_user_goal_sends_robot_to_the_other() {
        let s = two_boxes();
        let team = TeamState::start(&s).unwrap();
        let ctx = AssistContext::new(&s);
        let b = Belief::from_probabilities(s.goal_ids(), &[1.0, 0.0]).unwrap();
        let a = teaming_policy_action(&ctx, &b, &team, &s);
        assert!((a.norm() - s.robot_speed).abs() < 1e-12);
        let to: Vec<f64> = s.goals[1].targets[0]
            .pose
            .coords()
            .iter()
            .zip(team.robot_pos.coords())
            .map(|(k, x)| k - x)
            .collect();
        let cos = a.dot(&to) / (a.norm() * (to[0] * to[0] + to[1] * to[1]).sqrt());
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncertain_user_between_two_boxes_pushes_robot_elsewhere() {
        let s = four_boxes();
        let mut team = TeamState::start(&s).unwrap();
        team.user_pos = WorkspacePoint(vec![-0.3, -0.1]);
        team.robot_pos = WorkspacePoint(vec![-0.3, 0.4]);
        let ctx = AssistContext::new(&s);
        let b = Belief::from_probabilities(s.goal_ids(), &[0.5, 0.5, 0.0, 0.0]).unwrap();
        let a = teaming_policy_action(&ctx, &b, &team, &s);
        let objective = |x: &WorkspacePoint| {
            b.iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(g, p)| p * restricted_value(x, g, &team, &s, &ctx.robot).unwrap())
                .sum::<f64>()
        };
        let moved = team.robot_pos.advanced(&a, s.dt);
        assert!(objective(&moved) < objective(&team.robot_pos));
    }

    #[test]
    fn plan_commits_only_at_threshold() {
        let s = two_boxes();
        let team = TeamState::start(&s).unwrap();
        let ctx = AssistContext::new(&s);
        let before = Belief::from_probabilities(s.goal_ids(), &[0.5, 0.5]).unwrap();
        let (v, c) = teaming_plan_action(&ctx, Some(&before), &team, &s, 0.6, &PlanCommitment::default());
        assert!(v.is_zero());
        assert_eq!(c.committed, None);

        let b = Belief::from_probabilities(s.goal_ids(), &[0.6, 0.4]).unwrap();
        let (v, c) = teaming_plan_action(&ctx, Some(&b), &team, &s, 0.5, &PlanCommitment::default());
        assert_eq!(c.committed, Some(GoalId::from("box2")));
        assert!(!v.is_zero());

        let b = Belief::from_probabilities(s.goal_ids(), &[0.45, 0.55]).unwrap();
        let (_, c) = teaming_plan_action(&ctx, Some(&b), &team, &s, 0.5, &PlanCommitment::default());
        assert_eq!(c.committed, Some(GoalId::from("box1")));
    }

    #[test]
    fn plan_ignores_belief_after_commitment() {
        let s = two_boxes();
        let team = TeamState::start(&s).unwrap();
        let ctx = AssistContext::new(&s);
        let committed = PlanCommitment {
            committed: Some(GoalId::from("box2")),
        };
        let b1 = Belief::from_probabilities(s.goal_ids(), &[0.1, 0.9]).unwrap();
        let b2 = Belief::from_probabilities(s.goal_ids(), &[0.9, 0.1]).unwrap();
        let (v1, _) = teaming_plan_action(&ctx, Some(&b1), &team, &s, 0.5, &committed);
        let (v2, _) = teaming_plan_action(&ctx, Some(&b2), &team, &s, 0.5, &committed);
        assert_eq!(v1, v2);
    }

    #[test]
    fn fixed_order_is_reproducible() {
        let s = four_boxes();
        assert_eq!(fixed_order(&s, 42), fixed_order(&s, 42));
        let ctx = AssistContext::new(&s);
        let mut team = TeamState::start(&s).unwrap();
        let a1 = teaming_fixed_action(&ctx, &team, &s, 3);
        assert_eq!(a1, teaming_fixed_action(&ctx, &team, &s, 3));
        team.robot_goals_remaining = BTreeSet::from([GoalId::from("box4")]);
        let a = teaming_fixed_action(&ctx, &team, &s, 3);
        assert!(a.coords()[0] > 0.0);
        team.robot_goals_remaining.clear();
        assert!(teaming_fixed_action(&ctx, &team, &s, 3).is_zero());
    }

    #[test]
    fn completion_within_eps() {
        let s = four_boxes();
        let p = ValueParams::robot(&s);
        let mut team = TeamState::start(&s).unwrap();
        team.robot_pos = WorkspacePoint(vec![-0.45 + s.completion_eps / 2.0, 0.0]);
        let (next, done) = complete_goal_if_reached(&team, Agent::Robot, &s, &p);
        assert_eq!(done, vec![GoalId::from("box1")]);
        assert!(!next.robot_goals_remaining.contains(&GoalId::from("box1")));
        assert!(next.user_goals_remaining.contains(&GoalId::from("box1")));

        team.robot_pos = WorkspacePoint(vec![-0.45 + 2.0 * s.completion_eps, 0.0]);
        let (next, done) = complete_goal_if_reached(&team, Agent::Robot, &s, &p);
        assert!(done.is_empty());
        assert_eq!(next, team);
    }

    #[test]
    fn removing_last_user_goal_empties_belief() {
        let s = four_boxes();
        let p = ValueParams::user(&s);
        let mut team = TeamState::start(&s).unwrap();
        team.user_goals_remaining = BTreeSet::from([GoalId::from("box3")]);
        team.user_pos = WorkspacePoint(vec![0.15, 0.0]);
        let (next, _) = complete_goal_if_reached(&team, Agent::User, &s, &p);
        assert!(next.user_goals_remaining.is_empty());
        let b = Belief::uniform(vec![GoalId::from("box3")]).unwrap();
        assert!(b.restricted(&next.user_goals_remaining).is_none());
    }
}
