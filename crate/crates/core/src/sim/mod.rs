//! Deterministic episode engine.
//!
//! Per tick: the user acts, the belief is updated from the pre-tick state and
//! the user input only, the method picks a robot action, the state transitions,
//! and completion is checked. [`Episode`] exposes the tick pipeline so both the
//! batch runner and live sessions drive exactly the same code.

mod users;

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use users::{
    modal_input, route_velocity, simulated_user_maxent, simulated_user_noisy_greedy, simulated_user_scripted,
    waypoint_script, Leg, RouteState, UserInput, UserModel,
};

use crate::error::{AssistError, Result};
use crate::policies::{
    autonomy_action, blend_action, direct_action, hindsight_action,
    ArbitrationProfile, AssistContext, TeleopMethod,
};
use crate::prediction::{belief_update, prob_confidence};
use crate::teaming::{
    complete_goal_if_reached, teaming_fixed_action, teaming_plan_action, teaming_policy_action, Agent,
    PlanCommitment, TeamState, TeamingMethod,
};
use crate::types::{Belief, GoalId, ModalConfig, Scenario, Velocity, WorkspacePoint};
use crate::value::best_target;

pub const TRACE_SCHEMA: u32 = 1;
pub const METRICS_SCHEMA: u32 = 1;

/// Fraction of `user_speed` below which a teaming user counts as idle.
pub const IDLE_SPEED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "method")]
pub enum Method {
    Teleop(TeleopMethod),
    Teaming(TeamingMethod),
}

impl Method {
    /// Parses a method name in the context of the scenario kind.
    pub fn parse(name: &str, scenario: &Scenario) -> Result<Method> {
        if scenario.is_teaming() {
            name.parse().map(Method::Teaming)
        } else {
            name.parse().map(Method::Teleop)
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Teleop(m) => m.as_str(),
            Method::Teaming(m) => m.as_str(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `clamp_to_bounds(x + (u + a) dt)`
pub fn transition(x: &WorkspacePoint, u: &Velocity, a: &Velocity, s: &Scenario) -> WorkspacePoint {
    s.bounds.clamp(crate::value::next_position(x, u, a, s.dt))
}

/// Writes the device vector into the active mode's axes, zeros elsewhere.
pub fn embed_modal(device: &[f64], mode: usize, cfg: &ModalConfig, n: usize) -> Result<Velocity> {
    if device.len() != cfg.device_dof {
        return Err(AssistError::DimensionMismatch {
            expected: cfg.device_dof,
            got: device.len(),
        });
    }
    let axes = cfg
        .modes
        .get(mode)
        .ok_or_else(|| AssistError::InvalidArgument(format!("mode {mode} out of range")))?;
    let mut v = vec![0.0; n];
    for (slot, &axis) in axes.iter().enumerate() {
        v[axis] = device[slot];
    }
    Ok(Velocity(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalProb {
    pub goal_id: GoalId,
    pub p: f64,
}

pub fn belief_snapshot(b: Option<&Belief>) -> Vec<GoalProb> {
    b.map(|b| {
        b.iter()
            .map(|(id, p)| GoalProb {
                goal_id: id.clone(),
                p,
            })
            .collect()
    })
    .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum Event {
    ModeSwitch { mode: usize },
    GoalCompleted { agent: Agent, goal_id: GoalId },
    Committed { goal_id: GoalId },
    Collision { distance: f64 },
    Success,
}

/// Environment state after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSnapshot {
    Teleop { x: WorkspacePoint },
    Teaming {
        user_pos: WorkspacePoint,
        robot_pos: WorkspacePoint,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: u64,
    pub state: StateSnapshot,
    pub u_raw: Vec<f64>,
    pub u_embedded: Velocity,
    pub a: Velocity,
    pub belief: Vec<GoalProb>,
    pub conf: f64,
    pub mode: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub schema: u32,
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
    pub true_goal: Option<GoalId>,
    pub dt: f64,
    pub start: StateSnapshot,
    pub ticks: Vec<TickRecord>,
}

impl EpisodeTrace {
    /// One JSON object per line: a header, then one record per tick.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "schema": self.schema,
            "scenario": self.scenario,
            "method": self.method.as_str(),
            "seed": self.seed,
            "true_goal": self.true_goal,
            "dt": self.dt,
            "start": self.start,
        });
        writeln!(w, "{header}")?;
        for t in &self.ticks {
            writeln!(w, "{}", serde_json::to_string(t).expect("tick serializes"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema: u32,
    pub method: String,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub exec_time: f64,
    pub total_input: f64,
    pub mode_switches: usize,
    pub assist_fraction: f64,
    pub idle_time: Option<f64>,
    pub collision_time_fraction: Option<f64>,
    pub min_distance: Option<f64>,
    pub arbitration: ArbitrationProfile,
    pub blend_distance: f64,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    steps: usize,
    total_input: f64,
    mode_switches: usize,
    assisted: usize,
    idle_ticks: usize,
    collision_ticks: usize,
    min_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Teleop(WorkspacePoint),
    Teaming(TeamState),
}

/// A running episode; advance it one tick at a time with [`Episode::step`].
#[derive(Debug, Clone)]
pub struct Episode {
    scenario: Scenario,
    method: Method,
    ctx: AssistContext,
    seed: u64,
    tick_limit: usize,
    true_goal: Option<GoalId>,
    state: State,
    belief: Option<Belief>,
    mode: usize,
    plan: PlanCommitment,
    tick: u64,
    done: bool,
    success: bool,
    tally: Tally,
    start: StateSnapshot,
    records: Vec<TickRecord>,
}

impl Episode {
    /// `true_goal` is required for shared-control methods and ignored in teaming.
    pub fn new(
        scenario: Scenario,
        method: Method,
        true_goal: Option<GoalId>,
        seed: u64,
        tick_limit: usize,
    ) -> Result<Self> {
        let ctx = AssistContext::new(&scenario);
        let belief = Some(scenario.prior_belief()?);
        let (state, true_goal, min_distance) = match method {
            Method::Teleop(_) => {
                if scenario.is_teaming() {
                    return Err(AssistError::InvalidArgument(
                        "shared-control method on a teaming scenario".into(),
                    ));
                }
                let g = true_goal.ok_or_else(|| {
                    AssistError::InvalidArgument("shared-control episode needs a true goal".into())
                })?;
                if scenario.goal(&g).is_none() {
                    return Err(AssistError::UnknownGoal(g.0));
                }
                (State::Teleop(scenario.start.clone()), Some(g), f64::INFINITY)
            }
            Method::Teaming(_) => {
                let team = TeamState::start(&scenario)?;
                let d = team.user_pos.euclidean(&team.robot_pos);
                (State::Teaming(team), None, d)
            }
        };
        let start = snapshot(&state);
        Ok(Self {
            ctx,
            seed,
            tick_limit,
            true_goal,
            state,
            belief,
            mode: 0,
            plan: PlanCommitment::default(),
            tick: 0,
            done: false,
            success: false,
            tally: Tally {
                min_distance,
                ..Tally::default()
            },
            start,
            records: Vec::new(),
            scenario,
            method,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn context(&self) -> &AssistContext {
        &self.ctx
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn belief(&self) -> Option<&Belief> {
        self.belief.as_ref()
    }

    pub fn true_goal(&self) -> Option<&GoalId> {
        self.true_goal.as_ref()
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn plan_commitment(&self) -> &PlanCommitment {
        &self.plan
    }

    pub fn team(&self) -> Option<&TeamState> {
        match &self.state {
            State::Teaming(t) => Some(t),
            State::Teleop(_) => None,
        }
    }

    /// Position the user is controlling (end-effector, or user hand in teaming).
    pub fn user_position(&self) -> &WorkspacePoint {
        match &self.state {
            State::Teleop(x) => x,
            State::Teaming(t) => &t.user_pos,
        }
    }

    /// The goal the user is currently working on: the declared goal in shared
    /// control, the first outstanding user goal in teaming.
    pub fn user_goal(&self) -> Option<GoalId> {
        match &self.state {
            State::Teleop(_) => self.true_goal.clone(),
            State::Teaming(t) => self
                .scenario
                .goals
                .iter()
                .find(|g| t.user_goals_remaining.contains(&g.id))
                .map(|g| g.id.clone()),
        }
    }

    /// Device dimension expected in [`UserInput::device`].
    pub fn device_dof(&self) -> usize {
        self.scenario
            .modal
            .as_ref()
            .map(|m| m.device_dof)
            .unwrap_or(self.scenario.n)
    }

    pub fn metrics(&self) -> Metrics {
        let t = &self.tally;
        let steps = t.steps;
        let frac = |k: usize| if steps == 0 { 0.0 } else { k as f64 / steps as f64 };
        let teaming = matches!(self.method, Method::Teaming(_));
        let st = &self.scenario.settings;
        Metrics {
            schema: METRICS_SCHEMA,
            method: self.method.as_str().to_owned(),
            seed: self.seed,
            success: self.success,
            steps,
            exec_time: steps as f64 * self.scenario.dt,
            total_input: t.total_input,
            mode_switches: t.mode_switches,
            assist_fraction: frac(t.assisted),
            idle_time: teaming.then_some(t.idle_ticks as f64 * self.scenario.dt),
            collision_time_fraction: teaming.then(|| frac(t.collision_ticks)),
            min_distance: teaming.then_some(t.min_distance),
            arbitration: st.arbitration,
            blend_distance: st.blend_distance,
        }
    }

    pub fn trace(&self) -> EpisodeTrace {
        EpisodeTrace {
            schema: TRACE_SCHEMA,
            scenario: self.scenario.name.clone(),
            method: self.method,
            seed: self.seed,
            true_goal: self.true_goal.clone(),
            dt: self.scenario.dt,
            start: self.start.clone(),
            ticks: self.records.clone(),
        }
    }

    /// Marks the episode finished without success (operator abort).
    pub fn abort(&mut self) {
        self.done = true;
    }

    /// Advances one tick with the given operator input.
    pub fn step(&mut self, input: &UserInput) -> Result<&TickRecord> {
        if self.done {
            return Err(AssistError::InvalidArgument("episode already finished".into()));
        }
        let s = &self.scenario;
        let mut events = Vec::new();
        if input.mode_switch {
            if let Some(cfg) = &s.modal {
                self.mode = (self.mode + 1) % cfg.modes.len();
                self.tally.mode_switches += 1;
                events.push(Event::ModeSwitch { mode: self.mode });
            }
        }
        let u = match &s.modal {
            Some(cfg) => embed_modal(&input.device, self.mode, cfg, s.n)?,
            None => {
                if input.device.len() != s.n {
                    return Err(AssistError::DimensionMismatch {
                        expected: s.n,
                        got: input.device.len(),
                    });
                }
                Velocity(input.device.clone())
            }
        };
        let u = direct_action(&u, s.user_speed);
        let raw_norm = input.device.iter().map(|c| c * c).sum::<f64>().sqrt();

        let (a, conf) = match self.method {
            Method::Teleop(m) => self.teleop_tick(m, &u, &mut events)?,
            Method::Teaming(m) => self.teaming_tick(m, &u, &mut events)?,
        };

        self.tally.steps += 1;
        self.tally.total_input += raw_norm * self.scenario.dt;
        if !a.is_zero() {
            self.tally.assisted += 1;
        }
        self.tick += 1;
        if self.success {
            events.push(Event::Success);
            self.done = true;
        } else if self.tick as usize >= self.tick_limit {
            self.done = true;
        }
        self.records.push(TickRecord {
            t: self.tick,
            state: snapshot(&self.state),
            u_raw: input.device.clone(),
            u_embedded: u,
            a,
            belief: belief_snapshot(self.belief.as_ref()),
            conf,
            mode: self.mode,
            events,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    fn teleop_tick(&mut self, m: TeleopMethod, u: &Velocity, _events: &mut [Event]) -> Result<(Velocity, f64)> {
        let s = &self.scenario;
        let State::Teleop(x) = &self.state else {
            unreachable!("teleop method on teaming state")
        };
        let b = belief_update(
            self.belief.as_ref().expect("teleop belief"),
            x,
            u,
            s,
            &self.ctx.cas,
            &self.ctx.user,
        )?;
        let true_goal = s.goal(self.true_goal.as_ref().expect("teleop goal")).expect("validated");
        let zero = Velocity::zeros(s.n);
        let (applied_u, a, conf) = match m {
            TeleopMethod::Direct => (u.clone(), zero, prob_confidence(&b)),
            TeleopMethod::Policy => (
                u.clone(),
                hindsight_action(&self.ctx, &b, x, u, s),
                prob_confidence(&b),
            ),
            TeleopMethod::Blend => {
                let (out, conf) = blend_action(
                    &self.ctx,
                    x,
                    u,
                    &b,
                    s,
                    &s.settings.arbitration,
                    s.settings.blend_distance,
                    s.settings.blend_confidence,
                );
                (u.clone(), out.minus(u), conf)
            }
            TeleopMethod::Autonomy => (
                zero,
                autonomy_action(&self.ctx, x, true_goal, s),
                prob_confidence(&b),
            ),
        };
        let xn = transition(x, &applied_u, &a, s);
        let (_, k) = best_target(&xn, true_goal, &self.ctx.robot);
        self.success = self.ctx.robot.distance(&xn, k) <= s.completion_eps;
        self.state = State::Teleop(xn);
        self.belief = Some(b);
        Ok((a, conf))
    }

    fn teaming_tick(&mut self, m: TeamingMethod, u: &Velocity, events: &mut Vec<Event>) -> Result<(Velocity, f64)> {
        let s = &self.scenario;
        let State::Teaming(team) = &self.state else {
            unreachable!("teaming method on teleop state")
        };
        let b = match &self.belief {
            Some(b) => Some(belief_update(b, &team.user_pos, u, s, &self.ctx.cas, &self.ctx.user)?),
            None => None,
        };
        let a = match m {
            TeamingMethod::Policy => match &b {
                Some(b) => teaming_policy_action(&self.ctx, b, team, s),
                // user done: no restriction remains, pursue the nearest goal
                None => teaming_plan_action(&self.ctx, None, team, s, 1.0, &PlanCommitment::default()).0,
            },
            TeamingMethod::Plan => {
                let before = self.plan.committed.clone();
                let (v, next) = teaming_plan_action(
                    &self.ctx,
                    b.as_ref(),
                    team,
                    s,
                    s.settings.commit_threshold,
                    &self.plan,
                );
                if next.committed.is_some() && next.committed != before {
                    events.push(Event::Committed {
                        goal_id: next.committed.clone().expect("checked"),
                    });
                }
                self.plan = next;
                v
            }
            TeamingMethod::Fixed => teaming_fixed_action(&self.ctx, team, s, self.seed),
        };
        let zero = Velocity::zeros(s.n);
        let user_mid = transition(&team.user_pos, u, &zero, s);
        let robot_new = transition(&team.robot_pos, &zero, &a, s);
        let d = user_mid
            .euclidean(&team.robot_pos)
            .min(user_mid.euclidean(&robot_new));
        self.tally.min_distance = self.tally.min_distance.min(d);
        if d < s.collision_threshold {
            self.tally.collision_ticks += 1;
            events.push(Event::Collision { distance: d });
        }
        if u.norm() < IDLE_SPEED_FRACTION * s.user_speed && !team.robot_goals_remaining.is_empty() {
            self.tally.idle_ticks += 1;
        }
        let moved = TeamState {
            user_pos: user_mid,
            robot_pos: robot_new,
            ..team.clone()
        };
        let (moved, user_done) = complete_goal_if_reached(&moved, Agent::User, s, &self.ctx.user);
        let (moved, robot_done) = complete_goal_if_reached(&moved, Agent::Robot, s, &self.ctx.robot);
        for (agent, done) in [(Agent::User, user_done), (Agent::Robot, robot_done)] {
            for goal_id in done {
                events.push(Event::GoalCompleted { agent, goal_id });
            }
        }
        let conf = b.as_ref().map(prob_confidence).unwrap_or(0.0);
        self.belief = b.and_then(|b| b.restricted(&moved.user_goals_remaining));
        self.success = moved.is_complete();
        self.state = State::Teaming(moved);
        Ok((a, conf))
    }
}

fn snapshot(state: &State) -> StateSnapshot {
    match state {
        State::Teleop(x) => StateSnapshot::Teleop { x: x.clone() },
        State::Teaming(t) => StateSnapshot::Teaming {
            user_pos: t.user_pos.clone(),
            robot_pos: t.robot_pos.clone(),
        },
    }
}

/// Produces per-tick device input from a [`UserModel`].
#[derive(Debug, Clone)]
pub struct UserDriver {
    model: UserModel,
    rng: ChaCha8Rng,
    t: usize,
    route: RouteState,
}

impl UserDriver {
    pub fn new(model: UserModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            model,
            rng,
            t: 0,
            route: RouteState::default(),
        }
    }

    pub fn next_input(&mut self, ep: &Episode) -> UserInput {
        let s = ep.scenario();
        let t = self.t;
        self.t += 1;
        let toward = |ep: &Episode| ep.user_goal().and_then(|id| s.goal(&id).cloned());
        let desired = match &self.model {
            UserModel::Recorded { inputs } => {
                return inputs
                    .get(t)
                    .or_else(|| inputs.last())
                    .cloned()
                    .unwrap_or_else(|| UserInput::zeros(ep.device_dof()));
            }
            UserModel::Idle => Velocity::zeros(s.n),
            UserModel::NoisyGreedy { noise_level } => match toward(ep) {
                Some(g) => simulated_user_noisy_greedy(
                    ep.user_position(),
                    &g,
                    &mut self.rng,
                    *noise_level,
                    &ep.context().user,
                ),
                None => Velocity::zeros(s.n),
            },
            UserModel::MaxEnt => match toward(ep) {
                Some(g) => simulated_user_maxent(
                    ep.user_position(),
                    &g,
                    &ep.context().cas,
                    &mut self.rng,
                    &ep.context().user,
                ),
                None => Velocity::zeros(s.n),
            },
            UserModel::Scripted { script } => simulated_user_scripted(script, t, s.n),
            UserModel::Route { legs } => route_velocity(
                legs,
                &mut self.route,
                ep.user_position(),
                ep.team()
                    .filter(|t| !t.robot_goals_remaining.is_empty())
                    .map(|t| &t.robot_pos),
                s.user_speed,
                s.dt,
            ),
        };
        match &s.modal {
            Some(cfg) => modal_input(&desired, ep.mode(), cfg),
            None => UserInput {
                device: desired.0,
                mode_switch: false,
            },
        }
    }
}

/// Seed-determined true goal for a shared-control episode.
pub fn seeded_true_goal(s: &Scenario, seed: u64) -> GoalId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    s.goals[rng.random_range(0..s.goals.len())].id.clone()
}

/// Runs one episode to success or `tick_limit`. The true goal (shared control)
/// is drawn from `seed` unless given.
pub fn run_episode_with_goal(
    scenario: &Scenario,
    method: Method,
    user_model: &UserModel,
    seed: u64,
    tick_limit: usize,
    true_goal: Option<GoalId>,
) -> Result<(EpisodeTrace, Metrics)> {
    let goal = match method {
        Method::Teleop(_) => Some(true_goal.unwrap_or_else(|| seeded_true_goal(scenario, seed))),
        Method::Teaming(_) => None,
    };
    let mut ep = Episode::new(scenario.clone(), method, goal, seed, tick_limit)?;
    let mut driver = UserDriver::new(user_model.clone(), seed);
    while !ep.is_done() {
        let input = driver.next_input(&ep);
        ep.step(&input)?;
    }
    Ok((ep.trace(), ep.metrics()))
}

pub fn run_episode(
    scenario: &Scenario,
    method: Method,
    user_model: &UserModel,
    seed: u64,
    tick_limit: usize,
) -> Result<(EpisodeTrace, Metrics)> {
    run_episode_with_goal(scenario, method, user_model, seed, tick_limit, None)
}
