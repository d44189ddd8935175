//! Live session protocol.
//!
//! A [`Session`] owns one episode and a single-slot mailbox for operator
//! input. The transport calls [`Session::handle`] for every inbound message
//! and [`Session::session_tick`] on a fixed-rate timer; the latest device input
//! is held between arrivals, while mode switches fire once per press.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AssistError, Result};
use crate::sim::{Episode, GoalProb, Method, Metrics, StateSnapshot, UserInput};
use crate::policies::TeleopMethod;
use crate::teaming::TeamingMethod;
use crate::types::{GoalId, ModalConfig, Scenario, Velocity, WorkspacePoint};

pub const PROTOCOL_SCHEMA: u32 = 1;

/// Ticks per second of the live control loop.
pub const TICK_HZ: u32 = 50;

/// One JSON text frame, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionMessage {
    // client -> server
    Hello {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<u32>,
    },
    Select {
        scenario_id: String,
        method: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal_id: Option<GoalId>,
    },
    Input {
        u: Vec<f64>,
        #[serde(default)]
        mode_switch: bool,
        #[serde(default)]
        commit: bool,
    },
    Reset,

    // server -> client
    Config {
        schema: u32,
        scenario_id: String,
        scenario: Box<Scenario>,
        scenarios: Vec<String>,
        methods: Vec<String>,
        method: String,
        modal: Option<ModalConfig>,
        device_dof: usize,
    },
    Tick(Box<TickMessage>),
    Done {
        metrics: Box<Metrics>,
    },
    Error {
        msg: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickMessage {
    pub t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<WorkspacePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_pos: Option<WorkspacePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_pos: Option<WorkspacePoint>,
    pub belief: Vec<GoalProb>,
    pub conf: f64,
    pub a: Velocity,
    pub mode: usize,
    pub metrics_partial: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
struct Selection {
    scenario_id: String,
    method: Method,
    goal: Option<GoalId>,
}

/// Per-connection state. Sessions share nothing.
#[derive(Debug, Clone)]
pub struct Session {
    catalog: BTreeMap<String, Scenario>,
    seed: u64,
    selection: Selection,
    queued: Option<Selection>,
    episode: Option<Episode>,
    held: Vec<f64>,
    pending_switch: bool,
    pending_commit: bool,
    applied: Vec<UserInput>,
    client: Option<String>,
}

fn methods_for(s: &Scenario) -> Vec<String> {
    if s.is_teaming() {
        TeamingMethod::ALL.iter().map(|m| m.as_str().to_owned()).collect()
    } else {
        TeleopMethod::ALL.iter().map(|m| m.as_str().to_owned()).collect()
    }
}

impl Session {
    /// A session over the given scenarios; starts idle on the first one with
    /// the assistance policy.
    pub fn new(catalog: BTreeMap<String, Scenario>, seed: u64) -> Result<Self> {
        let (id, s) = catalog
            .iter()
            .next()
            .ok_or_else(|| AssistError::InvalidArgument("empty scenario catalog".into()))?;
        let method = Method::parse("policy", s)?;
        let dof = device_dof(s);
        Ok(Self {
            selection: Selection {
                scenario_id: id.clone(),
                method,
                goal: None,
            },
            catalog,
            seed,
            queued: None,
            episode: None,
            held: vec![0.0; dof],
            pending_switch: false,
            pending_commit: false,
            applied: Vec::new(),
            client: None,
        })
    }

    pub fn client_name(&self) -> Option<&str> {
        self.client.as_deref()
    }

    pub fn is_running(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| !e.is_done())
    }

    pub fn episode(&self) -> Option<&Episode> {
        self.episode.as_ref()
    }

    /// Inputs consumed by the current episode, one per tick.
    pub fn input_trace(&self) -> &[UserInput] {
        &self.applied
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Scenario of the current (or next) episode.
    pub fn scenario_id(&self) -> &str {
        &self.selection.scenario_id
    }

    fn scenario(&self) -> &Scenario {
        &self.catalog[&self.selection.scenario_id]
    }

    fn config(&self) -> SessionMessage {
        let s = self.scenario();
        SessionMessage::Config {
            schema: PROTOCOL_SCHEMA,
            scenario_id: self.selection.scenario_id.clone(),
            scenario: Box::new(s.clone()),
            scenarios: self.catalog.keys().cloned().collect(),
            methods: methods_for(s),
            method: self.selection.method.as_str().to_owned(),
            modal: s.modal.clone(),
            device_dof: device_dof(s),
        }
    }

    fn start_episode(&mut self) -> Result<()> {
        let s = self.scenario().clone();
        let goal = match self.selection.method {
            Method::Teleop(_) => Some(
                self.selection
                    .goal
                    .clone()
                    .unwrap_or_else(|| crate::sim::seeded_true_goal(&s, self.seed)),
            ),
            Method::Teaming(_) => None,
        };
        let limit = s.settings.tick_limit;
        self.held = vec![0.0; device_dof(&s)];
        self.episode = Some(Episode::new(s, self.selection.method, goal, self.seed, limit)?);
        self.pending_switch = false;
        self.pending_commit = false;
        self.applied.clear();
        Ok(())
    }

    fn parse_selection(&self, scenario_id: &str, method: &str, goal: Option<GoalId>) -> Result<Selection> {
        let s = self
            .catalog
            .get(scenario_id)
            .ok_or_else(|| AssistError::InvalidArgument(format!("unknown scenario `{scenario_id}`")))?;
        let method = Method::parse(method, s)?;
        if let Some(g) = &goal {
            if s.goal(g).is_none() {
                return Err(AssistError::UnknownGoal(g.0.clone()));
            }
        }
        Ok(Selection {
            scenario_id: scenario_id.to_owned(),
            method,
            goal,
        })
    }

    /// Processes one inbound message; returns immediate replies.
    pub fn handle(&mut self, msg: SessionMessage) -> Vec<SessionMessage> {
        match self.try_handle(msg) {
            Ok(out) => out,
            Err(e) => vec![SessionMessage::Error { msg: e.to_string() }],
        }
    }

    fn try_handle(&mut self, msg: SessionMessage) -> Result<Vec<SessionMessage>> {
        match msg {
            SessionMessage::Hello { name, schema } => {
                if let Some(v) = schema {
                    if v != PROTOCOL_SCHEMA {
                        return Err(AssistError::InvalidArgument(format!(
                            "protocol schema {v} unsupported (server speaks {PROTOCOL_SCHEMA})"
                        )));
                    }
                }
                self.client = Some(name);
                Ok(vec![self.config()])
            }
            SessionMessage::Select {
                scenario_id,
                method,
                goal_id,
            } => {
                let sel = self.parse_selection(&scenario_id, &method, goal_id)?;
                if self.is_running() {
                    self.queued = Some(sel);
                    return Ok(vec![]);
                }
                self.selection = sel;
                self.start_episode()?;
                Ok(vec![self.config()])
            }
            SessionMessage::Reset => {
                if let Some(sel) = self.queued.take() {
                    self.selection = sel;
                }
                self.start_episode()?;
                Ok(vec![self.config()])
            }
            SessionMessage::Input { u, mode_switch, commit } => {
                let dof = device_dof(self.scenario());
                if u.len() != dof {
                    return Err(AssistError::DimensionMismatch {
                        expected: dof,
                        got: u.len(),
                    });
                }
                if u.iter().any(|c| !c.is_finite()) {
                    return Err(AssistError::InvalidArgument("non-finite input".into()));
                }
                self.held = u;
                self.pending_switch |= mode_switch;
                self.pending_commit |= commit;
                Ok(vec![])
            }
            other => Err(AssistError::InvalidArgument(format!(
                "server-only message from client: {}",
                serde_json::to_string(&other).unwrap_or_default()
            ))),
        }
    }

    /// Advances the running episode by one tick using the held input.
    ///
    /// Returns nothing when idle; otherwise a `tick`, followed by `done` when
    /// the episode ends (success, tick limit, or operator commit).
    pub fn session_tick(&mut self) -> Vec<SessionMessage> {
        let Some(ep) = self.episode.as_mut().filter(|e| !e.is_done()) else {
            return vec![];
        };
        let input = UserInput {
            device: self.held.clone(),
            mode_switch: std::mem::take(&mut self.pending_switch),
        };
        let rec = match ep.step(&input) {
            Ok(r) => r.clone(),
            Err(e) => return vec![SessionMessage::Error { msg: e.to_string() }],
        };
        self.applied.push(input);
        if std::mem::take(&mut self.pending_commit) && !ep.is_done() {
            ep.abort();
        }
        let metrics = ep.metrics();
        let (x, user_pos, robot_pos) = match rec.state {
            StateSnapshot::Teleop { x } => (Some(x), None, None),
            StateSnapshot::Teaming { user_pos, robot_pos } => (None, Some(user_pos), Some(robot_pos)),
        };
        let mut out = vec![SessionMessage::Tick(Box::new(TickMessage {
            t: rec.t,
            x,
            user_pos,
            robot_pos,
            belief: rec.belief,
            conf: rec.conf,
            a: rec.a,
            mode: rec.mode,
            metrics_partial: metrics.clone(),
        }))];
        if ep.is_done() {
            out.push(SessionMessage::Done {
                metrics: Box::new(metrics),
            });
        }
        out
    }

    /// Metrics of the current episode so far, e.g. on disconnect.
    pub fn partial_metrics(&self) -> Option<Metrics> {
        self.episode.as_ref().map(|e| e.metrics())
    }
}

fn device_dof(s: &Scenario) -> usize {
    s.modal.as_ref().map(|m| m.device_dof).unwrap_or(s.n)
}
