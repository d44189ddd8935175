//! Goal inference from user inputs.
//!
//! The user is modeled as noisily optimal: the probability of an input is
//! `exp(V(x) - Q(x, u))`, with goal-level soft values obtained as a softmin
//! over per-target values. Likelihoods are normalized over a finite
//! [`CandidateActionSet`], and the belief is updated from user inputs only.

use serde::{Deserialize, Serialize};

use crate::error::{AssistError, Result};
use crate::types::{Belief, Goal, GoalId, Scenario, Velocity, WorkspacePoint};
use crate::value::{min_decompose, step_cost, value_target, ValueParams};

/// Number of full-speed directions in the default candidate set.
pub const DEFAULT_DIRECTIONS: usize = 16;

/// `-log sum_i exp(-v_i)`, shifted by the minimum for stability.
pub fn softmin(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m - values.iter().map(|v| (-(v - m)).exp()).sum::<f64>().ln()
}

/// Finite set of user velocities used to normalize the action likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateActionSet {
    actions: Vec<Velocity>,
}

impl CandidateActionSet {
    pub fn new(actions: Vec<Velocity>, user_speed: f64) -> Result<Self> {
        if actions.len() < 2 {
            return Err(AssistError::InvalidArgument(
                "candidate set needs at least 2 actions".into(),
            ));
        }
        if !actions.iter().any(|a| a.is_zero()) {
            return Err(AssistError::InvalidArgument(
                "candidate set must contain the zero action".into(),
            ));
        }
        let n = actions[0].dim();
        for a in &actions {
            if a.dim() != n {
                return Err(AssistError::DimensionMismatch {
                    expected: n,
                    got: a.dim(),
                });
            }
            if a.norm() > user_speed * (1.0 + 1e-12) {
                return Err(AssistError::InvalidArgument(
                    "candidate action exceeds user speed".into(),
                ));
            }
        }
        Ok(Self { actions })
    }

    /// Zero action plus full-speed directions covering the unit sphere.
    ///
    /// 1-D gets the two axis directions, 2-D gets 16 evenly spaced angles.
    /// Higher dimensions get every signed axis direction, topped up to 16 with
    /// directions from a Halton sequence pushed through Box-Muller.
    pub fn default_for(n: usize, user_speed: f64) -> Self {
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        match n {
            0 => {}
            1 => {
                dirs.push(vec![1.0]);
                dirs.push(vec![-1.0]);
            }
            2 => {
                for i in 0..DEFAULT_DIRECTIONS {
                    let th = 2.0 * std::f64::consts::PI * i as f64 / DEFAULT_DIRECTIONS as f64;
                    dirs.push(vec![th.cos(), th.sin()]);
                }
            }
            _ => {
                for axis in 0..n {
                    for sign in [1.0, -1.0] {
                        let mut d = vec![0.0; n];
                        d[axis] = sign;
                        dirs.push(d);
                    }
                }
                let mut idx = 1u64;
                while dirs.len() < DEFAULT_DIRECTIONS {
                    let d = halton_gaussian_direction(idx, n);
                    idx += 1;
                    if let Some(d) = d {
                        dirs.push(d);
                    }
                }
            }
        }
        let mut actions = vec![Velocity::zeros(n)];
        actions.extend(
            dirs.into_iter()
                .map(|d| Velocity(d.into_iter().map(|c| c * user_speed).collect())),
        );
        Self { actions }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::default_for(s.n, s.user_speed)
    }

    pub fn actions(&self) -> &[Velocity] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Index of the candidate closest to `u` (lowest index on ties).
    pub fn snap(&self, u: &Velocity) -> usize {
        min_decompose(self.actions.iter().map(|a| {
            a.coords()
                .iter()
                .zip(u.coords())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        }))
        .map(|(i, _)| i)
        .unwrap_or(0)
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn halton_gaussian_direction(index: u64, n: usize) -> Option<Vec<f64>> {
    let dims = n + n % 2;
    let u: Vec<f64> = (0..dims)
        .map(|j| radical_inverse(index, PRIMES[j % PRIMES.len()] + (j / PRIMES.len()) as u64 * 97))
        .collect();
    let mut g = Vec::with_capacity(dims);
    for pair in u.chunks(2) {
        let r = (-2.0 * (1.0 - pair[0]).ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * pair[1];
        g.push(r * th.cos());
        g.push(r * th.sin());
    }
    g.truncate(n);
    let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
    (norm > 1e-9).then(|| g.into_iter().map(|c| c / norm).collect())
}

/// Soft goal value: softmin over targets of the closed-form target values.
pub fn soft_value_goal(x: &WorkspacePoint, g: &Goal, p: &ValueParams) -> f64 {
    let v: Vec<f64> = g.targets.iter().map(|k| value_target(x, k, p)).collect();
    softmin(&v)
}

/// Per-target soft action-values under the user-only transition:
/// `table[action][target] = cost(x') + V_target(x')` with `x' = x + u dt`.
pub fn user_target_q(
    x: &WorkspacePoint,
    g: &Goal,
    cas: &CandidateActionSet,
    p: &ValueParams,
) -> Vec<Vec<f64>> {
    cas.actions()
        .iter()
        .map(|u| {
            let xn = x.advanced(u, p.dt);
            g.targets
                .iter()
                .map(|k| step_cost(&xn, k, p) + value_target(&xn, k, p))
                .collect()
        })
        .collect()
}

/// Log-probability of every action given per-target action-values.
///
/// Goal action-values are the softmin over targets; the distribution over
/// actions is `exp(-Q(u)) / sum_u' exp(-Q(u'))`.
pub fn action_log_probs(target_q: &[Vec<f64>]) -> Vec<f64> {
    let goal_q: Vec<f64> = target_q.iter().map(|row| softmin(row)).collect();
    let log_norm = -softmin(&goal_q);
    goal_q.iter().map(|q| -q - log_norm).collect()
}

/// Log-likelihood of user input `u` at `x` under goal `g`; `u` is snapped to
/// the nearest candidate action.
pub fn user_action_loglik(
    u: &Velocity,
    x: &WorkspacePoint,
    g: &Goal,
    cas: &CandidateActionSet,
    p: &ValueParams,
) -> f64 {
    let idx = cas.snap(u);
    action_log_probs(&user_target_q(x, g, cas, p))[idx]
}

/// Log-likelihood of `u` for every goal in the belief's support, in order.
pub fn goal_logliks(
    b: &Belief,
    x: &WorkspacePoint,
    u: &Velocity,
    scenario: &Scenario,
    cas: &CandidateActionSet,
    p: &ValueParams,
) -> Result<Vec<f64>> {
    let idx = cas.snap(u);
    b.ids()
        .iter()
        .map(|id| {
            let g = scenario
                .goal(id)
                .ok_or_else(|| AssistError::UnknownGoal(id.0.clone()))?;
            Ok(action_log_probs(&user_target_q(x, g, cas, p))[idx])
        })
        .collect()
}

/// Bayes update from precomputed per-goal `[action][target]` action-value
/// tables (one per goal in belief order) and the observed action index.
pub fn belief_update_from_tables(b: &Belief, action: usize, tables: &[Vec<Vec<f64>>]) -> Belief {
    let ll: Vec<f64> = tables.iter().map(|t| action_log_probs(t)[action]).collect();
    b.observe(&ll)
}

/// Bayes update of the goal belief from one user input at `x`.
///
/// Only the state and the user input enter; robot actions never do.
pub fn belief_update(
    b: &Belief,
    x: &WorkspacePoint,
    u: &Velocity,
    scenario: &Scenario,
    cas: &CandidateActionSet,
    p: &ValueParams,
) -> Result<Belief> {
    let ll = goal_logliks(b, x, u, scenario, cas, p)?;
    Ok(b.observe(&ll))
}

pub fn prob_confidence(b: &Belief) -> f64 {
    let p = b.probabilities();
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min).clamp(0.0, 1.0)
}

pub fn distance_confidence(x: &WorkspacePoint, g: &Goal, max_distance: f64, p: &ValueParams) -> f64 {
    let d = g
        .targets
        .iter()
        .map(|k| p.distance(x, k))
        .fold(f64::INFINITY, f64::min);
    (1.0 - d / max_distance).max(0.0)
}

/// Most probable goal; ties go to the lowest index.
pub fn map_goal(b: &Belief) -> &GoalId {
    let (i, _) = min_decompose(b.log_weights().iter().map(|w| -w)).expect("belief nonempty");
    &b.ids()[i]
}
