//! Exact values for a tiny goal-uncertain POMDP on a line.
//!
//! Each tick the user picks `u` from a known goal-conditioned policy, the robot
//! observes `u`, updates its belief and picks `a`; the state moves to
//! `clamp(x + u + a)` and the cost is the distance from the new state to the
//! true goal cell. Both agents act from `{-1, 0, +1}`.

use crate::error::{AssistError, Result};

pub const MAX_GOALS: usize = 3;
pub const MAX_STATES: usize = 10;
pub const MAX_HORIZON: usize = 5;
pub const MOVES: [i64; 3] = [-1, 0, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct LinePomdp {
    pub n_states: usize,
    /// Goal cell per goal.
    pub goals: Vec<usize>,
    /// `user_policy[g][x][u]`, `u` indexing [`MOVES`].
    pub user_policy: Vec<Vec<[f64; 3]>>,
    pub horizon: usize,
}

impl LinePomdp {
    pub fn validate(&self) -> Result<()> {
        if self.goals.is_empty() || self.goals.len() > MAX_GOALS {
            return Err(AssistError::SizeCap(format!("{} goals", self.goals.len())));
        }
        if self.n_states == 0 || self.n_states > MAX_STATES {
            return Err(AssistError::SizeCap(format!("{} states", self.n_states)));
        }
        if self.horizon > MAX_HORIZON {
            return Err(AssistError::SizeCap(format!("horizon {}", self.horizon)));
        }
        if self.user_policy.len() != self.goals.len()
            || self.user_policy.iter().any(|p| p.len() != self.n_states)
        {
            return Err(AssistError::InvalidArgument("user policy shape".into()));
        }
        Ok(())
    }

    pub fn next(&self, x: usize, u: usize, a: usize) -> usize {
        (x as i64 + MOVES[u] + MOVES[a]).clamp(0, self.n_states as i64 - 1) as usize
    }

    pub fn cost(&self, g: usize, x_next: usize) -> f64 {
        (x_next as f64 - self.goals[g] as f64).abs()
    }

    /// Value with the goal known, `t` steps elapsed.
    pub fn known_goal_value(&self, g: usize, x: usize, t: usize) -> f64 {
        if t == self.horizon {
            return 0.0;
        }
        let mut v = 0.0;
        for u in 0..3 {
            let pu = self.user_policy[g][x][u];
            if pu == 0.0 {
                continue;
            }
            let best = (0..3)
                .map(|a| {
                    let xn = self.next(x, u, a);
                    self.cost(g, xn) + self.known_goal_value(g, xn, t + 1)
                })
                .fold(f64::INFINITY, f64::min);
            v += pu * best;
        }
        v
    }

    /// Belief-tree expectimax: expectation over the observed user input,
    /// minimum over robot actions, belief updated by Bayes' rule on `u`.
    pub fn exact_value(&self, belief: &[f64], x: usize) -> Result<f64> {
        self.validate()?;
        if belief.len() != self.goals.len() {
            return Err(AssistError::DimensionMismatch {
                expected: self.goals.len(),
                got: belief.len(),
            });
        }
        Ok(self.belief_value(belief, x, 0))
    }

    fn belief_value(&self, b: &[f64], x: usize, t: usize) -> f64 {
        if t == self.horizon {
            return 0.0;
        }
        let mut v = 0.0;
        for u in 0..3 {
            let joint: Vec<f64> = (0..b.len()).map(|g| b[g] * self.user_policy[g][x][u]).collect();
            let pu: f64 = joint.iter().sum();
            if pu == 0.0 {
                continue;
            }
            let post: Vec<f64> = joint.iter().map(|j| j / pu).collect();
            let best = (0..3)
                .map(|a| {
                    let xn = self.next(x, u, a);
                    let c: f64 = (0..b.len()).map(|g| post[g] * self.cost(g, xn)).sum();
                    c + self.belief_value(&post, xn, t + 1)
                })
                .fold(f64::INFINITY, f64::min);
            v += pu * best;
        }
        v
    }
}
