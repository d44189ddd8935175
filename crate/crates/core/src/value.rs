//! Closed-form cost, value and action-value functions for targets and goals.
//!
//! Per-step cost for a target is `alpha` when the next position is farther
//! than `delta` from the target pose and `(alpha / delta) * d` inside it. The
//! value of a position is the integral of that per-step cost along the
//! straight full-speed path to the target, measured in decision steps of
//! length `step`:
//!
//! ```text
//! d <= delta:  V = (alpha / delta) * d^2 / (2 step)
//! d >  delta:  V = alpha * (d - delta) / step + alpha * delta / (2 step)
//! ```
//!
//! A goal's value is the minimum over its targets, and its action-value uses
//! the target that is best after the step.

use crate::types::{Goal, Metric, Scenario, Target, Velocity, WorkspacePoint};

/// Discretization shared by every value formula.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    /// Distance covered per decision step at full speed (`speed * dt`).
    pub step: f64,
    pub dt: f64,
    pub metric: Metric,
}

impl ValueParams {
    pub fn new(speed: f64, dt: f64, metric: Metric) -> Self {
        Self {
            step: speed * dt,
            dt,
            metric,
        }
    }

    pub fn robot(s: &Scenario) -> Self {
        Self::new(s.robot_speed, s.dt, s.metric())
    }

    pub fn user(s: &Scenario) -> Self {
        Self::new(s.user_speed, s.dt, s.metric())
    }

    pub fn speed(&self) -> f64 {
        self.step / self.dt
    }

    pub fn distance(&self, x: &WorkspacePoint, k: &Target) -> f64 {
        self.metric.distance(x.coords(), k.pose.coords())
    }
}

/// Cost of arriving at `x_next` when aiming for `k`, as a function of distance.
pub fn step_cost_at_distance(d: f64, k: &Target) -> f64 {
    if d > k.delta {
        k.alpha
    } else {
        k.alpha / k.delta * d
    }
}

pub fn value_at_distance(d: f64, k: &Target, step: f64) -> f64 {
    if d <= k.delta {
        k.alpha / k.delta * d * d / (2.0 * step)
    } else {
        k.alpha * (d - k.delta) / step + k.alpha * k.delta / (2.0 * step)
    }
}

/// Derivative of the value with respect to distance.
fn value_slope(d: f64, k: &Target, step: f64) -> f64 {
    if d <= k.delta {
        k.alpha / (k.delta * step) * d
    } else {
        k.alpha / step
    }
}

fn cost_slope(d: f64, k: &Target) -> f64 {
    if d > k.delta {
        0.0
    } else {
        k.alpha / k.delta
    }
}

pub fn step_cost(x_next: &WorkspacePoint, k: &Target, p: &ValueParams) -> f64 {
    step_cost_at_distance(p.distance(x_next, k), k)
}

pub fn value_target(x: &WorkspacePoint, k: &Target, p: &ValueParams) -> f64 {
    value_at_distance(p.distance(x, k), k, p.step)
}

/// Analytic gradient of [`value_target`]; zero exactly at the target pose.
pub fn grad_value_target(x: &WorkspacePoint, k: &Target, p: &ValueParams) -> Vec<f64> {
    let d = p.distance(x, k);
    let slope = value_slope(d, k, p.step);
    p.metric
        .distance_gradient(x.coords(), k.pose.coords())
        .into_iter()
        .map(|g| g * slope)
        .collect()
}

fn grad_step_cost(x_next: &WorkspacePoint, k: &Target, p: &ValueParams) -> Vec<f64> {
    let d = p.distance(x_next, k);
    let slope = cost_slope(d, k);
    p.metric
        .distance_gradient(x_next.coords(), k.pose.coords())
        .into_iter()
        .map(|g| g * slope)
        .collect()
}

/// Position after applying both velocities for one tick (no bounds clamp).
pub fn next_position(x: &WorkspacePoint, u: &Velocity, a: &Velocity, dt: f64) -> WorkspacePoint {
    WorkspacePoint(
        x.coords()
            .iter()
            .zip(u.coords().iter().zip(a.coords()))
            .map(|(xi, (ui, ai))| xi + (ui + ai) * dt)
            .collect(),
    )
}

pub fn q_target(
    x: &WorkspacePoint,
    u: &Velocity,
    a: &Velocity,
    k: &Target,
    p: &ValueParams,
) -> f64 {
    let xn = next_position(x, u, a, p.dt);
    step_cost(&xn, k, p) + value_target(&xn, k, p)
}

/// Index and value of the minimum; ties go to the lowest index.
///
/// This is the min-composition used for goals (over targets) and for teaming
/// restriction sets (over permitted goals). Returns `None` on empty input.
pub fn min_decompose<I: IntoIterator<Item = f64>>(values: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, bv)) if v >= bv || v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Target of `g` with the lowest value at `x` (lowest index on ties).
pub fn best_target<'g>(x: &WorkspacePoint, g: &'g Goal, p: &ValueParams) -> (usize, &'g Target) {
    let (i, _) = min_decompose(g.targets.iter().map(|k| value_target(x, k, p)))
        .expect("goal has at least one target");
    (i, &g.targets[i])
}

pub fn value_goal(x: &WorkspacePoint, g: &Goal, p: &ValueParams) -> f64 {
    min_decompose(g.targets.iter().map(|k| value_target(x, k, p)))
        .expect("goal has at least one target")
        .1
}

pub fn q_goal(x: &WorkspacePoint, u: &Velocity, a: &Velocity, g: &Goal, p: &ValueParams) -> f64 {
    let xn = next_position(x, u, a, p.dt);
    let (_, k) = best_target(&xn, g, p);
    step_cost(&xn, k, p) + value_target(&xn, k, p)
}

/// Gradient of [`q_goal`] with respect to `a`, evaluated at `a = 0` with the
/// best target held fixed.
pub fn grad_q_goal_over_a(x: &WorkspacePoint, u: &Velocity, g: &Goal, p: &ValueParams) -> Vec<f64> {
    let xn = x.advanced(u, p.dt);
    let (_, k) = best_target(&xn, g, p);
    grad_q_target_over_a_at(&xn, k, p)
}

/// `dt * (grad step_cost + grad value)` at the post-step position `xn`.
pub(crate) fn grad_q_target_over_a_at(xn: &WorkspacePoint, k: &Target, p: &ValueParams) -> Vec<f64> {
    grad_step_cost(xn, k, p)
        .into_iter()
        .zip(grad_value_target(xn, k, p))
        .map(|(c, v)| p.dt * (c + v))
        .collect()
}
