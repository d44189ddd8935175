//! Soft-minimum value iteration and exhaustive sequence enumeration.

use super::grid::Grid;
use crate::error::{AssistError, Result};

/// Largest number of action sequences the enumerators will walk.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// `table[state][action]`: cost of taking `action` in `state`.
pub type CostTable = Vec<Vec<f64>>;

pub fn cost_table<F: Fn(usize, usize) -> f64>(grid: &Grid, cost: F) -> CostTable {
    (0..grid.len())
        .map(|i| (0..grid.num_actions()).map(|a| cost(i, grid.step(i, a))).collect())
        .collect()
}

/// `-log sum_i exp(-v_i)`, computed directly with a max shift.
pub fn log_sum_exp_min(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if m == f64::INFINITY {
        return m;
    }
    let mut acc = 0.0;
    for x in v {
        acc += (m - x).exp();
    }
    m - acc.ln()
}

#[derive(Debug, Clone)]
pub struct SoftTables {
    /// `v[t][state]` for `t = 0..=horizon`; `v[horizon]` is zero.
    pub v: Vec<Vec<f64>>,
    /// `q[t][state][action]` for `t = 0..horizon`.
    pub q: Vec<Vec<Vec<f64>>>,
}

impl SoftTables {
    /// `pi_t(a | state) = exp(V_t - Q_t)`
    pub fn policy(&self, t: usize, state: usize) -> Vec<f64> {
        self.q[t][state].iter().map(|q| (self.v[t][state] - q).exp()).collect()
    }
}

/// Finite-horizon soft value iteration with zero terminal value:
/// `Q_t(x, a) = C(x, a) + V_{t+1}(x')`, `V_t(x) = softmin_a Q_t(x, a)`.
pub fn soft_value_iteration(grid: &Grid, cost: &CostTable, horizon: usize) -> SoftTables {
    let n = grid.len();
    let succ = grid.successors();
    let mut v = vec![vec![0.0; n]; horizon + 1];
    let mut q = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let qt: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                succ[i]
                    .iter()
                    .zip(&cost[i])
                    .map(|(&j, c)| c + v[t + 1][j])
                    .collect()
            })
            .collect();
        v[t] = qt.iter().map(|row| log_sum_exp_min(row)).collect();
        q[t] = qt;
    }
    SoftTables { v, q }
}

fn check_cap(actions: usize, depth: usize) -> Result<()> {
    let mut total = 1usize;
    for _ in 0..depth {
        total = total.saturating_mul(actions);
        if total > ENUMERATION_CAP {
            return Err(AssistError::SizeCap(format!(
                "{actions}^{depth} sequences exceeds {ENUMERATION_CAP}"
            )));
        }
    }
    Ok(())
}

/// Every `depth`-step path from `start`: pushes the summed cost of each.
fn path_costs(grid: &Grid, cost: &CostTable, start: usize, depth: usize, acc: f64, out: &mut Vec<f64>) {
    if depth == 0 {
        out.push(acc);
        return;
    }
    for a in 0..grid.num_actions() {
        let j = grid.step(start, a);
        path_costs(grid, cost, j, depth - 1, acc + cost[start][a], out);
    }
}

/// `sum_{targets} sum_{sequences} exp(-C)` from `start` over `depth` steps,
/// returned as a plain (unlogged) sum.
pub fn enumerate_partition(grid: &Grid, targets: &[CostTable], start: usize, depth: usize) -> Result<f64> {
    check_cap(grid.num_actions(), depth)?;
    let mut total = 0.0;
    for cost in targets {
        let mut costs = Vec::new();
        path_costs(grid, cost, start, depth, 0.0, &mut costs);
        total += costs.iter().map(|c| (-c).exp()).sum::<f64>();
    }
    Ok(total)
}

/// `-log sum_{targets} sum_{sequences} exp(-C)`.
pub fn enumerate_log_partition(grid: &Grid, targets: &[CostTable], start: usize, depth: usize) -> Result<f64> {
    Ok(-enumerate_partition(grid, targets, start, depth)?.ln())
}

/// Probability the soft-optimal user for a goal (given by its target cost
/// tables) takes `action` at `state` with `remaining` steps to go, by direct
/// enumeration of continuations.
pub fn enumerate_action_probability(
    grid: &Grid,
    targets: &[CostTable],
    state: usize,
    action: usize,
    remaining: usize,
) -> Result<f64> {
    let next = grid.step(state, action);
    let mut num = 0.0;
    for cost in targets {
        let mut tails = Vec::new();
        path_costs(grid, cost, next, remaining - 1, 0.0, &mut tails);
        let c0 = cost[state][action];
        num += tails.iter().map(|c| (-(c0 + c)).exp()).sum::<f64>();
    }
    Ok(num / enumerate_partition(grid, targets, state, remaining)?)
}

/// Exact goal posterior of an observed action sequence: prior times the
/// explicit product of per-step action probabilities, normalized.
pub fn enumerate_trajectory_posterior(
    grid: &Grid,
    goals: &[Vec<CostTable>],
    prior: &[f64],
    start: usize,
    actions: &[usize],
    horizon: usize,
) -> Result<Vec<f64>> {
    if actions.len() > horizon {
        return Err(AssistError::InvalidArgument("more observations than horizon".into()));
    }
    check_cap(grid.num_actions(), horizon)?;
    let mut weights = prior.to_vec();
    for (g, targets) in goals.iter().enumerate() {
        let mut x = start;
        for (t, &a) in actions.iter().enumerate() {
            weights[g] *= enumerate_action_probability(grid, targets, x, a, horizon - t)?;
            x = grid.step(x, a);
        }
    }
    let z: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / z).collect())
}
