//! Regular grids with axis-step actions and hard value iteration.

use crate::error::{AssistError, Result};

/// Iteration cap for convergent value iteration.
pub const MAX_SWEEPS: usize = 100_000;

/// Axis-aligned lattice `origin + h * index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
}

impl Grid {
    pub fn new(origin: Vec<f64>, h: f64, shape: Vec<usize>) -> Self {
        assert_eq!(origin.len(), shape.len());
        assert!(h > 0.0 && shape.iter().all(|&k| k > 0));
        Self { origin, h, shape }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Actions are `stay` (0) then `-e_0, +e_0, -e_1, +e_1, ...`.
    pub fn num_actions(&self) -> usize {
        1 + 2 * self.dim()
    }

    pub fn index(&self, cell: &[usize]) -> usize {
        let mut i = 0;
        for (c, k) in cell.iter().zip(&self.shape) {
            i = i * k + c;
        }
        i
    }

    pub fn cell(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim()];
        for ax in (0..self.dim()).rev() {
            c[ax] = i % self.shape[ax];
            i /= self.shape[ax];
        }
        c
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.cell(i)
            .iter()
            .zip(&self.origin)
            .map(|(&c, o)| o + self.h * c as f64)
            .collect()
    }

    /// Successor under action `a`; moves off the grid leave the state unchanged.
    pub fn step(&self, i: usize, a: usize) -> usize {
        if a == 0 {
            return i;
        }
        let ax = (a - 1) / 2;
        let mut c = self.cell(i);
        if a % 2 == 1 {
            if c[ax] == 0 {
                return i;
            }
            c[ax] -= 1;
        } else {
            if c[ax] + 1 == self.shape[ax] {
                return i;
            }
            c[ax] += 1;
        }
        self.index(&c)
    }

    /// `succ[i][a]`
    pub fn successors(&self) -> Vec<Vec<usize>> {
        (0..self.len())
            .map(|i| (0..self.num_actions()).map(|a| self.step(i, a)).collect())
            .collect()
    }
}

pub enum Horizon {
    /// Exact `T`-step cost-to-go with zero terminal value.
    Steps(usize),
    /// Iterate to a fixed point; stop when no entry moves by more than `tol`.
    Converge { tol: f64 },
}

/// Hard value iteration: `V(x) = min_a [cost(x, x') + V(x')]`.
///
/// `cost(from, to)` is called with state indices. Convergent mode fails with
/// `NonConvergence` if the cap is hit, which also catches negative-cost cycles.
pub fn grid_value_iteration<F>(grid: &Grid, cost: F, horizon: Horizon) -> Result<Vec<f64>>
where
    F: Fn(usize, usize) -> f64,
{
    let succ = grid.successors();
    let c: Vec<Vec<f64>> = succ
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|&j| cost(i, j)).collect())
        .collect();
    let backup = |v: &[f64]| -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                succ[i]
                    .iter()
                    .zip(&c[i])
                    .map(|(&j, cij)| cij + v[j])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let mut v = vec![0.0; grid.len()];
    match horizon {
        Horizon::Steps(t) => {
            for _ in 0..t {
                v = backup(&v);
            }
            Ok(v)
        }
        Horizon::Converge { tol } => {
            for _ in 0..MAX_SWEEPS {
                let next = backup(&v);
                let delta = next
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                v = next;
                if delta <= tol {
                    return Ok(v);
                }
            }
            Err(AssistError::NonConvergence(MAX_SWEEPS))
        }
    }
}

/// Reaching-cost ramp evaluated at distance `d` to a target: `alpha` outside
/// `delta`, `alpha * d / delta` inside.
pub fn ramp_cost(d: f64, alpha: f64, delta: f64) -> f64 {
    if d > delta {
        alpha
    } else {
        alpha * d / delta
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
