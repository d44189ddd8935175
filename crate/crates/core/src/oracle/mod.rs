//! Independent brute-force references: discrete value iteration, soft value
//! iteration, exhaustive trajectory enumeration and exact belief-space values.
//!
//! Nothing here calls into the engine's value or prediction math; the checks
//! in [`checks`] compare the two.

pub mod checks;
pub mod grid;
pub mod pomdp;
pub mod soft;

pub use checks::{run_all, CheckOutcome, Fault};
pub use grid::{grid_value_iteration, Grid, Horizon};
pub use pomdp::LinePomdp;
pub use soft::{
    enumerate_log_partition, enumerate_trajectory_posterior, soft_value_iteration, CostTable, SoftTables,
};
