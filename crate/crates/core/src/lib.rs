//! Shared-autonomy engine.
//!
//! A user steers toward one of several goals that the system does not know.
//! The engine keeps a Bayesian belief over goals inferred from user inputs
//! ([`prediction`]), and picks assistance that minimizes expected cost-to-go
//! under that belief ([`policies`]), using closed-form per-target values
//! ([`value`]). [`teaming`] covers the variant where user and robot pursue
//! separate goals under a restriction set. [`sim`] runs deterministic
//! episodes, [`oracle`] holds brute-force references, and [`bridge`] is the
//! live session protocol.

pub mod bridge;
pub mod error;
pub mod oracle;
pub mod policies;
pub mod prediction;
pub mod sim;
pub mod teaming;
pub mod types;
pub mod value;

pub use error::{AssistError, Result};
pub use types::{
    validate_scenario, Belief, Bounds, Goal, GoalId, Metric, ModalConfig, RunSettings, Scenario,
    Target, TeamingSetup, Velocity, WorkspacePoint,
};
pub use value::ValueParams;
