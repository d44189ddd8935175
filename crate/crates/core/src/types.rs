//! Shared domain vocabulary: points, velocities, targets, goals, beliefs and
//! scenarios, plus scenario validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, AssistError, Result};
use crate::policies::{ArbitrationProfile, ConfidenceKind, UserEstimate};

pub const SCENARIO_SCHEMA: u32 = 1;

/// A position in the n-dimensional Euclidean workspace (meters per axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkspacePoint(pub Vec<f64>);

/// A velocity in the workspace (meters/second per axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Velocity(pub Vec<f64>);

impl WorkspacePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// `self + v * dt`
    pub fn advanced(&self, v: &Velocity, dt: f64) -> WorkspacePoint {
        WorkspacePoint(
            self.0
                .iter()
                .zip(&v.0)
                .map(|(x, vi)| x + vi * dt)
                .collect(),
        )
    }

    /// Plain Euclidean distance, used for physical separation between agents.
    pub fn euclidean(&self, other: &WorkspacePoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Velocity {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }

    pub fn scaled(&self, k: f64) -> Velocity {
        Velocity(self.0.iter().map(|c| c * k).collect())
    }

    pub fn plus(&self, other: &Velocity) -> Velocity {
        Velocity(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, other: &Velocity) -> Velocity {
        Velocity(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Rescales onto the ball of radius `limit` if it lies outside.
    pub fn clamped(&self, limit: f64) -> Velocity {
        let n = self.norm();
        if n > limit && n > 0.0 {
            self.scaled(limit / n)
        } else {
            self.clone()
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// Weighted Euclidean metric `d(a, b) = sqrt(sum_i w_i (a_i - b_i)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    weights: Vec<f64>,
}

impl Metric {
    pub fn unweighted(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Gradient of `distance(x, center)` with respect to `x`; zero at the center.
    pub fn distance_gradient(&self, x: &[f64], center: &[f64]) -> Vec<f64> {
        let d = self.distance(x, center);
        if d == 0.0 {
            return vec![0.0; x.len()];
        }
        x.iter()
            .zip(center)
            .zip(&self.weights)
            .map(|((xi, ci), w)| w * (xi - ci) / d)
            .collect()
    }
}

/// One concrete terminal pose achieving a goal, with its cost parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub pose: WorkspacePoint,
    /// Far-field cost per decision step.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Near-field radius in meters.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.1
}

impl Target {
    pub fn new(pose: Vec<f64>, alpha: f64, delta: f64) -> Self {
        Self {
            pose: WorkspacePoint(pose),
            alpha,
            delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub String);

impl GoalId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GoalId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub id: GoalId,
    pub targets: Vec<Target>,
}

impl Goal {
    pub fn new(id: impl Into<String>, targets: Vec<Target>) -> Self {
        Self {
            id: GoalId(id.into()),
            targets,
        }
    }
}

/// Normalized distribution over goal ids, stored as log weights.
///
/// The stored log weights are always normalized (their exponentials sum to 1),
/// so `probabilities()` is a plain `exp`. Every constructor and every update
/// returns a normalized value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    ids: Vec<GoalId>,
    log_weights: Vec<f64>,
}

impl Belief {
    pub fn uniform(ids: Vec<GoalId>) -> Result<Self> {
        let lw = vec![0.0; ids.len()];
        Self::from_log_weights(ids, lw)
    }

    pub fn from_probabilities(ids: Vec<GoalId>, probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(AssistError::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        Self::from_log_weights(ids, probs.iter().map(|p| p.ln()).collect())
    }

    /// Builds a belief from unnormalized log weights (`-inf` allowed).
    pub fn from_log_weights(ids: Vec<GoalId>, log_weights: Vec<f64>) -> Result<Self> {
        if ids.is_empty() {
            return Err(AssistError::InvalidArgument("belief support is empty".into()));
        }
        if ids.len() != log_weights.len() {
            return Err(AssistError::DimensionMismatch {
                expected: ids.len(),
                got: log_weights.len(),
            });
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(AssistError::InvalidArgument("log weight is NaN or +inf".into()));
        }
        Ok(Self {
            ids,
            log_weights: normalize_log(log_weights),
        })
    }

    /// Point mass on `id` within the support `ids`.
    pub fn degenerate(ids: Vec<GoalId>, id: &GoalId) -> Result<Self> {
        let idx = ids
            .iter()
            .position(|g| g == id)
            .ok_or_else(|| AssistError::UnknownGoal(id.0.clone()))?;
        let lw = (0..ids.len())
            .map(|i| if i == idx { 0.0 } else { f64::NEG_INFINITY })
            .collect();
        Self::from_log_weights(ids, lw)
    }

    pub fn ids(&self) -> &[GoalId] {
        &self.ids
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn prob(&self, id: &GoalId) -> Option<f64> {
        self.ids
            .iter()
            .position(|g| g == id)
            .map(|i| self.log_weights[i].exp())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GoalId, f64)> + '_ {
        self.ids
            .iter()
            .zip(&self.log_weights)
            .map(|(id, w)| (id, w.exp()))
    }

    /// Adds per-goal log evidence and renormalizes. If every goal would end up
    /// with zero mass the update falls back to the evidence alone, shifted by
    /// its maximum, so the result is never NaN.
    pub fn observe(&self, log_evidence: &[f64]) -> Belief {
        assert_eq!(log_evidence.len(), self.ids.len(), "evidence length");
        let mut lw: Vec<f64> = self
            .log_weights
            .iter()
            .zip(log_evidence)
            .map(|(w, e)| w + e)
            .collect();
        if lw.iter().all(|w| !w.is_finite()) {
            lw = log_evidence
                .iter()
                .map(|e| if e.is_nan() { f64::NEG_INFINITY } else { *e })
                .collect();
            if lw.iter().all(|w| !w.is_finite()) {
                lw = self.log_weights.clone();
            }
        }
        Belief {
            ids: self.ids.clone(),
            log_weights: normalize_log(lw),
        }
    }

    /// Restricts the support to `keep` and renormalizes; `None` when nothing remains.
    /// If all remaining goals had zero mass the result is uniform over them.
    pub fn restricted(&self, keep: &BTreeSet<GoalId>) -> Option<Belief> {
        let (ids, lw): (Vec<_>, Vec<_>) = self
            .ids
            .iter()
            .zip(&self.log_weights)
            .filter(|(id, _)| keep.contains(*id))
            .map(|(id, w)| (id.clone(), *w))
            .unzip();
        if ids.is_empty() {
            return None;
        }
        let lw = if lw.iter().all(|w| !w.is_finite()) {
            vec![0.0; ids.len()]
        } else {
            lw
        };
        Some(Belief {
            ids,
            log_weights: normalize_log(lw),
        })
    }
}

fn normalize_log(mut lw: Vec<f64>) -> Vec<f64> {
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = -(lw.len() as f64).ln();
        return vec![u; lw.len()];
    }
    let lse = max + lw.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
    for w in &mut lw {
        *w -= lse;
    }
    lw
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn contains(&self, p: &WorkspacePoint) -> bool {
        p.0.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn clamp(&self, p: WorkspacePoint) -> WorkspacePoint {
        WorkspacePoint(
            p.0.into_iter()
                .zip(self.lo.iter().zip(&self.hi))
                .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
                .collect(),
        )
    }
}

/// Low-DOF device driving disjoint subsets of axes (0-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalConfig {
    pub device_dof: usize,
    pub modes: Vec<Vec<usize>>,
}

impl ModalConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.device_dof == 0 {
            return Err(invalid("modal.device_dof", "must be at least 1"));
        }
        if self.modes.is_empty() {
            return Err(invalid("modal.modes", "at least one mode required"));
        }
        let mut seen = BTreeSet::new();
        for (i, mode) in self.modes.iter().enumerate() {
            if mode.is_empty() || mode.len() > self.device_dof {
                return Err(invalid(
                    format!("modal.modes[{i}]"),
                    format!("mode must have 1..={} indices", self.device_dof),
                ));
            }
            for &axis in mode {
                if axis >= n {
                    return Err(invalid(
                        format!("modal.modes[{i}]"),
                        format!("axis {axis} out of range for n = {n}"),
                    ));
                }
                if !seen.insert(axis) {
                    return Err(invalid(
                        format!("modal.modes[{i}]"),
                        format!("axis {axis} appears in more than one mode"),
                    ));
                }
            }
        }
        if seen.len() != n {
            return Err(invalid("modal.modes", "modes must cover every axis"));
        }
        Ok(())
    }
}

/// Start positions for a teaming scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamingSetup {
    pub user_start: WorkspacePoint,
    pub robot_start: WorkspacePoint,
}

/// Tunables with built-in defaults; a scenario file may override any of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub arbitration: ArbitrationProfile,
    /// Distance `D` past which blend confidence is zero.
    pub blend_distance: f64,
    pub blend_confidence: ConfidenceKind,
    pub user_estimate: UserEstimate,
    pub commit_threshold: f64,
    pub tick_limit: usize,
    pub noise_level: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            arbitration: ArbitrationProfile::default(),
            blend_distance: 0.4,
            blend_confidence: ConfidenceKind::Distance,
            user_estimate: UserEstimate::RobotTakesOver,
            commit_threshold: 0.5,
            tick_limit: 3000,
            noise_level: 0.2,
        }
    }
}

fn default_schema() -> u32 {
    SCENARIO_SCHEMA
}

fn default_collision_threshold() -> f64 {
    0.08
}

fn default_completion_eps() -> f64 {
    0.01
}

fn default_dt() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub goals: Vec<Goal>,
    pub user_speed: f64,
    pub robot_speed: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub bounds: Bounds,
    /// `(user goal, robot goal)` pairs that cannot be pursued simultaneously.
    #[serde(default)]
    pub restriction: Vec<(GoalId, GoalId)>,
    #[serde(default = "default_collision_threshold")]
    pub collision_threshold: f64,
    #[serde(default = "default_completion_eps")]
    pub completion_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<BTreeMap<GoalId, f64>>,
    /// Per-axis metric weights; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// End-effector start for shared-control episodes.
    pub start: WorkspacePoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teaming: Option<TeamingSetup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal: Option<ModalConfig>,
    #[serde(default)]
    pub settings: RunSettings,
}

impl Scenario {
    pub fn goal(&self, id: &GoalId) -> Option<&Goal> {
        self.goals.iter().find(|g| &g.id == id)
    }

    pub fn goal_index(&self, id: &GoalId) -> Option<usize> {
        self.goals.iter().position(|g| &g.id == id)
    }

    pub fn goal_ids(&self) -> Vec<GoalId> {
        self.goals.iter().map(|g| g.id.clone()).collect()
    }

    pub fn metric(&self) -> Metric {
        match &self.weights {
            Some(w) => Metric::weighted(w.clone()),
            None => Metric::unweighted(self.n),
        }
    }

    pub fn is_teaming(&self) -> bool {
        self.teaming.is_some()
    }

    /// `(g_user, g_robot)` may be pursued at the same time.
    pub fn permitted(&self, user: &GoalId, robot: &GoalId) -> bool {
        !self
            .restriction
            .iter()
            .any(|(u, r)| u == user && r == robot)
    }

    /// Prior over all goals: the scenario's, or uniform.
    pub fn prior_belief(&self) -> Result<Belief> {
        let ids = self.goal_ids();
        match &self.prior {
            None => Belief::uniform(ids),
            Some(p) => {
                let probs: Vec<f64> = ids.iter().map(|id| p.get(id).copied().unwrap_or(0.0)).collect();
                Belief::from_probabilities(ids, &probs)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Scenario> {
        let sc: Scenario = serde_json::from_str(s)
            .map_err(|e| invalid("<root>", e.to_string()))?;
        validate_scenario(sc)
    }
}

fn check_point(path: &str, p: &WorkspacePoint, s: &Scenario) -> Result<()> {
    if p.dim() != s.n {
        return Err(invalid(path, format!("expected {} coordinates, got {}", s.n, p.dim())));
    }
    if !p.is_finite() {
        return Err(invalid(path, "coordinates must be finite"));
    }
    if !s.bounds.contains(p) {
        return Err(invalid(path, "outside bounds"));
    }
    Ok(())
}

fn check_positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, "must be positive and finite"))
    }
}

/// Returns the scenario unchanged iff every invariant holds; otherwise reports
/// the first violation with its field path.
pub fn validate_scenario(s: Scenario) -> Result<Scenario> {
    if s.schema != SCENARIO_SCHEMA {
        return Err(invalid("schema", format!("unsupported schema {}", s.schema)));
    }
    if s.n == 0 {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    if s.goals.is_empty() {
        return Err(invalid("goals", "goals nonempty"));
    }
    check_positive("user_speed", s.user_speed)?;
    check_positive("robot_speed", s.robot_speed)?;
    check_positive("dt", s.dt)?;
    check_positive("completion_eps", s.completion_eps)?;
    if !(s.collision_threshold.is_finite() && s.collision_threshold >= 0.0) {
        return Err(invalid("collision_threshold", "must be nonnegative"));
    }
    if s.bounds.lo.len() != s.n || s.bounds.hi.len() != s.n {
        return Err(invalid("bounds", "lo/hi must have n entries"));
    }
    for i in 0..s.n {
        let (lo, hi) = (s.bounds.lo[i], s.bounds.hi[i]);
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(format!("bounds[{i}]"), "need finite lo <= hi"));
        }
    }
    if let Some(w) = &s.weights {
        if w.len() != s.n {
            return Err(invalid("weights", "must have n entries"));
        }
        for (i, wi) in w.iter().enumerate() {
            check_positive(&format!("weights[{i}]"), *wi)?;
        }
    }
    let mut ids = BTreeSet::new();
    for (gi, g) in s.goals.iter().enumerate() {
        if !ids.insert(g.id.clone()) {
            return Err(invalid(format!("goals[{gi}].id"), format!("duplicate id `{}`", g.id)));
        }
        if g.targets.is_empty() {
            return Err(invalid(format!("goals[{gi}].targets"), "targets nonempty"));
        }
        for (ti, t) in g.targets.iter().enumerate() {
            let path = format!("goals[{gi}].targets[{ti}]");
            check_point(&format!("{path}.pose"), &t.pose, &s)?;
            check_positive(&format!("{path}.alpha"), t.alpha)?;
            check_positive(&format!("{path}.delta"), t.delta)?;
        }
    }
    for (i, (u, r)) in s.restriction.iter().enumerate() {
        if !ids.contains(u) {
            return Err(invalid(format!("restriction[{i}][0]"), format!("unknown goal `{u}`")));
        }
        if !ids.contains(r) {
            return Err(invalid(format!("restriction[{i}][1]"), format!("unknown goal `{r}`")));
        }
    }
    if let Some(prior) = &s.prior {
        for (id, p) in prior {
            if !ids.contains(id) {
                return Err(invalid(format!("prior.{id}"), "unknown goal"));
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(invalid(format!("prior.{id}"), "must be a probability"));
            }
        }
        let total: f64 = prior.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("prior", format!("sums to {total}, expected 1")));
        }
    }
    check_point("start", &s.start, &s)?;
    if let Some(t) = &s.teaming {
        check_point("teaming.user_start", &t.user_start, &s)?;
        check_point("teaming.robot_start", &t.robot_start, &s)?;
    }
    if let Some(m) = &s.modal {
        m.validate(s.n)?;
    }
    let st = &s.settings;
    let a = &st.arbitration;
    if !(a.conf_floor >= 0.0 && a.conf_floor < 1.0) {
        return Err(invalid("settings.arbitration.conf_floor", "must be in [0, 1)"));
    }
    if !(a.conf_ceil > a.conf_floor && a.conf_ceil <= 1.0) {
        return Err(invalid("settings.arbitration.conf_ceil", "must be in (conf_floor, 1]"));
    }
    if !(a.alpha_max > 0.0 && a.alpha_max <= 1.0) {
        return Err(invalid("settings.arbitration.alpha_max", "must be in (0, 1]"));
    }
    check_positive("settings.blend_distance", st.blend_distance)?;
    if !(st.commit_threshold > 0.0 && st.commit_threshold <= 1.0) {
        return Err(invalid("settings.commit_threshold", "must be in (0, 1]"));
    }
    if !(st.noise_level.is_finite() && st.noise_level >= 0.0) {
        return Err(invalid("settings.noise_level", "must be nonnegative"));
    }
    Ok(s)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two single-target goals mirrored about the y axis, 2D.
    pub fn two_goal_2d() -> Scenario {
        Scenario {
            schema: SCENARIO_SCHEMA,
            name: "two-goal".into(),
            n: 2,
            goals: vec![
                Goal::new("left", vec![Target::new(vec![-0.5, 0.5], 1.0, 0.1)]),
                Goal::new("right", vec![Target::new(vec![0.5, 0.5], 1.0, 0.1)]),
            ],
            user_speed: 0.2,
            robot_speed: 0.2,
            dt: 0.02,
            bounds: Bounds {
                lo: vec![-1.0, -1.0],
                hi: vec![1.0, 1.0],
            },
            restriction: vec![],
            collision_threshold: 0.08,
            completion_eps: 0.01,
            prior: None,
            weights: None,
            start: WorkspacePoint(vec![0.0, 0.0]),
            teaming: None,
            modal: None,
            settings: RunSettings::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::two_goal_2d;
    use super::*;

    #[test]
    fn empty_goal_set_is_rejected() {
        let mut s = two_goal_2d();
        s.goals.clear();
        let err = validate_scenario(s).unwrap_err();
        assert!(err.to_string().contains("goals nonempty"), "{err}");
    }

    #[test]
    fn restriction_must_reference_known_goals() {
        let mut s = two_goal_2d();
        s.restriction.push((GoalId::from("left"), GoalId::from("nowhere")));
        match validate_scenario(s).unwrap_err() {
            AssistError::InvalidScenario { path, .. } => assert_eq!(path, "restriction[0][1]"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn valid_scenario_is_returned_unchanged() {
        let s = two_goal_2d();
        assert_eq!(validate_scenario(s.clone()).unwrap(), s);
    }

    #[test]
    fn target_outside_bounds_is_rejected() {
        let mut s = two_goal_2d();
        s.goals[0].targets[0].pose = WorkspacePoint(vec![3.0, 0.0]);
        assert!(validate_scenario(s).is_err());
    }

    #[test]
    fn prior_must_sum_to_one() {
        let mut s = two_goal_2d();
        s.prior = Some(BTreeMap::from([
            (GoalId::from("left"), 0.5),
            (GoalId::from("right"), 0.6),
        ]));
        assert!(validate_scenario(s).is_err());
    }

    #[test]
    fn overlapping_modes_are_rejected() {
        let cfg = ModalConfig {
            device_dof: 2,
            modes: vec![vec![0, 1], vec![1]],
        };
        assert!(cfg.validate(2).is_err());
        let ok = ModalConfig {
            device_dof: 2,
            modes: vec![vec![0, 1], vec![2, 3], vec![4, 5]],
        };
        ok.validate(6).unwrap();
    }

    #[test]
    fn scenario_json_defaults_apply() {
        let json = r#"{
            "n": 1, "goals": [{"id": "g", "targets": [{"pose": [0.5]}]}],
            "user_speed": 0.2, "robot_speed": 0.2,
            "bounds": {"lo": [0.0], "hi": [1.0]}, "start": [0.0]
        }"#;
        let s = Scenario::from_json(json).unwrap();
        assert_eq!(s.schema, 1);
        assert_eq!(s.dt, 0.02);
        assert_eq!(s.goals[0].targets[0].alpha, 1.0);
        assert_eq!(s.goals[0].targets[0].delta, 0.1);
        assert_eq!(s.settings.tick_limit, 3000);
    }

    #[test]
    fn belief_restriction_renormalizes() {
        let ids: Vec<GoalId> = ["a", "b", "c"].into_iter().map(GoalId::from).collect();
        let b = Belief::from_probabilities(ids, &[0.5, 0.25, 0.25]).unwrap();
        let keep = BTreeSet::from([GoalId::from("b"), GoalId::from("c")]);
        let r = b.restricted(&keep).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r.probabilities()[0] - 0.5).abs() < 1e-12);
        assert!(b.restricted(&BTreeSet::new()).is_none());
    }

    #[test]
    fn belief_observe_never_produces_nan() {
        let ids: Vec<GoalId> = ["a", "b"].into_iter().map(GoalId::from).collect();
        let b = Belief::from_probabilities(ids, &[1.0, 0.0]).unwrap();
        // all mass would vanish: falls back to the evidence
        let b2 = b.observe(&[f64::NEG_INFINITY, -3.0]);
        let p = b2.probabilities();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p[1] - 1.0).abs() < 1e-12);
    }
}
