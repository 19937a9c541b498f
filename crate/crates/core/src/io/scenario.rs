//! Scenario files: lanes, ego with expert trajectory and route, scripted
//! agents, and per-scenario thresholds.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::DEFAULT_DENSIFY_SPACING;
use crate::lanes::DEFAULT_LANE_WIDTH;
use crate::ntps::DEFAULT_BETA;
use crate::stps::DEFAULT_SNAP_THRESHOLD;
use crate::{AgentTrack, Lane, Polyline, Pose2, Trajectory};

fn default_densify() -> f64 {
    DEFAULT_DENSIFY_SPACING
}

fn default_wheelbase() -> f64 {
    2.7
}

fn default_w_snap() -> f64 {
    DEFAULT_SNAP_THRESHOLD
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub dt_plan: f64,
    pub horizon_steps: usize,
    pub default_lane_width: f64,
    pub seed: u64,
    /// Maximum centerline vertex spacing enforced at load time.
    #[serde(default = "default_densify")]
    pub densify_spacing: f64,
}

impl Default for ScenarioMeta {
    fn default() -> Self {
        Self {
            dt_plan: 0.5,
            horizon_steps: 6,
            default_lane_width: DEFAULT_LANE_WIDTH,
            seed: 0,
            densify_spacing: DEFAULT_DENSIFY_SPACING,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoDims {
    pub width: f64,
    pub length: f64,
    #[serde(default = "default_wheelbase")]
    pub wheelbase: f64,
}

impl Default for EgoDims {
    fn default() -> Self {
        Self {
            width: 2.0,
            length: 4.5,
            wheelbase: default_wheelbase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    pub pose: Pose2,
    pub dims: EgoDims,
    pub speed: f64,
    /// Expert future positions; point `k` sits at `t0 + k * dt_plan`.
    pub expert_trajectory: Trajectory,
    pub command: String,
    pub route: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(default = "default_w_snap")]
    pub w_snap: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Overrides `meta.default_lane_width` for the lane filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_width: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            w_snap: DEFAULT_SNAP_THRESHOLD,
            beta: DEFAULT_BETA,
            lane_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub meta: ScenarioMeta,
    pub lanes: Vec<Lane>,
    pub ego: EgoSpec,
    #[serde(default)]
    pub agents: Vec<AgentTrack>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} must be > 0, got {v}")))
    }
}

impl ScenarioSpec {
    /// Lane width used by the relevant-lane filter.
    pub fn lane_width(&self) -> f64 {
        self.thresholds
            .lane_width
            .unwrap_or(self.meta.default_lane_width)
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Route lanes chained into one centerline.
    pub fn route_polyline(&self) -> Result<Polyline> {
        let mut out: Option<Polyline> = None;
        for id in &self.ego.route {
            let lane = self
                .lane(id)
                .ok_or_else(|| Error::Validation(format!("route lane `{id}` does not exist")))?;
            out = Some(match out {
                None => lane.centerline.clone(),
                Some(p) => p.concat(&lane.centerline),
            });
        }
        out.ok_or_else(|| Error::Validation("ego.route is empty".into()))
    }

    /// Expert points covering the first planning horizon.
    pub fn gt_window(&self) -> Result<Trajectory> {
        let n = self.meta.horizon_steps;
        let e = &self.ego.expert_trajectory;
        Trajectory::new(e.points()[..n.min(e.len())].to_vec(), e.dt(), e.t0())
    }

    /// Applies the load-time densification to every centerline.
    pub fn densify(&mut self) {
        let spacing = self.meta.densify_spacing;
        for lane in &mut self.lanes {
            lane.centerline = lane.centerline.densified(spacing);
        }
    }

    /// Checks every documented invariant; the error names the first one
    /// violated.
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        positive("meta.dt_plan", m.dt_plan)?;
        positive("meta.default_lane_width", m.default_lane_width)?;
        positive("meta.densify_spacing", m.densify_spacing)?;
        if m.horizon_steps == 0 {
            return Err(Error::Validation("meta.horizon_steps must be >= 1".into()));
        }
        if self.lanes.is_empty() {
            return Err(Error::Validation("lanes must not be empty".into()));
        }
        let mut ids = HashSet::new();
        for (i, lane) in self.lanes.iter().enumerate() {
            if !ids.insert(lane.id.as_str()) {
                return Err(Error::Validation(format!(
                    "lanes[{i}]: duplicate lane id `{}`",
                    lane.id
                )));
            }
            positive(&format!("lanes[{i}].width"), lane.width)?;
        }
        for lane in &self.lanes {
            for s in &lane.successors {
                if !ids.contains(s.as_str()) {
                    return Err(Error::Validation(format!(
                        "lane `{}` lists unknown successor `{s}`",
                        lane.id
                    )));
                }
            }
        }
        let ego = &self.ego;
        positive("ego.dims.width", ego.dims.width)?;
        positive("ego.dims.length", ego.dims.length)?;
        positive("ego.dims.wheelbase", ego.dims.wheelbase)?;
        if !(ego.speed >= 0.0 && ego.speed.is_finite()) {
            return Err(Error::Validation(format!(
                "ego.speed must be >= 0, got {}",
                ego.speed
            )));
        }
        if ego.route.is_empty() {
            return Err(Error::Validation("ego.route must not be empty".into()));
        }
        for id in &ego.route {
            if !ids.contains(id.as_str()) {
                return Err(Error::Validation(format!(
                    "ego.route references missing lane id `{id}`"
                )));
            }
        }
        let expert = &ego.expert_trajectory;
        if expert.len() < m.horizon_steps {
            return Err(Error::Validation(format!(
                "ego.expert_trajectory has {} points, fewer than horizon_steps = {}",
                expert.len(),
                m.horizon_steps
            )));
        }
        if expert.dt() != m.dt_plan {
            return Err(Error::Validation(format!(
                "ego.expert_trajectory.dt = {} differs from meta.dt_plan = {}",
                expert.dt(),
                m.dt_plan
            )));
        }
        let mut agent_ids = HashSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !agent_ids.insert(a.id.as_str()) {
                return Err(Error::Validation(format!(
                    "agents[{i}]: duplicate agent id `{}`",
                    a.id
                )));
            }
            a.validate()?;
            if let Some(m_bad) = a
                .modes
                .iter()
                .position(|md| md.trajectory.dt() != m.dt_plan)
            {
                return Err(Error::Validation(format!(
                    "agent `{}` mode {m_bad}: dt differs from meta.dt_plan",
                    a.id
                )));
            }
        }
        let t = &self.thresholds;
        positive("thresholds.w_snap", t.w_snap)?;
        positive("thresholds.beta", t.beta)?;
        if let Some(w) = t.lane_width {
            positive("thresholds.lane_width", w)?;
        }
        Ok(())
    }

    /// Parses, densifies and validates a scenario from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: ScenarioSpec = parse_json(text)?;
        spec.densify();
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        super::to_json(self)
    }
}

/// JSON parse with the failing field path and position in the error.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    ScenarioSpec::from_json(&text)
}
