//! Planners queried by the closed loop: expert replay, centerline following
//! with free-distance lane choice, and the same followed by the supervision
//! optimizer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use super::vehicle::EgoState;
use crate::error::{Error, Result};
use crate::geometry::{
    headings_from_offsets, nearest_point_discrete, project_point, sat_overlap, Point2,
};
use crate::io::scenario::ScenarioSpec;
use crate::lanes::{filter_relevant_lanes, Slot};
use crate::losses::{optimize_trajectory, OptimizeProblem};
use crate::ntps::{ModeSelection, PredictionMode};
use crate::scalar::normalize_angle;
use crate::{
    AgentTrack, Lane, LossWeights, OptimizerConfig, OrientedBox, Polyline, Pose2, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PlannerKind {
    /// Expert trajectory with Gaussian lateral noise of `noise_sigma` meters.
    Replay {
        noise_sigma: f64,
    },
    CenterlineFollow,
    PgsFull,
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Replay { .. } => "replay",
            PlannerKind::CenterlineFollow => "centerline",
            PlannerKind::PgsFull => "pgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Distance checked ahead of the ego along each candidate lane.
    pub free_lookahead: f64,
    pub free_sample_spacing: f64,
    /// Deceleration assumed when limiting speed by free distance.
    pub comfort_decel: f64,
    /// Gap kept to the first blocked position.
    pub stop_margin: f64,
    /// Desired speed; `None` uses the scenario's initial ego speed.
    pub cruise_speed: Option<f64>,
    pub mode_selection: ModeSelection<f64>,
    pub optimizer: OptimizerConfig,
    pub weights: LossWeights,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            free_lookahead: 50.0,
            free_sample_spacing: 0.5,
            comfort_decel: 3.0,
            stop_margin: 2.0,
            cruise_speed: None,
            mode_selection: ModeSelection::TopScore,
            optimizer: OptimizerConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

/// What a planner sees at one replanning instant.
#[derive(Debug, Clone, Copy)]
pub struct WorldSnapshot<'a> {
    pub scenario: &'a ScenarioSpec,
    pub ego: &'a EgoState,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub trajectory: Trajectory,
    pub target_speed: f64,
    pub chosen_lane: Option<Slot>,
    pub chosen_lane_id: Option<String>,
    /// Free distance per slot `(Left, Current, Right)`; absent slots are `None`.
    pub free_distance: Option<[Option<f64>; 3]>,
}

/// Position and heading of an agent at `time`, following its top mode.
pub fn agent_pose_at(agent: &AgentTrack, time: f64) -> Pose2 {
    let traj = &agent.top_mode().trajectory;
    let pos = traj.sample(time);
    let headings = headings_from_offsets(traj.points(), agent.initial_pose.heading);
    let u = ((time - traj.t0()) / traj.dt()).floor().max(0.0) as usize;
    Pose2::new(pos, headings[u.min(headings.len() - 1)])
}

/// Agents as seen from `time`: current pose, and every mode cut to the
/// `horizon` steps after `time`.
pub fn predicted_tracks(scenario: &ScenarioSpec, time: f64) -> Result<Vec<AgentTrack>> {
    let dt = scenario.meta.dt_plan;
    let h = scenario.meta.horizon_steps;
    scenario
        .agents
        .iter()
        .map(|a| {
            let modes = a
                .modes
                .iter()
                .map(|m| {
                    Ok(PredictionMode {
                        score: m.score,
                        trajectory: m.trajectory.window(time + dt, h)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AgentTrack {
                id: a.id.clone(),
                width: a.width,
                length: a.length,
                initial_pose: agent_pose_at(a, time),
                speed: a.speed,
                modes,
            })
        })
        .collect()
}

/// Lanes whose local direction is within 90 degrees of `heading`.
fn heading_compatible(lanes: &[Lane], pose: &Pose2) -> Vec<Lane> {
    lanes
        .iter()
        .filter(|l| {
            let nv = nearest_point_discrete(&l.centerline, pose.position);
            let pts = l.centerline.points();
            let i = nv.index.min(pts.len() - 2);
            let dir = (pts[i + 1] - pts[i]).angle();
            normalize_angle(dir - pose.heading).cos() > 0.0
        })
        .cloned()
        .collect()
}

/// Centerline of `lane` extended through successors, preferring route lanes.
pub fn lane_path(scenario: &ScenarioSpec, lane: &Lane, min_length: f64) -> Polyline {
    let route: HashSet<&str> = scenario.ego.route.iter().map(String::as_str).collect();
    let mut seen = HashSet::from([lane.id.as_str()]);
    let mut path = lane.centerline.clone();
    let mut cur = lane;
    while path.length() < min_length {
        let next = cur
            .successors
            .iter()
            .find(|s| route.contains(s.as_str()) && !seen.contains(s.as_str()))
            .or_else(|| cur.successors.iter().find(|s| !seen.contains(s.as_str())))
            .and_then(|id| scenario.lane(id));
        match next {
            Some(n) => {
                seen.insert(n.id.as_str());
                path = path.concat(&n.centerline);
                cur = n;
            }
            None => break,
        }
    }
    path
}

/// Like `point_at`, but continues straight past the end.
pub fn point_along(path: &Polyline, s: f64) -> Point2<f64> {
    let len = path.length();
    if s <= len {
        return path.point_at(s);
    }
    path.last() + Point2::from_angle(path.heading_at(len)) * (s - len)
}

/// Footprints of every agent now and over its selected predicted modes.
fn obstacle_boxes(
    tracks: &[AgentTrack],
    selection: ModeSelection<f64>,
) -> Result<Vec<OrientedBox>> {
    let mut out = Vec::new();
    for a in tracks {
        out.push(OrientedBox::from_dims(
            a.initial_pose.position,
            a.width,
            a.length,
            a.initial_pose.heading,
        )?);
        for traj in a.selected_modes(selection) {
            let seq =
                crate::ntps::build_future_boxes(traj, a.width, a.length, a.initial_pose.heading)?;
            out.extend(seq.boxes);
        }
    }
    Ok(out)
}

fn blocked(b: &OrientedBox, obstacles: &[OrientedBox]) -> bool {
    let rb = b.half_width.hypot(b.half_length);
    obstacles.iter().any(|o| {
        let ro = o.half_width.hypot(o.half_length);
        b.center.distance(o.center) <= rb + ro && sat_overlap(b, o)
    })
}

/// Distance along `path` from the ego's projection to the first ego-sized
/// footprint that overlaps an obstacle, capped at the lookahead.
fn free_distance(
    path: &Polyline,
    ego: &EgoState,
    obstacles: &[OrientedBox],
    cfg: &PlannerConfig,
) -> Result<f64> {
    let s0 = project_point(path, ego.pose.position).arc_length;
    let n = (cfg.free_lookahead / cfg.free_sample_spacing).ceil() as usize;
    let len = path.length();
    for k in 0..=n {
        let s = s0 + k as f64 * cfg.free_sample_spacing;
        let b = OrientedBox::from_dims(
            point_along(path, s),
            ego.width,
            ego.length,
            path.heading_at(s.min(len)),
        )?;
        if blocked(&b, obstacles) {
            return Ok(k as f64 * cfg.free_sample_spacing);
        }
    }
    Ok(cfg.free_lookahead)
}

struct LaneChoice {
    slot: Slot,
    lane_id: String,
    path: Polyline,
    free: f64,
    all: [Option<f64>; 3],
}

fn choose_lane(
    snap: &WorldSnapshot<'_>,
    tracks: &[AgentTrack],
    cfg: &PlannerConfig,
) -> Result<LaneChoice> {
    let sc = snap.scenario;
    let pool = heading_compatible(&sc.lanes, &snap.ego.pose);
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    let relevant = filter_relevant_lanes(&pool, &snap.ego.pose, sc.lane_width())?;
    if relevant.is_empty() {
        return Err(Error::NoCandidates);
    }
    let obstacles = obstacle_boxes(tracks, cfg.mode_selection)?;
    let mut all = [None; 3];
    let mut best: Option<LaneChoice> = None;
    for slot in Slot::PREFERENCE {
        let Some(cand) = relevant.get(slot) else {
            continue;
        };
        let lane = pool
            .iter()
            .find(|l| l.id == cand.lane_id)
            .expect("candidate from pool");
        let path = lane_path(sc, lane, cfg.free_lookahead * 2.0 + 20.0);
        let free = free_distance(&path, snap.ego, &obstacles, cfg)?;
        all[slot.index()] = Some(free);
        if best.as_ref().map_or(true, |b| free > b.free) {
            best = Some(LaneChoice {
                slot,
                lane_id: lane.id.clone(),
                path,
                free,
                all,
            });
        }
    }
    let mut choice = best.expect("non-empty set");
    choice.all = all;
    Ok(choice)
}

fn cruise(snap: &WorldSnapshot<'_>, cfg: &PlannerConfig) -> f64 {
    cfg.cruise_speed.unwrap_or(snap.scenario.ego.speed)
}

/// Constant-speed points along `path` from the ego's projection.
fn follow_path(snap: &WorldSnapshot<'_>, path: &Polyline, speed: f64) -> Result<Trajectory> {
    let meta = &snap.scenario.meta;
    let s0 = project_point(path, snap.ego.pose.position).arc_length;
    let step = speed * meta.dt_plan;
    // A stopped plan still needs distinct headings; nudge the points apart.
    let step = step.max(1e-3);
    let points = (1..=meta.horizon_steps)
        .map(|k| point_along(path, s0 + step * k as f64))
        .collect();
    Trajectory::new(points, meta.dt_plan, snap.time + meta.dt_plan)
}

fn centerline_plan(
    snap: &WorldSnapshot<'_>,
    tracks: &[AgentTrack],
    cfg: &PlannerConfig,
) -> Result<(Plan, Polyline)> {
    let choice = choose_lane(snap, tracks, cfg)?;
    let room = (choice.free - cfg.stop_margin).max(0.0);
    let speed = cruise(snap, cfg).min((2.0 * cfg.comfort_decel * room).sqrt());
    let trajectory = follow_path(snap, &choice.path, speed)?;
    Ok((
        Plan {
            trajectory,
            target_speed: speed,
            chosen_lane: Some(choice.slot),
            chosen_lane_id: Some(choice.lane_id),
            free_distance: Some(choice.all),
        },
        choice.path,
    ))
}

fn replay_plan<R: Rng + ?Sized>(snap: &WorldSnapshot<'_>, sigma: f64, rng: &mut R) -> Result<Plan> {
    let meta = &snap.scenario.meta;
    let expert = &snap.scenario.ego.expert_trajectory;
    let window = expert.window(snap.time + meta.dt_plan, meta.horizon_steps)?;
    let mut points = window.points().to_vec();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
        let headings = headings_from_offsets(&points, snap.ego.pose.heading);
        for (p, h) in points.iter_mut().zip(headings) {
            *p = *p + Point2::from_angle(h).perp() * normal.sample(rng);
        }
    }
    let mut travel = snap.ego.pose.position.distance(points[0]);
    travel += points.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();
    let target_speed = travel / (points.len() as f64 * meta.dt_plan);
    Ok(Plan {
        trajectory: window.with_points(points)?,
        target_speed,
        chosen_lane: None,
        chosen_lane_id: None,
        free_distance: None,
    })
}

fn pgs_plan(snap: &WorldSnapshot<'_>, tracks: &[AgentTrack], cfg: &PlannerConfig) -> Result<Plan> {
    let (base, path) = centerline_plan(snap, tracks, cfg)?;
    let sc = snap.scenario;
    let mut init = base.trajectory.clone();
    for attempt in 0..2 {
        let problem = OptimizeProblem {
            init: &init,
            target_centerline: &path,
            gt: &base.trajectory,
            agents: tracks,
            ego_width: snap.ego.width,
            ego_length: snap.ego.length,
            ego_heading: snap.ego.pose.heading,
            w_snap: sc.thresholds.w_snap,
            beta: sc.thresholds.beta,
        };
        let mut opt_cfg = cfg.optimizer;
        opt_cfg.mode_selection = cfg.mode_selection;
        match optimize_trajectory(&problem, &cfg.weights, &opt_cfg) {
            Ok(res) => {
                return Ok(Plan {
                    trajectory: res.trajectory,
                    ..base
                })
            }
            Err(Error::DegenerateDistance { .. }) if attempt == 0 => {
                let nudge = Point2::from_angle(snap.ego.pose.heading).perp() * 0.01;
                let pts = init.points().iter().map(|&p| p + nudge).collect();
                init = init.with_points(pts)?;
            }
            Err(Error::DegenerateDistance { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(base)
}

/// Produces the next horizon of ego positions.
pub fn plan<R: Rng + ?Sized>(
    snap: &WorldSnapshot<'_>,
    kind: PlannerKind,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<Plan> {
    match kind {
        PlannerKind::Replay { noise_sigma } => replay_plan(snap, noise_sigma, rng),
        PlannerKind::CenterlineFollow => {
            let tracks = predicted_tracks(snap.scenario, snap.time)?;
            Ok(centerline_plan(snap, &tracks, cfg)?.0)
        }
        PlannerKind::PgsFull => {
            let tracks = predicted_tracks(snap.scenario, snap.time)?;
            pgs_plan(snap, &tracks, cfg)
        }
    }
}

/// Plan along the route centerline, used when no lane is near enough to
/// choose from.
pub fn route_plan(snap: &WorldSnapshot<'_>, cfg: &PlannerConfig) -> Result<Plan> {
    let route = snap.scenario.route_polyline()?;
    let speed = cruise(snap, cfg);
    Ok(Plan {
        trajectory: follow_path(snap, &route, speed)?,
        target_speed: speed,
        chosen_lane: None,
        chosen_lane_id: None,
        free_distance: None,
    })
}

/// Constant-speed trajectory along the current lane from the scenario's
/// initial ego state: the plan a lane keeper would make.
pub fn lane_keep_trajectory(scenario: &ScenarioSpec) -> Result<Trajectory> {
    let ego = EgoState::from_scenario(scenario);
    let snap = WorldSnapshot {
        scenario,
        ego: &ego,
        time: 0.0,
    };
    let pool = heading_compatible(&scenario.lanes, &ego.pose);
    let relevant = filter_relevant_lanes(&pool, &ego.pose, scenario.lane_width())?;
    let cand = relevant.get(Slot::Current).ok_or(Error::NoCandidates)?;
    let lane = pool
        .iter()
        .find(|l| l.id == cand.lane_id)
        .expect("candidate from pool");
    let path = lane_path(
        scenario,
        lane,
        ego.speed * snap.scenario.meta.dt_plan * 2.0 * scenario.meta.horizon_steps as f64 + 1.0,
    );
    follow_path(&snap, &path, ego.speed)
}
