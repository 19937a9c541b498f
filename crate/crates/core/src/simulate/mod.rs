//! Closed-loop harness: a kinematic ego tracks planner output with PID
//! control while scripted agents replay their top predicted mode.

mod control;
mod planner;
mod vehicle;

pub use control::{pid_aim_point, pid_control, PIDConfig, PidGains, PidState};
pub use planner::{
    agent_pose_at, lane_keep_trajectory, lane_path, plan, point_along, predicted_tracks,
    route_plan, Plan, PlannerConfig, PlannerKind, WorldSnapshot,
};
pub use vehicle::{step_ego, Control, EgoState, VehicleParams};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_point, sat_overlap, Point2};
use crate::io::scenario::ScenarioSpec;
use crate::lanes::Slot;
use crate::{OrientedBox, Polyline, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Stop after this many seconds; `None` derives a limit from route
    /// length and initial speed.
    pub max_time: Option<f64>,
    /// Mixed with the scenario seed for planner noise.
    pub seed: u64,
    /// The run completes once this close to the route end.
    pub route_end_margin: f64,
    pub vehicle: VehicleParams,
    pub pid: PIDConfig,
    pub planner: PlannerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_time: None,
            seed: 0,
            route_end_margin: 2.0,
            vehicle: VehicleParams::default(),
            pid: PIDConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub time: f64,
    pub ego: EgoState,
    pub control: Control,
    pub planned: Trajectory,
    pub chosen_lane: Option<Slot>,
    /// One flag per scenario agent, in file order.
    pub collision_flags: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Collision,
    RouteComplete,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Collision onsets (an overlap that was absent the step before).
    pub collisions: usize,
    /// Fraction of steps with the ego farther than half a lane width from
    /// every centerline.
    pub lane_departure_fraction: f64,
    /// Progress along the route from the start position, in `[0, 1]`.
    pub route_completion: f64,
    pub success: bool,
    pub steps: usize,
    pub sim_time: f64,
    pub mean_speed: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub metrics: Metrics,
    pub trace: Vec<StepTrace>,
}

fn agent_boxes(sc: &ScenarioSpec, time: f64) -> Result<Vec<OrientedBox>> {
    sc.agents
        .iter()
        .map(|a| {
            let p = agent_pose_at(a, time);
            OrientedBox::from_dims(p.position, a.width, a.length, p.heading)
        })
        .collect()
}

/// Ego position followed by the planned points.
fn tracking_path(ego: &EgoState, planned: &Trajectory) -> Result<Polyline> {
    let mut pts = vec![ego.pose.position];
    for &p in planned.points() {
        if pts
            .last()
            .map_or(true, |q: &Point2<f64>| q.distance(p) > 1e-3)
        {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        pts.push(ego.pose.position + Point2::from_angle(ego.pose.heading));
    }
    Polyline::new(pts)
}

fn off_every_lane(sc: &ScenarioSpec, p: Point2<f64>) -> bool {
    sc.lanes
        .iter()
        .all(|l| project_point(&l.centerline, p).distance > 0.5 * l.width)
}

/// Runs one scenario to collision, route completion or timeout.
pub fn run(scenario: &ScenarioSpec, kind: PlannerKind, cfg: &SimConfig) -> Result<SimOutcome> {
    scenario.validate()?;
    if !(cfg.dt > 0.0) || !(cfg.route_end_margin >= 0.0) {
        return Err(Error::InvalidConfig(
            "dt must be > 0 and margin >= 0".into(),
        ));
    }
    let route = scenario.route_polyline()?;
    let route_len = route.length();
    let mut ego = EgoState::from_scenario(scenario);
    let start = project_point(&route, ego.pose.position).arc_length;
    let remaining = (route_len - start).max(1e-9);
    let max_time = cfg
        .max_time
        .unwrap_or(2.0 * remaining / ego.speed.max(2.0) + 10.0);
    let dt_plan = scenario.meta.dt_plan;
    let replan_every = ((dt_plan / cfg.dt).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(
        scenario.meta.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ cfg.seed,
    );

    let mut pid = PidState::default();
    let mut trace = Vec::new();
    let mut current: Option<(Plan, Polyline)> = None;
    let mut prev_hits = vec![false; scenario.agents.len()];
    let mut collisions = 0;
    let mut departures = 0usize;
    let mut progress = start;
    let mut speed_sum = 0.0;
    let mut step = 0usize;
    let termination = loop {
        let time = step as f64 * cfg.dt;
        if step % replan_every == 0 {
            let snap = WorldSnapshot {
                scenario,
                ego: &ego,
                time,
            };
            let p = match plan(&snap, kind, &cfg.planner, &mut rng) {
                Err(Error::NoCandidates) => route_plan(&snap, &cfg.planner)?,
                other => other?,
            };
            let path = tracking_path(&ego, &p.trajectory)?;
            current = Some((p, path));
        }
        let (p, path) = current.as_ref().expect("planned at step 0");
        let aim = pid_aim_point(path, &ego, &cfg.pid);
        let control = pid_control(&ego, aim, p.target_speed, &cfg.pid, &mut pid, cfg.dt);
        ego = step_ego(&ego, &control, cfg.dt, &cfg.vehicle);
        step += 1;
        let now = step as f64 * cfg.dt;

        let ego_box = ego.footprint()?;
        let hits: Vec<bool> = agent_boxes(scenario, now)?
            .iter()
            .map(|b| sat_overlap(&ego_box, b))
            .collect();
        collisions += hits
            .iter()
            .zip(&prev_hits)
            .filter(|(h, was)| **h && !**was)
            .count();
        if off_every_lane(scenario, ego.pose.position) {
            departures += 1;
        }
        progress = progress.max(project_point(&route, ego.pose.position).arc_length);
        speed_sum += ego.speed;
        trace.push(StepTrace {
            step,
            time: now,
            ego,
            control,
            planned: p.trajectory.clone(),
            chosen_lane: p.chosen_lane,
            collision_flags: hits.clone(),
        });
        let any_hit = hits.iter().any(|&h| h);
        prev_hits = hits;
        if any_hit {
            break Termination::Collision;
        }
        if progress >= route_len - cfg.route_end_margin {
            break Termination::RouteComplete;
        }
        if now >= max_time - 1e-9 {
            break Termination::Timeout;
        }
    };

    let route_completion = if termination == Termination::RouteComplete {
        1.0
    } else {
        ((progress - start) / (route_len - cfg.route_end_margin - start).max(1e-9)).clamp(0.0, 1.0)
    };
    let metrics = Metrics {
        collisions,
        lane_departure_fraction: departures as f64 / step as f64,
        route_completion,
        success: collisions == 0 && route_completion >= 0.95,
        steps: step,
        sim_time: step as f64 * cfg.dt,
        mean_speed: speed_sum / step as f64,
        termination,
    };
    Ok(SimOutcome { metrics, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{generate, ScenarioKind};
    use rand::SeedableRng;

    fn snapshot_plan(sc: &ScenarioSpec, kind: PlannerKind) -> Plan {
        let ego = EgoState::from_scenario(sc);
        let snap = WorldSnapshot {
            scenario: sc,
            ego: &ego,
            time: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        plan(&snap, kind, &PlannerConfig::default(), &mut rng).unwrap()
    }

    #[test]
    fn empty_road_keeps_current_lane() {
        let sc = generate(ScenarioKind::Straight3, 0).unwrap();
        let p = snapshot_plan(&sc, PlannerKind::CenterlineFollow);
        assert_eq!(p.chosen_lane, Some(Slot::Current));
        assert_eq!(p.free_distance, Some([Some(50.0), Some(50.0), Some(50.0)]));
    }

    #[test]
    fn stopped_car_ahead_picks_left() {
        let sc = generate(ScenarioKind::OvertakeSnapshot, 0).unwrap();
        let car = sc.agents[0].initial_pose.position.x;
        // Ego-sized boxes along y = 0 from x = 0 first touch the parked car
        // once their centers are a full car length short of it.
        let blocked_at = ((car - 4.5) / 0.5).ceil() * 0.5;
        let p = snapshot_plan(&sc, PlannerKind::CenterlineFollow);
        let free = p.free_distance.unwrap();
        assert!((free[Slot::Current.index()].unwrap() - blocked_at).abs() < 1e-9);
        assert_eq!(free[Slot::Left.index()], Some(50.0));
        assert_eq!(p.chosen_lane, Some(Slot::Left));
        assert!(p
            .trajectory
            .points()
            .iter()
            .all(|q| (q.y - 3.5).abs() < 1e-9));
    }

    #[test]
    fn noiseless_replay_is_the_expert() {
        let sc = generate(ScenarioKind::Curve, 1).unwrap();
        let p = snapshot_plan(&sc, PlannerKind::Replay { noise_sigma: 0.0 });
        assert_eq!(p.trajectory, sc.gt_window().unwrap());
    }

    #[test]
    fn straight_road_lane_follow_succeeds() {
        let sc = generate(ScenarioKind::Straight3, 0).unwrap();
        let out = run(&sc, PlannerKind::CenterlineFollow, &SimConfig::default()).unwrap();
        let m = &out.metrics;
        assert!(m.success);
        assert_eq!(m.collisions, 0);
        assert_eq!(m.lane_departure_fraction, 0.0);
        assert_eq!(m.termination, Termination::RouteComplete);
    }

    #[test]
    fn replaying_colliding_expert_collides() {
        let sc = generate(ScenarioKind::Overtake, 0).unwrap();
        let out = run(
            &sc,
            PlannerKind::Replay { noise_sigma: 0.0 },
            &SimConfig::default(),
        )
        .unwrap();
        assert!(out.metrics.collisions >= 1);
        assert!(!out.metrics.success);
        assert_eq!(out.metrics.termination, Termination::Collision);
        assert!(out.trace.last().unwrap().collision_flags[0]);
    }

    #[test]
    fn runs_are_deterministic() {
        let sc = generate(ScenarioKind::Merge, 4).unwrap();
        for kind in [
            PlannerKind::Replay { noise_sigma: 0.3 },
            PlannerKind::PgsFull,
        ] {
            let a = run(&sc, kind, &SimConfig::default()).unwrap();
            let b = run(&sc, kind, &SimConfig::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trace_rows_are_physical_and_metrics_bounded() {
        let cfg = SimConfig::default();
        for kind in [
            ScenarioKind::Curve,
            ScenarioKind::Overtake,
            ScenarioKind::Intersection,
        ] {
            let sc = generate(kind, 2).unwrap();
            for planner in [
                PlannerKind::Replay { noise_sigma: 0.3 },
                PlannerKind::PgsFull,
            ] {
                let out = run(&sc, planner, &cfg).unwrap();
                let mut prev = EgoState::from_scenario(&sc);
                for row in &out.trace {
                    let c = row.control;
                    assert!((-1.0..=1.0).contains(&c.steer));
                    assert!((0.0..=1.0).contains(&c.throttle) && (0.0..=1.0).contains(&c.brake));
                    let moved = row.ego.pose.position.distance(prev.pose.position);
                    let bound = prev.speed * cfg.dt + 0.5 * cfg.vehicle.max_accel * cfg.dt * cfg.dt;
                    assert!(moved <= bound + 1e-12);
                    assert!(row.ego.speed >= 0.0);
                    prev = row.ego;
                }
                let m = &out.metrics;
                assert!((0.0..=1.0).contains(&m.lane_departure_fraction));
                assert!((0.0..=1.0).contains(&m.route_completion));
                assert_eq!(m.steps, out.trace.len());
            }
        }
    }

    #[test]
    fn pgs_without_agents_stays_near_route() {
        for kind in [
            ScenarioKind::Straight3,
            ScenarioKind::Curve,
            ScenarioKind::Intersection,
        ] {
            let sc = generate(kind, 5).unwrap();
            let out = run(&sc, PlannerKind::PgsFull, &SimConfig::default()).unwrap();
            let route = sc.route_polyline().unwrap();
            let half = 0.5 * sc.lane_width();
            for row in out.trace.iter().filter(|r| r.time > 5.0) {
                let d = project_point(&route, row.ego.pose.position).distance;
                assert!(d <= half, "{kind}: {d} at t = {}", row.time);
            }
            assert!(out.metrics.success, "{kind}");
        }
    }
}
