//! Deterministic synthetic scenarios. The same kind and seed always produce
//! the same file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::str::FromStr;

use super::scenario::{EgoDims, EgoSpec, ScenarioMeta, ScenarioSpec, Thresholds};
use crate::error::{Error, Result};
use crate::geometry::{headings_from_offsets, Point2};
use crate::simulate::point_along;
use crate::{AgentTrack, Lane, Polyline, Pose2, PredictionMode, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Straight3,
    Curve,
    Intersection,
    Overtake,
    Merge,
    /// Single planning instant mid lane change past a parked car.
    OvertakeSnapshot,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Straight3,
        ScenarioKind::Curve,
        ScenarioKind::Intersection,
        ScenarioKind::Overtake,
        ScenarioKind::Merge,
        ScenarioKind::OvertakeSnapshot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Straight3 => "straight3",
            ScenarioKind::Curve => "curve",
            ScenarioKind::Intersection => "intersection",
            ScenarioKind::Overtake => "overtake",
            ScenarioKind::Merge => "merge",
            ScenarioKind::OvertakeSnapshot => "overtake_snapshot",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Validation(format!(
                    "unknown scenario kind `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

pub fn generate(kind: ScenarioKind, seed: u64) -> Result<ScenarioSpec> {
    let mut spec = match kind {
        ScenarioKind::Straight3 => straight3(seed),
        ScenarioKind::Curve => curve(seed),
        ScenarioKind::Intersection => intersection(seed),
        ScenarioKind::Overtake => overtake(seed),
        ScenarioKind::Merge => merge(seed),
        ScenarioKind::OvertakeSnapshot => overtake_snapshot(seed),
    }?;
    spec.densify();
    spec.validate()?;
    Ok(spec)
}

const DT: f64 = 0.5;
const HORIZON: usize = 6;
const W: f64 = 3.5;

fn rng_for(kind: ScenarioKind, seed: u64) -> ChaCha8Rng {
    let salt = kind
        .name()
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    ChaCha8Rng::seed_from_u64(seed ^ salt.rotate_left(17))
}

fn meta(seed: u64) -> ScenarioMeta {
    ScenarioMeta {
        dt_plan: DT,
        horizon_steps: HORIZON,
        default_lane_width: W,
        seed,
        ..ScenarioMeta::default()
    }
}

fn line(a: (f64, f64), b: (f64, f64)) -> Result<Polyline> {
    Polyline::new(vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)])
}

fn lane(id: &str, centerline: Polyline) -> Result<Lane> {
    Lane::new(id, centerline, W)
}

fn straight_lanes() -> Result<Vec<Lane>> {
    Ok(vec![
        lane("lane_left", line((-20.0, W), (200.0, W))?)?,
        lane("lane_center", line((-20.0, 0.0), (200.0, 0.0))?)?,
        lane("lane_right", line((-20.0, -W), (200.0, -W))?)?,
    ])
}

/// Number of planning steps to cover `distance` at `speed`, with slack for
/// slow runs.
fn steps_for(distance: f64, speed: f64) -> usize {
    ((2.0 * distance / speed.max(2.0) + 10.0) / DT).ceil() as usize + HORIZON + 1
}

/// Constant-speed expert along `path` starting at arc `s0`, with a smooth
/// AR(1) lateral wander. Point `k` sits at time `(k + 1) * dt`.
fn noisy_expert(
    path: &Polyline,
    s0: f64,
    speed: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let noise = Normal::new(0.0, 0.1).expect("valid sigma");
    let mut offset = 0.0;
    let centers: Vec<_> = (1..=n)
        .map(|k| point_along(path, s0 + speed * DT * k as f64))
        .collect();
    let headings = headings_from_offsets(&centers, path.heading_at(s0));
    let points = centers
        .iter()
        .zip(headings)
        .map(|(&c, h)| {
            offset = 0.8 * offset + noise.sample(rng);
            c + Point2::from_angle(h).perp() * offset
        })
        .collect();
    Trajectory::new(points, DT, DT)
}

/// Scripted agent motion along `path` from arc `s0`; point `k` at `k * dt`.
fn script(path: &Polyline, s0: f64, speed: f64, n: usize) -> Result<Trajectory> {
    let points = (0..n)
        .map(|k| point_along(path, s0 + speed * DT * k as f64))
        .collect();
    Trajectory::new(points, DT, 0.0)
}

fn agent(id: &str, modes: Vec<(f64, Trajectory)>, speed: f64) -> AgentTrack {
    let top = &modes[0].1;
    let heading = headings_from_offsets(top.points(), 0.0)[0];
    AgentTrack {
        id: id.into(),
        width: 2.0,
        length: 4.5,
        initial_pose: Pose2::new(top.points()[0], heading),
        speed,
        modes: modes
            .into_iter()
            .map(|(score, trajectory)| PredictionMode { score, trajectory })
            .collect(),
    }
}

fn ego(pose: Pose2, speed: f64, expert: Trajectory, command: &str, route: &[&str]) -> EgoSpec {
    EgoSpec {
        pose,
        dims: EgoDims::default(),
        speed,
        expert_trajectory: expert,
        command: command.into(),
        route: route.iter().map(|s| s.to_string()).collect(),
    }
}

fn spec(seed: u64, lanes: Vec<Lane>, ego: EgoSpec, agents: Vec<AgentTrack>) -> ScenarioSpec {
    ScenarioSpec {
        meta: meta(seed),
        lanes,
        ego,
        agents,
        thresholds: Thresholds::default(),
    }
}

fn straight3(seed: u64) -> Result<ScenarioSpec> {
    let mut rng = rng_for(ScenarioKind::Straight3, seed);
    let speed = 8.0 + rng.random_range(-0.5..0.5);
    let lanes = straight_lanes()?;
    let path = lanes[1].centerline.clone();
    let n = steps_for(200.0, speed);
    let expert = noisy_expert(&path, 20.0, speed, n, &mut rng)?;
    let pose = Pose2::new(Point2::new(0.0, 0.0), 0.0);
    Ok(spec(
        seed,
        lanes,
        ego(pose, speed, expert, "follow_lane", &["lane_center"]),
        vec![],
    ))
}

fn arc(center: Point2<f64>, r: f64, a0: f64, a1: f64, ccw_from_bottom: bool) -> Result<Polyline> {
    let n = ((a1 - a0).abs() * r).ceil().max(2.0) as usize;
    let points = (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            if ccw_from_bottom {
                center + Point2::new(a.sin(), -a.cos()) * r
            } else {
                center + Point2::new(a.cos(), a.sin()) * r
            }
        })
        .collect();
    Polyline::new(points)
}

fn curve(seed: u64) -> Result<ScenarioSpec> {
    let mut rng = rng_for(ScenarioKind::Curve, seed);
    let r = 60.0 + rng.random_range(-5.0..5.0);
    let speed = 8.0;
    let c = Point2::new(0.0, r);
    let (a0, a1) = (-20.0 / r, 170.0 / r);
    let lanes = vec![
        lane("lane_left", arc(c, r - W, a0, a1, true)?)?,
        lane("lane_center", arc(c, r, a0, a1, true)?)?,
        lane("lane_right", arc(c, r + W, a0, a1, true)?)?,
    ];
    let path = lanes[1].centerline.clone();
    let s0 = -a0 * r;
    let expert = noisy_expert(&path, s0, speed, steps_for(170.0, speed), &mut rng)?;
    let pose = Pose2::new(Point2::new(0.0, 0.0), 0.0);
    Ok(spec(
        seed,
        lanes,
        ego(pose, speed, expert, "follow_lane", &["lane_center"]),
        vec![],
    ))
}

fn intersection(seed: u64) -> Result<ScenarioSpec> {
    let mut rng = rng_for(ScenarioKind::Intersection, seed);
    let speed = 6.0 + rng.random_range(-0.5..0.0);
    let r = 12.0;
    let lanes = vec![
        lane("south_in", line((0.0, -60.0), (0.0, 0.0))?)?
            .with_successors(vec!["turn_left".into()]),
        lane(
            "turn_left",
            arc(
                Point2::new(-r, 0.0),
                r,
                0.0,
                std::f64::consts::FRAC_PI_2,
                false,
            )?,
        )?
        .with_successors(vec!["west_out".into()]),
        lane("west_out", line((-r, r), (-120.0, r))?)?,
        lane("north_in", line((-W, 60.0), (-W, 0.0))?)?,
    ];
    let route = ["south_in", "turn_left", "west_out"];
    let path = lanes[0]
        .centerline
        .concat(&lanes[1].centerline)
        .concat(&lanes[2].centerline);
    let expert = noisy_expert(
        &path,
        20.0,
        speed,
        steps_for(path.length() - 20.0, speed),
        &mut rng,
    )?;
    let pose = Pose2::new(Point2::new(0.0, -40.0), std::f64::consts::FRAC_PI_2);
    Ok(spec(
        seed,
        lanes,
        ego(pose, speed, expert, "turn_left", &route),
        vec![],
    ))
}

fn parked(x: f64, n: usize) -> Result<AgentTrack> {
    let path = line((x, 0.0), (x + 1.0, 0.0))?;
    Ok(agent(
        "parked",
        vec![(1.0, script(&path, 0.0, 0.0, n)?)],
        0.0,
    ))
}

fn overtake(seed: u64) -> Result<ScenarioSpec> {
    let mut rng = rng_for(ScenarioKind::Overtake, seed);
    let speed = 8.0 + rng.random_range(-0.5..0.5);
    let x_car = 60.0 + rng.random_range(-5.0..5.0);
    let lanes = straight_lanes()?;
    let path = lanes[1].centerline.clone();
    let n = steps_for(200.0, speed);
    let expert = noisy_expert(&path, 20.0, speed, n, &mut rng)?;
    let pose = Pose2::new(Point2::new(0.0, 0.0), 0.0);
    let agents = vec![parked(x_car, n)?];
    Ok(spec(
        seed,
        lanes,
        ego(pose, speed, expert, "follow_lane", &["lane_center"]),
        agents,
    ))
}

fn merge(seed: u64) -> Result<ScenarioSpec> {
    let mut rng = rng_for(ScenarioKind::Merge, seed);
    let speed = 9.0;
    let agent_speed = 6.0;
    let x_join = 75.0;
    let mut ramp_pts = vec![Point2::new(-20.0, -9.0)];
    for i in 0..=50 {
        let u = i as f64 / 50.0;
        let smooth = u * u * (3.0 - 2.0 * u);
        ramp_pts.push(Point2::new(25.0 + 50.0 * u, -9.0 * (1.0 - smooth)));
    }
    let ramp = Polyline::new(ramp_pts)?;
    let main_after = line((x_join, 0.0), (220.0, 0.0))?;
    let lanes = vec![
        lane("main_left", line((-20.0, W), (220.0, W))?)?,
        lane("main", line((-20.0, 0.0), (x_join, 0.0))?)?
            .with_successors(vec!["main_after".into()]),
        lane("main_after", main_after.clone())?,
        lane("ramp", ramp.clone())?.with_successors(vec!["main_after".into()]),
    ];
    let n = steps_for(220.0, speed);
    let ego_path = line((-20.0, 0.0), (220.0, 0.0))?;
    let expert = noisy_expert(&ego_path, 20.0, speed, n, &mut rng)?;

    // The merger reaches the junction shortly before the ego would.
    let lead = rng.random_range(0.5..1.5);
    let t_join = x_join / speed - lead;
    let agent_path = ramp.concat(&main_after);
    let s0 = ramp.length() - agent_speed * t_join;
    let merging = script(&agent_path, s0, agent_speed, n)?;
    let yielding = script(&agent_path, s0, 0.5 * agent_speed, n)?;
    let agents = vec![agent(
        "merger",
        vec![(0.8, merging), (0.2, yielding)],
        agent_speed,
    )];
    let pose = Pose2::new(Point2::new(0.0, 0.0), 0.0);
    Ok(spec(
        seed,
        lanes,
        ego(pose, speed, expert, "follow_lane", &["main", "main_after"]),
        agents,
    ))
}

fn overtake_snapshot(seed: u64) -> Result<ScenarioSpec> {
    let mut rng = rng_for(ScenarioKind::OvertakeSnapshot, seed);
    let speed = 8.0;
    let x_car = 20.0 + rng.random_range(-2.0..2.0);
    let lanes = straight_lanes()?;
    let n = 3 * HORIZON;
    // Expert swings from the drifting start onto the left lane.
    let points = (1..=n)
        .map(|k| {
            let x = speed * DT * k as f64;
            Point2::new(x, W - 2.5 * (-(k as f64) / 1.5).exp())
        })
        .collect();
    let expert = Trajectory::new(points, DT, DT)?;
    let pose = Pose2::new(Point2::new(0.0, 1.0), 0.15);
    let agents = vec![parked(x_car, n + 1)?];
    Ok(spec(
        seed,
        lanes,
        ego(pose, speed, expert, "change_left", &["lane_center"]),
        agents,
    ))
}
