//! Negative supervision from predicted agent footprints: future box
//! sequences, per-step SAT overlap events, and the hinge repulsion loss.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{headings_from_offsets, sat_overlap, OrientedBox, Point2, Pose2, Trajectory};
use crate::scalar::Scalar;

/// Default hinge margin in meters.
pub const DEFAULT_BETA: f64 = 3.0;
/// Default score cut for [`ModeSelection::AboveThreshold`].
pub const DEFAULT_MODE_THRESHOLD: f64 = 0.3;
/// Distances below this have no usable gradient direction.
pub const DEGENERATE_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct PredictionMode<T> {
    pub score: T,
    pub trajectory: Trajectory<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct AgentTrack<T> {
    pub id: String,
    pub width: T,
    pub length: T,
    pub initial_pose: Pose2<T>,
    pub speed: T,
    pub modes: Vec<PredictionMode<T>>,
}

/// Which predicted modes of an agent are checked for overlap.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum ModeSelection<T> {
    #[default]
    TopScore,
    /// Every mode scoring above the threshold; falls back to the top mode
    /// when none does.
    AboveThreshold(T),
}

impl<T: Scalar> AgentTrack<T> {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("agent `{}`: {msg}", self.id)));
        if !(self.width > T::zero() && self.length > T::zero()) {
            return fail(format!(
                "width and length must be > 0, got ({}, {})",
                self.width, self.length
            ));
        }
        if self.modes.is_empty() {
            return fail("needs at least one prediction mode".into());
        }
        let first = &self.modes[0].trajectory;
        for (i, m) in self.modes.iter().enumerate() {
            if !m.score.is_finite() {
                return fail(format!("mode {i} score is not finite"));
            }
            if m.trajectory.dt() != first.dt() || m.trajectory.len() != first.len() {
                return fail(format!(
                    "mode {i} does not share dt and horizon with mode 0"
                ));
            }
        }
        Ok(())
    }

    /// Highest-scoring mode; ties go to the lowest index.
    pub fn top_mode(&self) -> &PredictionMode<T> {
        let mut best = &self.modes[0];
        for m in &self.modes[1..] {
            if m.score > best.score {
                best = m;
            }
        }
        best
    }

    pub fn selected_modes(&self, selection: ModeSelection<T>) -> Vec<&Trajectory<T>> {
        match selection {
            ModeSelection::TopScore => vec![&self.top_mode().trajectory],
            ModeSelection::AboveThreshold(cut) => {
                let picked: Vec<_> = self
                    .modes
                    .iter()
                    .filter(|m| m.score > cut)
                    .map(|m| &m.trajectory)
                    .collect();
                if picked.is_empty() {
                    vec![&self.top_mode().trajectory]
                } else {
                    picked
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureBoxSequence<T> {
    pub boxes: Vec<OrientedBox<T>>,
}

/// One box per trajectory step, oriented along the trajectory offsets.
pub fn build_future_boxes<T: Scalar>(
    traj: &Trajectory<T>,
    width: T,
    length: T,
    fallback_heading: T,
) -> Result<FutureBoxSequence<T>> {
    let headings = headings_from_offsets(traj.points(), fallback_heading);
    let boxes = traj
        .points()
        .iter()
        .zip(headings)
        .map(|(&c, h)| OrientedBox::from_dims(c, width, length, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(FutureBoxSequence { boxes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent<T> {
    pub t: usize,
    pub agent_id: String,
    pub ego_point: Point2<T>,
    pub agent_point: Point2<T>,
    pub center_distance: T,
}

/// Overlap events sorted by `(t, agent_id)`, at most one per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSet<T> {
    pub events: Vec<CollisionEvent<T>>,
    pub beta: T,
}

impl<T: Scalar> CollisionSet<T> {
    pub fn empty(beta: T) -> Self {
        Self {
            events: Vec::new(),
            beta,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Distinct steps with at least one event.
    pub fn steps(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.events.iter().map(|e| e.t).collect();
        ts.dedup();
        ts
    }
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "beta must be > 0, got {beta}"
        )));
    }
    Ok(())
}

/// Records every `(step, agent)` pair whose boxes overlap. When one agent is
/// listed with several trajectories (multi-mode checking) the events are
/// unioned, keeping the closest center distance per pair.
pub fn detect_collisions<T: Scalar>(
    ego_boxes: &FutureBoxSequence<T>,
    ego_traj: &Trajectory<T>,
    agents: &[(&AgentTrack<T>, &Trajectory<T>)],
    beta: T,
) -> Result<CollisionSet<T>> {
    check_beta(beta)?;
    let n = ego_traj.len();
    if ego_boxes.boxes.len() != n {
        return Err(Error::HorizonMismatch {
            what: "ego boxes".into(),
            expected: n,
            got: ego_boxes.boxes.len(),
        });
    }
    let mut found: BTreeMap<(usize, String), CollisionEvent<T>> = BTreeMap::new();
    for (track, traj) in agents {
        if traj.len() != n || traj.dt() != ego_traj.dt() {
            return Err(Error::HorizonMismatch {
                what: format!("agent `{}`", track.id),
                expected: n,
                got: traj.len(),
            });
        }
        let boxes =
            build_future_boxes(traj, track.width, track.length, track.initial_pose.heading)?;
        for (t, (eb, ab)) in ego_boxes.boxes.iter().zip(&boxes.boxes).enumerate() {
            if !sat_overlap(eb, ab) {
                continue;
            }
            let ego_point = ego_traj.points()[t];
            let agent_point = traj.points()[t];
            let center_distance = ego_point.distance(agent_point);
            let event = CollisionEvent {
                t,
                agent_id: track.id.clone(),
                ego_point,
                agent_point,
                center_distance,
            };
            found
                .entry((t, track.id.clone()))
                .and_modify(|e| {
                    if center_distance < e.center_distance {
                        *e = event.clone();
                    }
                })
                .or_insert(event);
        }
    }
    Ok(CollisionSet {
        events: found.into_values().collect(),
        beta,
    })
}

/// Builds ego and agent boxes, aligns each selected agent mode to the ego
/// trajectory's timestamps, and runs [`detect_collisions`].
pub fn detect_collisions_with_tracks<T: Scalar>(
    ego_traj: &Trajectory<T>,
    ego_width: T,
    ego_length: T,
    ego_heading: T,
    tracks: &[AgentTrack<T>],
    selection: ModeSelection<T>,
    beta: T,
) -> Result<CollisionSet<T>> {
    let ego_boxes = build_future_boxes(ego_traj, ego_width, ego_length, ego_heading)?;
    let mut aligned = Vec::new();
    for track in tracks {
        for traj in track.selected_modes(selection) {
            if traj.dt() != ego_traj.dt() {
                return Err(Error::TimestepMismatch {
                    expected: ego_traj.dt().as_f64(),
                    got: traj.dt().as_f64(),
                });
            }
            aligned.push((track, traj.window(ego_traj.t0(), ego_traj.len())?));
        }
    }
    let pairs: Vec<_> = aligned.iter().map(|(a, t)| (*a, t)).collect();
    detect_collisions(&ego_boxes, ego_traj, &pairs, beta)
}

/// `sum over events of max(0, beta - center_distance)` using the stored
/// distances.
pub fn ntps_loss<T: Scalar>(collisions: &CollisionSet<T>) -> T {
    collisions
        .events
        .iter()
        .map(|e| (collisions.beta - e.center_distance).max(T::zero()))
        .fold(T::zero(), |a, b| a + b)
}

fn ego_point_at<T: Scalar>(ego_traj: &Trajectory<T>, t: usize) -> Result<Point2<T>> {
    ego_traj
        .points()
        .get(t)
        .copied()
        .ok_or_else(|| Error::HorizonMismatch {
            what: "collision event step".into(),
            expected: ego_traj.len(),
            got: t + 1,
        })
}

/// Hinge loss with the event set held fixed and distances recomputed from
/// `ego_traj`.
pub fn ntps_loss_at<T: Scalar>(
    ego_traj: &Trajectory<T>,
    collisions: &CollisionSet<T>,
) -> Result<T> {
    let mut total = T::zero();
    for e in &collisions.events {
        let d = ego_point_at(ego_traj, e.t)?.distance(e.agent_point);
        total += (collisions.beta - d).max(T::zero());
    }
    Ok(total)
}

/// Gradient of [`ntps_loss_at`] with respect to the ego points: each event
/// with `d < beta` adds the unit vector pointing from the ego point toward
/// the agent point.
pub fn ntps_gradient<T: Scalar>(
    ego_traj: &Trajectory<T>,
    collisions: &CollisionSet<T>,
) -> Result<Vec<Point2<T>>> {
    let mut grad = vec![Point2::zero(); ego_traj.len()];
    let tiny = T::lit(DEGENERATE_DISTANCE);
    for e in &collisions.events {
        let diff = ego_point_at(ego_traj, e.t)? - e.agent_point;
        let d = diff.norm();
        if d < tiny {
            return Err(Error::DegenerateDistance {
                t: e.t,
                agent_id: e.agent_id.clone(),
            });
        }
        if d < collisions.beta {
            grad[e.t] = grad[e.t] - diff / d;
        }
    }
    Ok(grad)
}
