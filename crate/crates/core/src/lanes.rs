//! Lane-level supervision: the relevant-lane filter around the ego, the
//! target-lane label derived from the expert trajectory, and the weighted
//! cross-entropy over the three lane slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_point_discrete, signed_side, Point2, Polyline, Pose2, Trajectory};
use crate::scalar::Scalar;

pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
/// Terminal window used to match the expert trajectory against candidates.
pub const DEFAULT_MATCH_HORIZON: f64 = 2.0;

/// Inverse-frequency class weights, listed as (current, left, right).
pub const INVERSE_FREQUENCY_WEIGHTS: [f64; 3] = [1.074, 32.480, 26.505];

/// Lane slot relative to the ego. Scores and gradients are laid out in
/// `(Left, Current, Right)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    Left,
    Current,
    Right,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Left, Slot::Current, Slot::Right];
    /// Resolution order when two slots match equally well.
    pub const PREFERENCE: [Slot; 3] = [Slot::Current, Slot::Left, Slot::Right];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Slot::Left => 0,
            Slot::Current => 1,
            Slot::Right => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Lane<T> {
    pub id: String,
    pub centerline: Polyline<T>,
    pub width: T,
    #[serde(default)]
    pub successors: Vec<String>,
}

impl<T: Scalar> Lane<T> {
    pub fn new(id: impl Into<String>, centerline: Polyline<T>, width: T) -> Result<Self> {
        let id = id.into();
        if !(width > T::zero()) || !width.is_finite() {
            return Err(Error::Validation(format!(
                "lane `{id}`: width must be > 0, got {width}"
            )));
        }
        Ok(Self {
            id,
            centerline,
            width,
            successors: Vec::new(),
        })
    }

    pub fn with_successors(mut self, successors: Vec<String>) -> Self {
        self.successors = successors;
        self
    }
}

/// A lane that passed the filter, with its distance `d` to the ego and the
/// side value `phi` evaluated at its nearest vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct LaneCandidate<T> {
    pub slot: Slot,
    pub lane_id: String,
    pub d: T,
    pub phi: T,
    pub nearest: Point2<T>,
    pub centerline: Polyline<T>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct RelevantLaneSet<T> {
    pub left: Option<LaneCandidate<T>>,
    pub current: Option<LaneCandidate<T>>,
    pub right: Option<LaneCandidate<T>>,
}

impl<T: Scalar> RelevantLaneSet<T> {
    pub fn get(&self, slot: Slot) -> Option<&LaneCandidate<T>> {
        match slot {
            Slot::Left => self.left.as_ref(),
            Slot::Current => self.current.as_ref(),
            Slot::Right => self.right.as_ref(),
        }
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut Option<LaneCandidate<T>> {
        match slot {
            Slot::Left => &mut self.left,
            Slot::Current => &mut self.current,
            Slot::Right => &mut self.right,
        }
    }

    /// Which slots hold a lane, in `(Left, Current, Right)` order.
    pub fn presence(&self) -> [bool; 3] {
        Slot::ALL.map(|s| self.get(s).is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.presence().iter().all(|p| !p)
    }

    /// Present candidates in tie-break preference order.
    pub fn candidates(&self) -> impl Iterator<Item = &LaneCandidate<T>> {
        Slot::PREFERENCE.into_iter().filter_map(|s| self.get(s))
    }

    pub fn slot_of(&self, lane_id: &str) -> Option<Slot> {
        self.candidates()
            .find(|c| c.lane_id == lane_id)
            .map(|c| c.slot)
    }
}

/// Assigns lanes to the current/left/right slots by their distance `d` to the
/// ego position: `d <= W/2` is current, `W/2 < d <= 3W/2` is left or right by
/// the sign of `phi`. Several lanes competing for a slot resolve to the
/// smallest `d`, then the lexicographically smallest id.
pub fn filter_relevant_lanes<T: Scalar>(
    lanes: &[Lane<T>],
    ego: &Pose2<T>,
    lane_width: T,
) -> Result<RelevantLaneSet<T>> {
    if lanes.is_empty() {
        return Err(Error::EmptyMap);
    }
    if !(lane_width > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "lane width must be > 0, got {lane_width}"
        )));
    }
    let half = lane_width * T::lit(0.5);
    let outer = lane_width * T::lit(1.5);
    let mut set = RelevantLaneSet::default();
    for lane in lanes {
        let nv = nearest_point_discrete(&lane.centerline, ego.position);
        let d = nv.distance;
        let phi = signed_side(nv.point - ego.position, ego.heading);
        let slot = if d <= half {
            Slot::Current
        } else if d <= outer && phi < T::zero() {
            Slot::Left
        } else if d <= outer && phi > T::zero() {
            Slot::Right
        } else {
            continue;
        };
        let entry = set.slot_mut(slot);
        let wins = match entry {
            None => true,
            Some(cur) => d < cur.d || (d == cur.d && lane.id < cur.lane_id),
        };
        if wins {
            *entry = Some(LaneCandidate {
                slot,
                lane_id: lane.id.clone(),
                d,
                phi,
                nearest: nv.point,
                centerline: lane.centerline.clone(),
            });
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetLaneLabel<T> {
    pub slot: Slot,
    pub mean_terminal_distance: T,
    /// Slots that were present when the label was built, `(Left, Current, Right)`.
    pub available: [bool; 3],
}

/// Number of trailing trajectory points covering `horizon` seconds.
pub fn window_len<T: Scalar>(horizon: T, dt: T) -> usize {
    let n = (horizon / dt - T::lit(1e-9)).ceil();
    n.to_usize().unwrap_or(0).max(1)
}

/// Picks the candidate whose centerline is closest, on average, to the last
/// `ceil(horizon / dt)` expert points. Ties resolve Current, then Left, then
/// Right.
pub fn label_target_lane<T: Scalar>(
    relevant: &RelevantLaneSet<T>,
    gt: &Trajectory<T>,
    match_horizon: T,
) -> Result<TargetLaneLabel<T>> {
    if relevant.is_empty() {
        return Err(Error::NoCandidates);
    }
    let window = window_len(match_horizon, gt.dt());
    if gt.len() < window {
        return Err(Error::TrajectoryTooShort {
            needed: window,
            got: gt.len(),
        });
    }
    let tail = &gt.points()[gt.len() - window..];
    let n = T::from_usize(window).expect("window");
    let mut best: Option<(Slot, T)> = None;
    for cand in relevant.candidates() {
        let mean = tail
            .iter()
            .map(|&p| nearest_point_discrete(&cand.centerline, p).distance)
            .sum::<T>()
            / n;
        if best.map_or(true, |(_, m)| mean < m) {
            best = Some((cand.slot, mean));
        }
    }
    let (slot, mean_terminal_distance) = best.expect("non-empty set");
    Ok(TargetLaneLabel {
        slot,
        mean_terminal_distance,
        available: relevant.presence(),
    })
}

/// Per-class multipliers for the lane-selection cross-entropy. Fields are
/// named by slot so the frequency-order mapping stays explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights<T> {
    pub current: T,
    pub left: T,
    pub right: T,
}

impl<T: Scalar> ClassWeights<T> {
    /// Weights given in (current, left, right) order.
    pub fn from_frequency_order(w: [T; 3]) -> Result<Self> {
        if w.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "class weights must be positive and finite".into(),
            ));
        }
        Ok(Self {
            current: w[0],
            left: w[1],
            right: w[2],
        })
    }

    pub fn inverse_frequency() -> Self {
        let [c, l, r] = INVERSE_FREQUENCY_WEIGHTS;
        Self {
            current: T::lit(c),
            left: T::lit(l),
            right: T::lit(r),
        }
    }

    pub fn get(&self, slot: Slot) -> T {
        match slot {
            Slot::Left => self.left,
            Slot::Current => self.current,
            Slot::Right => self.right,
        }
    }
}

/// How absent slots enter the softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SoftmaxMode {
    /// Absent slots keep their score position.
    #[default]
    AllSlots,
    /// Absent slots are excluded from the normalisation.
    Masked,
}

fn softmax_parts<T: Scalar>(
    scores: &[T; 3],
    label: &TargetLaneLabel<T>,
    mode: SoftmaxMode,
) -> Result<([bool; 3], T, T)> {
    if !label.available[label.slot.index()] {
        return Err(Error::LabelAbsent(label.slot));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("scores must be finite".into()));
    }
    let active = match mode {
        SoftmaxMode::AllSlots => [true; 3],
        SoftmaxMode::Masked => label.available,
    };
    let top = (0..3)
        .filter(|&i| active[i])
        .fold(None, |acc: Option<usize>, i| match acc {
            Some(j) if scores[j] >= scores[i] => Some(j),
            _ => Some(i),
        })
        .expect("at least one active slot");
    let max = scores[top];
    let rest: T = (0..3)
        .filter(|&i| active[i] && i != top)
        .map(|i| (scores[i] - max).exp())
        .sum();
    Ok((active, max, rest))
}

/// Cross-entropy of the softmaxed `(left, current, right)` scores against
/// the label, optionally scaled by the label's class weight.
pub fn mtps_loss<T: Scalar>(
    scores: [T; 3],
    label: &TargetLaneLabel<T>,
    class_weights: Option<&ClassWeights<T>>,
) -> Result<T> {
    mtps_loss_with_mode(scores, label, class_weights, SoftmaxMode::AllSlots)
}

pub fn mtps_loss_with_mode<T: Scalar>(
    scores: [T; 3],
    label: &TargetLaneLabel<T>,
    class_weights: Option<&ClassWeights<T>>,
    mode: SoftmaxMode,
) -> Result<T> {
    let (_, max, rest) = softmax_parts(&scores, label, mode)?;
    let w = class_weights.map_or(T::one(), |cw| cw.get(label.slot));
    Ok(w * ((max - scores[label.slot.index()]) + rest.ln_1p()))
}

/// `w[label] * (softmax(scores) - onehot(label))`.
pub fn mtps_score_gradient<T: Scalar>(
    scores: [T; 3],
    label: &TargetLaneLabel<T>,
    class_weights: Option<&ClassWeights<T>>,
) -> Result<[T; 3]> {
    mtps_score_gradient_with_mode(scores, label, class_weights, SoftmaxMode::AllSlots)
}

pub fn mtps_score_gradient_with_mode<T: Scalar>(
    scores: [T; 3],
    label: &TargetLaneLabel<T>,
    class_weights: Option<&ClassWeights<T>>,
    mode: SoftmaxMode,
) -> Result<[T; 3]> {
    let (active, max, rest) = softmax_parts(&scores, label, mode)?;
    let denom = T::one() + rest;
    let w = class_weights.map_or(T::one(), |cw| cw.get(label.slot));
    let target = label.slot.index();
    let mut g = [T::zero(); 3];
    for i in 0..3 {
        let p = if active[i] {
            (scores[i] - max).exp() / denom
        } else {
            T::zero()
        };
        let onehot = if i == target { T::one() } else { T::zero() };
        g[i] = w * (p - onehot);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyline;

    fn straight_lane(id: &str, y: f64) -> Lane<f64> {
        let cl = Polyline::new(vec![Point2::new(-50.0, y), Point2::new(50.0, y)])
            .unwrap()
            .densified(0.5);
        Lane::new(id, cl, 3.5).unwrap()
    }

    fn three_lanes() -> Vec<Lane<f64>> {
        vec![
            straight_lane("a_right", -3.5),
            straight_lane("b_mid", 0.0),
            straight_lane("c_left", 3.5),
        ]
    }

    fn ego() -> Pose2<f64> {
        Pose2::new(Point2::new(0.0, 0.0), 0.0)
    }

    #[test]
    fn filter_three_parallel_lanes() {
        let set = filter_relevant_lanes(&three_lanes(), &ego(), 3.5).unwrap();
        assert_eq!(set.current.as_ref().unwrap().lane_id, "b_mid");
        assert_eq!(set.left.as_ref().unwrap().lane_id, "c_left");
        assert_eq!(set.right.as_ref().unwrap().lane_id, "a_right");
        assert_eq!(set.current.as_ref().unwrap().d, 0.0);
        assert_eq!(set.left.as_ref().unwrap().d, 3.5);
        assert!(set.left.as_ref().unwrap().phi < 0.0);
        assert!(set.right.as_ref().unwrap().phi > 0.0);
    }

    #[test]
    fn filter_single_and_far_lane() {
        let set = filter_relevant_lanes(&[straight_lane("x", 0.0)], &ego(), 3.5).unwrap();
        assert!(set.current.is_some() && set.left.is_none() && set.right.is_none());

        let set = filter_relevant_lanes(&[straight_lane("far", 7.0)], &ego(), 3.5).unwrap();
        assert!(set.is_empty());

        assert!(matches!(
            filter_relevant_lanes::<f64>(&[], &ego(), 3.5),
            Err(Error::EmptyMap)
        ));
    }

    #[test]
    fn filter_slot_tie_breaks_by_distance_then_id() {
        let lanes = vec![
            straight_lane("z", 0.3),
            straight_lane("y", -0.2),
            straight_lane("b", 0.5),
            straight_lane("a", -0.5),
        ];
        let set = filter_relevant_lanes(&lanes, &ego(), 3.5).unwrap();
        assert_eq!(set.current.unwrap().lane_id, "y");

        let lanes = vec![straight_lane("b", 0.5), straight_lane("a", -0.5)];
        let set = filter_relevant_lanes(&lanes, &ego(), 3.5).unwrap();
        assert_eq!(set.current.unwrap().lane_id, "a");
    }

    fn traj(points: Vec<(f64, f64)>) -> Trajectory<f64> {
        Trajectory::new(
            points.into_iter().map(|(x, y)| Point2::new(x, y)).collect(),
            0.5,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn label_on_left_centerline() {
        let set = filter_relevant_lanes(&three_lanes(), &ego(), 3.5).unwrap();
        let gt = traj((1..=6).map(|k| (k as f64 * 2.0, 3.5)).collect());
        let label = label_target_lane(&set, &gt, 2.0).unwrap();
        assert_eq!(label.slot, Slot::Left);
        assert_eq!(label.mean_terminal_distance, 0.0);
    }

    #[test]
    fn label_keep_lane() {
        let set = filter_relevant_lanes(&three_lanes(), &ego(), 3.5).unwrap();
        let gt = traj((1..=6).map(|k| (k as f64 * 2.0, 0.0)).collect());
        assert_eq!(
            label_target_lane(&set, &gt, 2.0).unwrap().slot,
            Slot::Current
        );
    }

    #[test]
    fn label_lane_change_uses_terminal_window() {
        // y rises 0 -> 3.5 over six points; the 2 s window keeps y = 1.4, 2.1,
        // 2.8, 3.5: mean 2.45 m from the middle lane, 1.05 m from the left.
        let set = filter_relevant_lanes(&three_lanes(), &ego(), 3.5).unwrap();
        let gt = traj(
            (0..6)
                .map(|k| (k as f64 * 2.0, 3.5 * k as f64 / 5.0))
                .collect(),
        );
        let label = label_target_lane(&set, &gt, 2.0).unwrap();
        assert_eq!(label.slot, Slot::Left);
        assert!((label.mean_terminal_distance - 1.05).abs() < 1e-12);
    }

    #[test]
    fn label_errors() {
        let empty = RelevantLaneSet::<f64>::default();
        let gt = traj(vec![(0.0, 0.0); 6]);
        assert!(matches!(
            label_target_lane(&empty, &gt, 2.0),
            Err(Error::NoCandidates)
        ));
        let set = filter_relevant_lanes(&three_lanes(), &ego(), 3.5).unwrap();
        let short = traj(vec![(0.0, 0.0); 3]);
        assert!(matches!(
            label_target_lane(&set, &short, 2.0),
            Err(Error::TrajectoryTooShort { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn label_tie_prefers_current() {
        // gt exactly between current and left centerlines
        let set = filter_relevant_lanes(&three_lanes(), &ego(), 3.5).unwrap();
        let gt = traj((1..=6).map(|k| (k as f64 * 2.0, 1.75)).collect());
        assert_eq!(
            label_target_lane(&set, &gt, 2.0).unwrap().slot,
            Slot::Current
        );
    }

    fn label(slot: Slot) -> TargetLaneLabel<f64> {
        TargetLaneLabel {
            slot,
            mean_terminal_distance: 0.0,
            available: [true; 3],
        }
    }

    #[test]
    fn mtps_uniform_scores() {
        let l = mtps_loss([0.0; 3], &label(Slot::Current), None).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        let w = ClassWeights::inverse_frequency();
        let l = mtps_loss([0.0; 3], &label(Slot::Left), Some(&w)).unwrap();
        assert!((l - 32.480 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mtps_decreases_towards_zero() {
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let s = k as f64;
            let l = mtps_loss([0.0, s, 0.0], &label(Slot::Current), None).unwrap();
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn mtps_gradient_uniform() {
        let g = mtps_score_gradient([0.0; 3], &label(Slot::Current), None).unwrap();
        let want = [1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0];
        for i in 0..3 {
            assert!((g[i] - want[i]).abs() < 1e-15);
        }
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn mtps_label_absent() {
        let mut l = label(Slot::Right);
        l.available = [true, true, false];
        assert!(matches!(
            mtps_loss([0.0; 3], &l, None),
            Err(Error::LabelAbsent(Slot::Right))
        ));
    }

    #[test]
    fn masked_mode_ignores_absent_slots() {
        let mut l = label(Slot::Current);
        l.available = [false, true, true];
        let masked = mtps_loss_with_mode([5.0, 0.0, 0.0], &l, None, SoftmaxMode::Masked).unwrap();
        assert!((masked - 2f64.ln()).abs() < 1e-15);
        let g =
            mtps_score_gradient_with_mode([5.0, 0.0, 0.0], &l, None, SoftmaxMode::Masked).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] + 0.5).abs() < 1e-15 && (g[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frequency_order_mapping() {
        let w = ClassWeights::from_frequency_order(INVERSE_FREQUENCY_WEIGHTS).unwrap();
        assert_eq!(w, ClassWeights::inverse_frequency());
        assert_eq!(w.get(Slot::Left), 32.480);
        assert!(ClassWeights::from_frequency_order([1.0, 0.0, 1.0]).is_err());
    }
}
