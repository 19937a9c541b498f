//! Output records: supervision bundles, envelopes with version and scenario
//! hash, line-delimited traces.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, Write};
use std::path::Path;

use super::scenario::{parse_json, ScenarioSpec};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::lanes::{filter_relevant_lanes, label_target_lane, Slot, DEFAULT_MATCH_HORIZON};
use crate::losses::{finite_diff_check, total_pgs_loss, GradCheckInput, MtpsTerm};
use crate::ntps::{detect_collisions_with_tracks, ntps_gradient, ntps_loss, ModeSelection};
use crate::simulate::{Metrics, PlannerKind, StepTrace};
use crate::stps::generate_spatial_target;
use crate::{
    ClassWeights, CollisionEvent, CollisionSet, FiniteDiffReport, LossBreakdown, LossWeights,
    RelevantLaneSet, SpatialTarget, TargetLaneLabel, Trajectory,
};

pub const TOOL_VERSION: &str = concat!("pgs ", env!("CARGO_PKG_VERSION"));

/// SHA-256 over the canonical JSON of a loaded scenario.
pub fn scenario_hash(spec: &ScenarioSpec) -> String {
    hex::encode(Sha256::digest(spec.to_json().as_bytes()))
}

/// Wrapper written around every command result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<R> {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
    pub record_type: String,
    pub payload: R,
}

impl<R> Envelope<R> {
    pub fn new(record_type: &str, scenario: Option<&ScenarioSpec>, payload: R) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            scenario_hash: scenario.map(scenario_hash),
            record_type: record_type.into(),
            payload,
        }
    }
}

pub fn save<R: Serialize + ?Sized>(record: &R, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, super::to_json(record))?;
    Ok(())
}

pub fn load<R: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<R> {
    parse_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsRecord {
    pub relevant: RelevantLaneSet,
    pub target_lane: TargetLaneLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtpsRecord {
    pub collision_set: CollisionSet,
    pub loss: f64,
    pub gradient: Vec<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionRecord {
    pub target_lane: TargetLaneLabel,
    pub spatial_target: SpatialTarget,
    pub collision_set: CollisionSet,
    pub losses: LossBreakdown,
}

/// A predicted trajectory, optionally with lane scores `(left, current,
/// right)`. A bare trajectory object is accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionFile {
    WithScores {
        trajectory: Trajectory,
        #[serde(default)]
        lane_scores: Option<[f64; 3]>,
    },
    Bare(Trajectory),
}

impl PredictionFile {
    pub fn trajectory(&self) -> &Trajectory {
        match self {
            PredictionFile::WithScores { trajectory, .. } | PredictionFile::Bare(trajectory) => {
                trajectory
            }
        }
    }

    pub fn lane_scores(&self) -> Option<[f64; 3]> {
        match self {
            PredictionFile::WithScores { lane_scores, .. } => *lane_scores,
            PredictionFile::Bare(_) => None,
        }
    }
}

/// Relevant lanes around the initial ego pose and the target lane of the
/// first expert horizon.
pub fn labels(spec: &ScenarioSpec) -> Result<LabelsRecord> {
    let relevant = filter_relevant_lanes(&spec.lanes, &spec.ego.pose, spec.lane_width())?;
    let target_lane = label_target_lane(&relevant, &spec.gt_window()?, DEFAULT_MATCH_HORIZON)?;
    Ok(LabelsRecord {
        relevant,
        target_lane,
    })
}

/// Spatial target on the labelled lane, with the scenario's snap threshold
/// unless `w_snap` overrides it.
pub fn spatial_target(
    spec: &ScenarioSpec,
    w_snap: Option<f64>,
) -> Result<(LabelsRecord, SpatialTarget)> {
    let l = labels(spec)?;
    let cand = l
        .relevant
        .get(l.target_lane.slot)
        .ok_or(Error::LabelAbsent(l.target_lane.slot))?;
    let target = generate_spatial_target(
        &spec.gt_window()?,
        &cand.centerline,
        w_snap.unwrap_or(spec.thresholds.w_snap),
    )?;
    Ok((l, target))
}

/// Overlaps of `pred` (default: the expert horizon) with every agent mode
/// scoring above `selection`.
pub fn collisions(
    spec: &ScenarioSpec,
    pred: &Trajectory,
    beta: Option<f64>,
    selection: ModeSelection<f64>,
) -> Result<CollisionSet> {
    detect_collisions_with_tracks(
        pred,
        spec.ego.dims.width,
        spec.ego.dims.length,
        spec.ego.pose.heading,
        &spec.agents,
        selection,
        beta.unwrap_or(spec.thresholds.beta),
    )
}

pub fn ntps_record(
    spec: &ScenarioSpec,
    pred: &Trajectory,
    beta: Option<f64>,
) -> Result<NtpsRecord> {
    let collision_set = collisions(spec, pred, beta, ModeSelection::TopScore)?;
    Ok(NtpsRecord {
        loss: ntps_loss(&collision_set),
        gradient: ntps_gradient(pred, &collision_set)?,
        collision_set,
    })
}

/// Every supervision signal for `pred` in one bundle. The lane-selection
/// term is evaluated only when scores are given.
pub fn supervision(
    spec: &ScenarioSpec,
    pred: &Trajectory,
    lane_scores: Option<[f64; 3]>,
    weights: &LossWeights,
) -> Result<SupervisionRecord> {
    let (l, target) = spatial_target(spec, None)?;
    let collision_set = collisions(spec, pred, None, ModeSelection::TopScore)?;
    let mtps = lane_scores.map(|scores| MtpsTerm {
        scores,
        label: &l.target_lane,
        class_weights: None,
    });
    let losses = total_pgs_loss(mtps, Some((pred, &target)), Some(&collision_set), weights)?;
    Ok(SupervisionRecord {
        target_lane: l.target_lane,
        spatial_target: target,
        collision_set,
        losses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCase {
    pub name: String,
    pub report: FiniteDiffReport,
}

fn line_traj(offset: Point2<f64>, wiggle: f64) -> Result<Trajectory> {
    let pts = (0..6)
        .map(|k| {
            let k = k as f64;
            Point2::new(4.0 * (k + 1.0), 0.0) + offset + Point2::new(0.0, wiggle * (1.3 * k).sin())
        })
        .collect();
    Trajectory::new(pts, 0.5, 0.5)
}

/// Finite-difference checks over fixed small fixtures of each loss.
pub fn builtin_gradchecks(h: f64) -> Result<Vec<GradCheckCase>> {
    let label = TargetLaneLabel {
        slot: Slot::Left,
        mean_terminal_distance: 0.0,
        available: [true; 3],
    };
    let weights = ClassWeights::inverse_frequency();
    let scores = [0.3, 1.2, -0.5];

    let base = line_traj(Point2::new(0.0, 0.0), 0.0)?;
    let target = SpatialTarget {
        target: base.clone(),
        snapped: vec![true; base.len()],
        snap_threshold: 2.0,
    };
    let pred = line_traj(Point2::new(0.37, -0.21), 0.4)?;

    let ego = line_traj(Point2::new(0.0, 0.0), 0.2)?;
    let events = [
        (1usize, Point2::new(1.2, 0.9)),
        (3, Point2::new(-0.4, 1.7)),
        (4, Point2::new(2.1, -0.8)),
    ]
    .into_iter()
    .map(|(t, off)| {
        let ego_point = ego.points()[t];
        let agent_point = ego_point + off;
        CollisionEvent {
            t,
            agent_id: format!("a{t}"),
            ego_point,
            agent_point,
            center_distance: off.norm(),
        }
    })
    .collect();
    let coll = CollisionSet { events, beta: 3.0 };

    let cases = [
        (
            "mtps",
            GradCheckInput::Mtps {
                scores,
                label: &label,
                class_weights: None,
            },
        ),
        (
            "mtps_weighted",
            GradCheckInput::Mtps {
                scores,
                label: &label,
                class_weights: Some(&weights),
            },
        ),
        (
            "stps",
            GradCheckInput::Stps {
                pred: &pred,
                target: &target,
            },
        ),
        (
            "ntps",
            GradCheckInput::Ntps {
                ego: &ego,
                collisions: &coll,
            },
        ),
    ];
    cases
        .into_iter()
        .map(|(name, input)| {
            Ok(GradCheckCase {
                name: name.into(),
                report: finite_diff_check(input, h)?,
            })
        })
        .collect()
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub tool_version: String,
    pub scenario_hash: String,
    pub planner: PlannerKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub planner: PlannerKind,
    pub seed: u64,
    pub metrics: Metrics,
}

pub fn write_trace<W: Write>(mut out: W, header: &TraceHeader, rows: &[StepTrace]) -> Result<()> {
    serde_json::to_writer(&mut out, header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<(TraceHeader, Vec<StepTrace>)> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Validation("trace file is empty".into()))??;
    let header: TraceHeader = parse_json(&first)?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: StepTrace = parse_json(&line).map_err(|e| match e {
            Error::Parse {
                path,
                column,
                message,
                ..
            } => Error::Parse {
                path,
                line: i + 2,
                column,
                message,
            },
            other => other,
        })?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{generate, ScenarioKind};
    use crate::simulate::{run, SimConfig};

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = generate(ScenarioKind::Overtake, 1).unwrap();
        let mut b = a.clone();
        assert_eq!(scenario_hash(&a), scenario_hash(&b));
        assert_eq!(scenario_hash(&a).len(), 64);
        b.thresholds.beta = 2.5;
        assert_ne!(scenario_hash(&a), scenario_hash(&b));
    }

    #[test]
    fn builtin_gradchecks_pass() {
        for case in builtin_gradchecks(1e-6).unwrap() {
            assert!(
                case.report.max_rel_error < 1e-5,
                "{}: {:?}",
                case.name,
                case.report
            );
            assert!(case.report.checked > 0, "{}", case.name);
        }
    }

    #[test]
    fn trace_round_trip() {
        let sc = generate(ScenarioKind::Overtake, 0).unwrap();
        let out = run(
            &sc,
            PlannerKind::Replay { noise_sigma: 0.3 },
            &SimConfig::default(),
        )
        .unwrap();
        let header = TraceHeader {
            tool_version: TOOL_VERSION.into(),
            scenario_hash: scenario_hash(&sc),
            planner: PlannerKind::Replay { noise_sigma: 0.3 },
            seed: 0,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &header, &out.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.trace.len() + 1);
        let (h, rows) = read_trace(text.as_bytes()).unwrap();
        assert_eq!(h, header);
        assert_eq!(rows, out.trace);
    }

    #[test]
    fn prediction_file_accepts_both_shapes() {
        let t = line_traj(Point2::new(0.0, 0.0), 0.0).unwrap();
        let bare: PredictionFile = parse_json(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(bare.trajectory(), &t);
        assert_eq!(bare.lane_scores(), None);
        let text = format!(
            "{{\"trajectory\": {}, \"lane_scores\": [0.1, 0.2, 0.3]}}",
            serde_json::to_string(&t).unwrap()
        );
        let with: PredictionFile = parse_json(&text).unwrap();
        assert_eq!(with.lane_scores(), Some([0.1, 0.2, 0.3]));
    }

    #[test]
    fn supervision_on_expert_has_zero_stps_on_straight_road() {
        let sc = generate(ScenarioKind::Overtake, 0).unwrap();
        let (l, target) = spatial_target(&sc, None).unwrap();
        assert_eq!(l.target_lane.slot, Slot::Current);
        assert!(target.snapped.iter().all(|&s| s));
        let rec = supervision(
            &sc,
            &target.target,
            Some([0.0, 0.0, 0.0]),
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(rec.losses.stps, 0.0);
        assert!((rec.losses.mtps - 3f64.ln()).abs() < 1e-12);
    }
}
