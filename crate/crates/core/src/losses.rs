//! Weighted combination of the three supervision losses, a direct trajectory
//! optimizer driven by them, and a finite-difference gradient check.
//!
//! [`LossBreakdown`] only covers the supervision terms. The detection,
//! motion and imitation losses of a full driving network would be added on
//! top and are always zero here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polyline, Trajectory};
use crate::lanes::{mtps_loss, mtps_score_gradient, ClassWeights, TargetLaneLabel};
use crate::ntps::{
    detect_collisions_with_tracks, ntps_gradient, ntps_loss, ntps_loss_at, AgentTrack,
    CollisionSet, ModeSelection,
};
use crate::scalar::Scalar;
use crate::stps::{generate_spatial_target, stps_gradient, stps_loss, SpatialTarget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<T> {
    pub w_mtps: T,
    pub w_stps: T,
    pub w_ntps: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            w_mtps: T::one(),
            w_stps: T::lit(0.3),
            w_ntps: T::one(),
        }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn new(w_mtps: T, w_stps: T, w_ntps: T) -> Result<Self> {
        let w = Self {
            w_mtps,
            w_stps,
            w_ntps,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_mtps", self.w_mtps),
            ("w_stps", self.w_stps),
            ("w_ntps", self.w_ntps),
        ] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            w_mtps: self.w_mtps * k,
            w_stps: self.w_stps * k,
            w_ntps: self.w_ntps * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub mtps: T,
    pub stps: T,
    pub ntps: T,
    pub weighted_total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    /// The only place the weighted sum is formed, so every caller gets the
    /// same rounding.
    pub fn combine(mtps: T, stps: T, ntps: T, w: &LossWeights<T>) -> Self {
        Self {
            mtps,
            stps,
            ntps,
            weighted_total: w.w_mtps * mtps + w.w_stps * stps + w.w_ntps * ntps,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MtpsTerm<'a, T> {
    pub scores: [T; 3],
    pub label: &'a TargetLaneLabel<T>,
    pub class_weights: Option<&'a ClassWeights<T>>,
}

/// Evaluates the supplied components and combines them; missing components
/// count as zero.
pub fn total_pgs_loss<T: Scalar>(
    mtps: Option<MtpsTerm<'_, T>>,
    stps: Option<(&Trajectory<T>, &SpatialTarget<T>)>,
    ntps: Option<&CollisionSet<T>>,
    weights: &LossWeights<T>,
) -> Result<LossBreakdown<T>> {
    if mtps.is_none() && stps.is_none() && ntps.is_none() {
        return Err(Error::NoLossComponents);
    }
    weights.validate()?;
    let m = match mtps {
        Some(term) => mtps_loss(term.scores, term.label, term.class_weights)?,
        None => T::zero(),
    };
    let s = match stps {
        Some((pred, target)) => stps_loss(pred, target)?,
        None => T::zero(),
    };
    let n = ntps.map_or(T::zero(), ntps_loss);
    Ok(LossBreakdown::combine(m, s, n, weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<T> {
    /// Meters moved per unit of (per-point) gradient.
    pub step_size: T,
    pub max_iters: usize,
    pub convergence_tol: T,
    pub refresh_collisions_every: usize,
    pub mode_selection: ModeSelection<T>,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            step_size: T::lit(0.1),
            max_iters: 200,
            convergence_tol: T::lit(1e-6),
            refresh_collisions_every: 5,
            mode_selection: ModeSelection::TopScore,
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > T::zero()) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(
                "step_size and max_iters must be positive".into(),
            ));
        }
        if self.refresh_collisions_every == 0 {
            return Err(Error::InvalidConfig(
                "refresh_collisions_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the optimizer needs besides weights and step configuration.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeProblem<'a, T> {
    pub init: &'a Trajectory<T>,
    pub target_centerline: &'a Polyline<T>,
    pub gt: &'a Trajectory<T>,
    pub agents: &'a [AgentTrack<T>],
    pub ego_width: T,
    pub ego_length: T,
    /// Current ego heading, used when the trajectory itself gives none.
    pub ego_heading: T,
    pub w_snap: T,
    pub beta: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct OptimizeResult<T> {
    pub trajectory: Trajectory<T>,
    pub final_loss: LossBreakdown<T>,
    pub iterations: usize,
    /// Best objective seen after each iteration (index 0 is the initial
    /// trajectory).
    pub history: Vec<T>,
    pub spatial_target: SpatialTarget<T>,
}

struct Evaluation<T> {
    loss: LossBreakdown<T>,
    collisions: CollisionSet<T>,
}

fn evaluate<T: Scalar>(
    traj: &Trajectory<T>,
    target: &SpatialTarget<T>,
    problem: &OptimizeProblem<'_, T>,
    weights: &LossWeights<T>,
    selection: ModeSelection<T>,
) -> Result<Evaluation<T>> {
    let s = stps_loss(traj, target)?;
    let collisions = detect_collisions_with_tracks(
        traj,
        problem.ego_width,
        problem.ego_length,
        problem.ego_heading,
        problem.agents,
        selection,
        problem.beta,
    )?;
    let n = ntps_loss(&collisions);
    Ok(Evaluation {
        loss: LossBreakdown::combine(T::zero(), s, n, weights),
        collisions,
    })
}

/// Moves `v` toward `target` by at most `lambda`: the proximal step of
/// `lambda * |v - target|`.
#[inline]
fn soft_step<T: Scalar>(v: T, target: T, lambda: T) -> T {
    let diff = v - target;
    if diff.abs() <= lambda {
        target
    } else if diff > T::zero() {
        v - lambda
    } else {
        v + lambda
    }
}

/// Fixed-step descent on `w_stps * L_STPS + w_ntps * L_NTPS` over the
/// trajectory points.
///
/// Each iteration takes an explicit step along the hinge gradient (with the
/// collision set refreshed every `refresh_collisions_every` iterations) and
/// then the exact proximal step of the L1 term, so points settle on their
/// spatial targets instead of chattering around them. Both terms use the
/// per-point scale `N * dL/dp_t`. The best iterate seen is returned.
pub fn optimize_trajectory<T: Scalar>(
    problem: &OptimizeProblem<'_, T>,
    weights: &LossWeights<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<OptimizeResult<T>> {
    cfg.validate()?;
    weights.validate()?;
    let target = generate_spatial_target(problem.gt, problem.target_centerline, problem.w_snap)?;
    let init = problem.init;
    if init.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: init.len(),
        });
    }

    let n = T::from_usize(init.len()).expect("length");
    let ntps_rate = cfg.step_size * n * weights.w_ntps;
    let lambda = cfg.step_size * weights.w_stps;

    let mut current = init.clone();
    let first = evaluate(&current, &target, problem, weights, cfg.mode_selection)?;
    let mut prev_obj = first.loss.weighted_total;
    let mut best = (current.clone(), first.loss);
    let mut frozen = first.collisions;
    let mut history = vec![prev_obj];
    let mut iterations = 0;

    for it in 0..cfg.max_iters {
        if it > 0 && it % cfg.refresh_collisions_every == 0 {
            frozen = detect_collisions_with_tracks(
                &current,
                problem.ego_width,
                problem.ego_length,
                problem.ego_heading,
                problem.agents,
                cfg.mode_selection,
                problem.beta,
            )?;
        }
        let push = if weights.w_ntps > T::zero() && !frozen.is_empty() {
            ntps_gradient(&current, &frozen)?
        } else {
            vec![Point2::zero(); current.len()]
        };
        let next: Vec<Point2<T>> = current
            .points()
            .iter()
            .zip(&push)
            .zip(target.target.points())
            .map(|((&p, &g), &q)| {
                let moved = p - g * ntps_rate;
                Point2::new(
                    soft_step(moved.x, q.x, lambda),
                    soft_step(moved.y, q.y, lambda),
                )
            })
            .collect();
        current = current.with_points(next)?;
        iterations += 1;

        let eval = evaluate(&current, &target, problem, weights, cfg.mode_selection)?;
        let obj = eval.loss.weighted_total;
        if obj < best.1.weighted_total {
            best = (current.clone(), eval.loss);
        }
        history.push(best.1.weighted_total);
        if (prev_obj - obj).abs() < cfg.convergence_tol {
            break;
        }
        prev_obj = obj;
    }

    Ok(OptimizeResult {
        trajectory: best.0,
        final_loss: best.1,
        iterations,
        history,
        spatial_target: target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Mtps,
    Stps,
    Ntps,
}

/// Inputs for [`finite_diff_check`]; the differentiated variable is the
/// score vector for MTPS and the predicted ego points otherwise.
#[derive(Debug, Clone, Copy)]
pub enum GradCheckInput<'a, T> {
    Mtps {
        scores: [T; 3],
        label: &'a TargetLaneLabel<T>,
        class_weights: Option<&'a ClassWeights<T>>,
    },
    Stps {
        pred: &'a Trajectory<T>,
        target: &'a SpatialTarget<T>,
    },
    Ntps {
        ego: &'a Trajectory<T>,
        collisions: &'a CollisionSet<T>,
    },
}

impl<T> GradCheckInput<'_, T> {
    pub fn kind(&self) -> LossKind {
        match self {
            GradCheckInput::Mtps { .. } => LossKind::Mtps,
            GradCheckInput::Stps { .. } => LossKind::Stps,
            GradCheckInput::Ntps { .. } => LossKind::Ntps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffReport<T> {
    pub kind: LossKind,
    pub max_rel_error: T,
    pub max_abs_error: T,
    /// `(point index, axis)`; for MTPS the point index is the slot index.
    pub worst_coordinate: Option<(usize, usize)>,
    pub checked: usize,
    pub skipped: usize,
}

fn to_points<T: Scalar>(flat: &[T]) -> Vec<Point2<T>> {
    flat.chunks(2).map(|c| Point2::new(c[0], c[1])).collect()
}

type LossFn<'a, T> = Box<dyn Fn(&[T]) -> Result<T> + 'a>;

/// Central differences over every coordinate, compared against the analytic
/// gradient. Coordinates within `10 h` of a kink (L1 zero, hinge boundary)
/// are skipped.
pub fn finite_diff_check<T: Scalar>(
    input: GradCheckInput<'_, T>,
    h: T,
) -> Result<FiniteDiffReport<T>> {
    if !(h > T::zero()) {
        return Err(Error::InvalidConfig(format!("h must be > 0, got {h}")));
    }
    let kink = h * T::lit(10.0);
    let (x0, analytic, skip, loss): (Vec<T>, Vec<T>, Vec<bool>, LossFn<'_, T>) = match input {
        GradCheckInput::Mtps {
            scores,
            label,
            class_weights,
        } => {
            let g = mtps_score_gradient(scores, label, class_weights)?;
            let f = move |x: &[T]| mtps_loss([x[0], x[1], x[2]], label, class_weights);
            (scores.to_vec(), g.to_vec(), vec![false; 3], Box::new(f))
        }
        GradCheckInput::Stps { pred, target } => {
            let g = stps_gradient(pred, target)?;
            let mut x0 = Vec::with_capacity(pred.len() * 2);
            let mut skip = Vec::with_capacity(pred.len() * 2);
            for (p, q) in pred.points().iter().zip(target.target.points()) {
                x0.extend([p.x, p.y]);
                skip.extend([(p.x - q.x).abs() < kink, (p.y - q.y).abs() < kink]);
            }
            let f = move |x: &[T]| stps_loss(&pred.with_points(to_points(x))?, target);
            (
                x0,
                g.iter().flat_map(|v| [v.x, v.y]).collect(),
                skip,
                Box::new(f),
            )
        }
        GradCheckInput::Ntps { ego, collisions } => {
            let g = ntps_gradient(ego, collisions)?;
            let mut near_kink = vec![false; ego.len()];
            for e in &collisions.events {
                let d = ego.points()[e.t].distance(e.agent_point);
                if (d - collisions.beta).abs() < kink || d < kink {
                    near_kink[e.t] = true;
                }
            }
            let x0 = ego.points().iter().flat_map(|p| [p.x, p.y]).collect();
            let skip = near_kink.iter().flat_map(|&s| [s, s]).collect();
            let f = move |x: &[T]| ntps_loss_at(&ego.with_points(to_points(x))?, collisions);
            (
                x0,
                g.iter().flat_map(|v| [v.x, v.y]).collect(),
                skip,
                Box::new(f),
            )
        }
    };

    let kind = input.kind();
    let floor = T::lit(1e-7);
    let two_h = h + h;
    let mut report = FiniteDiffReport {
        kind,
        max_rel_error: T::zero(),
        max_abs_error: T::zero(),
        worst_coordinate: None,
        checked: 0,
        skipped: 0,
    };
    let mut x = x0.clone();
    for i in 0..x0.len() {
        if skip[i] {
            report.skipped += 1;
            continue;
        }
        x[i] = x0[i] + h;
        let up = loss(&x)?;
        x[i] = x0[i] - h;
        let down = loss(&x)?;
        x[i] = x0[i];
        let numeric = (up - down) / two_h;
        let abs = (numeric - analytic[i]).abs();
        let scale = numeric.abs().max(analytic[i].abs());
        let rel = if scale > floor {
            abs / scale
        } else {
            T::zero()
        };
        report.checked += 1;
        if abs > report.max_abs_error {
            report.max_abs_error = abs;
        }
        if rel > report.max_rel_error || report.worst_coordinate.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst_coordinate = Some(match kind {
                LossKind::Mtps => (i, 0),
                _ => (i / 2, i % 2),
            });
        }
    }
    Ok(report)
}
