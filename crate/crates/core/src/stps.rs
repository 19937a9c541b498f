//! Centerline-aligned spatial targets and their L1 supervision loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_point_discrete, Point2, Polyline, Trajectory};
use crate::scalar::Scalar;

/// Default snap radius in meters.
pub const DEFAULT_SNAP_THRESHOLD: f64 = 2.0;

/// Expert trajectory with every point that lies within `snap_threshold` of
/// the target centerline replaced by its nearest centerline vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct SpatialTarget<T> {
    pub target: Trajectory<T>,
    pub snapped: Vec<bool>,
    pub snap_threshold: T,
}

impl<T: Scalar> SpatialTarget<T> {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn snapped_count(&self) -> usize {
        self.snapped.iter().filter(|&&s| s).count()
    }
}

pub fn generate_spatial_target<T: Scalar>(
    gt: &Trajectory<T>,
    centerline: &Polyline<T>,
    snap_threshold: T,
) -> Result<SpatialTarget<T>> {
    if !(snap_threshold > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "snap threshold must be > 0, got {snap_threshold}"
        )));
    }
    let mut points = Vec::with_capacity(gt.len());
    let mut snapped = Vec::with_capacity(gt.len());
    for &p in gt.points() {
        let nv = nearest_point_discrete(centerline, p);
        if nv.distance <= snap_threshold {
            points.push(nv.point);
            snapped.push(true);
        } else {
            points.push(p);
            snapped.push(false);
        }
    }
    Ok(SpatialTarget {
        target: gt.with_points(points)?,
        snapped,
        snap_threshold,
    })
}

fn check_compatible<T: Scalar>(pred: &Trajectory<T>, target: &SpatialTarget<T>) -> Result<()> {
    if pred.len() != target.target.len() {
        return Err(Error::LengthMismatch {
            expected: target.target.len(),
            got: pred.len(),
        });
    }
    if pred.dt() != target.target.dt() {
        return Err(Error::TimestepMismatch {
            expected: target.target.dt().as_f64(),
            got: pred.dt().as_f64(),
        });
    }
    Ok(())
}

/// Mean over points of `|dx| + |dy|`.
pub fn stps_loss<T: Scalar>(pred: &Trajectory<T>, target: &SpatialTarget<T>) -> Result<T> {
    check_compatible(pred, target)?;
    let n = T::from_usize(pred.len()).expect("length");
    let sum: T = pred
        .points()
        .iter()
        .zip(target.target.points())
        .map(|(p, q)| (p.x - q.x).abs() + (p.y - q.y).abs())
        .fold(T::zero(), |a, b| a + b);
    Ok(sum / n)
}

#[inline]
fn sign0<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Subgradient `sign(pred - target) / N` per coordinate, with `sign(0) = 0`.
pub fn stps_gradient<T: Scalar>(
    pred: &Trajectory<T>,
    target: &SpatialTarget<T>,
) -> Result<Vec<Point2<T>>> {
    check_compatible(pred, target)?;
    let inv_n = T::one() / T::from_usize(pred.len()).expect("length");
    Ok(pred
        .points()
        .iter()
        .zip(target.target.points())
        .map(|(p, q)| Point2::new(sign0(p.x - q.x) * inv_n, sign0(p.y - q.y) * inv_n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centerline() -> Polyline<f64> {
        Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(20.0, 0.0)])
            .unwrap()
            .densified(0.5)
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
    fn on_centerline_is_identity() {
        let gt = traj((1..=6).map(|k| (k as f64 * 1.5, 0.0)).collect());
        let st = generate_spatial_target(&gt, &centerline(), 2.0).unwrap();
        assert_eq!(st.target, gt);
        assert!(st.snapped.iter().all(|&s| s));
        assert_eq!(stps_loss(&gt, &st).unwrap(), 0.0);
    }

    #[test]
    fn offset_removed() {
        let gt = traj((1..=6).map(|k| (k as f64 * 1.5, 0.4)).collect());
        let st = generate_spatial_target(&gt, &centerline(), 2.0).unwrap();
        for (k, q) in st.target.points().iter().enumerate() {
            assert_eq!(*q, Point2::new((k + 1) as f64 * 1.5, 0.0));
        }
        assert!((stps_loss(&gt, &st).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn far_point_retained() {
        let gt = traj(vec![(1.0, 0.3), (2.0, 5.0), (3.0, -0.2)]);
        let st = generate_spatial_target(&gt, &centerline(), 2.0).unwrap();
        assert_eq!(st.snapped, vec![true, false, true]);
        assert_eq!(st.target.points()[1], Point2::new(2.0, 5.0));
    }

    #[test]
    fn loss_and_gradient_forced_values() {
        let gt = traj((1..=4).map(|k| (k as f64, 0.0)).collect());
        let st = generate_spatial_target(&gt, &centerline(), 2.0).unwrap();
        let shifted = traj((1..=4).map(|k| (k as f64 + 1.0, -2.0)).collect());
        assert_eq!(stps_loss(&shifted, &st).unwrap(), 3.0);

        let above = traj((1..=4).map(|k| (k as f64, 0.7)).collect());
        let g = stps_gradient(&above, &st).unwrap();
        assert!(g.iter().all(|v| *v == Point2::new(0.0, 0.25)));
        let zero = stps_gradient(&gt, &st).unwrap();
        assert!(zero.iter().all(|v| *v == Point2::zero()));
    }

    #[test]
    fn mismatches() {
        let gt = traj((1..=4).map(|k| (k as f64, 0.0)).collect());
        let st = generate_spatial_target(&gt, &centerline(), 2.0).unwrap();
        let short = traj(vec![(0.0, 0.0)]);
        assert!(matches!(
            stps_loss(&short, &st),
            Err(Error::LengthMismatch {
                expected: 4,
                got: 1
            })
        ));
        let other_dt = Trajectory::new(gt.points().to_vec(), 0.1, 0.0).unwrap();
        assert!(matches!(
            stps_gradient(&other_dt, &st),
            Err(Error::TimestepMismatch { .. })
        ));
        assert!(generate_spatial_target(&gt, &centerline(), 0.0).is_err());
    }
}
