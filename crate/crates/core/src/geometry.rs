//! 2D primitives: points, poses, polylines, trajectories and oriented boxes,
//! plus the separating-axis overlap test used for collision supervision.
//!
//! Frame convention: +x east, +y north, headings counter-clockwise from +x.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{normalize_angle, Scalar};

/// Minimum separation between consecutive polyline vertices.
pub const MIN_VERTEX_SEPARATION: f64 = 1e-9;
/// Offsets shorter than this do not define a heading.
pub const HEADING_DEGENERACY: f64 = 1e-3;
/// Default maximum vertex spacing applied to centerlines at load time.
pub const DEFAULT_DENSIFY_SPACING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector pointing along `angle`.
    #[inline]
    pub fn from_angle(angle: T) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    #[inline]
    pub fn distance_squared(self, other: Self) -> T {
        (self - other).norm_squared()
    }

    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand normal (rotated +90 degrees).
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn lerp(self, other: Self, t: T) -> Self {
        self + (other - self) * t
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Scalar> Div<T> for Point2<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: T) -> Self {
        Self::new(self.x / rhs, self.y / rhs)
    }
}

impl<T: Scalar> Neg for Point2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Position plus heading; the heading is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr<T>")]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Pose2<T> {
    pub position: Point2<T>,
    pub heading: T,
}

#[derive(Deserialize)]
struct PoseRepr<T> {
    position: Point2<T>,
    heading: T,
}

impl<T: Scalar> From<PoseRepr<T>> for Pose2<T> {
    fn from(r: PoseRepr<T>) -> Self {
        Pose2::new(r.position, r.heading)
    }
}

impl<T: Scalar> Pose2<T> {
    pub fn new(position: Point2<T>, heading: T) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn forward(&self) -> Point2<T> {
        Point2::from_angle(self.heading)
    }
}

/// Rotation about the origin followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid2<T> {
    pub rotation: T,
    pub translation: Point2<T>,
}

impl<T: Scalar> Rigid2<T> {
    pub fn new(rotation: T, translation: Point2<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: Point2<T>) -> Point2<T> {
        p.rotate(self.rotation) + self.translation
    }

    pub fn apply_vector(&self, v: Point2<T>) -> Point2<T> {
        v.rotate(self.rotation)
    }

    pub fn apply_heading(&self, heading: T) -> T {
        normalize_angle(heading + self.rotation)
    }

    pub fn apply_pose(&self, pose: &Pose2<T>) -> Pose2<T> {
        Pose2::new(self.apply(pose.position), pose.heading + self.rotation)
    }
}

/// Ordered vertex chain with at least two vertices and no repeated
/// consecutive vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2<T>>", into = "Vec<Point2<T>>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Polyline<T> {
    points: Vec<Point2<T>>,
}

impl<T: Scalar> TryFrom<Vec<Point2<T>>> for Polyline<T> {
    type Error = Error;
    fn try_from(points: Vec<Point2<T>>) -> Result<Self> {
        Polyline::new(points)
    }
}

impl<T: Scalar> From<Polyline<T>> for Vec<Point2<T>> {
    fn from(p: Polyline<T>) -> Self {
        p.points
    }
}

impl<T: Scalar> Polyline<T> {
    pub fn new(points: Vec<Point2<T>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidPolyline(format!(
                "needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidPolyline(format!(
                "vertex {i} has a non-finite coordinate"
            )));
        }
        let min_sep = T::lit(MIN_VERTEX_SEPARATION);
        for (i, w) in points.windows(2).enumerate() {
            if w[0].distance(w[1]) < min_sep {
                return Err(Error::InvalidPolyline(format!(
                    "vertices {i} and {} are closer than {MIN_VERTEX_SEPARATION} m",
                    i + 1
                )));
            }
        }
        Ok(Self { points })
    }

    #[inline]
    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; a polyline has at least two vertices.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Point2<T> {
        self.points[0]
    }

    pub fn last(&self) -> Point2<T> {
        self.points[self.points.len() - 1]
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2<T>, Point2<T>)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> T {
        self.segments().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn max_segment_length(&self) -> T {
        self.segments()
            .map(|(a, b)| a.distance(b))
            .fold(T::zero(), T::max)
    }

    /// Arc length at each vertex, starting at 0.
    pub fn cumulative_lengths(&self) -> Vec<T> {
        let mut acc = T::zero();
        let mut out = Vec::with_capacity(self.points.len());
        out.push(acc);
        for (a, b) in self.segments() {
            acc += a.distance(b);
            out.push(acc);
        }
        out
    }

    /// Point at arc length `s`, clamped to the polyline ends.
    pub fn point_at(&self, s: T) -> Point2<T> {
        if s <= T::zero() {
            return self.first();
        }
        let mut acc = T::zero();
        for (a, b) in self.segments() {
            let len = a.distance(b);
            if s <= acc + len {
                return a.lerp(b, (s - acc) / len);
            }
            acc += len;
        }
        self.last()
    }

    /// Direction of the segment containing arc length `s`.
    pub fn heading_at(&self, s: T) -> T {
        let mut acc = T::zero();
        let n = self.points.len();
        for (i, (a, b)) in self.segments().enumerate() {
            let len = a.distance(b);
            if s <= acc + len || i == n - 2 {
                return (b - a).angle();
            }
            acc += len;
        }
        unreachable!("polyline has at least one segment")
    }

    /// Inserts evenly spaced vertices so that no segment exceeds
    /// `max_spacing`. Already-dense polylines come back unchanged.
    pub fn densified(&self, max_spacing: T) -> Self {
        if !(max_spacing > T::zero()) {
            return self.clone();
        }
        let slack = T::lit(1e-9);
        let mut out = Vec::with_capacity(self.points.len());
        out.push(self.points[0]);
        for (a, b) in self.segments() {
            let len = a.distance(b);
            let n = (len / max_spacing - slack).ceil().max(T::one());
            let steps = n.to_usize().unwrap_or(1).max(1);
            let denom = T::from_usize(steps).expect("step count");
            let ab = b - a;
            for k in 1..steps {
                let kk = T::from_usize(k).expect("step index");
                out.push(a + ab * kk / denom);
            }
            out.push(b);
        }
        Self { points: out }
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    pub fn transformed(&self, tf: &Rigid2<T>) -> Result<Self> {
        Self::new(self.points.iter().map(|&p| tf.apply(p)).collect())
    }

    /// Appends `other`, skipping its first vertex when it duplicates our
    /// last one.
    pub fn concat(&self, other: &Polyline<T>) -> Self {
        let mut points = self.points.clone();
        let min_sep = T::lit(MIN_VERTEX_SEPARATION);
        for &p in other.points() {
            if points.last().map_or(true, |q| q.distance(p) >= min_sep) {
                points.push(p);
            }
        }
        Self { points }
    }
}

/// Sequence of positions sampled every `dt` seconds; point `k` sits at time
/// `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRepr<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Trajectory<T> {
    points: Vec<Point2<T>>,
    dt: T,
    t0: T,
}

#[derive(Deserialize)]
struct TrajectoryRepr<T> {
    points: Vec<Point2<T>>,
    dt: T,
    #[serde(default)]
    t0: T,
}

impl<T: Scalar> TryFrom<TrajectoryRepr<T>> for Trajectory<T> {
    type Error = Error;
    fn try_from(r: TrajectoryRepr<T>) -> Result<Self> {
        Trajectory::new(r.points, r.dt, r.t0)
    }
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(points: Vec<Point2<T>>, dt: T, t0: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidTrajectory(format!(
                "dt must be > 0, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidTrajectory("t0 must be finite".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidTrajectory("needs at least 1 point".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(Self { points, dt, t0 })
    }

    #[inline]
    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; a trajectory has at least one point.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.dt
    }

    #[inline]
    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn time_at(&self, k: usize) -> T {
        self.t0 + self.dt * T::from_usize(k).expect("index")
    }

    /// Same timing, new positions.
    pub fn with_points(&self, points: Vec<Point2<T>>) -> Result<Self> {
        Self::new(points, self.dt, self.t0)
    }

    pub fn transformed(&self, tf: &Rigid2<T>) -> Self {
        Self {
            points: self.points.iter().map(|&p| tf.apply(p)).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    pub fn headings(&self, fallback: T) -> Vec<T> {
        headings_from_offsets(&self.points, fallback)
    }

    pub fn into_points(self) -> Vec<Point2<T>> {
        self.points
    }

    /// Position at `time`, linearly interpolated and held constant outside
    /// the sampled span.
    pub fn sample(&self, time: T) -> Point2<T> {
        let u = (time - self.t0) / self.dt;
        if !(u > T::zero()) {
            return self.points[0];
        }
        let last = self.points.len() - 1;
        let k = u.floor();
        let i = k.to_usize().unwrap_or(usize::MAX);
        if i >= last {
            return self.points[last];
        }
        self.points[i].lerp(self.points[i + 1], u - k)
    }

    /// `n` points at `start + k * dt`. Times that land on our own samples
    /// reuse them exactly; others interpolate. Beyond either end the boundary
    /// point is held.
    pub fn window(&self, start: T, n: usize) -> Result<Self> {
        let u = (start - self.t0) / self.dt;
        let r = u.round();
        let points = if (u - r).abs() < T::lit(1e-6) {
            let last = (self.points.len() - 1) as i64;
            let base = r.to_i64().unwrap_or(0);
            (0..n as i64)
                .map(|k| self.points[(base + k).clamp(0, last) as usize])
                .collect()
        } else {
            (0..n)
                .map(|k| self.sample(start + self.dt * T::from_usize(k).expect("index")))
                .collect()
        };
        Self::new(points, self.dt, start)
    }
}

/// Rectangle footprint: `half_length` runs along `heading`, `half_width`
/// across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox<T> {
    pub center: Point2<T>,
    pub half_width: T,
    pub half_length: T,
    pub heading: T,
}

impl<T: Scalar> OrientedBox<T> {
    pub fn new(center: Point2<T>, half_width: T, half_length: T, heading: T) -> Result<Self> {
        if !(half_width > T::zero() && half_length > T::zero())
            || !half_width.is_finite()
            || !half_length.is_finite()
        {
            return Err(Error::InvalidBox(format!(
                "half extents must be positive and finite, got ({half_width}, {half_length})"
            )));
        }
        if !center.is_finite() || !heading.is_finite() {
            return Err(Error::InvalidBox("non-finite center or heading".into()));
        }
        Ok(Self {
            center,
            half_width,
            half_length,
            heading,
        })
    }

    /// Box from full `width` x `length` dimensions.
    pub fn from_dims(center: Point2<T>, width: T, length: T, heading: T) -> Result<Self> {
        let half = T::lit(0.5);
        Self::new(center, width * half, length * half, heading)
    }

    /// Unit vectors along the length and width directions.
    pub fn axes(&self) -> (Point2<T>, Point2<T>) {
        let forward = Point2::from_angle(self.heading);
        (forward, forward.perp())
    }

    /// Corners in counter-clockwise order, starting front-right.
    pub fn corners(&self) -> [Point2<T>; 4] {
        let (forward, left) = self.axes();
        let f = forward * self.half_length;
        let l = left * self.half_width;
        let c = self.center;
        [c + f - l, c + f + l, c - f + l, c - f - l]
    }

    /// Same box grown by `margin` on every side.
    pub fn inflated(&self, margin: T) -> Self {
        Self {
            half_width: self.half_width + margin,
            half_length: self.half_length + margin,
            ..*self
        }
    }
}

fn project_onto<T: Scalar>(corners: &[Point2<T>], axis: Point2<T>) -> (T, T) {
    let mut lo = corners[0].dot(axis);
    let mut hi = lo;
    for c in &corners[1..] {
        let v = c.dot(axis);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[inline]
fn disjoint<T: Scalar>(a: (T, T), b: (T, T)) -> bool {
    a.1 < b.0 || b.1 < a.0
}

/// Separating-axis test for two convex polygons given by their vertices in
/// order. Every edge normal of both polygons is a candidate axis; touching
/// polygons count as overlapping.
pub fn convex_polygons_overlap<T: Scalar>(a: &[Point2<T>], b: &[Point2<T>]) -> bool {
    for poly in [a, b] {
        let n = poly.len();
        for i in 0..n {
            let edge = poly[(i + 1) % n] - poly[i];
            let axis = edge.perp();
            if disjoint(project_onto(a, axis), project_onto(b, axis)) {
                return false;
            }
        }
    }
    true
}

/// Overlap test for two oriented boxes. A rectangle has only two distinct
/// edge directions, so four axes decide the question.
pub fn sat_overlap<T: Scalar>(a: &OrientedBox<T>, b: &OrientedBox<T>) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let (af, al) = a.axes();
    let (bf, bl) = b.axes();
    for axis in [af, al, bf, bl] {
        if disjoint(project_onto(&ca, axis), project_onto(&cb, axis)) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearestVertex<T> {
    pub point: Point2<T>,
    pub index: usize,
    pub distance: T,
}

/// Closest polyline vertex to `p`; ties go to the lowest index.
pub fn nearest_point_discrete<T: Scalar>(poly: &Polyline<T>, p: Point2<T>) -> NearestVertex<T> {
    nearest_vertex(poly.points(), p)
}

pub(crate) fn nearest_vertex<T: Scalar>(points: &[Point2<T>], p: Point2<T>) -> NearestVertex<T> {
    let mut best = 0;
    let mut best_d2 = points[0].distance_squared(p);
    for (i, q) in points.iter().enumerate().skip(1) {
        let d2 = q.distance_squared(p);
        if d2 < best_d2 {
            best = i;
            best_d2 = d2;
        }
    }
    NearestVertex {
        point: points[best],
        index: best,
        distance: best_d2.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection<T> {
    pub point: Point2<T>,
    pub arc_length: T,
    pub distance: T,
    pub segment: usize,
}

/// Closest point on the polyline (any segment, not only vertices).
pub fn project_point<T: Scalar>(poly: &Polyline<T>, p: Point2<T>) -> Projection<T> {
    let mut best: Option<Projection<T>> = None;
    let mut best_d2 = T::infinity();
    let mut acc = T::zero();
    for (i, (a, b)) in poly.segments().enumerate() {
        let ab = b - a;
        let len2 = ab.norm_squared();
        let len = len2.sqrt();
        let t = ((p - a).dot(ab) / len2).max(T::zero()).min(T::one());
        // exact vertices at the clamps
        let q = if t <= T::zero() {
            a
        } else if t >= T::one() {
            b
        } else {
            a + ab * t
        };
        let d2 = q.distance_squared(p);
        if d2 < best_d2 {
            best_d2 = d2;
            best = Some(Projection {
                point: q,
                arc_length: acc + len * t,
                distance: d2.sqrt(),
                segment: i,
            });
        }
        acc += len;
    }
    best.expect("polyline has at least one segment")
}

/// Side of `rel` relative to a heading: `rel.x * sin(h) - rel.y * cos(h)`.
/// Negative means the displacement points to the left of the heading,
/// positive to the right.
#[inline]
pub fn signed_side<T: Scalar>(rel: Point2<T>, heading: T) -> T {
    let (s, c) = heading.sin_cos();
    rel.x * s - rel.y * c
}

/// Per-point headings from forward offsets (the last point reuses the
/// backward offset). Offsets shorter than [`HEADING_DEGENERACY`] inherit the
/// previous heading; a degenerate first offset takes `fallback`.
pub fn headings_from_offsets<T: Scalar>(points: &[Point2<T>], fallback: T) -> Vec<T> {
    let n = points.len();
    let eps = T::lit(HEADING_DEGENERACY);
    let mut out = Vec::with_capacity(n);
    let mut prev = normalize_angle(fallback);
    for t in 0..n {
        let offset = if t + 1 < n {
            Some(points[t + 1] - points[t])
        } else if n >= 2 {
            Some(points[t] - points[t - 1])
        } else {
            None
        };
        let heading = match offset {
            Some(d) if d.norm() >= eps => d.angle(),
            _ => prev,
        };
        out.push(heading);
        prev = heading;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn line(points: &[(f64, f64)]) -> Polyline<f64> {
        Polyline::new(points.iter().map(|&(x, y)| p(x, y)).collect()).unwrap()
    }

    #[test]
    fn polyline_rejects_bad_input() {
        assert!(Polyline::new(vec![p(0.0, 0.0)]).is_err());
        assert!(Polyline::new(vec![p(0.0, 0.0), p(0.0, 0.0)]).is_err());
        assert!(Polyline::new(vec![p(0.0, 0.0), p(f64::NAN, 1.0)]).is_err());
        assert!(Polyline::new(vec![p(0.0, 0.0), p(1e-10, 0.0)]).is_err());
    }

    #[test]
    fn nearest_vertex_basic() {
        let poly = line(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let nv = nearest_point_discrete(&poly, p(1.1, 0.5));
        assert_eq!(nv.point, p(1.0, 0.0));
        assert_eq!(nv.index, 1);
        assert!((nv.distance - (0.01f64 + 0.25).sqrt()).abs() < 1e-15);

        let nv = nearest_point_discrete(&poly, p(2.0, 0.0));
        assert_eq!((nv.index, nv.distance), (2, 0.0));
    }

    #[test]
    fn nearest_vertex_tie_takes_lowest_index() {
        let poly = line(&[(0.0, 0.0), (2.0, 0.0)]);
        assert_eq!(nearest_point_discrete(&poly, p(1.0, 3.0)).index, 0);
    }

    #[test]
    fn projection_foot_and_clamp() {
        let poly = line(&[(0.0, 0.0), (2.0, 0.0)]);
        let pr = project_point(&poly, p(1.0, 1.0));
        assert_eq!(pr.point, p(1.0, 0.0));
        assert_eq!(pr.arc_length, 1.0);
        assert_eq!(pr.distance, 1.0);

        let pr = project_point(&poly, p(5.0, 1.0));
        assert_eq!(pr.point, p(2.0, 0.0));
        assert_eq!(pr.arc_length, 2.0);
    }

    #[test]
    fn signed_side_convention() {
        assert_eq!(signed_side(p(0.0, 1.0), 0.0), -1.0);
        assert_eq!(signed_side(p(0.0, -1.0), 0.0), 1.0);
        // heading north: east is on the right
        assert!(signed_side(p(1.0, 0.0), FRAC_PI_2) > 0.0);
    }

    #[test]
    fn box_corners_ccw() {
        let b = OrientedBox::new(p(0.0, 0.0), 1.0, 2.0, 0.0).unwrap();
        let c = b.corners();
        assert_eq!(c, [p(2.0, -1.0), p(2.0, 1.0), p(-2.0, 1.0), p(-2.0, -1.0)]);
        let mut area2 = 0.0;
        for i in 0..4 {
            area2 += c[i].cross(c[(i + 1) % 4]);
        }
        assert!((area2 - 16.0).abs() < 1e-12);
        assert!(OrientedBox::new(p(0.0, 0.0), 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn sat_basic_cases() {
        let a = OrientedBox::from_dims(p(0.0, 0.0), 1.0, 1.0, 0.0).unwrap();
        assert!(sat_overlap(&a, &a));
        let b = OrientedBox::from_dims(p(3.0, 0.0), 1.0, 1.0, 0.0).unwrap();
        assert!(!sat_overlap(&a, &b));
        // exactly touching faces
        let c = OrientedBox::from_dims(p(1.0, 0.0), 1.0, 1.0, 0.0).unwrap();
        assert!(sat_overlap(&a, &c));
        // diamond whose tip sits just outside the square's face
        let d = OrientedBox::from_dims(p(0.5 + 0.5 * 2f64.sqrt() + 1e-6, 0.0), 1.0, 1.0, FRAC_PI_4)
            .unwrap();
        assert!(!sat_overlap(&a, &d));
        // corner-to-corner diagonal separation that only a rotated axis catches
        let e = OrientedBox::from_dims(p(1.2, 1.2), 1.0, 1.0, FRAC_PI_4).unwrap();
        assert_eq!(
            sat_overlap(&a, &e),
            convex_polygons_overlap(&a.corners(), &e.corners())
        );
    }

    #[test]
    fn sat_matches_general_polygon_routine() {
        let mut seed = 7u64;
        let mut next = || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..2000 {
            let a = OrientedBox::new(p(0.0, 0.0), 0.2 + next(), 0.2 + next(), next() * 2.0 * PI)
                .unwrap();
            let b = OrientedBox::new(
                p(next() * 4.0 - 2.0, next() * 4.0 - 2.0),
                0.2 + next(),
                0.2 + next(),
                next() * 2.0 * PI,
            )
            .unwrap();
            assert_eq!(
                sat_overlap(&a, &b),
                convex_polygons_overlap(&a.corners(), &b.corners())
            );
        }
    }

    #[test]
    fn headings_straight_and_degenerate() {
        let pts: Vec<_> = (0..5).map(|i| p(i as f64, 0.0)).collect();
        assert_eq!(headings_from_offsets(&pts, 1.0), vec![0.0; 5]);
        assert_eq!(headings_from_offsets(&[p(3.0, 4.0)], 0.7), vec![0.7]);
        let parked = vec![p(1.0, 1.0); 4];
        assert_eq!(headings_from_offsets(&parked, -2.0), vec![-2.0; 4]);
        // moves, stops, the stop inherits
        let stop = vec![p(0.0, 0.0), p(0.0, 1.0), p(0.0, 1.0), p(0.0, 1.0)];
        let h = headings_from_offsets(&stop, 0.0);
        assert!(h.iter().all(|&v| (v - FRAC_PI_2).abs() < 1e-15));
    }

    #[test]
    fn headings_on_circle_follow_tangent() {
        let r = 10.0;
        let step = 0.1;
        let pts: Vec<_> = (0..8)
            .map(|k| {
                let a = k as f64 * step;
                p(r * a.cos(), r * a.sin())
            })
            .collect();
        let h = headings_from_offsets(&pts, 0.0);
        for (k, &hk) in h.iter().enumerate() {
            let tangent = k as f64 * step + FRAC_PI_2;
            let err = normalize_angle(hk - tangent).abs();
            assert!(err <= 2.0 * step, "k={k} err={err}");
        }
    }

    #[test]
    fn reversed_straight_headings_flip() {
        let pts: Vec<_> = (0..6).map(|i| p(i as f64 * 0.7, i as f64 * 0.3)).collect();
        let fwd = headings_from_offsets(&pts, 0.0);
        let mut rev_pts = pts.clone();
        rev_pts.reverse();
        let rev = headings_from_offsets(&rev_pts, 0.0);
        for (a, b) in fwd.iter().zip(&rev) {
            assert!(normalize_angle(a + PI - b).abs() < 1e-12);
        }
    }

    #[test]
    fn densify_is_bounded_and_idempotent() {
        let poly = line(&[(0.0, 0.0), (10.0, 0.0), (10.0, 1.3)]);
        let d = poly.densified(0.5);
        assert!(d.max_segment_length() <= 0.5 + 1e-12);
        assert_eq!(d.len(), 21 + 3);
        assert_eq!(d.densified(0.5), d);
        assert!((d.length() - poly.length()).abs() < 1e-12);
    }

    #[test]
    fn point_at_clamps() {
        let poly = line(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)]);
        assert_eq!(poly.point_at(-1.0), p(0.0, 0.0));
        assert_eq!(poly.point_at(5.0), p(3.0, 2.0));
        assert_eq!(poly.point_at(99.0), p(3.0, 4.0));
        assert!((poly.heading_at(4.0) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn works_in_f32() {
        let poly = Polyline::new(vec![Point2::new(0.0f32, 0.0), Point2::new(2.0, 0.0)]).unwrap();
        let pr = project_point(&poly, Point2::new(1.0f32, 1.0));
        assert_eq!(pr.arc_length, 1.0);
        let a = OrientedBox::from_dims(Point2::new(0.0f32, 0.0), 1.0, 1.0, 0.3).unwrap();
        assert!(sat_overlap(&a, &a));
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::new(vec![p(0.0, 0.0)], 0.0, 0.0).is_err());
        assert!(Trajectory::<f64>::new(vec![], 0.5, 0.0).is_err());
        let t = Trajectory::new(vec![p(0.0, 0.0), p(1.0, 0.0)], 0.5, 1.0).unwrap();
        assert_eq!(t.time_at(1), 1.5);
    }
}
