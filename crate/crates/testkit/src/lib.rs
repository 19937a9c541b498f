//! Reference implementations for tests. Everything here is plain `f64` on
//! tuples and deliberately shares no code with `pgs-core`: slow, direct
//! formulations to compare against.

pub type P = (f64, f64);

fn sub(a: P, b: P) -> P {
    (a.0 - b.0, a.1 - b.1)
}

fn cross(a: P, b: P) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn dot(a: P, b: P) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

fn dist(a: P, b: P) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Corners of a rectangle centered at `c` with `length` along `heading`,
/// counter-clockwise.
pub fn box_corners(c: P, width: f64, length: f64, heading: f64) -> [P; 4] {
    let (s, co) = heading.sin_cos();
    let local = [
        (length / 2.0, -width / 2.0),
        (length / 2.0, width / 2.0),
        (-length / 2.0, width / 2.0),
        (-length / 2.0, -width / 2.0),
    ];
    local.map(|(x, y)| (c.0 + co * x - s * y, c.1 + s * x + co * y))
}

/// Shoelace area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area(poly: &[P]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross(poly[i], poly[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// Sutherland-Hodgman clip of `subject` by the convex counter-clockwise
/// polygon `clip`.
pub fn clip_polygon(subject: &[P], clip: &[P]) -> Vec<P> {
    let mut out = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % m]);
        let inside = |p: P| cross(sub(b, a), sub(p, a)) >= 0.0;
        let input = std::mem::take(&mut out);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            // p + t (q - p) on the line through a and b.
            let hit = |p: P, q: P| {
                let d = sub(q, p);
                let ab = sub(b, a);
                let t = cross(ab, sub(a, p)) / cross(ab, d);
                (p.0 + d.0 * t, p.1 + d.1 * t)
            };
            match (inside(prev), inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(hit(prev, cur)),
                (false, true) => {
                    out.push(hit(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

/// Distance from `p` to segment `ab`.
pub fn point_segment_distance(p: P, a: P, b: P) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, (a.0 + ab.0 * t, a.1 + ab.1 * t))
}

/// Minimum distance between the boundaries of two polygons.
pub fn boundary_distance(a: &[P], b: &[P]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        let (a0, a1) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            let (b0, b1) = (b[j], b[(j + 1) % b.len()]);
            best = best
                .min(point_segment_distance(a0, b0, b1))
                .min(point_segment_distance(a1, b0, b1))
                .min(point_segment_distance(b0, a0, a1))
                .min(point_segment_distance(b1, a0, a1));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapTruth {
    pub overlap: bool,
    /// Lower bound on the penetration depth when overlapping, boundary gap
    /// otherwise. Pairs with a tiny margin are too close to call.
    pub margin: f64,
}

/// Overlap by intersection area. The penetration bound uses
/// `area <= depth * diameter`, with the smaller box diagonal as diameter.
pub fn overlap_oracle(a: &[P; 4], b: &[P; 4]) -> OverlapTruth {
    let area = polygon_area(&clip_polygon(a, b)).abs();
    if area > 0.0 {
        let diag = dist(a[0], a[2]).min(dist(b[0], b[2]));
        OverlapTruth {
            overlap: true,
            margin: area / diag,
        }
    } else {
        OverlapTruth {
            overlap: false,
            margin: boundary_distance(a, b),
        }
    }
}

fn inside_convex(poly: &[P], p: P) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(sub(poly[(i + 1) % n], poly[i]), sub(p, poly[i])) >= 0.0)
}

/// Overlap by sampling an `n x n` grid over `a` (plus its corners) and
/// testing containment in `b`, and the other way round.
pub fn sampled_overlap(a: &[P; 4], b: &[P; 4], n: usize) -> bool {
    let probe = |x: &[P; 4], y: &[P; 4]| {
        let u = sub(x[1], x[0]);
        let v = sub(x[3], x[0]);
        (0..=n).any(|i| {
            (0..=n).any(|j| {
                let (s, t) = (i as f64 / n as f64, j as f64 / n as f64);
                inside_convex(y, (x[0].0 + u.0 * s + v.0 * t, x[0].1 + u.1 * s + v.1 * t))
            })
        })
    };
    probe(a, b) || probe(b, a)
}

/// Index and distance of the closest vertex; first index wins ties.
pub fn nearest_vertex_brute(points: &[P], p: P) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &q) in points.iter().enumerate() {
        let d = dist(p, q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Distance to a polyline by sampling each segment at `per_segment + 1`
/// points. Overestimates by at most half the sample spacing.
pub fn polyline_distance_sampled(points: &[P], p: P, per_segment: usize) -> f64 {
    let mut best = f64::INFINITY;
    for w in points.windows(2) {
        for k in 0..=per_segment {
            let t = k as f64 / per_segment as f64;
            let q = (
                w[0].0 + (w[1].0 - w[0].0) * t,
                w[0].1 + (w[1].1 - w[0].1) * t,
            );
            best = best.min(dist(p, q));
        }
    }
    best
}

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Weighted softmax cross-entropy written the textbook way.
pub fn cross_entropy(scores: &[f64], label: usize, weight: f64) -> f64 {
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    -weight * (scores[label].exp() / z).ln()
}

/// Mean L1 distance between matching points.
pub fn mean_l1(a: &[P], b: &[P]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p.0 - q.0).abs() + (p.1 - q.1).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// `sum max(0, beta - |ego_t - agent|)` over `(t, agent point)` pairs.
pub fn hinge_sum(ego: &[P], events: &[(usize, P)], beta: f64) -> f64 {
    events
        .iter()
        .map(|&(t, q)| (beta - dist(ego[t], q)).max(0.0))
        .sum()
}
