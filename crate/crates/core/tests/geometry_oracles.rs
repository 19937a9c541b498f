use pgs_core::geometry::{nearest_point_discrete, project_point, sat_overlap, signed_side, Point2};
use pgs_core::{OrientedBox, Polyline};
use pgs_testkit as tk;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tuple(p: Point2<f64>) -> tk::P {
    (p.x, p.y)
}

fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox {
    let c = Point2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
    OrientedBox::from_dims(
        c,
        rng.random_range(0.3..4.0),
        rng.random_range(0.3..8.0),
        rng.random_range(-4.0..4.0),
    )
    .unwrap()
}

#[test]
fn corners_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let b = random_box(&mut rng);
        let r = tk::box_corners(
            tuple(b.center),
            2.0 * b.half_width,
            2.0 * b.half_length,
            b.heading,
        );
        for (c, q) in b.corners().iter().zip(r) {
            assert!((c.x - q.0).abs() < 1e-12 && (c.y - q.1).abs() < 1e-12);
        }
    }
}

#[test]
fn sat_agrees_with_clipping_on_decisive_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut decisive, mut overlapping) = (0, 0);
    for _ in 0..2000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let truth = tk::overlap_oracle(&a.corners().map(tuple), &b.corners().map(tuple));
        if truth.margin > 1e-9 {
            decisive += 1;
            overlapping += truth.overlap as usize;
            assert_eq!(sat_overlap(&a, &b), truth.overlap, "{a:?} {b:?} {truth:?}");
        }
    }
    assert!(decisive > 1900);
    assert!(overlapping > 200 && overlapping < decisive - 200);
}

#[test]
fn sat_agrees_with_point_sampling_away_from_contact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let truth = tk::overlap_oracle(&a.corners().map(tuple), &b.corners().map(tuple));
        if truth.margin > 0.05 {
            let sampled = tk::sampled_overlap(&a.corners().map(tuple), &b.corners().map(tuple), 40);
            assert_eq!(sat_overlap(&a, &b), sampled);
        }
    }
}

#[test]
fn touching_boxes_overlap() {
    let a = OrientedBox::from_dims(Point2::new(0.0, 0.0), 2.0, 4.0, 0.0).unwrap();
    let b = OrientedBox::from_dims(Point2::new(4.0, 0.0), 2.0, 4.0, 0.0).unwrap();
    assert!(sat_overlap(&a, &b));
    let c = OrientedBox::from_dims(Point2::new(4.0 + 1e-9, 0.0), 2.0, 4.0, 0.0).unwrap();
    assert!(!sat_overlap(&a, &c));
}

#[test]
fn side_sign_for_cardinal_displacements() {
    // Heading east: north is left, south is right.
    assert!(signed_side(Point2::new(0.0, 1.0), 0.0) < 0.0);
    assert!(signed_side(Point2::new(0.0, -1.0), 0.0) > 0.0);
    // Heading north: west is left, east is right.
    let h = std::f64::consts::FRAC_PI_2;
    assert!(signed_side(Point2::new(-1.0, 0.0), h) < 0.0);
    assert!(signed_side(Point2::new(1.0, 0.0), h) > 0.0);
}

fn polyline_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, 0.5..4.0f64), 2..12).prop_map(|steps| {
        let mut pts = vec![(0.0, 0.0)];
        for (turn, len) in steps {
            let &(x, y) = pts.last().unwrap();
            let h = turn * 0.4;
            pts.push((x + len * h.cos(), y + len * h.sin()));
        }
        pts
    })
}

fn to_polyline(pts: &[(f64, f64)]) -> Polyline {
    Polyline::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
}

proptest! {
    #[test]
    fn nearest_vertex_matches_brute_force(pts in polyline_strategy(), px in -10.0..10.0f64, py in -10.0..10.0f64) {
        let line = to_polyline(&pts);
        let nv = nearest_point_discrete(&line, Point2::new(px, py));
        let (i, d) = tk::nearest_vertex_brute(&pts, (px, py));
        prop_assert!((nv.distance - d).abs() < 1e-12);
        prop_assert_eq!(nv.index, i);
    }

    #[test]
    fn projection_matches_dense_sampling(pts in polyline_strategy(), px in -10.0..10.0f64, py in -10.0..10.0f64) {
        let line = to_polyline(&pts);
        let proj = project_point(&line, Point2::new(px, py));
        let sampled = tk::polyline_distance_sampled(&pts, (px, py), 2000);
        prop_assert!(proj.distance <= sampled + 1e-12);
        prop_assert!(sampled - proj.distance < 2e-3);
        let at = line.point_at(proj.arc_length);
        prop_assert!(at.distance(proj.point) < 1e-9);
    }

    #[test]
    fn densify_bounds_spacing_and_is_idempotent(pts in polyline_strategy(), spacing in 0.2..2.0f64) {
        let line = to_polyline(&pts);
        let d = line.densified(spacing);
        prop_assert!(d.max_segment_length() <= spacing + 1e-9);
        prop_assert!((d.length() - line.length()).abs() < 1e-9);
        prop_assert_eq!(d.densified(spacing), d.clone());
        for p in line.points() {
            prop_assert!(d.points().contains(p));
        }
    }

    #[test]
    fn sat_is_symmetric_and_invariant_to_heading_turns(
        ax in -5.0..5.0f64, ay in -5.0..5.0f64, ah in -4.0..4.0f64,
        bx in -5.0..5.0f64, by in -5.0..5.0f64, bh in -4.0..4.0f64,
    ) {
        let a = OrientedBox::from_dims(Point2::new(ax, ay), 2.0, 4.5, ah).unwrap();
        let b = OrientedBox::from_dims(Point2::new(bx, by), 1.8, 5.0, bh).unwrap();
        prop_assert_eq!(sat_overlap(&a, &b), sat_overlap(&b, &a));
        let mut flipped = b;
        flipped.heading += std::f64::consts::PI;
        prop_assert_eq!(sat_overlap(&a, &b), sat_overlap(&a, &flipped));
    }
}
