//! Kinematic bicycle ego.

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::{OrientedBox, Pose2, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Steering angle reached at `|steer| = 1`, radians.
    pub max_steer_angle: f64,
    /// Acceleration at full throttle, m/s^2.
    pub max_accel: f64,
    /// Deceleration at full brake, m/s^2.
    pub max_brake: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            max_steer_angle: 35f64.to_radians(),
            max_accel: 3.0,
            max_brake: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose2,
    pub speed: f64,
    pub width: f64,
    pub length: f64,
    pub wheelbase: f64,
}

impl EgoState {
    pub fn from_scenario(sc: &crate::io::scenario::ScenarioSpec) -> Self {
        Self {
            pose: sc.ego.pose,
            speed: sc.ego.speed,
            width: sc.ego.dims.width,
            length: sc.ego.dims.length,
            wheelbase: sc.ego.dims.wheelbase,
        }
    }

    pub fn footprint(&self) -> Result<OrientedBox> {
        OrientedBox::from_dims(
            self.pose.position,
            self.width,
            self.length,
            self.pose.heading,
        )
    }
}

/// Normalized actuator command. `steer` is in `[-1, 1]` with negative values
/// turning left; `throttle` and `brake` are in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl Control {
    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
        }
    }
}

/// One integration step: trapezoidal speed, position advanced along the
/// mid-step heading, heading rate `v * tan(delta) / wheelbase`. Speed never
/// goes negative.
pub fn step_ego(ego: &EgoState, control: &Control, dt: f64, params: &VehicleParams) -> EgoState {
    let c = control.clamped();
    let accel = c.throttle * params.max_accel - c.brake * params.max_brake;
    let v0 = ego.speed;
    let v1 = (v0 + accel * dt).max(0.0);
    let v_avg = 0.5 * (v0 + v1);
    let delta = -c.steer * params.max_steer_angle;
    let yaw_rate = v_avg * delta.tan() / ego.wheelbase;
    let heading = ego.pose.heading;
    let mid = heading + 0.5 * yaw_rate * dt;
    let position = ego.pose.position + Point2::from_angle(mid) * (v_avg * dt);
    EgoState {
        pose: Pose2::new(position, heading + yaw_rate * dt),
        speed: v1,
        ..*ego
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ego(speed: f64) -> EgoState {
        EgoState {
            pose: Pose2::new(Point2::new(0.0, 0.0), 0.0),
            speed,
            width: 2.0,
            length: 4.5,
            wheelbase: 2.7,
        }
    }

    #[test]
    fn constant_steer_traces_circle() {
        let p = VehicleParams::default();
        let c = Control {
            steer: -0.3,
            throttle: 0.0,
            brake: 0.0,
        };
        let delta: f64 = 0.3 * p.max_steer_angle;
        let radius = 2.7 / delta.tan();
        let center = Point2::new(0.0, radius);
        let mut s = ego(5.0);
        let dt = 0.05;
        let steps = (2.0 * std::f64::consts::PI * radius / (5.0 * dt)).ceil() as usize;
        for _ in 0..steps {
            s = step_ego(&s, &c, dt, &p);
            let r = s.pose.position.distance(center);
            assert!(
                (r - radius).abs() / radius < 0.01,
                "r = {r}, expected {radius}"
            );
        }
        assert!(s.pose.position.distance(Point2::new(0.0, 0.0)) < 0.3);
    }

    #[test]
    fn zero_control_at_rest_is_fixed_point() {
        let s = ego(0.0);
        assert_eq!(
            step_ego(&s, &Control::default(), 0.05, &VehicleParams::default()),
            s
        );
    }

    #[test]
    fn right_steer_turns_clockwise() {
        let p = VehicleParams::default();
        let c = Control {
            steer: 0.5,
            ..Control::default()
        };
        let s = step_ego(&ego(5.0), &c, 0.1, &p);
        assert!(s.pose.heading < 0.0);
    }

    #[test]
    fn full_brake_stops_and_stays() {
        let p = VehicleParams::default();
        let c = Control {
            brake: 1.0,
            ..Control::default()
        };
        let mut s = ego(10.0);
        for _ in 0..40 {
            s = step_ego(&s, &c, 0.05, &p);
        }
        assert_eq!(s.speed, 0.0);
        let x = s.pose.position.x;
        s = step_ego(&s, &c, 0.05, &p);
        assert_eq!(s.pose.position.x, x);
        // 10 m/s at 6 m/s^2 stops in 100/12 m; the clipped last step adds
        // at most half a step of crawl.
        assert!((x - 100.0 / 12.0).abs() < 0.01, "x = {x}");
    }

    #[test]
    fn displacement_bounded_by_kinematics() {
        let p = VehicleParams::default();
        let c = Control {
            steer: 0.2,
            throttle: 1.0,
            brake: 0.0,
        };
        let mut s = ego(3.0);
        let dt = 0.05;
        for _ in 0..100 {
            let n = step_ego(&s, &c, dt, &p);
            let moved = n.pose.position.distance(s.pose.position);
            assert!(moved <= s.speed * dt + 0.5 * p.max_accel * dt * dt + 1e-12);
            s = n;
        }
    }
}
