//! Aim-point PID tracking.

use serde::{Deserialize, Serialize};

use super::vehicle::{Control, EgoState};
use crate::geometry::{project_point, Point2};
use crate::scalar::normalize_angle;
use crate::Polyline;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PIDConfig {
    /// Aim distance below `speed_threshold`, meters along the path.
    pub near_aim: f64,
    /// Aim distance at or above `speed_threshold`.
    pub far_aim: f64,
    pub speed_threshold: f64,
    pub lateral: PidGains,
    pub longitudinal: PidGains,
    /// Bound on each integral accumulator.
    pub integral_clamp: f64,
}

impl Default for PIDConfig {
    fn default() -> Self {
        Self {
            near_aim: 4.0,
            far_aim: 10.0,
            speed_threshold: 6.5,
            lateral: PidGains {
                kp: 1.0,
                ki: 0.0,
                kd: 0.1,
            },
            longitudinal: PidGains {
                kp: 0.5,
                ki: 0.05,
                kd: 0.0,
            },
            integral_clamp: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Channel {
    integral: f64,
    prev_error: Option<f64>,
}

impl Channel {
    fn update(&mut self, error: f64, dt: f64, gains: &PidGains, clamp: f64) -> f64 {
        self.integral = (self.integral + error * dt).clamp(-clamp, clamp);
        let deriv = match self.prev_error {
            Some(p) if dt > 0.0 => (error - p) / dt,
            _ => 0.0,
        };
        self.prev_error = Some(error);
        gains.kp * error + gains.ki * self.integral + gains.kd * deriv
    }
}

/// Integrator and derivative memory of both loops.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    lateral: Channel,
    longitudinal: Channel,
}

impl PidState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Point on `path` lying `near_aim` (slow) or `far_aim` (fast) meters past
/// the ego's projection; clamped to the path end.
pub fn pid_aim_point(path: &Polyline, ego: &EgoState, cfg: &PIDConfig) -> Point2<f64> {
    let ahead = if ego.speed >= cfg.speed_threshold {
        cfg.far_aim
    } else {
        cfg.near_aim
    };
    let proj = project_point(path, ego.pose.position);
    path.point_at(proj.arc_length + ahead)
}

/// Steers toward `aim` from the heading error and tracks `target_speed`
/// with throttle or brake.
pub fn pid_control(
    ego: &EgoState,
    aim: Point2<f64>,
    target_speed: f64,
    cfg: &PIDConfig,
    state: &mut PidState,
    dt: f64,
) -> Control {
    let to_aim = aim - ego.pose.position;
    let heading_error = if to_aim.norm() < 1e-6 {
        0.0
    } else {
        normalize_angle(to_aim.angle() - ego.pose.heading)
    };
    let lat = state
        .lateral
        .update(heading_error, dt, &cfg.lateral, cfg.integral_clamp);
    let lon = state.longitudinal.update(
        target_speed - ego.speed,
        dt,
        &cfg.longitudinal,
        cfg.integral_clamp,
    );
    // `+ 0.0` folds a negative zero into zero.
    Control {
        steer: (-lat).clamp(-1.0, 1.0) + 0.0,
        throttle: lon.clamp(0.0, 1.0) + 0.0,
        brake: (-lon).clamp(0.0, 1.0) + 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::vehicle::{step_ego, VehicleParams};
    use crate::Pose2;

    fn ego_at(x: f64, y: f64, heading: f64, speed: f64) -> EgoState {
        EgoState {
            pose: Pose2::new(Point2::new(x, y), heading),
            speed,
            width: 2.0,
            length: 4.5,
            wheelbase: 2.7,
        }
    }

    fn straight() -> Polyline {
        Polyline::new(vec![Point2::new(-10.0, 0.0), Point2::new(300.0, 0.0)]).unwrap()
    }

    #[test]
    fn aim_distance_switches_on_speed() {
        let cfg = PIDConfig::default();
        let slow = pid_aim_point(&straight(), &ego_at(0.0, 0.0, 0.0, 5.0), &cfg);
        let fast = pid_aim_point(&straight(), &ego_at(0.0, 0.0, 0.0, 8.0), &cfg);
        assert!((slow.x - 4.0).abs() < 1e-9);
        assert!((fast.x - 10.0).abs() < 1e-9);
        let end = pid_aim_point(&straight(), &ego_at(299.0, 0.0, 0.0, 8.0), &cfg);
        assert_eq!(end, Point2::new(300.0, 0.0));
    }

    #[test]
    fn aligned_and_at_speed_gives_zero_command() {
        let cfg = PIDConfig::default();
        let mut st = PidState::default();
        let e = ego_at(0.0, 0.0, 0.0, 5.0);
        let c = pid_control(&e, Point2::new(10.0, 0.0), 5.0, &cfg, &mut st, 0.05);
        assert_eq!(c, Control::default());
        assert!(c.steer.is_sign_positive());
    }

    #[test]
    fn aim_left_steers_negative() {
        let cfg = PIDConfig::default();
        let mut st = PidState::default();
        let e = ego_at(0.0, 0.0, 0.0, 5.0);
        let c = pid_control(&e, Point2::new(10.0, 3.0), 5.0, &cfg, &mut st, 0.05);
        assert!(c.steer < 0.0);
    }

    #[test]
    fn lateral_step_settles() {
        let cfg = PIDConfig::default();
        let params = VehicleParams::default();
        let path = straight();
        let mut st = PidState::default();
        let mut e = ego_at(0.0, 1.0, 0.0, 5.0);
        let dt = 0.05;
        for _ in 0..100 {
            let aim = pid_aim_point(&path, &e, &cfg);
            let c = pid_control(&e, aim, 5.0, &cfg, &mut st, dt);
            e = step_ego(&e, &c, dt, &params);
        }
        assert!(e.pose.position.y.abs() < 0.2, "y = {}", e.pose.position.y);
    }

    #[test]
    fn speed_tracks_target() {
        let cfg = PIDConfig::default();
        let params = VehicleParams::default();
        let path = straight();
        let mut st = PidState::default();
        let mut e = ego_at(0.0, 0.0, 0.0, 2.0);
        for _ in 0..400 {
            let aim = pid_aim_point(&path, &e, &cfg);
            let c = pid_control(&e, aim, 8.0, &cfg, &mut st, 0.05);
            e = step_ego(&e, &c, 0.05, &params);
        }
        assert!((e.speed - 8.0).abs() < 0.2, "v = {}", e.speed);
    }
}
