//! Scripted driver used in place of a human demonstrator.
//!
//! Steering is pure pursuit toward a centerline point ahead of the car.
//! The expert accelerates whenever it is not turning and brakes once it is
//! well above a target speed set by the sharpest curvature within braking
//! distance. Every command is one of the seven canonical label actions, so
//! a classifier trained on the recordings can reproduce the expert exactly.
//! During the camera intro the car is left idle on the grid.

use crate::dataset::{label_to_action, ActionLabel};
use crate::sim::{CarState, ContinuousAction, SimConfig, SimState, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedExpert {
    /// Lookahead at standstill, units.
    pub lookahead_base: f64,
    /// Extra lookahead per unit/s of speed, seconds.
    pub lookahead_gain: f64,
    /// Fraction of the grip limit the speed target may use.
    pub grip_margin: f64,
    pub max_speed: f64,
    /// Farthest distance ahead the speed target looks at, units.
    pub horizon: f64,
    /// Pursuit steering magnitude below which the expert drives straight.
    pub steer_band: f64,
    /// Overspeed tolerated before braking, units/s.
    pub brake_band: f64,
    /// Below this speed steering has no effect, so the expert only accelerates.
    pub crawl_speed: f64,
    /// Frames spent idling on the grid while the camera zooms in.
    pub wait_frames: u32,
}

impl Default for ScriptedExpert {
    fn default() -> Self {
        Self {
            lookahead_base: 12.0,
            lookahead_gain: 0.25,
            grip_margin: 0.8,
            max_speed: 45.0,
            horizon: 25.0,
            steer_band: 0.15,
            brake_band: 12.0,
            crawl_speed: 12.0,
            wait_frames: crate::dataset::INTRO_FRAMES,
        }
    }
}

/// Steering command (positive right) that puts the car on the circle through
/// `target`, expressed as a fraction of full lock.
pub fn pursuit_steer(car: &CarState, target: Vec2, cfg: &SimConfig) -> f64 {
    let forward = car.forward();
    let left = forward.perp();
    let d = target - car.position;
    let (x, y) = (d.dot(forward), d.dot(left));
    let dist2 = x * x + y * y;
    if dist2 <= f64::EPSILON {
        return 0.0;
    }
    let curvature = 2.0 * y / dist2;
    let wheel_angle = (cfg.wheelbase * curvature).atan();
    (-wheel_angle / cfg.max_steer_angle).clamp(-1.0, 1.0)
}

impl ScriptedExpert {
    pub fn lookahead(&self, speed: f64) -> f64 {
        self.lookahead_base + self.lookahead_gain * speed
    }

    /// Highest speed that can still negotiate the curvature within braking
    /// distance ahead of centerline point `index`.
    pub fn target_speed(&self, state: &SimState, index: usize) -> f64 {
        let track = &state.track;
        let cfg = &state.config;
        let v = state.car.speed();
        let horizon = (v * v / (2.0 * cfg.brake_strength) + 0.3 * v + 5.0).min(self.horizon);
        let steps = (horizon / track.spacing()).ceil() as usize + 1;
        let kappa = (0..steps).map(|k| track.curvature(index + k)).fold(0.0, f64::max);
        let grip = self.grip_margin * cfg.max_lateral_accel;
        if kappa > 0.0 {
            (grip / kappa).sqrt().min(self.max_speed)
        } else {
            self.max_speed
        }
    }

    pub fn label(&self, state: &SimState) -> ActionLabel {
        let car = &state.car;
        let track = &state.track;
        let index = track.nearest_index(car.position);
        let ahead = (self.lookahead(car.speed()) / track.spacing()).round() as usize;
        let desired = pursuit_steer(car, track.point(index + ahead), &state.config);
        let overspeed = car.speed() > self.target_speed(state, index) + self.brake_band;

        if state.step_index < self.wait_frames {
            ActionLabel::Keep
        } else if car.speed() < self.crawl_speed {
            ActionLabel::Acc
        } else if desired < -self.steer_band {
            if overspeed { ActionLabel::LeftB } else { ActionLabel::Left }
        } else if desired > self.steer_band {
            if overspeed { ActionLabel::RightB } else { ActionLabel::Right }
        } else if overspeed {
            ActionLabel::Brake
        } else {
            ActionLabel::Acc
        }
    }

    pub fn act(&self, state: &SimState) -> ContinuousAction {
        label_to_action(self.label(state))
    }
}
