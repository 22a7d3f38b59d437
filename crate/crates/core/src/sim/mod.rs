//! Deterministic top-down racing environment.
//!
//! A kinematic bicycle model drives over a closed loop of road tiles. Each
//! newly touched tile pays `1000 / N`, every frame costs `0.1`, and leaving the
//! square playfield costs `100` and ends the episode.

mod config;
mod geom;
mod render;
mod track;

use std::sync::Arc;

use thiserror::Error;

pub use config::{parse_key_values, SimConfig};
pub use geom::Vec2;
pub use render::{render_observation, zoom_at, CAR_SCREEN_ROW, OBS_SIZE, PIXELS_PER_UNIT};
pub use track::{generate_track, Tile, Track, PLAYFIELD_HALF_EXTENT, ROAD_HALF_WIDTH, TRACK_RADIUS};

/// Reward paid out across all tiles of a track.
pub const TRACK_REWARD: f64 = 1000.0;
/// Reward charged every frame.
pub const FRAME_PENALTY: f64 = 0.1;
/// Reward charged for leaving the playfield.
pub const OFF_FIELD_PENALTY: f64 = 100.0;
/// Car body half-length; tiles are touched at the centre and both ends.
pub const CAR_HALF_LENGTH: f64 = 2.0;
pub const CAR_HALF_WIDTH: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("track generation failed for seed {seed} after {attempts} attempts")]
    TrackGeneration { seed: u64, attempts: u32 },
    #[error("step called on a finished episode (step {step_index})")]
    EpisodeDone { step_index: u32 },
    #[error("action out of range: {0:?}")]
    InvalidAction(ContinuousAction),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Driver command: steer in [-1, 1] (negative is left), gas and brake in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContinuousAction {
    pub steer: f32,
    pub gas: f32,
    pub brake: f32,
}

impl ContinuousAction {
    pub const fn new(steer: f32, gas: f32, brake: f32) -> Self {
        Self { steer, gas, brake }
    }

    pub fn is_valid(&self) -> bool {
        (-1.0..=1.0).contains(&self.steer) && (0.0..=1.0).contains(&self.gas) && (0.0..=1.0).contains(&self.brake)
    }
}

/// Image channel layout fed to the renderer and the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputMode {
    Rgb,
    Gray,
}

impl InputMode {
    pub const fn channels(self) -> usize {
        match self {
            InputMode::Rgb => 3,
            InputMode::Gray => 1,
        }
    }

    pub const fn code(self) -> u8 {
        match self {
            InputMode::Rgb => 0,
            InputMode::Gray => 1,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(InputMode::Rgb),
            1 => Some(InputMode::Gray),
            _ => None,
        }
    }
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputMode::Rgb => "rgb",
            InputMode::Gray => "gray",
        })
    }
}

impl std::str::FromStr for InputMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rgb" => Ok(InputMode::Rgb),
            "gray" | "grayscale" => Ok(InputMode::Gray),
            _ => Err(format!("unknown input mode {s:?} (expected rgb or gray)")),
        }
    }
}

/// Row-major 8-bit image, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Observation {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), height * width * channels, "pixel buffer does not match dimensions");
        Self { height, width, channels, pixels }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let i = (row * self.width + col) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    pub fn mode(&self) -> Option<InputMode> {
        match self.channels {
            3 => Some(InputMode::Rgb),
            1 => Some(InputMode::Gray),
            _ => None,
        }
    }
}

/// Seven normalized readings in fixed order:
/// true speed, ABS front-left, front-right, rear-left, rear-right,
/// steering position, gyroscope.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorVector(pub [f32; 7]);

impl SensorVector {
    pub const LEN: usize = 7;
    pub const SPEED: usize = 0;
    pub const ABS_FL: usize = 1;
    pub const ABS_FR: usize = 2;
    pub const ABS_RL: usize = 3;
    pub const ABS_RR: usize = 4;
    pub const STEERING: usize = 5;
    pub const GYRO: usize = 6;

    pub fn values(&self) -> &[f32; 7] {
        &self.0
    }
}

/// Normalization constants for [`read_sensors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNorms {
    pub v_max: f64,
    pub omega_max: f64,
    pub gamma_max: f64,
}

impl From<&SimConfig> for SensorNorms {
    fn from(c: &SimConfig) -> Self {
        Self { v_max: c.v_max, omega_max: c.omega_max, gamma_max: c.gamma_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CarState {
    pub position: Vec2,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub linear_velocity: Vec2,
    /// Radians/s, positive turning left.
    pub yaw_rate: f64,
    /// In [-1, 1], negative is left.
    pub steering_position: f64,
    /// Angular speeds, rad/s: front-left, front-right, rear-left, rear-right.
    pub wheel_speeds: [f64; 4],
}

impl CarState {
    pub fn speed(&self) -> f64 {
        self.linear_velocity.length()
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Points where the body touches tiles: rear, centre, front.
    pub fn contact_points(&self) -> [Vec2; 3] {
        let f = self.forward() * CAR_HALF_LENGTH;
        [self.position - f, self.position, self.position + f]
    }
}

pub fn read_sensors(car: &CarState, norms: &SensorNorms) -> SensorVector {
    let speed = (car.speed() / norms.v_max).clamp(0.0, 1.0);
    let wheel = |i: usize| (car.wheel_speeds[i] / norms.omega_max).clamp(0.0, 1.0) as f32;
    SensorVector([
        speed as f32,
        wheel(0),
        wheel(1),
        wheel(2),
        wheel(3),
        car.steering_position.clamp(-1.0, 1.0) as f32,
        (car.yaw_rate / norms.gamma_max).clamp(-1.0, 1.0) as f32,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub track: Arc<Track>,
    pub config: SimConfig,
    pub car: CarState,
    pub step_index: u32,
    pub tiles_visited: Vec<bool>,
    pub visited_count: usize,
    pub off_field: bool,
    pub done: bool,
    pub last_reward: f64,
    pub total_reward: f64,
}

impl SimState {
    /// Fresh episode with the car at rest on tile 0, facing along the track.
    pub fn reset(track: Arc<Track>, config: SimConfig) -> Self {
        let car = CarState { position: track.point(0), heading: track.direction(0), ..CarState::default() };
        let n = track.tile_count();
        Self {
            track,
            config,
            car,
            step_index: 0,
            tiles_visited: vec![false; n],
            visited_count: 0,
            off_field: false,
            done: false,
            last_reward: 0.0,
            total_reward: 0.0,
        }
    }

    pub fn new_episode(seed: u64, config: SimConfig) -> Result<Self, SimError> {
        Ok(Self::reset(Arc::new(generate_track(seed)?), config))
    }

    pub fn sensors(&self) -> SensorVector {
        read_sensors(&self.car, &SensorNorms::from(&self.config))
    }

    pub fn observe(&self, mode: InputMode) -> Observation {
        render_observation(self, mode)
    }

    /// Advances one fixed tick.
    pub fn step(&self, action: &ContinuousAction) -> Result<SimState, SimError> {
        if self.done {
            return Err(SimError::EpisodeDone { step_index: self.step_index });
        }
        if !action.is_valid() {
            return Err(SimError::InvalidAction(*action));
        }
        let cfg = &self.config;
        let dt = cfg.dt;
        let steer = f64::from(action.steer);
        let brake = f64::from(action.brake);
        let gas = if steer.abs() > cfg.gas_cut_threshold { 0.0 } else { f64::from(action.gas) };

        let mut car = self.car;
        let max_delta = cfg.steer_rate * dt;
        car.steering_position =
            (car.steering_position + (steer - car.steering_position).clamp(-max_delta, max_delta)).clamp(-1.0, 1.0);

        let speed = car.speed();
        let on_road = self.track.on_road(car.position);
        let mut decel = brake * cfg.brake_strength + cfg.drag * speed * speed;
        if speed > 0.0 {
            decel += cfg.rolling_resistance;
            if !on_road {
                decel += cfg.grass_drag;
            }
        }
        let speed = (speed + (gas * cfg.gas_accel - decel) * dt).max(0.0);

        let wheel_angle = -car.steering_position * cfg.max_steer_angle;
        let mut yaw = speed / cfg.wheelbase * wheel_angle.tan();
        if speed > 0.0 && (yaw * speed).abs() > cfg.max_lateral_accel {
            yaw = yaw.signum() * cfg.max_lateral_accel / speed;
        }
        yaw = yaw.clamp(-cfg.max_yaw_rate, cfg.max_yaw_rate);

        car.yaw_rate = yaw;
        car.heading += yaw * dt;
        car.linear_velocity = car.forward() * speed;
        car.position = car.position + car.linear_velocity * dt;

        let half_track = 0.5 * cfg.track_width;
        let slip = 1.0 - cfg.brake_slip * brake;
        let front = 1.0 / wheel_angle.cos();
        let side = |offset: f64| (speed - yaw * offset).max(0.0);
        car.wheel_speeds = [
            side(half_track) * front * slip / cfg.wheel_radius,
            side(-half_track) * front * slip / cfg.wheel_radius,
            side(half_track) * slip / cfg.wheel_radius,
            side(-half_track) * slip / cfg.wheel_radius,
        ];

        let mut next = self.clone();
        next.car = car;
        next.step_index += 1;
        for p in car.contact_points() {
            for i in self.track.tiles_at(p) {
                if !next.tiles_visited[i] {
                    next.tiles_visited[i] = true;
                    next.visited_count += 1;
                }
            }
        }
        next.off_field = !self.track.in_playfield(car.position);
        next.done = episode_done(&next);
        next.last_reward = compute_reward(self, &next);
        next.total_reward += next.last_reward;
        Ok(next)
    }
}

/// Frame penalty, tile bonus for tiles first touched this step, and the
/// off-field penalty when the car has just left the playfield.
pub fn compute_reward(prev: &SimState, next: &SimState) -> f64 {
    let new_tiles = next.visited_count.saturating_sub(prev.visited_count);
    let mut reward = -FRAME_PENALTY + TRACK_REWARD / next.track.tile_count() as f64 * new_tiles as f64;
    if next.off_field && !prev.off_field {
        reward -= OFF_FIELD_PENALTY;
    }
    reward
}

pub fn episode_done(state: &SimState) -> bool {
    state.off_field || state.visited_count == state.tiles_visited.len() || state.step_index >= state.config.max_steps
}
