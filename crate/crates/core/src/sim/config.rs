use std::fmt::Write as _;
use std::path::Path;

use super::SimError;

/// Tunable environment constants.
///
/// The control-feel values (brake strength twice the gas acceleration, steering
/// and yaw rates cut by a fifth from the initial tuning, gas cut while turning)
/// are frozen here and can be overridden through a `key=value` file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Fixed integration step, seconds.
    pub dt: f64,
    /// Forward acceleration at full gas, units/s².
    pub gas_accel: f64,
    /// Deceleration at full brake, units/s².
    pub brake_strength: f64,
    /// Gas is ignored whenever |steer| exceeds this.
    pub gas_cut_threshold: f64,
    /// Rate at which the steering position tracks the command, 1/s.
    pub steer_rate: f64,
    /// Hard cap on |yaw rate|, rad/s.
    pub max_yaw_rate: f64,
    /// Lateral grip limit, units/s².
    pub max_lateral_accel: f64,
    /// Quadratic aerodynamic drag coefficient, 1/unit.
    pub drag: f64,
    /// Constant rolling resistance while moving, units/s².
    pub rolling_resistance: f64,
    /// Extra deceleration while the car is off the road, units/s².
    pub grass_drag: f64,
    pub wheelbase: f64,
    pub track_width: f64,
    pub wheel_radius: f64,
    /// Maximum front-wheel angle at full lock, radians.
    pub max_steer_angle: f64,
    /// Fractional wheel-speed reduction at full brake.
    pub brake_slip: f64,
    /// Speed normalization for the true-speed sensor, units/s.
    pub v_max: f64,
    /// Wheel angular-speed normalization for the ABS sensors, rad/s.
    pub omega_max: f64,
    /// Yaw-rate normalization for the gyroscope, rad/s.
    pub gamma_max: f64,
    /// Zoom at frame 0 of an episode.
    pub zoom_far: f64,
    /// Zoom from `zoom_frames` onward.
    pub zoom_near: f64,
    pub zoom_frames: u32,
    pub max_steps: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        let gas_accel = 16.0;
        Self {
            dt: 1.0 / 50.0,
            gas_accel,
            brake_strength: 2.0 * gas_accel,
            gas_cut_threshold: 0.1,
            steer_rate: 0.8 * 4.0,
            max_yaw_rate: 0.8 * 4.0,
            max_lateral_accel: 40.0,
            drag: 0.0025,
            rolling_resistance: 0.5,
            grass_drag: 12.0,
            wheelbase: 3.0,
            track_width: 2.0,
            wheel_radius: 0.5,
            max_steer_angle: 0.6,
            brake_slip: 0.3,
            v_max: 100.0,
            omega_max: 400.0,
            gamma_max: 4.0,
            zoom_far: 0.25,
            zoom_near: 1.0,
            zoom_frames: 50,
            max_steps: 1000,
        }
    }
}

impl SimConfig {
    /// Applies `key=value` overrides. Blank lines and `#` comments are skipped;
    /// keys this struct does not know are returned so callers can route them
    /// elsewhere.
    pub fn apply_overrides<'a>(
        &mut self,
        entries: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Vec<(&'a str, &'a str)>, SimError> {
        let mut rest = Vec::new();
        for (key, value) in entries {
            let num = || {
                value.parse::<f64>().map_err(|_| SimError::Config(format!("{key}: not a number: {value:?}")))
            };
            let int = || {
                value.parse::<u32>().map_err(|_| SimError::Config(format!("{key}: not an integer: {value:?}")))
            };
            match key {
                "dt" => self.dt = num()?,
                "gas_accel" => self.gas_accel = num()?,
                "brake_strength" => self.brake_strength = num()?,
                "gas_cut_threshold" => self.gas_cut_threshold = num()?,
                "steer_rate" => self.steer_rate = num()?,
                "max_yaw_rate" => self.max_yaw_rate = num()?,
                "max_lateral_accel" => self.max_lateral_accel = num()?,
                "drag" => self.drag = num()?,
                "rolling_resistance" => self.rolling_resistance = num()?,
                "grass_drag" => self.grass_drag = num()?,
                "wheelbase" => self.wheelbase = num()?,
                "track_width" => self.track_width = num()?,
                "wheel_radius" => self.wheel_radius = num()?,
                "max_steer_angle" => self.max_steer_angle = num()?,
                "brake_slip" => self.brake_slip = num()?,
                "v_max" => self.v_max = num()?,
                "omega_max" => self.omega_max = num()?,
                "gamma_max" => self.gamma_max = num()?,
                "zoom_far" => self.zoom_far = num()?,
                "zoom_near" => self.zoom_near = num()?,
                "zoom_frames" => self.zoom_frames = int()?,
                "max_steps" => self.max_steps = int()?,
                _ => rest.push((key, value)),
            }
        }
        self.validate()?;
        Ok(rest)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("gamma_max", self.gamma_max),
            ("wheelbase", self.wheelbase),
            ("wheel_radius", self.wheel_radius),
            ("zoom_far", self.zoom_far),
            ("zoom_near", self.zoom_near),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(SimError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads a `key=value` file; unknown keys are an error.
    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        let rest = cfg.apply_overrides(parse_key_values(&text)?)?;
        if let Some((k, _)) = rest.first() {
            return Err(SimError::Config(format!("unknown key {k:?}")));
        }
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dt={}", self.dt);
        let _ = writeln!(s, "brake_strength={}", self.brake_strength);
        let _ = writeln!(s, "gas_cut_threshold={}", self.gas_cut_threshold);
        let _ = writeln!(s, "v_max={}", self.v_max);
        let _ = writeln!(s, "omega_max={}", self.omega_max);
        let _ = writeln!(s, "gamma_max={}", self.gamma_max);
        let _ = writeln!(s, "zoom_far={}", self.zoom_far);
        let _ = writeln!(s, "zoom_near={}", self.zoom_near);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        s
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(&str, &str)>, SimError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| SimError::Config(format!("line {}: expected key=value", n + 1)))?;
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}
