//! Car-centred, heading-aligned software rasterizer.
//!
//! The car sits at a fixed screen anchor below the image centre with its nose
//! pointing up. World points are projected with `pixels_per_unit * zoom`,
//! each road tile is filled by testing pixel centres against its projected
//! quad, and the car body is drawn last.

use super::geom::{convex_contains, Vec2};
use super::{InputMode, Observation, SimState, CAR_HALF_LENGTH, CAR_HALF_WIDTH};
use crate::dataset::to_grayscale;

pub const OBS_SIZE: usize = 96;
/// Screen scale at zoom 1.
pub const PIXELS_PER_UNIT: f64 = 2.4;
/// Screen row of the car's centre; column is the image centre.
pub const CAR_SCREEN_ROW: f64 = 68.0;
const CAR_SCREEN_COL: f64 = OBS_SIZE as f64 / 2.0;

pub const ROAD: [u8; 3] = [102, 102, 102];
pub const ROAD_VISITED: [u8; 3] = [102, 114, 102];
pub const GRASS: [u8; 3] = [102, 204, 102];
pub const CAR_BODY: [u8; 3] = [204, 0, 0];

/// Zoom factor for frame `step`: ramps linearly from the far to the near
/// setting over the intro frames, then holds.
pub fn zoom_at(step: u32, zoom_far: f64, zoom_near: f64, intro_frames: u32) -> f64 {
    let t = if intro_frames == 0 { 1.0 } else { (f64::from(step) / f64::from(intro_frames)).min(1.0) };
    zoom_far + (zoom_near - zoom_far) * t
}

struct Camera {
    origin: Vec2,
    forward: Vec2,
    right: Vec2,
    scale: f64,
}

impl Camera {
    fn project(&self, p: Vec2) -> Vec2 {
        let rel = p - self.origin;
        Vec2::new(
            CAR_SCREEN_COL + rel.dot(self.right) * self.scale,
            CAR_SCREEN_ROW - rel.dot(self.forward) * self.scale,
        )
    }
}

fn fill_convex(buf: &mut [u8], poly: &[Vec2], color: [u8; 3]) {
    let size = OBS_SIZE as f64;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poly {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    if x1 < 0.0 || y1 < 0.0 || x0 > size || y0 > size {
        return;
    }
    let col0 = (x0 - 0.5).ceil().max(0.0) as usize;
    let row0 = (y0 - 0.5).ceil().max(0.0) as usize;
    let col1 = ((x1 - 0.5).floor().min(size - 1.0)).max(-1.0);
    let row1 = ((y1 - 0.5).floor().min(size - 1.0)).max(-1.0);
    if col1 < 0.0 || row1 < 0.0 {
        return;
    }
    for row in row0..=row1 as usize {
        for col in col0..=col1 as usize {
            let centre = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
            if convex_contains(poly, centre) {
                let i = (row * OBS_SIZE + col) * 3;
                buf[i..i + 3].copy_from_slice(&color);
            }
        }
    }
}

/// Rasterizes the 96×96 view for `state` in the requested channel layout.
pub fn render_observation(state: &SimState, mode: InputMode) -> Observation {
    let cfg = &state.config;
    let car = &state.car;
    let forward = car.forward();
    let cam = Camera {
        origin: car.position,
        forward,
        right: Vec2::new(forward.y, -forward.x),
        scale: PIXELS_PER_UNIT * zoom_at(state.step_index, cfg.zoom_far, cfg.zoom_near, cfg.zoom_frames),
    };

    let mut buf = Vec::with_capacity(OBS_SIZE * OBS_SIZE * 3);
    for _ in 0..OBS_SIZE * OBS_SIZE {
        buf.extend_from_slice(&GRASS);
    }

    // Cull by distance first: anything farther than the screen diagonal is invisible.
    let reach = (OBS_SIZE as f64 * 1.5) / cam.scale;
    for (i, tile) in state.track.tiles.iter().enumerate() {
        let (lo, hi) = tile.bounds();
        let d = car.position;
        if d.x + reach < lo.x || d.x - reach > hi.x || d.y + reach < lo.y || d.y - reach > hi.y {
            continue;
        }
        let quad = tile.corners.map(|c| cam.project(c));
        let color = if state.tiles_visited[i] { ROAD_VISITED } else { ROAD };
        fill_convex(&mut buf, &quad, color);
    }

    let f = forward * CAR_HALF_LENGTH;
    let r = cam.right * CAR_HALF_WIDTH;
    let body = [car.position - f - r, car.position - f + r, car.position + f + r, car.position + f - r]
        .map(|c| cam.project(c));
    fill_convex(&mut buf, &body, CAR_BODY);

    let rgb = Observation::new(OBS_SIZE, OBS_SIZE, 3, buf);
    match mode {
        InputMode::Rgb => rgb,
        InputMode::Gray => to_grayscale(&rgb).expect("renderer output is rgb"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SimConfig, SimState};

    fn straightest_start(seed: u64) -> SimState {
        let mut s = SimState::new_episode(seed, SimConfig::default()).unwrap();
        // Place the car on the least curved stretch, aligned with the centreline.
        let n = s.track.tile_count();
        let i = (0..n)
            .min_by(|&a, &b| {
                let ka: f64 = (0..8).map(|k| s.track.curvature(a + k)).sum();
                let kb: f64 = (0..8).map(|k| s.track.curvature(b + k)).sum();
                ka.total_cmp(&kb)
            })
            .unwrap();
        s.car.position = s.track.point(i);
        s.car.heading = s.track.direction(i);
        s.step_index = 60;
        s
    }

    #[test]
    fn dimensions_match_mode() {
        let s = SimState::new_episode(1, SimConfig::default()).unwrap();
        let rgb = render_observation(&s, InputMode::Rgb);
        assert_eq!((rgb.height, rgb.width, rgb.channels, rgb.pixels.len()), (96, 96, 3, 96 * 96 * 3));
        let gray = render_observation(&s, InputMode::Gray);
        assert_eq!((gray.height, gray.width, gray.channels, gray.pixels.len()), (96, 96, 1, 96 * 96));
    }

    #[test]
    fn centre_pixel_is_road_on_centreline() {
        let s = straightest_start(11);
        let obs = render_observation(&s, InputMode::Rgb);
        assert_eq!(obs.pixel(48, 48), &ROAD);
        // Car body is drawn at its anchor.
        assert_eq!(obs.pixel(CAR_SCREEN_ROW as usize, 48), &CAR_BODY);
    }

    #[test]
    fn visited_tiles_are_tinted() {
        let mut s = straightest_start(11);
        s.tiles_visited.iter_mut().for_each(|v| *v = true);
        let obs = render_observation(&s, InputMode::Rgb);
        assert_eq!(obs.pixel(48, 48), &ROAD_VISITED);
    }

    #[test]
    fn intro_frames_use_wider_zoom() {
        let near = straightest_start(13);
        let mut far = near.clone();
        far.step_index = 0;
        assert_ne!(render_observation(&near, InputMode::Rgb), render_observation(&far, InputMode::Rgb));
        let mut later = near.clone();
        later.step_index = 500;
        assert_eq!(render_observation(&near, InputMode::Rgb), render_observation(&later, InputMode::Rgb));
    }

    #[test]
    fn zoom_ramp() {
        assert_eq!(zoom_at(0, 0.25, 1.0, 50), 0.25);
        assert_eq!(zoom_at(25, 0.25, 1.0, 50), 0.625);
        assert_eq!(zoom_at(50, 0.25, 1.0, 50), 1.0);
        assert_eq!(zoom_at(400, 0.25, 1.0, 50), 1.0);
    }
}
