use std::f64::consts::TAU;

use rand::Rng as _;

use super::geom::{convex_contains, Vec2};
use super::SimError;
use crate::seed;

/// Nominal radius of the control-point circle, world units.
pub const TRACK_RADIUS: f64 = 110.0;
/// Half the side of the square playfield, world units.
pub const PLAYFIELD_HALF_EXTENT: f64 = 200.0;
/// Half the road width, world units.
pub const ROAD_HALF_WIDTH: f64 = 6.0;
/// Target arc length of one tile, world units.
const TILE_LENGTH: f64 = 2.0;
const MIN_TILES: usize = 100;
const MAX_ATTEMPTS: u32 = 64;
const SPLINE_SUBDIVISIONS: usize = 32;

/// One quadrilateral road segment, corners counter-clockwise:
/// start-right, end-right, end-left, start-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub corners: [Vec2; 4],
    min: Vec2,
    max: Vec2,
}

impl Tile {
    fn new(corners: [Vec2; 4]) -> Self {
        let mut min = corners[0];
        let mut max = corners[0];
        for c in &corners[1..] {
            min = Vec2::new(min.x.min(c.x), min.y.min(c.y));
            max = Vec2::new(max.x.max(c.x), max.y.max(c.y));
        }
        Self { corners, min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && convex_contains(&self.corners, p)
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        (self.min, self.max)
    }
}

/// A closed loop of road tiles. Tile `i` spans centerline points `i` and
/// `i + 1 (mod N)`, so consecutive tiles share an edge and the last tile
/// closes onto the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub seed: u64,
    pub tiles: Vec<Tile>,
    pub centerline: Vec<Vec2>,
    pub half_width: f64,
    pub playfield_half_extent: f64,
}

impl Track {
    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    /// Indices of every tile containing `p`.
    pub fn tiles_at(&self, p: Vec2) -> impl Iterator<Item = usize> + '_ {
        self.tiles.iter().enumerate().filter(move |(_, t)| t.contains(p)).map(|(i, _)| i)
    }

    pub fn on_road(&self, p: Vec2) -> bool {
        self.tiles.iter().any(|t| t.contains(p))
    }

    pub fn in_playfield(&self, p: Vec2) -> bool {
        p.x.abs() <= self.playfield_half_extent && p.y.abs() <= self.playfield_half_extent
    }

    /// Index of the centerline point nearest to `p`.
    pub fn nearest_index(&self, p: Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centerline.iter().enumerate() {
            let d = (*c - p).dot(*c - p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn point(&self, i: usize) -> Vec2 {
        self.centerline[i % self.centerline.len()]
    }

    /// Heading of the centerline direction at tile `i`, radians.
    pub fn direction(&self, i: usize) -> f64 {
        let d = self.point(i + 1) - self.point(i);
        d.y.atan2(d.x)
    }

    /// Mean spacing between consecutive centerline points.
    pub fn spacing(&self) -> f64 {
        let n = self.centerline.len();
        (0..n).map(|i| (self.point(i + 1) - self.point(i)).length()).sum::<f64>() / n as f64
    }

    /// Unsigned curvature at centerline point `i`, 1/units.
    pub fn curvature(&self, i: usize) -> f64 {
        let n = self.centerline.len();
        let a = self.point(i + n - 1);
        let b = self.point(i);
        let c = self.point(i + 1);
        let ab = (b - a).length();
        let bc = (c - b).length();
        let ca = (a - c).length();
        let area2 = (b - a).cross(c - a).abs();
        let denom = ab * bc * ca;
        if denom > 0.0 {
            2.0 * area2 / denom
        } else {
            0.0
        }
    }
}

/// Generates the circuit for `seed`: a jittered ring of control points,
/// Catmull-Rom smoothed, resampled at equal arc length and cut into tiles.
/// Candidates that self-intersect, fold their inner edge or leave the
/// playfield are rejected and redrawn from the same stream.
pub fn generate_track(seed: u64) -> Result<Track, SimError> {
    let mut rng = seed::stream(seed, &[0x7472_6163_6B]);
    for _ in 0..MAX_ATTEMPTS {
        let n_ctrl = rng.random_range(12..=20usize);
        let ctrl: Vec<Vec2> = (0..n_ctrl)
            .map(|i| {
                let a = TAU * (i as f64 + rng.random_range(0.0..0.6)) / n_ctrl as f64;
                let r = TRACK_RADIUS * rng.random_range(0.5..1.0);
                Vec2::from_angle(a) * r
            })
            .collect();
        let dense = catmull_rom_closed(&ctrl, SPLINE_SUBDIVISIONS);
        let centerline = resample_closed(&dense, TILE_LENGTH);
        if centerline.len() < MIN_TILES {
            continue;
        }
        if let Some(track) = build_tiles(seed, centerline) {
            return Ok(track);
        }
    }
    Err(SimError::TrackGeneration { seed, attempts: MAX_ATTEMPTS })
}

fn catmull_rom_closed(ctrl: &[Vec2], subdivisions: usize) -> Vec<Vec2> {
    let n = ctrl.len();
    let mut out = Vec::with_capacity(n * subdivisions);
    for i in 0..n {
        let p0 = ctrl[(i + n - 1) % n];
        let p1 = ctrl[i];
        let p2 = ctrl[(i + 1) % n];
        let p3 = ctrl[(i + 2) % n];
        for s in 0..subdivisions {
            let t = s as f64 / subdivisions as f64;
            let t2 = t * t;
            let t3 = t2 * t;
            let p = (p1 * 2.0
                + (p2 - p0) * t
                + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                + (-p0 + p1 * 3.0 - p2 * 3.0 + p3) * t3)
                * 0.5;
            out.push(p);
        }
    }
    out
}

/// Resamples a closed polyline into points equally spaced in arc length.
fn resample_closed(poly: &[Vec2], target: f64) -> Vec<Vec2> {
    let n = poly.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for i in 0..n {
        let d = (poly[(i + 1) % n] - poly[i]).length();
        cumulative.push(cumulative[i] + d);
    }
    let total = cumulative[n];
    let count = (total / target).round().max(1.0) as usize;
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = k as f64 * step;
        while cumulative[seg + 1] < s {
            seg += 1;
        }
        let a = poly[seg];
        let b = poly[(seg + 1) % n];
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
        out.push(a + (b - a) * t);
    }
    out
}

fn build_tiles(seed: u64, centerline: Vec<Vec2>) -> Option<Track> {
    let n = centerline.len();
    let hw = ROAD_HALF_WIDTH;
    let margin = hw + 10.0;
    if centerline
        .iter()
        .any(|p| p.x.abs() > PLAYFIELD_HALF_EXTENT - margin || p.y.abs() > PLAYFIELD_HALF_EXTENT - margin)
    {
        return None;
    }

    let normals: Vec<Vec2> = (0..n)
        .map(|i| (centerline[(i + 1) % n] - centerline[(i + n - 1) % n]).normalized().perp())
        .collect();
    let left: Vec<Vec2> = (0..n).map(|i| centerline[i] + normals[i] * hw).collect();
    let right: Vec<Vec2> = (0..n).map(|i| centerline[i] - normals[i] * hw).collect();

    let mut tiles = Vec::with_capacity(n);
    for i in 0..n {
        let j = (i + 1) % n;
        let corners = [right[i], right[j], left[j], left[i]];
        // Strictly convex and counter-clockwise, otherwise the inner edge folded.
        let convex = (0..4).all(|k| {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            let c = corners[(k + 2) % 4];
            (b - a).cross(c - b) > 1e-9
        });
        if !convex {
            return None;
        }
        tiles.push(Tile::new(corners));
    }

    // Distant parts of the loop must keep the roads apart.
    let spacing = (0..n).map(|i| (centerline[(i + 1) % n] - centerline[i]).length()).sum::<f64>() / n as f64;
    let clearance = 2.0 * hw + 4.0;
    let min_gap = ((3.0 * clearance) / spacing).ceil() as usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (j - i).min(n - (j - i));
            if gap < min_gap {
                continue;
            }
            let d = centerline[i] - centerline[j];
            if d.dot(d) < clearance * clearance {
                return None;
            }
        }
    }

    Some(Track { seed, tiles, centerline, half_width: hw, playfield_half_extent: PLAYFIELD_HALF_EXTENT })
}
