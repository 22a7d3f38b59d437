use rand::Rng;

use super::{Dataset, Sample};
use crate::seed;
use crate::sim::{Observation, SensorVector};

/// Edge-replicated border added before a random crop, pixels per side.
pub const PAD: usize = 6;

/// Pads by edge replication and crops back to the original size at offset
/// `(dx, dy)` within the padded image, each in `0..=2 * PAD`.
pub fn crop_pad(obs: &Observation, dx: usize, dy: usize) -> Observation {
    debug_assert!(dx <= 2 * PAD && dy <= 2 * PAD);
    let (h, w, c) = (obs.height, obs.width, obs.channels);
    let mut pixels = Vec::with_capacity(obs.pixels.len());
    for row in 0..h {
        let src_row = (row + dy).saturating_sub(PAD).min(h - 1);
        for col in 0..w {
            let src_col = (col + dx).saturating_sub(PAD).min(w - 1);
            let i = (src_row * w + src_col) * c;
            pixels.extend_from_slice(&obs.pixels[i..i + c]);
        }
    }
    Observation::new(h, w, c, pixels)
}

fn mirror_columns(obs: &Observation) -> Observation {
    let (w, c) = (obs.width, obs.channels);
    let mut pixels = Vec::with_capacity(obs.pixels.len());
    for row in obs.pixels.chunks_exact(w * c) {
        for px in row.chunks_exact(c).rev() {
            pixels.extend_from_slice(px);
        }
    }
    Observation::new(obs.height, w, c, pixels)
}

/// Mirror image of a sample: columns reversed, left/right labels swapped,
/// steer and yaw-type sensors negated, left/right ABS readings swapped.
pub fn flip_horizontal(sample: &Sample) -> Sample {
    let s = sample.sensors.0;
    let sensors = SensorVector([
        s[SensorVector::SPEED],
        s[SensorVector::ABS_FR],
        s[SensorVector::ABS_FL],
        s[SensorVector::ABS_RR],
        s[SensorVector::ABS_RL],
        -s[SensorVector::STEERING],
        -s[SensorVector::GYRO],
    ]);
    let mut action = sample.action;
    action.steer = -action.steer;
    Sample {
        observation: mirror_columns(&sample.observation),
        sensors,
        action,
        label: sample.label.mirrored(),
        frame_index: sample.frame_index,
    }
}

/// The original followed by two random crop-pad variants and a mirrored copy.
pub fn augment<R: Rng>(sample: &Sample, rng: &mut R) -> [Sample; 4] {
    let mut shifted = || {
        let dx = rng.random_range(0..=2 * PAD);
        let dy = rng.random_range(0..=2 * PAD);
        Sample { observation: crop_pad(&sample.observation, dx, dy), ..sample.clone() }
    };
    let a = shifted();
    let b = shifted();
    [sample.clone(), a, b, flip_horizontal(sample)]
}

/// Augments every sample; sample `i` draws from its own stream derived from
/// `(seed, i)`, so the output does not depend on scheduling.
pub fn augment_dataset(ds: &Dataset, seed: u64) -> Dataset {
    let groups = crate::par::map_slice(&ds.samples, |i, s| augment(s, &mut seed::stream(seed, &[i as u64])));
    Dataset {
        samples: groups.into_iter().flatten().collect(),
        mode: ds.mode,
        provenance: ds.provenance.clone(),
    }
}
