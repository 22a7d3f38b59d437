//! Demonstration samples, action labels and preprocessing.

mod augment;
mod io;
mod pipeline;

use std::fmt;

use thiserror::Error;

use crate::sim::{ContinuousAction, InputMode, Observation, SensorVector};

pub use augment::{augment, augment_dataset, crop_pad, flip_horizontal, PAD};
pub use pipeline::{prepare, PrepareOptions};
pub use io::{decode_dataset, encode_dataset, read_dataset, write_dataset, HEADER_LEN, MAGIC, VERSION};

/// Frames at the start of each episode rendered at the intro zoom.
pub const INTRO_FRAMES: u32 = 50;
/// Threshold above which a steer/gas/brake component counts as pressed.
pub const PRESS_THRESHOLD: f32 = 0.05;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic {found:?}, expected \"CRIL\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported dataset version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("truncated dataset: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid label code {0}")]
    InvalidLabel(u8),
    #[error("grayscale conversion needs a 3-channel image, got {0} channel(s)")]
    NotRgb(usize),
    #[error("mixed modes in dataset: {0} vs {1}")]
    MixedModes(InputMode, InputMode),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The seven discrete driving actions, coded 0–6 in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ActionLabel {
    Left = 0,
    LeftB = 1,
    Right = 2,
    RightB = 3,
    Keep = 4,
    Acc = 5,
    Brake = 6,
}

impl ActionLabel {
    pub const COUNT: usize = 7;
    pub const ALL: [ActionLabel; 7] = [
        ActionLabel::Left,
        ActionLabel::LeftB,
        ActionLabel::Right,
        ActionLabel::RightB,
        ActionLabel::Keep,
        ActionLabel::Acc,
        ActionLabel::Brake,
    ];

    pub const fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub const fn name(self) -> &'static str {
        match self {
            ActionLabel::Left => "Left",
            ActionLabel::LeftB => "LeftB",
            ActionLabel::Right => "Right",
            ActionLabel::RightB => "RightB",
            ActionLabel::Keep => "Keep",
            ActionLabel::Acc => "Acc",
            ActionLabel::Brake => "Brake",
        }
    }

    /// Mirror image under a horizontal flip.
    pub const fn mirrored(self) -> Self {
        match self {
            ActionLabel::Left => ActionLabel::Right,
            ActionLabel::LeftB => ActionLabel::RightB,
            ActionLabel::Right => ActionLabel::Left,
            ActionLabel::RightB => ActionLabel::LeftB,
            other => other,
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Discretizes a command. Steering outranks brake, brake outranks gas.
pub fn label_action(action: &ContinuousAction) -> ActionLabel {
    let braking = action.brake > PRESS_THRESHOLD;
    if action.steer < -PRESS_THRESHOLD {
        if braking {
            ActionLabel::LeftB
        } else {
            ActionLabel::Left
        }
    } else if action.steer > PRESS_THRESHOLD {
        if braking {
            ActionLabel::RightB
        } else {
            ActionLabel::Right
        }
    } else if braking {
        ActionLabel::Brake
    } else if action.gas > PRESS_THRESHOLD {
        ActionLabel::Acc
    } else {
        ActionLabel::Keep
    }
}

/// Canonical command for each label, used when a classifier drives.
pub fn label_to_action(label: ActionLabel) -> ContinuousAction {
    match label {
        ActionLabel::Left => ContinuousAction::new(-1.0, 0.0, 0.0),
        ActionLabel::LeftB => ContinuousAction::new(-1.0, 0.0, 0.8),
        ActionLabel::Right => ContinuousAction::new(1.0, 0.0, 0.0),
        ActionLabel::RightB => ContinuousAction::new(1.0, 0.0, 0.8),
        ActionLabel::Keep => ContinuousAction::new(0.0, 0.0, 0.0),
        ActionLabel::Acc => ContinuousAction::new(0.0, 0.8, 0.0),
        ActionLabel::Brake => ContinuousAction::new(0.0, 0.0, 0.8),
    }
}

/// One recorded frame and the command applied on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Observation,
    pub sensors: SensorVector,
    pub action: ContinuousAction,
    pub label: ActionLabel,
    /// Position within the source episode.
    pub frame_index: u32,
}

impl Sample {
    pub fn new(observation: Observation, sensors: SensorVector, action: ContinuousAction, frame_index: u32) -> Self {
        Self { observation, sensors, label: label_action(&action), action, frame_index }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub mode: InputMode,
    /// (episode id, track seed) for each recorded episode. Kept in memory only.
    pub provenance: Vec<(u32, u64)>,
}

impl Dataset {
    pub fn new(mode: InputMode) -> Self {
        Self { samples: Vec::new(), mode, provenance: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks that every sample matches the dataset mode and its own label.
    pub fn validate(&self) -> Result<(), DatasetError> {
        for (i, s) in self.samples.iter().enumerate() {
            let o = &s.observation;
            if o.channels != self.mode.channels() || o.height != crate::sim::OBS_SIZE || o.width != crate::sim::OBS_SIZE {
                return Err(DatasetError::Dimension(format!(
                    "sample {i}: {}x{}x{} in a {} dataset",
                    o.height, o.width, o.channels, self.mode
                )));
            }
            if s.label != label_action(&s.action) {
                return Err(DatasetError::Dimension(format!("sample {i}: label {} disagrees with action", s.label)));
            }
        }
        Ok(())
    }

    /// Appends another dataset of the same mode.
    pub fn extend(&mut self, other: Dataset) -> Result<(), DatasetError> {
        if other.mode != self.mode {
            return Err(DatasetError::MixedModes(self.mode, other.mode));
        }
        self.samples.extend(other.samples);
        self.provenance.extend(other.provenance);
        Ok(())
    }
}

/// BT.601 luma, rounded and clamped to 8 bits.
pub fn to_grayscale(obs: &Observation) -> Result<Observation, DatasetError> {
    if obs.channels != 3 {
        return Err(DatasetError::NotRgb(obs.channels));
    }
    let pixels = obs
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(Observation::new(obs.height, obs.width, 1, pixels))
}

/// Converts every sample of an rgb dataset; a gray dataset is returned as is.
pub fn grayscale_dataset(ds: Dataset) -> Result<Dataset, DatasetError> {
    if ds.mode == InputMode::Gray {
        return Ok(ds);
    }
    let samples = crate::par::map_slice(&ds.samples, |_, s| {
        to_grayscale(&s.observation).map(|observation| Sample { observation, ..s.clone() })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset { samples, mode: InputMode::Gray, provenance: ds.provenance })
}

/// Drops every sample taken during the zoom intro.
pub fn discard_intro(samples: Vec<Sample>) -> Vec<Sample> {
    samples.into_iter().filter(|s| s.frame_index >= INTRO_FRAMES).collect()
}

/// Keeps each `Acc` sample with probability one half; all others are kept.
pub fn balance<R: rand::Rng>(ds: Dataset, rng: &mut R) -> Dataset {
    let samples = ds
        .samples
        .into_iter()
        .filter(|s| s.label != ActionLabel::Acc || rng.random_bool(0.5))
        .collect();
    Dataset { samples, ..ds }
}

/// Per-label sample counts in code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelHistogram(pub [usize; ActionLabel::COUNT]);

impl LabelHistogram {
    pub fn count(&self, label: ActionLabel) -> usize {
        self.0[label as usize]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// One `label,count` line per label.
    pub fn report(&self) -> String {
        ActionLabel::ALL.iter().map(|l| format!("{},{}\n", l.name(), self.count(*l))).collect()
    }
}

pub fn histogram(samples: &[Sample]) -> LabelHistogram {
    let mut h = LabelHistogram::default();
    for s in samples {
        h.0[s.label as usize] += 1;
    }
    h
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    /// Random sample with a consistent label; pixels and sensors are noise.
    pub fn random_sample<R: Rng>(rng: &mut R, mode: InputMode, frame_index: u32) -> Sample {
        let c = mode.channels();
        let pixels = (0..96 * 96 * c).map(|_| rng.random::<u8>()).collect();
        let mut sensors = [0f32; 7];
        for (i, v) in sensors.iter_mut().enumerate() {
            *v = if i >= 5 { rng.random_range(-1.0..=1.0) } else { rng.random_range(0.0..=1.0) };
        }
        let action = label_to_action(ActionLabel::ALL[rng.random_range(0..7)]);
        Sample::new(Observation::new(96, 96, c, pixels), SensorVector(sensors), action, frame_index)
    }
}
