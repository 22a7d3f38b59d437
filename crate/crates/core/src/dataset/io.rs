//! Little-endian dataset file.
//!
//! ```text
//! header (18 bytes)
//!   magic        4   "CRIL"
//!   version      u16 1
//!   mode         u8  0 = rgb, 1 = gray
//!   reserved     u8  0
//!   sample_count u32
//!   height       u16 96
//!   width        u16 96
//!   channels     u8
//!   sensor_dim   u8  7
//! per sample
//!   pixels       height * width * channels bytes
//!   sensors      7 x f32
//!   action       3 x f32 (steer, gas, brake)
//!   label        u8
//!   frame_index  u32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ActionLabel, Dataset, DatasetError, Sample};
use crate::sim::{ContinuousAction, InputMode, Observation, SensorVector, OBS_SIZE};

pub const MAGIC: [u8; 4] = *b"CRIL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

fn sample_len(channels: usize) -> usize {
    OBS_SIZE * OBS_SIZE * channels + 4 * SensorVector::LEN + 4 * 3 + 1 + 4
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>, DatasetError> {
    ds.validate()?;
    let channels = ds.mode.channels();
    let count = u32::try_from(ds.len()).map_err(|_| DatasetError::Dimension("more than u32::MAX samples".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * sample_len(channels));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(ds.mode.code());
    out.push(0);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&(OBS_SIZE as u16).to_le_bytes());
    out.extend_from_slice(&(OBS_SIZE as u16).to_le_bytes());
    out.push(channels as u8);
    out.push(SensorVector::LEN as u8);
    for s in &ds.samples {
        out.extend_from_slice(&s.observation.pixels);
        for v in s.sensors.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [s.action.steer, s.action.gas, s.action.brake] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(s.label.code());
        out.extend_from_slice(&s.frame_index.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        s
    }
    fn u8(&mut self) -> u8 {
        self.take(1)[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take(2).try_into().unwrap())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take(4).try_into().unwrap())
    }
}

pub fn decode_dataset(buf: &[u8]) -> Result<Dataset, DatasetError> {
    if buf.len() >= 4 && buf[..4] != MAGIC {
        return Err(DatasetError::BadMagic { found: buf[..4].try_into().unwrap() });
    }
    if buf.len() < HEADER_LEN {
        return Err(DatasetError::Truncated { expected: HEADER_LEN, actual: buf.len() });
    }
    let mut cur = Cursor { buf, pos: 4 };
    let version = cur.u16();
    if version != VERSION {
        return Err(DatasetError::Version { found: version, expected: VERSION });
    }
    let mode_code = cur.u8();
    let mode = InputMode::from_code(mode_code)
        .ok_or_else(|| DatasetError::Dimension(format!("unknown mode code {mode_code}")))?;
    let _reserved = cur.u8();
    let count = cur.u32() as usize;
    let height = cur.u16() as usize;
    let width = cur.u16() as usize;
    let channels = cur.u8() as usize;
    let sensor_dim = cur.u8() as usize;
    if height != OBS_SIZE || width != OBS_SIZE {
        return Err(DatasetError::Dimension(format!("frame {height}x{width}, expected {OBS_SIZE}x{OBS_SIZE}")));
    }
    if channels != mode.channels() {
        return Err(DatasetError::Dimension(format!("{channels} channel(s) in a {mode} dataset")));
    }
    if sensor_dim != SensorVector::LEN {
        return Err(DatasetError::Dimension(format!("sensor_dim {sensor_dim}, expected {}", SensorVector::LEN)));
    }
    let expected = HEADER_LEN + count * sample_len(channels);
    if buf.len() != expected {
        return Err(DatasetError::Truncated { expected, actual: buf.len() });
    }

    let n_pixels = height * width * channels;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let pixels = cur.take(n_pixels).to_vec();
        let mut sensors = [0f32; 7];
        for v in &mut sensors {
            *v = cur.f32();
        }
        let action = ContinuousAction::new(cur.f32(), cur.f32(), cur.f32());
        let code = cur.u8();
        let label = ActionLabel::from_code(code).ok_or(DatasetError::InvalidLabel(code))?;
        let frame_index = cur.u32();
        samples.push(Sample {
            observation: Observation::new(height, width, channels, pixels),
            sensors: SensorVector(sensors),
            action,
            label,
            frame_index,
        });
    }
    Ok(Dataset { samples, mode, provenance: Vec::new() })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_dataset(ds)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    decode_dataset(&fs::read(path)?)
}
