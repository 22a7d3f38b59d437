//! Little-endian model checkpoint.
//!
//! ```text
//! magic "CRNN", version u16, layer_count u16,
//! input_mode u8, sensor_branch u8, input_size u16,
//! then per layer a kind byte and its record:
//!   0 conv2d   kh u16, kw u16, cin u16, cout u16, stride u16, activation u8,
//!              filters f32 x (kh*kw*cin*cout), bias f32 x cout
//!   1 dropout  rate f32, enabled u8
//!   2 dense    inputs u32, units u32, activation u8,
//!              weights f32 x (inputs*units), bias f32 x units
//!   3 flatten  appended u16 (sensor values concatenated here)
//! ```
//! The layer sequence is conv, dropout, conv, dropout, flatten, dense, dense.

use std::path::Path;

use thiserror::Error;

use super::{Architecture, ConvSpec, MixedModel, DROPOUT_RATE};
use crate::nn::{Activation, Conv2d, Dense, Tensor};
use crate::sim::InputMode;

pub const MAGIC: [u8; 4] = *b"CRNN";
pub const VERSION: u16 = 1;
const LAYER_COUNT: u16 = 7;

const KIND_CONV: u8 = 0;
const KIND_DROPOUT: u8 = 1;
const KIND_DENSE: u8 = 2;
const KIND_FLATTEN: u8 = 3;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u16).to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(model: &MixedModel<f32>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.u16(VERSION as usize);
    w.u16(LAYER_COUNT as usize);
    w.u8(model.mode.code());
    w.u8(u8::from(model.sensor_branch));
    w.u16(model.arch.input_size);

    let conv = |w: &mut Writer, c: &Conv2d<f32>| {
        w.u8(KIND_CONV);
        let s = c.filters.shape();
        for d in s {
            w.u16(*d);
        }
        w.u16(c.stride);
        w.u8(Activation::Relu.code());
        w.f32s(&c.filters.data);
        w.f32s(&c.bias.data);
    };
    let dropout = |w: &mut Writer| {
        w.u8(KIND_DROPOUT);
        w.f32s(&[DROPOUT_RATE as f32]);
        w.u8(u8::from(model.dropout));
    };
    let dense = |w: &mut Writer, d: &Dense<f32>| {
        w.u8(KIND_DENSE);
        w.u32(d.inputs());
        w.u32(d.units());
        w.u8(d.activation.code());
        w.f32s(&d.weights.data);
        w.f32s(&d.bias.data);
    };

    conv(&mut w, &model.conv1);
    dropout(&mut w);
    conv(&mut w, &model.conv2);
    dropout(&mut w);
    w.u8(KIND_FLATTEN);
    w.u16(model.arch.sensor_dim);
    dense(&mut w, &model.dense1);
    dense(&mut w, &model.dense2);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<usize, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize)
    }
    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CheckpointError::Truncated(self.pos))?)?;
        Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }
    fn kind(&mut self, expected: u8) -> Result<(), CheckpointError> {
        let k = self.u8()?;
        if k != expected {
            return Err(CheckpointError::Malformed(format!("layer kind {k}, expected {expected}")));
        }
        Ok(())
    }
    fn conv(&mut self) -> Result<Conv2d<f32>, CheckpointError> {
        self.kind(KIND_CONV)?;
        let (kh, kw, cin, cout, stride) = (self.u16()?, self.u16()?, self.u16()?, self.u16()?, self.u16()?);
        if self.u8()? != Activation::Relu.code() {
            return Err(CheckpointError::Malformed("conv activation must be relu".into()));
        }
        let filters = Tensor::new(&[kh, kw, cin, cout], self.f32s(kh * kw * cin * cout)?)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let bias = Tensor::new(&[cout], self.f32s(cout)?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        Conv2d::from_parts(filters, bias, stride).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
    fn dropout(&mut self) -> Result<bool, CheckpointError> {
        self.kind(KIND_DROPOUT)?;
        let _rate = self.f32s(1)?;
        Ok(self.u8()? != 0)
    }
    fn dense(&mut self) -> Result<Dense<f32>, CheckpointError> {
        self.kind(KIND_DENSE)?;
        let (inputs, units) = (self.u32()?, self.u32()?);
        let code = self.u8()?;
        let activation =
            Activation::from_code(code).ok_or_else(|| CheckpointError::Malformed(format!("activation code {code}")))?;
        let weights = Tensor::new(&[inputs, units], self.f32s(inputs * units)?)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let bias = Tensor::new(&[units], self.f32s(units)?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        Dense::from_parts(weights, bias, activation).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<MixedModel<f32>, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u16()? as u16;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let layers = r.u16()?;
    if layers != LAYER_COUNT as usize {
        return Err(CheckpointError::Malformed(format!("{layers} layers, expected {LAYER_COUNT}")));
    }
    let mode_code = r.u8()?;
    let mode = InputMode::from_code(mode_code)
        .ok_or_else(|| CheckpointError::Malformed(format!("input mode code {mode_code}")))?;
    let sensor_branch = r.u8()? != 0;
    let input_size = r.u16()?;

    let conv1 = r.conv()?;
    let dropout = r.dropout()?;
    let conv2 = r.conv()?;
    r.dropout()?;
    r.kind(KIND_FLATTEN)?;
    let sensor_dim = r.u16()?;
    let dense1 = r.dense()?;
    let dense2 = r.dense()?;
    if r.pos != buf.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }

    let spec = |c: &Conv2d<f32>| ConvSpec { kernel: c.kernel().0, filters: c.out_channels(), stride: c.stride };
    let arch = Architecture {
        input_size,
        in_channels: conv1.in_channels(),
        conv1: spec(&conv1),
        conv2: spec(&conv2),
        hidden: dense1.units(),
        sensor_dim,
        classes: dense2.units(),
    };
    if conv1.in_channels() != mode.channels()
        || conv2.in_channels() != conv1.out_channels()
        || input_size < conv1.kernel().0
        || dense1.inputs() != arch.dense_input_width()
        || dense2.inputs() != dense1.units()
    {
        return Err(CheckpointError::Malformed("layer sizes do not chain".into()));
    }
    Ok(MixedModel { arch, mode, sensor_branch, dropout, conv1, conv2, dense1, dense2 })
}

pub fn write_checkpoint(model: &MixedModel<f32>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<MixedModel<f32>, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
