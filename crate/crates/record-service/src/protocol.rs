//! Wire format. Binary messages are little-endian.
//!
//! ```text
//! server -> client frame: 0x01, frame_index u32, reward f32, done u8, sensors 7 x f32, pixels 96x96x3 u8
//! client -> server input: 0x02, keymask u8 (bit0 left, bit1 right, bit2 gas, bit3 brake)
//! ```
//! Control messages are JSON text: `{"cmd":"start","seed":7}`, `{"cmd":"stop"}`,
//! `{"cmd":"save"}`, answered with `{"ok":bool,"detail":string}`.

use cril_core::sim::{ContinuousAction, SensorVector, OBS_SIZE};
use serde::{Deserialize, Serialize};

pub const TAG_FRAME: u8 = 0x01;
pub const TAG_INPUT: u8 = 0x02;
pub const PIXEL_BYTES: usize = OBS_SIZE * OBS_SIZE * 3;
pub const FRAME_LEN: usize = 1 + 4 + 4 + 1 + 7 * 4 + PIXEL_BYTES;

pub const KEY_LEFT: u8 = 1;
pub const KEY_RIGHT: u8 = 1 << 1;
pub const KEY_GAS: u8 = 1 << 2;
pub const KEY_BRAKE: u8 = 1 << 3;

/// Pedal depth for held gas or brake keys, matching the canonical label actions.
pub const PEDAL: f32 = 0.8;

/// Close code sent to a second client while a session is active.
pub const BUSY_CLOSE_CODE: u16 = 4001;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMessage {
    pub frame_index: u32,
    pub reward: f32,
    pub done: bool,
    pub sensors: SensorVector,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("unexpected message tag {0:#04x}")]
    Tag(u8),
    #[error("keymask {0:#04x} sets undefined bits")]
    Keymask(u8),
}

pub fn encode_frame(frame: &FrameMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_LEN);
    out.push(TAG_FRAME);
    out.extend_from_slice(&frame.frame_index.to_le_bytes());
    out.extend_from_slice(&frame.reward.to_le_bytes());
    out.push(u8::from(frame.done));
    for v in frame.sensors.0 {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn decode_frame(buf: &[u8]) -> Result<FrameMessage, ProtocolError> {
    if buf.len() != FRAME_LEN {
        return Err(ProtocolError::Length { expected: FRAME_LEN, actual: buf.len() });
    }
    if buf[0] != TAG_FRAME {
        return Err(ProtocolError::Tag(buf[0]));
    }
    let f32_at = |i: usize| f32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
    let mut sensors = [0f32; 7];
    for (k, s) in sensors.iter_mut().enumerate() {
        *s = f32_at(10 + 4 * k);
    }
    Ok(FrameMessage {
        frame_index: u32::from_le_bytes(buf[1..5].try_into().unwrap()),
        reward: f32_at(5),
        done: buf[9] != 0,
        sensors: SensorVector(sensors),
        pixels: buf[38..].to_vec(),
    })
}

pub fn encode_input(keymask: u8) -> [u8; 2] {
    [TAG_INPUT, keymask]
}

pub fn decode_input(buf: &[u8]) -> Result<u8, ProtocolError> {
    match buf {
        [TAG_INPUT, mask] if mask & !0x0f == 0 => Ok(*mask),
        [TAG_INPUT, mask] => Err(ProtocolError::Keymask(*mask)),
        [tag, _] => Err(ProtocolError::Tag(*tag)),
        _ => Err(ProtocolError::Length { expected: 2, actual: buf.len() }),
    }
}

/// Held arrows steer fully; left and right together cancel.
pub fn keymask_to_action(mask: u8) -> ContinuousAction {
    let left = mask & KEY_LEFT != 0;
    let right = mask & KEY_RIGHT != 0;
    let steer = match (left, right) {
        (true, false) => -1.0,
        (false, true) => 1.0,
        _ => 0.0,
    };
    let pedal = |bit: u8| if mask & bit != 0 { PEDAL } else { 0.0 };
    ContinuousAction::new(steer, pedal(KEY_GAS), pedal(KEY_BRAKE))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
pub enum Command {
    Start { seed: u64 },
    Stop,
    Save,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub ok: bool,
    pub detail: String,
}

impl Reply {
    pub fn ok(detail: impl Into<String>) -> Self {
        Self { ok: true, detail: detail.into() }
    }

    pub fn err(detail: impl Into<String>) -> Self {
        Self { ok: false, detail: detail.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }
}

pub fn parse_command(text: &str) -> Result<Command, String> {
    serde_json::from_str(text).map_err(|e| format!("bad command: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cril_core::dataset::{label_action, ActionLabel};

    #[test]
    fn frame_round_trip() {
        let f = FrameMessage {
            frame_index: 77,
            reward: -0.1,
            done: true,
            sensors: SensorVector([0.5, 0.1, 0.2, 0.3, 0.4, -0.6, 0.7]),
            pixels: (0..PIXEL_BYTES).map(|i| (i % 251) as u8).collect(),
        };
        let bytes = encode_frame(&f);
        assert_eq!(bytes.len(), FRAME_LEN);
        assert_eq!(&bytes[..5], &[1, 77, 0, 0, 0]);
        assert_eq!(bytes[9], 1);
        assert_eq!(decode_frame(&bytes).unwrap(), f);
        assert!(matches!(decode_frame(&bytes[1..]), Err(ProtocolError::Length { .. })));
    }

    #[test]
    fn input_messages() {
        for mask in 0..16u8 {
            assert_eq!(decode_input(&encode_input(mask)).unwrap(), mask);
        }
        assert_eq!(decode_input(&[2, 0x10]), Err(ProtocolError::Keymask(0x10)));
        assert_eq!(decode_input(&[1, 0]), Err(ProtocolError::Tag(1)));
        assert!(decode_input(&[2]).is_err());
    }

    #[test]
    fn keymask_mapping() {
        assert_eq!(keymask_to_action(0), ContinuousAction::new(0.0, 0.0, 0.0));
        assert_eq!(keymask_to_action(KEY_LEFT | KEY_RIGHT), ContinuousAction::new(0.0, 0.0, 0.0));
        let expect = [
            (KEY_LEFT, ActionLabel::Left),
            (KEY_LEFT | KEY_BRAKE, ActionLabel::LeftB),
            (KEY_RIGHT, ActionLabel::Right),
            (KEY_RIGHT | KEY_BRAKE | KEY_GAS, ActionLabel::RightB),
            (KEY_GAS, ActionLabel::Acc),
            (KEY_BRAKE, ActionLabel::Brake),
            (KEY_GAS | KEY_BRAKE, ActionLabel::Brake),
            (0, ActionLabel::Keep),
        ];
        for (mask, label) in expect {
            assert_eq!(label_action(&keymask_to_action(mask)), label, "mask {mask:#06b}");
        }
    }

    #[test]
    fn commands_parse() {
        assert_eq!(parse_command(r#"{"cmd":"start","seed":7}"#).unwrap(), Command::Start { seed: 7 });
        assert_eq!(parse_command(r#"{"cmd":"stop"}"#).unwrap(), Command::Stop);
        assert_eq!(parse_command(r#"{"cmd":"save"}"#).unwrap(), Command::Save);
        assert!(parse_command(r#"{"cmd":"fly"}"#).is_err());
        assert!(parse_command("start").is_err());
        assert_eq!(Reply::ok("x").to_json(), r#"{"ok":true,"detail":"x"}"#);
    }
}
