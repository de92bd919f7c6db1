//! Newline-delimited JSON records exchanged between the phone, the host and
//! viewers.
//!
//! Every record is a single JSON object with a lowercase `type` tag. Vectors
//! are `[x, y, z]` arrays in cm, quaternions `[w, x, y, z]`, timestamps
//! integer milliseconds on the sender's clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TechniqueMode, UNIT_TOLERANCE};
use crate::math::{Quat, Vec3};
use crate::task::Condition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TouchPhase {
    Down,
    Move,
    Up,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Hello {
        device_id: String,
        screen_w_px: u32,
        screen_h_px: u32,
    },
    Orientation {
        t: u64,
        q: [f64; 4],
    },
    Touch {
        t: u64,
        phase: TouchPhase,
        x_px: f64,
        y_px: f64,
    },
    Footswitch {
        t: u64,
    },
    /// Capture the current filtered orientation as the flat reference pose.
    Calibrate {
        t: u64,
    },
    TrialBegin {
        t: u64,
        trial_id: u32,
        technique: TechniqueMode,
        condition: Condition,
        target: Vec3,
        radius_cm: f64,
    },
    TrialEnd {
        t: u64,
        trial_id: u32,
        mt_ms: u64,
        d_cm: f64,
        t_px: f64,
    },
    StateSnapshot {
        t: u64,
        cursor: Vec3,
        pivot: Vec3,
        e1: Vec3,
        e2: Vec3,
        target: Vec3,
        matched: bool,
        phase: String,
    },
}

pub const TYPE_TAGS: [&str; 8] =
    ["hello", "orientation", "touch", "footswitch", "calibrate", "trial_begin", "trial_end", "state_snapshot"];

impl WireMessage {
    pub fn type_tag(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "hello",
            WireMessage::Orientation { .. } => "orientation",
            WireMessage::Touch { .. } => "touch",
            WireMessage::Footswitch { .. } => "footswitch",
            WireMessage::Calibrate { .. } => "calibrate",
            WireMessage::TrialBegin { .. } => "trial_begin",
            WireMessage::TrialEnd { .. } => "trial_end",
            WireMessage::StateSnapshot { .. } => "state_snapshot",
        }
    }

    pub fn timestamp(&self) -> Option<u64> {
        match *self {
            WireMessage::Hello { .. } => None,
            WireMessage::Orientation { t, .. }
            | WireMessage::Touch { t, .. }
            | WireMessage::Footswitch { t }
            | WireMessage::Calibrate { t }
            | WireMessage::TrialBegin { t, .. }
            | WireMessage::TrialEnd { t, .. }
            | WireMessage::StateSnapshot { t, .. } => Some(t),
        }
    }

    pub fn orientation(t: u64, q: Quat) -> Self {
        WireMessage::Orientation { t, q: q.to_array() }
    }

    pub fn touch(t: u64, phase: TouchPhase, x_px: f64, y_px: f64) -> Self {
        WireMessage::Touch { t, phase, x_px, y_px }
    }

    fn floats(&self) -> Vec<f64> {
        match self {
            WireMessage::Hello { .. } | WireMessage::Footswitch { .. } | WireMessage::Calibrate { .. } => vec![],
            WireMessage::Orientation { q, .. } => q.to_vec(),
            WireMessage::Touch { x_px, y_px, .. } => vec![*x_px, *y_px],
            WireMessage::TrialBegin { target, radius_cm, .. } => {
                let mut v = target.to_array().to_vec();
                v.push(*radius_cm);
                v
            }
            WireMessage::TrialEnd { d_cm, t_px, .. } => vec![*d_cm, *t_px],
            WireMessage::StateSnapshot { cursor, pivot, e1, e2, target, .. } => {
                [cursor, pivot, e1, e2, target].iter().flat_map(|v| v.to_array()).collect()
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("refusing to encode {tag} with a non-finite field")]
    NonFinite { tag: &'static str },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Decode failure. Each variant carries the offending line (lossily decoded,
/// truncated) so it can be reported without ending the session.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("malformed record ({detail}): {line}")]
    Parse { line: String, detail: String },
    #[error("unknown message type {tag:?}: {line}")]
    UnknownType { line: String, tag: String },
    #[error("schema violation ({detail}): {line}")]
    Schema { line: String, detail: String },
    #[error("value out of range ({detail}): {line}")]
    Range { line: String, detail: String },
}

impl DecodeError {
    pub fn line(&self) -> &str {
        match self {
            DecodeError::Parse { line, .. }
            | DecodeError::UnknownType { line, .. }
            | DecodeError::Schema { line, .. }
            | DecodeError::Range { line, .. } => line,
        }
    }
}

/// Encode one record, newline included.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, EncodeError> {
    let mut line = encode_string(msg)?;
    line.push('\n');
    Ok(line.into_bytes())
}

/// Encode without the trailing newline (one websocket text frame).
pub fn encode_string(msg: &WireMessage) -> Result<String, EncodeError> {
    if msg.floats().iter().any(|f| !f.is_finite()) {
        return Err(EncodeError::NonFinite { tag: msg.type_tag() });
    }
    serde_json::to_string(msg).map_err(|e| EncodeError::Serialize(e.to_string()))
}

fn excerpt(bytes: &[u8]) -> String {
    const MAX: usize = 160;
    let text = String::from_utf8_lossy(bytes);
    let text = text.trim_end_matches(['\r', '\n']);
    if text.chars().count() > MAX {
        let cut: String = text.chars().take(MAX).collect();
        format!("{cut}...")
    } else {
        text.to_string()
    }
}

/// Decode one record. A trailing newline is allowed.
pub fn decode(line: &[u8]) -> Result<WireMessage, DecodeError> {
    let value: serde_json::Value =
        serde_json::from_slice(line).map_err(|e| DecodeError::Parse { line: excerpt(line), detail: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| DecodeError::Parse { line: excerpt(line), detail: "record is not a JSON object".into() })?;
    let tag = match obj.get("type") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(_) => return Err(DecodeError::Schema { line: excerpt(line), detail: "type tag is not a string".into() }),
        None => return Err(DecodeError::Schema { line: excerpt(line), detail: "missing field `type`".into() }),
    };
    if !TYPE_TAGS.contains(&tag.as_str()) {
        return Err(DecodeError::UnknownType { line: excerpt(line), tag });
    }
    let msg: WireMessage = serde_json::from_value(value)
        .map_err(|e| DecodeError::Schema { line: excerpt(line), detail: e.to_string() })?;
    validate(msg).map_err(|detail| DecodeError::Range { line: excerpt(line), detail })
}

fn validate(msg: WireMessage) -> Result<WireMessage, String> {
    if msg.floats().iter().any(|f| !f.is_finite()) {
        return Err("non-finite number".into());
    }
    match msg {
        WireMessage::Orientation { t, q } => {
            let raw = Quat::from_components(q[0], q[1], q[2], q[3]);
            // Already unit to rounding: keep the sender's bits.
            if (raw.norm() - 1.0).abs() <= 4.0 * f64::EPSILON {
                return Ok(WireMessage::Orientation { t, q });
            }
            let unit = raw
                .to_unit(UNIT_TOLERANCE)
                .ok_or_else(|| format!("quaternion norm {} outside 1 +/- {UNIT_TOLERANCE}", raw.norm()))?;
            Ok(WireMessage::Orientation { t, q: unit.to_array() })
        }
        WireMessage::Hello { screen_w_px, screen_h_px, .. } if screen_w_px == 0 || screen_h_px == 0 => {
            Err("screen dimensions must be positive".into())
        }
        WireMessage::TrialBegin { radius_cm, .. } if radius_cm <= 0.0 => Err("radius must be positive".into()),
        WireMessage::TrialEnd { d_cm, t_px, .. } if d_cm < 0.0 || t_px < 0.0 => {
            Err("trial metrics must be non-negative".into())
        }
        other => Ok(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footswitch_bytes() {
        let bytes = encode(&WireMessage::Footswitch { t: 1000 }).unwrap();
        assert_eq!(bytes, b"{\"type\":\"footswitch\",\"t\":1000}\n");
    }

    #[test]
    fn identity_orientation_bytes() {
        let s = encode_string(&WireMessage::orientation(5, Quat::IDENTITY)).unwrap();
        assert_eq!(s, r#"{"type":"orientation","t":5,"q":[1.0,0.0,0.0,0.0]}"#);
        // Integer-valued components are accepted on input as well.
        let m = decode(br#"{"type":"orientation","t":5,"q":[1,0,0,0]}"#).unwrap();
        assert_eq!(m, WireMessage::orientation(5, Quat::IDENTITY));
    }

    #[test]
    fn hello_field_names() {
        let s =
            encode_string(&WireMessage::Hello { device_id: "p1".into(), screen_w_px: 480, screen_h_px: 800 }).unwrap();
        assert_eq!(s, r#"{"type":"hello","device_id":"p1","screen_w_px":480,"screen_h_px":800}"#);
    }

    #[test]
    fn refuses_non_finite() {
        let m = WireMessage::touch(1, TouchPhase::Move, f64::NAN, 0.0);
        assert!(matches!(encode(&m), Err(EncodeError::NonFinite { tag: "touch" })));
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(decode(b"\xff\xfe garbage"), Err(DecodeError::Parse { .. })));
        assert!(matches!(decode(b"[1,2]"), Err(DecodeError::Parse { .. })));
        assert!(matches!(
            decode(br#"{"type":"warp","t":1}"#),
            Err(DecodeError::UnknownType { tag, .. }) if tag == "warp"
        ));
        assert!(matches!(decode(br#"{"type":"footswitch"}"#), Err(DecodeError::Schema { .. })));
        assert!(matches!(decode(br#"{"t":4}"#), Err(DecodeError::Schema { .. })));
        assert!(matches!(decode(br#"{"type":"orientation","t":1,"q":[2,0,0,0]}"#), Err(DecodeError::Range { .. })));
        assert!(matches!(
            decode(br#"{"type":"hello","device_id":"x","screen_w_px":0,"screen_h_px":5}"#),
            Err(DecodeError::Range { .. })
        ));
    }

    #[test]
    fn near_unit_is_renormalized() {
        let m = decode(br#"{"type":"orientation","t":1,"q":[1.0005,0,0,0]}"#).unwrap();
        let WireMessage::Orientation { q, .. } = m else { panic!() };
        assert_eq!(q, [1.0, 0.0, 0.0, 0.0]);
        let m = decode(br#"{"type":"orientation","t":1,"q":[0.6003,0.8004,0,0]}"#).unwrap();
        let WireMessage::Orientation { q, .. } = m else { panic!() };
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn error_reports_line() {
        let err = decode(b"{\"type\":\"warp\"}\n").unwrap_err();
        assert_eq!(err.line(), "{\"type\":\"warp\"}");
    }
}
