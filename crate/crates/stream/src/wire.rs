//! Binary frame messages and JSON text messages exchanged with viewers.
//!
//! Binary header, 20 bytes, little-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0 | 1 | frame type (0 masked input, 1 reconstruction, 2 atlas, 3 ground truth) |
//! | 1 | 1 | dtype (1 = uint8) |
//! | 2 | 2 | problem id |
//! | 4 | 4 | width |
//! | 8 | 4 | height |
//! | 12 | 4 | frame id |
//! | 16 | 4 | reserved, zero |
//!
//! followed by `width × height` bytes, row-major.

use inpaint_core::metrics::FrameMetrics;
use inpaint_core::pipeline::{Control, ControlAck};
use inpaint_core::tensor::Tensor;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{Result, StreamError};

pub const HEADER_LEN: usize = 20;
pub const DTYPE_U8: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameType {
    MaskedInput = 0,
    Reconstruction = 1,
    Atlas = 2,
    GroundTruth = 3,
}

impl FrameType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => FrameType::MaskedInput,
            1 => FrameType::Reconstruction,
            2 => FrameType::Atlas,
            3 => FrameType::GroundTruth,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireFrame {
    pub kind: FrameType,
    pub problem_id: u16,
    pub width: u32,
    pub height: u32,
    pub frame_id: u32,
    pub payload: Vec<u8>,
}

/// `round(255 · clamp(v, 0, 1))`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl WireFrame {
    /// Quantizes a frame for display. Tensors past rank 2 show their first
    /// slice along the trailing dimensions; rank-1 tensors become one row.
    pub fn from_tensor(kind: FrameType, problem_id: u16, frame_id: u32, t: &Tensor) -> Self {
        let dims = t.shape().dims();
        let (height, width) = match dims {
            [w] => (1, *w),
            [h, w, ..] => (*h, *w),
            [] => (0, 0),
        };
        let rest: usize = dims.iter().skip(2).product();
        let payload = (0..height * width)
            .map(|i| quantize(t.data()[i * rest]))
            .collect();
        Self {
            kind,
            problem_id,
            width: width as u32,
            height: height as u32,
            frame_id,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.kind as u8);
        out.push(DTYPE_U8);
        out.extend_from_slice(&self.problem_id.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.frame_id.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(StreamError::Wire(format!(
                "message of {} bytes is shorter than the header",
                bytes.len()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let kind = FrameType::from_u8(bytes[0])
            .ok_or_else(|| StreamError::Wire(format!("unknown frame type {}", bytes[0])))?;
        if bytes[1] != DTYPE_U8 {
            return Err(StreamError::Wire(format!("unsupported dtype {}", bytes[1])));
        }
        let (width, height) = (u32_at(4), u32_at(8));
        if u32_at(16) != 0 {
            return Err(StreamError::Wire("reserved field is not zero".into()));
        }
        let expect = width as u64 * height as u64;
        if (bytes.len() - HEADER_LEN) as u64 != expect {
            return Err(StreamError::Wire(format!(
                "payload is {} bytes, expected {expect}",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok(Self {
            kind,
            problem_id: u16::from_le_bytes([bytes[2], bytes[3]]),
            width,
            height,
            frame_id: u32_at(12),
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    cmd: String,
    #[serde(default)]
    problem: Option<String>,
    #[serde(default)]
    value: Option<Value>,
    #[serde(default)]
    freeze: Option<bool>,
}

/// A control message that passed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedControl {
    pub problem: Option<String>,
    pub control: Control,
}

/// Error raised while parsing a control; keeps the command name when known.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlError {
    pub cmd: Option<String>,
    pub message: String,
}

/// Parses `{"cmd": ..., "problem": ..., "value": ...}`.
///
/// `transfer_dict` takes the source problem as `value`, the destination as
/// `problem`, and an optional `freeze` flag (default true).
pub fn parse_control(text: &str) -> std::result::Result<ParsedControl, ControlError> {
    let raw: RawControl = serde_json::from_str(text).map_err(|e| ControlError {
        cmd: None,
        message: format!("malformed control: {e}"),
    })?;
    let fail = |message: String| ControlError {
        cmd: Some(raw.cmd.clone()),
        message,
    };
    let need_problem = || {
        raw.problem
            .clone()
            .ok_or_else(|| fail(format!("{} needs a problem", raw.cmd)))
    };
    let control = match raw.cmd.as_str() {
        "set_sampling" => {
            need_problem()?;
            let r = raw
                .value
                .as_ref()
                .and_then(Value::as_f64)
                .filter(|r| (0.0..=1.0).contains(r))
                .ok_or_else(|| fail("set_sampling needs a value in [0, 1]".into()))?;
            Control::SetSampling(r)
        }
        "set_epochs" => {
            need_problem()?;
            let n = raw
                .value
                .as_ref()
                .and_then(Value::as_u64)
                .filter(|&n| n >= 1)
                .ok_or_else(|| fail("set_epochs needs a positive integer value".into()))?;
            Control::SetEpochs(n as usize)
        }
        "set_strategy" => {
            need_problem()?;
            let s = raw
                .value
                .as_ref()
                .and_then(Value::as_str)
                .ok_or_else(|| fail("set_strategy needs a strategy name".into()))?;
            Control::SetStrategy(s.to_string())
        }
        "transfer_dict" => {
            need_problem()?;
            let from =
                raw.value.as_ref().and_then(Value::as_str).ok_or_else(|| {
                    fail("transfer_dict needs the source problem as value".into())
                })?;
            Control::TransferDict {
                from: from.to_string(),
                freeze: raw.freeze.unwrap_or(true),
            }
        }
        "pause" => Control::Pause,
        "resume" => Control::Resume,
        other => return Err(fail(format!("unknown command {other:?}"))),
    };
    Ok(ParsedControl {
        problem: raw.problem,
        control,
    })
}

/// `"inf"` for the exact-match sentinel, `null` when absent.
fn db_value(v: Option<f64>) -> Value {
    match v {
        Some(x) if x == f64::INFINITY => Value::String("inf".into()),
        Some(x) if x.is_finite() => json!(x),
        _ => Value::Null,
    }
}

pub fn metrics_json(problem: &str, m: &FrameMetrics) -> String {
    json!({
        "kind": "metrics",
        "problem": problem,
        "frame_id": m.frame_id,
        "psnr": db_value(m.psnr_db),
        "mse": m.mse,
        "sampling_ratio": m.sampling_ratio,
        "atoms_per_patch": m.atoms_per_patch,
        "epoch_time_ms": m.epoch_time_ms,
        "epochs_run": m.epochs_run,
    })
    .to_string()
}

/// Acknowledgement on success, error reply otherwise.
pub fn ack_json(ack: &ControlAck) -> String {
    match &ack.outcome {
        Ok(frame) => json!({
            "kind": "ack",
            "cmd": ack.cmd,
            "problem": ack.problem,
            "applied_at_frame": frame,
        })
        .to_string(),
        Err(msg) => error_json(Some(ack.cmd), ack.problem.as_deref(), msg),
    }
}

pub fn error_json(cmd: Option<&str>, problem: Option<&str>, message: &str) -> String {
    json!({
        "kind": "error",
        "cmd": cmd,
        "problem": problem,
        "message": message,
    })
    .to_string()
}
