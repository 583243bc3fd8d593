//! JSON messages exchanged with browser consoles.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use gesturebot_core::raster::{decode_pgm, encode_pgm, GrayFrame};
use gesturebot_core::{Classification, RobotState, Scalar, ViewRaster};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One text frame on the socket. Unknown fields are ignored on receipt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GatewayMessage {
    State {
        x: f64,
        y: f64,
        theta: f64,
        grip: bool,
        tick: u64,
    },
    /// `label` is `null` for an unknown gesture.
    Class {
        label: Option<u8>,
        distance: f64,
        frame_seq: u64,
    },
    /// Rows of the 9x9 view, `.` free, `#` obstacle, `R` robot.
    View {
        rows: Vec<String>,
    },
    Gesture {
        label: u8,
    },
    /// Base64 of a binary or plain PGM file.
    Frame {
        data: String,
    },
}

impl GatewayMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gateway message serializes")
    }

    pub fn frame(frame: &GrayFrame) -> Self {
        GatewayMessage::Frame { data: STANDARD.encode(encode_pgm(frame)) }
    }
}

impl<T: Scalar> From<&RobotState<T>> for GatewayMessage {
    fn from(s: &RobotState<T>) -> Self {
        GatewayMessage::State { x: s.x.as_f64(), y: s.y.as_f64(), theta: s.theta.as_f64(), grip: s.grip, tick: s.tick }
    }
}

impl<T: Scalar> From<&Classification<T>> for GatewayMessage {
    fn from(c: &Classification<T>) -> Self {
        GatewayMessage::Class { label: c.label, distance: c.distance.as_f64(), frame_seq: c.frame_seq }
    }
}

impl From<&ViewRaster> for GatewayMessage {
    fn from(v: &ViewRaster) -> Self {
        GatewayMessage::View { rows: v.to_rows() }
    }
}

/// What a console asked the pipeline to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    /// Manual gesture; bypasses the classifier.
    Gesture { label: u8 },
    /// Camera frame for the head of the pipeline.
    Frame(GrayFrame),
}

#[derive(Debug, Error)]
pub enum InboundError {
    #[error("not a gateway message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("message type `{0}` is outbound only")]
    Direction(&'static str),
    #[error("frame data is not base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("frame data is not a PGM: {0}")]
    Image(#[from] gesturebot_core::RasterError),
}

pub fn parse_inbound(text: &str) -> Result<Inbound, InboundError> {
    match serde_json::from_str::<GatewayMessage>(text)? {
        GatewayMessage::Gesture { label } => Ok(Inbound::Gesture { label }),
        GatewayMessage::Frame { data } => {
            let bytes = STANDARD.decode(data.trim())?;
            Ok(Inbound::Frame(decode_pgm(&bytes)?))
        }
        GatewayMessage::State { .. } => Err(InboundError::Direction("state")),
        GatewayMessage::Class { .. } => Err(InboundError::Direction("class")),
        GatewayMessage::View { .. } => Err(InboundError::Direction("view")),
    }
}
