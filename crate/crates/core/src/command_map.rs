//! Gesture label to robot command translation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigengesture::Classification;
use crate::scalar::Scalar;

/// Largest distance per translation command, meters.
pub const MAX_TRANSLATION: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("magnitude {magnitude} out of range for {verb}")]
    MagnitudeOutOfRange { verb: Verb, magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Stop,
    Forward,
    Backward,
    TurnLeft,
    TurnRight,
    GripToggle,
    NoOp,
}

impl Verb {
    pub const ALL: [Verb; 7] =
        [Verb::Stop, Verb::Forward, Verb::Backward, Verb::TurnLeft, Verb::TurnRight, Verb::GripToggle, Verb::NoOp];

    /// Wire code.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Verb> {
        Verb::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Stop => "stop",
            Verb::Forward => "forward",
            Verb::Backward => "backward",
            Verb::TurnLeft => "turnleft",
            Verb::TurnRight => "turnright",
            Verb::GripToggle => "griptoggle",
            Verb::NoOp => "noop",
        }
    }

    /// Accepts the lowercase name, with or without underscores.
    pub fn from_name(name: &str) -> Option<Verb> {
        let folded: String = name.chars().filter(|&c| c != '_').collect();
        Verb::ALL.into_iter().find(|v| v.name() == folded)
    }

    /// Largest accepted magnitude, meters or radians.
    pub fn max_magnitude(self) -> f64 {
        match self {
            Verb::TurnLeft | Verb::TurnRight => std::f64::consts::TAU,
            _ => MAX_TRANSLATION,
        }
    }

    pub fn moves(self) -> bool {
        matches!(self, Verb::Forward | Verb::Backward | Verb::TurnLeft | Verb::TurnRight)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A discrete actuation verb with its magnitude (meters or radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotCommand<T> {
    pub verb: Verb,
    pub magnitude: T,
}

impl<T: Scalar> RobotCommand<T> {
    pub fn new(verb: Verb, magnitude: T) -> Result<Self, MappingError> {
        let m = magnitude.as_f64();
        if !(m.is_finite() && m >= 0.0 && m <= verb.max_magnitude()) {
            return Err(MappingError::MagnitudeOutOfRange { verb, magnitude: m });
        }
        Ok(Self { verb, magnitude })
    }

    pub fn stop() -> Self {
        Self { verb: Verb::Stop, magnitude: T::zero() }
    }

    pub fn no_op() -> Self {
        Self { verb: Verb::NoOp, magnitude: T::zero() }
    }
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    #[serde(default = "default_verb_name")]
    default: String,
    #[serde(default)]
    entries: BTreeMap<String, RawEntry>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    verb: String,
    #[serde(default)]
    magnitude: f64,
}

fn default_verb_name() -> String {
    "stop".to_string()
}

/// Label to command table. Unknown classifications always map to `Stop`;
/// labels without an entry map to `NoOp`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingTable<T> {
    entries: BTreeMap<u8, RobotCommand<T>>,
}

impl<T: Scalar> Default for MappingTable<T> {
    /// Six shipped gestures; labels 6 and up are left for the user.
    fn default() -> Self {
        let half = T::of(0.5);
        let quarter_turn = T::FRAC_PI_2();
        let entries = [
            (0, RobotCommand { verb: Verb::Stop, magnitude: T::zero() }),
            (1, RobotCommand { verb: Verb::Forward, magnitude: half }),
            (2, RobotCommand { verb: Verb::Backward, magnitude: half }),
            (3, RobotCommand { verb: Verb::TurnLeft, magnitude: quarter_turn }),
            (4, RobotCommand { verb: Verb::TurnRight, magnitude: quarter_turn }),
            (5, RobotCommand { verb: Verb::GripToggle, magnitude: T::zero() }),
        ];
        Self { entries: entries.into_iter().collect() }
    }
}

impl<T: Scalar> MappingTable<T> {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, label: u8, cmd: RobotCommand<T>) -> Result<(), MappingError> {
        if label == u8::MAX {
            return Err(MappingError::SchemaViolation("label 255 is reserved".into()));
        }
        let checked = RobotCommand::new(cmd.verb, cmd.magnitude)?;
        self.entries.insert(label, checked);
        Ok(())
    }

    pub fn get(&self, label: u8) -> Option<&RobotCommand<T>> {
        self.entries.get(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = u8> + '_ {
        self.entries.keys().copied()
    }

    /// Parses the JSON mapping document.
    pub fn from_json(text: &str) -> Result<Self, MappingError> {
        let raw: RawTable = serde_json::from_str(text).map_err(|e| MappingError::SchemaViolation(e.to_string()))?;
        if raw.default != "stop" {
            return Err(MappingError::SchemaViolation(format!("default must be \"stop\", got {:?}", raw.default)));
        }
        let mut table = Self::empty();
        for (key, entry) in raw.entries {
            let label: u8 = key.parse().map_err(|_| MappingError::SchemaViolation(format!("bad label {key:?}")))?;
            let verb = Verb::from_name(&entry.verb)
                .ok_or_else(|| MappingError::SchemaViolation(format!("unknown verb {:?}", entry.verb)))?;
            table.insert(label, RobotCommand::new(verb, T::of(entry.magnitude))?)?;
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        let raw = RawTable {
            default: default_verb_name(),
            entries: self
                .entries
                .iter()
                .map(|(l, c)| {
                    (l.to_string(), RawEntry { verb: c.verb.name().to_string(), magnitude: c.magnitude.as_f64() })
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("mapping table serializes")
    }

    /// Command for a classification. Total over all inputs.
    pub fn map_gesture(&self, c: &Classification<T>) -> RobotCommand<T> {
        self.map_label(c.label)
    }

    pub fn map_label(&self, label: Option<u8>) -> RobotCommand<T> {
        match label {
            None => RobotCommand::stop(),
            Some(l) => self.entries.get(&l).copied().unwrap_or_else(RobotCommand::no_op),
        }
    }
}

pub fn load_mapping<T: Scalar>(config_text: &str) -> Result<MappingTable<T>, MappingError> {
    MappingTable::from_json(config_text)
}

pub fn map_gesture<T: Scalar>(table: &MappingTable<T>, c: &Classification<T>) -> RobotCommand<T> {
    table.map_gesture(c)
}
