//! Three-frame XOR/OR motion gate selecting the motionless frame that carries
//! a completed gesture.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BinFrame;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("frame is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
    #[error("invalid gate config: {0}")]
    InvalidConfig(&'static str),
}

fn mismatch(want: &BinFrame, got: &BinFrame) -> GateError {
    GateError::DimensionMismatch {
        want_w: want.width(),
        want_h: want.height(),
        got_w: got.width(),
        got_h: got.height(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// A triple is still when its mismatch ratio is strictly below this.
    pub still_ratio: f64,
    /// Consecutive still triples needed to fire.
    pub required_run: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { still_ratio: 0.01, required_run: 3 }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if !(self.still_ratio > 0.0 && self.still_ratio < 1.0) {
            return Err(GateError::InvalidConfig("still_ratio must lie in (0, 1)"));
        }
        if self.required_run == 0 {
            return Err(GateError::InvalidConfig("required_run must be at least 1"));
        }
        Ok(())
    }
}

/// Number of pixels set in `(f1 XOR f3) OR (f2 XOR f3)`.
pub fn mismatch_count(f1: &BinFrame, f2: &BinFrame, f3: &BinFrame) -> Result<usize, GateError> {
    if !f1.same_dims(f3) {
        return Err(mismatch(f3, f1));
    }
    if !f2.same_dims(f3) {
        return Err(mismatch(f3, f2));
    }
    Ok(f1.bits().iter().zip(f2.bits()).zip(f3.bits()).filter(|((&a, &b), &c)| (a ^ c) | (b ^ c)).count())
}

/// Fraction of mismatched pixels across a frame triple.
pub fn mismatch_ratio(f1: &BinFrame, f2: &BinFrame, f3: &BinFrame) -> Result<f64, GateError> {
    let n = mismatch_count(f1, f2, f3)?;
    Ok(n as f64 / (f3.width() * f3.height()) as f64)
}

/// Rolling window of the three most recent frames plus the still-run counter.
#[derive(Debug, Clone, PartialEq)]
pub struct GateState {
    window: VecDeque<BinFrame>,
    still_run: u32,
    armed: bool,
}

impl Default for GateState {
    fn default() -> Self {
        Self { window: VecDeque::with_capacity(3), still_run: 0, armed: true }
    }
}

impl GateState {
    pub fn still_run(&self) -> u32 {
        self.still_run
    }

    pub fn armed(&self) -> bool {
        self.armed
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }
}

/// Outcome of one gate step, for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Mismatch ratio of the completed triple, if the window was full.
    pub ratio: Option<f64>,
    /// The selected gesture frame when the gate fired.
    pub selected: Option<BinFrame>,
}

/// Motion gate for one frame stream.
#[derive(Debug, Clone)]
pub struct MotionGate {
    cfg: GateConfig,
    state: GateState,
}

impl MotionGate {
    pub fn new(cfg: GateConfig) -> Result<Self, GateError> {
        cfg.validate()?;
        Ok(Self { cfg, state: GateState::default() })
    }

    pub fn state(&self) -> &GateState {
        &self.state
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    /// Pushes a frame; returns the frame to classify when the gate fires.
    pub fn step(&mut self, frame: BinFrame) -> Result<Option<BinFrame>, GateError> {
        Ok(self.step_report(frame)?.selected)
    }

    pub fn step_report(&mut self, frame: BinFrame) -> Result<StepReport, GateError> {
        if let Some(first) = self.state.window.front() {
            if !first.same_dims(&frame) {
                return Err(mismatch(first, &frame));
            }
        }
        let st = &mut self.state;
        if st.window.len() == 3 {
            st.window.pop_front();
        }
        st.window.push_back(frame);
        if st.window.len() < 3 {
            return Ok(StepReport { ratio: None, selected: None });
        }
        let ratio = mismatch_ratio(&st.window[0], &st.window[1], &st.window[2])?;
        let mut selected = None;
        if ratio < self.cfg.still_ratio {
            st.still_run = st.still_run.saturating_add(1);
            if st.armed && st.still_run >= self.cfg.required_run {
                st.armed = false;
                selected = st.window.back().cloned();
            }
        } else {
            st.still_run = 0;
            st.armed = true;
        }
        Ok(StepReport { ratio: Some(ratio), selected })
    }
}
