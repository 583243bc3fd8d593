//! Hand-gesture teleoperation core.
//!
//! Grayscale frames are smoothed, normalized and thresholded into binary
//! silhouettes. A motion gate picks still frames, the segmenter cuts the
//! hand away from the arm and resamples it onto a fixed template grid, and
//! an eigenspace nearest-neighbour classifier names the gesture. Gestures
//! map to robot commands that drive a grid-world simulator.

pub mod command_map;
pub mod dataset;
pub mod eigengesture;
pub mod model_store;
pub mod motion_gate;
pub mod pipeline;
pub mod raster;
pub mod robot_sim;
pub mod scalar;
pub mod segmenter;
pub mod wire;

pub use command_map::{MappingError, MappingTable, RobotCommand, Verb};
pub use eigengesture::{Classification, EigenError, EigenModel, Geometry, GestureTemplate};
pub use motion_gate::{GateConfig, MotionGate};
pub use pipeline::{CommandLog, Controller, LogRecord, Pipeline, PipelineConfig, PipelineError, Recognizer};
pub use raster::{BinFrame, GrayFrame, Polarity, RasterError, ThresholdMethod};
pub use robot_sim::{Outcome, RobotState, ViewRaster, World};
pub use scalar::Scalar;
pub use segmenter::{Orientation, SegmentError};

pub type EigenModel64 = EigenModel<f64>;
pub type EigenModel32 = EigenModel<f32>;
pub type Classification64 = Classification<f64>;
pub type RobotCommand64 = RobotCommand<f64>;
pub type MappingTable64 = MappingTable<f64>;
pub type RobotState64 = RobotState<f64>;
pub type World64 = World<f64>;
