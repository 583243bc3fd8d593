//! End-to-end chain: preprocess, binarize, motion gate, segmentation,
//! classification, command mapping and robot actuation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command_map::{MappingError, MappingTable, RobotCommand, Verb};
use crate::eigengesture::{Classification, EigenError, EigenModel, Geometry};
use crate::motion_gate::{GateConfig, GateError, MotionGate};
use crate::raster::{
    binarize_with, decode_pgm, preprocess, BinFrame, GrayFrame, Polarity, RasterError, ThresholdMethod,
};
use crate::robot_sim::{apply_command, render_view, Outcome, RobotState, SimError, ViewRaster, World};
use crate::segmenter::{segment, Orientation, SegmentError};
use crate::wire;

pub const CONFIG_ENV: &str = "GESTUREBOT_CONFIG";
pub const GATEWAY_PORT: u16 = 9104;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("model geometry {model:?} does not match configured {config:?}")]
    ModelMismatch { model: Geometry, config: Geometry },
    #[error("gate: {0}")]
    Gate(#[from] GateError),
    #[error("segment: {0}")]
    Segment(#[from] SegmentError),
    #[error("classify: {0}")]
    Classify(#[from] EigenError),
    #[error("robot: {0}")]
    Robot(#[from] SimError),
    #[error("frame: {0}")]
    Raster(#[from] RasterError),
    #[error("mapping: {0}")]
    Mapping(#[from] MappingError),
    #[error("log order: frame {got} after {last}")]
    LogOrder { last: u64, got: u64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// Errors that affect one frame only; the stream continues past them.
    pub fn is_frame_local(&self) -> bool {
        matches!(
            self,
            PipelineError::Gate(_) | PipelineError::Segment(_) | PipelineError::Classify(_) | PipelineError::Raster(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ports {
    pub frames: u16,
    pub commands: u16,
    pub state: u16,
    pub gateway: u16,
}

impl Default for Ports {
    fn default() -> Self {
        Self {
            frames: wire::PORT_FRAMES,
            commands: wire::PORT_COMMANDS,
            state: wire::PORT_STATE,
            gateway: GATEWAY_PORT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_period_ms: u64,
    pub threshold: ThresholdMethod,
    pub polarity: Polarity,
    pub gate: GateConfig,
    pub orientation: Orientation,
    pub template_geometry: Geometry,
    pub k_max: usize,
    pub tau_override: Option<f64>,
    pub mapping_path: Option<PathBuf>,
    pub world_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub ports: Ports,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_period_ms: 200,
            threshold: ThresholdMethod::OtsuGlobal,
            polarity: Polarity::BrightForeground,
            gate: GateConfig::default(),
            orientation: Orientation::ArmFromLeft,
            template_geometry: Geometry::TEMPLATE,
            k_max: 20,
            tau_override: None,
            mapping_path: None,
            world_path: None,
            log_path: None,
            ports: Ports::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// Loads the file named by `GESTUREBOT_CONFIG`, or the defaults.
    pub fn from_env() -> Result<Self, PipelineError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.frame_period_ms == 0 {
            return Err(PipelineError::Config("frame_period_ms must be at least 1".into()));
        }
        self.gate.validate()?;
        for p in [&self.mapping_path, &self.world_path].into_iter().flatten() {
            if !p.exists() {
                return Err(PipelineError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn load_mapping(&self) -> Result<MappingTable<f64>, PipelineError> {
        match &self.mapping_path {
            None => Ok(MappingTable::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| PipelineError::Io { path: p.clone(), source })?;
                Ok(MappingTable::from_json(&text)?)
            }
        }
    }

    pub fn load_world(&self) -> Result<World<f64>, PipelineError> {
        match &self.world_path {
            None => Ok(World::walled_arena()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| PipelineError::Io { path: p.clone(), source })?;
                Ok(World::from_text(&text)?)
            }
        }
    }
}

/// One actuation, as written to the command log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub frame_seq: u64,
    /// `null` for an unknown gesture.
    pub label: Option<u8>,
    pub distance: f64,
    pub verb: Verb,
    pub magnitude: f64,
    pub outcome: Outcome,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub grip: bool,
    pub tick: u64,
}

impl LogRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

/// Append-only command log, strictly ordered by frame sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandLog {
    records: Vec<LogRecord>,
}

impl CommandLog {
    pub fn push(&mut self, rec: LogRecord) -> Result<(), PipelineError> {
        if let Some(last) = self.records.last() {
            if rec.frame_seq <= last.frame_seq {
                return Err(PipelineError::LogOrder { last: last.frame_seq, got: rec.frame_seq });
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.records.last().map(|r| r.frame_seq)
    }

    /// JSON Lines rendering, one record per line.
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| r.to_json() + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, PipelineError> {
        let mut log = CommandLog::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: LogRecord = serde_json::from_str(line).map_err(|e| PipelineError::Config(e.to_string()))?;
            log.push(rec)?;
        }
        Ok(log)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(path, self.to_jsonl()).map_err(|source| PipelineError::Io { path: path.into(), source })
    }
}

/// Everything produced by one actuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuation {
    pub classification: Classification<f64>,
    pub command: RobotCommand<f64>,
    pub outcome: Outcome,
    pub state: RobotState<f64>,
    pub view: ViewRaster,
    pub record: LogRecord,
}

/// Front half of the chain: binarization through classification.
pub struct Recognizer {
    cfg: PipelineConfig,
    model: EigenModel<f64>,
    gate: MotionGate,
}

impl Recognizer {
    pub fn new(cfg: PipelineConfig, model: EigenModel<f64>) -> Result<Self, PipelineError> {
        if model.geometry() != cfg.template_geometry {
            return Err(PipelineError::ModelMismatch { model: model.geometry(), config: cfg.template_geometry });
        }
        let model = match cfg.tau_override {
            Some(t) => model.with_tau(t),
            None => model,
        };
        let gate = MotionGate::new(cfg.gate)?;
        Ok(Self { cfg, model, gate })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn model(&self) -> &EigenModel<f64> {
        &self.model
    }

    /// Capture-side stages: smoothing, normalization, global threshold.
    pub fn binarize(cfg: &PipelineConfig, frame: &GrayFrame) -> BinFrame {
        binarize_with(&preprocess(frame), cfg.threshold, cfg.polarity)
    }

    pub fn push_gray(&mut self, frame: &GrayFrame) -> Result<Option<Classification<f64>>, PipelineError> {
        let bin = Self::binarize(&self.cfg, frame);
        self.push_binary(bin, frame.seq)
    }

    /// Control-side stages, starting at the motion gate.
    pub fn push_binary(&mut self, bin: BinFrame, seq: u64) -> Result<Option<Classification<f64>>, PipelineError> {
        let Some(selected) = self.gate.step(bin)? else {
            return Ok(None);
        };
        let g = self.cfg.template_geometry;
        let hand = segment(&selected, self.cfg.orientation, g.width, g.height)?;
        Ok(Some(self.model.classify(&hand, seq)?))
    }
}

/// Back half of the chain: command mapping, the simulated robot and the log.
pub struct Controller {
    table: MappingTable<f64>,
    world: World<f64>,
    robot: RobotState<f64>,
    log: CommandLog,
}

impl Controller {
    pub fn new(table: MappingTable<f64>, world: World<f64>) -> Result<Self, PipelineError> {
        let robot = RobotState::origin();
        robot.validate(&world)?;
        Ok(Self { table, world, robot, log: CommandLog::default() })
    }

    pub fn table(&self) -> &MappingTable<f64> {
        &self.table
    }

    pub fn robot(&self) -> &RobotState<f64> {
        &self.robot
    }

    pub fn world(&self) -> &World<f64> {
        &self.world
    }

    pub fn log(&self) -> &CommandLog {
        &self.log
    }

    pub fn into_log(self) -> CommandLog {
        self.log
    }

    /// Smallest frame sequence the log will still accept.
    pub fn next_seq(&self) -> u64 {
        self.log.last_seq().map_or(0, |s| s + 1)
    }

    /// Maps a classification to a command and runs it on the robot.
    pub fn actuate(&mut self, class: Classification<f64>) -> Result<Actuation, PipelineError> {
        let command = self.table.map_gesture(&class);
        self.execute(class, command)
    }

    /// Runs an already mapped command, recording it against `class`.
    pub fn execute(
        &mut self,
        class: Classification<f64>,
        command: RobotCommand<f64>,
    ) -> Result<Actuation, PipelineError> {
        if let Some(last) = self.log.last_seq() {
            if class.frame_seq <= last {
                return Err(PipelineError::LogOrder { last, got: class.frame_seq });
            }
        }
        let (state, outcome) = apply_command(&self.world, &self.robot, &command)?;
        self.robot = state;
        let record = LogRecord {
            frame_seq: class.frame_seq,
            label: class.label,
            distance: class.distance,
            verb: command.verb,
            magnitude: command.magnitude,
            outcome,
            x: state.x,
            y: state.y,
            theta: state.theta,
            grip: state.grip,
            tick: state.tick,
        };
        self.log.push(record.clone())?;
        Ok(Actuation { classification: class, command, outcome, state, view: render_view(&self.world, &state), record })
    }
}

/// The full chain over one frame stream and one robot.
pub struct Pipeline {
    recognizer: Recognizer,
    controller: Controller,
}

impl Pipeline {
    pub fn new(
        cfg: PipelineConfig,
        model: EigenModel<f64>,
        table: MappingTable<f64>,
        world: World<f64>,
    ) -> Result<Self, PipelineError> {
        Ok(Self { recognizer: Recognizer::new(cfg, model)?, controller: Controller::new(table, world)? })
    }

    pub fn recognizer(&self) -> &Recognizer {
        &self.recognizer
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut Controller {
        &mut self.controller
    }

    pub fn log(&self) -> &CommandLog {
        self.controller.log()
    }

    pub fn into_log(self) -> CommandLog {
        self.controller.into_log()
    }

    pub fn push_gray(&mut self, frame: &GrayFrame) -> Result<Option<Actuation>, PipelineError> {
        match self.recognizer.push_gray(frame)? {
            Some(c) => self.controller.actuate(c).map(Some),
            None => Ok(None),
        }
    }

    pub fn push_binary(&mut self, bin: BinFrame, seq: u64) -> Result<Option<Actuation>, PipelineError> {
        match self.recognizer.push_binary(bin, seq)? {
            Some(c) => self.controller.actuate(c).map(Some),
            None => Ok(None),
        }
    }
}

/// Runs a frame source through a fresh pipeline. Frame-local failures are
/// logged and skipped.
pub fn run_pipeline(
    source: impl IntoIterator<Item = GrayFrame>,
    cfg: PipelineConfig,
    model: EigenModel<f64>,
    table: MappingTable<f64>,
    world: World<f64>,
) -> Result<CommandLog, PipelineError> {
    let mut p = Pipeline::new(cfg, model, table, world)?;
    for frame in source {
        if let Err(e) = p.push_gray(&frame) {
            if !e.is_frame_local() {
                return Err(e);
            }
            log::warn!("frame {}: {e}", frame.seq);
        }
    }
    Ok(p.into_log())
}

/// Parses `frame_%06d.pgm`.
pub fn parse_frame_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn frame_file_name(seq: u64) -> String {
    format!("frame_{seq:06}.pgm")
}

/// Frame files in a directory, sorted by sequence number.
pub fn list_frames(dir: &Path) -> Result<Vec<(u64, PathBuf)>, PipelineError> {
    let rd = fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.into(), source })?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|source| PipelineError::Io { path: dir.into(), source })?.path();
        if let Some(seq) = path.file_name().and_then(|n| n.to_str()).and_then(parse_frame_name) {
            out.push((seq, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Lazily decodes the frames of a directory. Undecodable files are logged
/// and skipped.
pub fn frame_source(dir: &Path) -> Result<impl Iterator<Item = GrayFrame>, PipelineError> {
    let files = list_frames(dir)?;
    Ok(files.into_iter().filter_map(|(seq, path)| {
        let decoded =
            fs::read(&path).map_err(|e| e.to_string()).and_then(|b| decode_pgm(&b).map_err(|e| e.to_string()));
        match decoded {
            Ok(f) => Some(f.with_seq(seq)),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                None
            }
        }
    }))
}

pub fn write_frames(dir: &Path, frames: &[GrayFrame]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.into(), source })?;
    for f in frames {
        let path = dir.join(frame_file_name(f.seq));
        let mut file = fs::File::create(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        file.write_all(&crate::raster::encode_pgm(f))
            .map_err(|source| PipelineError::Io { path: path.clone(), source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_names() {
        assert_eq!(parse_frame_name("frame_000012.pgm"), Some(12));
        assert_eq!(parse_frame_name("frame_1234567.pgm"), Some(1234567));
        assert_eq!(parse_frame_name("frame_12.pgm"), None);
        assert_eq!(parse_frame_name("frame_00001a.pgm"), None);
        assert_eq!(frame_file_name(7), "frame_000007.pgm");
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.frame_period_ms, 200);
        assert!(PipelineConfig::from_json(r#"{"frame_period_ms": 0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"world_path": "/no/such/file"}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let fixed = PipelineConfig::from_json(r#"{"threshold": {"method": "fixed", "level": 90}}"#).unwrap();
        assert_eq!(fixed.threshold, ThresholdMethod::Fixed(90));
    }

    #[test]
    fn log_order_enforced() {
        let rec = |s| LogRecord {
            frame_seq: s,
            label: None,
            distance: 0.0,
            verb: Verb::Stop,
            magnitude: 0.0,
            outcome: Outcome::Ok,
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            grip: false,
            tick: 1,
        };
        let mut log = CommandLog::default();
        log.push(rec(3)).unwrap();
        assert!(log.push(rec(3)).is_err());
        log.push(rec(4)).unwrap();
        let text = log.to_jsonl();
        assert!(text.starts_with(r#"{"frame_seq":3,"label":null,"distance":0.0,"verb":"stop""#));
        assert_eq!(CommandLog::from_jsonl(&text).unwrap(), log);
    }
}
