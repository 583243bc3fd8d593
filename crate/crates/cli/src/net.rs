//! Streaming subcommands: the pipeline runner, the robot host and the wire
//! debugging tools.

use std::collections::HashMap;
use std::io::{ErrorKind, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::{Duration, Instant};

use anyhow::Context;
use gesturebot_core::eigengesture::Classification;
use gesturebot_core::model_store::load_model;
use gesturebot_core::pipeline::{frame_source, list_frames, parse_frame_name, Actuation};
use gesturebot_core::raster::{decode_pgm, encode_pbm, BinFrame};
use gesturebot_core::wire::{
    decode_packet, ClassMsg, CmdMsg, PacketBody, PacketSender, ReassemblyBuffer, StateMsg, HEADER_LEN, MAX_PAYLOAD,
};
use gesturebot_core::{Controller, Pipeline, PipelineConfig, Recognizer, RobotCommand};
use gesturebot_gateway::{Gateway, GatewayConfig, GatewayMessage, Inbound, DEFAULT_BACKLOG};
use serde_json::json;

use crate::emit;

const POLL: Duration = Duration::from_millis(20);
const HEARTBEAT: Duration = Duration::from_secs(1);

fn udp_sender(target: SocketAddr) -> std::io::Result<PacketSender> {
    let local: SocketAddr = if target.is_ipv4() { ([0, 0, 0, 0], 0).into() } else { "[::]:0".parse().unwrap() };
    Ok(PacketSender::new(UdpSocket::bind(local)?, target))
}

/// Binary frames reassembled from chunk packets, one buffer per peer.
pub struct FrameReceiver {
    socket: UdpSocket,
    buffers: HashMap<SocketAddr, ReassemblyBuffer>,
    epoch: Instant,
    idle: Duration,
}

impl FrameReceiver {
    pub fn bind(addr: SocketAddr, idle: Duration) -> std::io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(POLL))?;
        Ok(Self { socket, buffers: HashMap::new(), epoch: Instant::now(), idle })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Next complete frame, or `None` once no packet has arrived for the
    /// idle period.
    pub fn next_frame(&mut self) -> std::io::Result<Option<(u32, BinFrame)>> {
        let mut buf = [0u8; HEADER_LEN + MAX_PAYLOAD + 1];
        let mut last = Instant::now();
        loop {
            let (n, peer) = match self.socket.recv_from(&mut buf) {
                Ok(r) => r,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    if last.elapsed() >= self.idle {
                        return Ok(None);
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            last = Instant::now();
            let chunk = match decode_packet(&buf[..n]) {
                Ok(p) => match p.body {
                    PacketBody::FrameChunk(c) => c,
                    other => {
                        log::debug!("ignoring {:#04x} packet from {peer}", other.kind());
                        continue;
                    }
                },
                Err(e) => {
                    log::warn!("bad packet from {peer}: {e}");
                    continue;
                }
            };
            let now = self.epoch.elapsed().as_millis() as u64;
            match self.buffers.entry(peer).or_default().push(&chunk, now) {
                Ok(Some(frame)) => return Ok(Some(frame)),
                Ok(None) => {}
                Err(e) => log::warn!("frame from {peer}: {e}"),
            }
        }
    }
}

pub enum Source {
    Directory(PathBuf),
    Udp { addr: SocketAddr, idle: Duration, max_frames: Option<usize> },
}

fn forward(robot: &mut Option<PacketSender>, act: &Actuation) -> anyhow::Result<()> {
    if let Some(tx) = robot {
        let c = &act.classification;
        tx.send(PacketBody::Class(ClassMsg {
            frame_id: c.frame_seq as u32,
            label: c.label,
            distance: c.distance as f32,
        }))?;
        tx.send(PacketBody::Cmd(CmdMsg { verb: act.command.verb, magnitude: act.command.magnitude as f32 }))?;
    }
    Ok(())
}

/// Full pipeline over a frame directory or a UDP frame stream.
pub fn run(
    cfg: &PipelineConfig,
    model_dir: &Path,
    source: Source,
    robot: Option<SocketAddr>,
    log_path: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let model = load_model::<f64>(model_dir)?;
    let mut pipeline = Pipeline::new(cfg.clone(), model, cfg.load_mapping()?, cfg.load_world()?)?;
    let mut robot = robot.map(udp_sender).transpose()?;
    let mut step = |result: Result<Option<Actuation>, gesturebot_core::PipelineError>, seq: u64| {
        match result {
            Ok(Some(act)) => {
                forward(&mut robot, &act)?;
                writeln!(out, "{}", act.record.to_json())?;
                out.flush()?;
            }
            Ok(None) => {}
            Err(e) if e.is_frame_local() => log::warn!("frame {seq}: {e}"),
            Err(e) => return Err(anyhow::Error::from(e)),
        }
        Ok::<_, anyhow::Error>(())
    };
    match source {
        Source::Directory(dir) => {
            for frame in frame_source(&dir)? {
                let seq = frame.seq;
                step(pipeline.push_gray(&frame), seq)?;
            }
        }
        Source::Udp { addr, idle, max_frames } => {
            let mut rx = FrameReceiver::bind(addr, idle)?;
            log::info!("listening for frames on {}", rx.local_addr()?);
            let mut seen = 0usize;
            while max_frames.is_none_or(|m| seen < m) {
                let Some((id, bin)) = rx.next_frame()? else { break };
                seen += 1;
                step(pipeline.push_binary(bin, id as u64), id as u64)?;
            }
        }
    }
    if let Some(p) = log_path {
        pipeline.log().write_to(p)?;
    }
    Ok(())
}

pub struct ServeOptions {
    pub gateway: SocketAddr,
    pub commands: SocketAddr,
    pub model: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub state_to: Option<SocketAddr>,
    pub duration: Option<Duration>,
    pub log: Option<PathBuf>,
}

struct Host<'a> {
    controller: Controller,
    recognizer: Option<Recognizer>,
    gateway: Gateway,
    state_tx: Option<PacketSender>,
    out: &'a mut dyn Write,
}

impl Host<'_> {
    fn publish_state(&self) {
        let s = self.controller.robot();
        self.gateway.publish(&GatewayMessage::from(s));
    }

    fn report(&mut self, act: &Actuation) -> anyhow::Result<()> {
        self.gateway.publish(&GatewayMessage::from(&act.classification));
        self.gateway.publish(&GatewayMessage::from(&act.state));
        self.gateway.publish(&GatewayMessage::from(&act.view));
        if let Some(tx) = &mut self.state_tx {
            tx.send(PacketBody::State(StateMsg {
                x: act.state.x as f32,
                y: act.state.y as f32,
                theta: act.state.theta as f32,
                grip: act.state.grip,
                tick: act.state.tick as u32,
            }))?;
        }
        writeln!(self.out, "{}", act.record.to_json())?;
        self.out.flush()?;
        Ok(())
    }

    /// A command decided elsewhere, labelled with the classification sent
    /// just before it when there was one.
    fn remote_command(&mut self, class: Option<ClassMsg>, cmd: CmdMsg) -> anyhow::Result<()> {
        let next = self.controller.next_seq();
        let c = match class {
            Some(c) => {
                Classification { label: c.label, distance: c.distance as f64, frame_seq: (c.frame_id as u64).max(next) }
            }
            None => Classification { label: None, distance: 0.0, frame_seq: next },
        };
        let command = RobotCommand::new(cmd.verb, cmd.magnitude as f64)?;
        let act = self.controller.execute(c, command)?;
        self.report(&act)
    }

    fn inbound(&mut self, msg: Inbound) -> anyhow::Result<()> {
        match msg {
            Inbound::Gesture { label } => {
                let c = Classification { label: Some(label), distance: 0.0, frame_seq: self.controller.next_seq() };
                let act = self.controller.actuate(c)?;
                self.report(&act)
            }
            Inbound::Frame(frame) => {
                let Some(rec) = &mut self.recognizer else {
                    log::warn!("console frame dropped: serve was started without --model");
                    return Ok(());
                };
                let frame = frame.with_seq(self.controller.next_seq());
                match rec.push_gray(&frame) {
                    Ok(Some(c)) => {
                        self.gateway.publish(&GatewayMessage::from(&c));
                        let act = self.controller.actuate(c)?;
                        self.report(&act)
                    }
                    Ok(None) => Ok(()),
                    Err(e) if e.is_frame_local() => {
                        log::warn!("console frame: {e}");
                        Ok(())
                    }
                    Err(e) => Err(e.into()),
                }
            }
        }
    }
}

/// Robot host: applies commands from the network and from consoles, and
/// publishes the robot's state to consoles.
pub fn serve(cfg: &PipelineConfig, opts: &ServeOptions, out: &mut dyn Write) -> anyhow::Result<()> {
    let controller = Controller::new(cfg.load_mapping()?, cfg.load_world()?)?;
    let recognizer = match &opts.model {
        Some(dir) => Some(Recognizer::new(cfg.clone(), load_model::<f64>(dir)?)?),
        None => None,
    };
    let gateway = Gateway::start(GatewayConfig {
        addr: opts.gateway,
        static_dir: opts.static_dir.clone(),
        backlog: DEFAULT_BACKLOG,
    })
    .with_context(|| format!("starting gateway on {}", opts.gateway))?;
    let socket = UdpSocket::bind(opts.commands).with_context(|| format!("binding {}", opts.commands))?;
    socket.set_read_timeout(Some(POLL))?;
    log::info!("robot host: commands on {}, consoles on {}", socket.local_addr()?, gateway.local_addr());
    let state_tx = opts.state_to.map(udp_sender).transpose()?;
    let mut host = Host { controller, recognizer, gateway, state_tx, out };
    host.publish_state();

    let start = Instant::now();
    let mut beat = Instant::now();
    let mut pending: Option<ClassMsg> = None;
    let mut buf = [0u8; HEADER_LEN + MAX_PAYLOAD + 1];
    while opts.duration.is_none_or(|d| start.elapsed() < d) {
        match socket.recv_from(&mut buf) {
            Ok((n, peer)) => match decode_packet(&buf[..n]) {
                Ok(p) => match p.body {
                    PacketBody::Class(c) => pending = Some(c),
                    PacketBody::Cmd(cmd) => host.remote_command(pending.take(), cmd)?,
                    other => log::debug!("ignoring {:#04x} packet from {peer}", other.kind()),
                },
                Err(e) => log::warn!("bad packet from {peer}: {e}"),
            },
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.into()),
        }
        while let Some(msg) = host.gateway.try_recv() {
            host.inbound(msg)?;
        }
        if beat.elapsed() >= HEARTBEAT {
            host.publish_state();
            beat = Instant::now();
        }
    }
    if let Some(p) = &opts.log {
        host.controller.log().write_to(p)?;
    }
    Ok(())
}

/// Capture side: binarizes frames and ships them as chunks.
pub fn send_frames(
    cfg: &PipelineConfig,
    path: &Path,
    to: SocketAddr,
    period: Duration,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let files = if path.is_dir() {
        list_frames(path)?
    } else {
        let seq = path.file_name().and_then(|n| n.to_str()).and_then(parse_frame_name).unwrap_or(0);
        vec![(seq, path.to_path_buf())]
    };
    let mut tx = udp_sender(to)?;
    let (mut sent, mut chunks) = (0usize, 0usize);
    for (i, (seq, file)) in files.iter().enumerate() {
        if i > 0 && !period.is_zero() {
            sleep(period);
        }
        let bytes = std::fs::read(file).with_context(|| format!("reading {}", file.display()))?;
        let frame = match decode_pgm(&bytes) {
            Ok(f) => f.with_seq(*seq),
            Err(e) => {
                log::warn!("{}: {e}", file.display());
                continue;
            }
        };
        let bin = Recognizer::binarize(cfg, &frame);
        let before = chunks;
        chunks += gesturebot_core::wire::chunk_frame(&bin, *seq as u32).len();
        tx.send_frame(&bin, *seq as u32)?;
        log::debug!("frame {seq}: {} chunks", chunks - before);
        sent += 1;
    }
    emit(out, &json!({ "sent": sent, "chunks": chunks, "to": to.to_string() }))
}

/// Receives up to `count` frames and optionally writes them as PBM.
pub fn recv_frames(
    addr: SocketAddr,
    dir: Option<&Path>,
    count: usize,
    idle: Duration,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let mut rx = FrameReceiver::bind(addr, idle)?;
    log::info!("listening for frames on {}", rx.local_addr()?);
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    for _ in 0..count {
        let Some((id, bin)) = rx.next_frame()? else { break };
        let mut line =
            json!({ "frame_id": id, "width": bin.width(), "height": bin.height(), "ones": bin.count_ones() });
        if let Some(d) = dir {
            let path = d.join(format!("frame_{id:06}.pbm"));
            std::fs::write(&path, encode_pbm(&bin))?;
            line["path"] = json!(path.display().to_string());
        }
        emit(out, &line)?;
    }
    Ok(())
}
