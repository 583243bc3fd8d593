//! The `gesturebot` command line.
//!
//! Every subcommand writes machine-readable results to stdout as JSON Lines
//! and diagnostics to stderr.

pub mod commands;
pub mod net;

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gesturebot_core::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "gesturebot", version, about = "Hand gesture teleoperation of a simulated robot")]
pub struct Cli {
    /// Pipeline configuration (JSON). Defaults to $GESTUREBOT_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an eigengesture model from a template directory.
    Train {
        template_dir: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Component cap; defaults to the configured k_max.
        #[arg(long)]
        k_max: Option<usize>,
        /// Rejection radius; defaults to half the closest inter-label distance.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Classify one image (PBM silhouette or PGM photo).
    Classify { model_dir: PathBuf, image: PathBuf },
    /// Run the full pipeline on a frame directory or on frames received over UDP.
    Run {
        model_dir: PathBuf,
        #[arg(long, conflicts_with = "listen", required_unless_present = "listen")]
        frames: Option<PathBuf>,
        /// UDP port for frame chunks.
        #[arg(long)]
        listen: Option<u16>,
        /// Address to bind when listening.
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Stop listening after this long without packets.
        #[arg(long, default_value_t = 2000)]
        idle_ms: u64,
        /// Stop listening after this many frames.
        #[arg(long)]
        max_frames: Option<usize>,
        /// Forward classifications and commands to a robot host.
        #[arg(long)]
        robot: Option<SocketAddr>,
        /// Command log destination; defaults to the configured log_path.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Host the simulated robot and the console gateway.
    Serve {
        /// Occupancy grid text file; defaults to an empty walled arena.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Gateway TCP port.
        #[arg(long)]
        gateway: Option<u16>,
        /// UDP port for classification and command packets.
        #[arg(long)]
        commands: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Model for frames sent from consoles.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Console assets served by the gateway.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Also send state packets here.
        #[arg(long)]
        state_to: Option<SocketAddr>,
        /// Exit after this long; runs until killed otherwise.
        #[arg(long)]
        duration_ms: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write the synthetic template and probe set.
    GenDataset {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        labels: usize,
        #[arg(long, default_value_t = 100)]
        variants: usize,
        #[arg(long, default_value_t = 0.02)]
        flip: f64,
        #[arg(long, default_value_t = 0.05)]
        shift: f64,
        #[arg(long, default_value_t = 0.10)]
        scale: f64,
        /// Also render a grayscale clip of this label into frames/.
        #[arg(long)]
        sequence: Option<usize>,
        /// Clip frame size, WIDTHxHEIGHT.
        #[arg(long, default_value = "640x480", value_parser = parse_size)]
        sequence_size: (usize, usize),
    },
    /// Score a model on a probe directory.
    Eval { model_dir: PathBuf, probe_dir: PathBuf },
    /// Binarize PGM frames and send them as frame chunks.
    SendFrame {
        /// A PGM file or a directory of frame_NNNNNN.pgm files.
        path: PathBuf,
        #[arg(long)]
        to: SocketAddr,
        /// Pause between frames; defaults to the configured frame period.
        #[arg(long)]
        period_ms: Option<u64>,
    },
    /// Receive frame chunks and write the reassembled frames as PBM.
    RecvFrame {
        #[arg(long)]
        listen: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 5000)]
        idle_ms: u64,
    },
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.parse().map_err(|_| "bad width")?;
    let h: usize = h.parse().map_err(|_| "bad height")?;
    if w == 0 || h == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((w, h))
}

impl Cli {
    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        Ok(match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::from_env()?,
        })
    }
}

/// Runs a parsed command line, writing results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let cfg = cli.pipeline_config()?;
    match cli.command {
        Command::Train { template_dir, out: dir, k_max, tau } => {
            commands::train(&template_dir, &dir, k_max.unwrap_or(cfg.k_max), tau, out)
        }
        Command::Classify { model_dir, image } => commands::classify(&cfg, &model_dir, &image, out),
        Command::Run { model_dir, frames, listen, bind, idle_ms, max_frames, robot, log } => {
            let log_path = log.or_else(|| cfg.log_path.clone());
            let source = match (frames, listen) {
                (Some(dir), _) => net::Source::Directory(dir),
                (None, Some(port)) => net::Source::Udp {
                    addr: SocketAddr::new(bind, port),
                    idle: std::time::Duration::from_millis(idle_ms),
                    max_frames,
                },
                (None, None) => anyhow::bail!("one of --frames or --listen is required"),
            };
            net::run(&cfg, &model_dir, source, robot, log_path.as_deref(), out)
        }
        Command::Serve { world, gateway, commands, bind, model, static_dir, state_to, duration_ms, log } => {
            let mut cfg = cfg;
            if world.is_some() {
                cfg.world_path = world;
            }
            let opts = net::ServeOptions {
                gateway: SocketAddr::new(bind, gateway.unwrap_or(cfg.ports.gateway)),
                commands: SocketAddr::new(bind, commands.unwrap_or(cfg.ports.commands)),
                model,
                static_dir,
                state_to,
                duration: duration_ms.map(std::time::Duration::from_millis),
                log: log.or_else(|| cfg.log_path.clone()),
            };
            net::serve(&cfg, &opts, out)
        }
        Command::GenDataset { seed, out: dir, labels, variants, flip, shift, scale, sequence, sequence_size } => {
            let spec = gesturebot_core::dataset::SyntheticSpec {
                seed,
                n_labels: labels,
                variants_per_label: variants,
                flip_fraction: flip,
                max_shift_fraction: shift,
                scale_jitter: scale,
            };
            commands::gen_dataset(&spec, &dir, sequence.map(|l| (l, sequence_size)), out)
        }
        Command::Eval { model_dir, probe_dir } => commands::eval(&cfg, &model_dir, &probe_dir, out),
        Command::SendFrame { path, to, period_ms } => {
            let period = std::time::Duration::from_millis(period_ms.unwrap_or(cfg.frame_period_ms));
            net::send_frames(&cfg, &path, to, period, out)
        }
        Command::RecvFrame { listen, bind, out: dir, count, idle_ms } => net::recv_frames(
            SocketAddr::new(bind, listen),
            dir.as_deref(),
            count,
            std::time::Duration::from_millis(idle_ms),
            out,
        ),
    }
}

/// Writes one JSON value as a line.
pub(crate) fn emit(out: &mut dyn Write, value: &serde_json::Value) -> anyhow::Result<()> {
    writeln!(out, "{value}")?;
    out.flush()?;
    Ok(())
}
