use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use log::info;

use arcap_core::analysis::{analyze_session, AnalysisThresholds, DEFAULT_SPEED_TOLERANCE_TICKS};
use arcap_core::engine::{calibrate_extrinsics, EngineConfig, EngineError};
use arcap_core::kinematics::Pose;
use arcap_core::protocol::{
    encode_hand_stream, replay_source, Client, ClientError, ClientKind, CloudPayload, Message, ReplayError, Server,
    ServerConfig, StopMode, DEFAULT_PORT,
};
use arcap_core::recording::{export_frames, postprocess_session, RecordingError, Session, DEFAULT_SAMPLES_PER_SPHERE};
use arcap_core::scene::{CloudError, ColoredPointCloud};
use arcap_core::simulate::{scenario_scene, simulate, Scenario};

const EXIT_USAGE: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;
const EXIT_PROTOCOL: u8 = 4;

#[derive(Parser)]
#[command(name = "arcap", version, about = "AR-guided demonstration capture engine")]
struct Cli {
    /// Engine configuration (TOML mirroring EngineConfig).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Robot model file or built-in name; overrides the config.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Scene point cloud (ARCPCD1 or `x y z r g b` text).
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    #[arg(long, global = true, env = "ARCAP_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the streaming engine service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Where recorded sessions are written.
        #[arg(long, default_value = "sessions")]
        sessions: PathBuf,
        /// Directory of console assets to serve over HTTP.
        #[arg(long)]
        console: Option<PathBuf>,
    },
    /// Stream a hand-stream file or recorded session to a running service.
    Replay {
        input: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Pace frames by their timestamps instead of lockstep.
        #[arg(long)]
        realtime: bool,
        /// Record the replay as a session, optionally with this id.
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        record: Option<String>,
        /// Write engine outputs as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic hand stream.
    Simulate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the scenario's obstacle scene, if it has one.
        #[arg(long)]
        scene_out: Option<PathBuf>,
    },
    /// Rebuild world-frame clouds with the virtual robot superimposed.
    Postprocess {
        session: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_SPHERE)]
        samples: usize,
        /// Write one ARCPCD1 cloud per frame here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Post-process and write the training layout as .npy arrays.
    Export {
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_SPHERE)]
        samples: usize,
    },
    /// Report demonstration quality and replayability.
    Analyze {
        session: PathBuf,
        /// Overrides the session's visibility threshold.
        #[arg(long)]
        visibility_threshold: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SPEED_TOLERANCE_TICKS)]
        speed_tolerance: u64,
        /// Write the TOML report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Camera pose in the robot base frame from two world poses
    /// (`x,y,z,qw,qx,qy,qz`).
    Calibrate {
        #[arg(long, allow_hyphen_values = true)]
        t_wb: String,
        #[arg(long, allow_hyphen_values = true)]
        t_wc: String,
    },
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        Failure {
            code: classify(&error),
            error,
        }
    }
}

fn classify(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(r) = cause.downcast_ref::<RecordingError>() {
            return match r {
                RecordingError::Integrity { .. } | RecordingError::Manifest(_) => EXIT_INTEGRITY,
                RecordingError::InvalidId(_) => EXIT_USAGE,
                _ => 1,
            };
        }
        if let Some(r) = cause.downcast_ref::<ReplayError>() {
            return match r {
                ReplayError::Integrity { .. } => EXIT_INTEGRITY,
                ReplayError::BadSpeed(_) => EXIT_USAGE,
                ReplayError::Session(RecordingError::Integrity { .. } | RecordingError::Manifest(_)) => EXIT_INTEGRITY,
                _ => 1,
            };
        }
        if let Some(c) = cause.downcast_ref::<CloudError>() {
            return match c {
                CloudError::Io(_) => 1,
                _ => EXIT_INTEGRITY,
            };
        }
        if let Some(c) = cause.downcast_ref::<ClientError>() {
            return match c {
                ClientError::Io(_) => 1,
                _ => EXIT_PROTOCOL,
            };
        }
        if cause.downcast_ref::<EngineError>().is_some() || cause.downcast_ref::<Usage>().is_some() {
            return EXIT_USAGE;
        }
    }
    1
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: anyhow!(Usage(msg.into())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<EngineConfig, Failure> {
    let mut config = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    if let Some(m) = &cli.model {
        config.model = m.clone();
    }
    Ok(config)
}

fn load_scene(cli: &Cli) -> Result<Option<ColoredPointCloud>, Failure> {
    cli.scene
        .as_ref()
        .map(|p| ColoredPointCloud::load(p).with_context(|| format!("loading scene {}", p.display())))
        .transpose()
        .map_err(Failure::from)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Serve {
            bind,
            sessions,
            console,
        } => {
            let mut config = ServerConfig::new(load_config(&cli)?, sessions.clone())?;
            if let Some(scene) = load_scene(&cli)? {
                info!("scene: {} points", scene.len());
                config = config.with_scene(&scene);
            }
            if let Some(dir) = console {
                if !dir.is_dir() {
                    return Err(usage(format!("console directory {} does not exist", dir.display())));
                }
                config.console_dir = Some(dir.clone());
            }
            fs::create_dir_all(sessions).with_context(|| format!("creating {}", sessions.display()))?;
            let server = Server::bind((bind.as_str(), cli.port), config).context("binding service port")?;
            info!("listening on {}", server.local_addr()?);
            server.run()?;
            Ok(())
        }
        Command::Replay {
            input,
            host,
            speed,
            realtime,
            record,
            out,
        } => replay(&cli, input, host, *speed, *realtime, record.as_deref(), out.as_deref()),
        Command::Simulate {
            scenario,
            seed,
            out,
            scene_out,
        } => {
            let frames = simulate(*scenario, *seed);
            fs::write(out, encode_hand_stream(&frames)).with_context(|| format!("writing {}", out.display()))?;
            info!("{scenario}: {} frames -> {}", frames.len(), out.display());
            if let Some(path) = scene_out {
                let scene = scenario_scene(*scenario).unwrap_or_default();
                scene.save(path).with_context(|| format!("writing {}", path.display()))?;
                info!("scene: {} points -> {}", scene.len(), path.display());
            }
            Ok(())
        }
        Command::Postprocess { session, samples, out } => {
            let session = Session::open(session)?;
            let config = &session.manifest().config;
            let model = resolve_model(&cli, config)?;
            let frames = postprocess_session(&session, &config.workspace, &model, *samples)?;
            if let Some(dir) = out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for (i, f) in frames.iter().enumerate() {
                    let mut cloud = ColoredPointCloud::with_capacity(f.points.len());
                    for (p, c) in f.points.iter().zip(&f.colors) {
                        cloud.push([p.x as f32, p.y as f32, p.z as f32], *c);
                    }
                    cloud.save(&dir.join(format!("frame-{i:05}.pcd")))?;
                }
            }
            let total: usize = frames.iter().map(|f| f.points.len()).sum();
            println!(
                "{}: {} frames, {} points ({:.1} per frame)",
                session.manifest().id,
                frames.len(),
                total,
                total as f64 / frames.len().max(1) as f64
            );
            Ok(())
        }
        Command::Export { session, out, samples } => {
            let session = Session::open(session)?;
            let config = &session.manifest().config;
            let model = resolve_model(&cli, config)?;
            let frames = postprocess_session(&session, &config.workspace, &model, *samples)?;
            export_frames(&frames, out)?;
            info!("{} frames -> {}", frames.len(), out.display());
            Ok(())
        }
        Command::Analyze {
            session,
            visibility_threshold,
            speed_tolerance,
            out,
        } => {
            if visibility_threshold.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
                return Err(usage("--visibility-threshold must be in [0, 1]"));
            }
            let session = Session::open(session)?;
            let report = analyze_session(
                &session,
                &AnalysisThresholds {
                    visibility: *visibility_threshold,
                    speed_tolerance_ticks: *speed_tolerance,
                },
            )?;
            match out {
                Some(p) => fs::write(p, report.to_toml()).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", report.to_toml()),
            }
            eprintln!("{}", report.summary());
            Ok(())
        }
        Command::Calibrate { t_wb, t_wc } => {
            let pose = calibrate_extrinsics(&parse_pose(t_wb)?, &parse_pose(t_wc)?);
            let p = pose.position;
            let [w, x, y, z] = pose.wxyz();
            println!("{},{},{},{},{},{},{}", p.x, p.y, p.z, w, x, y, z);
            Ok(())
        }
    }
}

fn resolve_model(cli: &Cli, config: &EngineConfig) -> Result<arcap_core::kinematics::RobotModel, Failure> {
    let mut config = config.clone();
    if let Some(m) = &cli.model {
        config.model = m.clone();
    }
    Ok(config.resolve_model()?)
}

fn parse_pose(text: &str) -> Result<Pose, Failure> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("pose '{text}': {e}")))?;
    let v: [f64; 7] = vals
        .try_into()
        .map_err(|_| usage(format!("pose '{text}' must have 7 values x,y,z,qw,qx,qy,qz")))?;
    let norm = v[3..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if !v.iter().all(|x| x.is_finite()) || norm < 1e-9 {
        return Err(usage(format!("pose '{text}' is not finite with a non-zero quaternion")));
    }
    Ok(Pose::from_wxyz([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]))
}

fn replay(
    cli: &Cli,
    input: &Path,
    host: &str,
    speed: f64,
    realtime: bool,
    record: Option<&str>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let frames = replay_source(input, speed)?;
    let mut client = Client::connect((host, cli.port), ClientKind::Replay)?;
    if let Some(scene) = load_scene(cli)? {
        client.send(Message::SceneUpload {
            cloud: CloudPayload(scene),
        })?;
    }
    if let Some(id) = record {
        let session_id = (!id.is_empty()).then(|| id.to_string());
        expect_ack(client.request(Message::RecordStart { session_id })?)?;
    }
    let mut sink = match out {
        Some(p) => Some(std::io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let start = Instant::now();
    let (mut collisions, mut speed_events, mut visibility, mut dropped) = (0u64, 0u64, 0u64, 0u64);
    let t0 = frames.first().map_or(0.0, |f| f.timestamp);
    for frame in &frames {
        if realtime {
            let due = Duration::from_secs_f64((frame.timestamp - t0).max(0.0));
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let reply = client.request(Message::HandFrame {
            frame: *frame,
            cloud: None,
        })?;
        let Message::EngineOutput { output, dropped: d } = reply else {
            return Err(ClientError::Unexpected(reply.type_name()).into());
        };
        dropped = d;
        for e in &output.events {
            match e.mask_bit() {
                1 => collisions += 1,
                2 => speed_events += 1,
                _ => visibility += 1,
            }
        }
        if let Some(w) = sink.as_mut() {
            serde_json_line(w, &output)?;
        }
    }
    if let Some(w) = sink.as_mut() {
        w.flush()?;
    }
    println!(
        "{} frames in {:.2} s: {collisions} collision, {speed_events} speed-limit, {visibility} visibility-loss events, {dropped} dropped",
        frames.len(),
        start.elapsed().as_secs_f64()
    );
    if record.is_some() {
        let (id, count) = expect_ack(client.request(Message::RecordStop {
            mode: StopMode::Finalize,
        })?)?;
        println!("recorded session {id} ({count} frames)");
    }
    Ok(())
}

fn expect_ack(m: Message) -> Result<(String, u64), Failure> {
    match m {
        Message::RecordAck {
            session_id, frame_count, ..
        } => Ok((session_id, frame_count)),
        other => Err(ClientError::Unexpected(other.type_name()).into()),
    }
}

fn serde_json_line<W: Write, T: serde::Serialize>(w: &mut W, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}
