//! `phacosim` command line.
//!
//! Every subcommand prints one JSON summary line on success. Failures print
//! an [`ErrorMsg`] on stderr and exit with 2 for usage or configuration
//! problems and 1 for data errors.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use phacosim_core::dataio::{
    self, encode_frame_png, encode_label_png, export_paired_dataset, load_landmark_tracks, load_mask_archive,
    load_script, save_graphs, save_script, sequence_graphs, DataError, ExportOptions,
};
use phacosim_core::geometry::{CoordinateMap, Vec2};
use phacosim_core::kinex::{extract_script, ExtractOptions, KinexError};
use phacosim_core::renderer::{SimFrame, ToolLibrary, MIN_RESOLUTION};
use phacosim_core::roundtrip::{run_roundtrip, RoundtripError, RoundtripReport, Tolerances};
use phacosim_core::scenegraph::default_class_names;
use phacosim_core::session::{CheckpointPolicy, SessionManager};
use phacosim_core::simulator::{generate_ood_scenario, OodRequest, SimError, Simulator};
use serde_json::json;

use crate::config::{Config, CONFIG_ENV};
use crate::http::{router, AppState};
use crate::wire::{ErrorMsg, Handshake, WIRE_VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "phacosim",
    version,
    about = "Cataract-surgery scene simulator and dataset tools"
)]
pub struct Cli {
    /// TOML file with defaults for the flags below.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Square render resolution in pixels [default: 128].
    #[arg(long, global = true)]
    pub resolution: Option<u32>,
    /// Frame rate of produced scripts [default: 4].
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    /// Simulator units spanned by half the image [default: 1].
    #[arg(long, global = true)]
    pub sim_scale: Option<f64>,
    /// Output root [default: out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recover a kinematic script from a mask archive.
    Extract {
        /// Mask archive directory (manifest.json plus PNG masks).
        #[arg(long)]
        masks: PathBuf,
        /// Landmark track file; without one the camera is assumed static.
        #[arg(long)]
        tracks: Option<PathBuf>,
        /// Skip the template refinement pass.
        #[arg(long)]
        no_refine: bool,
    },
    /// Render a script to label rasters, flat frames and scene graphs.
    Replay {
        #[arg(long)]
        script: PathBuf,
    },
    /// Write the paired windowed dataset for a script.
    Export {
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 32)]
        max_nodes: usize,
    },
    /// Generate an out-of-distribution script from a JSON request.
    Ood {
        #[arg(long)]
        request: PathBuf,
    },
    /// Run the session service.
    Serve {
        /// Listen address [default: 127.0.0.1:8765].
        #[arg(long)]
        bind: Option<String>,
        /// Directory for periodic session checkpoints.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Steps between checkpoints.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Render seeded scenarios, recover them and print the error table.
    Roundtrip {
        #[arg(long, default_value_t = 32)]
        frames: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 1)]
        scenarios: u64,
        /// Print the merged report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl ToString) -> Self {
        Self {
            code: 2,
            kind: "Usage".into(),
            message: message.to_string(),
        }
    }

    fn data(kind: &str, message: impl ToString) -> Self {
        Self {
            code: 1,
            kind: kind.into(),
            message: message.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::data(e.kind(), &e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::data(e.kind(), &e)
    }
}

impl From<KinexError> for CliError {
    fn from(e: KinexError) -> Self {
        Self::data(e.kind(), &e)
    }
}

impl From<RoundtripError> for CliError {
    fn from(e: RoundtripError) -> Self {
        match e {
            RoundtripError::Kinex(e) => e.into(),
            RoundtripError::Sim(e) => e.into(),
            RoundtripError::NoFrames => Self::usage("--frames must be at least 1"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Flags over config file over built-in defaults.
pub fn resolve_config(cli: &Cli) -> CliResult<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).map_err(CliError::usage)?,
        None => Config::default(),
    };
    if let Some(r) = cli.resolution {
        config.resolution = r;
    }
    if let Some(f) = cli.fps {
        config.fps = f;
    }
    if let Some(s) = cli.sim_scale {
        config.sim_scale = s;
    }
    if let Some(o) = &cli.out {
        config.out = o.clone();
    }
    config.validate().map_err(CliError::usage)?;
    Ok(config)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => return report(&CliError::usage(e.to_string().trim_end())),
    };
    match resolve_config(&cli).and_then(|config| execute(cli.command, &config)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    let msg = ErrorMsg::new(&e.kind, &e.message);
    eprintln!("{}", serde_json::to_string(&msg).expect("error messages serialize"));
    e.code
}

fn execute(command: Command, config: &Config) -> CliResult<serde_json::Value> {
    match command {
        Command::Extract {
            masks,
            tracks,
            no_refine,
        } => extract(config, &masks, tracks.as_deref(), !no_refine),
        Command::Replay { script } => replay(config, &script),
        Command::Export { script, max_nodes } => export(config, &script, max_nodes),
        Command::Ood { request } => ood(config, &request),
        Command::Serve {
            bind,
            checkpoint_dir,
            checkpoint_every,
        } => {
            let mut config = config.clone();
            if let Some(b) = bind {
                config.bind = b;
            }
            if let Some(d) = checkpoint_dir {
                config.checkpoint_dir = Some(d);
            }
            if let Some(n) = checkpoint_every {
                config.checkpoint_every = n;
            }
            serve(&config)
        }
        Command::Roundtrip {
            frames,
            seed,
            scenarios,
            json,
        } => roundtrip(config, frames, seed, scenarios, json),
    }
}

/// Indices of the source frames nearest to each tick of the target rate.
/// Only downsampling is supported.
pub fn resample_indices(frame_count: usize, source_fps: f64, target_fps: f64) -> CliResult<Vec<usize>> {
    if target_fps > source_fps {
        return Err(CliError::data(
            "Invalid",
            format!("cannot raise the frame rate from {source_fps} to {target_fps} fps"),
        ));
    }
    let ratio = source_fps / target_fps;
    Ok((0..)
        .map(|k: usize| (k as f64 * ratio).round() as usize)
        .take_while(|&i| i < frame_count)
        .collect())
}

fn extract(config: &Config, masks: &Path, tracks: Option<&Path>, refine: bool) -> CliResult<serde_json::Value> {
    let archive = load_mask_archive(masks)?;
    let m = &archive.manifest;
    if m.width.min(m.height) < MIN_RESOLUTION {
        return Err(CliError::data(
            "Invalid",
            format!("archive is {}x{}, below {MIN_RESOLUTION} px", m.width, m.height),
        ));
    }
    let tracks: Vec<Vec<Vec2>> = match tracks {
        Some(p) => load_landmark_tracks(p)?,
        None => vec![Vec::new(); archive.rasters.len()],
    };
    if tracks.len() != archive.rasters.len() {
        return Err(CliError::data(
            "Invalid",
            format!("{} landmark frames for {} masks", tracks.len(), archive.rasters.len()),
        ));
    }
    let picks = resample_indices(archive.rasters.len(), m.fps, config.fps)?;
    let rasters: Vec<_> = picks.iter().map(|&i| archive.rasters[i].clone()).collect();
    let tracks: Vec<_> = picks.iter().map(|&i| tracks[i].clone()).collect();
    let map = CoordinateMap::new(m.width, m.height, config.sim_scale);
    let options = ExtractOptions {
        fps: config.fps,
        source_id: m.video_id.clone(),
        refine,
        ..ExtractOptions::default()
    };
    let script = extract_script(&rasters, &tracks, &map, &options)?;
    let path = config.out.join("script.jsonl");
    save_script(&script, &path)?;
    Ok(json!({
        "v": WIRE_VERSION,
        "command": "extract",
        "script": path,
        "frames": script.len(),
        "source_frames": archive.rasters.len(),
        "provenance_events": script.provenance.len(),
    }))
}

fn replay(config: &Config, script_path: &Path) -> CliResult<serde_json::Value> {
    let script = load_script(script_path)?;
    let sim = Simulator::with_map(config.map());
    let (states, rasters) = sim.replay(&script)?;
    let graphs = sequence_graphs(&sim, &states, &rasters)?;
    for (i, r) in rasters.iter().enumerate() {
        write(&config.out.join(format!("labels/{i:06}.png")), &encode_label_png(r))?;
        write(
            &config.out.join(format!("frames/{i:06}.png")),
            &encode_frame_png(&SimFrame::from_labels(r)),
        )?;
    }
    save_graphs(&graphs, &config.out.join("graphs.jsonl"))?;
    Ok(json!({
        "v": WIRE_VERSION,
        "command": "replay",
        "frames": rasters.len(),
        "out": config.out,
    }))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_error(path, e).into())
}

fn io_error(path: &Path, e: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn export(config: &Config, script_path: &Path, max_nodes: usize) -> CliResult<serde_json::Value> {
    let script = load_script(script_path)?;
    let options = ExportOptions {
        max_nodes,
        ..ExportOptions::default()
    };
    let manifest = export_paired_dataset(&script, &config.map(), &config.out, &options)?;
    Ok(json!({
        "v": WIRE_VERSION,
        "command": "export",
        "windows": manifest.windows.len(),
        "dropped_tail_frames": manifest.dropped_tail_frames,
        "out": config.out,
    }))
}

fn ood(config: &Config, request: &Path) -> CliResult<serde_json::Value> {
    let text = std::fs::read_to_string(request).map_err(|e| io_error(request, e))?;
    let req: OodRequest = serde_json::from_str(&text).map_err(|e| DataError::Corrupt {
        path: request.to_path_buf(),
        reason: e.to_string(),
    })?;
    let script = generate_ood_scenario(&req)?;
    let path = config.out.join("ood.jsonl");
    dataio::save_script(&script, &path)?;
    Ok(json!({
        "v": WIRE_VERSION,
        "command": "ood",
        "script": path,
        "frames": script.len(),
    }))
}

fn serve(config: &Config) -> CliResult<serde_json::Value> {
    let addr: SocketAddr = config
        .bind
        .parse()
        .map_err(|e| CliError::usage(format!("bad listen address `{}`: {e}", config.bind)))?;
    let map = config.map();
    let sessions = SessionManager::new(map, ToolLibrary::builtin()).with_checkpoints(CheckpointPolicy {
        dir: config.checkpoint_dir.clone(),
        every: config.checkpoint_every,
    });
    let state = Arc::new(AppState {
        sessions: Arc::new(sessions),
        handshake: Handshake::new(&map, config.fps, default_class_names()),
    });
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::data("Io", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::data("Io", format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::data("Io", e))?;
        println!("{}", json!({"v": WIRE_VERSION, "listening": local.to_string()}));
        tracing::info!(%local, "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::data("Io", e))
    })?;
    Ok(json!({"v": WIRE_VERSION, "command": "serve", "stopped": true}))
}

fn roundtrip(
    config: &Config,
    frames: usize,
    seed: u64,
    scenarios: u64,
    json_out: bool,
) -> CliResult<serde_json::Value> {
    if scenarios == 0 {
        return Err(CliError::usage("--scenarios must be at least 1"));
    }
    let tol = Tolerances::default();
    let reports = (seed..seed + scenarios)
        .map(|s| run_roundtrip(s, frames, config.map(), &tol))
        .collect::<Result<Vec<_>, _>>()?;
    let report = RoundtripReport::merge(&reports);
    if json_out {
        println!("{}", serde_json::to_string(&report).expect("reports serialize"));
    } else {
        print!("{}", report.table(&tol));
    }
    if !report.passes(&tol) {
        return Err(CliError::data(
            "ToleranceExceeded",
            "round-trip errors exceed the tolerances",
        ));
    }
    Ok(json!({
        "v": WIRE_VERSION,
        "command": "roundtrip",
        "seeds": report.seeds,
        "frames": report.frames,
        "passed": true,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resampling() {
        assert_eq!(resample_indices(5, 4.0, 4.0).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(resample_indices(26, 25.0, 4.0).unwrap(), vec![0, 6, 13, 19, 25]);
        assert!(resample_indices(5, 4.0, 8.0).is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "resolution = 64\nsim_scale = 2.0\n").unwrap();
        let cli = Cli::try_parse_from([
            "phacosim",
            "--config",
            path.to_str().unwrap(),
            "--sim-scale",
            "3",
            "roundtrip",
        ])
        .unwrap();
        let c = resolve_config(&cli).unwrap();
        assert_eq!((c.resolution, c.sim_scale), (64, 3.0));
    }

    #[test]
    fn bad_resolution_is_a_usage_error() {
        let cli = Cli::try_parse_from(["phacosim", "--resolution", "3", "roundtrip"]).unwrap();
        assert_eq!(resolve_config(&cli).unwrap_err().code, 2);
    }
}
