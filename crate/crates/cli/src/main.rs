//! `breeze`: every pipeline stage as a pipe-composable subcommand.

use std::path::PathBuf;
use std::process::ExitCode;

use breeze_core::patterns::{compose, parse_traits, PatternSpec};
use breeze_core::signal::Format;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod io;
mod net;

#[derive(Parser, Debug)]
#[command(name = "breeze", version, about = "Breathing biofeedback toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct IoArgs {
    /// Input file; stdin when omitted or `-`.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file; stdout when omitted or `-`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

fn parse_pattern(s: &str) -> Result<PatternSpec, String> {
    parse_traits(s).and_then(compose).map_err(|e| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a breathing pattern from trait names (e.g. `Slow+HoldIn`).
    Synth {
        #[arg(long, value_parser = parse_pattern, required_unless_present = "schedule_seed")]
        pattern: Option<PatternSpec>,
        /// Emit every target of this seed's trial schedule back to back.
        #[arg(long, conflicts_with = "pattern")]
        schedule_seed: Option<u64>,
        /// Seconds (per trial with --schedule-seed).
        #[arg(long, default_value_t = 40.0)]
        duration: f64,
        #[arg(long, default_value_t = 24.0)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit a simulated IMU CSV for a pendant following the pattern.
        #[arg(long, conflicts_with = "belt")]
        imu: bool,
        /// Emit a simulated stretch-belt reference instead of the waveform.
        #[arg(long)]
        belt: bool,
        /// Pendant pitch swing in degrees per unit of breathing (with --imu).
        #[arg(long, default_value_t = 10.0)]
        pitch_amplitude: f64,
        /// Per-channel IMU noise standard deviation (with --imu).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Fuse an IMU CSV into a pitch stream (radians).
    Fuse {
        #[arg(long, default_value_t = breeze_core::imu::DEFAULT_BETA)]
        beta: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Extract breathing from a pitch stream (low-pass and epoch averaging).
    Extract {
        /// Apply sliding min-max normalization to [0, 1].
        #[arg(long)]
        normalize: bool,
        /// Resample the result to this rate.
        #[arg(long)]
        resample: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Detect breathing peaks and troughs; emits the stream annotated with them.
    Peaks {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Breathing features from a peaks document or a plain stream.
    Features {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Encode a normalized breathing stream for all feedback modalities.
    Encode {
        /// Also write gain-modulated pink noise to this WAV file.
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long, default_value_t = 44_100)]
        audio_rate: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: FormatArg,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Correlate a pendant stream against a reference after band-pass filtering.
    Validate {
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Host feedback sessions over TCP frames and/or WebSocket JSON.
    Serve {
        #[arg(long, required_unless_present = "ws")]
        tcp: Option<u16>,
        #[arg(long)]
        ws: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Seconds scored per WebSocket trial.
        #[arg(long, default_value_t = 40.0)]
        trial_s: f64,
        /// Append WebSocket trial results here as JSONL.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Stream a breathing file to a server and print the feedback it returns.
    Client {
        #[arg(long)]
        connect: String,
        /// Playback speed multiplier.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Bracket consecutive trials of this schedule with trial markers.
        #[arg(long)]
        schedule_seed: Option<u64>,
        #[arg(long, default_value_t = 40.0)]
        trial_s: f64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Mimic-trial sessions.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Print the randomized trial schedule for a seed.
    Schedule {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[command(flatten)]
        io: IoArgs,
    },
}

#[derive(Subcommand, Debug)]
enum SessionCommand {
    /// Score a session, either a recorded file or a live sender.
    Run {
        #[arg(long)]
        schedule_seed: u64,
        /// `live` to accept one sender on --listen, otherwise a recorded stream.
        #[arg(long)]
        input: String,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value_t = 40.0)]
        trial_s: f64,
        /// Results are appended as JSONL; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BREEZE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// A downstream reader closing early (`breeze ... | head`) is not a failure.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    use std::io::ErrorKind::BrokenPipe;
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == BrokenPipe)
            || c.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()) == Some(BrokenPipe)
    })
}
