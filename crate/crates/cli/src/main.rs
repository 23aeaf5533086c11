//! Scenario runner, codec inspector and live API server.
//!
//! Exit codes: 0 success, 1 validation (bad scenario or input), 2 runtime.

use clap::{Parser, Subcommand};
use minicar_core::api::{serve, DEFAULT_API_PORT};
use minicar_core::cam::cam_decode;
use minicar_core::geonet::{gn_decode, BTP_PORT_CAM};
use minicar_core::scenario::{load_scenario, run_scenario};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "minicar", version, about = "Desk-scale cooperative mini-car simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario deterministically and write its JSONL event log
    Run {
        /// Scenario file (JSON)
        #[arg(long)]
        scenario: PathBuf,
        /// Override the channel RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario duration, seconds
        #[arg(long)]
        duration: Option<f64>,
        /// Event log output path
        #[arg(long, default_value = "events.jsonl")]
        out: PathBuf,
    },
    /// Decode a hex frame: a full GeoNetworking/BTP frame or a bare 26-byte CAM
    Decode {
        #[arg(long)]
        hex: String,
    },
    /// Run a scenario in real time, exposing the JSON management API over TCP
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_API_PORT)]
        port: u16,
        /// Event log output path
        #[arg(long, default_value = "events.jsonl")]
        out: PathBuf,
    },
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn report(&self) -> ExitCode {
        match self {
            CliError::Validation(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
            CliError::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, seed, duration, out } => {
            let cfg = load_scenario(&scenario)
                .map_err(|e| CliError::Validation(format!("{}: {e}", scenario.display())))?;
            let summary = run_scenario(&cfg, seed, duration, &out)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            Ok(())
        }
        Command::Decode { hex } => {
            let bytes = parse_hex(&hex).map_err(CliError::Validation)?;
            let value = decode_frame(&bytes).map_err(CliError::Validation)?;
            println!("{}", serde_json::to_string_pretty(&value).expect("json"));
            Ok(())
        }
        Command::Serve { scenario, port, out } => {
            let cfg = load_scenario(&scenario)
                .map_err(|e| CliError::Validation(format!("{}: {e}", scenario.display())))?;
            let log = std::fs::File::create(&out)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
            eprintln!("serving management API on port {port}, event log at {}", out.display());
            serve(cfg, port, Box::new(std::io::BufWriter::new(log)))
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn parse_hex(input: &str) -> Result<Vec<u8>, String> {
    let cleaned: String = input
        .trim()
        .trim_start_matches("0x")
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ':')
        .collect();
    if cleaned.len() % 2 != 0 {
        return Err(format!("odd number of hex digits ({})", cleaned.len()));
    }
    (0..cleaned.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&cleaned[i..i + 2], 16)
                .map_err(|_| format!("bad hex at offset {i}"))
        })
        .collect()
}

fn decode_frame(bytes: &[u8]) -> Result<serde_json::Value, String> {
    if bytes.len() == minicar_core::cam::CAM_WIRE_LEN {
        let cam = cam_decode(bytes).map_err(|e| e.to_string())?;
        return Ok(json!({ "cam": cam }));
    }
    let frame = gn_decode(bytes).map_err(|e| e.to_string())?;
    let payload_hex: String = frame.payload.iter().map(|b| format!("{b:02x}")).collect();
    let cam = (frame.btp_dest_port == BTP_PORT_CAM)
        .then(|| cam_decode(&frame.payload).ok())
        .flatten();
    Ok(json!({
        "geonet": {
            "lifetime": frame.lifetime,
            "traffic_class": frame.traffic_class,
            "source_address": frame.source_address,
            "timestamp_ms": frame.timestamp_ms,
            "latitude_e7": frame.latitude_e7,
            "longitude_e7": frame.longitude_e7,
            "speed_e2": frame.speed_e2,
            "heading_e1": frame.heading_e1,
            "btp_dest_port": frame.btp_dest_port,
            "payload_len": frame.payload.len(),
            "payload_hex": payload_hex,
        },
        "cam": cam,
    }))
}
