//! Newline-delimited JSON management API.
//!
//! One request object per line, one response per request, in order:
//! `{"cmd": "...", "args": {...}}` -> `{"ok": true, "data": ...}` or
//! `{"ok": false, "error": "...", "detail": "..."}`.
//!
//! Commands address one station; `args.station` selects it, defaulting to
//! the first station of the scenario. In live mode every connection funnels
//! into the single-threaded simulation, and requests take effect at the
//! next event boundary.

use crate::dcc::{DccConfig, DccTable};
use crate::positioning::GeoPoint;
use crate::scenario::{RunError, ScenarioConfig, Simulation};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::time::{Duration, Instant};

pub const DEFAULT_API_PORT: u16 = 48110;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiRequest {
    pub cmd: String,
    #[serde(default)]
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiResponse {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ApiResponse {
    fn success(data: Value) -> Self {
        Self { ok: true, data: Some(data), error: None, detail: None }
    }

    fn failure(code: &str, detail: Option<String>) -> Self {
        Self { ok: false, data: None, error: Some(code.to_string()), detail }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses always serialize")
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StationArg {
    #[serde(default)]
    station: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CenterArg {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LdmQueryArgs {
    center: CenterArg,
    #[serde(default)]
    max_age_ms: Option<f64>,
    #[serde(default)]
    station: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DccConfigArgs {
    #[serde(default)]
    station: Option<u32>,
    #[serde(default)]
    table: Option<DccTable>,
    #[serde(default)]
    smoothing_alpha: Option<f64>,
}

fn resolve_station(sim: &Simulation, requested: Option<u32>) -> Result<u32, ApiResponse> {
    let id = requested.unwrap_or_else(|| sim.default_station());
    if sim.station_exists(id) {
        Ok(id)
    } else {
        Err(ApiResponse::failure("bad_args", Some(format!("unknown station {id}"))))
    }
}

fn parse_args<T: serde::de::DeserializeOwned>(args: &Value) -> Result<T, ApiResponse> {
    let source = if args.is_null() { json!({}) } else { args.clone() };
    serde_json::from_value(source)
        .map_err(|e| ApiResponse::failure("bad_args", Some(e.to_string())))
}

/// Handle one request line against the simulation.
pub fn api_handle(sim: &mut Simulation, line: &str) -> ApiResponse {
    let request: ApiRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return ApiResponse::failure("parse_error", Some(e.to_string())),
    };
    match request.cmd.as_str() {
        "cam_start" | "cam_stop" => {
            let args: StationArg = match parse_args(&request.args) {
                Ok(a) => a,
                Err(resp) => return resp,
            };
            let id = match resolve_station(sim, args.station) {
                Ok(id) => id,
                Err(resp) => return resp,
            };
            let enabled = request.cmd == "cam_start";
            sim.set_cam_enabled(id, enabled);
            let _ = sim.log_api_event(&request.cmd);
            ApiResponse::success(json!({ "station": id, "cam_enabled": enabled }))
        }
        "dcc_config" => {
            let args: DccConfigArgs = match parse_args(&request.args) {
                Ok(a) => a,
                Err(resp) => return resp,
            };
            let id = match resolve_station(sim, args.station) {
                Ok(id) => id,
                Err(resp) => return resp,
            };
            let table = args.table.unwrap_or_default();
            if let Err(e) = table.validate() {
                return ApiResponse::failure("bad_args", Some(e.to_string()));
            }
            if let Some(alpha) = args.smoothing_alpha {
                if !(0.0 < alpha && alpha <= 1.0) {
                    return ApiResponse::failure(
                        "bad_args",
                        Some(format!("smoothing_alpha {alpha} out of (0, 1]")),
                    );
                }
            }
            let rows = table.rows().len();
            sim.install_dcc_config(
                id,
                DccConfig { table, smoothing_alpha: args.smoothing_alpha },
            );
            let _ = sim.log_api_event("dcc_config");
            ApiResponse::success(json!({ "station": id, "rows": rows }))
        }
        "ldm_query" => {
            let args: LdmQueryArgs = match parse_args(&request.args) {
                Ok(a) => a,
                Err(resp) => return resp,
            };
            let id = match resolve_station(sim, args.station) {
                Ok(id) => id,
                Err(resp) => return resp,
            };
            let center = GeoPoint::new(args.center.lat, args.center.lon);
            if !center.is_valid() {
                return ApiResponse::failure("bad_args", Some("center out of range".into()));
            }
            let max_age = args.max_age_ms.unwrap_or(sim.config().ldm_max_age_ms);
            let results = sim
                .ldm_query_entries(id, &center, max_age)
                .expect("station resolved above");
            let entries: Vec<Value> = results
                .iter()
                .map(|r| {
                    json!({
                        "station_id": r.entry.station_id,
                        "lat": r.entry.position.lat,
                        "lon": r.entry.position.lon,
                        "speed_mps": r.entry.speed_mps,
                        "heading_deg": r.entry.heading_deg,
                        "distance_m": r.distance_m,
                        "age_ms": r.age_ms,
                    })
                })
                .collect();
            ApiResponse::success(json!({ "entries": entries }))
        }
        "status" => {
            let args: StationArg = match parse_args(&request.args) {
                Ok(a) => a,
                Err(resp) => return resp,
            };
            let id = match resolve_station(sim, args.station) {
                Ok(id) => id,
                Err(resp) => return resp,
            };
            ApiResponse::success(sim.station_status(id).expect("station resolved above"))
        }
        _ => ApiResponse::failure("unknown_command", Some(request.cmd)),
    }
}

/// Run the scenario paced against the wall clock while serving the API on
/// an already-bound listener. Keeps answering requests after the scenario
/// ends; returns only if the listener dies.
pub fn serve_on(
    listener: TcpListener,
    cfg: ScenarioConfig,
    log_out: Box<dyn Write + Send>,
) -> Result<(), RunError> {
    let mut sim = Simulation::new(cfg, log_out)?;
    let (tx, rx) = mpsc::channel::<(String, mpsc::Sender<String>)>();

    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let tx = tx.clone();
            std::thread::spawn(move || {
                let _ = handle_connection(stream, tx);
            });
        }
    });

    let start = Instant::now();
    loop {
        // Apply any queued commands at this event boundary.
        while let Ok((line, reply)) = rx.try_recv() {
            let _ = reply.send(api_handle(&mut sim, &line).to_line());
        }
        let Some(next_ms) = sim.next_event_time_ms() else {
            break;
        };
        let due = Duration::from_secs_f64(next_ms / 1000.0);
        let elapsed = start.elapsed();
        if elapsed < due {
            // Wait for the event's wall time, serving commands meanwhile.
            let wait = (due - elapsed).min(Duration::from_millis(20));
            if let Ok((line, reply)) = rx.recv_timeout(wait) {
                let _ = reply.send(api_handle(&mut sim, &line).to_line());
            }
            continue;
        }
        sim.step()?;
    }

    // Scenario over: stay up and keep answering queries on the final state.
    while let Ok((line, reply)) = rx.recv() {
        let _ = reply.send(api_handle(&mut sim, &line).to_line());
    }
    Ok(())
}

/// Bind the default-addressed listener and serve.
pub fn serve(
    cfg: ScenarioConfig,
    port: u16,
    log_out: Box<dyn Write + Send>,
) -> Result<(), RunError> {
    let listener = TcpListener::bind(("0.0.0.0", port))?;
    serve_on(listener, cfg, log_out)
}

fn handle_connection(
    stream: TcpStream,
    tx: mpsc::Sender<(String, mpsc::Sender<String>)>,
) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply_tx, reply_rx) = mpsc::channel();
        if tx.send((line, reply_tx)).is_err() {
            break;
        }
        match reply_rx.recv() {
            Ok(response) => {
                writer.write_all(response.as_bytes())?;
                writer.write_all(b"\n")?;
            }
            Err(_) => break,
        }
    }
    Ok(())
}
