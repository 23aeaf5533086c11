//! Cooperative awareness messages: payload model, 26-byte wire codec and
//! the generation-triggering state machine.
//!
//! Wire layout, big-endian, 26 bytes total:
//!
//! | offset | size | field            | unit / encoding                     |
//! |--------|------|------------------|-------------------------------------|
//! | 0      | 1    | protocolVersion  | = 2                                 |
//! | 1      | 1    | messageId        | = 2                                 |
//! | 2      | 4    | stationId        | u32                                 |
//! | 6      | 2    | genDeltaTime     | ms mod 65536                        |
//! | 8      | 4    | latitude         | i32, 1e-7 deg                       |
//! | 12     | 4    | longitude        | i32, 1e-7 deg                       |
//! | 16     | 4    | altitude         | i32, 0.01 m, 800001 = unavailable   |
//! | 20     | 2    | heading          | u16, 0.1 deg, [0,3600], 3601 = n/a  |
//! | 22     | 2    | speed            | u16, 0.01 m/s, 16383 = unavailable  |
//! | 24     | 1    | driveDirection   | 0 fwd, 1 bwd, 2 unavailable         |
//! | 25     | 1    | stationType      | u8 (5 = passenger car)              |
//!
//! This is a fixed-layout mirror of the CAM basic container, not ASN.1 UPER;
//! it is not interoperable with real on-board units.

use crate::positioning::{haversine_m, GeoPoint, PvtFix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CAM_PROTOCOL_VERSION: u8 = 2;
pub const CAM_MESSAGE_ID: u8 = 2;
pub const CAM_WIRE_LEN: usize = 26;

pub const ALTITUDE_UNAVAILABLE: i32 = 800_001;
pub const HEADING_UNAVAILABLE: u16 = 3601;
pub const SPEED_UNAVAILABLE: u16 = 16_383;

/// Passenger car in the ETSI station type enumeration.
pub const STATION_TYPE_PASSENGER_CAR: u8 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum CamError {
    #[error("field {field} out of range: {value}")]
    FieldRange { field: &'static str, value: i64 },
    #[error("wrong length: expected {CAM_WIRE_LEN} bytes, got {found}")]
    Length { found: usize },
    #[error("unsupported message: version {version}, messageId {message_id}")]
    UnsupportedMessage { version: u8, message_id: u8 },
    #[error("fix carries no position, cannot build a CAM")]
    MissingPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveDirection {
    Forward,
    Backward,
    Unavailable,
}

impl DriveDirection {
    fn to_wire(self) -> u8 {
        match self {
            DriveDirection::Forward => 0,
            DriveDirection::Backward => 1,
            DriveDirection::Unavailable => 2,
        }
    }

    fn from_wire(v: u8) -> Result<Self, CamError> {
        match v {
            0 => Ok(DriveDirection::Forward),
            1 => Ok(DriveDirection::Backward),
            2 => Ok(DriveDirection::Unavailable),
            _ => Err(CamError::FieldRange { field: "driveDirection", value: v as i64 }),
        }
    }
}

/// A CAM v2 payload in wire units. Optional fields encode as sentinels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoopAwarenessMsg {
    pub station_id: u32,
    /// Generation time, ITS epoch milliseconds modulo 65536.
    pub gen_delta_time: u16,
    /// 1e-7 degrees, [-900000000, 900000000].
    pub latitude_e7: i32,
    /// 1e-7 degrees, [-1800000000, 1799999999].
    pub longitude_e7: i32,
    /// 0.01 m, [-100000, 800000].
    pub altitude_cm: Option<i32>,
    /// 0.1 degrees, [0, 3600].
    pub heading_e1: Option<u16>,
    /// 0.01 m/s, [0, 16382].
    pub speed_e2: Option<u16>,
    pub drive_direction: DriveDirection,
    pub station_type: u8,
}

impl CoopAwarenessMsg {
    /// Quantize a fix into a CAM. The position must be available.
    pub fn from_fix(
        station_id: u32,
        gen_delta_time: u16,
        fix: &PvtFix,
    ) -> Result<Self, CamError> {
        let pos = fix.position.ok_or(CamError::MissingPosition)?;
        let lat = (pos.lat * 1e7).round() as i64;
        let lon = (pos.lon * 1e7).round() as i64;
        let msg = Self {
            station_id,
            gen_delta_time,
            latitude_e7: i32::try_from(lat)
                .map_err(|_| CamError::FieldRange { field: "latitude", value: lat })?,
            longitude_e7: i32::try_from(lon)
                .map_err(|_| CamError::FieldRange { field: "longitude", value: lon })?,
            altitude_cm: pos.alt.map(|a| (a * 100.0).round() as i32),
            heading_e1: fix.heading_deg.map(|h| ((h * 10.0).round() as i64).clamp(0, 3600) as u16),
            speed_e2: fix.speed_mps.map(|s| ((s * 100.0).round() as i64).clamp(0, 16_382) as u16),
            drive_direction: DriveDirection::Forward,
            station_type: STATION_TYPE_PASSENGER_CAR,
        };
        msg.validate()?;
        Ok(msg)
    }

    pub fn position(&self) -> GeoPoint {
        GeoPoint {
            lat: self.latitude_e7 as f64 * 1e-7,
            lon: self.longitude_e7 as f64 * 1e-7,
            alt: self.altitude_cm.map(|a| a as f64 / 100.0),
        }
    }

    pub fn speed_mps(&self) -> Option<f64> {
        self.speed_e2.map(|s| s as f64 / 100.0)
    }

    pub fn heading_deg(&self) -> Option<f64> {
        self.heading_e1.map(|h| h as f64 / 10.0)
    }

    fn validate(&self) -> Result<(), CamError> {
        let check = |ok: bool, field: &'static str, value: i64| {
            if ok {
                Ok(())
            } else {
                Err(CamError::FieldRange { field, value })
            }
        };
        check(
            (-900_000_000..=900_000_000).contains(&self.latitude_e7),
            "latitude",
            self.latitude_e7 as i64,
        )?;
        check(
            (-1_800_000_000..=1_799_999_999).contains(&self.longitude_e7),
            "longitude",
            self.longitude_e7 as i64,
        )?;
        if let Some(alt) = self.altitude_cm {
            check((-100_000..=800_000).contains(&alt), "altitude", alt as i64)?;
        }
        if let Some(h) = self.heading_e1 {
            check(h <= 3600, "heading", h as i64)?;
        }
        if let Some(s) = self.speed_e2 {
            check(s <= 16_382, "speed", s as i64)?;
        }
        Ok(())
    }
}

/// Serialize to the fixed 26-byte layout. Rejects out-of-range fields.
pub fn cam_encode(msg: &CoopAwarenessMsg) -> Result<Vec<u8>, CamError> {
    msg.validate()?;
    let mut out = Vec::with_capacity(CAM_WIRE_LEN);
    out.push(CAM_PROTOCOL_VERSION);
    out.push(CAM_MESSAGE_ID);
    out.extend_from_slice(&msg.station_id.to_be_bytes());
    out.extend_from_slice(&msg.gen_delta_time.to_be_bytes());
    out.extend_from_slice(&msg.latitude_e7.to_be_bytes());
    out.extend_from_slice(&msg.longitude_e7.to_be_bytes());
    out.extend_from_slice(&msg.altitude_cm.unwrap_or(ALTITUDE_UNAVAILABLE).to_be_bytes());
    out.extend_from_slice(&msg.heading_e1.unwrap_or(HEADING_UNAVAILABLE).to_be_bytes());
    out.extend_from_slice(&msg.speed_e2.unwrap_or(SPEED_UNAVAILABLE).to_be_bytes());
    out.push(msg.drive_direction.to_wire());
    out.push(msg.station_type);
    debug_assert_eq!(out.len(), CAM_WIRE_LEN);
    Ok(out)
}

/// Parse and validate a 26-byte CAM. Sentinels map back to `None`.
pub fn cam_decode(bytes: &[u8]) -> Result<CoopAwarenessMsg, CamError> {
    if bytes.len() != CAM_WIRE_LEN {
        return Err(CamError::Length { found: bytes.len() });
    }
    if bytes[0] != CAM_PROTOCOL_VERSION || bytes[1] != CAM_MESSAGE_ID {
        return Err(CamError::UnsupportedMessage { version: bytes[0], message_id: bytes[1] });
    }
    let be32 = |i: usize| i32::from_be_bytes(bytes[i..i + 4].try_into().expect("length checked"));
    let be16 = |i: usize| u16::from_be_bytes(bytes[i..i + 2].try_into().expect("length checked"));
    let altitude = be32(16);
    let heading = be16(20);
    let speed = be16(22);
    let msg = CoopAwarenessMsg {
        station_id: u32::from_be_bytes(bytes[2..6].try_into().expect("length checked")),
        gen_delta_time: be16(6),
        latitude_e7: be32(8),
        longitude_e7: be32(12),
        altitude_cm: (altitude != ALTITUDE_UNAVAILABLE).then_some(altitude),
        heading_e1: (heading != HEADING_UNAVAILABLE).then_some(heading),
        speed_e2: (speed != SPEED_UNAVAILABLE).then_some(speed),
        drive_direction: DriveDirection::from_wire(bytes[24])?,
        station_type: bytes[25],
    };
    msg.validate()?;
    Ok(msg)
}

/// ITS timestamp to the 16-bit CAM generation time: milliseconds mod 65536.
pub fn gen_delta_time(its_timestamp_ms: u64) -> u16 {
    (its_timestamp_ms % 65_536) as u16
}

/// Generation-rule constants. Defaults follow the standard CAM triggering
/// thresholds; everything is adjustable per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamTriggerConfig {
    pub t_gen_cam_min_ms: f64,
    pub t_gen_cam_max_ms: f64,
    pub heading_delta_deg: f64,
    pub position_delta_m: f64,
    pub speed_delta_mps: f64,
    pub n_gen_cam: u32,
}

impl Default for CamTriggerConfig {
    fn default() -> Self {
        Self {
            t_gen_cam_min_ms: 100.0,
            t_gen_cam_max_ms: 1000.0,
            heading_delta_deg: 4.0,
            position_delta_m: 4.0,
            speed_delta_mps: 0.5,
            n_gen_cam: 3,
        }
    }
}

/// Per-station triggering state, carried between checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamGenerationState {
    pub last_tx_time_ms: f64,
    pub last_tx_position: GeoPoint,
    pub last_tx_heading_deg: f64,
    pub last_tx_speed_mps: f64,
    /// Current dynamic generation interval, within [min, max].
    pub t_gen_cam_ms: f64,
    pub n_gen_cam_countdown: u32,
}

impl CamGenerationState {
    /// State right after the first transmission of a station.
    pub fn after_first_tx(now_ms: f64, fix: &PvtFix, cfg: &CamTriggerConfig) -> Self {
        Self {
            last_tx_time_ms: now_ms,
            last_tx_position: fix.position.unwrap_or(GeoPoint::new(0.0, 0.0)),
            last_tx_heading_deg: fix.heading_deg.unwrap_or(0.0),
            last_tx_speed_mps: fix.speed_mps.unwrap_or(0.0),
            t_gen_cam_ms: cfg.t_gen_cam_max_ms,
            n_gen_cam_countdown: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    Dynamics,
    Timer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerDecision {
    Transmit { new_state: CamGenerationState, reason: TriggerReason },
    Hold,
}

fn circular_delta_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// Decide whether a CAM is due. Transmit when the elapsed time has passed
/// both the minimum interval and the DCC gate, and either the vehicle
/// dynamics changed enough (heading, distance, speed) or the dynamic timer
/// expired. A dynamics transmit pins the timer to the observed interval for
/// the next `n_gen_cam` timer transmissions.
pub fn cam_trigger(
    state: &CamGenerationState,
    fix: &PvtFix,
    now_ms: f64,
    dcc_min_interval_ms: f64,
    cfg: &CamTriggerConfig,
) -> TriggerDecision {
    let elapsed = now_ms - state.last_tx_time_ms;
    if elapsed < cfg.t_gen_cam_min_ms.max(dcc_min_interval_ms) {
        return TriggerDecision::Hold;
    }

    let heading_moved = fix
        .heading_deg
        .map(|h| circular_delta_deg(h, state.last_tx_heading_deg) >= cfg.heading_delta_deg)
        .unwrap_or(false);
    let position_moved = fix
        .position
        .map(|p| haversine_m(&p, &state.last_tx_position) >= cfg.position_delta_m)
        .unwrap_or(false);
    let speed_moved = fix
        .speed_mps
        .map(|s| (s - state.last_tx_speed_mps).abs() >= cfg.speed_delta_mps)
        .unwrap_or(false);
    let dynamics = heading_moved || position_moved || speed_moved;
    let timer = elapsed >= state.t_gen_cam_ms;

    if !dynamics && !timer {
        return TriggerDecision::Hold;
    }

    let (t_gen_cam_ms, countdown, reason) = if dynamics {
        (
            elapsed.clamp(cfg.t_gen_cam_min_ms, cfg.t_gen_cam_max_ms),
            cfg.n_gen_cam,
            TriggerReason::Dynamics,
        )
    } else {
        let countdown = state.n_gen_cam_countdown.saturating_sub(1);
        let t = if countdown == 0 { cfg.t_gen_cam_max_ms } else { state.t_gen_cam_ms };
        (t, countdown, TriggerReason::Timer)
    };

    TriggerDecision::Transmit {
        new_state: CamGenerationState {
            last_tx_time_ms: now_ms,
            last_tx_position: fix.position.unwrap_or(state.last_tx_position),
            last_tx_heading_deg: fix.heading_deg.unwrap_or(state.last_tx_heading_deg),
            last_tx_speed_mps: fix.speed_mps.unwrap_or(state.last_tx_speed_mps),
            t_gen_cam_ms,
            n_gen_cam_countdown: countdown,
        },
        reason,
    }
}
