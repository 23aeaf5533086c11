//! Coordinate frames, PVT fixes and positioning providers.
//!
//! The track frame is a local Cartesian plane (x east, y north, meters).
//! Geodetic conversion is equirectangular around the scenario origin with a
//! configurable scale factor: local distances and speeds are multiplied by
//! the scale before being expressed in WGS-84, so a 1:10 car driving 1 m/s
//! reports 10 m/s over the air.

mod nmea;
mod trace;
mod ubx;

pub use nmea::{nmea_checksum, nmea_generate, nmea_parse, NmeaError, NmeaOutcome, KNOTS_PER_MPS};
pub use trace::{TraceError, TraceProvider, TraceRecord};
pub use ubx::{
    ubx_checksum, ubx_encode_nav_pvt, NavPvt, UbxError, UbxOutcome, UbxParser, NAV_PVT_LEN,
    UBX_CLASS_NAV, UBX_ID_NAV_PVT,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per degree of latitude on the equirectangular plane.
pub const M_PER_DEG_LAT: f64 = 111_320.0;

/// Mean Earth radius used for great-circle distances, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("pose has a non-finite field")]
    InvalidPose,
    #[error("fix carries no position")]
    MissingPosition,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

/// A WGS-84 geodetic position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Latitude in degrees, [-90, 90].
    pub lat: f64,
    /// Longitude in degrees, [-180, 180).
    pub lon: f64,
    /// Altitude in meters, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt: Option<f64>,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon, alt: None }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..180.0).contains(&self.lon)
    }
}

/// Great-circle distance between two points, haversine on a spherical Earth.
pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Pose in the local track frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPose {
    /// East offset from the frame origin, meters.
    pub x: f64,
    /// North offset from the frame origin, meters.
    pub y: f64,
    /// Heading in degrees clockwise from north, [0, 360).
    pub heading_deg: f64,
    /// Ground speed, m/s, >= 0.
    pub speed_mps: f64,
    /// Milliseconds since the scenario epoch.
    pub t_ms: u64,
}

impl LocalPose {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading_deg.is_finite()
            && self.speed_mps.is_finite()
    }
}

/// Normalize a heading in degrees to [0, 360).
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg % 360.0;
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Anchors the local track frame to a geodetic origin and scales it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFrame {
    pub origin: GeoPoint,
    /// Multiplier applied to local distances and speeds before geodetic
    /// conversion. 10.0 turns a 1:10 track into full-size coordinates.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    10.0
}

impl ScenarioFrame {
    pub fn new(origin: GeoPoint, scale: f64) -> Result<Self, FrameError> {
        let frame = Self { origin, scale };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if !self.origin.is_valid() {
            return Err(FrameError::InvalidFrame("origin out of range".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(FrameError::InvalidFrame("scale must be > 0".into()));
        }
        Ok(())
    }

    /// Meters of east/north displacement from the origin to `p`, on the
    /// scaled (virtual) plane. This is the frame the CAM world lives in.
    pub fn geo_to_virtual_xy(&self, p: &GeoPoint) -> [f64; 2] {
        let north = (p.lat - self.origin.lat) * M_PER_DEG_LAT;
        let east = (p.lon - self.origin.lon) * M_PER_DEG_LAT * self.origin.lat.to_radians().cos();
        [east, north]
    }
}

/// A position-velocity-time fix. Any field may be unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PvtFix {
    pub position: Option<GeoPoint>,
    pub speed_mps: Option<f64>,
    pub heading_deg: Option<f64>,
    /// Milliseconds since the scenario epoch.
    pub t_ms: Option<u64>,
}

/// Convert a local pose to a geodetic fix, applying the frame scale to both
/// displacement and speed.
pub fn local_to_geo(pose: &LocalPose, frame: &ScenarioFrame) -> Result<PvtFix, FrameError> {
    frame.validate()?;
    if !pose.is_finite() {
        return Err(FrameError::InvalidPose);
    }
    let lat = frame.origin.lat + (pose.y * frame.scale) / M_PER_DEG_LAT;
    let lon = frame.origin.lon
        + (pose.x * frame.scale) / (M_PER_DEG_LAT * frame.origin.lat.to_radians().cos());
    Ok(PvtFix {
        position: Some(GeoPoint { lat, lon, alt: frame.origin.alt }),
        speed_mps: Some(pose.speed_mps * frame.scale),
        heading_deg: Some(normalize_heading(pose.heading_deg)),
        t_ms: Some(pose.t_ms),
    })
}

/// Inverse of [`local_to_geo`]: recover the physical local pose from a fix.
pub fn geo_to_local(fix: &PvtFix, frame: &ScenarioFrame) -> Result<LocalPose, FrameError> {
    frame.validate()?;
    let pos = fix.position.ok_or(FrameError::MissingPosition)?;
    let y = (pos.lat - frame.origin.lat) * M_PER_DEG_LAT / frame.scale;
    let x = (pos.lon - frame.origin.lon) * M_PER_DEG_LAT * frame.origin.lat.to_radians().cos()
        / frame.scale;
    Ok(LocalPose {
        x,
        y,
        heading_deg: normalize_heading(fix.heading_deg.unwrap_or(0.0)),
        speed_mps: fix.speed_mps.unwrap_or(0.0) / frame.scale,
        t_ms: fix.t_ms.unwrap_or(0),
    })
}

/// Source of timestamped fixes for one station. Implementations own their
/// cursor; the simulator polls them in time order.
pub trait PositionProvider {
    /// The next fix in non-decreasing `t_ms` order, or `None` at end of data.
    fn next_fix(&mut self) -> Option<PvtFix>;
}
