//! Shared fixtures for the benchmark targets.

use minicar_core::cam::{CoopAwarenessMsg, DriveDirection};
use minicar_core::geonet::{GnShbFrame, BTP_PORT_CAM};
use minicar_core::positioning::{GeoPoint, PvtFix};

pub fn sample_cam() -> CoopAwarenessMsg {
    CoopAwarenessMsg {
        station_id: 42,
        gen_delta_time: 31_337,
        latitude_e7: 440_012_345,
        longitude_e7: 110_054_321,
        altitude_cm: Some(12_300),
        heading_e1: Some(901),
        speed_e2: Some(1_000),
        drive_direction: DriveDirection::Forward,
        station_type: 5,
    }
}

pub fn sample_gn_frame(payload: Vec<u8>) -> GnShbFrame {
    GnShbFrame {
        lifetime: 80,
        traffic_class: 2,
        source_address: 42,
        timestamp_ms: 123_456,
        latitude_e7: 440_012_345,
        longitude_e7: 110_054_321,
        speed_e2: 1_000,
        heading_e1: 901,
        btp_dest_port: BTP_PORT_CAM,
        payload,
    }
}

pub fn sample_fix() -> PvtFix {
    PvtFix {
        position: Some(GeoPoint::new(44.0012345, 11.0054321)),
        speed_mps: Some(10.0),
        heading_deg: Some(90.1),
        t_ms: Some(86_400_123),
    }
}
