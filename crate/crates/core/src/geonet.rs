//! GeoNetworking single-hop broadcast with a BTP-B transport header.
//!
//! Every frame carries a fixed 44-byte header stack, big-endian:
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 1    | version (high nibble) = 1, nextHeader = 1    |
//! | 1      | 1    | reserved                                     |
//! | 2      | 1    | lifetime (raw byte)                          |
//! | 3      | 1    | remainingHopLimit = 1                        |
//! | 4      | 1    | nextHeader (high nibble) = 2 (BTP-B)         |
//! | 5      | 1    | headerType = 5 (SHB), headerSubtype = 0      |
//! | 6      | 1    | trafficClass                                 |
//! | 7      | 1    | flags = 0                                    |
//! | 8      | 2    | payloadLength (bytes after this header stack)|
//! | 10     | 1    | maxHopLimit = 1                              |
//! | 11     | 1    | reserved                                     |
//! | 12     | 8    | sourceAddress                                |
//! | 20     | 4    | timestamp, ms mod 2^32                       |
//! | 24     | 4    | latitude, i32 1e-7 deg                       |
//! | 28     | 4    | longitude, i32 1e-7 deg                      |
//! | 32     | 2    | speed, u16 0.01 m/s                          |
//! | 34     | 2    | heading, u16 0.1 deg                         |
//! | 36     | 4    | reserved                                     |
//! | 40     | 2    | BTP destination port (2001 = CAM)            |
//! | 42     | 2    | BTP destination port info = 0                |
//! | 44     | ...  | payload                                      |

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GN_HEADER_LEN: usize = 44;
pub const GN_VERSION: u8 = 1;
pub const GN_MAX_PAYLOAD: usize = 1400;
/// BTP-B well-known port carrying CAMs.
pub const BTP_PORT_CAM: u16 = 2001;

const HEADER_TYPE_SHB: u8 = 5;
const HEADER_SUBTYPE_SHB: u8 = 0;
const NEXT_HEADER_COMMON: u8 = 1;
const NEXT_HEADER_BTP_B: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum GnError {
    #[error("frame too short: {found} bytes, header alone is {GN_HEADER_LEN}")]
    Truncated { found: usize },
    #[error("unsupported GeoNetworking version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported header type {header_type}.{header_subtype}, only SHB is handled")]
    UnsupportedType { header_type: u8, header_subtype: u8 },
    #[error("unexpected next-header value {value} in the {layer} header")]
    UnsupportedNextHeader { layer: &'static str, value: u8 },
    #[error("payloadLength {declared} does not match the {actual} bytes present")]
    PayloadLengthMismatch { declared: usize, actual: usize },
    #[error("payload of {len} bytes exceeds the {GN_MAX_PAYLOAD}-byte limit")]
    OversizePayload { len: usize },
    #[error("field {field} out of range: {value}")]
    FieldRange { field: &'static str, value: i64 },
}

/// A single-hop broadcast frame: source position vector plus BTP-B payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnShbFrame {
    pub lifetime: u8,
    pub traffic_class: u8,
    pub source_address: u64,
    /// Transmission time, ms mod 2^32.
    pub timestamp_ms: u32,
    pub latitude_e7: i32,
    pub longitude_e7: i32,
    /// 0.01 m/s; 16383 = unavailable.
    pub speed_e2: u16,
    /// 0.1 deg; 3601 = unavailable.
    pub heading_e1: u16,
    pub btp_dest_port: u16,
    pub payload: Vec<u8>,
}

impl GnShbFrame {
    fn validate(&self) -> Result<(), GnError> {
        if self.payload.len() > GN_MAX_PAYLOAD {
            return Err(GnError::OversizePayload { len: self.payload.len() });
        }
        if !(-900_000_000..=900_000_000).contains(&self.latitude_e7) {
            return Err(GnError::FieldRange { field: "latitude", value: self.latitude_e7 as i64 });
        }
        if !(-1_800_000_000..=1_799_999_999).contains(&self.longitude_e7) {
            return Err(GnError::FieldRange { field: "longitude", value: self.longitude_e7 as i64 });
        }
        if self.speed_e2 > 16_383 {
            return Err(GnError::FieldRange { field: "speed", value: self.speed_e2 as i64 });
        }
        if self.heading_e1 > 3601 {
            return Err(GnError::FieldRange { field: "heading", value: self.heading_e1 as i64 });
        }
        Ok(())
    }
}

/// Serialize a frame: 44-byte header stack followed by the payload.
pub fn gn_encode(frame: &GnShbFrame) -> Result<Vec<u8>, GnError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(GN_HEADER_LEN + frame.payload.len());
    // Basic header
    out.push(GN_VERSION << 4 | NEXT_HEADER_COMMON);
    out.push(0);
    out.push(frame.lifetime);
    out.push(1); // remainingHopLimit
    // Common header
    out.push(NEXT_HEADER_BTP_B << 4);
    out.push(HEADER_TYPE_SHB << 4 | HEADER_SUBTYPE_SHB);
    out.push(frame.traffic_class);
    out.push(0); // flags
    out.extend_from_slice(&(frame.payload.len() as u16).to_be_bytes());
    out.push(1); // maxHopLimit
    out.push(0);
    // Source position vector
    out.extend_from_slice(&frame.source_address.to_be_bytes());
    out.extend_from_slice(&frame.timestamp_ms.to_be_bytes());
    out.extend_from_slice(&frame.latitude_e7.to_be_bytes());
    out.extend_from_slice(&frame.longitude_e7.to_be_bytes());
    out.extend_from_slice(&frame.speed_e2.to_be_bytes());
    out.extend_from_slice(&frame.heading_e1.to_be_bytes());
    out.extend_from_slice(&[0u8; 4]);
    // BTP-B
    out.extend_from_slice(&frame.btp_dest_port.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    debug_assert_eq!(out.len(), GN_HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

/// Parse and validate a frame produced by [`gn_encode`].
pub fn gn_decode(bytes: &[u8]) -> Result<GnShbFrame, GnError> {
    if bytes.len() < GN_HEADER_LEN {
        return Err(GnError::Truncated { found: bytes.len() });
    }
    let version = bytes[0] >> 4;
    if version != GN_VERSION {
        return Err(GnError::UnsupportedVersion(version));
    }
    let basic_next = bytes[0] & 0x0F;
    if basic_next != NEXT_HEADER_COMMON {
        return Err(GnError::UnsupportedNextHeader { layer: "basic", value: basic_next });
    }
    let common_next = bytes[4] >> 4;
    if common_next != NEXT_HEADER_BTP_B {
        return Err(GnError::UnsupportedNextHeader { layer: "common", value: common_next });
    }
    let header_type = bytes[5] >> 4;
    let header_subtype = bytes[5] & 0x0F;
    if header_type != HEADER_TYPE_SHB || header_subtype != HEADER_SUBTYPE_SHB {
        return Err(GnError::UnsupportedType { header_type, header_subtype });
    }
    let declared = u16::from_be_bytes([bytes[8], bytes[9]]) as usize;
    let actual = bytes.len() - GN_HEADER_LEN;
    if declared != actual {
        return Err(GnError::PayloadLengthMismatch { declared, actual });
    }
    let be32 = |i: usize| i32::from_be_bytes(bytes[i..i + 4].try_into().expect("length checked"));
    let be16 = |i: usize| u16::from_be_bytes(bytes[i..i + 2].try_into().expect("length checked"));
    let frame = GnShbFrame {
        lifetime: bytes[2],
        traffic_class: bytes[6],
        source_address: u64::from_be_bytes(bytes[12..20].try_into().expect("length checked")),
        timestamp_ms: u32::from_be_bytes(bytes[20..24].try_into().expect("length checked")),
        latitude_e7: be32(24),
        longitude_e7: be32(28),
        speed_e2: be16(32),
        heading_e1: be16(34),
        btp_dest_port: be16(40),
        payload: bytes[GN_HEADER_LEN..].to_vec(),
    };
    frame.validate()?;
    Ok(frame)
}
