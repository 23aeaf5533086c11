//! u-blox UBX framing and the NAV-PVT payload.
//!
//! Frame layout: sync `0xB5 0x62`, class, id, little-endian u16 payload
//! length, payload, then an 8-bit Fletcher checksum (CK_A, CK_B) computed
//! over class through payload. The parser is incremental: feed it arbitrary
//! chunks, it resynchronizes on garbage and holds partial frames until the
//! rest arrives.

use super::{GeoPoint, PvtFix};
use thiserror::Error;

pub const UBX_SYNC1: u8 = 0xB5;
pub const UBX_SYNC2: u8 = 0x62;
pub const UBX_CLASS_NAV: u8 = 0x01;
pub const UBX_ID_NAV_PVT: u8 = 0x07;

/// NAV-PVT payload length this parser understands.
pub const NAV_PVT_LEN: usize = 92;

// Corrupt length fields would otherwise stall the stream waiting for data.
const MAX_PAYLOAD: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum UbxError {
    #[error("fletcher checksum mismatch: computed {computed:02X?}, frame carries {found:02X?}")]
    Checksum { computed: (u8, u8), found: (u8, u8) },
    #[error("NAV-PVT payload length {found}, expected {NAV_PVT_LEN}")]
    PayloadLength { found: usize },
}

/// The NAV-PVT fields this stack consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NavPvt {
    /// GPS time of week, ms.
    pub itow_ms: u32,
    /// 0 = no fix, 2 = 2D, 3 = 3D, ...
    pub fix_type: u8,
    /// Longitude, 1e-7 degrees.
    pub lon_e7: i32,
    /// Latitude, 1e-7 degrees.
    pub lat_e7: i32,
    /// Ground speed, mm/s.
    pub ground_speed_mmps: i32,
    /// Heading of motion, 1e-5 degrees.
    pub heading_e5: i32,
}

impl NavPvt {
    /// View as a PVT fix; a fix type of 0 means the position is unusable.
    pub fn to_fix(&self) -> PvtFix {
        let position = (self.fix_type != 0).then(|| {
            GeoPoint::new(self.lat_e7 as f64 * 1e-7, self.lon_e7 as f64 * 1e-7)
        });
        PvtFix {
            position,
            speed_mps: Some(self.ground_speed_mmps as f64 / 1000.0),
            heading_deg: Some(self.heading_e5 as f64 * 1e-5),
            t_ms: Some(self.itow_ms as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UbxOutcome {
    NavPvt(NavPvt),
    /// A checksum-valid frame of a class/id this stack does not decode.
    Ignored { class: u8, id: u8 },
}

/// Fletcher-8 over a byte slice, the UBX checksum.
pub fn ubx_checksum(bytes: &[u8]) -> (u8, u8) {
    let mut ck_a = 0u8;
    let mut ck_b = 0u8;
    for &b in bytes {
        ck_a = ck_a.wrapping_add(b);
        ck_b = ck_b.wrapping_add(ck_a);
    }
    (ck_a, ck_b)
}

/// Serialize a NAV-PVT frame; fields not modeled are zero.
pub fn ubx_encode_nav_pvt(pvt: &NavPvt) -> Vec<u8> {
    let mut payload = [0u8; NAV_PVT_LEN];
    payload[0..4].copy_from_slice(&pvt.itow_ms.to_le_bytes());
    payload[20] = pvt.fix_type;
    payload[24..28].copy_from_slice(&pvt.lon_e7.to_le_bytes());
    payload[28..32].copy_from_slice(&pvt.lat_e7.to_le_bytes());
    payload[60..64].copy_from_slice(&pvt.ground_speed_mmps.to_le_bytes());
    payload[64..68].copy_from_slice(&pvt.heading_e5.to_le_bytes());

    let mut frame = Vec::with_capacity(8 + NAV_PVT_LEN);
    frame.extend_from_slice(&[UBX_SYNC1, UBX_SYNC2, UBX_CLASS_NAV, UBX_ID_NAV_PVT]);
    frame.extend_from_slice(&(NAV_PVT_LEN as u16).to_le_bytes());
    frame.extend_from_slice(&payload);
    let (ck_a, ck_b) = ubx_checksum(&frame[2..]);
    frame.push(ck_a);
    frame.push(ck_b);
    frame
}

fn parse_nav_pvt(payload: &[u8]) -> Result<NavPvt, UbxError> {
    if payload.len() != NAV_PVT_LEN {
        return Err(UbxError::PayloadLength { found: payload.len() });
    }
    let le32 = |i: usize| i32::from_le_bytes(payload[i..i + 4].try_into().expect("length checked"));
    Ok(NavPvt {
        itow_ms: u32::from_le_bytes(payload[0..4].try_into().expect("length checked")),
        fix_type: payload[20],
        lon_e7: le32(24),
        lat_e7: le32(28),
        ground_speed_mmps: le32(60),
        heading_e5: le32(64),
    })
}

/// Incremental UBX stream parser.
#[derive(Debug, Default)]
pub struct UbxParser {
    buf: Vec<u8>,
}

impl UbxParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes currently buffered while waiting for a complete frame.
    pub fn pending_bytes(&self) -> usize {
        self.buf.len()
    }

    /// Consume a chunk of input, returning one entry per complete frame
    /// encountered. An empty result means more data is needed.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Result<UbxOutcome, UbxError>> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        loop {
            match self.scan_one() {
                Some(item) => out.push(item),
                None => break,
            }
        }
        out
    }

    // One frame from the front of the buffer, or None if more data is needed.
    fn scan_one(&mut self) -> Option<Result<UbxOutcome, UbxError>> {
        loop {
            // Resync: drop everything before the first plausible sync pair.
            let Some(start) = self.buf.iter().position(|&b| b == UBX_SYNC1) else {
                self.buf.clear();
                return None;
            };
            self.buf.drain(..start);
            if self.buf.len() < 2 {
                return None; // lone 0xB5, might be a frame start
            }
            if self.buf[1] != UBX_SYNC2 {
                self.buf.drain(..1);
                continue;
            }
            if self.buf.len() < 6 {
                return None;
            }
            let len = u16::from_le_bytes([self.buf[4], self.buf[5]]) as usize;
            if len > MAX_PAYLOAD {
                self.buf.drain(..2);
                continue;
            }
            let total = 6 + len + 2;
            if self.buf.len() < total {
                return None;
            }
            let computed = ubx_checksum(&self.buf[2..6 + len]);
            let found = (self.buf[6 + len], self.buf[6 + len + 1]);
            let class = self.buf[2];
            let id = self.buf[3];
            let result = if computed != found {
                Err(UbxError::Checksum { computed, found })
            } else if (class, id) == (UBX_CLASS_NAV, UBX_ID_NAV_PVT) {
                parse_nav_pvt(&self.buf[6..6 + len]).map(UbxOutcome::NavPvt)
            } else {
                Ok(UbxOutcome::Ignored { class, id })
            };
            self.buf.drain(..total);
            return Some(result);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent Fletcher oracle, written as the two running sums.
    fn fletcher_oracle(bytes: &[u8]) -> (u8, u8) {
        let mut a: u32 = 0;
        let mut b: u32 = 0;
        for &byte in bytes {
            a = (a + byte as u32) % 256;
            b = (b + a) % 256;
        }
        (a as u8, b as u8)
    }

    fn zeroed_frame() -> Vec<u8> {
        let mut frame = vec![UBX_SYNC1, UBX_SYNC2, UBX_CLASS_NAV, UBX_ID_NAV_PVT];
        frame.extend_from_slice(&(NAV_PVT_LEN as u16).to_le_bytes());
        frame.extend_from_slice(&[0u8; NAV_PVT_LEN]);
        let (a, b) = fletcher_oracle(&frame[2..]);
        frame.push(a);
        frame.push(b);
        frame
    }

    #[test]
    fn checksum_matches_fletcher_oracle() {
        let data = b"\x01\x07\x5c\x00some payload bytes";
        assert_eq!(ubx_checksum(data), fletcher_oracle(data));
    }

    #[test]
    fn zeroed_payload_parses_to_all_zero_fields() {
        let mut parser = UbxParser::new();
        let results = parser.feed(&zeroed_frame());
        assert_eq!(results, vec![Ok(UbxOutcome::NavPvt(NavPvt::default()))]);
    }

    #[test]
    fn leading_garbage_is_skipped() {
        let mut parser = UbxParser::new();
        let mut stream = vec![0x00, 0xFF, 0xB5, 0x00, 0x42];
        stream.extend_from_slice(&zeroed_frame());
        let results = parser.feed(&stream);
        assert_eq!(results.len(), 1);
        assert!(matches!(results[0], Ok(UbxOutcome::NavPvt(_))));
        assert_eq!(parser.pending_bytes(), 0);
    }

    #[test]
    fn truncated_frame_waits_for_more_data() {
        let frame = zeroed_frame();
        let mut parser = UbxParser::new();
        assert!(parser.feed(&frame[..40]).is_empty());
        assert_eq!(parser.pending_bytes(), 40);
        let results = parser.feed(&frame[40..]);
        assert_eq!(results, vec![Ok(UbxOutcome::NavPvt(NavPvt::default()))]);
        assert_eq!(parser.pending_bytes(), 0);
    }

    #[test]
    fn wrong_class_id_is_ignored() {
        let mut frame = vec![UBX_SYNC1, UBX_SYNC2, 0x05, 0x01, 2, 0, 0xAA, 0xBB];
        let (a, b) = ubx_checksum(&frame[2..]);
        frame.push(a);
        frame.push(b);
        let mut parser = UbxParser::new();
        assert_eq!(
            parser.feed(&frame),
            vec![Ok(UbxOutcome::Ignored { class: 0x05, id: 0x01 })]
        );
    }

    #[test]
    fn encode_decode_identity() {
        let pvt = NavPvt {
            itow_ms: 123_456,
            fix_type: 3,
            lon_e7: 110_000_000,
            lat_e7: 440_000_000,
            ground_speed_mmps: 10_000,
            heading_e5: 9_000_000,
        };
        let mut parser = UbxParser::new();
        let results = parser.feed(&ubx_encode_nav_pvt(&pvt));
        assert_eq!(results, vec![Ok(UbxOutcome::NavPvt(pvt))]);
    }

    #[test]
    fn no_fix_maps_position_to_unavailable() {
        let pvt = NavPvt { fix_type: 0, lat_e7: 1, lon_e7: 1, ..Default::default() };
        assert_eq!(pvt.to_fix().position, None);
    }

    proptest! {
        #[test]
        fn single_byte_corruption_never_yields_a_frame(
            idx in 2usize..(8 + NAV_PVT_LEN),
            delta in 1u8..255,
        ) {
            let mut frame = zeroed_frame();
            frame[idx] ^= delta;
            let mut parser = UbxParser::new();
            for r in parser.feed(&frame) {
                let rejected = r.is_err() || matches!(r, Ok(UbxOutcome::Ignored { .. }));
                prop_assert!(rejected, "corrupted frame yielded {:?}", r);
            }
        }

        #[test]
        fn parser_never_panics_on_random_bytes(chunks in prop::collection::vec(
            prop::collection::vec(any::<u8>(), 0..64), 0..8)
        ) {
            let mut parser = UbxParser::new();
            for chunk in &chunks {
                let _ = parser.feed(chunk);
            }
        }
    }
}
