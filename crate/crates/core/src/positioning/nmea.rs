//! NMEA 0183 sentence generation and parsing (RMC and GGA).
//!
//! Framing: `$<body>*HH\r\n` where `HH` is the XOR of every byte strictly
//! between `$` and `*`, rendered as two uppercase hex digits. Latitude is
//! `ddmm.mmmm`, longitude `dddmm.mmmm`, each with a hemisphere letter.
//! Unavailable fields are emitted empty, which is legal NMEA, not an error.

use super::{GeoPoint, PvtFix};
use thiserror::Error;

/// Knots per m/s.
pub const KNOTS_PER_MPS: f64 = 1.943_844_5;

const MS_PER_DAY: u64 = 86_400_000;

#[derive(Debug, Error, PartialEq)]
pub enum NmeaError {
    #[error("framing error: {0}")]
    Framing(String),
    #[error("checksum mismatch: computed {computed:02X}, sentence carries {found}")]
    Checksum { computed: u8, found: String },
    #[error("bad field {field}: {value:?}")]
    BadField { field: &'static str, value: String },
}

/// Result of parsing one well-formed sentence.
#[derive(Debug, Clone, PartialEq)]
pub enum NmeaOutcome {
    /// An RMC or GGA sentence; fields the sentence did not carry are `None`.
    Fix(PvtFix),
    /// Valid framing and checksum, but a sentence type this stack ignores.
    Ignored { address: String },
}

/// XOR of all bytes, the NMEA 0183 checksum over a sentence body.
pub fn nmea_checksum(body: &[u8]) -> u8 {
    body.iter().fold(0, |acc, b| acc ^ b)
}

fn fmt_latitude(deg: f64) -> (String, char) {
    let hemi = if deg < 0.0 { 'S' } else { 'N' };
    let abs = deg.abs();
    let d = abs.floor();
    let minutes = (abs - d) * 60.0;
    // Carry minute overflow from rounding (59.99995 -> 60.0000).
    let (d, minutes) = if minutes >= 59.99995 { (d + 1.0, 0.0) } else { (d, minutes) };
    (format!("{:02}{:07.4}", d as u32, minutes), hemi)
}

fn fmt_longitude(deg: f64) -> (String, char) {
    let hemi = if deg < 0.0 { 'W' } else { 'E' };
    let abs = deg.abs();
    let d = abs.floor();
    let minutes = (abs - d) * 60.0;
    let (d, minutes) = if minutes >= 59.99995 { (d + 1.0, 0.0) } else { (d, minutes) };
    (format!("{:03}{:07.4}", d as u32, minutes), hemi)
}

fn fmt_time(t_ms: u64) -> String {
    let ms_of_day = t_ms % MS_PER_DAY;
    let h = ms_of_day / 3_600_000;
    let m = (ms_of_day / 60_000) % 60;
    let s = (ms_of_day / 1000) % 60;
    let ms = ms_of_day % 1000;
    format!("{h:02}{m:02}{s:02}.{ms:03}")
}

fn fmt_date(t_ms: u64) -> String {
    let (y, m, d) = civil_from_days((t_ms / MS_PER_DAY) as i64);
    format!("{d:02}{m:02}{:02}", y % 100)
}

// Days since 1970-01-01 to (year, month, day), proleptic Gregorian.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y.rem_euclid(400);
    let mp = if m > 2 { m - 3 } else { m + 9 } as i64;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn frame_sentence(body: String) -> String {
    let cs = nmea_checksum(body.as_bytes());
    format!("${body}*{cs:02X}\r\n")
}

/// Render a fix as one RMC and one GGA sentence, in that order.
pub fn nmea_generate(fix: &PvtFix, talker: &str) -> Vec<String> {
    let (lat_s, lat_h, lon_s, lon_h) = match fix.position {
        Some(p) => {
            let (las, lah) = fmt_latitude(p.lat);
            let (los, loh) = fmt_longitude(p.lon);
            (las, lah.to_string(), los, loh.to_string())
        }
        None => (String::new(), String::new(), String::new(), String::new()),
    };
    let time = fix.t_ms.map(fmt_time).unwrap_or_default();
    let date = fix.t_ms.map(fmt_date).unwrap_or_default();
    let speed_kn = fix
        .speed_mps
        .map(|s| format!("{:.4}", s * KNOTS_PER_MPS))
        .unwrap_or_default();
    let course = fix.heading_deg.map(|h| format!("{h:.2}")).unwrap_or_default();
    let status = if fix.position.is_some() { "A" } else { "V" };
    let quality = if fix.position.is_some() { "1" } else { "0" };
    let alt = fix
        .position
        .and_then(|p| p.alt)
        .map(|a| format!("{a:.1}"))
        .unwrap_or_default();

    let rmc = format!(
        "{talker}RMC,{time},{status},{lat_s},{lat_h},{lon_s},{lon_h},{speed_kn},{course},{date},,"
    );
    let gga = format!(
        "{talker}GGA,{time},{lat_s},{lat_h},{lon_s},{lon_h},{quality},08,1.0,{alt},M,,M,,"
    );
    vec![frame_sentence(rmc), frame_sentence(gga)]
}

fn parse_coord(
    value: &str,
    hemi: &str,
    deg_digits: usize,
    field: &'static str,
) -> Result<Option<f64>, NmeaError> {
    if value.is_empty() && hemi.is_empty() {
        return Ok(None);
    }
    let bad = || NmeaError::BadField { field, value: format!("{value},{hemi}") };
    if value.len() < deg_digits + 2 {
        return Err(bad());
    }
    let (d, m) = value.split_at(deg_digits);
    let degrees: f64 = d.parse().map_err(|_| bad())?;
    let minutes: f64 = m.parse().map_err(|_| bad())?;
    if !(0.0..60.0).contains(&minutes) {
        return Err(bad());
    }
    let sign = match hemi {
        "N" | "E" => 1.0,
        "S" | "W" => -1.0,
        _ => return Err(bad()),
    };
    Ok(Some(sign * (degrees + minutes / 60.0)))
}

fn parse_time_ms(value: &str) -> Result<Option<u64>, NmeaError> {
    if value.is_empty() {
        return Ok(None);
    }
    let bad = || NmeaError::BadField { field: "time", value: value.to_string() };
    if value.len() < 6 || !value.is_char_boundary(6) {
        return Err(bad());
    }
    let h: u64 = value[0..2].parse().map_err(|_| bad())?;
    let m: u64 = value[2..4].parse().map_err(|_| bad())?;
    let s: f64 = value[4..].parse().map_err(|_| bad())?;
    if h > 23 || m > 59 || !(0.0..60.0).contains(&s) {
        return Err(bad());
    }
    Ok(Some(h * 3_600_000 + m * 60_000 + (s * 1000.0).round() as u64))
}

fn parse_date_days(value: &str) -> Result<Option<i64>, NmeaError> {
    if value.is_empty() {
        return Ok(None);
    }
    let bad = || NmeaError::BadField { field: "date", value: value.to_string() };
    if value.len() != 6 {
        return Err(bad());
    }
    let d: u32 = value[0..2].parse().map_err(|_| bad())?;
    let m: u32 = value[2..4].parse().map_err(|_| bad())?;
    let yy: i64 = value[4..6].parse().map_err(|_| bad())?;
    let y = if yy < 70 { 2000 + yy } else { 1900 + yy };
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return Err(bad());
    }
    Ok(Some(days_from_civil(y, m, d)))
}

fn parse_f64(value: &str, field: &'static str) -> Result<Option<f64>, NmeaError> {
    if value.is_empty() {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| NmeaError::BadField { field, value: value.to_string() })
}

/// Validate framing and checksum, then decode RMC/GGA fields.
pub fn nmea_parse(sentence: &str) -> Result<NmeaOutcome, NmeaError> {
    let s = sentence.trim_end_matches(['\r', '\n']);
    if s.is_empty() {
        return Err(NmeaError::Framing("empty sentence".into()));
    }
    if !s.starts_with('$') {
        return Err(NmeaError::Framing("missing '$'".into()));
    }
    let star = s.rfind('*').ok_or_else(|| NmeaError::Framing("missing '*'".into()))?;
    let body = &s[1..star];
    let cs_text = &s[star + 1..];
    if cs_text.len() != 2 || !cs_text.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(NmeaError::Framing(format!("bad checksum field {cs_text:?}")));
    }
    let declared = u8::from_str_radix(cs_text, 16).expect("hex digits");
    let computed = nmea_checksum(body.as_bytes());
    if declared != computed {
        return Err(NmeaError::Checksum { computed, found: cs_text.to_string() });
    }

    let fields: Vec<&str> = body.split(',').collect();
    let address = fields[0];
    if address.len() < 3 {
        return Err(NmeaError::Framing(format!("bad address field {address:?}")));
    }
    let sentence_type = &address[address.len() - 3..];
    match sentence_type {
        "RMC" => parse_rmc(&fields),
        "GGA" => parse_gga(&fields),
        _ => Ok(NmeaOutcome::Ignored { address: address.to_string() }),
    }
}

fn field<'a>(fields: &[&'a str], idx: usize) -> &'a str {
    fields.get(idx).copied().unwrap_or("")
}

fn parse_rmc(fields: &[&str]) -> Result<NmeaOutcome, NmeaError> {
    let time_ms = parse_time_ms(field(fields, 1))?;
    let lat = parse_coord(field(fields, 3), field(fields, 4), 2, "latitude")?;
    let lon = parse_coord(field(fields, 5), field(fields, 6), 3, "longitude")?;
    let speed = parse_f64(field(fields, 7), "speed")?.map(|kn| kn / KNOTS_PER_MPS);
    let heading = parse_f64(field(fields, 8), "course")?;
    let days = parse_date_days(field(fields, 9))?;
    let t_ms = match (time_ms, days) {
        (Some(t), Some(d)) => Some(d as u64 * MS_PER_DAY + t),
        (Some(t), None) => Some(t),
        _ => None,
    };
    let position = match (lat, lon) {
        (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon)),
        _ => None,
    };
    Ok(NmeaOutcome::Fix(PvtFix { position, speed_mps: speed, heading_deg: heading, t_ms }))
}

fn parse_gga(fields: &[&str]) -> Result<NmeaOutcome, NmeaError> {
    let time_ms = parse_time_ms(field(fields, 1))?;
    let lat = parse_coord(field(fields, 2), field(fields, 3), 2, "latitude")?;
    let lon = parse_coord(field(fields, 4), field(fields, 5), 3, "longitude")?;
    let alt = parse_f64(field(fields, 9), "altitude")?;
    let position = match (lat, lon) {
        (Some(lat), Some(lon)) => Some(GeoPoint { lat, lon, alt }),
        _ => None,
    };
    Ok(NmeaOutcome::Fix(PvtFix { position, speed_mps: None, heading_deg: None, t_ms: time_ms }))
}
