//! Replay of previously recorded position traces.
//!
//! Trace files are JSON lines, one fix per line:
//! `{"t_ms": 0, "lat": 44.0, "lon": 11.0, "speed_mps": 1.0, "heading_deg": 90.0}`.
//! Timestamps must be non-decreasing; violations are reported with the
//! offending line number.

use super::{GeoPoint, PositionProvider, PvtFix};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Schema { line: usize, source: serde_json::Error },
    #[error("line {line}: timestamp {t_ms} goes backwards (previous {prev_ms})")]
    NonMonotonic { line: usize, t_ms: u64, prev_ms: u64 },
}

/// One recorded fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub lat: f64,
    pub lon: f64,
    pub speed_mps: f64,
    pub heading_deg: f64,
}

impl TraceRecord {
    pub fn to_fix(&self) -> PvtFix {
        PvtFix {
            position: Some(GeoPoint::new(self.lat, self.lon)),
            speed_mps: Some(self.speed_mps),
            heading_deg: Some(self.heading_deg),
            t_ms: Some(self.t_ms),
        }
    }

    pub fn from_fix(fix: &PvtFix) -> Option<Self> {
        let p = fix.position?;
        Some(Self {
            t_ms: fix.t_ms?,
            lat: p.lat,
            lon: p.lon,
            speed_mps: fix.speed_mps?,
            heading_deg: fix.heading_deg?,
        })
    }
}

/// Yields the fixes of a recorded trace in order.
#[derive(Debug, Clone)]
pub struct TraceProvider {
    records: Vec<TraceRecord>,
    cursor: usize,
}

impl TraceProvider {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        let mut prev_ms: Option<u64> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(&line)
                .map_err(|source| TraceError::Schema { line: idx + 1, source })?;
            if let Some(prev) = prev_ms {
                if record.t_ms < prev {
                    return Err(TraceError::NonMonotonic {
                        line: idx + 1,
                        t_ms: record.t_ms,
                        prev_ms: prev,
                    });
                }
            }
            prev_ms = Some(record.t_ms);
            records.push(record);
        }
        Ok(Self { records, cursor: 0 })
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serialize fixes back into the trace format, one JSON object per line.
    pub fn write_records<W: std::io::Write>(
        records: &[TraceRecord],
        mut w: W,
    ) -> std::io::Result<()> {
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl PositionProvider for TraceProvider {
    fn next_fix(&mut self) -> Option<PvtFix> {
        let record = self.records.get(self.cursor)?;
        self.cursor += 1;
        Some(record.to_fix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn two_record_trace_yields_two_fixes_at_recorded_times() {
        let data = "\
{\"t_ms\":100,\"lat\":44.0,\"lon\":11.0,\"speed_mps\":1.0,\"heading_deg\":90.0}
{\"t_ms\":200,\"lat\":44.0001,\"lon\":11.0,\"speed_mps\":1.0,\"heading_deg\":90.0}
";
        let mut provider = TraceProvider::from_reader(Cursor::new(data)).unwrap();
        let a = provider.next_fix().unwrap();
        let b = provider.next_fix().unwrap();
        assert_eq!(a.t_ms, Some(100));
        assert_eq!(b.t_ms, Some(200));
        assert_eq!(provider.next_fix(), None);
    }

    #[test]
    fn empty_file_is_an_empty_provider() {
        let mut provider = TraceProvider::from_reader(Cursor::new("")).unwrap();
        assert!(provider.is_empty());
        assert_eq!(provider.next_fix(), None);
    }

    #[test]
    fn non_monotone_timestamps_report_the_line() {
        let data = "\
{\"t_ms\":100,\"lat\":44.0,\"lon\":11.0,\"speed_mps\":1.0,\"heading_deg\":90.0}
{\"t_ms\":50,\"lat\":44.0,\"lon\":11.0,\"speed_mps\":1.0,\"heading_deg\":90.0}
";
        match TraceProvider::from_reader(Cursor::new(data)) {
            Err(TraceError::NonMonotonic { line, t_ms, prev_ms }) => {
                assert_eq!((line, t_ms, prev_ms), (2, 50, 100));
            }
            other => panic!("expected non-monotonic error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_schema_error_with_line() {
        let data = "{\"t_ms\":100,\"lat\":44.0,\"lon\":11.0,\"speed_mps\":1.0}\n";
        match TraceProvider::from_reader(Cursor::new(data)) {
            Err(TraceError::Schema { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn equal_timestamps_are_allowed() {
        let data = "\
{\"t_ms\":100,\"lat\":44.0,\"lon\":11.0,\"speed_mps\":1.0,\"heading_deg\":90.0}
{\"t_ms\":100,\"lat\":44.0,\"lon\":11.0,\"speed_mps\":1.0,\"heading_deg\":90.0}
";
        assert_eq!(TraceProvider::from_reader(Cursor::new(data)).unwrap().len(), 2);
    }
}
