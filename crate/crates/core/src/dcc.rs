//! Reactive decentralized congestion control: a channel-busy-ratio
//! measurement mapped through a state table to a minimum CAM interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DccError {
    #[error("CBR window must be positive, got {0} ms")]
    InvalidWindow(f64),
    #[error("invalid DCC table: {0}")]
    InvalidTable(String),
}

/// One state row: applies while the CBR is below `cbr_threshold` and every
/// earlier row's threshold has been exceeded. The last row is the catch-all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DccRow {
    pub name: String,
    /// Upper CBR bound (exclusive) for this row, fraction of the window.
    pub cbr_threshold: f64,
    pub min_interval_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DccTable {
    rows: Vec<DccRow>,
}

impl Default for DccTable {
    fn default() -> Self {
        let row = |name: &str, cbr_threshold: f64, min_interval_ms: f64| DccRow {
            name: name.to_string(),
            cbr_threshold,
            min_interval_ms,
        };
        Self {
            rows: vec![
                row("Relaxed", 0.30, 60.0),
                row("Active1", 0.40, 100.0),
                row("Active2", 0.50, 200.0),
                row("Active3", 0.60, 250.0),
                row("Restrictive", 1.00, 1000.0),
            ],
        }
    }
}

impl DccTable {
    pub fn new(rows: Vec<DccRow>) -> Result<Self, DccError> {
        let table = Self { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn rows(&self) -> &[DccRow] {
        &self.rows
    }

    pub fn validate(&self) -> Result<(), DccError> {
        if self.rows.is_empty() {
            return Err(DccError::InvalidTable("table is empty".into()));
        }
        for pair in self.rows.windows(2) {
            if pair[1].cbr_threshold <= pair[0].cbr_threshold {
                return Err(DccError::InvalidTable(format!(
                    "thresholds must be strictly increasing ({} then {})",
                    pair[0].cbr_threshold, pair[1].cbr_threshold
                )));
            }
            if pair[1].min_interval_ms < pair[0].min_interval_ms {
                return Err(DccError::InvalidTable(format!(
                    "intervals must be non-decreasing ({} then {})",
                    pair[0].min_interval_ms, pair[1].min_interval_ms
                )));
            }
        }
        for row in &self.rows {
            if !(0.0..=1.0).contains(&row.cbr_threshold) || row.min_interval_ms <= 0.0 {
                return Err(DccError::InvalidTable(format!("bad row {row:?}")));
            }
        }
        Ok(())
    }

    /// Index of the row governing the given CBR.
    pub fn lookup(&self, cbr: f64) -> usize {
        self.rows
            .iter()
            .position(|row| cbr < row.cbr_threshold)
            .unwrap_or(self.rows.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DccConfig {
    #[serde(default)]
    pub table: DccTable,
    /// Exponential smoothing factor for the CBR input, in (0, 1]. Off by
    /// default: each measurement is used as-is.
    #[serde(default)]
    pub smoothing_alpha: Option<f64>,
}

impl Default for DccConfig {
    fn default() -> Self {
        Self { table: DccTable::default(), smoothing_alpha: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DccState {
    pub row_index: usize,
    pub last_cbr: f64,
}

impl Default for DccState {
    fn default() -> Self {
        Self { row_index: 0, last_cbr: 0.0 }
    }
}

/// Fraction of the window the channel was busy, clamped to [0, 1].
pub fn cbr_measure(busy_time_ms: f64, window_ms: f64) -> Result<f64, DccError> {
    if !(window_ms > 0.0) {
        return Err(DccError::InvalidWindow(window_ms));
    }
    Ok((busy_time_ms / window_ms).clamp(0.0, 1.0))
}

/// Feed one CBR measurement: pure table lookup, optionally smoothing the
/// input first.
pub fn dcc_update(state: &DccState, cbr: f64, config: &DccConfig) -> DccState {
    let effective = match config.smoothing_alpha {
        Some(alpha) => alpha * cbr + (1.0 - alpha) * state.last_cbr,
        None => cbr,
    };
    DccState { row_index: config.table.lookup(effective), last_cbr: effective }
}

/// The minimum transmit interval imposed by the current state. This value
/// feeds the CAM trigger's DCC gate.
pub fn dcc_min_interval(state: &DccState, table: &DccTable) -> f64 {
    table.rows()[state.row_index.min(table.rows().len() - 1)].min_interval_ms
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cbr_measure_is_plain_arithmetic() {
        assert_eq!(cbr_measure(0.0, 100.0).unwrap(), 0.0);
        assert_eq!(cbr_measure(100.0, 100.0).unwrap(), 1.0);
        assert!((cbr_measure(17.87, 100.0).unwrap() - 0.1787).abs() < 1e-12);
        assert!((cbr_measure(150.0, 100.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_window_is_an_error() {
        assert_eq!(cbr_measure(0.0, 0.0), Err(DccError::InvalidWindow(0.0)));
    }

    #[test]
    fn default_table_state_assignment() {
        let cfg = DccConfig::default();
        let state = DccState::default();
        let names: Vec<&str> = [0.0, 0.35, 0.45, 0.55, 0.7, 1.0]
            .iter()
            .map(|&cbr| {
                let s = dcc_update(&state, cbr, &cfg);
                cfg.table.rows()[s.row_index].name.as_str()
            })
            .collect();
        assert_eq!(
            names,
            vec!["Relaxed", "Active1", "Active2", "Active3", "Restrictive", "Restrictive"]
        );
    }

    #[test]
    fn intervals_for_extreme_states() {
        let cfg = DccConfig::default();
        let relaxed = dcc_update(&DccState::default(), 0.0, &cfg);
        assert_eq!(dcc_min_interval(&relaxed, &cfg.table), 60.0);
        let restrictive = dcc_update(&DccState::default(), 1.0, &cfg);
        assert_eq!(dcc_min_interval(&restrictive, &cfg.table), 1000.0);
    }

    #[test]
    fn active2_covers_0_45() {
        let cfg = DccConfig::default();
        let s = dcc_update(&DccState::default(), 0.45, &cfg);
        assert_eq!(cfg.table.rows()[s.row_index].name, "Active2");
        assert_eq!(dcc_min_interval(&s, &cfg.table), 200.0);
    }

    #[test]
    fn bad_tables_are_rejected() {
        let row = |t: f64, i: f64| DccRow {
            name: "x".into(),
            cbr_threshold: t,
            min_interval_ms: i,
        };
        assert!(DccTable::new(vec![]).is_err());
        assert!(DccTable::new(vec![row(0.5, 100.0), row(0.5, 200.0)]).is_err());
        assert!(DccTable::new(vec![row(0.3, 200.0), row(0.6, 100.0)]).is_err());
        assert!(DccTable::new(vec![row(0.3, 60.0), row(1.0, 1000.0)]).is_ok());
    }

    #[test]
    fn smoothing_blends_toward_new_measurement() {
        let cfg = DccConfig {
            smoothing_alpha: Some(0.5),
            ..DccConfig::default()
        };
        let s0 = DccState { row_index: 0, last_cbr: 0.0 };
        let s1 = dcc_update(&s0, 0.8, &cfg);
        assert!((s1.last_cbr - 0.4).abs() < 1e-12);
        assert_eq!(cfg.table.rows()[s1.row_index].name, "Active2");
    }

    proptest! {
        #[test]
        fn interval_is_monotone_in_cbr(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let cfg = DccConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = dcc_update(&DccState::default(), lo, &cfg);
            let s_hi = dcc_update(&DccState::default(), hi, &cfg);
            prop_assert!(
                dcc_min_interval(&s_lo, &cfg.table) <= dcc_min_interval(&s_hi, &cfg.table)
            );
        }

        #[test]
        fn update_is_idempotent_without_smoothing(cbr in 0.0f64..=1.0) {
            let cfg = DccConfig::default();
            let once = dcc_update(&DccState::default(), cbr, &cfg);
            let twice = dcc_update(&once, cbr, &cfg);
            prop_assert_eq!(once, twice);
        }
    }
}
