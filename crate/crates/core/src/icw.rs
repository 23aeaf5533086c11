//! Intersection collision warning.
//!
//! Works entirely in the scaled (virtual) local plane: remote kinematics
//! come from CAMs via the LDM, so distances and speeds are already scale
//! factors of the physical track. A warning for a remote station is raised
//! while the ego car is near the intersection zone and the remote's
//! straight-ray time-to-intersection falls below the threshold, and cleared
//! once the condition has been false for a hold period.

use crate::ldm::{LdmEntry, LdmQueryResult};
use crate::positioning::{LocalPose, ScenarioFrame};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Remotes slower than this (virtual m/s) are treated as not approaching.
pub const SPEED_FLOOR_MPS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionZone {
    /// Zone center in virtual local meters (east, north).
    pub center: [f64; 2],
    /// Virtual meters.
    pub radius_m: f64,
}

impl IntersectionZone {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius_m > 0.0) {
            return Err(format!("zone radius must be > 0, got {}", self.radius_m));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcwConfig {
    /// Warn when the remote's time-to-intersection drops to this, seconds.
    #[serde(default = "default_tti")]
    pub tti_threshold_s: f64,
    /// Ego must be within this virtual distance of the zone center.
    #[serde(default = "default_proximity")]
    pub ego_proximity_m: f64,
    /// A warning clears after the condition has been false this long, ms.
    #[serde(default = "default_hold")]
    pub hold_ms: f64,
}

fn default_tti() -> f64 {
    5.0
}
fn default_proximity() -> f64 {
    20.0
}
fn default_hold() -> f64 {
    1000.0
}

impl Default for IcwConfig {
    fn default() -> Self {
        Self {
            tti_threshold_s: default_tti(),
            ego_proximity_m: default_proximity(),
            hold_ms: default_hold(),
        }
    }
}

impl IcwConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tti_threshold_s > 0.0 && self.ego_proximity_m > 0.0 && self.hold_ms > 0.0) {
            return Err("all ICW thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Projected time until a remote reaches the zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tti {
    Seconds(f64),
    /// Not heading at the zone, or effectively stationary.
    Receding,
    /// Speed or heading missing from the CAM.
    InsufficientData,
}

/// Project the remote's velocity ray; if it passes within the zone radius
/// of the center, the TTI is the along-ray distance to the closest approach
/// divided by the speed.
pub fn time_to_intersection(
    entry: &LdmEntry,
    zone: &IntersectionZone,
    frame: &ScenarioFrame,
) -> Tti {
    let (Some(speed), Some(heading)) = (entry.speed_mps, entry.heading_deg) else {
        return Tti::InsufficientData;
    };
    if speed < SPEED_FLOOR_MPS {
        return Tti::Receding;
    }
    let p = frame.geo_to_virtual_xy(&entry.position);
    let h = heading.to_radians();
    // Compass heading to east/north components.
    let dir = [h.sin(), h.cos()];
    let to_center = [zone.center[0] - p[0], zone.center[1] - p[1]];
    let along = to_center[0] * dir[0] + to_center[1] * dir[1];
    if along < 0.0 {
        return Tti::Receding;
    }
    let closest_sq = (to_center[0] * to_center[0] + to_center[1] * to_center[1]) - along * along;
    if closest_sq > zone.radius_m * zone.radius_m {
        return Tti::Receding;
    }
    Tti::Seconds(along / speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WarningState {
    Raised,
    Cleared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WarningEvent {
    pub time_ms: f64,
    pub remote_station_id: u32,
    /// TTI at the raise, or at the last evaluation that held the warning.
    pub tti_s: f64,
    /// Distance from the ego (the LDM query center), virtual meters.
    pub remote_distance_m: f64,
    pub state: WarningState,
}

#[derive(Debug, Clone, Copy)]
struct ActiveWarning {
    last_true_ms: f64,
    last_tti_s: f64,
    last_distance_m: f64,
}

/// Per-station warning latch; raises and clears strictly alternate per
/// remote. A run that ends mid-warning leaves an unmatched raise.
#[derive(Debug, Clone, Default)]
pub struct IcwTracker {
    active: BTreeMap<u32, ActiveWarning>,
}

impl IcwTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ids currently under an active warning.
    pub fn active_remotes(&self) -> Vec<u32> {
        self.active.keys().copied().collect()
    }

    /// Evaluate fresh LDM query results against the zone, emitting only the
    /// raise/clear transitions.
    pub fn evaluate(
        &mut self,
        ego: &LocalPose,
        results: &[LdmQueryResult],
        zone: &IntersectionZone,
        config: &IcwConfig,
        frame: &ScenarioFrame,
        now_ms: f64,
    ) -> Vec<WarningEvent> {
        let ego_xy = [ego.x * frame.scale, ego.y * frame.scale];
        let dx = ego_xy[0] - zone.center[0];
        let dy = ego_xy[1] - zone.center[1];
        let ego_near = (dx * dx + dy * dy).sqrt() <= config.ego_proximity_m;

        let mut events = Vec::new();
        let mut seen_true: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        if ego_near {
            for result in results {
                if let Tti::Seconds(tti) = time_to_intersection(&result.entry, zone, frame) {
                    if tti <= config.tti_threshold_s {
                        seen_true.insert(result.entry.station_id, (tti, result.distance_m));
                    }
                }
            }
        }

        // Raise or refresh.
        for (&id, &(tti, distance)) in &seen_true {
            match self.active.get_mut(&id) {
                Some(active) => {
                    active.last_true_ms = now_ms;
                    active.last_tti_s = tti;
                    active.last_distance_m = distance;
                }
                None => {
                    self.active.insert(
                        id,
                        ActiveWarning {
                            last_true_ms: now_ms,
                            last_tti_s: tti,
                            last_distance_m: distance,
                        },
                    );
                    events.push(WarningEvent {
                        time_ms: now_ms,
                        remote_station_id: id,
                        tti_s: tti,
                        remote_distance_m: distance,
                        state: WarningState::Raised,
                    });
                }
            }
        }

        // Clear warnings whose condition has lapsed for the hold period.
        let expired: Vec<u32> = self
            .active
            .iter()
            .filter(|(id, active)| {
                !seen_true.contains_key(id) && now_ms - active.last_true_ms >= config.hold_ms
            })
            .map(|(&id, _)| id)
            .collect();
        for id in expired {
            let active = self.active.remove(&id).expect("present");
            events.push(WarningEvent {
                time_ms: now_ms,
                remote_station_id: id,
                tti_s: active.last_tti_s,
                remote_distance_m: active.last_distance_m,
                state: WarningState::Cleared,
            });
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldm::LdmEntry;
    use crate::positioning::GeoPoint;

    fn frame() -> ScenarioFrame {
        ScenarioFrame::new(GeoPoint::new(44.0, 11.0), 10.0).unwrap()
    }

    fn zone() -> IntersectionZone {
        IntersectionZone { center: [0.0, 0.0], radius_m: 7.5 }
    }

    // An entry at virtual (east, north) meters with virtual speed/heading.
    fn entry_at(east: f64, north: f64, speed: f64, heading: f64) -> LdmEntry {
        let f = frame();
        let lat = f.origin.lat + north / crate::positioning::M_PER_DEG_LAT;
        let lon = f.origin.lon
            + east / (crate::positioning::M_PER_DEG_LAT * f.origin.lat.to_radians().cos());
        LdmEntry {
            station_id: 1,
            position: GeoPoint::new(lat, lon),
            speed_mps: Some(speed),
            heading_deg: Some(heading),
            last_cam_gen_delta_time: 0,
            insert_time_ms: 0.0,
        }
    }

    #[test]
    fn head_on_approach_divides_distance_by_speed() {
        // 50 m south of the zone, heading due north at 10 m/s.
        let e = entry_at(0.0, -50.0, 10.0, 0.0);
        match time_to_intersection(&e, &zone(), &frame()) {
            Tti::Seconds(t) => assert!((t - 5.0).abs() < 1e-6, "tti {t}"),
            other => panic!("expected seconds, got {other:?}"),
        }
    }

    #[test]
    fn heading_away_is_receding() {
        let e = entry_at(0.0, -50.0, 10.0, 180.0);
        assert_eq!(time_to_intersection(&e, &zone(), &frame()), Tti::Receding);
    }

    #[test]
    fn stationary_remote_is_receding() {
        let e = entry_at(0.0, -50.0, 0.0, 0.0);
        assert_eq!(time_to_intersection(&e, &zone(), &frame()), Tti::Receding);
    }

    #[test]
    fn ray_missing_the_zone_is_receding() {
        // Heading east from 50 m south: passes 50 m from the center.
        let e = entry_at(0.0, -50.0, 10.0, 90.0);
        assert_eq!(time_to_intersection(&e, &zone(), &frame()), Tti::Receding);
    }

    #[test]
    fn missing_kinematics_is_insufficient_data() {
        let mut e = entry_at(0.0, -50.0, 10.0, 0.0);
        e.heading_deg = None;
        assert_eq!(time_to_intersection(&e, &zone(), &frame()), Tti::InsufficientData);
    }

    fn query_result(entry: LdmEntry, distance: f64) -> LdmQueryResult {
        LdmQueryResult { entry, distance_m: distance, age_ms: 0.0 }
    }

    fn ego_near_zone() -> LocalPose {
        // Physical (0, -1.5) = virtual (0, -15), within the 20 m gate.
        LocalPose { x: 0.0, y: -1.5, heading_deg: 0.0, speed_mps: 0.0, t_ms: 0 }
    }

    #[test]
    fn empty_ldm_produces_no_events() {
        let mut tracker = IcwTracker::new();
        let events = tracker.evaluate(
            &ego_near_zone(),
            &[],
            &zone(),
            &IcwConfig::default(),
            &frame(),
            0.0,
        );
        assert!(events.is_empty());
    }

    #[test]
    fn distant_ego_suppresses_warnings() {
        let mut tracker = IcwTracker::new();
        let far_ego = LocalPose { x: 10.0, y: 0.0, heading_deg: 0.0, speed_mps: 0.0, t_ms: 0 };
        let results = vec![query_result(entry_at(0.0, -20.0, 10.0, 0.0), 5.0)];
        let events = tracker.evaluate(
            &far_ego,
            &results,
            &zone(),
            &IcwConfig::default(),
            &frame(),
            0.0,
        );
        assert!(events.is_empty());
    }

    #[test]
    fn raise_then_clear_after_hold() {
        let mut tracker = IcwTracker::new();
        let cfg = IcwConfig::default();
        let f = frame();
        let z = zone();
        let approaching = vec![query_result(entry_at(0.0, -20.0, 10.0, 0.0), 5.0)];

        let events = tracker.evaluate(&ego_near_zone(), &approaching, &z, &cfg, &f, 0.0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].state, WarningState::Raised);
        assert!((events[0].tti_s - 2.0).abs() < 1e-6);

        // Still approaching: steady state, nothing re-emitted.
        assert!(tracker.evaluate(&ego_near_zone(), &approaching, &z, &cfg, &f, 100.0).is_empty());

        // Condition false, but the hold keeps it raised for a while.
        assert!(tracker.evaluate(&ego_near_zone(), &[], &z, &cfg, &f, 500.0).is_empty());
        let events = tracker.evaluate(&ego_near_zone(), &[], &z, &cfg, &f, 1100.0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].state, WarningState::Cleared);
        assert!(tracker.active_remotes().is_empty());
    }

    #[test]
    fn raises_and_clears_strictly_alternate() {
        let mut tracker = IcwTracker::new();
        let cfg = IcwConfig::default();
        let f = frame();
        let z = zone();
        let approaching = vec![query_result(entry_at(0.0, -20.0, 10.0, 0.0), 5.0)];
        let mut per_remote: BTreeMap<u32, Vec<WarningState>> = BTreeMap::new();
        // Alternate phases of approach and absence.
        for phase in 0..6 {
            let results = if phase % 2 == 0 { approaching.clone() } else { vec![] };
            for step in 0..30 {
                let now = phase as f64 * 3000.0 + step as f64 * 100.0;
                for e in tracker.evaluate(&ego_near_zone(), &results, &z, &cfg, &f, now) {
                    per_remote.entry(e.remote_station_id).or_default().push(e.state);
                }
            }
        }
        for (_, states) in per_remote {
            for (i, s) in states.iter().enumerate() {
                let expected =
                    if i % 2 == 0 { WarningState::Raised } else { WarningState::Cleared };
                assert_eq!(*s, expected);
            }
        }
    }
}
