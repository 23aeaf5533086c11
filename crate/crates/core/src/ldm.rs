//! Local dynamic map: the latest known state of every surrounding station,
//! populated from received CAMs, queried around a reference center and
//! garbage-collected by age.

use crate::cam::CoopAwarenessMsg;
use crate::positioning::{haversine_m, GeoPoint};
use serde::Serialize;
use std::collections::BTreeMap;

/// 1.5 x the maximum CAM interval: one lost CAM from a stationary sender
/// does not drop it from the map.
pub const DEFAULT_LDM_MAX_AGE_MS: f64 = 1500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdmEntry {
    pub station_id: u32,
    pub position: GeoPoint,
    pub speed_mps: Option<f64>,
    pub heading_deg: Option<f64>,
    pub last_cam_gen_delta_time: u16,
    /// Receiver clock at insertion, ms.
    pub insert_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdmQueryResult {
    pub entry: LdmEntry,
    /// Great-circle distance from the query center, meters.
    pub distance_m: f64,
    pub age_ms: f64,
}

/// One entry per station id, latest CAM wins.
#[derive(Debug, Clone, Default)]
pub struct Ldm {
    entries: BTreeMap<u32, LdmEntry>,
}

impl Ldm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, station_id: u32) -> Option<&LdmEntry> {
        self.entries.get(&station_id)
    }

    /// Insert or replace the entry for the message's station. A replay of
    /// the same (stationId, genDeltaTime) pair is suppressed; returns
    /// whether the store changed.
    pub fn upsert(&mut self, msg: &CoopAwarenessMsg, now_ms: f64) -> bool {
        if let Some(existing) = self.entries.get(&msg.station_id) {
            if existing.last_cam_gen_delta_time == msg.gen_delta_time {
                return false;
            }
        }
        self.entries.insert(
            msg.station_id,
            LdmEntry {
                station_id: msg.station_id,
                position: msg.position(),
                speed_mps: msg.speed_mps(),
                heading_deg: msg.heading_deg(),
                last_cam_gen_delta_time: msg.gen_delta_time,
                insert_time_ms: now_ms,
            },
        );
        true
    }

    /// All entries no older than `max_age_ms`, with their distance to
    /// `center`, sorted by (distance, stationId) ascending.
    pub fn query(&self, center: &GeoPoint, now_ms: f64, max_age_ms: f64) -> Vec<LdmQueryResult> {
        let mut results: Vec<LdmQueryResult> = self
            .entries
            .values()
            .filter_map(|entry| {
                let age_ms = (now_ms - entry.insert_time_ms).max(0.0);
                (age_ms <= max_age_ms).then(|| LdmQueryResult {
                    entry: *entry,
                    distance_m: haversine_m(center, &entry.position),
                    age_ms,
                })
            })
            .collect();
        results.sort_by(|a, b| {
            a.distance_m
                .total_cmp(&b.distance_m)
                .then(a.entry.station_id.cmp(&b.entry.station_id))
        });
        results
    }

    /// Drop every entry older than `max_age_ms`; returns the removed ids.
    pub fn gc(&mut self, now_ms: f64, max_age_ms: f64) -> Vec<u32> {
        let stale: Vec<u32> = self
            .entries
            .values()
            .filter(|e| now_ms - e.insert_time_ms > max_age_ms)
            .map(|e| e.station_id)
            .collect();
        for id in &stale {
            self.entries.remove(id);
        }
        stale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cam::{CoopAwarenessMsg, DriveDirection};
    use proptest::prelude::*;

    fn msg(station_id: u32, gen_dt: u16, lat_e7: i32, lon_e7: i32) -> CoopAwarenessMsg {
        CoopAwarenessMsg {
            station_id,
            gen_delta_time: gen_dt,
            latitude_e7: lat_e7,
            longitude_e7: lon_e7,
            altitude_cm: None,
            heading_e1: Some(900),
            speed_e2: Some(100),
            drive_direction: DriveDirection::Forward,
            station_type: 5,
        }
    }

    // Independent geodesic oracle: angle between position vectors on the
    // sphere, via 3-D chord geometry rather than the haversine formula.
    fn vector_geodesic_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
        let to_xyz = |p: &GeoPoint| {
            let lat = p.lat.to_radians();
            let lon = p.lon.to_radians();
            [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        };
        let u = to_xyz(a);
        let v = to_xyz(b);
        let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let cross_norm = cross.iter().map(|c| c * c).sum::<f64>().sqrt();
        crate::positioning::EARTH_RADIUS_M * cross_norm.atan2(dot)
    }

    #[test]
    fn reinsert_keeps_one_entry_per_station() {
        let mut ldm = Ldm::new();
        assert!(ldm.upsert(&msg(7, 1, 440_000_000, 110_000_000), 0.0));
        assert!(ldm.upsert(&msg(7, 2, 440_001_000, 110_000_000), 100.0));
        assert_eq!(ldm.len(), 1);
        assert_eq!(ldm.get(7).unwrap().last_cam_gen_delta_time, 2);
    }

    #[test]
    fn distinct_stations_accumulate() {
        let mut ldm = Ldm::new();
        ldm.upsert(&msg(1, 0, 440_000_000, 110_000_000), 0.0);
        ldm.upsert(&msg(2, 0, 440_000_000, 110_000_000), 0.0);
        assert_eq!(ldm.len(), 2);
    }

    #[test]
    fn duplicate_gen_delta_time_is_a_no_op() {
        let mut ldm = Ldm::new();
        assert!(ldm.upsert(&msg(7, 42, 440_000_000, 110_000_000), 0.0));
        let before = *ldm.get(7).unwrap();
        // Same station and genDeltaTime, different position and later clock.
        assert!(!ldm.upsert(&msg(7, 42, 440_100_000, 110_000_000), 500.0));
        assert_eq!(*ldm.get(7).unwrap(), before);
    }

    #[test]
    fn query_on_empty_store_is_empty() {
        let ldm = Ldm::new();
        assert!(ldm.query(&GeoPoint::new(44.0, 11.0), 0.0, 1500.0).is_empty());
    }

    #[test]
    fn entry_at_center_has_distance_zero() {
        let mut ldm = Ldm::new();
        ldm.upsert(&msg(1, 0, 440_000_000, 110_000_000), 0.0);
        let results = ldm.query(&GeoPoint::new(44.0, 11.0), 0.0, 1500.0);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].distance_m, 0.0);
    }

    #[test]
    fn northward_millidegree_is_about_111_meters() {
        let mut ldm = Ldm::new();
        ldm.upsert(&msg(1, 0, 440_010_000, 110_000_000), 0.0);
        let results = ldm.query(&GeoPoint::new(44.0, 11.0), 0.0, 1500.0);
        assert!((results[0].distance_m - 111.19).abs() < 0.2);
    }

    #[test]
    fn stale_entries_are_filtered_and_collected() {
        let mut ldm = Ldm::new();
        ldm.upsert(&msg(1, 0, 440_000_000, 110_000_000), 0.0);
        ldm.upsert(&msg(2, 0, 440_000_000, 110_000_000), 200.0);
        let center = GeoPoint::new(44.0, 11.0);
        // Station 1 is 1600 ms old, station 2 is 1400 ms old.
        let results = ldm.query(&center, 1600.0, DEFAULT_LDM_MAX_AGE_MS);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].entry.station_id, 2);
        let removed = ldm.gc(1600.0, DEFAULT_LDM_MAX_AGE_MS);
        assert_eq!(removed, vec![1]);
        assert_eq!(ldm.len(), 1);
        // Idempotent: nothing further to remove.
        assert!(ldm.gc(1600.0, DEFAULT_LDM_MAX_AGE_MS).is_empty());
        assert_eq!(ldm.len(), 1);
    }

    proptest! {
        #[test]
        fn haversine_matches_vector_geodesic_below_1km(
            lat in -60.0f64..60.0,
            lon in -170.0f64..170.0,
            dlat in -0.008f64..0.008,
            dlon in -0.008f64..0.008,
        ) {
            let a = GeoPoint::new(lat, lon);
            let b = GeoPoint::new(lat + dlat, lon + dlon);
            let h = haversine_m(&a, &b);
            let oracle = vector_geodesic_m(&a, &b);
            prop_assert!(oracle < 1500.0);
            if oracle > 1.0 {
                prop_assert!((h - oracle).abs() / oracle < 0.001, "h={h} oracle={oracle}");
            } else {
                prop_assert!((h - oracle).abs() < 0.001);
            }
        }

        #[test]
        fn query_sorted_by_distance_then_station(
            offsets in prop::collection::vec((0u32..50, -500_000i32..500_000, -500_000i32..500_000), 1..20)
        ) {
            let mut ldm = Ldm::new();
            for (i, (id, dlat, dlon)) in offsets.iter().enumerate() {
                ldm.upsert(&msg(*id, i as u16, 440_000_000 + dlat, 110_000_000 + dlon), 0.0);
            }
            let results = ldm.query(&GeoPoint::new(44.0, 11.0), 0.0, 1500.0);
            for pair in results.windows(2) {
                let key_a = (pair[0].distance_m, pair[0].entry.station_id);
                let key_b = (pair[1].distance_m, pair[1].entry.station_id);
                prop_assert!(key_a.0 < key_b.0 || (key_a.0 == key_b.0 && key_a.1 < key_b.1));
            }
            prop_assert!(results.len() <= offsets.len());
        }
    }
}
