use criterion::{criterion_group, criterion_main, Criterion};
use minicar_core::cam::{CamTriggerConfig, CoopAwarenessMsg};
use minicar_core::dcc::DccConfig;
use minicar_core::icw::{IcwConfig, IntersectionZone};
use minicar_core::ldm::Ldm;
use minicar_core::netsim::ChannelConfig;
use minicar_core::positioning::{GeoPoint, ScenarioFrame};
use minicar_core::scenario::{
    FixedPose, PathSpec, ScenarioConfig, SimTimingConfig, Simulation, StationConfig, StationRole,
};
use std::hint::black_box;

fn icw_scenario(duration_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        frame: ScenarioFrame::new(GeoPoint::new(44.0, 11.0), 10.0).unwrap(),
        channel: ChannelConfig { seed: 1, ..Default::default() },
        stations: vec![
            StationConfig {
                id: 1,
                role: StationRole::Mobile,
                path: Some(PathSpec::Oval {
                    length_m: 4.0,
                    width_m: 2.5,
                    corner_radius_m: 1.25,
                    spacing_m: 0.05,
                }),
                pose: None,
                target_speed_mps: Some(1.0),
                lookahead_m: 0.8,
                start_offset_m: 5.4,
                cam_enabled: true,
                dcc_enabled: false,
                pose_noise_sigma_m: 0.0,
            },
            StationConfig {
                id: 2,
                role: StationRole::Stationary,
                path: None,
                pose: Some(FixedPose { x_m: 0.0, y_m: -2.75, heading_deg: 0.0 }),
                target_speed_mps: None,
                lookahead_m: 0.8,
                start_offset_m: 0.0,
                cam_enabled: true,
                dcc_enabled: false,
                pose_noise_sigma_m: 0.0,
            },
        ],
        zone: IntersectionZone { center: [0.0, -12.5], radius_m: 7.5 },
        icw: IcwConfig::default(),
        duration_s,
        sim: SimTimingConfig::default(),
        cam_trigger: CamTriggerConfig::default(),
        dcc: DccConfig::default(),
        ldm_max_age_ms: 1500.0,
        log_kinds: None,
    }
}

fn bench_scenario_run(c: &mut Criterion) {
    let cfg = icw_scenario(5.0);
    c.bench_function("simulation/5s_two_stations", |b| {
        b.iter(|| {
            let mut sim =
                Simulation::new(black_box(cfg.clone()), Box::new(std::io::sink())).unwrap();
            sim.run_to_end().unwrap();
        })
    });
}

fn bench_ldm_query(c: &mut Criterion) {
    let mut ldm = Ldm::new();
    for i in 0..200u32 {
        let msg = CoopAwarenessMsg {
            station_id: i,
            gen_delta_time: i as u16,
            latitude_e7: 440_000_000 + (i as i32) * 1_000,
            longitude_e7: 110_000_000 - (i as i32) * 2_000,
            altitude_cm: None,
            heading_e1: Some(900),
            speed_e2: Some(100),
            drive_direction: minicar_core::cam::DriveDirection::Forward,
            station_type: 5,
        };
        ldm.upsert(&msg, 0.0);
    }
    let center = GeoPoint::new(44.0, 11.0);
    c.bench_function("ldm/query_200_entries", |b| {
        b.iter(|| ldm.query(black_box(&center), 0.0, 1_500.0))
    });
}

criterion_group!(benches, bench_scenario_run, bench_ldm_query);
criterion_main!(benches);
