//! Desk-scale cooperative-vehicle stack: CAM messaging over a simulated
//! broadcast channel, GeoNetworking/BTP framing, a local dynamic map,
//! reactive congestion control, NMEA/UBX positioning, pure-pursuit mini-car
//! kinematics and an intersection collision warning application, all driven
//! by a deterministic discrete-event simulator.

pub mod api;
pub mod cam;
pub mod dcc;
pub mod geonet;
pub mod icw;
pub mod ldm;
pub mod netsim;
pub mod positioning;
pub mod scenario;
pub mod vehicle;

pub use cam::{CamGenerationState, CamTriggerConfig, CoopAwarenessMsg, TriggerDecision};
pub use dcc::{DccConfig, DccState, DccTable};
pub use geonet::GnShbFrame;
pub use icw::{IcwConfig, IntersectionZone, WarningEvent};
pub use ldm::{Ldm, LdmEntry, LdmQueryResult};
pub use netsim::{Channel, ChannelConfig, EventQueue};
pub use positioning::{GeoPoint, LocalPose, PvtFix, ScenarioFrame};
pub use scenario::{EventLogRecord, RunSummary, ScenarioConfig};
pub use vehicle::{BicycleState, Path, PurePursuitConfig};
