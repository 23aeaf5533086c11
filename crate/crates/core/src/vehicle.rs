//! Mini-car motion: waypoint paths, pure-pursuit steering toward a
//! lookahead point, and a kinematic bicycle model. All quantities here are
//! physical track meters; scaling to the virtual frame happens in the
//! positioning layer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Time constant of the first-order speed lag, seconds.
pub const SPEED_LAG_TAU_S: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("invalid path: {0}")]
    Path(String),
    #[error("infeasible oval geometry: {0}")]
    Geometry(String),
    #[error("step size {0} s out of range (0, 0.05]")]
    StepSize(f64),
}

/// A polyline trajectory with a precomputed arc-length table.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<[f64; 2]>,
    closed: bool,
    /// cum_len[i] = arc length from points[0] to points[i].
    cum_len: Vec<f64>,
    total_len: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Path {
    pub fn from_points(points: Vec<[f64; 2]>, closed: bool) -> Result<Self, VehicleError> {
        if closed && points.len() < 3 {
            return Err(VehicleError::Path(format!(
                "closed path needs at least 3 waypoints, got {}",
                points.len()
            )));
        }
        if !closed && points.len() < 2 {
            return Err(VehicleError::Path("open path needs at least 2 waypoints".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VehicleError::Path("non-finite waypoint".into()));
        }
        let mut cum_len = Vec::with_capacity(points.len());
        cum_len.push(0.0);
        for pair in points.windows(2) {
            let d = dist(pair[0], pair[1]);
            if d == 0.0 {
                return Err(VehicleError::Path("consecutive waypoints coincide".into()));
            }
            cum_len.push(cum_len.last().expect("non-empty") + d);
        }
        let mut total_len = *cum_len.last().expect("non-empty");
        if closed {
            let d = dist(*points.last().expect("non-empty"), points[0]);
            if d == 0.0 {
                return Err(VehicleError::Path("closing segment has zero length".into()));
            }
            total_len += d;
        }
        Ok(Self { points, closed, cum_len, total_len })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn total_length(&self) -> f64 {
        self.total_len
    }

    /// Waypoints as a JSON array of [x, y] meters.
    pub fn to_waypoints_json(&self) -> String {
        serde_json::to_string(&self.points).expect("plain numbers")
    }

    pub fn from_waypoints_json(json: &str, closed: bool) -> Result<Self, VehicleError> {
        let points: Vec<[f64; 2]> =
            serde_json::from_str(json).map_err(|e| VehicleError::Path(e.to_string()))?;
        Self::from_points(points, closed)
    }

    fn segment_count(&self) -> usize {
        if self.closed { self.points.len() } else { self.points.len() - 1 }
    }

    fn segment(&self, idx: usize) -> ([f64; 2], [f64; 2], f64) {
        let a = self.points[idx];
        let b = self.points[(idx + 1) % self.points.len()];
        let start = self.cum_len[idx];
        (a, b, start)
    }

    /// Point at the given arc length; wraps on closed paths, clamps on open.
    pub fn point_at_arc(&self, s: f64) -> [f64; 2] {
        let s = if self.closed {
            s.rem_euclid(self.total_len)
        } else {
            s.clamp(0.0, self.total_len)
        };
        for idx in 0..self.segment_count() {
            let (a, b, start) = self.segment(idx);
            let len = dist(a, b);
            if s <= start + len {
                let t = ((s - start) / len).clamp(0.0, 1.0);
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
        }
        *self.points.last().expect("non-empty")
    }

    /// Tangent direction (unit vector) at the given arc length.
    pub fn direction_at_arc(&self, s: f64) -> [f64; 2] {
        let s = if self.closed {
            s.rem_euclid(self.total_len)
        } else {
            s.clamp(0.0, self.total_len)
        };
        for idx in 0..self.segment_count() {
            let (a, b, start) = self.segment(idx);
            let len = dist(a, b);
            if s <= start + len {
                return [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            }
        }
        let (a, b, _) = self.segment(self.segment_count() - 1);
        let len = dist(a, b);
        [(b[0] - a[0]) / len, (b[1] - a[1]) / len]
    }

    /// Closest point on the path: (arc length, distance, point).
    pub fn nearest(&self, p: [f64; 2]) -> (f64, f64, [f64; 2]) {
        let mut best = (0.0, f64::INFINITY, self.points[0]);
        for idx in 0..self.segment_count() {
            let (a, b, start) = self.segment(idx);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = dist(p, q);
            if d < best.1 {
                best = (start + t * len2.sqrt(), d, q);
            }
        }
        best
    }
}

/// Rear-axle pose and speed of the kinematic bicycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicycleState {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, mathematical convention (ccw from +x).
    pub theta: f64,
    /// Longitudinal speed, m/s, >= 0.
    pub v: f64,
    pub wheelbase_m: f64,
}

impl BicycleState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v, wheelbase_m: 0.33 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurePursuitConfig {
    /// Lookahead distance, meters.
    pub lookahead_m: f64,
    pub target_speed_mps: f64,
    /// Steering clamp, radians.
    pub max_steer_rad: f64,
}

impl Default for PurePursuitConfig {
    fn default() -> Self {
        Self { lookahead_m: 0.8, target_speed_mps: 1.0, max_steer_rad: 0.41 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookaheadPoint {
    pub point: [f64; 2],
    /// True when no circle intersection existed and the nearest path point
    /// was returned instead.
    pub fallback: bool,
}

/// First intersection of the circle (rear axle, radius `ld`) with the path,
/// searched forward along arc length from the nearest path point.
pub fn lookahead_point(path: &Path, state: &BicycleState, ld: f64) -> LookaheadPoint {
    let center = [state.x, state.y];
    let (s0, _, nearest) = path.nearest(center);
    let nseg = path.segment_count();
    let mut seg_idx = path.cum_len.partition_point(|&v| v <= s0).saturating_sub(1).min(nseg - 1);
    let mut offset = s0 - path.cum_len[seg_idx];

    // Walk one partial piece plus at most a full loop of segments.
    for visited in 0..=nseg {
        let (a, b, _) = path.segment(seg_idx);
        let seg_len = dist(a, b);
        let off = offset.clamp(0.0, seg_len);
        let dir = [(b[0] - a[0]) / seg_len, (b[1] - a[1]) / seg_len];
        let p = [a[0] + off * dir[0], a[1] + off * dir[1]];
        let remaining = seg_len - off;

        if remaining > 0.0 {
            // Solve |p + t*dir - center| = ld for t in [0, remaining],
            // earliest crossing first.
            let rel = [p[0] - center[0], p[1] - center[1]];
            let b_coef = 2.0 * (rel[0] * dir[0] + rel[1] * dir[1]);
            let c_coef = rel[0] * rel[0] + rel[1] * rel[1] - ld * ld;
            let disc = b_coef * b_coef - 4.0 * c_coef;
            if disc >= 0.0 {
                let sqrt_d = disc.sqrt();
                for t in [(-b_coef - sqrt_d) / 2.0, (-b_coef + sqrt_d) / 2.0] {
                    // Skip the degenerate self-intersection at the walk start.
                    let t_min = if visited == 0 { 1e-9 } else { 0.0 };
                    if t >= t_min && t <= remaining + 1e-12 {
                        return LookaheadPoint {
                            point: [p[0] + t * dir[0], p[1] + t * dir[1]],
                            fallback: false,
                        };
                    }
                }
            }
        }

        if !path.is_closed() && seg_idx + 1 == nseg {
            break;
        }
        seg_idx = (seg_idx + 1) % nseg;
        offset = 0.0;
    }

    LookaheadPoint { point: nearest, fallback: true }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerCommand {
    pub angle_rad: f64,
    /// True when the target coincided with the rear axle.
    pub degenerate: bool,
}

/// Classical pure pursuit: curvature 2*y_v/d^2 toward the target in the
/// vehicle frame, converted to a front-wheel angle and clamped.
pub fn pure_pursuit_steer(
    state: &BicycleState,
    target: [f64; 2],
    config: &PurePursuitConfig,
) -> SteerCommand {
    let dx = target[0] - state.x;
    let dy = target[1] - state.y;
    let d2 = dx * dx + dy * dy;
    if d2 == 0.0 {
        return SteerCommand { angle_rad: 0.0, degenerate: true };
    }
    // Lateral offset in the vehicle frame (left positive).
    let y_v = -state.theta.sin() * dx + state.theta.cos() * dy;
    let curvature = 2.0 * y_v / d2;
    let angle = (state.wheelbase_m * curvature).atan();
    SteerCommand {
        angle_rad: angle.clamp(-config.max_steer_rad, config.max_steer_rad),
        degenerate: false,
    }
}

/// One Euler step of the kinematic bicycle. Speed relaxes toward
/// `target_speed_mps` with a first-order lag ([`SPEED_LAG_TAU_S`]).
pub fn bicycle_step(
    state: &BicycleState,
    steer_rad: f64,
    target_speed_mps: f64,
    dt_s: f64,
) -> Result<BicycleState, VehicleError> {
    if !(dt_s > 0.0 && dt_s <= 0.05) {
        return Err(VehicleError::StepSize(dt_s));
    }
    let lag = 1.0 - (-dt_s / SPEED_LAG_TAU_S).exp();
    Ok(BicycleState {
        x: state.x + state.v * state.theta.cos() * dt_s,
        y: state.y + state.v * state.theta.sin() * dt_s,
        theta: state.theta + state.v / state.wheelbase_m * steer_rad.tan() * dt_s,
        v: (state.v + (target_speed_mps - state.v) * lag).max(0.0),
        wheelbase_m: state.wheelbase_m,
    })
}

/// Closed stadium-shaped loop: a `length_m` x `width_m` rounded rectangle
/// with the given corner radius, waypoints every `spacing_m`, centered on
/// the local origin, counterclockwise, starting on the bottom straight.
pub fn build_oval(
    length_m: f64,
    width_m: f64,
    corner_radius_m: f64,
    spacing_m: f64,
) -> Result<Path, VehicleError> {
    if !(length_m > 0.0 && width_m > 0.0 && corner_radius_m > 0.0 && spacing_m > 0.0) {
        return Err(VehicleError::Geometry("all dimensions must be positive".into()));
    }
    if corner_radius_m > width_m / 2.0 + 1e-12 {
        return Err(VehicleError::Geometry(format!(
            "corner radius {corner_radius_m} exceeds half the width {}",
            width_m / 2.0
        )));
    }
    if corner_radius_m > length_m / 2.0 + 1e-12 {
        return Err(VehicleError::Geometry(format!(
            "corner radius {corner_radius_m} exceeds half the length {}",
            length_m / 2.0
        )));
    }
    let r = corner_radius_m;
    let hx = length_m / 2.0 - r; // straight half-extent, x
    let hy = width_m / 2.0 - r; // straight half-extent, y
    let straight_x = 2.0 * hx;
    let straight_y = 2.0 * hy;
    let quarter = std::f64::consts::FRAC_PI_2 * r;
    let perimeter = 2.0 * straight_x + 2.0 * straight_y + 4.0 * quarter;
    if spacing_m >= perimeter / 3.0 {
        return Err(VehicleError::Geometry(format!(
            "spacing {spacing_m} too coarse for perimeter {perimeter}"
        )));
    }

    // Arc-length parameterization, counterclockwise from (-hx, -width/2).
    let point_at = |s: f64| -> [f64; 2] {
        let mut s = s.rem_euclid(perimeter);
        // Bottom straight.
        if s < straight_x {
            return [-hx + s, -width_m / 2.0];
        }
        s -= straight_x;
        if s < quarter {
            let ang = -std::f64::consts::FRAC_PI_2 + s / r;
            return [hx + r * ang.cos(), -hy + r * ang.sin()];
        }
        s -= quarter;
        if s < straight_y {
            return [length_m / 2.0, -hy + s];
        }
        s -= straight_y;
        if s < quarter {
            let ang = s / r;
            return [hx + r * ang.cos(), hy + r * ang.sin()];
        }
        s -= quarter;
        if s < straight_x {
            return [hx - s, width_m / 2.0];
        }
        s -= straight_x;
        if s < quarter {
            let ang = std::f64::consts::FRAC_PI_2 + s / r;
            return [-hx + r * ang.cos(), hy + r * ang.sin()];
        }
        s -= quarter;
        if s < straight_y {
            return [-length_m / 2.0, hy - s];
        }
        s -= straight_y;
        let ang = std::f64::consts::PI + s / r;
        [-hx + r * ang.cos(), -hy + r * ang.sin()]
    };

    let n = (perimeter / spacing_m).round().max(3.0) as usize;
    let step = perimeter / n as f64;
    let points: Vec<[f64; 2]> = (0..n).map(|i| point_at(i as f64 * step)).collect();
    Path::from_points(points, true)
}

/// A mini-car following its path: pure pursuit + bicycle kinematics.
#[derive(Debug, Clone)]
pub struct VehicleSim {
    pub path: Path,
    pub state: BicycleState,
    pub config: PurePursuitConfig,
    /// Set when the last lookahead had to fall back to the nearest point.
    pub off_path: bool,
}

impl VehicleSim {
    /// Place the car on the path at `start_offset_m` of arc length, heading
    /// along the tangent, already at target speed.
    pub fn new(path: Path, config: PurePursuitConfig, start_offset_m: f64) -> Self {
        let p = path.point_at_arc(start_offset_m);
        let d = path.direction_at_arc(start_offset_m);
        let state =
            BicycleState::new(p[0], p[1], d[1].atan2(d[0]), config.target_speed_mps);
        Self { path, state, config, off_path: false }
    }

    pub fn step(&mut self, dt_s: f64) -> Result<(), VehicleError> {
        let look = lookahead_point(&self.path, &self.state, self.config.lookahead_m);
        self.off_path = look.fallback;
        let steer = pure_pursuit_steer(&self.state, look.point, &self.config);
        self.state =
            bicycle_step(&self.state, steer.angle_rad, self.config.target_speed_mps, dt_s)?;
        Ok(())
    }

    /// Cross-track error: distance from the rear axle to the path.
    pub fn cross_track_error(&self) -> f64 {
        self.path.nearest([self.state.x, self.state.y]).1
    }
}
