//! Vehicle-trajectory observations in canonical units (m, s, km/h).

mod io;
mod synthetic;

pub use io::{load_trajectories, write_trajectories, ColumnMapping, FormatSpec, LoadOutcome, PositionUnit, SpeedUnit, TimeUnit};
pub use synthetic::{generate_synthetic, GroundTruthField, SyntheticFieldSpec};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// One speed sample of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Seconds from the window start.
    pub time_s: f64,
    /// Meters from the upstream end of the segment.
    pub position_m: f64,
    pub speed_kmh: f64,
}

/// The samples of one vehicle, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrajectory {
    pub vehicle_id: String,
    pub points: Vec<TrajectoryPoint>,
}

/// Trajectories observed on a segment of length `segment_length_m` during a
/// window of `window_length_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    segment_length_m: f64,
    window_length_s: f64,
    vehicles: Vec<VehicleTrajectory>,
}

impl TrajectorySet {
    /// Builds a set, checking every point against the domain and the
    /// per-vehicle time ordering.
    pub fn new(segment_length_m: f64, window_length_s: f64, vehicles: Vec<VehicleTrajectory>) -> Result<Self> {
        check_domain(segment_length_m, window_length_s)?;
        for v in &vehicles {
            for (i, p) in v.points.iter().enumerate() {
                if !(0.0..=window_length_s).contains(&p.time_s) {
                    return Err(Error::param("time_s", format!("vehicle {}: {} outside [0, {window_length_s}]", v.vehicle_id, p.time_s)));
                }
                if !(0.0..=segment_length_m).contains(&p.position_m) {
                    return Err(Error::param(
                        "position_m",
                        format!("vehicle {}: {} outside [0, {segment_length_m}]", v.vehicle_id, p.position_m),
                    ));
                }
                if !(p.speed_kmh.is_finite() && p.speed_kmh >= 0.0) {
                    return Err(Error::param("speed_kmh", format!("vehicle {}: {} is not a nonnegative speed", v.vehicle_id, p.speed_kmh)));
                }
                if i > 0 && v.points[i - 1].time_s >= p.time_s {
                    return Err(Error::param("time_s", format!("vehicle {}: times not strictly increasing at sample {i}", v.vehicle_id)));
                }
            }
        }
        Ok(TrajectorySet {
            segment_length_m,
            window_length_s,
            vehicles,
        })
    }

    pub fn empty(segment_length_m: f64, window_length_s: f64) -> Result<Self> {
        Self::new(segment_length_m, window_length_s, Vec::new())
    }

    pub fn segment_length_m(&self) -> f64 {
        self.segment_length_m
    }

    pub fn window_length_s(&self) -> f64 {
        self.window_length_s
    }

    pub fn vehicles(&self) -> &[VehicleTrajectory] {
        &self.vehicles
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn point_count(&self) -> usize {
        self.vehicles.iter().map(|v| v.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.point_count() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = &TrajectoryPoint> + '_ {
        self.vehicles.iter().flat_map(|v| v.points.iter())
    }
}

fn check_domain(segment_length_m: f64, window_length_s: f64) -> Result<()> {
    if !(segment_length_m.is_finite() && segment_length_m > 0.0) {
        return Err(Error::param("segment_length_m", format!("must be positive, got {segment_length_m}")));
    }
    if !(window_length_s.is_finite() && window_length_s > 0.0) {
        return Err(Error::param("window_length_s", format!("must be positive, got {window_length_s}")));
    }
    Ok(())
}

/// Keeps `round(rate * n_vehicles)` whole trajectories, drawn uniformly
/// without replacement (at least one when the set is non-empty).
///
/// Retained vehicles keep their original relative order, so `rate = 1.0`
/// returns the input unchanged.
pub fn sample_penetration(ts: &TrajectorySet, rate: f64, seed: u64) -> Result<TrajectorySet> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::param("rate", format!("penetration rate must lie in (0, 1], got {rate}")));
    }
    let n = ts.vehicles.len();
    if n == 0 {
        return Err(Error::param("trajectories", "cannot sample from an empty trajectory set"));
    }
    let keep = ((rate * n as f64).round() as usize).clamp(1, n);
    let mut picked = index::sample(&mut seed::rng(seed), n, keep).into_vec();
    picked.sort_unstable();
    Ok(TrajectorySet {
        segment_length_m: ts.segment_length_m,
        window_length_s: ts.window_length_s,
        vehicles: picked.into_iter().map(|i| ts.vehicles[i].clone()).collect(),
    })
}
