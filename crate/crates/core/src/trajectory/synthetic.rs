//! Closed-form two-phase speed fields with backward-propagating jam bands,
//! and vehicles driven through them. Used as ground truth for testing.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_domain, TrajectoryPoint, TrajectorySet, VehicleTrajectory};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFieldSpec {
    pub free_flow_speed_kmh: f64,
    pub jam_speed_kmh: f64,
    /// Backward-wave speed, negative.
    pub wave_speed_kmh: f64,
    pub wave_band_count: usize,
    /// Band duration measured at a fixed position.
    pub wave_band_width_s: f64,
    /// Start-to-start distance of consecutive bands, in seconds at a fixed
    /// position.
    pub wave_spacing_s: f64,
    /// Skewed time at which the first band starts; `None` means one spacing.
    pub first_band_start_s: Option<f64>,
    /// Length of the deceleration and acceleration ramps around each band,
    /// in skewed time. Ramps are staircases with one level per second.
    pub transition_s: f64,
    pub noise_std_kmh: f64,
    /// Time between consecutive samples of one vehicle.
    pub sample_interval_s: f64,
    pub seed: u64,
}

impl Default for SyntheticFieldSpec {
    fn default() -> Self {
        SyntheticFieldSpec {
            free_flow_speed_kmh: 60.0,
            jam_speed_kmh: 3.0,
            wave_speed_kmh: -18.0,
            wave_band_count: 2,
            wave_band_width_s: 60.0,
            wave_spacing_s: 310.0,
            first_band_start_s: Some(130.0),
            transition_s: 120.0,
            noise_std_kmh: 2.0,
            sample_interval_s: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticFieldSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.free_flow_speed_kmh,
            self.jam_speed_kmh,
            self.wave_speed_kmh,
            self.wave_band_width_s,
            self.wave_spacing_s,
            self.noise_std_kmh,
            self.sample_interval_s,
            self.transition_s,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::param("synthetic", "all parameters must be finite"));
        }
        if self.wave_speed_kmh >= 0.0 {
            return Err(Error::param("wave_speed_kmh", "backward waves need a negative speed"));
        }
        if !(self.jam_speed_kmh >= 0.0 && self.jam_speed_kmh < self.free_flow_speed_kmh) {
            return Err(Error::param("jam_speed_kmh", "need 0 <= jam speed < free-flow speed"));
        }
        if self.noise_std_kmh < 0.0 {
            return Err(Error::param("noise_std_kmh", "must be nonnegative"));
        }
        if self.sample_interval_s <= 0.0 {
            return Err(Error::param("sample_interval_s", "must be positive"));
        }
        if self.wave_band_count > 0 && self.wave_band_width_s <= 0.0 {
            return Err(Error::param("wave_band_width_s", "must be positive"));
        }
        if self.transition_s < 0.0 {
            return Err(Error::param("transition_s", "must be nonnegative"));
        }
        if self.wave_band_count > 1 && self.wave_band_width_s + 2.0 * self.transition_s >= self.wave_spacing_s {
            return Err(Error::param("wave_spacing_s", "bands overlap: width plus ramps must be smaller than spacing"));
        }
        Ok(())
    }
}

/// The exact speed field behind a synthetic data set.
///
/// Speeds depend on the skewed time `u = t + s * 3.6 / |v|`, constant along
/// backward-wave lines. Jam bands are half-open intervals `[start, end)` in
/// `u`, optionally flanked by ramps of `transition_s` on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthField {
    pub free_flow_speed_kmh: f64,
    pub jam_speed_kmh: f64,
    pub wave_speed_kmh: f64,
    pub segment_length_m: f64,
    pub window_length_s: f64,
    pub bands: Vec<(f64, f64)>,
    #[serde(default)]
    pub transition_s: f64,
}

/// Piecewise-constant speed profile over skewed time: sorted segment starts
/// and their speeds. Free flow before the first start.
struct Profile(Vec<(f64, f64)>);

impl Profile {
    fn speed(&self, free_flow: f64, u: f64) -> f64 {
        let i = self.0.partition_point(|&(start, _)| start <= u);
        if i == 0 {
            free_flow
        } else {
            self.0[i - 1].1
        }
    }

    fn next_edge(&self, u: f64) -> Option<f64> {
        let i = self.0.partition_point(|&(start, _)| start <= u);
        self.0.get(i).map(|&(start, _)| start)
    }
}

impl GroundTruthField {
    /// Seconds of skew per meter (`|tan theta|`).
    pub fn skew_s_per_m(&self) -> f64 {
        3.6 / self.wave_speed_kmh.abs()
    }

    pub fn skewed_time(&self, position_m: f64, time_s: f64) -> f64 {
        time_s + position_m * self.skew_s_per_m()
    }

    fn profile(&self) -> Profile {
        let (vf, vj) = (self.free_flow_speed_kmh, self.jam_speed_kmh);
        let steps = self.transition_s.ceil() as usize;
        let h = if steps > 0 { self.transition_s / steps as f64 } else { 0.0 };
        let level = |i: usize| (i + 1) as f64 / (steps + 1) as f64;
        let mut out = Vec::new();
        for &(a, b) in &self.bands {
            for i in 0..steps {
                out.push((a - self.transition_s + i as f64 * h, vf + (vj - vf) * level(i)));
            }
            out.push((a, vj));
            for i in 0..steps {
                out.push((b + i as f64 * h, vj + (vf - vj) * level(i)));
            }
            out.push((b + self.transition_s, vf));
        }
        Profile(out)
    }

    pub fn speed_at(&self, position_m: f64, time_s: f64) -> f64 {
        self.profile().speed(self.free_flow_speed_kmh, self.skewed_time(position_m, time_s))
    }
}

fn quantize(x: f64) -> f64 {
    // Six-decimal values survive the CSV exporter unchanged.
    format!("{x:.6}").parse().expect("formatted float parses")
}

/// Drives `vehicle_count` vehicles through the closed-form field and samples
/// each one every `sample_interval_s` seconds inside the window.
///
/// Entries at the upstream end are spaced by `entry_headway_s * U(0.5, 1.5)`
/// starting one free-flow traversal before `t = 0`, so the segment is
/// populated from the first second. Speeds carry Gaussian noise truncated to
/// `±4 sigma` and clamped at zero.
pub fn generate_synthetic(
    spec: &SyntheticFieldSpec,
    segment_length_m: f64,
    window_length_s: f64,
    vehicle_count: usize,
    entry_headway_s: f64,
) -> Result<(TrajectorySet, GroundTruthField)> {
    spec.validate()?;
    check_domain(segment_length_m, window_length_s)?;
    if vehicle_count == 0 {
        return Err(Error::param("vehicle_count", "must be at least 1"));
    }
    if !(entry_headway_s.is_finite() && entry_headway_s > 0.0) {
        return Err(Error::param("entry_headway_s", "must be positive"));
    }

    let skew = 3.6 / spec.wave_speed_kmh.abs();
    let u_max = window_length_s + segment_length_m * skew;
    let first = spec.first_band_start_s.unwrap_or(spec.wave_spacing_s);
    let bands: Vec<(f64, f64)> = (0..spec.wave_band_count)
        .map(|k| {
            let a = first + k as f64 * spec.wave_spacing_s;
            (a, a + spec.wave_band_width_s)
        })
        .collect();
    if let Some(&(_, b)) = bands.last() {
        let (lo, hi) = (bands[0].0 - spec.transition_s, b + spec.transition_s);
        if lo < 0.0 || hi > u_max {
            return Err(Error::param(
                "wave_band_count",
                format!("bands span skewed time [{lo}, {hi}] beyond the domain [0, {u_max}]"),
            ));
        }
    }
    let field = GroundTruthField {
        free_flow_speed_kmh: spec.free_flow_speed_kmh,
        jam_speed_kmh: spec.jam_speed_kmh,
        wave_speed_kmh: spec.wave_speed_kmh,
        segment_length_m,
        window_length_s,
        bands,
        transition_s: spec.transition_s,
    };
    let profile = field.profile();

    let mut rng = seed::rng(spec.seed);
    let noise = if spec.noise_std_kmh > 0.0 {
        Some(Normal::new(0.0, spec.noise_std_kmh).map_err(|e| Error::param("noise_std_kmh", e.to_string()))?)
    } else {
        None
    };
    let clip = 4.0 * spec.noise_std_kmh;

    let mut entry = -segment_length_m / (spec.free_flow_speed_kmh / 3.6);
    let mut vehicles = Vec::new();
    for j in 0..vehicle_count {
        if j > 0 {
            entry += entry_headway_s * rng.random_range(0.5..1.5);
        }
        let mut points = Vec::new();
        for (time_s, position_m, true_kmh) in drive(&field, &profile, entry, spec.sample_interval_s) {
            let jitter = noise.map_or(0.0, |n| n.sample(&mut rng).clamp(-clip, clip));
            points.push(TrajectoryPoint {
                time_s: quantize(time_s),
                position_m: quantize(position_m).min(segment_length_m),
                speed_kmh: quantize((true_kmh + jitter).max(0.0)),
            });
        }
        if !points.is_empty() {
            vehicles.push(VehicleTrajectory {
                vehicle_id: format!("syn{j}"),
                points,
            });
        }
    }
    let set = TrajectorySet::new(segment_length_m, window_length_s, vehicles)?;
    Ok((set, field))
}

/// Exact piecewise-linear trajectory of a vehicle entering at `entry_s`,
/// sampled at multiples of `interval_s` inside `[0, W]` while on the segment.
fn drive(field: &GroundTruthField, profile: &Profile, entry_s: f64, interval_s: f64) -> Vec<(f64, f64, f64)> {
    let (len, window) = (field.segment_length_m, field.window_length_s);
    let skew = field.skew_s_per_m();
    let mut samples = Vec::new();
    let (mut t, mut x) = (entry_s, 0.0_f64);
    // Sample times are k * interval_s, indexed by k to avoid drift.
    let mut k = (entry_s / interval_s).ceil().max(0.0);
    // Carried explicitly so that a step onto an edge lands exactly on it.
    let mut u = field.skewed_time(x, t);
    while x < len && t <= window {
        let kmh = profile.speed(field.free_flow_speed_kmh, u);
        let ms = kmh / 3.6;
        // Along a trajectory du/dt = 1 + skew * v > 0, so edges are crossed
        // in order and each phase ends at a computable time.
        let edge = profile.next_edge(u);
        let to_edge = edge.map_or(f64::INFINITY, |e| (e - u) / (1.0 + skew * ms));
        let to_exit = if ms > 0.0 { (len - x) / ms } else { f64::INFINITY };
        let step = to_edge.min(to_exit);
        let t_end = t + step;
        loop {
            let ts = k * interval_s;
            if !(ts <= window && (ts < t_end || (step == to_exit && ts <= t_end))) {
                break;
            }
            let pos = x + ms * (ts - t);
            if pos <= len {
                samples.push((ts, pos.max(0.0), kmh));
            }
            k += 1.0;
        }
        if !t_end.is_finite() {
            break;
        }
        if step == to_exit {
            break;
        }
        x += ms * step;
        t = t_end;
        u = edge.expect("finite step ends on an edge");
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(bands: usize, noise: f64) -> SyntheticFieldSpec {
        SyntheticFieldSpec {
            wave_band_count: bands,
            noise_std_kmh: noise,
            wave_spacing_s: 150.0,
            first_band_start_s: None,
            transition_s: 0.0,
            sample_interval_s: 1.0,
            ..SyntheticFieldSpec::default()
        }
    }

    #[test]
    fn no_bands_means_free_flow_everywhere() {
        let (ts, field) = generate_synthetic(&spec(0, 0.0), 300.0, 200.0, 30, 5.0).unwrap();
        assert!(field.bands.is_empty());
        assert!(ts.points().all(|p| p.speed_kmh == 60.0));
        // Constant speed: position advances 60/3.6 m per second.
        for v in ts.vehicles() {
            for w in v.points.windows(2) {
                assert!((w[1].position_m - w[0].position_m - 60.0 / 3.6).abs() < 2e-6);
            }
        }
    }

    #[test]
    fn band_edges_follow_the_wave_slope() {
        let (_, field) = generate_synthetic(&spec(1, 0.0), 300.0, 400.0, 5, 5.0).unwrap();
        assert!((field.skew_s_per_m() - 0.2).abs() < 1e-15);
        let (a, _) = field.bands[0];
        // Edge line t = a - 0.2 s: dt/ds = -0.2 s/m.
        for s in [0.0, 50.0, 120.0, 299.0] {
            let t_edge = a - 0.2 * s;
            assert_eq!(field.speed_at(s, t_edge + 1e-6), field.jam_speed_kmh);
            assert_eq!(field.speed_at(s, t_edge - 1e-6), field.free_flow_speed_kmh);
        }
    }

    #[test]
    fn noiseless_samples_are_two_valued() {
        let (ts, _) = generate_synthetic(&spec(1, 0.0), 300.0, 400.0, 60, 4.0).unwrap();
        let mut seen = (false, false);
        for p in ts.points() {
            assert!(p.speed_kmh == 60.0 || p.speed_kmh == 3.0, "{}", p.speed_kmh);
            seen.0 |= p.speed_kmh == 60.0;
            seen.1 |= p.speed_kmh == 3.0;
        }
        assert!(seen.0 && seen.1);
    }

    #[test]
    fn samples_match_the_field_at_their_coordinates() {
        let (ts, field) = generate_synthetic(&spec(3, 0.0), 300.0, 600.0, 150, 4.0).unwrap();
        let mut mismatches = 0;
        for p in ts.points() {
            if field.speed_at(p.position_m, p.time_s) != p.speed_kmh {
                mismatches += 1;
            }
        }
        // Only samples within quantization distance of an edge may disagree.
        assert!(mismatches <= 2, "{mismatches}");
    }

    #[test]
    fn noisy_speeds_stay_within_bounds() {
        let s = spec(4, 5.0);
        let (ts, _) = generate_synthetic(&s, 300.0, 900.0, 300, 3.0).unwrap();
        for p in ts.points() {
            assert!(p.speed_kmh >= 0.0);
            assert!(p.speed_kmh <= s.free_flow_speed_kmh + 4.0 * s.noise_std_kmh + 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&spec(2, 3.0), 300.0, 600.0, 50, 5.0).unwrap();
        let b = generate_synthetic(&spec(2, 3.0), 300.0, 600.0, 50, 5.0).unwrap();
        assert_eq!(a, b);
        let mut other = spec(2, 3.0);
        other.seed = 1;
        assert_ne!(a.0, generate_synthetic(&other, 300.0, 600.0, 50, 5.0).unwrap().0);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut s = spec(2, 0.0);
        s.wave_band_width_s = 200.0;
        assert!(generate_synthetic(&s, 300.0, 600.0, 5, 5.0).is_err());
        let s = spec(50, 0.0);
        assert!(generate_synthetic(&s, 300.0, 600.0, 5, 5.0).is_err());
        let mut s = spec(1, 0.0);
        s.wave_speed_kmh = 10.0;
        assert!(generate_synthetic(&s, 300.0, 600.0, 5, 5.0).is_err());
    }

    #[test]
    fn ramps_step_between_phases() {
        let s = SyntheticFieldSpec {
            transition_s: 4.0,
            first_band_start_s: Some(100.0),
            ..spec(1, 0.0)
        };
        let (ts, field) = generate_synthetic(&s, 300.0, 400.0, 80, 4.0).unwrap();
        // u = t at s = 0: ramp down over [96, 100), jam [100, 160), ramp up [160, 164).
        let at = |u: f64| field.speed_at(0.0, u);
        assert_eq!(at(95.9), 60.0);
        assert_eq!(at(96.0), 60.0 - 57.0 * 0.2);
        assert_eq!(at(99.5), 60.0 - 57.0 * 0.8);
        assert_eq!(at(100.0), 3.0);
        assert_eq!(at(163.5), 3.0 + 57.0 * 0.8);
        assert_eq!(at(164.0), 60.0);
        // Emitted speeds carry six decimals.
        let mismatches = ts.points().filter(|p| (field.speed_at(p.position_m, p.time_s) - p.speed_kmh).abs() > 1e-6).count();
        assert!(mismatches <= 2, "{mismatches}");
        let mut bad = s.clone();
        bad.transition_s = 120.0;
        assert!(generate_synthetic(&bad, 300.0, 400.0, 5, 4.0).is_err());
    }

    #[test]
    fn sample_interval_sets_the_sampling_grid() {
        let s = SyntheticFieldSpec {
            sample_interval_s: 0.5,
            ..spec(1, 0.0)
        };
        let (ts, _) = generate_synthetic(&s, 300.0, 400.0, 10, 5.0).unwrap();
        for p in ts.points() {
            assert_eq!((p.time_s * 2.0).fract(), 0.0);
        }
        let one = generate_synthetic(&spec(1, 0.0), 300.0, 400.0, 10, 5.0).unwrap().0;
        assert!(ts.point_count() > one.point_count() * 19 / 10);
    }

    #[test]
    fn vehicles_stay_in_time_order() {
        let (ts, _) = generate_synthetic(&spec(4, 2.0), 300.0, 900.0, 200, 3.0).unwrap();
        assert!(ts.vehicle_count() > 100);
        for v in ts.vehicles() {
            assert!(v.points.windows(2).all(|w| w[0].time_s < w[1].time_s));
            assert!(v.points.windows(2).all(|w| w[0].position_m <= w[1].position_m));
        }
    }
}
