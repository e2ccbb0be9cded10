//! Trajectory CSV ingestion and export.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_domain, TrajectoryPoint, TrajectorySet, VehicleTrajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TimeUnit {
    #[default]
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "ms")]
    Milliseconds,
    #[serde(rename = "min")]
    Minutes,
}

impl TimeUnit {
    fn to_seconds(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Milliseconds => 1e-3,
            TimeUnit::Minutes => 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PositionUnit {
    #[default]
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "ft")]
    Feet,
    #[serde(rename = "km")]
    Kilometers,
}

impl PositionUnit {
    fn to_meters(self) -> f64 {
        match self {
            PositionUnit::Meters => 1.0,
            PositionUnit::Feet => 0.3048,
            PositionUnit::Kilometers => 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[default]
    #[serde(rename = "kmh")]
    KilometersPerHour,
    #[serde(rename = "mps")]
    MetersPerSecond,
    #[serde(rename = "fps")]
    FeetPerSecond,
    #[serde(rename = "mph")]
    MilesPerHour,
}

impl SpeedUnit {
    fn to_kmh(self) -> f64 {
        match self {
            SpeedUnit::KilometersPerHour => 1.0,
            SpeedUnit::MetersPerSecond => 3.6,
            SpeedUnit::FeetPerSecond => 0.3048 * 3.6,
            SpeedUnit::MilesPerHour => 1.609_344,
        }
    }
}

/// Header names of the four required columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub vehicle_id: String,
    pub time: String,
    pub position: String,
    pub speed: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            vehicle_id: "vehicle_id".into(),
            time: "time".into(),
            position: "position".into(),
            speed: "speed".into(),
        }
    }
}

/// Keep only rows whose `column` equals `equals` (after trimming), e.g. a
/// lane id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowFilter {
    pub column: String,
    pub equals: String,
}

/// How to read a trajectory file: column names, units, and the origin of the
/// study window. Origins are in canonical units and subtracted after unit
/// conversion.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatSpec {
    pub columns: ColumnMapping,
    pub time_unit: TimeUnit,
    pub position_unit: PositionUnit,
    pub speed_unit: SpeedUnit,
    pub time_origin_s: f64,
    pub position_origin_m: f64,
    pub filter: Option<RowFilter>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub trajectories: TrajectorySet,
    pub rows_read: usize,
    pub rows_filtered: usize,
    pub rows_out_of_domain: usize,
    /// Rows repeating an earlier timestamp of the same vehicle.
    pub rows_duplicate: usize,
}

/// Reads a trajectory CSV, converts to canonical units, and drops rows
/// outside `[0, S] x [0, W]`.
pub fn load_trajectories(path: &Path, format: &FormatSpec, segment_length_m: f64, window_length_s: f64) -> Result<LoadOutcome> {
    check_domain(segment_length_m, window_length_s)?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories(file, path, format, segment_length_m, window_length_s)
}

pub(crate) fn read_trajectories<R: std::io::Read>(
    reader: R,
    path: &Path,
    format: &FormatSpec,
    segment_length_m: f64,
    window_length_s: f64,
) -> Result<LoadOutcome> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let c = &format.columns;
    let (id_col, t_col, s_col, v_col) = (column(&c.vehicle_id)?, column(&c.time)?, column(&c.position)?, column(&c.speed)?);
    let filter = match &format.filter {
        Some(f) => Some((column(&f.column)?, f.equals.trim().to_owned())),
        None => None,
    };

    let t_scale = format.time_unit.to_seconds();
    let s_scale = format.position_unit.to_meters();
    let v_scale = format.speed_unit.to_kmh();

    let mut order: Vec<VehicleTrajectory> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let (mut rows_read, mut rows_filtered, mut rows_out_of_domain) = (0, 0, 0);
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        rows_read += 1;
        let line = record.position().map_or(0, |p| p.line());
        if let Some((col, want)) = &filter {
            if record.get(*col) != Some(want.as_str()) {
                rows_filtered += 1;
                continue;
            }
        }
        let number = |col: usize, what: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line, format!("{what} field `{raw}` is not a finite number")))
        };
        let time_s = number(t_col, "time")? * t_scale - format.time_origin_s;
        let position_m = number(s_col, "position")? * s_scale - format.position_origin_m;
        let speed_kmh = number(v_col, "speed")? * v_scale;
        if speed_kmh < 0.0 {
            return Err(parse_err(line, format!("negative speed {speed_kmh} km/h")));
        }
        if !(0.0..=window_length_s).contains(&time_s) || !(0.0..=segment_length_m).contains(&position_m) {
            rows_out_of_domain += 1;
            continue;
        }
        let id = record.get(id_col).unwrap_or("");
        let slot = *index.entry(id.to_owned()).or_insert_with(|| {
            order.push(VehicleTrajectory {
                vehicle_id: id.to_owned(),
                points: Vec::new(),
            });
            order.len() - 1
        });
        order[slot].points.push(TrajectoryPoint {
            time_s,
            position_m,
            speed_kmh,
        });
    }

    let mut rows_duplicate = 0;
    for v in &mut order {
        v.points.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        let before = v.points.len();
        v.points.dedup_by(|b, a| a.time_s == b.time_s);
        rows_duplicate += before - v.points.len();
    }
    if order.iter().all(|v| v.points.is_empty()) {
        return Err(Error::EmptyDataset(PathBuf::from(path)));
    }
    let trajectories = TrajectorySet::new(segment_length_m, window_length_s, order)?;
    Ok(LoadOutcome {
        trajectories,
        rows_read,
        rows_filtered,
        rows_out_of_domain,
        rows_duplicate,
    })
}

/// Writes the canonical trajectory CSV (`vehicle_id,time,position,speed`,
/// m / s / km/h, six decimals).
pub fn write_trajectories<W: Write>(writer: W, ts: &TrajectorySet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["vehicle_id", "time", "position", "speed"])?;
    for v in ts.vehicles() {
        for p in &v.points {
            w.write_record([
                v.vehicle_id.as_str(),
                &format!("{:.6}", p.time_s),
                &format!("{:.6}", p.position_m),
                &format!("{:.6}", p.speed_kmh),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<trajectory writer>", e))?;
    Ok(())
}
