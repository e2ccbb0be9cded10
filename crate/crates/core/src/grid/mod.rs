//! Spatiotemporal binning of trajectory samples into a traffic-state matrix.
//!
//! Rows index space (`ds_m` bins from the upstream end). Columns index the
//! skewed time `u = t - s * tan_theta`, where `tan_theta = 3.6 / v` for a
//! backward-wave speed `v < 0` (seconds per meter). Along a backward-wave
//! line `t = t0 + s * tan_theta` the skewed time is constant, so states
//! carried by the same wave land in the same column. Without a wave speed
//! `tan_theta = 0` and the grid is the usual rectangular one.
//!
//! The skewed time spans `[0, W + S |tan_theta|]`, which fixes the column
//! count. In intercept form, with `b = S tan_theta` and `s'` the distance from
//! the downstream end, the column is `floor((t - (b - s' tan_theta)) / dt)`.

mod io;

pub use io::{read_matrix, read_matrix_csv, save_matrix, write_matrix_csv, write_pgm, write_sidecar, MatrixKind, MatrixSidecar};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::trajectory::{GroundTruthField, TrajectoryPoint, TrajectorySet};
use crate::{Error, Result};

/// Relative slack used when a floating-point quotient should be an integer.
const COUNT_TOLERANCE: f64 = 1e-9;

fn count_cells(extent: f64, step: f64) -> usize {
    let q = extent / step;
    let r = q.round();
    if (q - r).abs() <= COUNT_TOLERANCE * q.abs().max(1.0) {
        r as usize
    } else {
        q.ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub segment_length_m: f64,
    pub window_length_s: f64,
    pub ds_m: f64,
    pub dt_s: f64,
    /// Backward-wave speed in km/h (negative). `None` gives a rectangular grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave_speed_kmh: Option<f64>,
}

impl GridSpec {
    pub fn new(segment_length_m: f64, window_length_s: f64, ds_m: f64, dt_s: f64, wave_speed_kmh: Option<f64>) -> Result<Self> {
        let g = GridSpec {
            segment_length_m,
            window_length_s,
            ds_m,
            dt_s,
            wave_speed_kmh,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn rectangular(segment_length_m: f64, window_length_s: f64, ds_m: f64, dt_s: f64) -> Result<Self> {
        Self::new(segment_length_m, window_length_s, ds_m, dt_s, None)
    }

    pub fn oblique(segment_length_m: f64, window_length_s: f64, ds_m: f64, dt_s: f64, wave_speed_kmh: f64) -> Result<Self> {
        Self::new(segment_length_m, window_length_s, ds_m, dt_s, Some(wave_speed_kmh))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {x}")))
            }
        };
        positive("segment_length_m", self.segment_length_m)?;
        positive("window_length_s", self.window_length_s)?;
        positive("ds_m", self.ds_m)?;
        positive("dt_s", self.dt_s)?;
        if let Some(v) = self.wave_speed_kmh {
            if !(v.is_finite() && v < 0.0) {
                return Err(Error::param("wave_speed_kmh", format!("must be strictly negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_oblique(&self) -> bool {
        self.wave_speed_kmh.is_some()
    }

    /// Seconds per meter along the wave line; negative for oblique grids,
    /// zero for rectangular ones.
    pub fn tan_theta(&self) -> f64 {
        self.wave_speed_kmh.map_or(0.0, |v| 3.6 / v)
    }

    /// `b = S * tan_theta`.
    pub fn intercept(&self) -> f64 {
        self.segment_length_m * self.tan_theta()
    }

    pub fn rows(&self) -> usize {
        count_cells(self.segment_length_m, self.ds_m)
    }

    pub fn cols(&self) -> usize {
        count_cells(self.window_length_s + self.intercept().abs(), self.dt_s)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    /// The same domain and resolution without the skew.
    pub fn to_rectangular(&self) -> GridSpec {
        GridSpec {
            wave_speed_kmh: None,
            ..*self
        }
    }

    pub fn with_wave_speed(&self, wave_speed_kmh: Option<f64>) -> Result<GridSpec> {
        let g = GridSpec { wave_speed_kmh, ..*self };
        g.validate()?;
        Ok(g)
    }

    pub fn same_domain(&self, segment_length_m: f64, window_length_s: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= COUNT_TOLERANCE * a.abs().max(b.abs()).max(1.0);
        close(self.segment_length_m, segment_length_m) && close(self.window_length_s, window_length_s)
    }

    pub fn skewed_time(&self, position_m: f64, time_s: f64) -> f64 {
        time_s - position_m * self.tan_theta()
    }

    /// Cell containing `(position_m, time_s)`; the closed upper edges of the
    /// domain belong to the last row/column.
    pub fn index_of(&self, position_m: f64, time_s: f64) -> (usize, usize) {
        let (rows, cols) = self.shape();
        let row = (position_m / self.ds_m).floor().max(0.0) as usize;
        let col = (self.skewed_time(position_m, time_s) / self.dt_s).floor().max(0.0) as usize;
        (row.min(rows - 1), col.min(cols - 1))
    }

    fn row_extent(&self, row: usize) -> (f64, f64) {
        let lo = row as f64 * self.ds_m;
        (lo, ((row + 1) as f64 * self.ds_m).min(self.segment_length_m))
    }

    /// Physical centre of a cell (the centroid of its parallelogram).
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (lo, hi) = self.row_extent(row);
        let s = 0.5 * (lo + hi);
        let u = (col as f64 + 0.5) * self.dt_s;
        (s, u + s * self.tan_theta())
    }

    /// Whether any part of the cell's footprint lies inside `[0, W]`.
    pub fn in_domain(&self, row: usize, col: usize) -> bool {
        let (lo, hi) = self.row_extent(row);
        let k = self.tan_theta();
        let (shift_min, shift_max) = if k <= 0.0 { (hi * k, lo * k) } else { (lo * k, hi * k) };
        let t_lo = col as f64 * self.dt_s + shift_min;
        let t_hi = (col + 1) as f64 * self.dt_s + shift_max;
        t_hi >= 0.0 && t_lo <= self.window_length_s
    }
}

/// Row/column of the cell an observation falls into.
pub fn cell_index(p: &TrajectoryPoint, g: &GridSpec) -> (usize, usize) {
    g.index_of(p.position_m, p.time_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Observed,
    Missing,
    OutOfDomain,
}

fn domain_mask(g: &GridSpec) -> Array2<CellState> {
    Array2::from_shape_fn(g.shape(), |(l, c)| {
        if g.in_domain(l, c) {
            CellState::Missing
        } else {
            CellState::OutOfDomain
        }
    })
}

/// Elementwise equality that treats `NaN` cells as equal.
fn same_values(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    a.dim() == b.dim() && a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
}

/// Anything laid out on a grid with a value per cell.
pub trait GridValues {
    fn grid(&self) -> &GridSpec;
    fn values(&self) -> &Array2<f64>;
    fn mask(&self) -> &Array2<CellState>;
}

/// Per-cell mean speeds with their observation mask. Non-observed cells hold
/// `NaN`.
#[derive(Debug, Clone)]
pub struct StateMatrix {
    values: Array2<f64>,
    mask: Array2<CellState>,
    counts: Array2<u32>,
    grid: GridSpec,
}

impl StateMatrix {
    /// An all-missing matrix.
    pub fn empty(grid: GridSpec) -> Self {
        let shape = grid.shape();
        StateMatrix {
            values: Array2::from_elem(shape, f64::NAN),
            mask: domain_mask(&grid),
            counts: Array2::zeros(shape),
            grid,
        }
    }

    /// A matrix from dense values and an observation pattern, each observed
    /// cell counting as one sample.
    pub fn from_observations(grid: GridSpec, values: &Array2<f64>, observed: &Array2<bool>) -> Result<Self> {
        grid.validate()?;
        let shape = grid.shape();
        if values.dim() != shape || observed.dim() != shape {
            return Err(Error::param("values", format!("expected shape {shape:?}, got {:?} / {:?}", values.dim(), observed.dim())));
        }
        let mut m = StateMatrix::empty(grid);
        for ((idx, &obs), &v) in observed.indexed_iter().zip(values.iter()) {
            if !obs {
                continue;
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param("values", format!("observed cell {idx:?} holds {v}, need a finite speed >= 0")));
            }
            m.values[idx] = v;
            m.counts[idx] = 1;
            m.mask[idx] = CellState::Observed;
        }
        Ok(m)
    }

    pub(crate) fn from_parts(values: Array2<f64>, mask: Array2<CellState>, counts: Array2<u32>, grid: GridSpec) -> Result<Self> {
        let shape = grid.shape();
        if values.dim() != shape || mask.dim() != shape || counts.dim() != shape {
            return Err(Error::param("matrix", format!("components disagree with grid shape {shape:?}")));
        }
        for ((idx, &state), (&v, &n)) in mask.indexed_iter().zip(values.iter().zip(counts.iter())) {
            let ok = match state {
                CellState::Observed => n > 0 && v.is_finite() && v >= 0.0,
                _ => n == 0 && v.is_nan(),
            };
            if !ok {
                return Err(Error::param("matrix", format!("cell {idx:?}: state {state:?} inconsistent with value {v} / count {n}")));
            }
        }
        Ok(StateMatrix { values, mask, counts, grid })
    }

    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)] == CellState::Observed
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&s| s == CellState::Observed).count()
    }

    pub fn observed_cells(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.mask
            .indexed_iter()
            .filter(|(_, &s)| s == CellState::Observed)
            .map(|(idx, _)| (idx, self.values[idx]))
    }

    /// Overwrites an observed cell's value, keeping its count.
    pub(crate) fn set_observed_value(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(self.is_observed(row, col));
        self.values[(row, col)] = value;
    }

    pub fn rasterize(&self, target: &GridSpec) -> Result<StateMatrix> {
        let src = source_cells(&self.grid, target)?;
        let pick = |idx: &Option<(usize, usize)>| idx.map_or(CellState::OutOfDomain, |i| self.mask[i]);
        Ok(StateMatrix {
            values: src.map(|i| i.map_or(f64::NAN, |i| self.values[i])),
            mask: src.map(pick),
            counts: src.map(|i| i.map_or(0, |i| self.counts[i])),
            grid: *target,
        })
    }
}

impl PartialEq for StateMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.mask == other.mask && self.counts == other.counts && same_values(&self.values, &other.values)
    }
}

impl GridValues for StateMatrix {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn values(&self) -> &Array2<f64> {
        &self.values
    }
    fn mask(&self) -> &Array2<CellState> {
        &self.mask
    }
}

/// A completed (estimated or closed-form) speed field. Every in-domain cell
/// carries a value; `mask` records which cells were observed in the matrix
/// the field was derived from.
#[derive(Debug, Clone)]
pub struct SpeedField {
    values: Array2<f64>,
    mask: Array2<CellState>,
    grid: GridSpec,
}

impl SpeedField {
    /// Wraps dense values; out-of-domain cells (per `mask`) are set to `NaN`.
    pub fn new(grid: GridSpec, mut values: Array2<f64>, mask: Array2<CellState>) -> Result<Self> {
        if values.dim() != grid.shape() || mask.dim() != grid.shape() {
            return Err(Error::param("values", format!("expected shape {:?}", grid.shape())));
        }
        ndarray::Zip::from(&mut values).and(&mask).for_each(|v, &m| {
            if m == CellState::OutOfDomain {
                *v = f64::NAN;
            }
        });
        Ok(SpeedField { values, mask, grid })
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn rasterize(&self, target: &GridSpec) -> Result<SpeedField> {
        let src = source_cells(&self.grid, target)?;
        Ok(SpeedField {
            values: src.map(|i| i.map_or(f64::NAN, |i| self.values[i])),
            mask: src.map(|i| i.map_or(CellState::OutOfDomain, |i| self.mask[i])),
            grid: *target,
        })
    }
}

impl PartialEq for SpeedField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.mask == other.mask && same_values(&self.values, &other.values)
    }
}

impl GridValues for SpeedField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn values(&self) -> &Array2<f64> {
        &self.values
    }
    fn mask(&self) -> &Array2<CellState> {
        &self.mask
    }
}

/// For each cell of the rectangular `target`, the source cell containing its
/// centre (nearest-cell lookup, no interpolation).
fn source_cells(source: &GridSpec, target: &GridSpec) -> Result<Array2<Option<(usize, usize)>>> {
    target.validate()?;
    if target.is_oblique() {
        return Err(Error::param("target", "rasterization target must be rectangular"));
    }
    if !source.same_domain(target.segment_length_m, target.window_length_s) {
        return Err(Error::param(
            "target",
            format!(
                "domain {}x{} does not match source {}x{}",
                target.segment_length_m, target.window_length_s, source.segment_length_m, source.window_length_s
            ),
        ));
    }
    Ok(Array2::from_shape_fn(target.shape(), |(l, c)| {
        let (s, t) = target.cell_center(l, c);
        let t = t.min(target.window_length_s);
        Some(source.index_of(s, t))
    }))
}

/// Bins every point and averages speeds per cell.
pub fn build_matrix(ts: &TrajectorySet, g: &GridSpec) -> Result<StateMatrix> {
    g.validate()?;
    if !g.same_domain(ts.segment_length_m(), ts.window_length_s()) {
        return Err(Error::param(
            "grid",
            format!(
                "trajectory domain {}x{} does not match grid {}x{}",
                ts.segment_length_m(),
                ts.window_length_s(),
                g.segment_length_m,
                g.window_length_s
            ),
        ));
    }
    let mut m = StateMatrix::empty(*g);
    let mut sums = Array2::<f64>::zeros(g.shape());
    for p in ts.points() {
        let idx = cell_index(p, g);
        sums[idx] += p.speed_kmh;
        m.counts[idx] += 1;
    }
    ndarray::Zip::from(&mut m.values)
        .and(&mut m.mask)
        .and(&sums)
        .and(&m.counts)
        .for_each(|v, state, &sum, &n| {
            if n > 0 {
                *v = sum / n as f64;
                *state = CellState::Observed;
            }
        });
    Ok(m)
}

/// Reference matrix for evaluation: all points of the full data set, binned
/// exactly as [`build_matrix`] does. Cells without points carry no truth.
pub fn ground_truth_matrix(full_ts: &TrajectorySet, g: &GridSpec) -> Result<StateMatrix> {
    build_matrix(full_ts, g)
}

/// Samples a closed-form field at every cell centre of `g`.
pub fn field_on_grid(field: &GroundTruthField, g: &GridSpec) -> Result<SpeedField> {
    if !g.same_domain(field.segment_length_m, field.window_length_s) {
        return Err(Error::param("grid", "field and grid domains differ"));
    }
    let mask = domain_mask(g).mapv(|s| if s == CellState::Missing { CellState::Observed } else { s });
    let values = Array2::from_shape_fn(g.shape(), |(l, c)| {
        let (s, t) = g.cell_center(l, c);
        field.speed_at(s, t)
    });
    SpeedField::new(*g, values, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{generate_synthetic, SyntheticFieldSpec, VehicleTrajectory};
    use proptest::prelude::*;

    fn ngsim_rect() -> GridSpec {
        GridSpec::rectangular(621.0, 2400.0, 3.0, 5.0).unwrap()
    }

    fn ngsim_oblique() -> GridSpec {
        GridSpec::oblique(621.0, 2400.0, 3.0, 5.0, -18.0).unwrap()
    }

    fn pt(s: f64, t: f64, v: f64) -> TrajectoryPoint {
        TrajectoryPoint {
            time_s: t,
            position_m: s,
            speed_kmh: v,
        }
    }

    #[test]
    fn rectangular_index_example() {
        let g = GridSpec::rectangular(30.0, 60.0, 3.0, 5.0).unwrap();
        assert_eq!(cell_index(&pt(0.0, 12.0, 1.0), &g), (0, 2));
    }

    #[test]
    fn oblique_index_example() {
        let g = ngsim_oblique();
        assert!((g.tan_theta() + 0.2).abs() < 1e-15);
        assert!((g.intercept() + 124.2).abs() < 1e-9);
        assert_eq!(cell_index(&pt(300.0, 100.0, 1.0), &g), (100, 32));
    }

    #[test]
    fn ngsim_shapes() {
        assert_eq!(ngsim_rect().shape(), (207, 480));
        assert_eq!(ngsim_oblique().shape(), (207, 505));
    }

    #[test]
    fn domain_corners_land_in_last_cells() {
        let g = ngsim_rect();
        assert_eq!(cell_index(&pt(621.0, 2400.0, 1.0), &g), (206, 479));
        let o = ngsim_oblique();
        // Downstream end at t = W has the largest skewed time.
        assert_eq!(cell_index(&pt(621.0, 2400.0, 1.0), &o), (206, 504));
        assert_eq!(cell_index(&pt(0.0, 0.0, 1.0), &o), (0, 0));
    }

    #[test]
    fn column_count_is_robust_to_rounding() {
        // 600 * 0.2 is 120.00000000000001 in floating point.
        let g = GridSpec::oblique(600.0, 2400.0, 3.0, 5.0, -18.0).unwrap();
        assert_eq!(g.cols(), 504);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(GridSpec::rectangular(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(GridSpec::rectangular(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(GridSpec::oblique(1.0, 1.0, 1.0, 1.0, 5.0).is_err());
        assert!(GridSpec::oblique(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn out_of_domain_cells_form_the_skewed_corners() {
        let g = ngsim_oblique();
        let m = StateMatrix::empty(g);
        // Upstream rows start at skew 0, so the last ~25 columns exceed W;
        // downstream rows are shifted by up to 124.2 s, so early columns
        // precede t = 0.
        assert_eq!(m.mask()[(0, 0)], CellState::Missing);
        assert_eq!(m.mask()[(0, 504)], CellState::OutOfDomain);
        assert_eq!(m.mask()[(206, 0)], CellState::OutOfDomain);
        assert_eq!(m.mask()[(206, 504)], CellState::Missing);
        // Every in-domain rectangular centre maps to an in-domain cell.
        let r = ngsim_rect();
        for l in (0..207).step_by(7) {
            for c in (0..480).step_by(11) {
                let (s, t) = r.cell_center(l, c);
                let (i, j) = g.index_of(s, t);
                assert!(g.in_domain(i, j));
            }
        }
        let rect = StateMatrix::empty(r);
        assert!(rect.mask().iter().all(|&s| s == CellState::Missing));
    }

    #[test]
    fn averaging_and_empty_input() {
        let g = GridSpec::rectangular(30.0, 60.0, 3.0, 5.0).unwrap();
        let ts = TrajectorySet::new(
            30.0,
            60.0,
            vec![
                VehicleTrajectory {
                    vehicle_id: "a".into(),
                    points: vec![pt(1.0, 1.0, 40.0)],
                },
                VehicleTrajectory {
                    vehicle_id: "b".into(),
                    points: vec![pt(2.0, 2.0, 60.0)],
                },
            ],
        )
        .unwrap();
        let m = build_matrix(&ts, &g).unwrap();
        assert_eq!(m.values()[(0, 0)], 50.0);
        assert_eq!(m.counts()[(0, 0)], 2);
        assert_eq!(m.observed_count(), 1);
        assert!(m.values()[(1, 1)].is_nan());

        let empty = build_matrix(&TrajectorySet::empty(30.0, 60.0).unwrap(), &g).unwrap();
        assert_eq!(empty.observed_count(), 0);
        assert!(empty.mask().iter().all(|&s| s == CellState::Missing));
    }

    #[test]
    fn mask_and_counts_agree() {
        let (ts, _) = generate_synthetic(&SyntheticFieldSpec::default(), 300.0, 600.0, 80, 6.0).unwrap();
        let m = build_matrix(&ts, &GridSpec::oblique(300.0, 600.0, 3.0, 5.0, -18.0).unwrap()).unwrap();
        for ((idx, &s), &n) in m.mask().indexed_iter().zip(m.counts().iter()) {
            assert_eq!(s == CellState::Observed, n > 0, "{idx:?}");
            if s == CellState::Observed {
                assert!(m.values()[idx].is_finite() && m.values()[idx] >= 0.0);
            }
        }
        assert_eq!(m.counts().iter().map(|&n| n as usize).sum::<usize>(), ts.point_count());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ts = TrajectorySet::empty(100.0, 60.0).unwrap();
        assert!(build_matrix(&ts, &GridSpec::rectangular(30.0, 60.0, 3.0, 5.0).unwrap()).is_err());
    }

    #[test]
    fn rasterize_identity_and_constants() {
        let (ts, _) = generate_synthetic(&SyntheticFieldSpec::default(), 300.0, 600.0, 80, 6.0).unwrap();
        let rect = GridSpec::rectangular(300.0, 600.0, 3.0, 5.0).unwrap();
        let m = build_matrix(&ts, &rect).unwrap();
        assert_eq!(m.rasterize(&rect).unwrap(), m);

        let obl = GridSpec::oblique(300.0, 600.0, 3.0, 5.0, -18.0).unwrap();
        let mask = StateMatrix::empty(obl).mask().clone();
        let constant = SpeedField::new(obl, Array2::from_elem(obl.shape(), 42.0), mask).unwrap();
        let r = constant.rasterize(&rect).unwrap();
        assert!(r.values().iter().all(|&v| v == 42.0));

        assert!(m.rasterize(&obl).is_err());
        assert!(m.rasterize(&GridSpec::rectangular(301.0, 600.0, 3.0, 5.0).unwrap()).is_err());
    }

    #[test]
    fn rasterized_band_keeps_wave_slope() {
        let spec = SyntheticFieldSpec {
            wave_band_count: 1,
            wave_band_width_s: 60.0,
            first_band_start_s: Some(200.0),
            ..SyntheticFieldSpec::default()
        };
        let (_, field) = generate_synthetic(&spec, 300.0, 600.0, 1, 6.0).unwrap();
        let obl = GridSpec::oblique(300.0, 600.0, 3.0, 5.0, -18.0).unwrap();
        let rect = obl.to_rectangular();
        let r = field_on_grid(&field, &obl).unwrap().rasterize(&rect).unwrap();
        // First jam column in each row: t_start(s) = 200 - 0.2 s, so the
        // leading edge shifts back 0.2 s per meter (one 5 s column per 25 m).
        let expected = field_on_grid(&field, &rect).unwrap();
        let lead = |vals: &Array2<f64>, row: usize| (0..vals.ncols()).find(|&c| vals[(row, c)] < 30.0).unwrap();
        for row in [0usize, 25, 50, 75, 99] {
            let got = lead(r.values(), row) as i64;
            let want = lead(expected.values(), row) as i64;
            assert!((got - want).abs() <= 1, "row {row}: {got} vs {want}");
        }
        let slope = (lead(r.values(), 99) as f64 - lead(r.values(), 0) as f64) * 5.0 / (99.0 * 3.0);
        assert!((slope + 0.2).abs() < 0.02, "{slope}");
    }

    proptest! {
        #[test]
        fn rectangular_binning_is_textbook(s in 0.0..621.0f64, t in 0.0..2400.0f64) {
            let g = ngsim_rect();
            let (l, c) = cell_index(&pt(s, t, 1.0), &g);
            prop_assert_eq!(l, (s / 3.0).floor() as usize);
            prop_assert_eq!(c, (t / 5.0).floor() as usize);
        }

        #[test]
        fn wave_lines_share_a_column(s in 0.0..600.0f64, t in 200.0..2200.0f64, steps in prop::collection::vec(-20i32..20, 1..10)) {
            let g = ngsim_oblique();
            let k = g.tan_theta().abs();
            let (_, c0) = g.index_of(s, t);
            let u0 = g.skewed_time(s, t) / g.dt_s;
            for step in steps {
                let delta = step as f64 * 0.5;
                let (s2, t2) = (s + delta, t - delta * k);
                if !(0.0..=621.0).contains(&s2) || !(0.0..=2400.0).contains(&t2) {
                    continue;
                }
                let u = g.skewed_time(s2, t2) / g.dt_s;
                // Skip shifts that straddle a column boundary through rounding.
                if u0.floor() != u.floor() || (u0 - u0.round()).abs() < 1e-9 {
                    continue;
                }
                prop_assert_eq!(g.index_of(s2, t2).1, c0);
            }
        }
    }
}
