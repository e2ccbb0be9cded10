//! Matrix files: a CSV of values ("nan" for cells without a value), a JSON
//! sidecar with the grid, mask and counts, and an 8-bit PGM heatmap.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{CellState, GridSpec, GridValues, StateMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// Binned observations.
    Observed,
    /// Solver output; the mask records the observations it was fitted to.
    Estimate,
    /// Sparse anomaly component.
    Anomaly,
    /// Closed-form reference field.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSidecar {
    pub kind: MatrixKind,
    pub grid: GridSpec,
    pub shape: [usize; 2],
    /// Row-major runs of cell states.
    pub mask_rle: Vec<(CellState, usize)>,
    /// Row-major per-cell sample counts, present for observed matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u32>>,
}

impl MatrixSidecar {
    pub fn describe<M: GridValues>(kind: MatrixKind, m: &M, counts: Option<&Array2<u32>>) -> Self {
        let mut mask_rle: Vec<(CellState, usize)> = Vec::new();
        for &s in m.mask().iter() {
            match mask_rle.last_mut() {
                Some((last, n)) if *last == s => *n += 1,
                _ => mask_rle.push((s, 1)),
            }
        }
        let (rows, cols) = m.values().dim();
        MatrixSidecar {
            kind,
            grid: *m.grid(),
            shape: [rows, cols],
            mask_rle,
            counts: counts.map(|c| c.iter().copied().collect()),
        }
    }

    pub fn mask(&self) -> Result<Array2<CellState>> {
        let cells: Vec<CellState> = self.mask_rle.iter().flat_map(|&(s, n)| std::iter::repeat_n(s, n)).collect();
        Array2::from_shape_vec((self.shape[0], self.shape[1]), cells)
            .map_err(|_| Error::param("mask_rle", format!("run lengths do not cover a {}x{} matrix", self.shape[0], self.shape[1])))
    }
}

/// Writes values row by row using the shortest round-trip representation.
pub fn write_matrix_csv<W: Write>(writer: W, values: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut record = Vec::with_capacity(values.ncols());
    for row in values.rows() {
        record.clear();
        record.extend(row.iter().map(|v| if v.is_nan() { "nan".to_string() } else { format!("{v}") }));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(reader: R, origin: &Path) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 1;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: format!("expected {} fields, found {}", cols.unwrap_or(0), rec.len()),
            });
        }
        for field in rec.iter() {
            let v = if field.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|e| Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    reason: format!("{field:?}: {e}"),
                })?
            };
            data.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::param("matrix", e.to_string()))
}

pub fn write_sidecar<W: Write>(writer: W, sidecar: &MatrixSidecar) -> Result<()> {
    serde_json::to_writer_pretty(writer, sidecar)?;
    Ok(())
}

/// Loads an observed matrix from its CSV and sidecar.
pub fn read_matrix(csv_path: &Path, sidecar_path: &Path) -> Result<StateMatrix> {
    let file = File::open(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: MatrixSidecar = serde_json::from_reader(BufReader::new(file))?;
    sidecar.grid.validate()?;
    if sidecar.grid.shape() != (sidecar.shape[0], sidecar.shape[1]) {
        return Err(Error::param("shape", format!("{:?} does not match grid shape {:?}", sidecar.shape, sidecar.grid.shape())));
    }
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let values = read_matrix_csv(BufReader::new(file), csv_path)?;
    if values.dim() != sidecar.grid.shape() {
        return Err(Error::param("values", format!("CSV is {:?}, sidecar says {:?}", values.dim(), sidecar.shape)));
    }
    let mask = sidecar.mask()?;
    let counts = match &sidecar.counts {
        Some(c) => Array2::from_shape_vec(values.dim(), c.clone()).map_err(|_| Error::param("counts", "length does not match shape"))?,
        None => mask.mapv(|s| u32::from(s == CellState::Observed)),
    };
    StateMatrix::from_parts(values, mask, counts, sidecar.grid)
}

/// Binary PGM, row 0 at the top; speeds map linearly from `[0, v_max]` to
/// `[0, 255]`, cells without a value are black.
pub fn write_pgm<W: Write>(mut writer: W, values: &Array2<f64>, v_max_kmh: f64) -> Result<()> {
    if !(v_max_kmh.is_finite() && v_max_kmh > 0.0) {
        return Err(Error::param("v_max_kmh", format!("must be positive, got {v_max_kmh}")));
    }
    let (rows, cols) = values.dim();
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    buf.extend(values.iter().map(|&v| {
        if v.is_nan() {
            0
        } else {
            (v / v_max_kmh * 255.0).round().clamp(0.0, 255.0) as u8
        }
    }));
    writer.write_all(&buf).map_err(|e| Error::io("<pgm>", e))?;
    Ok(())
}

/// Convenience for writing CSV + sidecar next to each other.
pub fn save_matrix<M: GridValues>(csv_path: &Path, sidecar_path: &Path, kind: MatrixKind, m: &M, counts: Option<&Array2<u32>>) -> Result<()> {
    let f = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    write_matrix_csv(BufWriter::new(f), m.values())?;
    let f = File::create(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    write_sidecar(BufWriter::new(f), &MatrixSidecar::describe(kind, m, counts))
}
