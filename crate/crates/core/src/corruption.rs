//! Sparse, non-Gaussian corruption of observed cells and detection scoring.
//!
//! Type I pushes a free-flow reading down by 50 km/h (looks like a jam);
//! type II lifts a jammed reading by 80 km/h (looks like free flow).

use std::io::Write;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::grid::{CellState, GridValues, StateMatrix};
use crate::seed;
use crate::{Error, Result};

pub const TYPE1_OFFSET_KMH: f64 = -50.0;
pub const TYPE2_OFFSET_KMH: f64 = 80.0;
pub const DEFAULT_DETECT_THRESHOLD_KMH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionPlan {
    pub count_type1: usize,
    pub count_type2: usize,
    pub seed: u64,
    pub free_flow_threshold_kmh: f64,
    pub jam_threshold_kmh: f64,
}

impl Default for CorruptionPlan {
    fn default() -> Self {
        CorruptionPlan {
            count_type1: 0,
            count_type2: 0,
            seed: 0,
            free_flow_threshold_kmh: 50.0,
            jam_threshold_kmh: 5.0,
        }
    }
}

impl CorruptionPlan {
    /// Equal counts of both types.
    pub fn balanced(per_type: usize, seed: u64) -> Self {
        CorruptionPlan {
            count_type1: per_type,
            count_type2: per_type,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("free_flow_threshold_kmh", self.free_flow_threshold_kmh), ("jam_threshold_kmh", self.jam_threshold_kmh)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Type1,
    Type2,
}

impl CorruptionKind {
    pub fn offset_kmh(self) -> f64 {
        match self {
            CorruptionKind::Type1 => TYPE1_OFFSET_KMH,
            CorruptionKind::Type2 => TYPE2_OFFSET_KMH,
        }
    }

    fn label(self) -> &'static str {
        match self {
            CorruptionKind::Type1 => "type1",
            CorruptionKind::Type2 => "type2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub row: usize,
    pub col: usize,
    pub kind: CorruptionKind,
    pub original_kmh: f64,
    pub tampered_kmh: f64,
}

impl CorruptionRecord {
    pub fn delta_kmh(&self) -> f64 {
        self.tampered_kmh - self.original_kmh
    }
}

fn pick(eligible: &[(usize, usize)], count: usize, kind: &'static str, rng: &mut impl rand::Rng) -> Result<Vec<(usize, usize)>> {
    if count > eligible.len() {
        return Err(Error::Capacity {
            kind,
            requested: count,
            available: eligible.len(),
        });
    }
    let mut chosen: Vec<usize> = index::sample(rng, eligible.len(), count).into_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| eligible[i]).collect())
}

/// Tampers randomly chosen observed cells. Type I cells are drawn first from
/// free-flow readings, then type II cells from jammed readings not already
/// chosen; both uniformly without replacement. Records come back in draw
/// order (type I then type II, each row-major).
pub fn inject(m: &StateMatrix, plan: &CorruptionPlan) -> Result<(StateMatrix, Vec<CorruptionRecord>)> {
    plan.validate()?;
    let mut rng = seed::rng(plan.seed);
    let observed: Vec<((usize, usize), f64)> = m.observed_cells().collect();

    let free: Vec<_> = observed
        .iter()
        .filter(|(_, v)| *v >= plan.free_flow_threshold_kmh)
        .map(|&(idx, _)| idx)
        .collect();
    let type1 = pick(&free, plan.count_type1, "type-1 corruption", &mut rng)?;

    let jam: Vec<_> = observed
        .iter()
        .filter(|(idx, v)| *v <= plan.jam_threshold_kmh && type1.binary_search(idx).is_err())
        .map(|&(idx, _)| idx)
        .collect();
    let type2 = pick(&jam, plan.count_type2, "type-2 corruption", &mut rng)?;

    let mut out = m.clone();
    let mut records = Vec::with_capacity(type1.len() + type2.len());
    let cells = type1
        .into_iter()
        .map(|c| (c, CorruptionKind::Type1))
        .chain(type2.into_iter().map(|c| (c, CorruptionKind::Type2)));
    for ((row, col), kind) in cells {
        let original = m.values()[(row, col)];
        let tampered = original + kind.offset_kmh();
        out.set_observed_value(row, col, tampered);
        records.push(CorruptionRecord {
            row,
            col,
            kind,
            original_kmh: original,
            tampered_kmh: tampered,
        });
    }
    Ok((out, records))
}

/// Undoes [`inject`] given its records.
pub fn restore(m: &StateMatrix, records: &[CorruptionRecord]) -> StateMatrix {
    let mut out = m.clone();
    for r in records {
        out.set_observed_value(r.row, r.col, r.original_kmh);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    /// Flagged cells that were injected, over all flagged cells.
    pub precision: f64,
    /// Injected cells that were flagged.
    pub recall: f64,
    /// Flagged injected cells whose anomaly sign matches the injection.
    pub sign_agreement: f64,
    pub flagged: usize,
    pub injected: usize,
}

/// Scores `|s_hat| > threshold` against injected cells and the sign of their
/// injected deltas. Ratios with an empty denominator are 1 when there was
/// nothing to find and 0 otherwise.
pub fn score_detection_cells(s_hat: &Array2<f64>, injected: &[((usize, usize), f64)], threshold_kmh: f64) -> Result<DetectionScore> {
    if let Some(((r, c), _)) = injected.iter().find(|((r, c), _)| *r >= s_hat.nrows() || *c >= s_hat.ncols()) {
        return Err(Error::param("records", format!("cell ({r}, {c}) outside a {:?} matrix", s_hat.dim())));
    }
    let flagged = s_hat.iter().filter(|v| v.abs() > threshold_kmh).count();
    let hits: Vec<f64> = injected
        .iter()
        .filter(|(idx, _)| s_hat[*idx].abs() > threshold_kmh)
        .map(|&(idx, delta)| s_hat[idx] * delta)
        .collect();
    let ratio = |num: usize, den: usize| {
        if den > 0 {
            num as f64 / den as f64
        } else if injected.is_empty() {
            1.0
        } else {
            0.0
        }
    };
    Ok(DetectionScore {
        precision: ratio(hits.len(), flagged),
        recall: ratio(hits.len(), injected.len()),
        sign_agreement: ratio(hits.iter().filter(|&&p| p > 0.0).count(), hits.len()),
        flagged,
        injected: injected.len(),
    })
}

pub fn score_detection<M: GridValues>(s_hat: &M, records: &[CorruptionRecord], threshold_kmh: f64) -> Result<DetectionScore> {
    let cells: Vec<_> = records.iter().map(|r| ((r.row, r.col), r.delta_kmh())).collect();
    let values = s_hat.values().mapv(|v| if v.is_nan() { 0.0 } else { v });
    debug_assert!(records.iter().all(|r| s_hat.mask()[(r.row, r.col)] != CellState::OutOfDomain));
    score_detection_cells(&values, &cells, threshold_kmh)
}

pub fn write_records<W: Write>(writer: W, records: &[CorruptionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "col", "kind", "original", "tampered"])?;
    for r in records {
        w.write_record([
            r.row.to_string(),
            r.col.to_string(),
            r.kind.label().to_string(),
            format!("{}", r.original_kmh),
            format!("{}", r.tampered_kmh),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
