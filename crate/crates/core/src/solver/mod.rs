//! Low-rank plus sparse completion of a partially observed speed matrix.
//!
//! The problem is
//!
//! ```text
//! min ||L||_r,* + lambda ||S||_1   s.t.  W = L + S,  P_obs(W) = P_obs(M)
//! ```
//!
//! where `||.||_r,*` is the truncated nuclear norm (all singular values but
//! the top `r`). It is solved by ADMM on the augmented Lagrangian with
//! multiplier `Y` and penalty `rho`. Each step updates `L` by truncated
//! singular value thresholding, `S` by soft-thresholding, `W` in closed form
//! with the observed entries reset to the data, then the multiplier.

mod ops;

pub use ops::{numerical_rank, shrink, singular_values, soft_threshold, truncated_nuclear_norm, truncated_svt};

use std::time::Instant;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::grid::{CellState, GridValues, SpeedField, StateMatrix};
use crate::parallel::elementwise::{zip2, zip3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSurrogate {
    /// Leave the top `r` singular values unpenalized.
    #[default]
    TruncatedNn,
    /// Plain nuclear norm (`r = 0`).
    ConvexNn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Fraction of `min(rows, cols)` singular values left unshrunk.
    pub truncation_fraction: f64,
    pub lambda: f64,
    pub rho0: f64,
    /// Per-iteration penalty multiplier; 1 keeps `rho` fixed.
    pub rho_growth: f64,
    pub rho_max: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub rank_surrogate: RankSurrogate,
    pub sparse_term_enabled: bool,
    /// Upper clamp applied to the returned speeds.
    pub v_max_kmh: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            truncation_fraction: 0.3,
            lambda: 0.04,
            rho0: 1e-3,
            rho_growth: 1.05,
            rho_max: 1e2,
            epsilon: 1e-4,
            max_iters: 500,
            rank_surrogate: RankSurrogate::TruncatedNn,
            sparse_term_enabled: true,
            v_max_kmh: 120.0,
        }
    }
}

impl SolverConfig {
    /// Constant penalty at `rho0`.
    pub fn fixed_penalty(self) -> Self {
        SolverConfig {
            rho_growth: 1.0,
            rho_max: self.rho0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite, got {x}")))
            }
        };
        finite("truncation_fraction", self.truncation_fraction)?;
        finite("lambda", self.lambda)?;
        finite("rho0", self.rho0)?;
        finite("rho_growth", self.rho_growth)?;
        finite("rho_max", self.rho_max)?;
        finite("epsilon", self.epsilon)?;
        finite("v_max_kmh", self.v_max_kmh)?;
        if !(0.0..1.0).contains(&self.truncation_fraction) {
            return Err(Error::param("truncation_fraction", format!("must lie in [0, 1), got {}", self.truncation_fraction)));
        }
        if self.lambda <= 0.0 {
            return Err(Error::param("lambda", format!("must be > 0, got {}", self.lambda)));
        }
        if self.rho0 <= 0.0 {
            return Err(Error::param("rho0", format!("must be > 0, got {}", self.rho0)));
        }
        if self.rho_growth < 1.0 {
            return Err(Error::param("rho_growth", format!("must be >= 1, got {}", self.rho_growth)));
        }
        if self.rho_max < self.rho0 {
            return Err(Error::param("rho_max", format!("must be >= rho0 ({}), got {}", self.rho0, self.rho_max)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::param("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        if self.v_max_kmh <= 0.0 {
            return Err(Error::param("v_max_kmh", format!("must be > 0, got {}", self.v_max_kmh)));
        }
        Ok(())
    }

    /// Singular values left unshrunk for a `rows x cols` matrix.
    pub fn kept_rank(&self, rows: usize, cols: usize) -> usize {
        match self.rank_surrogate {
            RankSurrogate::ConvexNn => 0,
            // The slack keeps e.g. 0.05 * 60 from flooring to 2.
            RankSurrogate::TruncatedNn => (self.truncation_fraction * rows.min(cols) as f64 + 1e-9).floor() as usize,
        }
    }
}

/// ADMM iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub l_mat: Array2<f64>,
    pub s_mat: Array2<f64>,
    pub w_mat: Array2<f64>,
    pub y_mat: Array2<f64>,
    pub rho: f64,
    pub iter: usize,
}

impl SolverState {
    /// Starting point: unobserved cells of `M` filled with the observed mean,
    /// `S = Y = 0`.
    pub fn initial(m: &StateMatrix, cfg: &SolverConfig) -> Result<Self> {
        let p = Observations::new(m)?;
        Ok(p.initial_state(cfg.rho0))
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    /// Completed speeds, clamped to `[0, v_max]`, `NaN` outside the domain.
    pub l_hat: SpeedField,
    /// Sparse anomaly component (`NaN` outside the domain).
    pub s_hat: SpeedField,
    pub iterations: usize,
    /// Relative change of `L` at each iteration.
    pub residual_trace: Vec<f64>,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Dense view of the observations used inside the iterations.
struct Observations {
    values: Array2<f64>,
    observed: Array2<bool>,
    mean: f64,
    norm: f64,
}

impl Observations {
    fn new(m: &StateMatrix) -> Result<Self> {
        let observed = m.mask().mapv(|s| s == CellState::Observed);
        let n = observed.iter().filter(|&&o| o).count();
        if n == 0 {
            return Err(Error::EmptyObservation);
        }
        let values = Zip::from(m.values()).and(&observed).map_collect(|&v, &o| if o { v } else { 0.0 });
        let sum: f64 = values.iter().sum();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Observations {
            values,
            observed,
            mean: sum / n as f64,
            norm,
        })
    }

    fn initial_state(&self, rho: f64) -> SolverState {
        let filled = Zip::from(&self.values)
            .and(&self.observed)
            .map_collect(|&v, &o| if o { v } else { self.mean });
        let zeros = Array2::zeros(filled.dim());
        SolverState {
            l_mat: filled.clone(),
            s_mat: zeros.clone(),
            w_mat: filled,
            y_mat: zeros,
            rho,
            iter: 0,
        }
    }

    fn step(&self, state: SolverState, cfg: &SolverConfig, r: usize) -> Result<SolverState> {
        let SolverState {
            s_mat,
            w_mat,
            y_mat,
            rho,
            iter,
            ..
        } = state;
        let inv = 1.0 / rho;
        let numerical = |e: Error| match e {
            Error::Numerical { reason, .. } => Error::Numerical {
                iteration: Some(iter + 1),
                reason,
            },
            other => other,
        };

        let z = zip3(&w_mat, &s_mat, &y_mat, move |w, s, y| w - s + y * inv);
        let l_mat = truncated_svt(&z, r, inv).map_err(numerical)?;

        let s_mat = if cfg.sparse_term_enabled {
            let tau = cfg.lambda * inv;
            zip3(&w_mat, &l_mat, &y_mat, move |w, l, y| shrink(w - l + y * inv, tau))
        } else {
            Array2::zeros(l_mat.dim())
        };

        let mut w_mat = zip3(&l_mat, &s_mat, &y_mat, move |l, s, y| l + s - y * inv);
        Zip::from(&mut w_mat)
            .and(&self.observed)
            .and(&self.values)
            .for_each(|w, &o, &m| {
                if o {
                    *w = m;
                }
            });

        let ls = zip2(&l_mat, &s_mat, |l, s| l + s);
        let y_mat = zip3(&y_mat, &w_mat, &ls, move |y, w, ls| y + rho * (w - ls));

        if y_mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration: Some(iter + 1),
                reason: "multiplier became non-finite".into(),
            });
        }
        Ok(SolverState {
            l_mat,
            s_mat,
            w_mat,
            y_mat,
            rho: (cfg.rho_growth * rho).min(cfg.rho_max),
            iter: iter + 1,
        })
    }
}

/// One ADMM iteration.
pub fn admm_step(state: SolverState, m: &StateMatrix, cfg: &SolverConfig) -> Result<SolverState> {
    cfg.validate()?;
    if state.l_mat.dim() != m.shape() {
        return Err(Error::param("state", format!("shape {:?} does not match matrix {:?}", state.l_mat.dim(), m.shape())));
    }
    let p = Observations::new(m)?;
    let (rows, cols) = m.shape();
    p.step(state, cfg, cfg.kept_rank(rows, cols))
}

/// `||W - L - S||_F`.
fn primal_gap(st: &SolverState) -> f64 {
    let mut acc = 0.0;
    Zip::from(&st.w_mat).and(&st.l_mat).and(&st.s_mat).for_each(|&w, &l, &s| {
        let d = w - l - s;
        acc += d * d;
    });
    acc.sqrt()
}

fn frobenius_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y))
        .sqrt()
}

/// Runs ADMM until the relative change of `L` drops below `epsilon` or the
/// iteration cap is reached.
///
/// A small change of `L` alone is not accepted while the splitting
/// constraint `W = L + S` is still violated by more than `epsilon` (same
/// normalization): with a small penalty the thresholds can zero `L` for
/// several iterations, which would otherwise read as convergence.
pub fn solve(m: &StateMatrix, cfg: &SolverConfig) -> Result<SolverResult> {
    cfg.validate()?;
    let start = Instant::now();
    let p = Observations::new(m)?;
    let (rows, cols) = m.shape();
    let r = cfg.kept_rank(rows, cols);

    let mut state = p.initial_state(cfg.rho0);
    let mut trace = Vec::new();
    let mut converged = false;
    while state.iter < cfg.max_iters {
        let prev = state.l_mat.clone();
        state = p.step(state, cfg, r)?;
        let change = frobenius_diff(&state.l_mat, &prev);
        let scale = if p.norm > 0.0 { p.norm } else { 1.0 };
        let residual = change / scale;
        trace.push(residual);
        if residual < cfg.epsilon && primal_gap(&state) / scale < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let mask = m.mask().clone();
    let v_max = cfg.v_max_kmh;
    let l_hat = SpeedField::new(*m.grid(), state.l_mat.mapv(|v| v.clamp(0.0, v_max)), mask.clone())?;
    let s_hat = SpeedField::new(*m.grid(), state.s_mat, mask)?;
    Ok(SolverResult {
        l_hat,
        s_hat,
        iterations: state.iter,
        residual_trace: trace,
        converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Convergence summary written next to the recovered matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    pub residual_trace: Vec<f64>,
    pub wall_time_s: f64,
    pub kept_rank: usize,
    pub config: SolverConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<(String, u64)>,
}

impl ConvergenceReport {
    pub fn new(result: &SolverResult, cfg: &SolverConfig, seeds: Vec<(String, u64)>) -> Self {
        let (rows, cols) = result.l_hat.values().dim();
        ConvergenceReport {
            iterations: result.iterations,
            converged: result.converged,
            residual_trace: result.residual_trace.clone(),
            wall_time_s: result.wall_time_s,
            kept_rank: cfg.kept_rank(rows, cols),
            config: *cfg,
            seeds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(rows: usize, cols: usize) -> GridSpec {
        GridSpec::rectangular(rows as f64, cols as f64, 1.0, 1.0).unwrap()
    }

    fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((rows, rank), |_| rng.random_range(0.0..1.0));
        let b = Array2::from_shape_fn((cols, rank), |_| rng.random_range(0.0..1.0));
        let x = a.dot(&b.t());
        let max = x.iter().copied().fold(0.0, f64::max);
        x * (100.0 / max)
    }

    fn matrix(values: &Array2<f64>, observed: &Array2<bool>) -> StateMatrix {
        let (r, c) = values.dim();
        StateMatrix::from_observations(unit_grid(r, c), values, observed).unwrap()
    }

    fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        frobenius_diff(a, b) / b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig { lambda: 0.0, ..Default::default() },
            SolverConfig { rho0: -1.0, ..Default::default() },
            SolverConfig { rho_growth: 0.9, ..Default::default() },
            SolverConfig { rho_max: 1e-5, ..Default::default() },
            SolverConfig { epsilon: 0.0, ..Default::default() },
            SolverConfig { max_iters: 0, ..Default::default() },
            SolverConfig { truncation_fraction: 1.0, ..Default::default() },
            SolverConfig { lambda: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(SolverConfig::default().fixed_penalty().validate().is_ok());
    }

    #[test]
    fn kept_rank_rounding() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.kept_rank(207, 505), 62);
        let cfg = SolverConfig { truncation_fraction: 3.0 / 60.0, ..cfg };
        assert_eq!(cfg.kept_rank(60, 80), 3);
        let convex = SolverConfig { rank_surrogate: RankSurrogate::ConvexNn, ..cfg };
        assert_eq!(convex.kept_rank(60, 80), 0);
    }

    #[test]
    fn one_step_recovers_fully_observed_low_rank() {
        let x = low_rank(12, 15, 2, 1);
        let m = matrix(&x, &Array2::from_elem(x.dim(), true));
        let cfg = SolverConfig { truncation_fraction: 0.2, ..Default::default() };
        let s0 = SolverState::initial(&m, &cfg).unwrap();
        assert_eq!(s0.w_mat, x);
        let s1 = admm_step(s0, &m, &cfg).unwrap();
        assert!(rel_err(&s1.l_mat, &x) < 1e-10);
    }

    #[test]
    fn observed_entries_are_pinned_after_each_step() {
        let x = low_rank(10, 12, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = Array2::from_shape_fn(x.dim(), |_| rng.random_bool(0.5));
        let m = matrix(&x, &obs);
        let cfg = SolverConfig { truncation_fraction: 0.2, rho0: 1e-2, ..Default::default() };
        let mut st = SolverState::initial(&m, &cfg).unwrap();
        for _ in 0..20 {
            st = admm_step(st, &m, &cfg).unwrap();
            for ((idx, &o), &w) in obs.indexed_iter().zip(st.w_mat.iter()) {
                if o {
                    assert_eq!(w, x[idx]);
                }
            }
        }
        assert_eq!(st.iter, 20);
    }

    #[test]
    fn disabled_sparse_term_stays_zero() {
        let x = low_rank(10, 12, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let obs = Array2::from_shape_fn(x.dim(), |_| rng.random_bool(0.6));
        let cfg = SolverConfig { sparse_term_enabled: false, max_iters: 50, ..Default::default() };
        let res = solve(&matrix(&x, &obs), &cfg).unwrap();
        assert!(res.s_hat.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convex_equals_truncated_at_zero_fraction() {
        let x = low_rank(9, 11, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let obs = Array2::from_shape_fn(x.dim(), |_| rng.random_bool(0.5));
        let m = matrix(&x, &obs);
        let base = SolverConfig { truncation_fraction: 0.0, max_iters: 40, ..Default::default() };
        let a = solve(&m, &base).unwrap();
        let b = solve(&m, &SolverConfig { rank_surrogate: RankSurrogate::ConvexNn, truncation_fraction: 0.3, ..base }).unwrap();
        assert_eq!(a.l_hat.values(), b.l_hat.values());
        assert_eq!(a.s_hat.values(), b.s_hat.values());
    }

    #[test]
    fn fully_observed_rank_two_is_returned() {
        let x = low_rank(20, 30, 2, 5);
        let m = matrix(&x, &Array2::from_elem(x.dim(), true));
        let cfg = SolverConfig { truncation_fraction: 0.1, ..Default::default() };
        let res = solve(&m, &cfg).unwrap();
        assert!(rel_err(res.l_hat.values(), &x) < 1e-6);
        assert!(res.converged);
        assert_eq!(res.residual_trace.len(), res.iterations);
        assert!(*res.residual_trace.last().unwrap() < cfg.epsilon);
    }

    #[test]
    fn empty_observation_is_an_error() {
        let m = StateMatrix::empty(unit_grid(4, 4));
        assert!(matches!(solve(&m, &SolverConfig::default()), Err(Error::EmptyObservation)));
    }

    #[test]
    fn output_is_clamped_and_masked() {
        let g = GridSpec::oblique(30.0, 60.0, 3.0, 5.0, -18.0).unwrap();
        let mut values = Array2::from_elem(g.shape(), 0.0);
        let observed = StateMatrix::empty(g).mask().mapv(|s| s == CellState::Missing);
        values[(0, 0)] = 119.0;
        values[(1, 1)] = 0.0;
        let m = StateMatrix::from_observations(g, &values, &observed).unwrap();
        let res = solve(&m, &SolverConfig { max_iters: 5, ..Default::default() }).unwrap();
        for (&v, &s) in res.l_hat.values().iter().zip(m.mask()) {
            if s == CellState::OutOfDomain {
                assert!(v.is_nan());
            } else {
                assert!((0.0..=120.0).contains(&v));
            }
        }
    }

    #[test]
    fn report_serializes() {
        let x = low_rank(6, 7, 1, 6);
        let m = matrix(&x, &Array2::from_elem(x.dim(), true));
        let cfg = SolverConfig::default();
        let res = solve(&m, &cfg).unwrap();
        let report = ConvergenceReport::new(&res, &cfg, vec![("sample".into(), 7)]);
        let json = serde_json::to_string(&report).unwrap();
        let back: ConvergenceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
