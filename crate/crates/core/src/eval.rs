//! Error metrics and the experiment sweeps.
//!
//! Every repetition draws its connected-vehicle subset and its corruption
//! cells from seeds derived from the master seed and the repetition index
//! alone. Scenarios that share a master seed therefore see the same vehicle
//! samples, which makes comparisons across scenarios paired.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corruption::{inject, score_detection, CorruptionPlan, DetectionScore, DEFAULT_DETECT_THRESHOLD_KMH};
use crate::grid::{build_matrix, ground_truth_matrix, CellState, GridSpec, GridValues, StateMatrix};
use crate::parallel::Execution;
use crate::seed::{self, stream};
use crate::solver::{solve, RankSurrogate, SolverConfig};
use crate::trajectory::{sample_penetration, TrajectorySet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub rmse_kmh: f64,
    pub mae_kmh: f64,
    pub n_cells: usize,
}

/// RMSE and MAE over the cells where `truth` is observed.
pub fn compute_metrics<E: GridValues, T: GridValues>(est: &E, truth: &T) -> Result<MetricPair> {
    if est.grid() != truth.grid() {
        return Err(Error::param("est", "estimate and ground truth live on different grids"));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut n = 0usize;
    for ((idx, &state), (&y, &y_hat)) in truth.mask().indexed_iter().zip(truth.values().iter().zip(est.values())) {
        if state != CellState::Observed {
            continue;
        }
        if !y_hat.is_finite() {
            return Err(Error::param("est", format!("no estimate at cell {idx:?}, which has ground truth")));
        }
        let e = y - y_hat;
        sq += e * e;
        abs += e.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(MetricPair {
        rmse_kmh: (sq / n as f64).sqrt(),
        mae_kmh: abs / n as f64,
        n_cells: n,
    })
}

/// Where estimates are compared with the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalGeometry {
    /// On the estimation grid itself.
    #[default]
    Native,
    /// On the rectangular grid of the same resolution, after rasterizing.
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    Tse,
    Rtse,
    Sensitivity,
    Ablation,
}

/// One cell of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub penetration_rate: f64,
    pub count_type1: usize,
    pub count_type2: usize,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub eval_geometry: EvalGeometry,
}

impl Scenario {
    pub fn wave_speed_kmh(&self) -> Option<f64> {
        self.grid.wave_speed_kmh
    }

    fn eval_grid(&self) -> GridSpec {
        match self.eval_geometry {
            EvalGeometry::Native => self.grid,
            EvalGeometry::Rectangular => self.grid.to_rectangular(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionSeeds {
    pub sample: u64,
    pub corruption: u64,
}

impl RepetitionSeeds {
    pub fn derive(master_seed: u64, repetition: usize) -> Self {
        RepetitionSeeds {
            sample: seed::derive(master_seed, &[stream::PENETRATION, repetition as u64]),
            corruption: seed::derive(master_seed, &[stream::CORRUPTION, repetition as u64]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub seeds: RepetitionSeeds,
    pub metrics: MetricPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionScore>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            std,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rmse_kmh: Stat,
    pub mae_kmh: Stat,
    pub iterations: Stat,
    pub wall_time_s: Stat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_agreement: Option<Stat>,
}

impl Summary {
    pub fn of(records: &[RepetitionRecord]) -> Summary {
        let stat = |f: &dyn Fn(&RepetitionRecord) -> f64| Stat::of(&records.iter().map(f).collect::<Vec<_>>());
        let detection = |f: &dyn Fn(&DetectionScore) -> f64| {
            let xs: Vec<f64> = records.iter().filter_map(|r| r.detection.as_ref().map(f)).collect();
            (!xs.is_empty()).then(|| Stat::of(&xs))
        };
        Summary {
            rmse_kmh: stat(&|r| r.metrics.rmse_kmh),
            mae_kmh: stat(&|r| r.metrics.mae_kmh),
            iterations: stat(&|r| r.iterations as f64),
            wall_time_s: stat(&|r| r.wall_time_s),
            precision: detection(&|d| d.precision),
            recall: detection(&|d| d.recall),
            sign_agreement: detection(&|d| d.sign_agreement),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub records: Vec<RepetitionRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: ExperimentMode,
    pub master_seed: u64,
    pub repetitions: usize,
    pub detect_threshold_kmh: f64,
    /// How corruption cells are drawn.
    pub corruption_sampling: String,
    pub scenarios: Vec<ScenarioReport>,
}

/// Knobs shared by all sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub eval_geometry: EvalGeometry,
    pub detect_threshold_kmh: f64,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            eval_geometry: EvalGeometry::Native,
            detect_threshold_kmh: DEFAULT_DETECT_THRESHOLD_KMH,
            execution: Execution::default(),
        }
    }
}

/// Runs one repetition of a scenario against a prebuilt reference matrix.
fn run_one(ts: &TrajectorySet, truth: &StateMatrix, scenario: &Scenario, repetition: usize, master_seed: u64, detect_threshold_kmh: f64) -> Result<RepetitionRecord> {
    let seeds = RepetitionSeeds::derive(master_seed, repetition);
    let tag = |e: Error| Error::Scenario {
        scenario: format!("{} / rep {repetition}", scenario.label),
        seeds: format!("master={master_seed}, sample={}, corruption={}", seeds.sample, seeds.corruption),
        source: Box::new(e),
    };
    let inner = || -> Result<RepetitionRecord> {
        let sampled = sample_penetration(ts, scenario.penetration_rate, seeds.sample)?;
        let clean = build_matrix(&sampled, &scenario.grid)?;
        let plan = CorruptionPlan {
            count_type1: scenario.count_type1,
            count_type2: scenario.count_type2,
            seed: seeds.corruption,
            ..Default::default()
        };
        let (m, records) = if plan.count_type1 + plan.count_type2 > 0 {
            inject(&clean, &plan)?
        } else {
            (clean, Vec::new())
        };
        let res = solve(&m, &scenario.solver)?;
        let metrics = match scenario.eval_geometry {
            EvalGeometry::Native => compute_metrics(&res.l_hat, truth)?,
            EvalGeometry::Rectangular => compute_metrics(&res.l_hat.rasterize(truth.grid())?, truth)?,
        };
        let detection = if records.is_empty() {
            None
        } else {
            Some(score_detection(&res.s_hat, &records, detect_threshold_kmh)?)
        };
        Ok(RepetitionRecord {
            repetition,
            seeds,
            metrics,
            detection,
            iterations: res.iterations,
            converged: res.converged,
            wall_time_s: res.wall_time_s,
        })
    };
    inner().map_err(tag)
}

/// Runs `reps` repetitions of each scenario. Repetitions fan out under
/// `execution`; results are ordered by scenario then repetition.
pub fn run_scenarios(
    ts: &TrajectorySet,
    scenarios: Vec<Scenario>,
    reps: usize,
    master_seed: u64,
    opts: &SweepOptions,
) -> Result<Vec<ScenarioReport>> {
    if reps == 0 {
        return Err(Error::param("reps", "must be >= 1"));
    }
    for s in &scenarios {
        s.grid.validate()?;
        s.solver.validate()?;
        if !(s.penetration_rate > 0.0 && s.penetration_rate <= 1.0) {
            return Err(Error::param("penetration_rate", format!("must lie in (0, 1], got {}", s.penetration_rate)));
        }
    }
    let mut truths: Vec<StateMatrix> = Vec::new();
    let mut truth_of = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let g = s.eval_grid();
        let i = match truths.iter().position(|t| *t.grid() == g) {
            Some(i) => i,
            None => {
                truths.push(ground_truth_matrix(ts, &g)?);
                truths.len() - 1
            }
        };
        truth_of.push(i);
    }

    let jobs: Vec<(usize, usize)> = (0..scenarios.len()).flat_map(|s| (0..reps).map(move |r| (s, r))).collect();
    let results = opts.execution.map(jobs, |(s, r)| {
        run_one(ts, &truths[truth_of[s]], &scenarios[s], r, master_seed, opts.detect_threshold_kmh)
    });
    let mut results = results.into_iter();
    scenarios
        .into_iter()
        .map(|scenario| {
            let records = results.by_ref().take(reps).collect::<Result<Vec<_>>>()?;
            let summary = Summary::of(&records);
            Ok(ScenarioReport { scenario, records, summary })
        })
        .collect()
}

/// Re-runs a single logged repetition.
pub fn replay_repetition(ts: &TrajectorySet, scenario: &Scenario, master_seed: u64, repetition: usize, detect_threshold_kmh: f64) -> Result<RepetitionRecord> {
    let truth = ground_truth_matrix(ts, &scenario.eval_grid())?;
    run_one(ts, &truth, scenario, repetition, master_seed, detect_threshold_kmh)
}

fn report(mode: ExperimentMode, master_seed: u64, reps: usize, opts: &SweepOptions, scenarios: Vec<ScenarioReport>) -> ExperimentReport {
    ExperimentReport {
        mode,
        master_seed,
        repetitions: reps,
        detect_threshold_kmh: opts.detect_threshold_kmh,
        corruption_sampling: "uniform over eligible observed cells".into(),
        scenarios,
    }
}

fn grid_label(g: &GridSpec) -> String {
    match g.wave_speed_kmh {
        Some(v) => format!("oblique(v={v})"),
        None => "rectangular".into(),
    }
}

/// Penetration-rate sweep without corruption.
pub fn run_tse_sweep(
    ts: &TrajectorySet,
    grids: &[GridSpec],
    cfg: &SolverConfig,
    rates: &[f64],
    reps: usize,
    master_seed: u64,
    opts: &SweepOptions,
) -> Result<ExperimentReport> {
    let scenarios = grids
        .iter()
        .flat_map(|g| {
            rates.iter().map(move |&rate| Scenario {
                label: format!("{} cv={rate}", grid_label(g)),
                penetration_rate: rate,
                count_type1: 0,
                count_type2: 0,
                grid: *g,
                solver: *cfg,
                eval_geometry: opts.eval_geometry,
            })
        })
        .collect();
    let out = run_scenarios(ts, scenarios, reps, master_seed, opts)?;
    Ok(report(ExperimentMode::Tse, master_seed, reps, opts, out))
}

/// Corruption-level sweep at a fixed penetration rate; each level injects
/// that many cells of each type.
#[allow(clippy::too_many_arguments)]
pub fn run_rtse_sweep(
    ts: &TrajectorySet,
    g: &GridSpec,
    cfg: &SolverConfig,
    rate: f64,
    corruption_levels: &[usize],
    reps: usize,
    master_seed: u64,
    opts: &SweepOptions,
) -> Result<ExperimentReport> {
    let scenarios = corruption_levels
        .iter()
        .map(|&n| Scenario {
            label: format!("{} cv={rate} corruptions={n}+{n}", grid_label(g)),
            penetration_rate: rate,
            count_type1: n,
            count_type2: n,
            grid: *g,
            solver: *cfg,
            eval_geometry: opts.eval_geometry,
        })
        .collect();
    let out = run_scenarios(ts, scenarios, reps, master_seed, opts)?;
    Ok(report(ExperimentMode::Rtse, master_seed, reps, opts, out))
}

/// Wave-speed sweep of the oblique grid at a fixed penetration rate.
#[allow(clippy::too_many_arguments)]
pub fn run_wave_sensitivity(
    ts: &TrajectorySet,
    base_grid: &GridSpec,
    cfg: &SolverConfig,
    wave_speeds: &[f64],
    rate: f64,
    reps: usize,
    master_seed: u64,
    opts: &SweepOptions,
) -> Result<ExperimentReport> {
    let scenarios = wave_speeds
        .iter()
        .map(|&v| {
            let grid = base_grid.with_wave_speed(Some(v))?;
            Ok(Scenario {
                label: format!("v={v} cv={rate}"),
                penetration_rate: rate,
                count_type1: 0,
                count_type2: 0,
                grid,
                solver: *cfg,
                eval_geometry: opts.eval_geometry,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = run_scenarios(ts, scenarios, reps, master_seed, opts)?;
    Ok(report(ExperimentMode::Sensitivity, master_seed, reps, opts, out))
}

/// The full model and its three reduced variants on one corrupted scenario:
/// rectangular grid, convex nuclear norm, and no sparse term.
#[allow(clippy::too_many_arguments)]
pub fn run_ablations(
    ts: &TrajectorySet,
    g: &GridSpec,
    cfg: &SolverConfig,
    rate: f64,
    corruptions_per_type: usize,
    reps: usize,
    master_seed: u64,
    opts: &SweepOptions,
) -> Result<ExperimentReport> {
    if !g.is_oblique() {
        return Err(Error::param("grid", "ablations need the oblique grid of the full model"));
    }
    let variants = [
        ("full", *g, *cfg),
        ("without wave grid", g.to_rectangular(), *cfg),
        (
            "without nonconvex rank",
            *g,
            SolverConfig {
                rank_surrogate: RankSurrogate::ConvexNn,
                ..*cfg
            },
        ),
        (
            "without sparse term",
            *g,
            SolverConfig {
                sparse_term_enabled: false,
                ..*cfg
            },
        ),
    ];
    let scenarios = variants
        .into_iter()
        .map(|(label, grid, solver)| Scenario {
            label: label.into(),
            penetration_rate: rate,
            count_type1: corruptions_per_type,
            count_type2: corruptions_per_type,
            grid,
            solver,
            eval_geometry: opts.eval_geometry,
        })
        .collect();
    let out = run_scenarios(ts, scenarios, reps, master_seed, opts)?;
    Ok(report(ExperimentMode::Ablation, master_seed, reps, opts, out))
}

/// One row per scenario with mean and standard deviation columns. The
/// wall-time column is left out unless `with_timing` is set, keeping the file
/// identical across reruns.
pub fn write_summary_csv<W: Write>(writer: W, report: &ExperimentReport, with_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "scenario",
        "penetration_rate",
        "wave_speed_kmh",
        "rank_surrogate",
        "sparse_term",
        "count_type1",
        "count_type2",
        "eval_geometry",
        "reps",
        "rmse_mean",
        "rmse_std",
        "mae_mean",
        "mae_std",
        "recall_mean",
        "precision_mean",
        "sign_agreement_mean",
        "iterations_mean",
    ];
    if with_timing {
        header.push("wall_time_mean_s");
    }
    w.write_record(&header)?;
    let opt = |s: &Option<Stat>| s.map_or(String::new(), |s| format!("{}", s.mean));
    for s in &report.scenarios {
        let sc = &s.scenario;
        let sm = &s.summary;
        let mut row = vec![
            sc.label.clone(),
            format!("{}", sc.penetration_rate),
            sc.grid.wave_speed_kmh.map_or(String::new(), |v| format!("{v}")),
            serde_json::to_value(sc.solver.rank_surrogate)?.as_str().unwrap_or_default().to_string(),
            sc.solver.sparse_term_enabled.to_string(),
            sc.count_type1.to_string(),
            sc.count_type2.to_string(),
            serde_json::to_value(sc.eval_geometry)?.as_str().unwrap_or_default().to_string(),
            s.records.len().to_string(),
            format!("{}", sm.rmse_kmh.mean),
            format!("{}", sm.rmse_kmh.std),
            format!("{}", sm.mae_kmh.mean),
            format!("{}", sm.mae_kmh.std),
            opt(&sm.recall),
            opt(&sm.precision),
            opt(&sm.sign_agreement),
            format!("{}", sm.iterations.mean),
        ];
        if with_timing {
            row.push(format!("{}", sm.wall_time_s.mean));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Full per-repetition archive.
pub fn write_report_json<W: Write>(writer: W, report: &ExperimentReport) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)?;
    Ok(())
}

impl ExperimentReport {
    /// Copy with every wall-time measurement set to zero; the rest is a pure
    /// function of the inputs and the master seed.
    pub fn without_timing(&self) -> ExperimentReport {
        let mut out = self.clone();
        for s in &mut out.scenarios {
            for r in &mut s.records {
                r.wall_time_s = 0.0;
            }
            s.summary = Summary::of(&s.records);
        }
        out
    }

    /// Sum of solver wall times over all repetitions.
    pub fn total_solve_time_s(&self) -> f64 {
        self.scenarios.iter().flat_map(|s| &s.records).map(|r| r.wall_time_s).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpeedField;
    use crate::trajectory::{generate_synthetic, SyntheticFieldSpec};
    use ndarray::{array, Array2};

    fn field(values: Array2<f64>) -> SpeedField {
        let (r, c) = values.dim();
        let g = GridSpec::rectangular(r as f64, c as f64, 1.0, 1.0).unwrap();
        SpeedField::new(g, values, Array2::from_elem((r, c), CellState::Observed)).unwrap()
    }

    #[test]
    fn metric_examples() {
        let truth = field(array![[0.0, 3.0]]);
        let est = field(array![[3.0, 3.0]]);
        let m = compute_metrics(&est, &truth).unwrap();
        assert!((m.rmse_kmh - 4.5f64.sqrt()).abs() < 1e-12);
        assert!((m.rmse_kmh - 2.1213).abs() < 1e-4);
        assert_eq!(m.mae_kmh, 1.5);
        assert_eq!(m.n_cells, 2);
        assert_eq!(compute_metrics(&truth, &truth).unwrap().rmse_kmh, 0.0);
        assert_eq!(compute_metrics(&truth, &est).unwrap(), m);
    }

    #[test]
    fn metrics_skip_cells_without_truth() {
        let g = GridSpec::rectangular(2.0, 2.0, 1.0, 1.0).unwrap();
        let observed = array![[true, false], [false, false]];
        let truth = StateMatrix::from_observations(g, &array![[10.0, 0.0], [0.0, 0.0]], &observed).unwrap();
        let est = SpeedField::new(g, array![[12.0, 99.0], [99.0, 99.0]], truth.mask().clone()).unwrap();
        let m = compute_metrics(&est, &truth).unwrap();
        assert_eq!((m.rmse_kmh, m.n_cells), (2.0, 1));
        assert!(matches!(compute_metrics(&est, &StateMatrix::empty(g)), Err(Error::EmptyEvaluation)));
        let other = GridSpec::rectangular(2.0, 2.0, 1.0, 2.0).unwrap();
        assert!(compute_metrics(&est, &StateMatrix::empty(other)).is_err());
    }

    #[test]
    fn stats_use_sample_std() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn seeds_ignore_the_scenario() {
        let a = RepetitionSeeds::derive(5, 3);
        assert_eq!(a, RepetitionSeeds::derive(5, 3));
        assert_ne!(a.sample, a.corruption);
        assert_ne!(a, RepetitionSeeds::derive(5, 4));
    }

    fn small_set() -> TrajectorySet {
        let spec = SyntheticFieldSpec {
            wave_band_count: 1,
            ..SyntheticFieldSpec::default()
        };
        generate_synthetic(&spec, 120.0, 300.0, 60, 5.0).unwrap().0
    }

    #[test]
    fn sweep_shapes_and_level_zero() {
        let ts = small_set();
        let g = GridSpec::oblique(120.0, 300.0, 3.0, 5.0, -18.0).unwrap();
        let cfg = SolverConfig { max_iters: 60, ..Default::default() };
        let opts = SweepOptions::default();
        let tse = run_tse_sweep(&ts, &[g], &cfg, &[0.3], 2, 11, &opts).unwrap();
        assert_eq!(tse.scenarios.len(), 1);
        assert_eq!(tse.scenarios[0].records.len(), 2);
        let rtse = run_rtse_sweep(&ts, &g, &cfg, 0.3, &[0, 2], 2, 11, &opts).unwrap();
        assert_eq!(rtse.scenarios[0].records[0].metrics, tse.scenarios[0].records[0].metrics);
        assert!(rtse.scenarios[0].records[0].detection.is_none());
        assert!(rtse.scenarios[1].records[0].detection.is_some());

        let sens = run_wave_sensitivity(&ts, &g, &cfg, &[-18.0], 0.3, 1, 11, &opts).unwrap();
        assert_eq!(sens.scenarios.len(), 1);

        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rtse, true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn summary_recomputes_from_records() {
        let ts = small_set();
        let g = GridSpec::rectangular(120.0, 300.0, 3.0, 5.0).unwrap();
        let cfg = SolverConfig { max_iters: 40, ..Default::default() };
        let r = run_tse_sweep(&ts, &[g], &cfg, &[0.5], 3, 2, &SweepOptions::default()).unwrap();
        let s = &r.scenarios[0];
        let rmse: Vec<f64> = s.records.iter().map(|r| r.metrics.rmse_kmh).collect();
        let st = Stat::of(&rmse);
        assert!((st.mean - s.summary.rmse_kmh.mean).abs() <= 1e-12);
        assert!((st.std - s.summary.rmse_kmh.std).abs() <= 1e-12);
    }

    #[test]
    fn ablations_need_oblique_grid_and_emit_four_rows() {
        let ts = small_set();
        let g = GridSpec::oblique(120.0, 300.0, 3.0, 5.0, -18.0).unwrap();
        let cfg = SolverConfig { max_iters: 30, ..Default::default() };
        let opts = SweepOptions {
            eval_geometry: EvalGeometry::Rectangular,
            ..Default::default()
        };
        assert!(run_ablations(&ts, &g.to_rectangular(), &cfg, 0.5, 1, 1, 0, &opts).is_err());
        let r = run_ablations(&ts, &g, &cfg, 0.5, 1, 1, 0, &opts).unwrap();
        assert_eq!(r.scenarios.len(), 4);
        assert!(r.scenarios.iter().all(|s| s.records.len() == 1));
    }

    #[test]
    fn errors_carry_scenario_and_seeds() {
        let ts = small_set();
        let g = GridSpec::rectangular(120.0, 300.0, 3.0, 5.0).unwrap();
        let err = run_rtse_sweep(&ts, &g, &SolverConfig::default(), 0.1, &[100_000], 1, 3, &SweepOptions::default()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("sample=") && text.contains("corruptions=100000"), "{text}");
    }
}
