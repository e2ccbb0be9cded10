use std::time::Instant;

use ndarray::Array2;
use serde_json::{json, Value};

use tse_core::corruption::{inject, score_detection, write_records, CorruptionPlan, DetectionScore};
use tse_core::eval::{
    compute_metrics, run_ablations, run_rtse_sweep, run_tse_sweep, run_wave_sensitivity, write_report_json, write_summary_csv, ExperimentReport,
    MetricPair, RepetitionSeeds, SweepOptions,
};
use tse_core::grid::{
    build_matrix, field_on_grid, ground_truth_matrix, read_matrix, write_matrix_csv, write_pgm, write_sidecar, GridSpec, GridValues, MatrixKind,
    MatrixSidecar, StateMatrix,
};
use tse_core::parallel::Execution;
use tse_core::solver::{solve, ConvergenceReport};
use tse_core::trajectory::{generate_synthetic, load_trajectories, sample_penetration, write_trajectories, TrajectorySet};

use crate::config::{Mode, RunConfig};
use crate::output::{Artifacts, Manifest, SEED_DERIVATION};
use crate::CliError;

pub struct Context {
    pub config: RunConfig,
    pub execution: Execution,
}

fn grid(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    cfg.grid.ok_or_else(|| CliError::Config("grid: required for this dataset".into()))
}

/// Loads or generates the full trajectory set plus a description for the
/// manifest.
fn trajectories(cfg: &RunConfig) -> Result<(TrajectorySet, Value), CliError> {
    let g = grid(cfg)?;
    let (s, w) = (g.segment_length_m, g.window_length_s);
    if let Some(t) = &cfg.dataset.trajectories {
        let out = load_trajectories(&t.path, &t.format, s, w)?;
        let info = json!({
            "rows_read": out.rows_read,
            "rows_filtered": out.rows_filtered,
            "rows_out_of_domain": out.rows_out_of_domain,
            "rows_duplicate": out.rows_duplicate,
            "vehicles": out.trajectories.vehicle_count(),
            "points": out.trajectories.point_count(),
        });
        return Ok((out.trajectories, info));
    }
    if let Some(syn) = &cfg.dataset.synthetic {
        let (ts, _) = generate_synthetic(&syn.field, s, w, syn.vehicle_count(s, w), syn.entry_headway_s)?;
        let info = json!({"vehicles": ts.vehicle_count(), "points": ts.point_count()});
        return Ok((ts, info));
    }
    Err(CliError::Config("dataset: this command needs trajectories (file or synthetic), not a matrix".into()))
}

fn matrix_files(out: &mut Artifacts, stem: &str, kind: MatrixKind, m: &impl GridValues, counts: Option<&Array2<u32>>, v_max: f64) -> Result<(), CliError> {
    out.write(&format!("{stem}.csv"), |w| write_matrix_csv(w, m.values()))?;
    out.write(&format!("{stem}.json"), |w| write_sidecar(w, &MatrixSidecar::describe(kind, m, counts)))?;
    out.write(&format!("{stem}.pgm"), |w| write_pgm(w, m.values(), v_max))
}

fn finish(mut out: Artifacts, command: &'static str, cfg: &RunConfig, seeds: Vec<(String, u64)>, dataset: Value, start: Instant) -> Result<(), CliError> {
    #[derive(serde::Serialize)]
    struct WithDataset<'a> {
        #[serde(flatten)]
        manifest: Manifest<'a>,
        dataset: Value,
    }
    let manifest = WithDataset {
        manifest: Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: cfg,
            seeds,
            seed_derivation: SEED_DERIVATION,
            artifacts: out.names().to_vec(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        dataset,
    };
    out.write_json("manifest.json", &manifest)
}

/// Observations for `build-grid` and `estimate`, with the full-data reference
/// when the vehicles were subsampled.
fn observations(cfg: &RunConfig, seeds: &RepetitionSeeds) -> Result<(StateMatrix, Option<StateMatrix>, Value), CliError> {
    if let Some(files) = &cfg.dataset.matrix {
        let m = read_matrix(&files.csv, &files.sidecar)?;
        if cfg.grid.is_some_and(|g| g != *m.grid()) {
            return Err(CliError::Config("grid: differs from the grid recorded in dataset.matrix.sidecar".into()));
        }
        if cfg.estimate.penetration_rate.is_some() {
            return Err(CliError::Config("estimate.penetration_rate: cannot subsample a saved matrix".into()));
        }
        let info = json!({"observed_cells": m.observed_count()});
        return Ok((m, None, info));
    }
    let g = grid(cfg)?;
    let (full, info) = trajectories(cfg)?;
    match cfg.estimate.penetration_rate {
        Some(rate) => {
            let sampled = sample_penetration(&full, rate, seeds.sample)?;
            Ok((build_matrix(&sampled, &g)?, Some(ground_truth_matrix(&full, &g)?), info))
        }
        None => Ok((build_matrix(&full, &g)?, None, info)),
    }
}

fn seed_list(cfg: &RunConfig, seeds: &RepetitionSeeds) -> Vec<(String, u64)> {
    vec![
        ("master".into(), cfg.experiment.master_seed),
        ("sample".into(), seeds.sample),
        ("corruption".into(), seeds.corruption),
    ]
}

pub fn build_grid(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = &ctx.config;
    if cfg.dataset.matrix.is_some() {
        return Err(CliError::Config("dataset: build-grid needs trajectories (file or synthetic)".into()));
    }
    let seeds = RepetitionSeeds::derive(cfg.experiment.master_seed, 0);
    let (m, _, info) = observations(cfg, &seeds)?;
    let mut out = Artifacts::create(&cfg.output_dir)?;
    matrix_files(&mut out, "observed", MatrixKind::Observed, &m, Some(m.counts()), cfg.solver.v_max_kmh)?;
    let info = json!({"source": info, "shape": m.shape(), "observed_cells": m.observed_count()});
    finish(out, "build-grid", cfg, seed_list(cfg, &seeds), info, start)
}

#[derive(serde::Serialize)]
struct EstimateReport {
    convergence: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<DetectionScore>,
}

pub fn estimate(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = &ctx.config;
    let seeds = RepetitionSeeds::derive(cfg.experiment.master_seed, 0);
    let (clean, truth, info) = observations(cfg, &seeds)?;
    let plan = CorruptionPlan {
        count_type1: cfg.estimate.count_type1,
        count_type2: cfg.estimate.count_type2,
        seed: seeds.corruption,
        ..Default::default()
    };
    let (m, records) = if plan.count_type1 + plan.count_type2 > 0 {
        inject(&clean, &plan)?
    } else {
        (clean, Vec::new())
    };
    let res = solve(&m, &cfg.solver)?;

    let metrics = truth.as_ref().map(|t| compute_metrics(&res.l_hat, t)).transpose()?;
    let detection = if records.is_empty() {
        None
    } else {
        Some(score_detection(&res.s_hat, &records, cfg.experiment.detect_threshold_kmh)?)
    };
    // Timing goes to the manifest so the report is reproducible byte for byte.
    let mut convergence = serde_json::to_value(ConvergenceReport::new(&res, &cfg.solver, seed_list(cfg, &seeds)))?;
    if let Some(obj) = convergence.as_object_mut() {
        obj.remove("wall_time_s");
    }

    let mut out = Artifacts::create(&cfg.output_dir)?;
    let v_max = cfg.solver.v_max_kmh;
    matrix_files(&mut out, "observed", MatrixKind::Observed, &m, Some(m.counts()), v_max)?;
    if !records.is_empty() {
        out.write("corruptions.csv", |w| write_records(w, &records))?;
    }
    matrix_files(&mut out, "l_hat", MatrixKind::Estimate, &res.l_hat, None, v_max)?;
    out.write("s_hat.csv", |w| write_matrix_csv(w, res.s_hat.values()))?;
    out.write("s_hat.json", |w| write_sidecar(w, &MatrixSidecar::describe(MatrixKind::Anomaly, &res.s_hat, None)))?;
    out.write("s_hat.pgm", |w| write_pgm(w, &res.s_hat.values().mapv(f64::abs), v_max))?;
    out.write_json(
        "report.json",
        &EstimateReport {
            convergence,
            metrics,
            detection,
        },
    )?;
    let info = json!({"source": info, "solve_wall_time_s": res.wall_time_s});
    finish(out, "estimate", cfg, seed_list(cfg, &seeds), info, start)
}

pub fn experiment(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = &ctx.config;
    let g = grid(cfg)?;
    let (ts, info) = trajectories(cfg)?;
    let e = &cfg.experiment;
    let opts = SweepOptions {
        eval_geometry: e.eval_geometry,
        detect_threshold_kmh: e.detect_threshold_kmh,
        execution: ctx.execution,
    };
    let (seed, reps, s) = (e.master_seed, e.reps, &cfg.solver);
    let report: ExperimentReport = match e.mode {
        Mode::Tse => {
            let mut grids = vec![g];
            if g.is_oblique() && e.compare_rectangular {
                grids.push(g.to_rectangular());
            }
            run_tse_sweep(&ts, &grids, s, &e.rates, reps, seed, &opts)?
        }
        Mode::Rtse => run_rtse_sweep(&ts, &g, s, e.penetration_rate, &e.corruption_levels, reps, seed, &opts)?,
        Mode::Sensitivity => run_wave_sensitivity(&ts, &g, s, &e.wave_speeds_kmh, e.penetration_rate, reps, seed, &opts)?,
        Mode::Ablation => run_ablations(&ts, &g, s, e.penetration_rate, e.corruptions_per_type, reps, seed, &opts)?,
    };
    let mut out = Artifacts::create(&cfg.output_dir)?;
    let stable = report.without_timing();
    out.write("report.json", |w| write_report_json(w, &stable))?;
    out.write("summary.csv", |w| write_summary_csv(w, &stable, false))?;
    let seeds: Vec<(String, u64)> = (0..reps)
        .flat_map(|r| {
            let d = RepetitionSeeds::derive(seed, r);
            [(format!("rep{r}.sample"), d.sample), (format!("rep{r}.corruption"), d.corruption)]
        })
        .chain(std::iter::once(("master".to_string(), seed)))
        .collect();
    let info = json!({"source": info, "total_solve_time_s": report.total_solve_time_s()});
    finish(out, "experiment", cfg, seeds, info, start)
}

pub fn synth(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = &ctx.config;
    let syn = cfg
        .dataset
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("dataset.synthetic: synth needs a synthetic dataset".into()))?;
    let g = grid(cfg)?;
    let (s, w) = (g.segment_length_m, g.window_length_s);
    let (ts, field) = generate_synthetic(&syn.field, s, w, syn.vehicle_count(s, w), syn.entry_headway_s)?;
    let truth = field_on_grid(&field, &g)?;
    let mut out = Artifacts::create(&cfg.output_dir)?;
    out.write("trajectories.csv", |wr| write_trajectories(wr, &ts))?;
    out.write_json("ground_truth.json", &field)?;
    matrix_files(&mut out, "truth", MatrixKind::Truth, &truth, None, cfg.solver.v_max_kmh)?;
    let info = json!({"vehicles": ts.vehicle_count(), "points": ts.point_count()});
    finish(out, "synth", cfg, vec![("field".into(), syn.field.seed)], info, start)
}
