use ndarray::Array2;
use proptest::prelude::*;

use tse_core::eval::{compute_metrics, run_ablations, run_tse_sweep, EvalGeometry, SweepOptions};
use tse_core::grid::{build_matrix, field_on_grid, read_matrix, save_matrix, CellState, GridSpec, GridValues, MatrixKind, StateMatrix};
use tse_core::parallel::Execution;
use tse_core::solver::{numerical_rank, solve, SolverConfig};
use tse_core::trajectory::{generate_synthetic, sample_penetration, SyntheticFieldSpec, TrajectorySet};

fn synthetic(segment: f64, window: f64) -> TrajectorySet {
    let spec = SyntheticFieldSpec {
        wave_band_count: 1,
        transition_s: 30.0,
        ..Default::default()
    };
    let n = ((window + segment * 3.6 / spec.free_flow_speed_kmh) / 2.0) as usize + 1;
    generate_synthetic(&spec, segment, window, n, 2.0).unwrap().0
}

/// Mean of (max - min) over the columns that lie fully inside the domain.
fn mean_column_spread(values: &Array2<f64>) -> f64 {
    let spreads: Vec<f64> = values
        .columns()
        .into_iter()
        .filter(|c| c.iter().all(|v| !v.is_nan()))
        .map(|c| {
            let (lo, hi) = c.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            hi - lo
        })
        .collect();
    spreads.iter().sum::<f64>() / spreads.len() as f64
}

#[test]
fn sequential_and_parallel_sweeps_agree_bitwise() {
    let ts = synthetic(150.0, 300.0);
    let g = GridSpec::oblique(150.0, 300.0, 3.0, 5.0, -18.0).unwrap();
    let cfg = SolverConfig {
        truncation_fraction: 0.05,
        max_iters: 120,
        ..Default::default()
    };
    let run = |execution| {
        let opts = SweepOptions {
            execution,
            ..Default::default()
        };
        run_tse_sweep(&ts, &[g, g.to_rectangular()], &cfg, &[0.2, 0.4], 3, 21, &opts)
            .unwrap()
            .without_timing()
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn wave_aligned_grid_concentrates_the_field() {
    let spec = SyntheticFieldSpec {
        noise_std_kmh: 0.0,
        ..Default::default()
    };
    let (_, field) = generate_synthetic(&spec, 300.0, 600.0, 10, 2.0).unwrap();
    let obl = field_on_grid(&field, &GridSpec::oblique(300.0, 600.0, 3.0, 5.0, -18.0).unwrap()).unwrap();
    let rect = field_on_grid(&field, &GridSpec::rectangular(300.0, 600.0, 3.0, 5.0).unwrap()).unwrap();
    let (o, r) = (mean_column_spread(obl.values()), mean_column_spread(rect.values()));
    // Oblique columns follow the wave lines; only cells straddling a ramp
    // step vary.
    assert!(o < 1.0 && o * 10.0 < r, "oblique {o} vs rectangular {r}");

    // Numerical rank at 1e-8 relative tolerance, oblique restricted to the
    // columns that have a value in every row.
    let full: Vec<usize> = (0..obl.values().ncols())
        .filter(|&c| obl.values().column(c).iter().all(|v| !v.is_nan()))
        .collect();
    let inner = obl.values().select(ndarray::Axis(1), &full);
    let (ro, rr) = (numerical_rank(&inner, 1e-8).unwrap(), numerical_rank(rect.values(), 1e-8).unwrap());
    assert!(ro <= rr, "rank {ro} vs {rr}");
}

#[test]
fn matrix_files_round_trip() {
    let ts = sample_penetration(&synthetic(150.0, 300.0), 0.3, 2).unwrap();
    let g = GridSpec::oblique(150.0, 300.0, 3.0, 5.0, -18.0).unwrap();
    let m = build_matrix(&ts, &g).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = (dir.path().join("m.csv"), dir.path().join("m.json"));
    save_matrix(&csv, &json, MatrixKind::Observed, &m, Some(m.counts())).unwrap();
    assert_eq!(read_matrix(&csv, &json).unwrap(), m);
}

#[test]
fn ablation_variants_run_end_to_end() {
    let ts = synthetic(150.0, 300.0);
    let g = GridSpec::oblique(150.0, 300.0, 3.0, 5.0, -18.0).unwrap();
    let cfg = SolverConfig {
        truncation_fraction: 0.05,
        ..Default::default()
    };
    let opts = SweepOptions {
        eval_geometry: EvalGeometry::Rectangular,
        ..Default::default()
    };
    let rep = run_ablations(&ts, &g, &cfg, 0.3, 5, 2, 3, &opts).unwrap();
    assert_eq!(rep.scenarios.len(), 4);
    for s in &rep.scenarios {
        let rmse = s.summary.rmse_kmh.mean;
        assert!(rmse.is_finite() && rmse < 30.0, "{}: {rmse}", s.scenario.label);
    }
    // Without the sparse term nothing is flagged.
    assert_eq!(rep.scenarios[3].summary.recall.unwrap().mean, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_output_respects_bounds_and_mask(
        rows in 4usize..12,
        cols in 4usize..12,
        seed in any::<u64>(),
        frac in 0.2f64..0.9,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..130.0));
        let mut observed = Array2::from_shape_fn((rows, cols), |_| rng.random_bool(frac));
        observed[(0, 0)] = true;
        let g = GridSpec::rectangular(rows as f64, cols as f64, 1.0, 1.0).unwrap();
        let m = StateMatrix::from_observations(g, &values, &observed).unwrap();
        let cfg = SolverConfig { max_iters: 80, ..Default::default() };
        let res = solve(&m, &cfg).unwrap();
        prop_assert!(res.l_hat.values().iter().all(|v| (0.0..=cfg.v_max_kmh).contains(v)));
        prop_assert_eq!(res.l_hat.mask(), m.mask());
        prop_assert_eq!(res.residual_trace.len(), res.iterations);
        if res.converged {
            prop_assert!(*res.residual_trace.last().unwrap() < cfg.epsilon);
        }
        let self_err = compute_metrics(&res.l_hat, &res.l_hat).unwrap();
        prop_assert_eq!(self_err.rmse_kmh, 0.0);
        prop_assert!(m.mask().iter().all(|&s| s != CellState::OutOfDomain));
    }
}
