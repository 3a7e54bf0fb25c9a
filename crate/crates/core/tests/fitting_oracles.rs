use std::time::Instant;

use sparselaw::fitting::{fit_full, fit_sparsity_only, huber, objective, FitConfig, FitResult, Param};
use sparselaw::simulator::{reduced_subset, simulate_sweep, SweepGrid};
use sparselaw::{eval_law, gain, Error, ScalingLawCoefficients, SweepDataset};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Splits off ten records spread evenly through the grid.
fn hold_out(data: &SweepDataset) -> (SweepDataset, Vec<(f64, f64, f64)>) {
    let stride = data.len() / 10;
    let held: Vec<usize> = (0..10).map(|i| i * stride + (i % stride.max(1))).collect();
    let train = data.filtered(|i, _| !held.contains(&i)).unwrap();
    let points = held
        .iter()
        .map(|&i| {
            let r = &data.records[i];
            (r.sparsity, r.nonzero_params, r.data)
        })
        .collect();
    (train, points)
}

fn worst_held_out_error(fit: &FitResult, truth: &ScalingLawCoefficients, points: &[(f64, f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(s, n, d)| {
            let want = eval_law(truth, s, n, d).unwrap();
            rel(eval_law(&fit.coefficients, s, n, d).unwrap(), want)
        })
        .fold(0.0, f64::max)
}

fn family_setup(name: &str) -> (ScalingLawCoefficients, SweepGrid, FitConfig) {
    match name {
        "t5" => (ScalingLawCoefficients::t5_c4(), SweepGrid::t5(), FitConfig::language()),
        _ => (ScalingLawCoefficients::vit_jft(), SweepGrid::vit(), FitConfig::vision()),
    }
}

fn oracle_run(name: &str, sigma: f64, seed: u64) -> f64 {
    let (truth, grid, config) = family_setup(name);
    let data = simulate_sweep(&truth, &grid, sigma, seed).unwrap();
    let (train, points) = hold_out(&data);
    let fit = fit_full(&train, &FitConfig { seed, ..config }).unwrap();
    assert!(fit.converged);
    worst_held_out_error(&fit, &truth, &points)
}

#[test]
fn noiseless_fits_predict_held_out_points() {
    let start = Instant::now();
    for name in ["t5", "vit"] {
        let err = oracle_run(name, 0.0, 1);
        assert!(err < 1e-3, "{name}: held-out error {err}");
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn noisy_fits_predict_held_out_points() {
    for name in ["t5", "vit"] {
        for seed in [2, 3] {
            let err = oracle_run(name, 0.01, seed);
            assert!(err < 0.02, "{name} seed {seed}: held-out error {err}");
        }
    }
}

#[test]
fn fit_is_deterministic_and_self_consistent() {
    let truth = ScalingLawCoefficients::t5_c4();
    let data = simulate_sweep(&truth, &SweepGrid::t5(), 0.01, 4).unwrap();
    let config = FitConfig { seed: 17, num_starts: 8, ..FitConfig::language() };
    let a = fit_full(&data, &config).unwrap();
    let b = fit_full(&data, &config).unwrap();
    assert_eq!(a, b);
    let again = objective(&data, &a.coefficients, config.huber_delta, config.log_loss);
    assert!(rel(again, a.objective_value) < 1e-10 || (again == 0.0 && a.objective_value == 0.0));
    let from_residuals = a.residuals.iter().map(|&r| huber(config.huber_delta, r)).sum::<f64>() / a.residuals.len() as f64;
    assert_eq!(from_residuals, a.objective_value);
    assert_eq!(a.starts_tried, 8);
    assert_eq!(a.start_objectives.len(), 8);
    for v in a.start_objectives.iter().flatten() {
        assert!(a.objective_value <= *v);
    }
    assert!(a.start_objectives.iter().flatten().any(|v| *v == a.objective_value));
}

#[test]
fn seed_changes_starts_not_contract() {
    let truth = ScalingLawCoefficients::vit_jft();
    let data = simulate_sweep(&truth, &SweepGrid::vit(), 0.0, 0).unwrap();
    let a = fit_full(&data, &FitConfig { seed: 1, num_starts: 4, ..FitConfig::vision() }).unwrap();
    let b = fit_full(&data, &FitConfig { seed: 2, num_starts: 4, ..FitConfig::vision() }).unwrap();
    assert_ne!(a.start_objectives, b.start_objectives);
    for fit in [a, b] {
        assert!(fit.coefficients.validate().is_ok());
        assert!(fit.objective_value >= 0.0);
    }
}

#[test]
fn single_sparsity_level_is_degenerate() {
    let truth = ScalingLawCoefficients::t5_c4();
    let mut grid = SweepGrid::t5();
    grid.sparsity_levels = vec![0.5];
    let data = simulate_sweep(&truth, &grid, 0.0, 0).unwrap();
    assert!(matches!(fit_full(&data, &FitConfig::language()), Err(Error::DegenerateData(_))));
    let tiny = data.filtered(|i, _| i < 5).unwrap();
    assert!(matches!(fit_full(&tiny, &FitConfig::language()), Err(Error::DegenerateData(_))));
    assert!(matches!(
        fit_sparsity_only(&data, &truth, &FitConfig::language()),
        Err(Error::DegenerateData(_))
    ));
}

#[test]
fn frozen_parameters_are_bit_exact() {
    let truth = ScalingLawCoefficients::t5_c4();
    let data = simulate_sweep(&truth, &SweepGrid::t5(), 0.01, 8).unwrap();
    let dense = ScalingLawCoefficients::new(20.0, 0.7, 40.0, 0.2450000000000001, 6.9e8 + 3.0, 0.2030000000000007, 0.6510000000000003, "t5-c4", "unstructured").unwrap();
    let fit = fit_sparsity_only(&data, &dense, &FitConfig::language()).unwrap();
    for p in [Param::SizeExp, Param::DataCoef, Param::DataExp, Param::Irreducible] {
        assert_eq!(p.get(&fit.coefficients).to_bits(), p.get(&dense).to_bits(), "{p}");
    }
    let mut config = FitConfig::language();
    config.frozen.insert(Param::SparsityExp, 0.7123456789);
    let full = fit_full(&data, &config).unwrap();
    assert_eq!(full.coefficients.b_s.to_bits(), 0.7123456789f64.to_bits());
}

#[test]
fn reduced_fit_recovers_sparsity_term() {
    let truth = ScalingLawCoefficients::new(30.0, 1.1, 25.0, 0.245, 6.9e8, 0.203, 0.651, "t5-c4", "unstructured").unwrap();
    let data = simulate_sweep(&truth, &SweepGrid::t5(), 0.0, 0).unwrap();
    let reduced = reduced_subset(&data).unwrap();
    assert_eq!(reduced.len(), 24);
    let fit = fit_sparsity_only(&reduced, &truth, &FitConfig::language()).unwrap();
    let full = SweepGrid::t5();
    let mut worst: f64 = 0.0;
    for (s, n, d) in full.points() {
        let want = eval_law(&truth, s, n, d).unwrap();
        worst = worst.max(rel(eval_law(&fit.coefficients, s, n, d).unwrap(), want));
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn nm_reduced_fit_recovers_published_gains() {
    let truth = ScalingLawCoefficients::t5_c4_nm();
    let dense = ScalingLawCoefficients::t5_c4();
    let mut grid = SweepGrid::t5();
    grid.sparsity_levels = vec![0.0, 0.5, 0.75];
    grid.pattern = "n:8".into();
    for (sigma, seed) in [(0.0, 0), (0.005, 1)] {
        let data = simulate_sweep(&truth, &grid, sigma, seed).unwrap();
        let reduced = reduced_subset(&data).unwrap();
        let config = FitConfig { huber_delta: 1e-2, ..FitConfig::language() };
        let fit = fit_sparsity_only(&reduced, &dense, &config).unwrap();
        assert_eq!(fit.coefficients.pattern, "n:8");
        for (s, want) in [(0.5, 1.67), (0.75, 1.81)] {
            let g = gain(&fit.coefficients, s).unwrap();
            assert!((g - want).abs() <= 0.05, "sigma {sigma}: gain({s}) = {g}");
        }
    }
}

#[test]
fn config_and_result_json() {
    let config = FitConfig { seed: 3, num_starts: 2, ..FitConfig::vision() };
    let text = serde_json::to_string(&config).unwrap();
    assert!(text.contains("\"format_version\":1"));
    let back: FitConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, config);
    let data = simulate_sweep(&ScalingLawCoefficients::t5_c4(), &SweepGrid::t5(), 0.0, 0).unwrap();
    let fit = fit_full(&data, &FitConfig { num_starts: 2, ..FitConfig::language() }).unwrap();
    let back: FitResult = serde_json::from_str(&serde_json::to_string(&fit).unwrap()).unwrap();
    assert_eq!(back, fit);
}
