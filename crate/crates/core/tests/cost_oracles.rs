use proptest::prelude::*;
use sparselaw::cost::{
    chinchilla_data_for_size, chinchilla_frontier, chinchilla_optimal, cmul, compute_multiple_over_chinchilla,
    log_space, loss_at_compute, optimal_sparsity_closed, optimal_sparsity_numeric, sparsity_contour,
    sparsity_contour_numeric, Contour, CostMode, CostModel,
};
use sparselaw::pruning::PruneSchedule;
use sparselaw::{eval_law, ScalingLawCoefficients};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn unit() -> ScalingLawCoefficients {
    ScalingLawCoefficients::new(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, "toy", "unstructured").unwrap()
}

fn families() -> [ScalingLawCoefficients; 2] {
    [ScalingLawCoefficients::vit_jft(), ScalingLawCoefficients::t5_c4()]
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

// Cost of the gradual schedule relative to a dense run: dense phase, then
// the pruning window at the current density, then the final sparse phase,
// all charged against a dense model of size N / (1 - S).
fn integrated_multiplier(s: f64) -> f64 {
    let sched = PruneSchedule::new(s).unwrap();
    let window = sched.end_frac - sched.start_frac;
    let avg_density = simpson(
        |t| 1.0 - sched.sparsity_at(t).unwrap(),
        sched.start_frac,
        sched.end_frac,
        2000,
    ) / window;
    0.25 / (1.0 - s) + 0.5 * avg_density / (1.0 - s) + 0.25
}

fn ternary_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

fn slope(contour: &Contour, model: &CostModel, compute_axis: bool) -> f64 {
    let first = contour.points.first().unwrap();
    let last = contour.points.last().unwrap();
    let y = |p: &sparselaw::cost::ContourPoint| if compute_axis { p.compute_data(model) } else { p.data };
    (y(last).ln() - y(first).ln()) / (last.params.ln() - first.params.ln())
}

#[test]
fn cmul_matches_integrated_schedule_cost() {
    for s in [0.0, 0.25, 0.5, 0.75, 0.875] {
        let oracle = integrated_multiplier(s);
        let got = cmul(s).unwrap();
        assert!((got - oracle).abs() < 1e-6, "S={s}: {got} vs {oracle}");
        let via_model = CostModel::sparse().multiplier(s).unwrap();
        assert!((via_model - got).abs() < 1e-14);
    }
    assert_eq!(cmul(0.0).unwrap(), 1.0);
    assert!((cmul(0.5).unwrap() - 1.375).abs() < 1e-12);
    assert!((cmul(0.875).unwrap() - 3.625).abs() < 1e-12);
}

#[test]
fn multiplier_derivative_matches_finite_difference() {
    for model in [CostModel::dense(), CostModel::sparse()] {
        for s in [0.01, 0.3, 0.6, 0.9] {
            let h = 1e-6;
            let fd = (model.multiplier(s + h).unwrap() - model.multiplier(s - h).unwrap()) / (2.0 * h);
            let analytic = model.multiplier_derivative(s).unwrap();
            assert!(rel(analytic, fd) < 1e-6, "{model:?} S={s}");
        }
    }
}

#[test]
fn flops_examples() {
    let dense = CostModel::dense();
    assert_eq!(dense.training_flops(1e6, 1e9, 0.0).unwrap(), 6e15);
    assert_eq!(dense.encoder_decoder().training_flops(1e6, 1e9, 0.0).unwrap(), 3e15);
    let sparse = CostModel::sparse();
    assert!(rel(sparse.training_flops(1e6, 1e9, 0.5).unwrap(), 8.25e15) < 1e-15);
    assert!(rel(sparse.data_for_compute(8.25e15, 1e6, 0.5).unwrap(), 1e9) < 1e-15);
    let full = dense.data_for_compute(1e18, 1e6, 0.0).unwrap();
    let half = dense.data_for_compute(1e18, 1e6, 0.5).unwrap();
    assert!(rel(half, 0.5 * full) < 1e-15);
    assert!(sparse.training_flops(1e6, 1e9, 1.0).is_err());
    assert!(sparse.data_for_compute(0.0, 1e6, 0.5).is_err());
    assert!(sparse.data_for_compute(1e15, -1.0, 0.5).is_err());
}

#[test]
fn chinchilla_unit_case() {
    let (n, d) = chinchilla_optimal(&unit(), &CostModel::dense(), 6.0).unwrap();
    assert!((n - 1.0).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
    assert!(chinchilla_optimal(&unit(), &CostModel::dense(), 0.0).is_err());
}

#[test]
fn chinchilla_matches_scalar_search() {
    let model = CostModel::dense();
    for c in families() {
        for compute in [1e17, 1e19, 1e21, 1e23] {
            let (n, d) = chinchilla_optimal(&c, &model, compute).unwrap();
            let loss = |ln_n: f64| {
                let n = ln_n.exp();
                eval_law(&c, 0.0, n, compute / (6.0 * n)).unwrap()
            };
            let ln_best = ternary_min(loss, 0.0, 40.0);
            assert!((n.ln() - ln_best).abs() < 1e-6, "{} C={compute}: {} vs {ln_best}", c.family, n.ln());
            assert!(rel(6.0 * n * d, compute) < 1e-12);
            let lhs = c.b_n * (c.a_s + c.c_s) * n.powf(-c.b_n);
            let rhs = c.b_d * (c.a_d / d).powf(c.b_d);
            assert!(rel(lhs, rhs) < 1e-10);
            assert!(rel(chinchilla_data_for_size(&c, n).unwrap(), d) < 1e-10);
        }
    }
}

#[test]
fn chinchilla_power_law_homogeneity() {
    let model = CostModel::dense();
    for c in families() {
        let (n1, _) = chinchilla_optimal(&c, &model, 1e20).unwrap();
        let (n2, _) = chinchilla_optimal(&c, &model, 2e20).unwrap();
        let expected = 2f64.powf(c.b_d / (c.b_n + c.b_d));
        assert!(rel(n2 / n1, expected) < 1e-12);
    }
}

#[test]
fn closed_form_matches_numeric_on_grid() {
    let model = CostModel::dense();
    for (c, c_hi) in [(ScalingLawCoefficients::vit_jft(), 1e21), (ScalingLawCoefficients::t5_c4(), 1e23)] {
        let sizes = log_space(1e7, 1e10, 10);
        let budgets = log_space(1e17, c_hi, 10);
        let mut interior = 0;
        for &n in &sizes {
            for &compute in &budgets {
                let closed = optimal_sparsity_closed(&c, &model, n, compute).unwrap();
                let numeric = optimal_sparsity_numeric(&c, &model, n, compute).unwrap();
                assert!(
                    (closed - numeric).abs() < 1e-4,
                    "{} N={n:e} C={compute:e}: closed {closed} numeric {numeric}",
                    c.family
                );
                if closed > 0.0 {
                    interior += 1;
                }
            }
        }
        assert!(interior >= 30, "grid should exercise the unclamped branch");
    }
}

#[test]
fn closed_form_clamps_and_requires_dense_mode() {
    let t5 = ScalingLawCoefficients::t5_c4();
    assert_eq!(optimal_sparsity_closed(&t5, &CostModel::dense(), 1e10, 1e12).unwrap(), 0.0);
    assert!(optimal_sparsity_closed(&t5, &CostModel::sparse(), 1e8, 1e20).is_err());
    for model in [CostModel::dense(), CostModel::sparse()] {
        let tiny = optimal_sparsity_numeric(&t5, &model, 1e8, 1e9).unwrap();
        assert!(tiny < 1e-6);
    }
}

#[test]
fn numeric_optimum_is_a_minimum() {
    for c in families() {
        for model in [CostModel::dense(), CostModel::sparse()] {
            for (n, compute) in [(1e7, 1e18), (1e8, 1e20), (1e9, 1e22)] {
                let s = optimal_sparsity_numeric(&c, &model, n, compute).unwrap();
                let best = loss_at_compute(&c, &model, s, n, compute).unwrap();
                for i in 0..=100 {
                    let t = 0.999 * i as f64 / 100.0;
                    assert!(loss_at_compute(&c, &model, t, n, compute).unwrap() >= best - 1e-12);
                }
            }
        }
    }
}

#[test]
fn dense_accounting_prefers_less_sparsity() {
    for c in families() {
        for &n in &log_space(1e7, 1e10, 5) {
            for &compute in &log_space(1e17, 1e23, 7) {
                let dense = optimal_sparsity_numeric(&c, &CostModel::dense(), n, compute).unwrap();
                let sparse = optimal_sparsity_numeric(&c, &CostModel::sparse(), n, compute).unwrap();
                assert!(dense <= sparse + 1e-6, "{} N={n:e} C={compute:e}: {dense} > {sparse}", c.family);
            }
        }
    }
}

#[test]
fn contours_share_slope_with_frontier() {
    let sizes = log_space(1e6, 1e11, 12);
    for c in families() {
        let expected = c.b_n / c.b_d;
        for model in [CostModel::dense(), CostModel::sparse()] {
            let mut intercepts = vec![];
            for s in [0.5, 0.75, 0.875] {
                let contour = sparsity_contour(&c, &model, s, &sizes).unwrap();
                assert!((slope(&contour, &model, false) - expected).abs() < 1e-6);
                assert!((slope(&contour, &model, true) - expected).abs() < 1e-6);
                for w in contour.points.windows(2) {
                    let local = (w[1].data.ln() - w[0].data.ln()) / (w[1].params.ln() - w[0].params.ln());
                    assert!((local - expected).abs() < 1e-6);
                }
                intercepts.push(contour.points[0].data.ln() - expected * sizes[0].ln());
            }
            assert!(intercepts.windows(2).all(|w| (w[0] - w[1]).abs() > 1e-3));
            let frontier = chinchilla_frontier(&c, &model, &sizes).unwrap();
            assert!((slope(&frontier, &model, false) - expected).abs() < 1e-6);
        }
    }
}

#[test]
fn contour_points_are_stationary() {
    let sizes = log_space(1e6, 1e10, 5);
    for c in families() {
        for model in [CostModel::dense(), CostModel::sparse()] {
            for s in [0.25, 0.5, 0.75, 0.9] {
                for p in sparsity_contour(&c, &model, s, &sizes).unwrap().points {
                    let at = loss_at_compute(&c, &model, s, p.params, p.compute).unwrap();
                    assert!(rel(at, p.loss) < 1e-12);
                    for ds in [-1e-4, 1e-4] {
                        let moved = loss_at_compute(&c, &model, s + ds, p.params, p.compute).unwrap();
                        assert!(moved >= at - 1e-10, "{} S={s} N={:e}: {moved} < {at}", c.family, p.params);
                    }
                }
            }
        }
    }
}

#[test]
fn numeric_contour_agrees_with_closed_form() {
    let sizes = log_space(1e6, 1e10, 5);
    for c in families() {
        for model in [CostModel::dense(), CostModel::sparse()] {
            let closed = sparsity_contour(&c, &model, 0.5, &sizes).unwrap();
            let numeric = sparsity_contour_numeric(&c, &model, 0.5, &sizes).unwrap();
            assert!((slope(&numeric, &model, false) - c.b_n / c.b_d).abs() < 1e-3);
            for (a, b) in closed.points.iter().zip(&numeric.points) {
                assert!(rel(a.data, b.data) < 1e-3, "{} {:?}: {} vs {}", c.family, model.cost_mode, a.data, b.data);
            }
        }
    }
}

#[test]
fn contour_rejects_dense_or_full_sparsity() {
    let t5 = ScalingLawCoefficients::t5_c4();
    assert!(sparsity_contour(&t5, &CostModel::sparse(), 0.0, &[1e8]).is_err());
    assert!(sparsity_contour(&t5, &CostModel::sparse(), 1.0, &[1e8]).is_err());
    assert!(sparsity_contour(&t5, &CostModel::sparse(), 0.5, &[-1.0]).is_err());
}

// Compute-data multiple over the dense frontier at which S = 0.5 becomes
// optimal, found by bisecting the numeric optimum instead of using the contour
// formula.
fn threshold_by_search(c: &ScalingLawCoefficients, model: &CostModel) -> f64 {
    let n: f64 = 1e8;
    let (mut lo, mut hi) = ((6.0 * n).ln(), (6.0 * n * 1e40).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if optimal_sparsity_numeric(c, model, n, mid.exp()).unwrap() < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let compute_data = (0.5 * (lo + hi)).exp() / (6.0 * n);
    // dense frontier: the data at which N is the compute-optimal size
    let frontier_ln_n = |ln_d: f64| {
        let compute = 6.0 * n * ln_d.exp();
        chinchilla_optimal(c, &CostModel::dense(), compute).unwrap().0.ln() - n.ln()
    };
    let (mut a, mut b) = (0.0f64, 80.0f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if frontier_ln_n(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    compute_data / (0.5 * (a + b)).exp()
}

#[test]
fn half_sparsity_thresholds() {
    let vit = ScalingLawCoefficients::vit_jft();
    let t5 = ScalingLawCoefficients::t5_c4();
    let sparse = CostModel::sparse();
    let vit_ratio = compute_multiple_over_chinchilla(&vit, &sparse, 0.5).unwrap();
    let t5_ratio = compute_multiple_over_chinchilla(&t5, &sparse, 0.5).unwrap();
    assert!(vit_ratio > 1.0 && vit_ratio < 2.0, "{vit_ratio}");
    assert!(t5_ratio > 1.0 && t5_ratio < 3.0, "{t5_ratio}");
    for (c, r) in [(&vit, vit_ratio), (&t5, t5_ratio)] {
        assert!(rel(threshold_by_search(c, &sparse), r) < 1e-4);
    }
    let dense = CostModel::dense();
    let vit_dense = compute_multiple_over_chinchilla(&vit, &dense, 0.5).unwrap();
    let t5_dense = compute_multiple_over_chinchilla(&t5, &dense, 0.5).unwrap();
    assert!(vit_dense > vit_ratio && t5_dense > t5_ratio);
    assert!(rel(threshold_by_search(&t5, &dense), t5_dense) < 1e-4);
    for n in [1e6, 1e10] {
        let p = sparsity_contour(&t5, &sparse, 0.5, &[n]).unwrap().points[0];
        assert!(rel(p.compute_data(&sparse) / chinchilla_data_for_size(&t5, n).unwrap(), t5_ratio) < 1e-9);
    }
}

proptest! {
    #[test]
    fn cmul_increasing(a in 0.0..0.99f64, b in 0.0..0.99f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(cmul(hi).unwrap() > cmul(lo).unwrap());
        prop_assert!(cmul(lo).unwrap() >= 1.0);
    }

    #[test]
    fn flops_round_trip(n in 1e3..1e12f64, d in 1e3..1e14f64, s in 0.0..0.99f64, sparse in any::<bool>()) {
        let model = if sparse { CostModel::sparse() } else { CostModel::dense() };
        let c = model.training_flops(n, d, s).unwrap();
        prop_assert!(rel(model.data_for_compute(c, n, s).unwrap(), d) < 1e-14);
    }

    #[test]
    fn closed_form_monotone_in_compute(which in 0usize..2, ln_n in 14.0..23.0f64, ln_c in 35.0..55.0f64) {
        let c = &families()[which];
        let model = CostModel::dense();
        let (n, compute) = (ln_n.exp(), ln_c.exp());
        let s1 = optimal_sparsity_closed(c, &model, n, compute).unwrap();
        let s2 = optimal_sparsity_closed(c, &model, n, 2.0 * compute).unwrap();
        prop_assert!(s2 >= s1);
        prop_assert!((0.0..1.0).contains(&s1));
    }

    #[test]
    fn custom_schedule_multiplier_matches_integral(
        start in 0.0..0.5f64,
        len in 0.1..0.5f64,
        k in 1u32..6,
        s in 0.0..0.95f64,
    ) {
        let end = start + len;
        let model = CostModel { schedule_start: start, schedule_end: end, cubic_exponent: k, ..CostModel::sparse() };
        let density = |t: f64| {
            let tau = ((t - start) / (end - start)).clamp(0.0, 1.0);
            1.0 - s * (1.0 - (1.0 - tau).powi(k as i32))
        };
        let integral = simpson(density, 0.0, 1.0, 20000);
        let oracle = integral / (1.0 - s);
        prop_assert!((model.multiplier(s).unwrap() - oracle).abs() < 1e-6 * oracle);
        prop_assert!(CostMode::Sparse == model.cost_mode);
    }
}
