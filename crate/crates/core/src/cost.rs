//! Training-cost accounting and compute-optimal analysis.
//!
//! Training a sparse model with `N` non-zeros on `D` data items costs
//! `k * N * D * m(S)` FLOPs, where `k` is the per-parameter, per-datum constant
//! (6, or 3 for encoder-decoder models) and `m(S)` is the cost multiplier:
//!
//! * dense accounting: `m(S) = 1 / (1 - S)`, the cost of the dense base model;
//! * sparse accounting: `m(S) = c_mul(S)`, which credits sparsity as soon as
//!   it appears along the gradual pruning schedule.
//!
//! At fixed compute `C` the model sees `D = C / (k N m(S))` data. The
//! optimal sparsity `S_opt(N, C)` minimizes the law along that budget line;
//! the set of `(N, C)` where a given `S` is optimal is a straight line in
//! log-log space with slope `b_N / b_D` in `(N, D)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_sparsity, Error, Result};
use crate::law::ScalingLawCoefficients;
use crate::optim::{bisect, golden_section};

/// Largest sparsity considered by numeric searches.
pub const MAX_SEARCH_SPARSITY: f64 = 0.999;

const SPARSITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Charge the dense base model of size `N / (1 - S)`.
    Dense,
    /// Charge the FLOPs actually spent along the pruning schedule.
    #[default]
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub flops_per_param_datum: f64,
    pub cost_mode: CostMode,
    pub schedule_start: f64,
    pub schedule_end: f64,
    pub cubic_exponent: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            flops_per_param_datum: 6.0,
            cost_mode: CostMode::Sparse,
            schedule_start: 0.25,
            schedule_end: 0.75,
            cubic_exponent: 3,
        }
    }
}

impl CostModel {
    pub fn dense() -> Self {
        Self {
            cost_mode: CostMode::Dense,
            ..Self::default()
        }
    }

    pub fn sparse() -> Self {
        Self::default()
    }

    /// Same accounting with half the FLOPs per parameter and datum.
    pub fn encoder_decoder(self) -> Self {
        Self {
            flops_per_param_datum: 3.0,
            ..self
        }
    }

    pub fn with_mode(self, cost_mode: CostMode) -> Self {
        Self { cost_mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("flops_per_param_datum", self.flops_per_param_datum)?;
        if !(0.0 <= self.schedule_start && self.schedule_start < self.schedule_end && self.schedule_end <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "schedule window must satisfy 0 <= start < end <= 1, got [{}, {}]",
                self.schedule_start, self.schedule_end
            )));
        }
        if self.cubic_exponent == 0 {
            return Err(Error::InvalidInput("cubic_exponent must be positive".into()));
        }
        Ok(())
    }

    // Average density over the pruning window for the polynomial schedule
    // S (1 - (1 - tau)^k) is 1 - S k / (k + 1).
    fn window_density_slope(&self) -> f64 {
        let k = self.cubic_exponent as f64;
        (self.schedule_end - self.schedule_start) * k / (k + 1.0)
    }

    /// Sparse-accounting multiplier for this schedule.
    pub fn sparse_multiplier(&self, s: f64) -> Result<f64> {
        check_sparsity(s)?;
        self.validate()?;
        let numer = self.schedule_end - self.window_density_slope() * s;
        Ok(numer / (1.0 - s) + (1.0 - self.schedule_end))
    }

    /// `m(S)` for the configured cost mode.
    pub fn multiplier(&self, s: f64) -> Result<f64> {
        check_sparsity(s)?;
        match self.cost_mode {
            CostMode::Dense => Ok(1.0 / (1.0 - s)),
            CostMode::Sparse => self.sparse_multiplier(s),
        }
    }

    /// `dm/dS`, analytic.
    pub fn multiplier_derivative(&self, s: f64) -> Result<f64> {
        check_sparsity(s)?;
        let x = 1.0 - s;
        match self.cost_mode {
            CostMode::Dense => Ok(1.0 / (x * x)),
            CostMode::Sparse => {
                self.validate()?;
                Ok((self.schedule_end - self.window_density_slope()) / (x * x))
            }
        }
    }

    /// `k * N * D * m(S)`.
    pub fn training_flops(&self, n: f64, d: f64, s: f64) -> Result<f64> {
        check_positive("N", n)?;
        check_positive("D", d)?;
        Ok(self.flops_per_param_datum * n * d * self.multiplier(s)?)
    }

    /// Data seen when spending `compute` FLOPs: the inverse of
    /// [`Self::training_flops`] in `D`.
    pub fn data_for_compute(&self, compute: f64, n: f64, s: f64) -> Result<f64> {
        check_positive("C", compute)?;
        check_positive("N", n)?;
        Ok(compute / (self.flops_per_param_datum * n * self.multiplier(s)?))
    }
}

/// The sparse cost multiplier of the default 25%-75% cubic schedule:
/// `(0.25 + 0.5 (1 - 0.75 S)) / (1 - S) + 0.25`.
pub fn cmul(s: f64) -> Result<f64> {
    check_sparsity(s)?;
    Ok((0.25 + 0.50 * (1.0 - 0.75 * s)) / (1.0 - s) + 0.25)
}

/// Dense compute-optimal `(N, D)` at compute `C`, minimizing the `S = 0` law
/// subject to `k N D = C`.
pub fn chinchilla_optimal(coeffs: &ScalingLawCoefficients, model: &CostModel, compute: f64) -> Result<(f64, f64)> {
    check_positive("C", compute)?;
    model.validate()?;
    let budget = compute / model.flops_per_param_datum;
    let a = coeffs.a_s + coeffs.c_s;
    let (b_n, b_d) = (coeffs.b_n, coeffs.b_d);
    // b_N A N^-b_N = b_D a_D^b_D (M / N)^-b_D, solved in logs
    let ln_n = ((b_n * a).ln() - b_d.ln() - b_d * coeffs.a_d.ln() + b_d * budget.ln()) / (b_n + b_d);
    let n = ln_n.exp();
    Ok((n, budget / n))
}

/// Data at which a dense model of size `n` sits on the compute-optimal frontier.
pub fn chinchilla_data_for_size(coeffs: &ScalingLawCoefficients, n: f64) -> Result<f64> {
    check_positive("N", n)?;
    let a = coeffs.a_s + coeffs.c_s;
    // b_N A N^-b_N = b_D (a_D / D)^b_D
    let ln_ratio = ((coeffs.b_n * a).ln() - coeffs.b_n * n.ln() - coeffs.b_d.ln()) / coeffs.b_d;
    Ok(coeffs.a_d * (-ln_ratio).exp())
}

/// Closed-form optimal sparsity under dense cost accounting.
///
/// With `m(S) = 1 / (1 - S)` the stationarity condition reduces to
/// `(1 - S)^(b_D + b_S) = a_D^b_D b_D N^b_N (C / kN)^-b_D / (a_S b_S)`,
/// clamped at `S = 0`.
pub fn optimal_sparsity_closed(coeffs: &ScalingLawCoefficients, model: &CostModel, n: f64, compute: f64) -> Result<f64> {
    check_positive("N", n)?;
    check_positive("C", compute)?;
    model.validate()?;
    if model.cost_mode != CostMode::Dense {
        return Err(Error::InvalidInput(
            "closed-form optimal sparsity is only available for dense cost accounting".into(),
        ));
    }
    let (b_s, b_d) = (coeffs.b_s, coeffs.b_d);
    let log_const = b_d * coeffs.a_d.ln() + b_d.ln() - (coeffs.a_s * b_s).ln();
    let budget = compute / (model.flops_per_param_datum * n);
    let ln_density = (log_const + coeffs.b_n * n.ln() - b_d * budget.ln()) / (b_d + b_s);
    Ok((1.0 - ln_density.exp()).max(0.0))
}

/// Loss at sparsity `s` along the fixed-compute line through `(n, compute)`.
pub fn loss_at_compute(coeffs: &ScalingLawCoefficients, model: &CostModel, s: f64, n: f64, compute: f64) -> Result<f64> {
    let d = model.data_for_compute(compute, n, s)?;
    crate::law::eval_law(coeffs, s, n, d)
}

const UNIMODAL_GRID: usize = 200;

/// Numeric optimal sparsity on `[0, 0.999]` by golden-section search.
///
/// The objective is checked against a uniform grid afterwards; a grid point
/// beating the returned minimum yields [`Error::NotUnimodal`].
pub fn optimal_sparsity_numeric(coeffs: &ScalingLawCoefficients, model: &CostModel, n: f64, compute: f64) -> Result<f64> {
    check_positive("N", n)?;
    check_positive("C", compute)?;
    model.validate()?;
    coeffs.validate()?;
    let budget = compute / (model.flops_per_param_datum * n);
    let size = n.powf(-coeffs.b_n);
    let loss = |s: f64| -> f64 {
        let m = model.multiplier(s).expect("s within search bounds");
        coeffs.sparsity_factor(s) * size + coeffs.data_term_unchecked(budget / m) + coeffs.c
    };

    let (mut best_s, mut best) = golden_section(loss, 0.0, MAX_SEARCH_SPARSITY, SPARSITY_TOLERANCE * 0.1);
    for edge in [0.0, MAX_SEARCH_SPARSITY] {
        let v = loss(edge);
        if v <= best {
            best = v;
            best_s = edge;
        }
    }

    let slack = 1e-12 * best.abs().max(1.0);
    for i in 0..=UNIMODAL_GRID {
        let s = MAX_SEARCH_SPARSITY * i as f64 / UNIMODAL_GRID as f64;
        let v = loss(s);
        if v < best - slack {
            return Err(Error::NotUnimodal {
                lo: 0.0,
                hi: MAX_SEARCH_SPARSITY,
                grid_arg: s,
                grid_min: v,
                found_arg: best_s,
                found: best,
            });
        }
    }
    Ok(best_s)
}

/// One point of an iso-sparsity contour or the compute-optimal frontier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub sparsity: f64,
    /// Non-zero parameters.
    pub params: f64,
    /// Data actually trained on.
    pub data: f64,
    /// Training FLOPs `k N D m(S)`.
    pub compute: f64,
    pub loss: f64,
}

impl ContourPoint {
    /// `C / (k N)`: the compute budget expressed as dense-equivalent data.
    pub fn compute_data(&self, model: &CostModel) -> f64 {
        self.compute / (model.flops_per_param_datum * self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub sparsity: f64,
    pub points: Vec<ContourPoint>,
}

fn point(coeffs: &ScalingLawCoefficients, model: &CostModel, s: f64, n: f64, d: f64) -> Result<ContourPoint> {
    Ok(ContourPoint {
        sparsity: s,
        params: n,
        data: d,
        compute: model.training_flops(n, d, s)?,
        loss: crate::law::eval_law(coeffs, s, n, d)?,
    })
}

/// Points `(N, D)` at which sparsity `s` is optimal, one per entry of `sizes`.
///
/// Solves `a_D^b_D b_D (m'(S)/m(S)) D^-b_D = a_S b_S (1 - S)^(b_S - 1) N^-b_N`
/// for the trained data `D`; the right-hand side is the sparsity derivative
/// of the capacity term, the left-hand side that of the data term along a
/// fixed-compute line.
pub fn sparsity_contour(coeffs: &ScalingLawCoefficients, model: &CostModel, s: f64, sizes: &[f64]) -> Result<Contour> {
    check_sparsity(s)?;
    if s == 0.0 {
        return Err(Error::InvalidInput("contour sparsity must lie in (0, 1)".into()));
    }
    model.validate()?;
    let (b_s, b_d) = (coeffs.b_s, coeffs.b_d);
    let log_ratio = (model.multiplier_derivative(s)? / model.multiplier(s)?).ln();
    let rhs_const = coeffs.a_s * b_s * (1.0 - s).powf(b_s - 1.0);
    if !(rhs_const > 0.0 && rhs_const.is_finite()) {
        return Err(Error::NoSolution(format!("non-positive sparsity derivative at S = {s}")));
    }
    let points = sizes
        .iter()
        .map(|&n| {
            check_positive("N", n)?;
            let ln_d = (b_d * coeffs.a_d.ln() + b_d.ln() + log_ratio - rhs_const.ln() + coeffs.b_n * n.ln()) / b_d;
            point(coeffs, model, s, n, ln_d.exp())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Contour { sparsity: s, points })
}

/// Same contour found numerically: for each size, bisect in `ln C` for the
/// compute at which [`optimal_sparsity_numeric`] crosses `s`.
pub fn sparsity_contour_numeric(coeffs: &ScalingLawCoefficients, model: &CostModel, s: f64, sizes: &[f64]) -> Result<Contour> {
    check_sparsity(s)?;
    if s == 0.0 {
        return Err(Error::InvalidInput("contour sparsity must lie in (0, 1)".into()));
    }
    model.validate()?;
    let points = sizes
        .par_iter()
        .map(|&n| {
            check_positive("N", n)?;
            let k_n = model.flops_per_param_datum * n;
            let err = std::sync::Mutex::new(None);
            let excess = |ln_c: f64| match optimal_sparsity_numeric(coeffs, model, n, ln_c.exp()) {
                Ok(opt) => opt - s,
                Err(e) => {
                    *err.lock().unwrap() = Some(e);
                    f64::NAN
                }
            };
            // compute between 1e-6 and 1e60 dense-equivalent data items per parameter
            let lo = (k_n * 1e-6).ln();
            let hi = (k_n * 1e60).ln();
            let ln_c = bisect(&excess, lo, hi, 1e-12);
            if let Some(e) = err.into_inner().unwrap() {
                return Err(e);
            }
            let ln_c = ln_c.ok_or_else(|| Error::NoSolution(format!("S = {s} is never optimal at N = {n}")))?;
            let d = model.data_for_compute(ln_c.exp(), n, s)?;
            point(coeffs, model, s, n, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Contour { sparsity: s, points })
}

/// The dense compute-optimal frontier evaluated at each size.
pub fn chinchilla_frontier(coeffs: &ScalingLawCoefficients, model: &CostModel, sizes: &[f64]) -> Result<Contour> {
    let dense = model.with_mode(CostMode::Dense);
    let points = sizes
        .iter()
        .map(|&n| point(coeffs, &dense, 0.0, n, chinchilla_data_for_size(coeffs, n)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Contour { sparsity: 0.0, points })
}

/// How many times more compute than the dense compute-optimal budget (at
/// equal `N`) is needed before sparsity `s` becomes optimal.
///
/// Ratio of `C / (k N)` on the `s`-contour to the compute-optimal `D` at the
/// same `N`; constant in `N` because both lines share slope `b_N / b_D`.
pub fn compute_multiple_over_chinchilla(coeffs: &ScalingLawCoefficients, model: &CostModel, s: f64) -> Result<f64> {
    let n = 1e8;
    let contour = sparsity_contour(coeffs, model, s, &[n])?;
    let on_contour = contour.points[0].compute_data(model);
    Ok(on_contour / chinchilla_data_for_size(coeffs, n)?)
}

/// `n` sizes spaced evenly in log space over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| match i {
                0 => lo,
                i if i == n - 1 => hi,
                i => (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp(),
            })
            .collect(),
    }
}
