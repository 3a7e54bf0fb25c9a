//! Local minimizers used by the fitting and cost modules.
//!
//! [`bfgs`] is a dense quasi-Newton method with a strong-Wolfe line search,
//! for smooth objectives with analytic gradients. [`golden_section`] and
//! [`bisect`] are bracketing scalar methods.

/// Termination settings for [`bfgs`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the largest step component falls below this.
    pub step_tolerance: f64,
    /// Stop when an accepted step lowers the objective by less than this
    /// fraction of its magnitude.
    pub function_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-10,
            function_tolerance: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    Function,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::Step | Termination::Function)
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

/// Minimizes `objective` starting at `x0`.
///
/// `objective(x, grad)` returns the value at `x` and writes the gradient into
/// `grad`. Non-finite values are treated as "step too long" by the line
/// search.
pub fn bfgs<F>(objective: F, x0: &[f64], options: &BfgsOptions) -> Minimum
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; dim];
    let mut value = objective(&x, &mut grad);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Minimum {
            x,
            value,
            iterations: 0,
            termination: Termination::NonFinite,
        };
    }
    if inf_norm(&grad) <= options.gradient_tolerance {
        return Minimum {
            x,
            value,
            iterations: 0,
            termination: Termination::Gradient,
        };
    }

    let mut inv_hessian = identity(dim);
    let mut fresh = true;
    let mut direction = vec![0.0; dim];

    for iter in 1..=options.max_iterations {
        for (i, d) in direction.iter_mut().enumerate() {
            *d = -dot(&inv_hessian[i * dim..(i + 1) * dim], &grad);
        }
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            inv_hessian = identity(dim);
            fresh = true;
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g;
            }
            slope = dot(&grad, &direction);
        }

        let alpha0 = if fresh {
            (1.0 / inf_norm(&grad)).min(1.0)
        } else {
            1.0
        };
        let trial = match line_search(&objective, &x, value, slope, &direction, alpha0) {
            Some(t) => t,
            None if !fresh => {
                // Curvature model went stale; retry from steepest descent.
                inv_hessian = identity(dim);
                fresh = true;
                continue;
            }
            None => {
                return Minimum {
                    x,
                    value,
                    iterations: iter,
                    termination: Termination::LineSearchFailed,
                }
            }
        };

        let step: Vec<f64> = direction.iter().map(|d| trial.alpha * d).collect();
        let delta_grad: Vec<f64> = trial.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let decrease = value - trial.value;
        let scale = value.abs().max(trial.value.abs()).max(f64::MIN_POSITIVE);

        x = trial.x;
        value = trial.value;
        grad = trial.grad;

        if inf_norm(&grad) <= options.gradient_tolerance {
            return Minimum { x, value, iterations: iter, termination: Termination::Gradient };
        }
        if inf_norm(&step) <= options.step_tolerance {
            return Minimum { x, value, iterations: iter, termination: Termination::Step };
        }
        if decrease <= options.function_tolerance * scale {
            return Minimum { x, value, iterations: iter, termination: Termination::Function };
        }

        let sy = dot(&step, &delta_grad);
        if sy > 1e-14 * (dot(&step, &step) * dot(&delta_grad, &delta_grad)).sqrt() {
            if fresh {
                let gamma = sy / dot(&delta_grad, &delta_grad);
                for i in 0..dim {
                    inv_hessian[i * dim + i] = gamma;
                }
            }
            update_inverse_hessian(&mut inv_hessian, &step, &delta_grad, sy);
            fresh = false;
        }
    }

    Minimum {
        x,
        value,
        iterations: options.max_iterations,
        termination: Termination::MaxIterations,
    }
}

fn identity(dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    m
}

// H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
fn update_inverse_hessian(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..dim).map(|i| dot(&h[i * dim..(i + 1) * dim], y)).collect();
    let yhy = dot(y, &hy);
    let coeff = rho * rho * yhy + rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn evaluate<F>(objective: &F, x: &[f64], direction: &[f64], alpha: f64) -> Trial
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let point: Vec<f64> = x.iter().zip(direction).map(|(xi, di)| xi + alpha * di).collect();
    let mut grad = vec![0.0; x.len()];
    let mut value = objective(&point, &mut grad);
    if grad.iter().any(|g| !g.is_finite()) {
        value = f64::INFINITY;
    }
    if value.is_nan() {
        value = f64::INFINITY;
    }
    Trial { alpha, x: point, value, grad }
}

fn line_search<F>(
    objective: &F,
    x: &[f64],
    value0: f64,
    slope0: f64,
    direction: &[f64],
    alpha0: f64,
) -> Option<Trial>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let mut prev_alpha = 0.0;
    let mut prev_value = value0;
    let mut prev_slope = slope0;
    let mut prev: Option<Trial> = None;
    let mut alpha = alpha0;

    for i in 0..40 {
        let trial = evaluate(objective, x, direction, alpha);
        if trial.value > value0 + WOLFE_C1 * alpha * slope0 || (i > 0 && trial.value >= prev_value) {
            return zoom(objective, x, value0, slope0, direction, (prev_alpha, prev_value, prev_slope, prev), trial);
        }
        let slope = dot(&trial.grad, direction);
        if slope.abs() <= -WOLFE_C2 * slope0 {
            return Some(trial);
        }
        if slope >= 0.0 {
            let lo_value = trial.value;
            let lo = (trial.alpha, lo_value, slope, Some(trial));
            let hi = match prev {
                Some(p) => p,
                None => evaluate(objective, x, direction, prev_alpha),
            };
            return zoom(objective, x, value0, slope0, direction, lo, hi);
        }
        prev_alpha = alpha;
        prev_value = trial.value;
        prev_slope = slope;
        prev = Some(trial);
        alpha *= 2.0;
    }
    prev
}

type Bracket = (f64, f64, f64, Option<Trial>);

fn zoom<F>(
    objective: &F,
    x: &[f64],
    value0: f64,
    slope0: f64,
    direction: &[f64],
    lo: Bracket,
    hi: Trial,
) -> Option<Trial>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let (mut lo_alpha, mut lo_value, mut lo_slope, mut lo_trial) = lo;
    let mut hi_alpha = hi.alpha;
    let mut hi_value = hi.value;

    for _ in 0..60 {
        let (a, b) = if lo_alpha < hi_alpha { (lo_alpha, hi_alpha) } else { (hi_alpha, lo_alpha) };
        let width = b - a;
        if width <= 1e-16 * b.abs().max(1e-300) {
            break;
        }
        let mut alpha = 0.5 * (lo_alpha + hi_alpha);
        if hi_value.is_finite() {
            // Quadratic through (lo, lo_value, lo_slope) and (hi, hi_value).
            let d = hi_alpha - lo_alpha;
            let denom = 2.0 * (hi_value - lo_value - lo_slope * d);
            if denom > 0.0 {
                let cand = lo_alpha - lo_slope * d * d / denom;
                if cand > a + 0.1 * width && cand < b - 0.1 * width {
                    alpha = cand;
                }
            }
        }
        let trial = evaluate(objective, x, direction, alpha);
        if trial.value > value0 + WOLFE_C1 * alpha * slope0 || trial.value >= lo_value {
            hi_alpha = alpha;
            hi_value = trial.value;
        } else {
            let slope = dot(&trial.grad, direction);
            if slope.abs() <= -WOLFE_C2 * slope0 {
                return Some(trial);
            }
            if slope * (hi_alpha - lo_alpha) >= 0.0 {
                hi_alpha = lo_alpha;
                hi_value = lo_value;
            }
            lo_alpha = alpha;
            lo_value = trial.value;
            lo_slope = slope;
            lo_trial = Some(trial);
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    lo_trial.filter(|t| t.alpha > 0.0 && t.value < value0)
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`, stopping once
/// the bracket is narrower than `x_tolerance`. Returns `(argmin, min)`.
pub fn golden_section<F>(f: F, lo: f64, hi: f64, x_tolerance: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > x_tolerance {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`. `None` when the
/// endpoints do not bracket a root.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, x_tolerance: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    while (hi - lo).abs() > x_tolerance {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
