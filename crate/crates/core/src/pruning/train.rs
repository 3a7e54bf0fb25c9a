use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mask::{gmp_mask, nm_gradual_mask, Mask, NmPattern};
use super::schedule::PruneSchedule;
use super::tensor::{rms_over, MaskedTensor};

/// Least squares `0.5 / rows * |A w - y|^2` with a dense planted solution.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    rows: usize,
    dim: usize,
    design: Vec<f64>,
    targets: Vec<f64>,
    init: Vec<f64>,
}

impl RegressionProblem {
    /// Gaussian design, `N(0, 1)` planted weights, `N(0, 0.01)` initial weights.
    pub fn generate(rows: usize, dim: usize, seed: u64) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidInput("regression problem needs rows > 0 and dim > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let design: Vec<f64> = (0..rows * dim).map(|_| normal()).collect();
        let planted: Vec<f64> = (0..dim).map(|_| normal()).collect();
        let init: Vec<f64> = (0..dim).map(|_| 0.1 * normal()).collect();
        let targets = (0..rows)
            .map(|r| design[r * dim..(r + 1) * dim].iter().zip(&planted).map(|(a, w)| a * w).sum())
            .collect();
        Ok(Self { rows, dim, design, targets, init })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.design[r * self.dim..(r + 1) * self.dim];
                row.iter().zip(w).map(|(a, x)| a * x).sum::<f64>() - self.targets[r]
            })
            .collect()
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        0.5 * self.residual(w).iter().map(|r| r * r).sum::<f64>() / self.rows as f64
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let res = self.residual(w);
        let mut g = vec![0.0; self.dim];
        for (r, e) in res.iter().enumerate() {
            let row = &self.design[r * self.dim..(r + 1) * self.dim];
            for (gi, a) in g.iter_mut().zip(row) {
                *gi += a * e;
            }
        }
        let inv = 1.0 / self.rows as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Largest eigenvalue of `A^T A / rows`, by power iteration.
    pub fn lipschitz(&self) -> f64 {
        let mut v = vec![1.0 / (self.dim as f64).sqrt(); self.dim];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut av = vec![0.0; self.rows];
            for (r, out) in av.iter_mut().enumerate() {
                *out = self.design[r * self.dim..(r + 1) * self.dim].iter().zip(&v).map(|(a, x)| a * x).sum();
            }
            let mut w = vec![0.0; self.dim];
            for (r, e) in av.iter().enumerate() {
                for (wi, a) in w.iter_mut().zip(&self.design[r * self.dim..(r + 1) * self.dim]) {
                    *wi += a * e;
                }
            }
            let next = w.iter().map(|x| x * x).sum::<f64>().sqrt() / self.rows as f64;
            let scale = 1.0 / (next * self.rows as f64);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi * scale;
            }
            if (next - lambda).abs() <= 1e-12 * next {
                return next;
            }
            lambda = next;
        }
        lambda
    }
}

/// Relative step size `base_lr * max(rms, epsilon)`, with the RMS taken over
/// unpruned weights, and optional clipping of the update RMS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeLr {
    pub base_lr: f64,
    pub epsilon: f64,
    pub clip_threshold: Option<f64>,
}

impl RelativeLr {
    pub fn new(base_lr: f64) -> Self {
        Self {
            base_lr,
            epsilon: 1e-3,
            clip_threshold: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Scheduled target sparsity at this step.
    pub sparsity: f64,
    pub loss: f64,
    /// Sparsity-aware RMS of the weights.
    pub rms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    /// One row per step `0..=total_steps`, recorded after any mask update.
    pub rows: Vec<TraceRow>,
    /// `(step, mask)` for every mask recomputation.
    pub mask_history: Vec<(usize, Mask)>,
    pub weights: MaskedTensor,
}

/// Gradient descent with gradual pruning on `problem`.
///
/// Masks are recomputed every `sched.update_every` steps (and once more at the
/// end) from the current weights at the scheduled sparsity; pruned weights are
/// held at exactly zero and never updated, so a pruned weight cannot return.
pub fn toy_train(
    problem: &RegressionProblem,
    sched: &PruneSchedule,
    optimizer: &RelativeLr,
    pattern: Option<NmPattern>,
    total_steps: usize,
) -> Result<TrainTrace> {
    sched.validate()?;
    if !(optimizer.base_lr > 0.0 && optimizer.epsilon > 0.0) {
        return Err(Error::InvalidInput("base_lr and epsilon must be positive".into()));
    }
    if let Some(t) = optimizer.clip_threshold {
        if !(t > 0.0) {
            return Err(Error::InvalidInput("clip threshold must be positive".into()));
        }
    }
    let window = ((sched.end_frac - sched.start_frac) * total_steps as f64).ceil() as usize;
    if total_steps == 0 || window < 1 {
        return Err(Error::InvalidInput(format!(
            "{total_steps} steps cannot cover the pruning window"
        )));
    }
    if let Some(p) = pattern {
        if sched.final_sparsity > p.max_sparsity() + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "final sparsity {} exceeds the {p} limit",
                sched.final_sparsity
            )));
        }
    }

    let mut weights = MaskedTensor::new(problem.init.clone(), Mask::all_kept(problem.dim), pattern)?;
    let select = |values: &[f64], s: f64| match pattern {
        Some(p) => nm_gradual_mask(values, p, s),
        None => gmp_mask(values, s),
    };

    let initial_loss = problem.loss(weights.values());
    let limit = 1e6 * initial_loss;
    let mut rows = Vec::with_capacity(total_steps + 1);
    let mut mask_history = Vec::new();
    let mut target = 0.0;

    for step in 0..=total_steps {
        if step % sched.update_every == 0 || step == total_steps {
            target = sched.sparsity_at(step as f64 / total_steps as f64)?;
            let mask = select(weights.values(), target)?;
            weights.set_mask(mask.clone())?;
            mask_history.push((step, mask));
        }
        let loss = problem.loss(weights.values());
        if !(loss <= limit) {
            return Err(Error::Diverged { step, loss, limit });
        }
        rows.push(TraceRow {
            step,
            sparsity: target,
            loss,
            rms: rms_over(weights.values(), weights.mask())?,
        });
        if step == total_steps {
            break;
        }

        let mask = weights.mask().clone();
        let mut update = problem.gradient(weights.values());
        for (u, &k) in update.iter_mut().zip(mask.as_slice()) {
            if !k {
                *u = 0.0;
            }
        }
        if let Some(threshold) = optimizer.clip_threshold {
            let r = rms_over(&update, &mask)?;
            if r > threshold {
                let scale = threshold / r;
                update.iter_mut().for_each(|u| *u *= scale);
            }
        }
        let lr = optimizer.base_lr * rms_over(weights.values(), &mask)?.max(optimizer.epsilon);
        for (w, u) in weights.values_mut().iter_mut().zip(&update) {
            *w -= lr * u;
        }
        weights.zero_pruned();
    }

    Ok(TrainTrace {
        rows,
        mask_history,
        weights,
    })
}
