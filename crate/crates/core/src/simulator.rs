//! Synthetic sweep generation from known coefficients.
//!
//! Losses are `L(S, N, D) * exp(eps)` with `eps ~ Normal(0, sigma^2)`; each
//! record draws from its own ChaCha stream keyed by `(seed, record index)`,
//! so generation order does not affect the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_sparsity, Error, Result};
use crate::law::{DataUnit, RunRecord, ScalingLawCoefficients, SweepDataset, UNSTRUCTURED};

/// Tokens per T5 training step: batch 128 sequences of 512 tokens.
pub const T5_TOKENS_PER_STEP: f64 = 128.0 * 512.0;
/// Images per ViT training step.
pub const VIT_IMAGES_PER_STEP: f64 = 4096.0;

/// Cartesian grid of (sparsity, non-zero params, data) run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub nonzero_param_levels: Vec<f64>,
    pub data_levels: Vec<f64>,
    pub sparsity_levels: Vec<f64>,
    pub pattern: String,
}

impl SweepGrid {
    /// 7 sizes doubling up to 42.4M, 55K-440K steps, 4 sparsities (112 runs).
    pub fn vit() -> Self {
        Self::vit_with(VIT_IMAGES_PER_STEP)
    }

    pub fn vit_with(images_per_step: f64) -> Self {
        SweepGrid {
            nonzero_param_levels: (0..7).map(|k| 42.4e6 / 2f64.powi(6 - k)).collect(),
            data_levels: [55e3, 110e3, 220e3, 440e3].iter().map(|s| s * images_per_step).collect(),
            sparsity_levels: vec![0.0, 0.5, 0.75, 0.875],
            pattern: UNSTRUCTURED.to_string(),
        }
    }

    /// 4 sizes quadrupling up to 85M, 250K-1M steps, 4 sparsities (48 runs).
    pub fn t5() -> Self {
        Self::t5_with(T5_TOKENS_PER_STEP)
    }

    pub fn t5_with(tokens_per_step: f64) -> Self {
        SweepGrid {
            nonzero_param_levels: (0..4).map(|k| 85e6 / 4f64.powi(3 - k)).collect(),
            data_levels: [250e3, 500e3, 1e6].iter().map(|s| s * tokens_per_step).collect(),
            sparsity_levels: vec![0.0, 0.5, 0.75, 0.875],
            pattern: UNSTRUCTURED.to_string(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "vit" | "vit-jft" => Some(Self::vit()),
            "t5" | "t5-c4" => Some(Self::t5()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.nonzero_param_levels.len() * self.data_levels.len() * self.sparsity_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidInput("sweep grid has an empty axis".into()));
        }
        for &n in &self.nonzero_param_levels {
            check_positive("non-zero parameter level", n)?;
        }
        for &d in &self.data_levels {
            check_positive("data level", d)?;
        }
        for &s in &self.sparsity_levels {
            check_sparsity(s)?;
        }
        Ok(())
    }

    /// Grid points ordered by size, then data, then sparsity.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.nonzero_param_levels.iter().flat_map(move |&n| {
            self.data_levels
                .iter()
                .flat_map(move |&d| self.sparsity_levels.iter().map(move |&s| (s, n, d)))
        })
    }
}

pub fn simulate_sweep(
    truth: &ScalingLawCoefficients,
    grid: &SweepGrid,
    noise_sigma: f64,
    seed: u64,
) -> Result<SweepDataset> {
    truth.validate()?;
    grid.validate()?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let records = grid
        .points()
        .enumerate()
        .map(|(i, (s, n, d))| {
            let clean = truth.eval_unchecked(s, n, d);
            let loss = if noise_sigma == 0.0 {
                clean
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                clean * normal.sample(&mut rng).exp()
            };
            RunRecord::new(s, n, d, loss, grid.pattern.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    SweepDataset::new(records, truth.family.clone(), DataUnit::for_family(&truth.family))
}

/// Runs using either the smallest model or the shortest training: the
/// reduced grid used for refitting only the sparsity term.
pub fn reduced_subset(data: &SweepDataset) -> Result<SweepDataset> {
    let min_n = data.records.iter().map(|r| r.nonzero_params).fold(f64::INFINITY, f64::min);
    let min_d = data.records.iter().map(|r| r.data).fold(f64::INFINITY, f64::min);
    data.filtered(|_, r| r.nonzero_params == min_n || r.data == min_d)
}
