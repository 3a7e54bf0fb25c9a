use serde::{Deserialize, Serialize};

use crate::error::{check_sparsity, Error, Result};

/// Polynomial gradual-sparsification schedule over a window of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    pub start_frac: f64,
    pub end_frac: f64,
    /// Steps between mask recomputations.
    pub update_every: usize,
    pub final_sparsity: f64,
    pub cubic_exponent: u32,
}

impl PruneSchedule {
    /// 25%-75% cubic window, mask updates every 100 steps.
    pub fn new(final_sparsity: f64) -> Result<Self> {
        let sched = PruneSchedule {
            start_frac: 0.25,
            end_frac: 0.75,
            update_every: 100,
            final_sparsity,
            cubic_exponent: 3,
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn validate(&self) -> Result<()> {
        check_sparsity(self.final_sparsity)?;
        if !(0.0 <= self.start_frac && self.start_frac < self.end_frac && self.end_frac <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "schedule window must satisfy 0 <= start < end <= 1, got [{}, {}]",
                self.start_frac, self.end_frac
            )));
        }
        if self.update_every == 0 {
            return Err(Error::InvalidInput("update_every must be positive".into()));
        }
        if self.cubic_exponent == 0 {
            return Err(Error::InvalidInput("cubic_exponent must be positive".into()));
        }
        Ok(())
    }

    /// Target sparsity at training fraction `t`: zero before the window,
    /// `final * (1 - (1 - tau)^k)` inside it, `final` after it.
    pub fn sparsity_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("training fraction must lie in [0, 1], got {t}")));
        }
        if t <= self.start_frac {
            return Ok(0.0);
        }
        if t >= self.end_frac {
            return Ok(self.final_sparsity);
        }
        let tau = (t - self.start_frac) / (self.end_frac - self.start_frac);
        Ok(self.final_sparsity * (1.0 - (1.0 - tau).powi(self.cubic_exponent as i32)))
    }
}
