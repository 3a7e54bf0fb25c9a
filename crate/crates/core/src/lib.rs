//! Scaling laws for weight-sparse Transformers.
//!
//! * [`law`]: the joint law `L(S, N, D)`, gains and inversions.
//! * [`fitting`]: robust multi-start coefficient fits.
//! * [`cost`]: FLOP accounting, compute-optimal frontiers, optimal sparsity.
//! * [`pruning`]: cubic schedule, magnitude and n:m masks, sparsity-aware RMS.
//! * [`simulator`]: synthetic sweeps over the standard grids.

pub mod cost;
pub mod error;
pub mod fitting;
pub mod law;
pub mod optim;
pub mod pruning;
pub mod simulator;

pub use error::{Error, Result};
pub use law::{eval_law, gain, invert_for_data, invert_for_size, DataUnit, RunRecord, ScalingLawCoefficients, SweepDataset};
