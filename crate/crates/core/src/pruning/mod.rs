//! Gradual magnitude pruning: the cubic sparsity schedule, unstructured and
//! n:m mask selection, sparsity-aware RMS, and a small trainer that ties them
//! together on a synthetic regression problem.

mod mask;
mod schedule;
mod tensor;
mod train;

pub use mask::{gmp_mask, kept_count, nm_gradual_mask, Mask, NmPattern};
pub use schedule::PruneSchedule;
pub use tensor::{apply_mask, sparsity_aware_rms, MaskedTensor};
pub use train::{toy_train, RegressionProblem, RelativeLr, TraceRow, TrainTrace};
