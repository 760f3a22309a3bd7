//! L1 training with AdamW and cosine annealing, data splits including
//! k-fold cross-validation, target normalization, metrics, and the
//! learning-curve driver.

mod curve;
mod loss;
mod metrics;
mod normalize;
mod optim;
mod split;
mod trainer;

pub use curve::{learning_curve, lmax_timing, truncate_irreps, CurveRow};
pub use loss::{error_sums, l1_loss, BatchLabels, ErrorSums, LossWeights};
pub use metrics::{ev_to_kcal_per_mol, ev_to_mev, mae_rmse, Metrics, EV_TO_KCAL_PER_MOL};
pub use normalize::{fit_normalization, fit_reference_energies};
pub use optim::{clip_grad_norm, cosine_lr, AdamW};
pub use split::{kfold_split, shuffled, Fold, Partition, SplitSpec};
pub use trainer::{evaluate, predict_indices, Dataset, EpochRecord, TrainConfig, TrainProgress, Trainer};
