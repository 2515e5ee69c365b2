//! Input-space classifier training with every augmentation method, plus
//! ensemble and MC-dropout inference.

mod augment;
mod inference;
mod trainer;

pub use augment::{
    ceda_noise_batch, eps_smooth_labels, manifold_mixup_at, manifold_mixup_forward, mixup_batch,
    mixup_with_lambda, sample_lambda, CedaBatch, MixedForward,
};
pub use inference::{ensemble_predict, mc_dropout_predict, DEFAULT_ENSEMBLE_SIZE, DEFAULT_MC_PASSES};
pub use trainer::{
    split_validation, train_classifier, validation_size, AugmentMethod, BatchComposition,
    ClfEpochStats, ClfHistory, ClfTrainConfig, TrainedClassifier, DEFAULT_CEDA_PERMUTED,
    DEFAULT_EPSILON, DEFAULT_MANIFOLD_MIXUP_ALPHA, DEFAULT_MIXUP_ALPHA,
};
