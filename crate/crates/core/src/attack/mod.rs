//! Latent-space adversarial attacks and the augmentation set built from
//! their paths.

mod export;
mod pgd;
mod sampling;
mod set;

pub use export::{export_path_csv, parse_path_csv, read_path_csv, write_path_csv, PathTable};
pub use pgd::{
    attack_latent, make_target, pgd_attack, AttackConfig, AttackPath, LatentTrajectory,
    TargetKind, TargetSpec,
};
pub use sampling::{entropy_pmf, sample_path, transform_label, LabelMode, SampleMode};
pub use set::{
    build_omada_set, generate_paths, sample_from_paths, AugmentationSet, OmadaSample,
    OmadaSetConfig,
};
