//! Skeleton sequences, derived modalities, augmentation, synthetic data and USKD files.

mod augment;
mod dataset;
mod io;
mod skeleton;
mod synth;

pub use augment::{
    augment, rotation_matrix, AugmentationPolicy, Jitter, Noise, Rotation, Shear, TemporalCrop,
};
pub use dataset::{Dataset, SplitKind, TRAIN_FRACTION};
pub use io::{dataset_from_bytes, dataset_to_bytes, read_dataset, write_dataset, USKD_MAGIC, USKD_VERSION};
pub use skeleton::{
    canonical_modalities, derive_bone, derive_modalities, derive_motion, parse_modalities,
    temporal_resample, KinematicTree, Modality, ModalityBundle, SkeletonSequence,
};
pub use synth::{generate_synthetic, generate_with, Scenario, SynthParams};
