//! Modality embedders, fusion, the shared dual-stream encoder and projection heads.

mod config;
mod network;

pub use config::{FusionStrategy, Head, ModelConfig, Readout, Stream};
pub use network::{ModalityTokens, MultimodalOutput, Session, UmurlModel};

use crate::data::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassMode {
    Inference,
    BaselineTrain,
    UmurlTrain,
}

/// Encoder passes per sample: one at inference, two views for the baseline,
/// one fused plus one per modality for the full objective.
pub fn inference_pass_count(modalities: &[Modality], mode: PassMode) -> usize {
    match mode {
        PassMode::Inference => 1,
        PassMode::BaselineTrain => 2,
        PassMode::UmurlTrain => modalities.len() + 1,
    }
}
