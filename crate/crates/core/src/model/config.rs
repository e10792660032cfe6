use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{canonical_modalities, Modality};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionStrategy {
    /// Softmax-normalised learned scalar per modality.
    WeightedSum,
    Averaging,
    #[default]
    AveragingLinear,
    ConcatLinear,
}

impl std::str::FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted-sum" => Ok(FusionStrategy::WeightedSum),
            "averaging" => Ok(FusionStrategy::Averaging),
            "averaging-linear" => Ok(FusionStrategy::AveragingLinear),
            "concat-linear" => Ok(FusionStrategy::ConcatLinear),
            other => Err(Error::usage(format!(
                "unknown fusion '{other}' (weighted-sum, averaging, averaging-linear, concat-linear)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    #[default]
    Mean,
    /// A learned token prepended to the sequence; its output is the stream vector.
    Token,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Temporal,
    Spatial,
}

impl Stream {
    pub const BOTH: [Stream; 2] = [Stream::Temporal, Stream::Spatial];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Temporal => "temporal",
            Stream::Spatial => "spatial",
        }
    }
}

/// Projection head selector: the fused-representation head or one per modality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Unified,
    Modality(Modality),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub frames: usize,
    pub channels: usize,
    pub joints: usize,
    pub modalities: Vec<Modality>,
    /// Token width after the modality embedders.
    pub embed_dim: usize,
    /// Transformer width; the representation has twice this many entries.
    pub encoder_dim: usize,
    /// Projector output width.
    pub proj_dim: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub depth: usize,
    pub fusion: FusionStrategy,
    pub readout: Readout,
    pub temporal_positions: bool,
    pub spatial_positions: bool,
    pub shared_embedding: bool,
    pub shared_projector: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frames: 64,
            channels: 3,
            joints: 8,
            modalities: Modality::ALL.to_vec(),
            embed_dim: 64,
            encoder_dim: 64,
            proj_dim: 128,
            heads: 4,
            ffn_mult: 2,
            depth: 1,
            fusion: FusionStrategy::AveragingLinear,
            readout: Readout::Mean,
            temporal_positions: true,
            spatial_positions: false,
            shared_embedding: false,
            shared_projector: false,
        }
    }
}

impl ModelConfig {
    /// Hidden 1024, projector 4096.
    pub fn full_scale() -> Self {
        ModelConfig {
            embed_dim: 1024,
            encoder_dim: 1024,
            proj_dim: 4096,
            ..Self::default()
        }
    }

    pub fn tiny() -> Self {
        ModelConfig {
            frames: 6,
            joints: 4,
            embed_dim: 8,
            encoder_dim: 8,
            proj_dim: 16,
            ..Self::default()
        }
    }

    pub fn representation_dim(&self) -> usize {
        2 * self.encoder_dim
    }

    pub fn validate(&self) -> Result<()> {
        let set = canonical_modalities(&self.modalities)?;
        if set != self.modalities {
            return Err(Error::usage("modalities must be listed once each in joint, motion, bone order"));
        }
        if self.frames < 2 || self.channels < 1 || self.joints < 1 {
            return Err(Error::usage("model geometry needs T >= 2, C >= 1, V >= 1"));
        }
        if self.embed_dim == 0 || self.encoder_dim == 0 || self.proj_dim == 0 || self.ffn_mult == 0 {
            return Err(Error::usage("layer widths must be positive"));
        }
        if self.heads == 0 || self.encoder_dim % self.heads != 0 {
            return Err(Error::usage(format!(
                "encoder_dim {} is not divisible by {} heads",
                self.encoder_dim, self.heads
            )));
        }
        if !(1..=2).contains(&self.depth) {
            return Err(Error::usage("encoder depth must be 1 or 2"));
        }
        Ok(())
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// First 8 bytes of the SHA-256 of the canonical JSON, little-endian.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
