use crate::data::{canonical_modalities, derive_modalities, Dataset, Modality};
use crate::error::{Error, Result};
use crate::kernel::{Tape, Tensor};
use crate::model::{ModalityTokens, UmurlModel};

/// Samples per forward pass during extraction; rows do not interact, so this only bounds memory.
pub const EXTRACT_BATCH: usize = 64;

/// Frozen representations `[N, R]` with their labels and where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationSet {
    pub values: Tensor<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub fingerprint: u64,
    pub modalities: Vec<Modality>,
}

impl RepresentationSet {
    pub fn new(values: Tensor<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if values.rank() != 2 || values.shape()[0] != labels.len() {
            return Err(Error::contract(format!(
                "representations {:?} do not align with {} labels",
                values.shape(),
                labels.len()
            )));
        }
        if !values.all_finite() {
            return Err(Error::numeric("representation contains a non-finite value"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::usage(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(RepresentationSet {
            values,
            labels,
            num_classes,
            fingerprint: 0,
            modalities: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn select(&self, indices: &[usize]) -> RepresentationSet {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RepresentationSet {
            values: Tensor::new(&[indices.len(), d], data).expect("row selection keeps width"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }
}

fn labels_of(data: &Dataset) -> Result<Vec<usize>> {
    data.samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.label.ok_or_else(|| Error::usage(format!("sample {i} has no label"))))
        .collect()
}

/// One fused encoder pass per sample on un-augmented inputs; parameters stay frozen.
pub fn extract_representations(data: &Dataset, model: &UmurlModel<f32>, modalities: &[Modality]) -> Result<RepresentationSet> {
    let set = canonical_modalities(modalities)?;
    let cfg = model.config();
    if let Some(m) = set.iter().find(|m| !cfg.modalities.contains(m)) {
        return Err(Error::usage(format!("modality {m} was not part of training ({:?})", cfg.modalities)));
    }
    if (data.frames, data.channels, data.joints) != (cfg.frames, cfg.channels, cfg.joints) {
        return Err(Error::usage("dataset geometry does not match the checkpoint"));
    }
    if data.is_empty() {
        return Err(Error::usage("no samples to represent"));
    }
    let labels = labels_of(data)?;
    let mut rows = Vec::new();
    for chunk in data.samples.chunks(EXTRACT_BATCH) {
        let bundles = chunk
            .iter()
            .map(|s| derive_modalities(s, &data.tree, &set))
            .collect::<Result<Vec<_>>>()?;
        let inputs = set
            .iter()
            .map(|&m| ModalityTokens::from_sequences(m, &bundles.iter().map(|b| b.get(m).unwrap()).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let tape = Tape::new();
        let y = model.session(&tape, false).represent_multimodal(&inputs)?.value();
        rows.extend(y.data().iter().map(|v| *v as f64));
    }
    let r = cfg.representation_dim();
    let mut reps = RepresentationSet::new(Tensor::new(&[data.len(), r], rows)?, labels, data.num_classes)?;
    reps.fingerprint = model.fingerprint();
    reps.modalities = set;
    Ok(reps)
}

/// Per-sample `T·C·V` vectors of one derived modality, no augmentation.
pub fn flatten_modality(data: &Dataset, modality: Modality) -> Result<Tensor<f64>> {
    let per = data.frames * data.channels * data.joints;
    let mut out = Vec::with_capacity(data.len() * per);
    for s in &data.samples {
        let b = derive_modalities(s, &data.tree, &[modality])?;
        out.extend(b.get(modality).unwrap().values.iter().map(|v| *v as f64));
    }
    Tensor::new(&[data.len(), per], out)
}
