use indexmap::IndexMap;

use super::checkpoint::Checkpoint;
use super::config::{lr_at_epoch, TrainConfig, TrainMode};
use crate::data::{augment, derive_modalities, Dataset, Modality, ModalityBundle, SkeletonSequence};
use crate::error::{Error, Result};
use crate::kernel::{adam_step, derive_seed, seed_for, AdamState, RngStream, Tape, Tensor, Var};
use crate::losses::{baseline_loss, inter_loss, intra_loss, mse_consistency, reg_loss, umurl_loss, vc_loss};
use crate::model::{ModalityTokens, UmurlModel};

const SHUFFLE_TAG: u64 = 0x5348_5546;
const AUGMENT_TAG: u64 = 0x4155_474d;

/// Mean of one loss component over the steps of an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub component: String,
    pub value: f64,
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("epoch,component,value\n");
    for r in trace {
        out.push_str(&format!("{},{},{:.9e}\n", r.epoch, r.component, r.value));
    }
    out
}

/// Values of `component` in epoch order.
pub fn trace_series(trace: &[TraceRecord], component: &str) -> Vec<f64> {
    trace.iter().filter(|r| r.component == component).map(|r| r.value).collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: UmurlModel<f32>,
    pub optimizer: AdamState<f32>,
    pub trace: Vec<TraceRecord>,
    pub steps: u64,
    pub encoder_passes: u64,
}

/// Owns the model and optimizer between epochs so training can stop and resume exactly.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: UmurlModel<f32>,
    pub optimizer: AdamState<f32>,
    pub epochs_completed: usize,
    pub steps: u64,
}

impl Trainer {
    /// Fresh model whose geometry is taken from `data`.
    pub fn new(mut config: TrainConfig, data: &Dataset) -> Result<Self> {
        config.model.frames = data.frames;
        config.model.channels = data.channels;
        config.model.joints = data.joints;
        config.validate()?;
        let model = UmurlModel::new(config.model.clone(), seed_for(config.seed, "init"))?;
        let optimizer = AdamState::new(model.params(), config.optimizer);
        Ok(Trainer {
            config,
            model,
            optimizer,
            epochs_completed: 0,
            steps: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let model = ckpt.model()?;
        Ok(Trainer {
            steps: ckpt.optimizer.step,
            config: ckpt.config,
            model,
            optimizer: ckpt.optimizer,
            epochs_completed: ckpt.epochs_completed,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.config, &self.model, &self.optimizer, self.epochs_completed)
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples / self.config.batch_size
    }

    fn prepare(&self, data: &Dataset) -> Result<Vec<ModalityBundle>> {
        let m = &self.config.model;
        if (data.frames, data.channels, data.joints) != (m.frames, m.channels, m.joints) {
            return Err(Error::usage(format!(
                "dataset geometry T={} C={} V={} does not match the model's T={} C={} V={}",
                data.frames, data.channels, data.joints, m.frames, m.channels, m.joints
            )));
        }
        if data.len() < self.config.batch_size {
            return Err(Error::usage(format!(
                "dataset has {} samples, fewer than one batch of {}",
                data.len(),
                self.config.batch_size
            )));
        }
        data.samples
            .iter()
            .map(|s| derive_modalities(s, &data.tree, &m.modalities))
            .collect()
    }

    /// Augmented tokens of every modality for one view of the batch.
    fn view(&self, bundles: &[ModalityBundle], batch: &[usize], epoch: usize, view: u64) -> Result<Vec<ModalityTokens<f32>>> {
        let cfg = &self.config;
        cfg.model
            .modalities
            .iter()
            .map(|&m| {
                let stream_modality = if cfg.shared_aug { 0 } else { m.index() as u64 };
                let seqs = batch
                    .iter()
                    .map(|&i| {
                        let seed = derive_seed(cfg.seed, &[AUGMENT_TAG, epoch as u64, i as u64, stream_modality, view]);
                        augment(bundles[i].get(m).unwrap(), &cfg.augmentation, &mut RngStream::new(seed))
                    })
                    .collect::<Result<Vec<SkeletonSequence>>>()?;
                ModalityTokens::from_sequences(m, &seqs.iter().collect::<Vec<_>>())
            })
            .collect()
    }

    fn step(&mut self, bundles: &[ModalityBundle], batch: &[usize], epoch: usize) -> Result<Vec<(String, f64)>> {
        let tape = Tape::new();
        let session = self.model.session(&tape, true);
        let cfg = &self.config;
        let mut parts: Vec<(String, Var<'_, f32>)> = Vec::new();
        let total = match cfg.mode {
            TrainMode::Baseline => {
                let a = session.forward_multimodal(&self.view(bundles, batch, epoch, 0)?)?.unified;
                let b = session.forward_multimodal(&self.view(bundles, batch, epoch, 1)?)?.unified;
                parts.push(("mse".into(), mse_consistency(a, b)?));
                parts.push(("vc".into(), vc_loss(a, &cfg.loss)?.add(vc_loss(b, &cfg.loss)?)?));
                baseline_loss(a, b, &cfg.loss)?
            }
            TrainMode::Umurl => {
                let fused = session.forward_multimodal(&self.view(bundles, batch, epoch, 0)?)?;
                let mut unimodal = Vec::new();
                for x in self.view(bundles, batch, epoch, 1)? {
                    unimodal.push((x.modality, session.forward_unimodal(&x)?.1));
                }
                for ((m, a), (_, b)) in fused.decomposed.iter().zip(&unimodal) {
                    parts.push((format!("intra.{m}"), mse_consistency(*a, *b)?));
                }
                let intra = intra_loss(&fused.decomposed, &unimodal)?;
                let inter = if unimodal.len() >= 2 {
                    inter_loss(&unimodal)?
                } else {
                    tape.constant(Tensor::scalar(0.0))?
                };
                let reg = reg_loss(&unimodal, &fused.decomposed, &cfg.loss)?;
                parts.push(("intra".into(), intra));
                parts.push(("inter".into(), inter));
                parts.push(("reg".into(), reg));
                umurl_loss(intra, inter, reg, &cfg.loss)?
            }
        };
        let value = total.item()?;
        if !value.is_finite() {
            return Err(Error::numeric("loss is not finite"));
        }
        let grads = tape.backward(total)?;
        let grads: IndexMap<String, Tensor<f32>> = session.binder().collect(&grads);
        let mut out = vec![("total".to_string(), value as f64)];
        for (name, v) in parts {
            out.push((name, v.item()? as f64));
        }
        drop(session);
        self.optimizer.set_lr(lr_at_epoch(epoch, &self.config));
        adam_step(self.model.params_mut(), &grads, &mut self.optimizer)?;
        Ok(out)
    }

    /// Runs the next epoch: seeded shuffle, full batches only, one Adam step per batch.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<Vec<TraceRecord>> {
        let bundles = self.prepare(data)?;
        self.epoch_with(&bundles)
    }

    fn epoch_with(&mut self, bundles: &[ModalityBundle]) -> Result<Vec<TraceRecord>> {
        let epoch = self.epochs_completed;
        let mut order: Vec<usize> = (0..bundles.len()).collect();
        RngStream::new(derive_seed(self.config.seed, &[SHUFFLE_TAG, epoch as u64])).shuffle(&mut order);
        let mut sums: IndexMap<String, f64> = IndexMap::new();
        let steps = self.steps_per_epoch(bundles.len());
        for batch in order.chunks_exact(self.config.batch_size) {
            let parts = self.step(bundles, batch, epoch).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("step {}: {msg}", self.steps)),
                other => other,
            })?;
            self.steps += 1;
            for (name, v) in parts {
                *sums.entry(name).or_insert(0.0) += v;
            }
        }
        self.epochs_completed += 1;
        Ok(sums
            .into_iter()
            .map(|(component, s)| TraceRecord {
                epoch,
                component,
                value: s / steps as f64,
            })
            .collect())
    }

    /// Trains until `config.epochs` epochs are complete.
    pub fn fit(&mut self, data: &Dataset) -> Result<Vec<TraceRecord>> {
        let bundles = self.prepare(data)?;
        let mut trace = Vec::new();
        while self.epochs_completed < self.config.epochs {
            trace.extend(self.epoch_with(&bundles)?);
        }
        Ok(trace)
    }

    pub fn into_outcome(self, trace: Vec<TraceRecord>) -> TrainOutcome {
        let passes = self.model.encoder_passes();
        TrainOutcome {
            model: self.model,
            optimizer: self.optimizer,
            trace,
            steps: self.steps,
            encoder_passes: passes,
        }
    }
}

fn pretrain(data: &Dataset, config: &TrainConfig, mode: TrainMode) -> Result<TrainOutcome> {
    if config.mode != mode {
        return Err(Error::usage(format!("configuration mode is {:?}, expected {mode:?}", config.mode)));
    }
    if data.is_empty() {
        return Err(Error::usage("dataset is empty"));
    }
    let mut trainer = Trainer::new(config.clone(), data)?;
    let trace = trainer.fit(data)?;
    Ok(trainer.into_outcome(trace))
}

/// Two-view early-fusion baseline.
pub fn pretrain_baseline(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    pretrain(data, config, TrainMode::Baseline)
}

/// Decomposed multi-modal objective with intra- and inter-modal consistency.
pub fn pretrain_umurl(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    pretrain(data, config, TrainMode::Umurl)
}

/// Names of the per-modality intra-consistency components for `modalities`.
pub fn intra_components(modalities: &[Modality]) -> Vec<String> {
    modalities.iter().map(|m| format!("intra.{m}")).collect()
}
