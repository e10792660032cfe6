use serde::{Deserialize, Serialize};

use super::representations::RepresentationSet;
use crate::error::{Error, Result};
use crate::kernel::{adam_step, derive_seed, AdamConfig, AdamState, ParamStore, RngStream, Tape, Tensor};

const SUBSAMPLE_TAG: u64 = 0x5052_4f42;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epochs: 200, lr: 1e-2 }
    }
}

/// Per class, `round(fraction · n_c)` members chosen by a seeded shuffle, returned in index order.
pub fn stratified_subsample(labels: &[usize], num_classes: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::usage(format!("label fraction {fraction} is outside (0, 1]")));
    }
    let mut chosen = Vec::new();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let keep = (fraction * members.len() as f64).round() as usize;
        if keep == 0 {
            return Err(Error::usage(format!(
                "class {class} has no labelled training sample at fraction {fraction}"
            )));
        }
        if keep < members.len() {
            RngStream::new(derive_seed(seed, &[SUBSAMPLE_TAG, class as u64])).shuffle(&mut members);
        }
        chosen.extend_from_slice(&members[..keep]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Multinomial logistic regression on frozen features, full batch, zero-initialised.
pub fn linear_probe_with(
    train: &RepresentationSet,
    test: &RepresentationSet,
    fraction: f64,
    seed: u64,
    config: ProbeConfig,
) -> Result<f64> {
    if train.dim() != test.dim() || train.num_classes != test.num_classes {
        return Err(Error::contract("train and test representations disagree in width or classes"));
    }
    if test.is_empty() {
        return Err(Error::usage("probe test split is empty"));
    }
    let k = train.num_classes;
    let subset = train.select(&stratified_subsample(&train.labels, k, fraction, seed)?);
    let d = subset.dim();
    let mut params = ParamStore::new();
    params.insert("weight", Tensor::<f64>::zeros(&[d, k]))?;
    params.insert("bias", Tensor::<f64>::zeros(&[k]))?;
    let mut state = AdamState::new(
        &params,
        AdamConfig {
            lr: config.lr,
            weight_decay: 0.0,
            ..AdamConfig::default()
        },
    );
    for _ in 0..config.epochs {
        let tape = Tape::new();
        let w = tape.leaf(params.get("weight")?.clone())?;
        let b = tape.leaf(params.get("bias")?.clone())?;
        let x = tape.constant(subset.values.clone())?;
        let loss = x.matmul(w)?.add_bcast(b)?.cross_entropy(&subset.labels)?;
        let g = tape.backward(loss)?;
        let grads = [("weight", w), ("bias", b)]
            .into_iter()
            .map(|(n, v)| (n.to_string(), g.wrt(v).unwrap()))
            .collect();
        adam_step(&mut params, &grads, &mut state)?;
    }

    let (w, b) = (params.get("weight")?, params.get("bias")?);
    let mut hits = 0;
    for i in 0..test.len() {
        let x = test.row(i);
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..k {
            let s = b.data()[c] + x.iter().enumerate().map(|(j, v)| v * w.data()[j * k + c]).sum::<f64>();
            if s > best.1 {
                best = (c, s);
            }
        }
        hits += usize::from(best.0 == test.labels[i]);
    }
    Ok(hits as f64 / test.len() as f64)
}

pub fn linear_probe(train: &RepresentationSet, test: &RepresentationSet, fraction: f64, seed: u64) -> Result<f64> {
    linear_probe_with(train, test, fraction, seed, ProbeConfig::default())
}
