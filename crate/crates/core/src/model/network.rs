use std::sync::atomic::{AtomicU64, Ordering};

use super::config::{FusionStrategy, Head, ModelConfig, Readout, Stream};
use crate::data::{Modality, SkeletonSequence};
use crate::error::{Error, Result};
use crate::kernel::{concat, seed_for, Binder, Float, ParamStore, RngStream, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;
const BN_EPS: f64 = 1e-5;

/// Token tensors of one modality for a batch: temporal `[N, T, C·V]`, spatial `[N, V, T·C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityTokens<F> {
    pub modality: Modality,
    pub temporal: Tensor<F>,
    pub spatial: Tensor<F>,
}

impl<F: Float> ModalityTokens<F> {
    pub fn from_sequences(modality: Modality, seqs: &[&SkeletonSequence]) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::contract("empty batch"))?;
        let (t, c, v) = (first.frames, first.channels, first.joints);
        let per = t * c * v;
        let mut temporal = Vec::with_capacity(seqs.len() * per);
        let mut spatial = vec![F::zero(); seqs.len() * per];
        for (n, s) in seqs.iter().enumerate() {
            if (s.frames, s.channels, s.joints) != (t, c, v) {
                return Err(Error::contract("sequences in a batch must share their shape"));
            }
            temporal.extend(s.values.iter().map(|x| F::of(*x as f64)));
            let out = &mut spatial[n * per..(n + 1) * per];
            for (tc, frame_row) in s.values.chunks_exact(v).enumerate() {
                for (j, x) in frame_row.iter().enumerate() {
                    out[j * t * c + tc] = F::of(*x as f64);
                }
            }
        }
        let n = seqs.len();
        Ok(ModalityTokens {
            modality,
            temporal: Tensor::new(&[n, t, c * v], temporal)?,
            spatial: Tensor::new(&[n, v, t * c], spatial)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.temporal.shape()[0]
    }

    pub fn stream(&self, stream: Stream) -> &Tensor<F> {
        match stream {
            Stream::Temporal => &self.temporal,
            Stream::Spatial => &self.spatial,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Uniform(f64),
    Zeros,
    Ones,
    Normal(f64),
}

/// Every parameter of a configuration: name, shape and initialiser, in registry order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let linear = |out: &mut Vec<_>, name: String, fan_in: usize, fan_out: usize| {
        out.push((format!("{name}.weight"), vec![fan_in, fan_out], Init::Uniform(1.0 / (fan_in as f64).sqrt())));
        out.push((format!("{name}.bias"), vec![fan_out], Init::Zeros));
    };
    let norm = |out: &mut Vec<(String, Vec<usize>, Init)>, name: String, width: usize| {
        out.push((format!("{name}.gain"), vec![width], Init::Ones));
        out.push((format!("{name}.bias"), vec![width], Init::Zeros));
    };
    let (dh, de, k) = (cfg.embed_dim, cfg.encoder_dim, cfg.modalities.len());

    for stream in Stream::BOTH {
        let token_in = token_width(cfg, stream);
        for owner in embed_owners(cfg) {
            let p = format!("embed.{}.{owner}", stream.name());
            linear(&mut out, format!("{p}.fc1"), token_in, dh);
            linear(&mut out, format!("{p}.fc2"), dh, dh);
        }
        match cfg.fusion {
            FusionStrategy::Averaging => {}
            FusionStrategy::AveragingLinear => linear(&mut out, format!("fuse.{}.linear", stream.name()), dh, dh),
            FusionStrategy::ConcatLinear => linear(&mut out, format!("fuse.{}.linear", stream.name()), k * dh, dh),
            FusionStrategy::WeightedSum => out.push((format!("fuse.{}.logits", stream.name()), vec![k], Init::Zeros)),
        }
    }
    for stream in Stream::BOTH {
        let p = format!("encoder.{}", stream.name());
        if dh != de {
            linear(&mut out, format!("{p}.in_proj"), dh, de);
        }
        if positions(cfg, stream) {
            out.push((format!("{p}.pos"), vec![tokens(cfg, stream), de], Init::Normal(0.02)));
        }
        if cfg.readout == Readout::Token {
            out.push((format!("{p}.readout"), vec![de], Init::Normal(0.02)));
        }
        for layer in 0..cfg.depth {
            let l = format!("{p}.layers.{layer}");
            norm(&mut out, format!("{l}.ln1"), de);
            for part in ["q", "k", "v", "out"] {
                linear(&mut out, format!("{l}.attn.{part}"), de, de);
            }
            norm(&mut out, format!("{l}.ln2"), de);
            linear(&mut out, format!("{l}.ffn.fc1"), de, de * cfg.ffn_mult);
            linear(&mut out, format!("{l}.ffn.fc2"), de * cfg.ffn_mult, de);
        }
    }
    let r = cfg.representation_dim();
    let d = cfg.proj_dim;
    for owner in projector_owners(cfg) {
        let p = format!("proj.{owner}");
        linear(&mut out, format!("{p}.fc1"), r, d);
        norm(&mut out, format!("{p}.bn1"), d);
        linear(&mut out, format!("{p}.fc2"), d, d);
        norm(&mut out, format!("{p}.bn2"), d);
        linear(&mut out, format!("{p}.fc3"), d, d);
    }
    out
}

fn token_width(cfg: &ModelConfig, stream: Stream) -> usize {
    match stream {
        Stream::Temporal => cfg.channels * cfg.joints,
        Stream::Spatial => cfg.frames * cfg.channels,
    }
}

fn tokens(cfg: &ModelConfig, stream: Stream) -> usize {
    match stream {
        Stream::Temporal => cfg.frames,
        Stream::Spatial => cfg.joints,
    }
}

fn positions(cfg: &ModelConfig, stream: Stream) -> bool {
    match stream {
        Stream::Temporal => cfg.temporal_positions,
        Stream::Spatial => cfg.spatial_positions,
    }
}

fn embed_owners(cfg: &ModelConfig) -> Vec<String> {
    if cfg.shared_embedding {
        vec!["shared".into()]
    } else {
        cfg.modalities.iter().map(|m| m.name().to_string()).collect()
    }
}

fn projector_owners(cfg: &ModelConfig) -> Vec<String> {
    let mut owners = vec!["unified".to_string()];
    if cfg.shared_projector {
        owners.push("shared".into());
    } else {
        owners.extend(cfg.modalities.iter().map(|m| m.name().to_string()));
    }
    owners
}

/// Parameter registry plus configuration and an encoder-pass counter.
#[derive(Debug)]
pub struct UmurlModel<F> {
    config: ModelConfig,
    params: ParamStore<F>,
    encoder_passes: AtomicU64,
}

impl<F: Float> Clone for UmurlModel<F> {
    fn clone(&self) -> Self {
        UmurlModel {
            config: self.config.clone(),
            params: self.params.clone(),
            encoder_passes: AtomicU64::new(self.encoder_passes()),
        }
    }
}

impl<F: Float> UmurlModel<F> {
    /// Fresh parameters; each tensor draws from its own stream keyed by (seed, name).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, shape, init) in layout(&config) {
            let mut rng = RngStream::new(seed_for(seed, &name));
            let t = Tensor::from_fn(&shape, |_| {
                F::of(match init {
                    Init::Uniform(b) => rng.uniform_in(-b, b),
                    Init::Zeros => 0.0,
                    Init::Ones => 1.0,
                    Init::Normal(s) => s * rng.normal(),
                })
            });
            params.insert(name, t)?;
        }
        Ok(UmurlModel {
            config,
            params,
            encoder_passes: AtomicU64::new(0),
        })
    }

    /// Reassembles a model from stored parameters, checking names and shapes against the layout.
    pub fn from_parts(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != params.len() {
            return Err(Error::contract(format!(
                "configuration expects {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape, _), (got_name, t)) in expected.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::contract(format!(
                    "parameter {got_name} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(UmurlModel {
            config,
            params,
            encoder_passes: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<F> {
        self.params
    }

    pub fn fingerprint(&self) -> u64 {
        self.config.fingerprint()
    }

    /// Samples encoded since construction or the last reset.
    pub fn encoder_passes(&self) -> u64 {
        self.encoder_passes.load(Ordering::Relaxed)
    }

    pub fn reset_encoder_passes(&self) {
        self.encoder_passes.store(0, Ordering::Relaxed);
    }

    pub fn cast<G: Float>(&self) -> UmurlModel<G> {
        UmurlModel {
            config: self.config.clone(),
            params: self.params.cast(),
            encoder_passes: AtomicU64::new(0),
        }
    }

    /// Parameter names belonging to the shared dual-stream encoder.
    pub fn encoder_parameter_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| n.starts_with("encoder."))
            .map(str::to_string)
            .collect()
    }

    /// Forward-pass context on `tape`. Trainable sessions bind parameters as leaves
    /// and run batch normalisation in training mode.
    pub fn session<'t, 'p>(&'p self, tape: &'t Tape<F>, trainable: bool) -> Session<'t, 'p, F> {
        let binder = if trainable {
            Binder::trainable(tape, &self.params)
        } else {
            Binder::frozen(tape, &self.params)
        };
        Session {
            model: self,
            binder,
            training: trainable,
        }
    }
}

pub struct MultimodalOutput<'t, F: Float> {
    /// `y^u`, `[N, 2·D_enc]`.
    pub representation: Var<'t, F>,
    /// `Z^{u,m} = g_m(y^u)` per modality in canonical order.
    pub decomposed: Vec<(Modality, Var<'t, F>)>,
    /// `Z^u = g_u(y^u)`.
    pub unified: Var<'t, F>,
}

pub struct Session<'t, 'p, F: Float> {
    model: &'p UmurlModel<F>,
    binder: Binder<'t, 'p, F>,
    training: bool,
}

impl<'t, 'p, F: Float> Session<'t, 'p, F> {
    pub fn binder(&self) -> &Binder<'t, 'p, F> {
        &self.binder
    }

    pub fn tape(&self) -> &'t Tape<F> {
        self.binder.tape()
    }

    fn cfg(&self) -> &'p ModelConfig {
        &self.model.config
    }

    fn p(&self, name: &str) -> Result<Var<'t, F>> {
        self.binder.param(name)
    }

    fn linear(&self, x: Var<'t, F>, name: &str) -> Result<Var<'t, F>> {
        x.matmul(self.p(&format!("{name}.weight"))?)?
            .add_bcast(self.p(&format!("{name}.bias"))?)
    }

    fn affine(&self, x: Var<'t, F>, name: &str) -> Result<Var<'t, F>> {
        x.mul_bcast(self.p(&format!("{name}.gain"))?)?
            .add_bcast(self.p(&format!("{name}.bias"))?)
    }

    fn check_modality(&self, m: Modality) -> Result<()> {
        if self.cfg().modalities.contains(&m) {
            Ok(())
        } else {
            Err(Error::contract(format!("modality {m} is not registered in this model")))
        }
    }

    /// Modality-specific MLP applied to every token: `[N, L, in] -> [N, L, D_h]`.
    pub fn embed_modality(&self, tokens: &Tensor<F>, modality: Modality, stream: Stream) -> Result<Var<'t, F>> {
        self.check_modality(modality)?;
        let cfg = self.cfg();
        let expected = [tokens.shape().first().copied().unwrap_or(0), self::tokens(cfg, stream), token_width(cfg, stream)];
        if tokens.shape() != expected {
            return Err(Error::contract(format!(
                "{} tokens for {modality}: expected [N, {}, {}], got {:?}",
                stream.name(),
                expected[1],
                expected[2],
                tokens.shape()
            )));
        }
        let owner = if cfg.shared_embedding { "shared" } else { modality.name() };
        let p = format!("embed.{}.{owner}", stream.name());
        let x = self.tape().constant(tokens.clone())?;
        let h = self.linear(x, &format!("{p}.fc1"))?.gelu()?;
        self.linear(h, &format!("{p}.fc2"))
    }

    /// Combines per-modality token matrices into one `[N, L, D_h]` matrix.
    pub fn fuse(&self, embedded: &[(Modality, Var<'t, F>)], stream: Stream) -> Result<Var<'t, F>> {
        let first = embedded.first().ok_or_else(|| Error::contract("fuse needs at least one modality"))?.1;
        let shape = first.shape();
        for (m, e) in embedded {
            self.check_modality(*m)?;
            if e.shape() != shape {
                return Err(Error::contract(format!("fuse: {m} tokens {:?} differ from {shape:?}", e.shape())));
            }
        }
        let k = embedded.len();
        let s = stream.name();
        let mean = || -> Result<Var<'t, F>> {
            let mut acc = first;
            for (_, e) in &embedded[1..] {
                acc = acc.add(*e)?;
            }
            acc.scale(1.0 / k as f64)
        };
        match self.cfg().fusion {
            FusionStrategy::Averaging => mean(),
            FusionStrategy::AveragingLinear => self.linear(mean()?, &format!("fuse.{s}.linear")),
            FusionStrategy::ConcatLinear => {
                if k != self.cfg().modalities.len() {
                    return Err(Error::usage("concat-linear fusion needs every trained modality at inference"));
                }
                let parts: Vec<_> = embedded.iter().map(|(_, e)| *e).collect();
                self.linear(concat(&parts, shape.len() - 1)?, &format!("fuse.{s}.linear"))
            }
            FusionStrategy::WeightedSum => {
                let logits = self.p(&format!("fuse.{s}.logits"))?;
                let idx: Vec<usize> = embedded
                    .iter()
                    .map(|(m, _)| self.cfg().modalities.iter().position(|x| x == m).unwrap())
                    .collect();
                let picked = concat(
                    &idx.iter().map(|&i| logits.narrow(0, i, 1)).collect::<Result<Vec<_>>>()?,
                    0,
                )?;
                let w = picked.softmax()?.reshape(&[1, 1, k])?;
                let len: usize = shape.iter().product();
                let stacked = concat(
                    &embedded.iter().map(|(_, e)| e.reshape(&[1, 1, len])).collect::<Result<Vec<_>>>()?,
                    1,
                )?;
                w.bmm(stacked, false, false)?.reshape(&shape)
            }
        }
    }

    fn attention(&self, x: Var<'t, F>, p: &str) -> Result<Var<'t, F>> {
        let (n, l, d) = match x.shape()[..] {
            [n, l, d] => (n, l, d),
            ref s => return Err(Error::contract(format!("attention input {s:?}"))),
        };
        let h = self.cfg().heads;
        let hd = d / h;
        let split = |v: Var<'t, F>| v.reshape(&[n, l, h, hd])?.permute(&[0, 2, 1, 3])?.reshape(&[n * h, l, hd]);
        let q = split(self.linear(x, &format!("{p}.q"))?)?;
        let k = split(self.linear(x, &format!("{p}.k"))?)?;
        let v = split(self.linear(x, &format!("{p}.v"))?)?;
        let weights = q.bmm(k, false, true)?.scale(1.0 / (hd as f64).sqrt())?.softmax()?;
        let ctx = weights
            .bmm(v, false, false)?
            .reshape(&[n, h, l, hd])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[n, l, d])?;
        self.linear(ctx, &format!("{p}.out"))
    }

    /// One stream of the encoder: `[N, L, D_h] -> [N, D_enc]`.
    pub fn encode_stream(&self, tokens: Var<'t, F>, stream: Stream) -> Result<Var<'t, F>> {
        let cfg = self.cfg();
        let p = format!("encoder.{}", stream.name());
        let mut h = if cfg.embed_dim != cfg.encoder_dim {
            self.linear(tokens, &format!("{p}.in_proj"))?
        } else {
            tokens
        };
        if positions(cfg, stream) {
            h = h.add_bcast(self.p(&format!("{p}.pos"))?)?;
        }
        let n = h.shape()[0];
        if cfg.readout == Readout::Token {
            let slot = self.tape().constant(Tensor::zeros(&[n, 1, cfg.encoder_dim]))?;
            let token = slot.add_bcast(self.p(&format!("{p}.readout"))?)?;
            h = concat(&[token, h], 1)?;
        }
        for layer in 0..cfg.depth {
            let l = format!("{p}.layers.{layer}");
            let a = self.affine(h.normalize_last(LN_EPS)?, &format!("{l}.ln1"))?;
            h = h.add(self.attention(a, &format!("{l}.attn"))?)?;
            let b = self.affine(h.normalize_last(LN_EPS)?, &format!("{l}.ln2"))?;
            let f = self.linear(self.linear(b, &format!("{l}.ffn.fc1"))?.gelu()?, &format!("{l}.ffn.fc2"))?;
            h = h.add(f)?;
        }
        match cfg.readout {
            Readout::Mean => h.mean_axis(1),
            Readout::Token => h.narrow(1, 0, 1)?.reshape(&[n, cfg.encoder_dim]),
        }
    }

    /// Both streams, pooled and concatenated: `[N, 2·D_enc]`. Counts one encoder pass per sample.
    pub fn encode(&self, temporal: Var<'t, F>, spatial: Var<'t, F>) -> Result<Var<'t, F>> {
        let n = temporal.shape()[0];
        if spatial.shape()[0] != n {
            return Err(Error::contract("temporal and spatial batches differ in size"));
        }
        let t = self.encode_stream(temporal, Stream::Temporal)?;
        let s = self.encode_stream(spatial, Stream::Spatial)?;
        self.model.encoder_passes.fetch_add(n as u64, Ordering::Relaxed);
        concat(&[t, s], 1)
    }

    /// Projection head: two (linear, batch-norm, ReLU) blocks then a linear map to `D`.
    pub fn project(&self, y: Var<'t, F>, head: Head) -> Result<Var<'t, F>> {
        let owner = match head {
            Head::Unified => "unified".to_string(),
            Head::Modality(m) => {
                self.check_modality(m)?;
                if self.cfg().shared_projector {
                    "shared".to_string()
                } else {
                    m.name().to_string()
                }
            }
        };
        if self.training && y.shape()[0] < 2 {
            return Err(Error::contract("batch normalisation needs at least 2 samples in training mode"));
        }
        let p = format!("proj.{owner}");
        let mut h = y;
        for i in 1..=2 {
            h = self.linear(h, &format!("{p}.fc{i}"))?;
            h = self.affine(h.normalize_rows(BN_EPS)?, &format!("{p}.bn{i}"))?.relu()?;
        }
        self.linear(h, &format!("{p}.fc3"))
    }

    fn check_batch(&self, inputs: &[ModalityTokens<F>]) -> Result<usize> {
        let first = inputs.first().ok_or_else(|| Error::contract("no modality inputs"))?;
        let n = first.batch_size();
        for (i, x) in inputs.iter().enumerate() {
            if x.batch_size() != n {
                return Err(Error::contract("modality batches differ in size"));
            }
            if inputs[..i].iter().any(|y| y.modality == x.modality) {
                return Err(Error::contract(format!("modality {} given twice", x.modality)));
            }
        }
        Ok(n)
    }

    /// Fused representation `y^u` from any registered subset of modalities.
    pub fn represent_multimodal(&self, inputs: &[ModalityTokens<F>]) -> Result<Var<'t, F>> {
        self.check_batch(inputs)?;
        let mut sorted: Vec<&ModalityTokens<F>> = inputs.iter().collect();
        sorted.sort_by_key(|x| x.modality);
        let mut fused = Vec::with_capacity(2);
        for stream in Stream::BOTH {
            let embedded = sorted
                .iter()
                .map(|x| Ok((x.modality, self.embed_modality(x.stream(stream), x.modality, stream)?)))
                .collect::<Result<Vec<_>>>()?;
            fused.push(self.fuse(&embedded, stream)?);
        }
        self.encode(fused[0], fused[1])
    }

    /// Requires exactly the registered modality set.
    pub fn forward_multimodal(&self, inputs: &[ModalityTokens<F>]) -> Result<MultimodalOutput<'t, F>> {
        let mut given: Vec<Modality> = inputs.iter().map(|x| x.modality).collect();
        given.sort();
        if given != self.cfg().modalities {
            return Err(Error::contract(format!(
                "bundle modalities {given:?} do not match the model's {:?}",
                self.cfg().modalities
            )));
        }
        let y = self.represent_multimodal(inputs)?;
        let decomposed = self
            .cfg()
            .modalities
            .iter()
            .map(|m| Ok((*m, self.project(y, Head::Modality(*m))?)))
            .collect::<Result<Vec<_>>>()?;
        let unified = self.project(y, Head::Unified)?;
        Ok(MultimodalOutput {
            representation: y,
            decomposed,
            unified,
        })
    }

    /// `y^m = Encoder(MSEM_m(x^m))`, no fusion.
    pub fn represent_unimodal(&self, input: &ModalityTokens<F>) -> Result<Var<'t, F>> {
        let t = self.embed_modality(&input.temporal, input.modality, Stream::Temporal)?;
        let s = self.embed_modality(&input.spatial, input.modality, Stream::Spatial)?;
        self.encode(t, s)
    }

    /// `(y^m, Z^m = g_m(y^m))`.
    pub fn forward_unimodal(&self, input: &ModalityTokens<F>) -> Result<(Var<'t, F>, Var<'t, F>)> {
        let y = self.represent_unimodal(input)?;
        let z = self.project(y, Head::Modality(input.modality))?;
        Ok((y, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(t: usize, v: usize, seed: u64) -> SkeletonSequence {
        let mut r = RngStream::new(seed);
        SkeletonSequence::new(t, 3, v, (0..t * 3 * v).map(|_| r.normal() as f32).collect(), Some(0)).unwrap()
    }

    #[test]
    fn token_layouts() {
        let s = seq(4, 2, 1);
        let tok = ModalityTokens::<f64>::from_sequences(Modality::Joint, &[&s]).unwrap();
        assert_eq!(tok.temporal.shape(), &[1, 4, 6]);
        assert_eq!(tok.spatial.shape(), &[1, 2, 12]);
        for t in 0..4 {
            for c in 0..3 {
                for v in 0..2 {
                    let x = s.at(t, c, v) as f64;
                    assert_eq!(tok.temporal.data()[t * 6 + c * 2 + v], x);
                    assert_eq!(tok.spatial.data()[v * 12 + t * 3 + c], x);
                }
            }
        }
    }

    #[test]
    fn parameter_names_are_unique_and_layout_reloads() {
        for cfg in [
            ModelConfig::default(),
            ModelConfig {
                shared_embedding: true,
                shared_projector: true,
                fusion: FusionStrategy::WeightedSum,
                readout: Readout::Token,
                embed_dim: 32,
                depth: 2,
                ..ModelConfig::default()
            },
        ] {
            let m = UmurlModel::<f32>::new(cfg.clone(), 3).unwrap();
            let mut names: Vec<_> = m.params().names().collect();
            let n = names.len();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), n);
            let back = UmurlModel::from_parts(cfg, m.params().clone()).unwrap();
            assert_eq!(back.params(), m.params());
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = UmurlModel::<f32>::new(ModelConfig::tiny(), 1).unwrap();
        let b = UmurlModel::<f32>::new(ModelConfig::tiny(), 1).unwrap();
        let c = UmurlModel::<f32>::new(ModelConfig::tiny(), 2).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn unregistered_modality_rejected() {
        let cfg = ModelConfig {
            modalities: vec![Modality::Joint],
            ..ModelConfig::tiny()
        };
        let m = UmurlModel::<f64>::new(cfg, 0).unwrap();
        let tape = Tape::new();
        let s = m.session(&tape, false);
        let x = ModalityTokens::from_sequences(Modality::Bone, &[&seq(6, 4, 0)]).unwrap();
        assert!(matches!(s.embed_modality(&x.temporal, Modality::Bone, Stream::Temporal), Err(Error::Contract(_))));
    }

    #[test]
    fn training_projection_needs_two_rows() {
        let m = UmurlModel::<f64>::new(ModelConfig::tiny(), 0).unwrap();
        let tape = Tape::new();
        let y = tape.constant(Tensor::zeros(&[1, 16])).unwrap();
        assert!(m.session(&tape, true).project(y, Head::Unified).is_err());
        assert!(m.session(&tape, false).project(y, Head::Unified).is_ok());
    }
}
