use umurl::data::{Modality, SkeletonSequence};
use umurl::kernel::{grad_check, RngStream, Tape, Tensor};
use umurl::model::{
    inference_pass_count, FusionStrategy, Head, ModalityTokens, ModelConfig, PassMode, Stream, UmurlModel,
};

fn seq(t: usize, v: usize, rng: &mut RngStream) -> SkeletonSequence {
    SkeletonSequence::new(t, 3, v, (0..t * 3 * v).map(|_| rng.normal() as f32).collect(), Some(0)).unwrap()
}

fn batch(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<ModalityTokens<f64>> {
    let mut r = RngStream::new(seed);
    cfg.modalities
        .iter()
        .map(|&m| {
            let seqs: Vec<_> = (0..n).map(|_| seq(cfg.frames, cfg.joints, &mut r)).collect();
            ModalityTokens::from_sequences(m, &seqs.iter().collect::<Vec<_>>()).unwrap()
        })
        .collect()
}

fn zero_biases(model: &mut UmurlModel<f64>) {
    let names: Vec<String> = model.params().names().map(str::to_string).collect();
    for n in names.iter().filter(|n| n.ends_with(".bias")) {
        model.params_mut().get_mut(n).unwrap().data_mut().fill(0.0);
    }
}

#[test]
fn embedding_shapes_and_zero_input() {
    let cfg = ModelConfig::default();
    let model = UmurlModel::<f64>::new(cfg.clone(), 1).unwrap();
    let tape = Tape::new();
    let s = model.session(&tape, false);
    let x = &batch(&cfg, 2, 3)[0];
    assert_eq!(s.embed_modality(&x.temporal, Modality::Joint, Stream::Temporal).unwrap().shape(), vec![2, 64, 64]);
    assert_eq!(s.embed_modality(&x.spatial, Modality::Joint, Stream::Spatial).unwrap().shape(), vec![2, 8, 64]);
    assert!(s.embed_modality(&x.spatial, Modality::Joint, Stream::Temporal).is_err());

    let mut zeroed = model.clone();
    zero_biases(&mut zeroed);
    let tape = Tape::new();
    let s = zeroed.session(&tape, false);
    let out = s
        .embed_modality(&Tensor::zeros(&[2, 64, 24]), Modality::Motion, Stream::Temporal)
        .unwrap();
    assert!(out.value().data().iter().all(|v| *v == 0.0));
}

#[test]
fn fusion_arithmetic() {
    let cfg = ModelConfig {
        fusion: FusionStrategy::Averaging,
        ..ModelConfig::tiny()
    };
    let model = UmurlModel::<f64>::new(cfg, 0).unwrap();
    let tape = Tape::new();
    let s = model.session(&tape, false);
    let mut r = RngStream::new(5);
    let mut rand = || tape.constant(Tensor::from_fn(&[2, 6, 8], |_| r.normal())).unwrap();
    let (a, b, c) = (rand(), rand(), rand());
    let ms = Modality::ALL;

    let same = s.fuse(&[(ms[0], a), (ms[1], a), (ms[2], a)], Stream::Temporal).unwrap();
    for (x, y) in same.value().data().iter().zip(a.value().data()) {
        assert!((x - y).abs() < 1e-12);
    }
    let abc = s.fuse(&[(ms[0], a), (ms[1], b), (ms[2], c)], Stream::Temporal).unwrap().value();
    let cab = s.fuse(&[(ms[0], c), (ms[1], a), (ms[2], b)], Stream::Temporal).unwrap().value();
    let (av, bv, cv) = (a.value(), b.value(), c.value());
    for i in 0..abc.len() {
        let oracle = (av.data()[i] + bv.data()[i] + cv.data()[i]) / 3.0;
        assert!((abc.data()[i] - oracle).abs() <= 1e-6);
    }
    // summation order differs, so compare up to rounding
    for (x, y) in abc.data().iter().zip(cab.data()) {
        assert!((x - y).abs() <= 1e-15);
    }
    let short = tape.constant(Tensor::zeros(&[2, 5, 8])).unwrap();
    assert!(s.fuse(&[(ms[0], a), (ms[1], short)], Stream::Temporal).is_err());
}

#[test]
fn every_fusion_keeps_width() {
    for fusion in [
        FusionStrategy::WeightedSum,
        FusionStrategy::Averaging,
        FusionStrategy::AveragingLinear,
        FusionStrategy::ConcatLinear,
    ] {
        let cfg = ModelConfig { fusion, ..ModelConfig::tiny() };
        let model = UmurlModel::<f64>::new(cfg.clone(), 0).unwrap();
        let tape = Tape::new();
        let out = model.session(&tape, true).forward_multimodal(&batch(&cfg, 3, 1)).unwrap();
        assert_eq!(out.representation.shape(), vec![3, 16]);
        assert_eq!(out.decomposed.len(), 3);
        for (_, z) in &out.decomposed {
            assert_eq!(z.shape(), vec![3, 16]);
        }
    }
}

#[test]
fn spatial_pooling_ignores_joint_order() {
    let cfg = ModelConfig::tiny();
    let model = UmurlModel::<f64>::new(cfg.clone(), 2).unwrap();
    let tape = Tape::new();
    let s = model.session(&tape, false);
    let mut r = RngStream::new(8);
    let t = tape.constant(Tensor::from_fn(&[2, 6, 8], |_| r.normal())).unwrap();
    let sp = Tensor::from_fn(&[2, 4, 8], |_| r.normal());
    let mut permuted = sp.clone();
    let order = [2usize, 0, 3, 1];
    for n in 0..2 {
        for (dst, &src) in order.iter().enumerate() {
            for d in 0..8 {
                permuted.data_mut()[(n * 4 + dst) * 8 + d] = sp.data()[(n * 4 + src) * 8 + d];
            }
        }
    }
    let a = s.encode(t, tape.constant(sp).unwrap()).unwrap().value();
    let b = s.encode(t, tape.constant(permuted).unwrap()).unwrap().value();
    assert_eq!(a.shape(), &[2, 16]);
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn single_modality_fused_path_equals_unimodal_path() {
    let cfg = ModelConfig {
        modalities: vec![Modality::Joint],
        fusion: FusionStrategy::Averaging,
        ..ModelConfig::tiny()
    };
    let model = UmurlModel::<f64>::new(cfg.clone(), 4).unwrap();
    let inputs = batch(&cfg, 3, 9);
    let tape = Tape::new();
    let s = model.session(&tape, true);
    let fused = s.forward_multimodal(&inputs).unwrap();
    let (y, z) = s.forward_unimodal(&inputs[0]).unwrap();
    assert_eq!(fused.representation.value(), y.value());
    assert_eq!(fused.decomposed[0].1.value(), z.value());
}

#[test]
fn encoder_passes_are_counted_per_sample() {
    let cfg = ModelConfig::tiny();
    for k in 1..=3 {
        let cfg = ModelConfig {
            modalities: Modality::ALL[..k].to_vec(),
            ..cfg.clone()
        };
        let model = UmurlModel::<f64>::new(cfg.clone(), 0).unwrap();
        let inputs = batch(&cfg, 5, 1);
        let tape = Tape::new();
        let s = model.session(&tape, false);
        s.represent_multimodal(&inputs).unwrap();
        assert_eq!(model.encoder_passes(), 5 * inference_pass_count(&cfg.modalities, PassMode::Inference) as u64);
        model.reset_encoder_passes();
        let s = model.session(&tape, true);
        s.forward_multimodal(&inputs).unwrap();
        for x in &inputs {
            s.forward_unimodal(x).unwrap();
        }
        assert_eq!(model.encoder_passes(), 5 * inference_pass_count(&cfg.modalities, PassMode::UmurlTrain) as u64);
    }
    assert_eq!(inference_pass_count(&Modality::ALL, PassMode::BaselineTrain), 2);
}

#[test]
fn encoder_registry_entries_are_shared() {
    let cfg = ModelConfig::tiny();
    let model = UmurlModel::<f64>::new(cfg.clone(), 0).unwrap();
    let inputs = batch(&cfg, 2, 1);
    let mut encoder = model.encoder_parameter_names();
    encoder.sort();
    assert!(!encoder.is_empty());
    let bound_encoder = |names: Vec<String>| -> Vec<String> {
        names.into_iter().filter(|n| n.starts_with("encoder.")).collect()
    };
    let tape = Tape::new();
    let fused = model.session(&tape, true);
    fused.forward_multimodal(&inputs).unwrap();
    assert_eq!(bound_encoder(fused.binder().bound_names()), encoder);
    for x in &inputs {
        let tape = Tape::new();
        let uni = model.session(&tape, true);
        uni.forward_unimodal(x).unwrap();
        assert_eq!(bound_encoder(uni.binder().bound_names()), encoder);
    }
}

#[test]
fn zero_input_output_is_reproducible() {
    let cfg = ModelConfig::tiny();
    let mut model = UmurlModel::<f64>::new(cfg.clone(), 6).unwrap();
    zero_biases(&mut model);
    let blank = SkeletonSequence::new(6, 3, 4, vec![0.0; 72], None).unwrap();
    let zero = ModalityTokens::from_sequences(Modality::Bone, &[&blank, &blank]).unwrap();
    let run = || {
        let tape = Tape::new();
        let (y, z) = model.session(&tape, true).forward_unimodal(&zero).unwrap();
        (y.value(), z.value())
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!((a.0.shape(), a.1.shape()), (&[2usize, 16][..], &[2usize, 16][..]));
}

#[test]
fn projection_heads_share_output_width() {
    let cfg = ModelConfig::tiny();
    let model = UmurlModel::<f64>::new(cfg, 0).unwrap();
    let tape = Tape::new();
    let s = model.session(&tape, true);
    let mut r = RngStream::new(1);
    let y = Tensor::from_fn(&[4, 16], |_| r.normal());
    let mut dup = y.clone();
    dup.data_mut().copy_within(0..16, 16);
    let y = tape.constant(dup).unwrap();
    for head in [Head::Unified, Head::Modality(Modality::Joint), Head::Modality(Modality::Bone)] {
        let z = s.project(y, head).unwrap().value();
        assert_eq!(z.shape(), &[4, 16]);
        assert_eq!(z.row(0), z.row(1));
    }
}

#[test]
fn embedder_and_attention_gradients() {
    let cfg = ModelConfig::tiny();
    let model = UmurlModel::<f64>::new(cfg.clone(), 3).unwrap();
    let mut r = RngStream::new(4);
    let tokens = Tensor::from_fn(&[2, 6, 12], |_| r.normal());
    let names = ["embed.temporal.joint.fc1.weight", "embed.temporal.joint.fc2.weight"];
    let inputs: Vec<_> = names.iter().map(|n| model.params().get(n).unwrap().clone()).collect();
    let report = grad_check(
        |tape, v| {
            let s = model.session(tape, true);
            for (n, var) in names.iter().zip(v) {
                s.binder().preset(n, *var)?;
            }
            s.embed_modality(&tokens, Modality::Joint, Stream::Temporal)?.square()?.mean()
        },
        &inputs,
        1e-4,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");

    let h = Tensor::from_fn(&[2, 6, 8], |_| r.normal());
    let attn = ["encoder.temporal.layers.0.attn.q.weight", "encoder.temporal.layers.0.attn.k.weight", "encoder.temporal.layers.0.attn.v.weight"];
    let mut inputs: Vec<_> = attn.iter().map(|n| model.params().get(n).unwrap().clone()).collect();
    inputs.push(h);
    let report = grad_check(
        |tape, v| {
            let s = model.session(tape, true);
            for (n, var) in attn.iter().zip(v) {
                s.binder().preset(n, *var)?;
            }
            s.encode_stream(v[3], Stream::Temporal)?.square()?.sum()
        },
        &inputs,
        1e-4,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}
