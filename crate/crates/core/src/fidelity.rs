//! Gradient-fidelity suite: every loss term and the tiny model's full objectives
//! against central finite differences in f64.

use crate::data::Modality;
use crate::error::Result;
use crate::kernel::{grad_check, GradCheckReport, RngStream, Tape, Tensor, Var};
use crate::losses::{
    baseline_loss, covariance_term, inter_loss, intra_loss, mse_consistency, reg_loss, umurl_loss, variance_term,
    vc_loss, EpsPlacement, LossConfig,
};
use crate::model::{ModalityTokens, ModelConfig, UmurlModel};

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const CHECK_BATCH: usize = 8;
pub const CHECK_WIDTH: usize = 16;

#[derive(Clone, Debug)]
pub struct TermCheck {
    pub term: String,
    pub report: GradCheckReport,
}

impl TermCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

type Pairs<'t> = Vec<(Modality, Var<'t, f64>)>;

/// First three inputs are decomposed batches, last three uni-modal.
fn split<'t>(v: &[Var<'t, f64>]) -> (Pairs<'t>, Pairs<'t>) {
    let ms = Modality::ALL;
    (
        (0..3).map(|i| (ms[i], v[i])).collect(),
        (0..3).map(|i| (ms[i], v[3 + i])).collect(),
    )
}

fn batches(count: usize, scale: f64, rng: &mut RngStream) -> Vec<Tensor<f64>> {
    (0..count)
        .map(|_| Tensor::from_fn(&[CHECK_BATCH, CHECK_WIDTH], |_| scale * rng.normal()))
        .collect()
}

fn term_with_step<B>(name: &str, inputs: &[Tensor<f64>], step: f64, build: B) -> Result<TermCheck>
where
    B: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    Ok(TermCheck {
        term: name.to_string(),
        report: grad_check(build, inputs, step, FD_TOLERANCE)?,
    })
}

/// One check per loss term on random `[8, 16]` batches.
pub fn loss_checks(seed: u64) -> Result<Vec<TermCheck>> {
    loss_checks_with_step(seed, FD_STEP)
}

pub fn loss_checks_with_step(seed: u64, step: f64) -> Result<Vec<TermCheck>> {
    let term = |name: &str, inputs: &[Tensor<f64>], build: &dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>| {
        term_with_step(name, inputs, step, build)
    };
    let cfg = LossConfig::default();
    let mut r = RngStream::derive(seed, &[0x4c4f_5353]);
    // variance batches are narrow so every hinge is active and smooth
    let narrow = batches(1, 0.3, &mut r);
    let two = batches(2, 1.0, &mut r);
    let six = batches(6, 1.0, &mut r);
    let mut out = vec![
        term("mse", &two, &|_, v| mse_consistency(v[0], v[1]))?,
        term("variance", &narrow, &|_, v| variance_term(v[0], cfg.gamma, cfg.eps, EpsPlacement::InsideSqrt))?,
        term("variance_eps_outside", &narrow, &|_, v| {
            variance_term(v[0], cfg.gamma, cfg.eps, EpsPlacement::OutsideSqrt)
        })?,
        term("covariance", &two[..1], &|_, v| covariance_term(v[0]))?,
        term("vc", &narrow, &|_, v| vc_loss(v[0], &cfg))?,
        term("baseline", &two, &|_, v| baseline_loss(v[0], v[1], &cfg))?,
    ];
    out.push(term("intra", &six, &|_, v| {
        let (d, u) = split(v);
        intra_loss(&d, &u)
    })?);
    out.push(term("inter", &six, &|_, v| inter_loss(&split(v).1))?);
    out.push(term("reg", &six, &|_, v| {
        let (d, u) = split(v);
        reg_loss(&u, &d, &cfg)
    })?);
    out.push(term("umurl", &six, &|_, v| {
        let (d, u) = split(v);
        umurl_loss(intra_loss(&d, &u)?, inter_loss(&u)?, reg_loss(&u, &d, &cfg)?, &cfg)
    })?);
    Ok(out)
}

fn random_tokens(cfg: &ModelConfig, rng: &mut RngStream) -> Vec<ModalityTokens<f64>> {
    let (t, c, v) = (cfg.frames, cfg.channels, cfg.joints);
    cfg.modalities
        .iter()
        .map(|&m| {
            let temporal = Tensor::from_fn(&[CHECK_BATCH, t, c * v], |_| rng.normal());
            let mut spatial = Tensor::zeros(&[CHECK_BATCH, v, t * c]);
            for n in 0..CHECK_BATCH {
                for tc in 0..t * c {
                    for j in 0..v {
                        spatial.data_mut()[(n * v + j) * t * c + tc] = temporal.data()[(n * t * c + tc) * v + j];
                    }
                }
            }
            ModalityTokens { modality: m, temporal, spatial }
        })
        .collect()
}

/// Full tiny-model objectives, every parameter tensor perturbed.
pub fn model_checks(seed: u64) -> Result<Vec<TermCheck>> {
    model_checks_with_step(seed, FD_STEP)
}

/// As [`model_checks`] with another stencil width, to separate truncation error from wrong gradients.
pub fn model_checks_with_step(seed: u64, step: f64) -> Result<Vec<TermCheck>> {
    let cfg = ModelConfig::tiny();
    let loss = LossConfig::default();
    let model = UmurlModel::<f64>::new(cfg.clone(), seed)?;
    let mut r = RngStream::derive(seed, &[0x4d4f_4445]);
    let views = [random_tokens(&cfg, &mut r), random_tokens(&cfg, &mut r)];
    let names: Vec<String> = model.params().names().map(str::to_string).collect();
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| model.params().get(n).unwrap().clone()).collect();

    let umurl = term_with_step("model_umurl", &inputs, step, |tape, v| {
        let s = model.session(tape, true);
        for (n, var) in names.iter().zip(v) {
            s.binder().preset(n, *var)?;
        }
        let fused = s.forward_multimodal(&views[0])?;
        let uni = views[1]
            .iter()
            .map(|x| Ok((x.modality, s.forward_unimodal(x)?.1)))
            .collect::<Result<Vec<_>>>()?;
        let intra = intra_loss(&fused.decomposed, &uni)?;
        umurl_loss(intra, inter_loss(&uni)?, reg_loss(&uni, &fused.decomposed, &loss)?, &loss)
    })?;
    let baseline = term_with_step("model_baseline", &inputs, step, |tape, v| {
        let s = model.session(tape, true);
        for (n, var) in names.iter().zip(v) {
            s.binder().preset(n, *var)?;
        }
        let a = s.forward_multimodal(&views[0])?.unified;
        let b = s.forward_multimodal(&views[1])?.unified;
        baseline_loss(a, b, &loss)
    })?;
    Ok(vec![umurl, baseline])
}
