use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Float, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers and step counter for Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: IndexMap<String, Tensor<F>>,
    pub second: IndexMap<String, Tensor<F>>,
}

impl<F: Float> AdamState<F> {
    pub fn new(params: &ParamStore<F>, config: AdamConfig) -> Self {
        let zeros: IndexMap<String, Tensor<F>> = params
            .iter()
            .map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape())))
            .collect();
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}

/// One Adam update of every parameter in `params`.
///
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
pub fn adam_step<F: Float>(
    params: &mut ParamStore<F>,
    grads: &IndexMap<String, Tensor<F>>,
    state: &mut AdamState<F>,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::contract(format!("missing gradient for {name}")))?;
        let m = state
            .first
            .get(name)
            .ok_or_else(|| Error::contract(format!("missing optimizer state for {name}")))?;
        if g.shape() != p.shape() || m.shape() != p.shape() || state.second[name].shape() != p.shape() {
            return Err(Error::contract(format!(
                "adam: shape mismatch for {name}: param {:?}, grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = F::of(1.0 - c.beta1.powi(t));
    let bc2 = F::of(1.0 - c.beta2.powi(t));
    let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
    let (lr, wd, eps) = (F::of(c.lr), F::of(c.weight_decay), F::of(c.eps));
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let g = grads[&name].data();
        let m = state.first.get_mut(&name).unwrap().data_mut();
        let v = state.second.get_mut(&name).unwrap().data_mut();
        let p = params.get_mut(&name)?.data_mut();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (F::one() - b1) * g[i];
            v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            p[i] = p[i] - lr * wd * p[i] - lr * mh / (vh.sqrt() + eps);
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("adam produced non-finite {name}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(&[values.len()], values.to_vec()).unwrap())
            .unwrap();
        s
    }

    fn grads(values: &[f64]) -> IndexMap<String, Tensor<f64>> {
        let mut g = IndexMap::new();
        g.insert("w".to_string(), Tensor::new(&[values.len()], values.to_vec()).unwrap());
        g
    }

    #[test]
    fn zero_grad_without_decay_is_fixed_point() {
        let mut p = store(&[1.0, -2.0]);
        let mut st = AdamState::new(&p, AdamConfig { weight_decay: 0.0, ..Default::default() });
        adam_step(&mut p, &grads(&[0.0, 0.0]), &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = store(&[0.0, 0.0, 0.0]);
        let cfg = AdamConfig { lr: 1e-3, weight_decay: 0.0, ..Default::default() };
        let mut st = AdamState::new(&p, cfg);
        adam_step(&mut p, &grads(&[3.0, -0.5, 1e-2]), &mut st).unwrap();
        // after bias correction m_hat = g, v_hat = g^2: update = lr * g / (|g| + eps)
        let got = p.get("w").unwrap().data();
        for (x, g) in got.iter().zip([3.0f64, -0.5, 1e-2]) {
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-12, "{x} vs {expected}");
        }
    }

    #[test]
    fn decay_only_scales_parameters() {
        let mut p = store(&[2.0]);
        let mut st = AdamState::new(&p, AdamConfig { lr: 5e-4, weight_decay: 1e-5, ..Default::default() });
        adam_step(&mut p, &grads(&[0.0]), &mut st).unwrap();
        let expected = 2.0 * (1.0 - 5e-4 * 1e-5);
        assert!((p.get("w").unwrap().data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut p = store(&[1.0, 2.0]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &grads(&[1.0]), &mut st).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn step_is_deterministic_and_counts() {
        let run = || {
            let mut p = store(&[0.3, -0.7]);
            let mut st = AdamState::new(&p, AdamConfig::default());
            for i in 0..5 {
                adam_step(&mut p, &grads(&[0.1 * i as f64, -0.2]), &mut st).unwrap();
            }
            (p, st.step)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!((sa, sb), (5, 5));
    }
}
