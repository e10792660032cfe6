//! Consistency and variance/covariance objectives on projected batches `[N, D]`.

use serde::{Deserialize, Serialize};

use crate::data::Modality;
use crate::error::{Error, Result};
use crate::kernel::{Float, Tensor, Var};

/// Where the stability constant enters the variance hinge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsPlacement {
    /// `max(0, γ − sqrt(Var + ε))`
    #[default]
    InsideSqrt,
    /// `max(0, γ − sqrt(Var) + ε)`; the gradient is unbounded at zero variance.
    OutsideSqrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub gamma: f64,
    pub eps: f64,
    /// Weight of the variance term inside the VC loss.
    pub mu: f64,
    /// Weight of the covariance term inside the VC loss.
    pub nu: f64,
    /// Consistency weight.
    pub lambda: f64,
    /// Overrides `lambda` for the two-view baseline objective.
    pub baseline_lambda: Option<f64>,
    pub eps_placement: EpsPlacement,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 1.0,
            eps: 1e-4,
            mu: 5.0,
            nu: 1.0,
            lambda: 5.0,
            baseline_lambda: None,
            eps_placement: EpsPlacement::InsideSqrt,
        }
    }
}

impl LossConfig {
    /// VC regularisation switched off: both term weights zero.
    pub fn without_vc(self) -> Self {
        LossConfig { mu: 0.0, nu: 0.0, ..self }
    }

    pub fn vc_enabled(&self) -> bool {
        self.mu != 0.0 || self.nu != 0.0
    }

    pub fn effective_baseline_lambda(&self) -> f64 {
        self.baseline_lambda.unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.eps, self.mu, self.nu, self.lambda, self.effective_baseline_lambda()]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::usage("loss weights must be finite"));
        }
        if self.gamma <= 0.0 || self.eps <= 0.0 {
            return Err(Error::usage("gamma and eps must be positive"));
        }
        if self.mu < 0.0 || self.nu < 0.0 || self.lambda < 0.0 || self.effective_baseline_lambda() < 0.0 {
            return Err(Error::usage("mu, nu and lambda must be non-negative"));
        }
        Ok(())
    }
}

fn batch_dims<F: Float>(z: Var<'_, F>, what: &str) -> Result<(usize, usize)> {
    match z.shape()[..] {
        [n, d] => Ok((n, d)),
        ref s => Err(Error::contract(format!("{what} expects an [N, D] batch, got {s:?}"))),
    }
}

fn statistics_dims<F: Float>(z: Var<'_, F>, what: &str) -> Result<(usize, usize)> {
    let (n, d) = batch_dims(z, what)?;
    if n < 2 {
        return Err(Error::contract(format!("{what} needs at least 2 rows, got {n}")));
    }
    Ok((n, d))
}

fn centered<'t, F: Float>(z: Var<'t, F>) -> Result<Var<'t, F>> {
    z.add_bcast(z.mean_axis(0)?.neg()?)
}

/// `(1/N) Σ_i ‖z_i − z'_i‖²`.
pub fn mse_consistency<'t, F: Float>(z: Var<'t, F>, z2: Var<'t, F>) -> Result<Var<'t, F>> {
    let (n, _) = batch_dims(z, "mse_consistency")?;
    if z.shape() != z2.shape() {
        return Err(Error::contract(format!(
            "mse_consistency shapes differ: {:?} vs {:?}",
            z.shape(),
            z2.shape()
        )));
    }
    z.sub(z2)?.square()?.sum()?.scale(1.0 / n as f64)
}

/// Mean over columns of the hinge on the unbiased column standard deviation.
pub fn variance_term<'t, F: Float>(
    z: Var<'t, F>,
    gamma: f64,
    eps: f64,
    placement: EpsPlacement,
) -> Result<Var<'t, F>> {
    let (n, _) = statistics_dims(z, "variance_term")?;
    let var = centered(z)?.square()?.mean_axis(0)?.scale(n as f64 / (n - 1) as f64)?;
    let std = match placement {
        EpsPlacement::InsideSqrt => var.add_scalar(eps)?.sqrt()?,
        EpsPlacement::OutsideSqrt => var.sqrt()?.add_scalar(-eps)?,
    };
    std.neg()?.add_scalar(gamma)?.relu()?.mean()
}

/// `(1/D) Σ_{i≠j} Cov(Z)_{ij}²` with the unbiased covariance.
pub fn covariance_term<'t, F: Float>(z: Var<'t, F>) -> Result<Var<'t, F>> {
    let (n, d) = statistics_dims(z, "covariance_term")?;
    let c = centered(z)?.reshape(&[1, n, d])?;
    let cov = c.bmm(c, true, false)?.scale(1.0 / (n - 1) as f64)?;
    let mask = Tensor::from_fn(&[1, d, d], |i| if i / d == i % d { F::zero() } else { F::one() });
    let mask = z.tape().constant(mask)?;
    cov.mul(mask)?.square()?.sum()?.scale(1.0 / d as f64)
}

pub fn vc_loss<'t, F: Float>(z: Var<'t, F>, cfg: &LossConfig) -> Result<Var<'t, F>> {
    statistics_dims(z, "vc_loss")?;
    let v = variance_term(z, cfg.gamma, cfg.eps, cfg.eps_placement)?.scale(cfg.mu)?;
    let c = covariance_term(z)?.scale(cfg.nu)?;
    v.add(c)
}

/// Two-view objective: `λ·MSE(Z, Z') + VC(Z) + VC(Z')`.
pub fn baseline_loss<'t, F: Float>(z: Var<'t, F>, z2: Var<'t, F>, cfg: &LossConfig) -> Result<Var<'t, F>> {
    let mse = mse_consistency(z, z2)?.scale(cfg.effective_baseline_lambda())?;
    mse.add(vc_loss(z, cfg)?)?.add(vc_loss(z2, cfg)?)
}

fn check_sets<F: Float>(a: &[(Modality, Var<'_, F>)], b: &[(Modality, Var<'_, F>)], what: &str) -> Result<()> {
    let ma: Vec<_> = a.iter().map(|(m, _)| *m).collect();
    let mb: Vec<_> = b.iter().map(|(m, _)| *m).collect();
    if ma != mb || ma.is_empty() {
        return Err(Error::contract(format!("{what}: modality sets differ ({ma:?} vs {mb:?})")));
    }
    Ok(())
}

fn total<'t, F: Float>(terms: Vec<Var<'t, F>>) -> Result<Var<'t, F>> {
    let mut it = terms.into_iter();
    let first = it.next().ok_or_else(|| Error::contract("empty loss sum"))?;
    it.try_fold(first, |acc, t| acc.add(t))
}

/// `Σ_m MSE(Z^{u,m}, Z^m)`.
pub fn intra_loss<'t, F: Float>(
    decomposed: &[(Modality, Var<'t, F>)],
    unimodal: &[(Modality, Var<'t, F>)],
) -> Result<Var<'t, F>> {
    check_sets(decomposed, unimodal, "intra_loss")?;
    let terms = decomposed
        .iter()
        .zip(unimodal)
        .map(|((_, a), (_, b))| mse_consistency(*a, *b))
        .collect::<Result<Vec<_>>>()?;
    total(terms)
}

/// `Σ_{i≠j} MSE(Z^i, Z^j)` over ordered pairs.
pub fn inter_loss<'t, F: Float>(unimodal: &[(Modality, Var<'t, F>)]) -> Result<Var<'t, F>> {
    if unimodal.len() < 2 {
        return Err(Error::contract("inter_loss needs at least two modalities"));
    }
    let mut terms = Vec::new();
    for (i, (_, a)) in unimodal.iter().enumerate() {
        for (j, (_, b)) in unimodal.iter().enumerate() {
            if i != j {
                terms.push(mse_consistency(*a, *b)?);
            }
        }
    }
    total(terms)
}

/// `Σ_m VC(Z^m) + VC(Z^{u,m})`.
pub fn reg_loss<'t, F: Float>(
    unimodal: &[(Modality, Var<'t, F>)],
    decomposed: &[(Modality, Var<'t, F>)],
    cfg: &LossConfig,
) -> Result<Var<'t, F>> {
    check_sets(unimodal, decomposed, "reg_loss")?;
    let mut terms = Vec::new();
    for ((_, a), (_, b)) in unimodal.iter().zip(decomposed) {
        terms.push(vc_loss(*a, cfg)?);
        terms.push(vc_loss(*b, cfg)?);
    }
    total(terms)
}

/// `λ·(intra + inter) + reg`.
pub fn umurl_loss<'t, F: Float>(
    intra: Var<'t, F>,
    inter: Var<'t, F>,
    reg: Var<'t, F>,
    cfg: &LossConfig,
) -> Result<Var<'t, F>> {
    for (name, v) in [("intra", intra), ("inter", inter), ("reg", reg)] {
        if !v.item()?.is_finite() {
            return Err(Error::numeric(format!("{name} component is not finite")));
        }
    }
    intra.add(inter)?.scale(cfg.lambda)?.add(reg)
}
