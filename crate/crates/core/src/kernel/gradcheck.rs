use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so gradients near zero are
/// compared on an absolute scale instead of amplifying finite-difference noise.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max relative error per input tensor.
    pub per_input: Vec<f64>,
    /// Elements compared.
    pub checked: usize,
    /// Elements whose finite-difference stencil crossed a rectifier kink.
    pub skipped_at_kinks: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn evaluate<B>(build: &B, inputs: &[Tensor<f64>]) -> Result<(f64, u64)>
where
    B: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&tape, &vars)?;
    let v = out.item()?;
    if !v.is_finite() {
        return Err(Error::numeric("loss is non-finite at a perturbed point"));
    }
    Ok((v, tape.activation_pattern()))
}

/// Compares reverse-mode gradients of `build` against central finite differences.
///
/// `build` must produce a scalar. Elements where `f(x + h)` or `f(x - h)` takes a
/// different rectifier branch than `f(x)` are skipped and counted.
pub fn grad_check<B>(build: B, inputs: &[Tensor<f64>], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    B: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let root = build(&tape, &vars)?;
    let base_pattern = tape.activation_pattern();
    let grads = tape.backward(root)?;

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut checked = 0;
    let mut skipped = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*var)
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let mut worst: f64 = 0.0;
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + step;
            let (fp, pp) = evaluate(&build, &work)?;
            work[i].data_mut()[j] = x0 - step;
            let (fm, pm) = evaluate(&build, &work)?;
            work[i].data_mut()[j] = x0;
            if pp != base_pattern || pm != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * step);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
            checked += 1;
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        per_input,
        checked,
        skipped_at_kinks: skipped,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let x = Tensor::new(&[3], vec![0.5, -1.5, 2.0]).unwrap();
        let report = grad_check(|_, v| v[0].square()?.sum(), &[x], 1e-4, 1e-6).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn kink_crossings_are_skipped() {
        // relu at exactly zero: analytic subgradient 0, stencil straddles the kink
        let x = Tensor::new(&[1], vec![0.0]).unwrap();
        let report = grad_check(|_, v| v[0].relu()?.sum(), &[x], 1e-4, 1e-6).unwrap();
        assert_eq!(report.skipped_at_kinks, 1);
    }
}
