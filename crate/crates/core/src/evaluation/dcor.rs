use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// Pairwise Euclidean distances, double-centred in place.
fn centred_distances(x: &Tensor<f64>) -> Vec<f64> {
    let (n, p) = x.rows_cols();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&x.data()[i * p..(i + 1) * p], &x.data()[j * p..(j + 1) * p]);
            let v = a.iter().zip(b).map(|(u, w)| (u - w) * (u - w)).sum::<f64>().sqrt();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    // symmetric, so row means double as column means
    let means: Vec<f64> = d.chunks_exact(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - means[i] - means[j];
        }
    }
    d
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Biased (V-statistic) distance correlation between paired rows of `x` `[N, p]` and `y` `[N, q]`.
pub fn distance_correlation(x: &Tensor<f64>, y: &Tensor<f64>) -> Result<f64> {
    if x.rank() != 2 || y.rank() != 2 || x.shape()[0] != y.shape()[0] {
        return Err(Error::contract(format!("dCor: row mismatch {:?} vs {:?}", x.shape(), y.shape())));
    }
    if x.shape()[0] < 2 {
        return Err(Error::contract("dCor needs at least two samples"));
    }
    if !x.all_finite() || !y.all_finite() {
        return Err(Error::numeric("dCor input is not finite"));
    }
    let (a, b) = (centred_distances(x), centred_distances(y));
    let vx = mean_product(&a, &a);
    let vy = mean_product(&b, &b);
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    let cov = mean_product(&a, &b).max(0.0);
    Ok((cov.sqrt() / (vx * vy).sqrt().sqrt()).min(1.0))
}
