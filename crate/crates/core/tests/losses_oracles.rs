//! Loss values against plain-loop reimplementations, invariances, and gradients.

use proptest::prelude::*;
use umurl::data::Modality;
use umurl::kernel::{grad_check, RngStream, Tape, Tensor, Var};
use umurl::losses::{
    baseline_loss, covariance_term, inter_loss, intra_loss, mse_consistency, reg_loss, umurl_loss, variance_term,
    vc_loss, EpsPlacement, LossConfig,
};

type Rows = Vec<Vec<f64>>;

fn rows(n: usize, d: usize, scale: f64, rng: &mut RngStream) -> Rows {
    (0..n).map(|_| (0..d).map(|_| scale * rng.normal()).collect()).collect()
}

fn tensor(z: &Rows) -> Tensor<f64> {
    Tensor::new(&[z.len(), z[0].len()], z.iter().flatten().copied().collect()).unwrap()
}

fn eval(z: &[&Rows], f: impl for<'t> Fn(&[Var<'t, f64>]) -> umurl::Result<Var<'t, f64>>) -> f64 {
    let tape = Tape::new();
    let vars: Vec<_> = z.iter().map(|r| tape.constant(tensor(r)).unwrap()).collect();
    f(&vars).unwrap().item().unwrap()
}

mod oracle {
    use super::Rows;

    pub fn mse(a: &Rows, b: &Rows) -> f64 {
        let mut s = 0.0;
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                s += (x - y) * (x - y);
            }
        }
        s / a.len() as f64
    }

    fn column_means(z: &Rows) -> Vec<f64> {
        let d = z[0].len();
        (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64).collect()
    }

    pub fn cov(z: &Rows) -> Vec<Vec<f64>> {
        let (n, d) = (z.len(), z[0].len());
        let m = column_means(z);
        let mut c = vec![vec![0.0; d]; d];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = z.iter().map(|r| (r[i] - m[i]) * (r[j] - m[j])).sum::<f64>() / (n - 1) as f64;
            }
        }
        c
    }

    pub fn variance(z: &Rows, gamma: f64, eps: f64) -> f64 {
        let c = cov(z);
        let d = c.len();
        (0..d).map(|j| (gamma - (c[j][j] + eps).sqrt()).max(0.0)).sum::<f64>() / d as f64
    }

    pub fn covariance(z: &Rows) -> f64 {
        let c = cov(z);
        let d = c.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += c[i][j] * c[i][j];
                }
            }
        }
        s / d as f64
    }

    pub fn vc(z: &Rows, mu: f64, gamma: f64, eps: f64) -> f64 {
        mu * variance(z, gamma, eps) + covariance(z)
    }
}

const TOL: f64 = 1e-9;

type Set<'t> = Vec<(Modality, Var<'t, f64>)>;

/// First three vars are decomposed batches, last three uni-modal, truncated to `k` modalities.
fn pair<'t>(v: &[Var<'t, f64>], k: usize) -> (Set<'t>, Set<'t>) {
    let ms = [Modality::Joint, Modality::Motion, Modality::Bone];
    (
        (0..k).map(|i| (ms[i], v[i])).collect(),
        (0..k).map(|i| (ms[i], v[3 + i])).collect(),
    )
}

fn statistic<'t>(which: usize, v: &[Var<'t, f64>]) -> umurl::Result<Var<'t, f64>> {
    if which == 0 {
        variance_term(v[0], 1.0, 1e-4, EpsPlacement::InsideSqrt)
    } else {
        covariance_term(v[0])
    }
}

#[test]
fn terms_match_loop_oracles() {
    let mut r = RngStream::new(17);
    let cfg = LossConfig::default();
    let (a, b) = (rows(8, 16, 0.7, &mut r), rows(8, 16, 0.7, &mut r));
    let mse = eval(&[&a, &b], |v| mse_consistency(v[0], v[1]));
    assert!((mse - oracle::mse(&a, &b)).abs() < TOL);
    let var = eval(&[&a], |v| variance_term(v[0], 1.0, 1e-4, EpsPlacement::InsideSqrt));
    assert!((var - oracle::variance(&a, 1.0, 1e-4)).abs() < TOL);
    let cov = eval(&[&a], |v| covariance_term(v[0]));
    assert!((cov - oracle::covariance(&a)).abs() < TOL);
    let vc = eval(&[&a], |v| vc_loss(v[0], &cfg));
    assert!((vc - oracle::vc(&a, 5.0, 1.0, 1e-4)).abs() < TOL);

    let base = eval(&[&a, &b], |v| baseline_loss(v[0], v[1], &cfg));
    let expected = 5.0 * oracle::mse(&a, &b) + oracle::vc(&a, 5.0, 1.0, 1e-4) + oracle::vc(&b, 5.0, 1.0, 1e-4);
    assert!((base - expected).abs() < TOL);
    let no_lambda = LossConfig { lambda: 0.0, ..cfg };
    let base0 = eval(&[&a, &b], |v| baseline_loss(v[0], v[1], &no_lambda));
    assert!((base0 - oracle::vc(&a, 5.0, 1.0, 1e-4) - oracle::vc(&b, 5.0, 1.0, 1e-4)).abs() < TOL);
}

#[test]
fn modality_sums_match_componentwise_oracles() {
    let mut r = RngStream::new(23);
    let cfg = LossConfig::default();
    let dec: Vec<Rows> = (0..3).map(|_| rows(8, 16, 0.5, &mut r)).collect();
    let uni: Vec<Rows> = (0..3).map(|_| rows(8, 16, 0.5, &mut r)).collect();
    let all: Vec<&Rows> = dec.iter().chain(&uni).collect();
    let intra = eval(&all, |v| {
        let (d, u) = pair(v, 3);
        intra_loss(&d, &u)
    });
    let expected: f64 = (0..3).map(|i| oracle::mse(&dec[i], &uni[i])).sum();
    assert!((intra - expected).abs() < TOL);

    let intra1 = eval(&all, |v| {
        let (d, u) = pair(v, 1);
        intra_loss(&d, &u)
    });
    assert!((intra1 - oracle::mse(&dec[0], &uni[0])).abs() < TOL);

    let inter = eval(&all, |v| inter_loss(&pair(v, 3).1));
    let unordered = oracle::mse(&uni[0], &uni[1]) + oracle::mse(&uni[0], &uni[2]) + oracle::mse(&uni[1], &uni[2]);
    assert!((inter - 2.0 * unordered).abs() < TOL);
    let inter2 = eval(&all, |v| inter_loss(&pair(v, 2).1));
    assert!((inter2 - 2.0 * oracle::mse(&uni[0], &uni[1])).abs() < TOL);

    let reg = eval(&all, |v| {
        let (d, u) = pair(v, 3);
        reg_loss(&u, &d, &cfg)
    });
    let expected: f64 = (0..3)
        .map(|i| oracle::vc(&uni[i], 5.0, 1.0, 1e-4) + oracle::vc(&dec[i], 5.0, 1.0, 1e-4))
        .sum();
    assert!((reg - expected).abs() < TOL);
}

#[test]
fn well_spread_batches_have_no_regularisation_cost() {
    let h: Rows = vec![
        vec![1.0, 1.0, 1.0, 1.0],
        vec![1.0, -1.0, 1.0, -1.0],
        vec![1.0, 1.0, -1.0, -1.0],
        vec![1.0, -1.0, -1.0, 1.0],
    ];
    // Hadamard columns minus the constant one: centered, orthogonal, std 3·sqrt(4/3) > γ
    let z: Rows = h.iter().map(|r| r[1..].iter().map(|v| 3.0 * v).collect()).collect();
    let cfg = LossConfig::default();
    assert!(eval(&[&z], |v| vc_loss(v[0], &cfg)).abs() <= 1e-6);
    assert!(eval(&[&z, &z], |v| baseline_loss(v[0], v[1], &cfg)).abs() <= 1e-6);
    let reg = eval(&[&z, &z], |v| reg_loss(&[(Modality::Joint, v[0])], &[(Modality::Joint, v[1])], &cfg));
    assert!(reg.abs() <= 1e-6);
}

#[test]
fn umurl_total_rejects_non_finite_components() {
    let tape = Tape::<f64>::new();
    let ok = tape.constant(Tensor::scalar(1.0)).unwrap();
    let big = tape.constant(Tensor::scalar(f64::MAX)).unwrap();
    let inf = big.add(big);
    assert!(inf.is_err());
    let cfg = LossConfig { lambda: f64::MAX, ..LossConfig::default() };
    assert!(umurl_loss(big, ok, ok, &cfg).is_err());
}

const STEP: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-4;

fn check(n_inputs: usize, scale: f64, seed: u64, f: impl for<'t> Fn(&[Var<'t, f64>]) -> umurl::Result<Var<'t, f64>>) {
    let mut r = RngStream::new(seed);
    let inputs: Vec<_> = (0..n_inputs).map(|_| tensor(&rows(8, 16, scale, &mut r))).collect();
    let report = grad_check(|_, v| f(v), &inputs, STEP, GRAD_TOL).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn gradients_of_every_term() {
    let cfg = LossConfig::default();
    check(2, 1.0, 1, |v| mse_consistency(v[0], v[1]));
    // std around 0.3 keeps every hinge strictly active
    check(1, 0.3, 2, |v| variance_term(v[0], 1.0, 1e-4, EpsPlacement::InsideSqrt));
    check(1, 0.3, 2, |v| variance_term(v[0], 1.0, 1e-4, EpsPlacement::OutsideSqrt));
    check(1, 1.0, 3, |v| covariance_term(v[0]));
    check(1, 1.0, 4, |v| vc_loss(v[0], &cfg));
    check(2, 1.0, 5, |v| baseline_loss(v[0], v[1], &cfg));
    check(6, 1.0, 6, |v| {
        let (d, u) = pair(v, 3);
        intra_loss(&d, &u)
    });
    check(6, 1.0, 7, |v| inter_loss(&pair(v, 3).1));
    check(6, 1.0, 8, |v| {
        let (d, u) = pair(v, 3);
        reg_loss(&u, &d, &cfg)
    });
    check(6, 1.0, 9, |v| {
        let (d, u) = pair(v, 3);
        umurl_loss(intra_loss(&d, &u)?, inter_loss(&u)?, reg_loss(&u, &d, &cfg)?, &cfg)
    });
}

#[test]
fn small_covariance_batch_gradient() {
    let mut r = RngStream::new(31);
    let z = Tensor::from_fn(&[4, 3], |_| r.normal());
    let report = grad_check(|_, v| covariance_term(v[0]), &[z], STEP, GRAD_TOL).unwrap();
    assert!(report.passed(), "{report:?}");
}

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Rows> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mse_is_symmetric_and_non_negative(a in matrix(5, 4), b in matrix(5, 4)) {
        let ab = eval(&[&a, &b], |v| mse_consistency(v[0], v[1]));
        let ba = eval(&[&a, &b], |v| mse_consistency(v[1], v[0]));
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn statistics_are_translation_invariant(z in matrix(6, 4), shift in prop::collection::vec(-10.0f64..10.0, 4)) {
        let moved: Rows = z.iter().map(|r| r.iter().zip(&shift).map(|(x, s)| x + s).collect()).collect();
        let cfg = LossConfig::default();
        for f in [0, 1] {
            let (a, b) = (eval(&[&z], |v| statistic(f, v)), eval(&[&moved], |v| statistic(f, v)));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            prop_assert!(a >= 0.0);
        }
        prop_assert!(eval(&[&z], |v| vc_loss(v[0], &cfg)) >= 0.0);
    }

    #[test]
    fn row_permutation_invariance(a in matrix(6, 3), b in matrix(6, 3), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..6).collect();
        RngStream::new(seed).shuffle(&mut order);
        let pa: Rows = order.iter().map(|&i| a[i].clone()).collect();
        let pb: Rows = order.iter().map(|&i| b[i].clone()).collect();
        let cfg = LossConfig::default();
        let before = eval(&[&a, &b], |v| baseline_loss(v[0], v[1], &cfg));
        let after = eval(&[&pa, &pb], |v| baseline_loss(v[0], v[1], &cfg));
        prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before.abs()));
    }
}
