//! Random skeleton augmentations: shear, rotation, temporal crop-resize, coordinate
//! noise and joint jitter. Each enabled transform fires independently with its own
//! probability, in that fixed order.

use serde::{Deserialize, Serialize};

use super::skeleton::{resample_values, SkeletonSequence};
use crate::error::{Error, Result};
use crate::kernel::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shear {
    /// Off-diagonal coefficients are drawn from `[-max, max]`.
    pub max: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    /// Angle about each axis drawn from `[-max_degrees, max_degrees]`.
    pub max_degrees: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalCrop {
    /// Kept fraction of the sequence drawn from `[min_fraction, 1]`.
    pub min_fraction: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Probability that a given joint is jittered.
    pub fraction: f64,
    pub sigma: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub shear: Option<Shear>,
    pub rotation: Option<Rotation>,
    pub temporal_crop: Option<TemporalCrop>,
    pub noise: Option<Noise>,
    pub jitter: Option<Jitter>,
}

impl AugmentationPolicy {
    /// No transforms.
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn standard() -> Self {
        AugmentationPolicy {
            shear: Some(Shear { max: 0.3, prob: 1.0 }),
            rotation: Some(Rotation {
                max_degrees: 17.0,
                prob: 1.0,
            }),
            temporal_crop: Some(TemporalCrop {
                min_fraction: 0.5,
                prob: 1.0,
            }),
            noise: Some(Noise { sigma: 0.01, prob: 1.0 }),
            jitter: Some(Jitter {
                fraction: 0.1,
                sigma: 0.05,
                prob: 0.5,
            }),
        }
    }

    pub fn rotation_only(max_degrees: f64) -> Self {
        AugmentationPolicy {
            rotation: Some(Rotation { max_degrees, prob: 1.0 }),
            ..Self::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let mut checks: Vec<(&str, f64, f64)> = Vec::new();
        if let Some(s) = self.shear {
            checks.push(("shear", s.max, s.prob));
        }
        if let Some(r) = self.rotation {
            checks.push(("rotation", r.max_degrees, r.prob));
        }
        if let Some(c) = self.temporal_crop {
            checks.push(("temporal_crop", c.min_fraction, c.prob));
            if !(c.min_fraction > 0.0 && c.min_fraction <= 1.0) {
                return Err(Error::usage("temporal_crop.min_fraction must lie in (0, 1]"));
            }
        }
        if let Some(n) = self.noise {
            checks.push(("noise", n.sigma, n.prob));
        }
        if let Some(j) = self.jitter {
            checks.push(("jitter", j.sigma, j.prob));
            if !(0.0..=1.0).contains(&j.fraction) {
                return Err(Error::usage("jitter.fraction must lie in [0, 1]"));
            }
        }
        for (name, range, prob) in checks {
            if !range.is_finite() || range < 0.0 {
                return Err(Error::usage(format!("{name} range must be finite and non-negative")));
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::usage(format!("{name} probability must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

fn apply_3x3(x: &mut SkeletonSequence, m: &[[f64; 3]; 3]) {
    let v = x.joints;
    for t in 0..x.frames {
        let base = t * 3 * v;
        for j in 0..v {
            let p = [
                x.values[base + j] as f64,
                x.values[base + v + j] as f64,
                x.values[base + 2 * v + j] as f64,
            ];
            for (c, row) in m.iter().enumerate() {
                x.values[base + c * v + j] = (row[0] * p[0] + row[1] * p[1] + row[2] * p[2]) as f32;
            }
        }
    }
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn rotation_matrix(ax: f64, ay: f64, az: f64) -> [[f64; 3]; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

/// Applies `policy` to `x`, drawing every random choice from `rng`.
pub fn augment(x: &SkeletonSequence, policy: &AugmentationPolicy, rng: &mut RngStream) -> Result<SkeletonSequence> {
    policy.validate()?;
    let mut out = x.clone();
    let spatial = policy.shear.is_some() || policy.rotation.is_some();
    if spatial && x.channels != 3 {
        return Err(Error::contract(format!(
            "shear/rotation need 3 channels, sequence has {}",
            x.channels
        )));
    }

    if let Some(s) = policy.shear {
        if rng.bernoulli(s.prob) {
            let mut m = [[1.0; 3]; 3];
            for (i, row) in m.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    if i != j {
                        *e = rng.uniform_in(-s.max, s.max);
                    }
                }
            }
            apply_3x3(&mut out, &m);
        }
    }

    if let Some(r) = policy.rotation {
        if rng.bernoulli(r.prob) {
            let max = r.max_degrees.to_radians();
            let (ax, ay, az) = (
                rng.uniform_in(-max, max),
                rng.uniform_in(-max, max),
                rng.uniform_in(-max, max),
            );
            apply_3x3(&mut out, &rotation_matrix(ax, ay, az));
        }
    }

    if let Some(c) = policy.temporal_crop {
        if rng.bernoulli(c.prob) {
            let frac = rng.uniform_in(c.min_fraction, 1.0);
            let len = ((frac * out.frames as f64).round() as usize).clamp(2, out.frames);
            let start = rng.below(out.frames - len + 1);
            let width = out.channels * out.joints;
            let window = &out.values[start * width..(start + len) * width];
            out.values = resample_values(window, len, width, out.frames);
        }
    }

    if let Some(n) = policy.noise {
        if rng.bernoulli(n.prob) {
            for v in out.values.iter_mut() {
                *v += (n.sigma * rng.normal()) as f32;
            }
        }
    }

    if let Some(j) = policy.jitter {
        if rng.bernoulli(j.prob) {
            let joints = out.joints;
            for v in 0..joints {
                if rng.bernoulli(j.fraction) {
                    for t in 0..out.frames {
                        for c in 0..out.channels {
                            let i = out.index(t, c, v);
                            out.values[i] += (j.sigma * rng.normal()) as f32;
                        }
                    }
                }
            }
        }
    }

    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("augmentation produced non-finite coordinates"));
    }
    Ok(out)
}
