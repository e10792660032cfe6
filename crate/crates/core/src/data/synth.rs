//! Procedural skeleton actions with controllable class cues.
//!
//! A sample is a two-limb figure whose limbs swing sinusoidally around a rest
//! pose while the root drifts. Three cue families can carry the class:
//! the static root offset (seen by the joint view only), the swing
//! frequency/amplitude (motion), and the limb-length pattern (bone).

use std::f64::consts::TAU;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::skeleton::{temporal_resample, KinematicTree, SkeletonSequence};
use crate::error::{Error, Result};
use crate::kernel::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Offsets, dynamics and limb lengths all depend on the class.
    Balanced,
    /// Only the static root offset depends on the class.
    JointBiased,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Scenario::Balanced),
            "biased" | "joint-biased" => Ok(Scenario::JointBiased),
            other => Err(Error::usage(format!(
                "unknown scenario '{other}' (expected balanced or biased)"
            ))),
        }
    }
}

/// Generator constants. Lengths are in skeleton units (rest bone length 0.5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub offset_radius: f64,
    pub offset_jitter: f64,
    pub base_frequency: f64,
    pub frequency_step: f64,
    pub base_amplitude: f64,
    pub amplitude_step: f64,
    pub length_modulation: f64,
    pub drift_sigma: f64,
    pub coordinate_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            offset_radius: 0.6,
            offset_jitter: 0.15,
            base_frequency: 1.0,
            frequency_step: 0.5,
            base_amplitude: 0.35,
            amplitude_step: 0.12,
            length_modulation: 0.35,
            drift_sigma: 0.1,
            coordinate_noise: 0.01,
        }
    }
}

struct Cues {
    offset: [f64; 3],
    frequency: f64,
    amplitude: f64,
    lengths: [f64; 2],
}

fn class_cues(p: &SynthParams, class: usize, classes: usize) -> Cues {
    let angle = TAU * class as f64 / classes as f64;
    Cues {
        offset: [p.offset_radius * angle.cos(), 0.0, p.offset_radius * angle.sin()],
        frequency: p.base_frequency + p.frequency_step * (class % 3) as f64,
        amplitude: p.base_amplitude + p.amplitude_step * ((class / 3) % 2) as f64,
        lengths: [
            1.0 + p.length_modulation * (angle + 0.5).cos(),
            1.0 + p.length_modulation * (angle + 0.5).sin(),
        ],
    }
}

fn depth(tree: &KinematicTree, mut j: usize) -> usize {
    let mut d = 0;
    while let Some(p) = tree.parent(j) {
        j = p;
        d += 1;
    }
    d
}

fn render(p: &SynthParams, cues: &Cues, frames: usize, tree: &KinematicTree, label: usize, rng: &mut RngStream) -> Result<SkeletonSequence> {
    let joints = tree.joints();
    let raw_frames = frames + rng.below(frames + 1);
    let phase = rng.uniform_in(0.0, TAU);
    let amplitude = cues.amplitude * rng.uniform_in(0.9, 1.1);
    let frequency = cues.frequency * rng.uniform_in(0.95, 1.05);
    let lengths = [
        cues.lengths[0] * (1.0 + 0.03 * rng.normal()),
        cues.lengths[1] * (1.0 + 0.03 * rng.normal()),
    ];
    let offset: Vec<f64> = cues.offset.iter().map(|o| o + p.offset_jitter * rng.normal()).collect();
    let drift: Vec<f64> = (0..3).map(|_| p.drift_sigma * rng.normal()).collect();

    let order = tree.topological_order();
    let depths: Vec<usize> = (0..joints).map(|j| depth(tree, j)).collect();
    let mut values = vec![0.0f32; raw_frames * 3 * joints];
    let mut pos = vec![[0.0f64; 3]; joints];
    for t in 0..raw_frames {
        let s = t as f64 / (raw_frames - 1) as f64;
        for &j in &order {
            match tree.parent(j) {
                None => {
                    for c in 0..3 {
                        pos[j][c] = offset[c] + drift[c] * (s - 0.5);
                    }
                }
                Some(parent) => {
                    let side = if j % 2 == 1 { 1.0 } else { -1.0 };
                    let limb = j % 2;
                    let d = depths[j] as f64;
                    let rest = -0.35 - 0.2 * d;
                    let swing = amplitude * (TAU * frequency * s + phase + 0.6 * d).sin();
                    let theta = rest + side * swing;
                    let len = 0.5 * lengths[limb] / (1.0 + 0.25 * (d - 1.0));
                    let dir = [side * theta.cos(), theta.sin(), 0.3 * swing.sin()];
                    for c in 0..3 {
                        pos[j][c] = pos[parent][c] + len * dir[c];
                    }
                }
            }
        }
        for (v, pj) in pos.iter().enumerate() {
            for c in 0..3 {
                let noise = p.coordinate_noise * rng.normal();
                values[(t * 3 + c) * joints + v] = (pj[c] + noise) as f32;
            }
        }
    }
    let raw = SkeletonSequence::new(raw_frames, 3, joints, values, Some(label))?;
    temporal_resample(&raw, frames)
}

/// Generates `classes * per_class` labeled sequences with the default constants.
pub fn generate_synthetic(
    scenario: Scenario,
    classes: usize,
    per_class: usize,
    frames: usize,
    joints: usize,
    seed: u64,
) -> Result<Dataset> {
    generate_with(&SynthParams::default(), scenario, classes, per_class, frames, joints, seed)
}

pub fn generate_with(
    params: &SynthParams,
    scenario: Scenario,
    classes: usize,
    per_class: usize,
    frames: usize,
    joints: usize,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || per_class == 0 {
        return Err(Error::usage("classes and samples per class must be at least 1"));
    }
    if frames < 2 || joints < 1 {
        return Err(Error::usage("synthetic data needs T >= 2 and V >= 1"));
    }
    let tree = KinematicTree::two_limb(joints);
    let mut samples = Vec::with_capacity(classes * per_class);
    // class-interleaved order so the stratified split is balanced at every prefix
    for i in 0..per_class {
        for class in 0..classes {
            let index = (i * classes + class) as u64;
            let mut rng = RngStream::derive(seed, &[0x5157, index]);
            let cues = match scenario {
                Scenario::Balanced => class_cues(params, class, classes),
                Scenario::JointBiased => {
                    // dynamics and lengths come from a random class, so they carry no label signal
                    let dyn_class = rng.below(classes);
                    let len_class = rng.below(classes);
                    let a = class_cues(params, dyn_class, classes);
                    let b = class_cues(params, len_class, classes);
                    let own = class_cues(params, class, classes);
                    Cues {
                        offset: own.offset,
                        frequency: a.frequency,
                        amplitude: a.amplitude,
                        lengths: b.lengths,
                    }
                }
            };
            samples.push(render(params, &cues, frames, &tree, class, &mut rng)?);
        }
    }
    Dataset::new(frames, 3, joints, classes, tree, samples)
}
