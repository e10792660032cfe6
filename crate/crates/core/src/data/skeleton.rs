use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One action sample: `frames x channels x joints` coordinates, frame-major,
/// channel-major, joint-minor.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    pub frames: usize,
    pub channels: usize,
    pub joints: usize,
    pub values: Vec<f32>,
    pub label: Option<usize>,
}

impl SkeletonSequence {
    pub fn new(frames: usize, channels: usize, joints: usize, values: Vec<f32>, label: Option<usize>) -> Result<Self> {
        if frames < 2 || channels < 1 || joints < 1 {
            return Err(Error::contract(format!(
                "sequence needs T >= 2, C >= 1, V >= 1; got ({frames}, {channels}, {joints})"
            )));
        }
        if values.len() != frames * channels * joints {
            return Err(Error::contract(format!(
                "sequence ({frames}, {channels}, {joints}) needs {} values, got {}",
                frames * channels * joints,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("sequence contains non-finite coordinates"));
        }
        Ok(SkeletonSequence {
            frames,
            channels,
            joints,
            values,
            label,
        })
    }

    pub fn zeros_like(&self) -> Self {
        SkeletonSequence {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    #[inline]
    pub fn index(&self, t: usize, c: usize, v: usize) -> usize {
        (t * self.channels + c) * self.joints + v
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize, v: usize) -> f32 {
        self.values[self.index(t, c, v)]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.channels * self.joints;
        &self.values[t * n..(t + 1) * n]
    }

    pub fn with_values(&self, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        SkeletonSequence {
            values,
            ..self.clone()
        }
    }
}

/// Parent of every joint; exactly one root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KinematicTree {
    parents: Vec<Option<usize>>,
}

impl KinematicTree {
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self> {
        let n = parents.len();
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if n == 0 || roots != 1 {
            return Err(Error::contract(format!(
                "kinematic tree needs exactly one root, found {roots} among {n} joints"
            )));
        }
        if let Some(bad) = parents.iter().flatten().find(|&&p| p >= n) {
            return Err(Error::contract(format!("parent index {bad} out of range")));
        }
        // every joint must reach the root within n hops
        for start in 0..n {
            let mut j = start;
            let mut hops = 0;
            while let Some(p) = parents[j] {
                j = p;
                hops += 1;
                if hops > n {
                    return Err(Error::contract(format!("cycle through joint {start}")));
                }
            }
        }
        Ok(KinematicTree { parents })
    }

    /// Two chains hanging off joint 0: odd joints form one limb, even joints the other.
    pub fn two_limb(joints: usize) -> Self {
        let parents = (0..joints)
            .map(|j| match j {
                0 => None,
                1 | 2 => Some(0),
                _ => Some(j - 2),
            })
            .collect();
        KinematicTree { parents }
    }

    pub fn joints(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn root(&self) -> usize {
        self.parents.iter().position(Option::is_none).expect("validated root")
    }

    /// Joints ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.joints();
        let depth = |mut j: usize| {
            let mut d = 0;
            while let Some(p) = self.parents[j] {
                j = p;
                d += 1;
            }
            d
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&j| (depth(j), j));
        order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Joint,
    Motion,
    Bone,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Joint, Modality::Motion, Modality::Bone];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Joint => "joint",
            Modality::Motion => "motion",
            Modality::Bone => "bone",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "joint" | "j" => Ok(Modality::Joint),
            "motion" | "m" => Ok(Modality::Motion),
            "bone" | "b" => Ok(Modality::Bone),
            other => Err(Error::usage(format!("unknown modality '{other}'"))),
        }
    }
}

/// Canonical (joint, motion, bone) order with duplicates removed.
pub fn canonical_modalities(set: &[Modality]) -> Result<Vec<Modality>> {
    if set.is_empty() {
        return Err(Error::contract("modality set is empty"));
    }
    let mut out: Vec<Modality> = set.to_vec();
    out.sort();
    out.dedup();
    Ok(out)
}

/// Parses a comma-separated modality list such as `joint,motion,bone`.
pub fn parse_modalities(s: &str) -> Result<Vec<Modality>> {
    let parsed = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Modality::from_str)
        .collect::<Result<Vec<_>>>()?;
    canonical_modalities(&parsed).map_err(|_| Error::usage("modality list is empty"))
}

/// The per-modality views of one sample, in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityBundle {
    entries: Vec<(Modality, SkeletonSequence)>,
}

impl ModalityBundle {
    pub fn new(entries: Vec<(Modality, SkeletonSequence)>) -> Result<Self> {
        if entries.is_empty() || entries.len() > 3 {
            return Err(Error::contract(format!("bundle needs 1..=3 modalities, got {}", entries.len())));
        }
        let first = &entries[0].1;
        for (m, s) in &entries {
            if (s.frames, s.channels, s.joints) != (first.frames, first.channels, first.joints) {
                return Err(Error::contract(format!("modality {m} shape differs from the others")));
            }
        }
        let mut sorted = entries;
        sorted.sort_by_key(|(m, _)| *m);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::contract("duplicate modality in bundle"));
        }
        Ok(ModalityBundle { entries: sorted })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.entries.iter().map(|(m, _)| *m).collect()
    }

    pub fn get(&self, m: Modality) -> Option<&SkeletonSequence> {
        self.entries.iter().find(|(k, _)| *k == m).map(|(_, s)| s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Modality, &SkeletonSequence)> {
        self.entries.iter().map(|(m, s)| (*m, s))
    }

    pub fn into_entries(self) -> Vec<(Modality, SkeletonSequence)> {
        self.entries
    }
}

/// Frame-to-frame differences; the last frame is zero so every modality keeps `T` frames.
pub fn derive_motion(x: &SkeletonSequence) -> Result<SkeletonSequence> {
    if x.frames < 2 {
        return Err(Error::contract("motion needs at least two frames"));
    }
    let n = x.channels * x.joints;
    let mut out = vec![0.0f32; x.values.len()];
    for t in 0..x.frames - 1 {
        for i in 0..n {
            out[t * n + i] = x.values[(t + 1) * n + i] - x.values[t * n + i];
        }
    }
    Ok(x.with_values(out))
}

/// Joint minus parent for every non-root joint; the root column is zero.
pub fn derive_bone(x: &SkeletonSequence, tree: &KinematicTree) -> Result<SkeletonSequence> {
    if tree.joints() != x.joints {
        return Err(Error::contract(format!(
            "tree has {} joints, sequence has {}",
            tree.joints(),
            x.joints
        )));
    }
    let mut out = vec![0.0f32; x.values.len()];
    for t in 0..x.frames {
        for c in 0..x.channels {
            for v in 0..x.joints {
                if let Some(p) = tree.parent(v) {
                    out[x.index(t, c, v)] = x.at(t, c, v) - x.at(t, c, p);
                }
            }
        }
    }
    Ok(x.with_values(out))
}

/// Builds the requested views of `x`; the joint view is `x` itself.
pub fn derive_modalities(x: &SkeletonSequence, tree: &KinematicTree, set: &[Modality]) -> Result<ModalityBundle> {
    let set = canonical_modalities(set)?;
    let entries = set
        .iter()
        .map(|&m| {
            let view = match m {
                Modality::Joint => x.clone(),
                Modality::Motion => derive_motion(x)?,
                Modality::Bone => derive_bone(x, tree)?,
            };
            Ok((m, view))
        })
        .collect::<Result<Vec<_>>>()?;
    ModalityBundle::new(entries)
}

/// Linear interpolation onto `target` uniformly spaced positions in `[0, T - 1]`.
pub fn temporal_resample(x: &SkeletonSequence, target: usize) -> Result<SkeletonSequence> {
    if target < 2 {
        return Err(Error::contract(format!("resample target {target} < 2")));
    }
    Ok(SkeletonSequence {
        frames: target,
        values: resample_values(&x.values, x.frames, x.channels * x.joints, target),
        ..x.clone()
    })
}

/// Resamples `frames x width` rows onto `target` rows.
pub(crate) fn resample_values(values: &[f32], frames: usize, width: usize, target: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; target * width];
    let span = (frames - 1) as f64;
    for i in 0..target {
        let pos = i as f64 * span / (target - 1) as f64;
        let lo = (pos.floor() as usize).min(frames - 1);
        let hi = (lo + 1).min(frames - 1);
        let w = (pos - lo as f64) as f32;
        let (a, b) = (&values[lo * width..(lo + 1) * width], &values[hi * width..(hi + 1) * width]);
        for j in 0..width {
            out[i * width + j] = if w == 0.0 { a[j] } else { a[j] + w * (b[j] - a[j]) };
        }
    }
    out
}
