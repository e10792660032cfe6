use super::skeleton::{KinematicTree, SkeletonSequence};
use crate::error::{Error, Result};

/// Fraction of each class assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Labeled sequences sharing one geometry and kinematic tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub frames: usize,
    pub channels: usize,
    pub joints: usize,
    pub num_classes: usize,
    pub tree: KinematicTree,
    pub samples: Vec<SkeletonSequence>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
    All,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "test" => Ok(SplitKind::Test),
            "all" => Ok(SplitKind::All),
            other => Err(Error::usage(format!("unknown split '{other}'"))),
        }
    }
}

impl Dataset {
    pub fn new(
        frames: usize,
        channels: usize,
        joints: usize,
        num_classes: usize,
        tree: KinematicTree,
        samples: Vec<SkeletonSequence>,
    ) -> Result<Self> {
        if tree.joints() != joints {
            return Err(Error::contract(format!(
                "tree has {} joints, dataset declares {joints}",
                tree.joints()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if (s.frames, s.channels, s.joints) != (frames, channels, joints) {
                return Err(Error::contract(format!("sample {i} has a different shape")));
            }
            match s.label {
                Some(l) if l < num_classes => {}
                other => {
                    return Err(Error::contract(format!(
                        "sample {i} label {other:?} invalid for {num_classes} classes"
                    )))
                }
            }
        }
        Ok(Dataset {
            frames,
            channels,
            joints,
            num_classes,
            tree,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label.unwrap_or(0)).collect()
    }

    /// Stratified split: within each class, in file order, the first
    /// `max(1, round(0.8 * n_c))` samples train and the rest test.
    pub fn split_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            per_class[s.label.unwrap_or(0)].push(i);
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for members in per_class {
            let n = members.len();
            let k = ((TRAIN_FRACTION * n as f64).round() as usize).clamp(1.min(n), n);
            train.extend_from_slice(&members[..k]);
            test.extend_from_slice(&members[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }

    pub fn indices(&self, kind: SplitKind) -> Vec<usize> {
        match kind {
            SplitKind::All => (0..self.len()).collect(),
            SplitKind::Train => self.split_indices().0,
            SplitKind::Test => self.split_indices().1,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            frames: self.frames,
            channels: self.channels,
            joints: self.joints,
            num_classes: self.num_classes,
            tree: self.tree.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn split(&self, kind: SplitKind) -> Dataset {
        self.subset(&self.indices(kind))
    }
}
