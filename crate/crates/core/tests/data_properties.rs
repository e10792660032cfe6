use proptest::prelude::*;
use umurl::data::{
    augment, derive_bone, derive_modalities, derive_motion, temporal_resample, AugmentationPolicy, KinematicTree,
    Modality, Rotation, Shear, SkeletonSequence,
};
use umurl::kernel::RngStream;

fn sequence(frames: usize, joints: usize, seed: u64) -> SkeletonSequence {
    let mut r = RngStream::new(seed);
    let values = (0..frames * 3 * joints).map(|_| r.normal() as f32).collect();
    SkeletonSequence::new(frames, 3, joints, values, Some(0)).unwrap()
}

#[test]
fn bone_reconstruction_from_root_trajectory() {
    let x = sequence(7, 8, 3);
    let tree = KinematicTree::two_limb(8);
    let bone = derive_bone(&x, &tree).unwrap();
    let mut rebuilt = x.zeros_like();
    for t in 0..x.frames {
        for &j in &tree.topological_order() {
            for c in 0..3 {
                let i = x.index(t, c, j);
                rebuilt.values[i] = match tree.parent(j) {
                    None => x.values[i],
                    Some(p) => rebuilt.values[x.index(t, c, p)] + bone.values[i],
                };
            }
        }
    }
    // bones are exact f32 differences; re-adding them recovers the input up to one rounding per hop
    for (a, b) in rebuilt.values.iter().zip(&x.values) {
        assert!((a - b).abs() <= 16.0 * f32::EPSILON * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn bone_entry_matches_direct_call_bitwise() {
    let x = sequence(5, 8, 9);
    let tree = KinematicTree::two_limb(8);
    let bundle = derive_modalities(&x, &tree, &[Modality::Bone, Modality::Joint]).unwrap();
    assert_eq!(bundle.modalities(), vec![Modality::Joint, Modality::Bone]);
    assert_eq!(bundle.get(Modality::Bone).unwrap().values, derive_bone(&x, &tree).unwrap().values);
    assert_eq!(bundle.get(Modality::Joint).unwrap(), &x);
    assert!(derive_modalities(&x, &tree, &[]).is_err());
}

proptest! {
    #[test]
    fn motion_telescopes(frames in 2usize..12, joints in 1usize..6, seed in any::<u64>()) {
        let x = sequence(frames, joints, seed);
        let m = derive_motion(&x).unwrap();
        for c in 0..3 {
            for v in 0..joints {
                let total: f64 = (0..frames - 1).map(|t| m.at(t, c, v) as f64).sum();
                let direct = x.at(frames - 1, c, v) as f64 - x.at(0, c, v) as f64;
                prop_assert!((total - direct).abs() < 1e-5 * frames as f64);
                prop_assert_eq!(m.at(frames - 1, c, v), 0.0);
            }
        }
    }

    #[test]
    fn resample_stays_within_channel_bounds(frames in 2usize..20, target in 2usize..40, seed in any::<u64>()) {
        let x = sequence(frames, 3, seed);
        let y = temporal_resample(&x, target).unwrap();
        prop_assert_eq!(y.frames, target);
        for c in 0..3 {
            for v in 0..3 {
                let col: Vec<f32> = (0..frames).map(|t| x.at(t, c, v)).collect();
                let lo = col.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = col.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                for t in 0..target {
                    let e = y.at(t, c, v);
                    prop_assert!(e >= lo - 1e-6 && e <= hi + 1e-6);
                }
            }
        }
    }

    #[test]
    fn shear_and_rotation_are_linear(scale in -3.0f32..3.0, seed in any::<u64>(), draw in any::<u64>()) {
        let policy = AugmentationPolicy {
            shear: Some(Shear { max: 0.3, prob: 1.0 }),
            rotation: Some(Rotation { max_degrees: 17.0, prob: 1.0 }),
            ..AugmentationPolicy::identity()
        };
        let x = sequence(4, 5, seed);
        let ax = x.with_values(x.values.iter().map(|v| v * scale).collect());
        let a = augment(&ax, &policy, &mut RngStream::new(draw)).unwrap();
        let b = augment(&x, &policy, &mut RngStream::new(draw)).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            prop_assert!((p - scale * q).abs() <= 1e-5 * (1.0 + q.abs() * scale.abs()));
        }
    }

    #[test]
    fn augment_keeps_shape_and_is_seeded(seed in any::<u64>(), draw in any::<u64>()) {
        let x = sequence(9, 8, seed);
        let p = AugmentationPolicy::standard();
        let a = augment(&x, &p, &mut RngStream::new(draw)).unwrap();
        let b = augment(&x, &p, &mut RngStream::new(draw)).unwrap();
        prop_assert_eq!((a.frames, a.channels, a.joints), (9, 3, 8));
        prop_assert_eq!(a.values, b.values);
    }
}
