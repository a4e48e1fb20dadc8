use proptest::prelude::*;

use globhand::camera::{cart_to_spherical, spherical_to_cart};
use globhand::recon::{select_key_bone, MIN_KEY_BONE_PX};
use globhand::synth::{perturb, sample_frame, sample_sequence, NoiseModel, SynthParams};
use globhand::{
    canonicalize, reconstruct_global, spherical_align, validate_pose, CameraIntrinsics, HandPose3D, JointId,
    Rotation3, Skeleton, Vec3,
};

fn params(seed: u64) -> SynthParams {
    SynthParams {
        seed,
        drop_rate: 0.0,
        ..SynthParams::default()
    }
}

fn hand(seed: u64, index: u64) -> HandPose3D {
    sample_frame(&params(seed), index).unwrap().right.unwrap()
}

fn max_gap(a: &HandPose3D, b: &HandPose3D) -> f64 {
    a.joints.iter().zip(&b.joints).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bone_lengths_survive_rigid_motion(
        seed in 0u64..1000, axis in prop::array::uniform3(-1.0f64..1.0), angle in -3.0f64..3.0,
        shift in prop::array::uniform3(-20.0f64..20.0),
    ) {
        let pose = hand(seed, 0);
        let sk = Skeleton::default();
        let axis = Vec3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let moved = pose.map(|j| r * j + Vec3::from(shift));
        let (a, b) = (sk.bone_lengths_raw(&pose.joints), sk.bone_lengths_raw(&moved.joints));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn canonicalize_then_align_is_identity(seed in 0u64..1000, index in 0u64..50) {
        let cam = CameraIntrinsics::default();
        let pose = hand(seed, index);
        let res = canonicalize(&pose, &cam).unwrap();
        let back = spherical_align(&res.canonical, res.d, &pose.root(), &cam).unwrap();
        prop_assert!(max_gap(&back, &pose) < 1e-9);
        prop_assert!((res.canonical.joint(JointId::WRIST).norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(res.canonical.joint(JointId::MIDDLE_MCP), Vec3::zeros());
    }

    #[test]
    fn reconstruction_is_homogeneous_in_length(seed in 0u64..1000, lambda in 0.2f64..5.0) {
        let cam = CameraIntrinsics::default();
        let (p, can) = perturb(
            &hand(seed, 1),
            &cam,
            &NoiseModel { sigma_2d: 0.0, sigma_can: 0.0, seed: 0 },
            &mut globhand::synth::stream_rng(0, 0),
        ).unwrap();
        let a = reconstruct_global(&can, &p, &cam, 10.0).unwrap().pose;
        let b = reconstruct_global(&can, &p, &cam, 10.0 * lambda).unwrap().pose;
        prop_assert!(max_gap(&a.map(|j| j * lambda), &b) < 1e-9 * lambda.max(1.0));
    }

    #[test]
    fn key_bone_is_the_longer_projection(seed in 0u64..1000, index in 0u64..20) {
        let cam = CameraIntrinsics::default();
        let pose = hand(seed, index);
        let (p, _) = perturb(
            &pose,
            &cam,
            &NoiseModel { sigma_2d: 0.0, sigma_can: 0.0, seed: 0 },
            &mut globhand::synth::stream_rng(0, 0),
        ).unwrap();
        let px = |j: JointId| {
            let (a, b) = (cam.to_pixels(p.joint(j)), cam.to_pixels(p.joint(JointId::MIDDLE_MCP)));
            (a.0 - b.0).hypot(a.1 - b.1)
        };
        let choice = select_key_bone(&p, &cam).unwrap();
        prop_assert!(choice.h2d_px >= MIN_KEY_BONE_PX);
        prop_assert!(choice.h2d_px >= px(JointId::WRIST) && choice.h2d_px >= px(JointId::PINKY_MCP));
    }

    #[test]
    fn synthetic_poses_are_valid(seed in any::<u64>(), index in 0u64..1000) {
        let p = SynthParams { seed, ..SynthParams::default() };
        let frame = sample_frame(&p, index).unwrap();
        for pose in [frame.left, frame.right].into_iter().flatten() {
            prop_assert!(validate_pose(&pose).is_valid());
            prop_assert!((pose.key_bone_length() - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spherical_round_trip(x in -50.0f64..50.0, y in -50.0f64..50.0, z in 1.0f64..150.0) {
        let w = Vec3::new(x, y, z);
        let back = spherical_to_cart(&cart_to_spherical(&w).unwrap()).unwrap();
        prop_assert!((back - w).norm() < 1e-9 * w.norm());
    }
}

#[test]
fn sequences_reconstruct_exactly() {
    let cam = CameraIntrinsics::default();
    let noise = NoiseModel { sigma_2d: 0.0, sigma_can: 0.0, seed: 3 };
    for (f, frame) in sample_sequence(&params(77), 120, 0).unwrap().iter().enumerate() {
        for pose in [&frame.left, &frame.right].into_iter().flatten() {
            let (p, can) = perturb(pose, &cam, &noise, &mut noise.rng(f as u64)).unwrap();
            let rec = reconstruct_global(&can, &p, &cam, 10.0).unwrap();
            assert!(max_gap(&rec.pose, pose) < 1e-6, "frame {f}");
        }
    }
}
