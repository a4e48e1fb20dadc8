//! Seeded inputs shared by the benchmarks.

use globhand::camera::CameraIntrinsics;
use globhand::heatmap::Heatmap;
use globhand::synth::{perturb, sample_frame, NoiseModel, SynthParams};
use globhand::{CanonicalPose, HandPose3D, Pose2D};

/// One hand with its exact 2D keypoints and canonical pose.
pub struct Case {
    pub gt: HandPose3D,
    pub p: Pose2D,
    pub can: CanonicalPose,
}

/// `n` present hands from the default generator.
pub fn cases(n: usize, seed: u64) -> Vec<Case> {
    let params = SynthParams {
        seed,
        drop_rate: 0.0,
        ..SynthParams::default()
    };
    let noise = NoiseModel {
        sigma_2d: 0.0,
        sigma_can: 0.0,
        seed,
    };
    let cam = CameraIntrinsics::default();
    (0u64..)
        .flat_map(|i| {
            let f = sample_frame(&params, i).expect("default params are valid");
            [f.left, f.right]
        })
        .flatten()
        .take(n)
        .enumerate()
        .map(|(i, gt)| {
            let (p, can) = perturb(&gt, &cam, &noise, &mut noise.rng(i as u64)).expect("exact projection");
            Case { gt, p, can }
        })
        .collect()
}

/// Smooth blob plus a deterministic ripple, `rows x cols`.
pub fn energy_map(rows: usize, cols: usize) -> Heatmap {
    let values = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            let d2 = (r - rows as f64 * 0.4).powi(2) + (c - cols as f64 * 0.6).powi(2);
            (-d2 / (0.02 * (rows * cols) as f64)).exp() + 0.05 * ((r * 0.7).sin() * (c * 1.3).cos()).abs()
        })
        .collect();
    Heatmap::from_values(rows, cols, values).expect("finite values")
}
