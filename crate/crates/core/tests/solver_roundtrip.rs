use avsynth::face::RigidPose;
use avsynth::solver::{rigid_icp, track_sequence, IcpOptions, SolverWeights, TrackOptions};
use avsynth::synth::{
    base_pose, gen_basis, gen_pose_track, gen_trajectory, render_depth, SynthConfig,
};
use nalgebra::Vector3;

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn noiseless_synthetic_frames_are_recovered() {
    for seed in [3, 8] {
        let cfg = SynthConfig {
            seed,
            duration: 20.0 / 60.0,
            ..SynthConfig::default()
        };
        let basis = gen_basis(&cfg).unwrap();
        let truth = gen_trajectory(&cfg).unwrap();
        assert_eq!(truth.n_frames(), 20);
        let poses = gen_pose_track(&cfg, truth.n_frames());
        let camera = cfg.camera();
        let frames: Vec<_> = truth
            .frames
            .iter()
            .zip(&poses)
            .map(|(x, p)| render_depth(&basis, x, p, &camera).unwrap())
            .collect();
        let opts = TrackOptions {
            initial_pose: base_pose(),
            ..TrackOptions::default()
        };
        let weights = SolverWeights {
            l1: 0.01,
            ..SolverWeights::default()
        };
        let out = track_sequence(&basis, &frames, &weights, &opts).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert!(out.all_converged());
        for (t, (r, x)) in out.frames.iter().zip(&truth.frames).enumerate() {
            let e = mae(r.x.as_slice(), x);
            assert!(e < 1e-2, "seed {seed} frame {t}: mae {e}");
            for sweep in &r.sweep_objectives {
                assert!(sweep
                    .windows(2)
                    .all(|w| w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0)));
            }
        }
    }
}

#[test]
fn icp_recovers_an_offset_pose() {
    let cfg = SynthConfig::default();
    let basis = gen_basis(&cfg).unwrap();
    let camera = cfg.camera();
    let x = vec![0.3; cfg.n_coeffs];
    let axis = Vector3::new(1.0, -1.0, 0.5).normalize();
    // 2 degrees about the head center and 2 mm sideways from rest
    let truth = RigidPose::from_axis_angle(
        axis * 2f64.to_radians(),
        base_pose().translation + Vector3::new(2.0, 0.0, 0.0),
    );
    let (depth, _) = render_depth(&basis, &x, &truth, &camera).unwrap();
    let opts = IcpOptions {
        max_iters: 50,
        ..IcpOptions::default()
    };
    let out = rigid_icp(&basis, &x, &depth, &base_pose(), &opts).unwrap();
    let rot = out.pose.rotation_distance(&truth).to_degrees();
    let trans = out.pose.translation_distance(&truth);
    assert!(
        rot < 0.1 && trans < 0.1,
        "rotation {rot} deg, translation {trans} mm"
    );
    assert!(out.errors.windows(2).all(|w| w[1] <= w[0]));
}
