use duet_core::data::{synth_generate, Scenario};
use duet_core::metrics::{
    cross_distance_features, fid_features, interpenetration_per_frame, physics_metrics, JointRadii,
};
use duet_core::motion::clip::GlobalPose;
use duet_core::motion::Skeleton;
use duet_core::reward::{deviation_weight, RewardConfig};
use duet_core::Execution;
use nalgebra::Vector3;
use proptest::prelude::*;

fn cloud(seed: u64, n: usize, dim: usize, shift: f64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>() + shift).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fid_is_symmetric_and_zero_on_self(sa in 0u64..1000, sb in 0u64..1000, shift in -2.0f64..2.0) {
        let a = cloud(sa, 60, 5, 0.0);
        let b = cloud(sb, 60, 5, shift);
        let ab = fid_features(&a, &b).unwrap();
        let ba = fid_features(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-8 * ab.max(1.0));
        prop_assert!(ab >= 0.0);
        prop_assert!(fid_features(&a, &a).unwrap().abs() < 1e-8);
    }

    #[test]
    fn cross_distance_ignores_rigid_motion(yaw in -3.1f64..3.1, tx in -5.0f64..5.0, tz in -5.0f64..5.0, seed in 0u64..50) {
        let sk = Skeleton::smpl22();
        let rec = synth_generate(Scenario::Handshake, 200, seed).unwrap();
        let (x, y) = (&rec.reactor.frames[150], &rec.actor.frames[150]);
        let t = Vector3::new(tx, 0.0, tz);
        let a = cross_distance_features(x, y, &sk);
        let b = cross_distance_features(&x.transformed(yaw, &t), &y.transformed(yaw, &t), &sk);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn foot_physics_ignores_horizontal_motion(yaw in -3.1f64..3.1, tx in -5.0f64..5.0, tz in -5.0f64..5.0) {
        let sk = Skeleton::smpl22();
        let clip = synth_generate(Scenario::Follow, 80, 4).unwrap().reactor;
        let radii = JointRadii::uniform(0.04);
        let a = physics_metrics(&clip, &sk, &radii).unwrap();
        let b = physics_metrics(&clip.transformed(yaw, &Vector3::new(tx, 0.0, tz)), &sk, &radii).unwrap();
        prop_assert!((a.skating - b.skating).abs() < 1e-6);
        prop_assert!((a.penetration - b.penetration).abs() < 1e-6);
        prop_assert!((a.floating - b.floating).abs() < 1e-6);
    }

    #[test]
    fn deviation_weight_is_bounded(seed in 0u64..200, n in 1usize..20) {
        let rec = synth_generate(Scenario::Mirror, 60, seed).unwrap();
        let other = synth_generate(Scenario::Follow, 60, seed + 1).unwrap();
        let sk = Skeleton::smpl22();
        let enc = |r: &duet_core::data::InteractionRecord| {
            duet_core::data::EncodedRecord::encode(r.clone(), &sk).unwrap().features[..n].iter().map(|f| f.actor()).collect::<Vec<_>>()
        };
        let w = deviation_weight(&enc(&rec), &enc(&other), &RewardConfig::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!(deviation_weight(&enc(&rec), &enc(&rec), &RewardConfig::default()).unwrap().abs() < 1e-12);
    }
}

#[test]
fn interpenetration_converges_with_grid() {
    let sk = Skeleton::smpl22();
    let radii = JointRadii::default();
    let x = GlobalPose::rest(&sk, [0.0, 0.0], 0.0);
    let y = GlobalPose::rest(&sk, [0.25, 0.0], std::f64::consts::PI);
    let clip = |p: GlobalPose| duet_core::motion::clip::MotionClip::new(30.0, duet_core::motion::clip::AgentId::Actor, vec![p]);
    let (cx, cy) = (clip(x), clip(y));
    let coarse = interpenetration_per_frame(&cx, &cy, &radii, 0.01, Execution::Sequential).unwrap()[0];
    let fine = interpenetration_per_frame(&cx, &cy, &radii, 0.005, Execution::Sequential).unwrap()[0];
    assert!(fine > 0.0);
    assert!((coarse - fine).abs() / fine < 0.05, "coarse {coarse} fine {fine}");
}
