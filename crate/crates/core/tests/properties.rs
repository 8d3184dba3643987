use ganvo_core::evaluation::{ate, depth_metrics, spearman, DepthCap, Trajectory};
use ganvo_core::geometry::{DepthMap, PoseVec6, Se3};
use ganvo_core::view_synthesis::sample_bilinear;
use ganvo_core::Tensor;
use proptest::prelude::*;

fn pose_vec() -> impl Strategy<Value = PoseVec6> {
    (
        prop::array::uniform3(-5.0..5.0f64),
        -3.0..3.0f64,
        -1.5..1.5f64,
        -3.0..3.0f64,
    )
        .prop_map(|(t, rx, ry, rz)| PoseVec6::new(t[0], t[1], t[2], rx, ry, rz))
}

fn trajectory(len: usize) -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(pose_vec(), len).prop_map(|ps| {
        Trajectory::from_poses(ps.iter().map(PoseVec6::to_matrix).collect()).unwrap()
    })
}

fn depth_pair() -> impl Strategy<Value = (DepthMap, DepthMap)> {
    (
        prop::collection::vec(0.5..79.0f64, 16),
        prop::collection::vec(0.1..50.0f64, 16),
    )
        .prop_map(|(g, p)| {
            (
                DepthMap::new(4, 4, g).unwrap(),
                DepthMap::new(4, 4, p).unwrap(),
            )
        })
}

proptest! {
    #[test]
    fn pose_vector_round_trips(p in pose_vec()) {
        let back = PoseVec6::from_matrix(&p.to_matrix()).to_matrix();
        prop_assert!(back.max_abs_diff(&p.to_matrix()) < 1e-9);
    }

    #[test]
    fn compose_with_inverse_is_identity(p in pose_vec(), q in pose_vec()) {
        let (a, b) = (p.to_matrix(), q.to_matrix());
        prop_assert!(a.compose(&a.invert()).max_abs_diff(&Se3::identity()) < 1e-12);
        let ab = a.compose(&b);
        prop_assert!(ab.invert().max_abs_diff(&b.invert().compose(&a.invert())) < 1e-9);
        prop_assert!(ab.validate(1e-9).is_ok());
    }

    #[test]
    fn bilinear_preserves_constants(c in 0.0..1.0f64, u in 0.0..6.0f64, v in 0.0..4.0f64) {
        let img = Tensor::full([2, 5, 7], c);
        let out = sample_bilinear(&img, u, v).unwrap().unwrap();
        prop_assert!(out.iter().all(|x| (x - c).abs() < 1e-15));
    }

    #[test]
    fn bilinear_is_exact_on_the_grid(x in 0usize..7, y in 0usize..5) {
        let img = Tensor::from_fn([1, 5, 7], |i| (i as f64 * 0.37).sin());
        let out = sample_bilinear(&img, x as f64, y as f64).unwrap().unwrap();
        prop_assert_eq!(out[0], img.data()[y * 7 + x]);
    }

    #[test]
    fn ate_ignores_prediction_scale(pred in trajectory(5), gt in trajectory(5), s in 0.05..20.0f64) {
        let base = ate(&pred, &gt).unwrap();
        prop_assume!(!base.degenerate);
        let scaled = Trajectory::from_poses(
            pred.poses
                .iter()
                .map(|p| {
                    let t = p.translation();
                    Se3::from_rotation_translation(p.rotation(), [s * t[0], s * t[1], s * t[2]]).unwrap()
                })
                .collect(),
        )
        .unwrap();
        prop_assert!((ate(&scaled, &gt).unwrap().rmse - base.rmse).abs() < 1e-9);
        prop_assert!(base.rmse >= 0.0);
    }

    #[test]
    fn depth_metrics_are_ordered_and_scale_free((gt, pred) in depth_pair(), s in 0.01..100.0f64) {
        for cap in [DepthCap::Cap80, DepthCap::Cap50] {
            let m = depth_metrics(&pred, &gt, cap);
            if let Ok(m) = m {
                prop_assert!(m.values()[..4].iter().all(|v| *v >= 0.0));
                prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3 && m.delta3 <= 1.0);
                let ms = depth_metrics(&pred.scaled(s), &gt, cap).unwrap();
                for (a, b) in m.values().iter().zip(ms.values()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn spearman_is_bounded_and_monotone_invariant(xs in prop::collection::vec(-10.0..10.0f64, 3..40)) {
        let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        if let Ok(rho) = spearman(&xs, &ys) {
            prop_assert!((rho - 1.0).abs() < 1e-12);
        }
        let rev: Vec<f64> = xs.iter().map(|x| -x * 3.0).collect();
        if let Ok(rho) = spearman(&xs, &rev) {
            prop_assert!((rho + 1.0).abs() < 1e-12);
        }
    }
}
