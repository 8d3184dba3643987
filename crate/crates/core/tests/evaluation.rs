mod common;

use common::{
    ate_scan_oracle, depth_metrics_oracle, random_depth, random_pose_vec, random_trajectory, rng,
    se3_close,
};
use ganvo_core::data::image_io::read_depth_mm;
use ganvo_core::data::{generate_synthetic_scene, SceneConfig};
use ganvo_core::evaluation::{
    accumulate_trajectory, ate, depth_metrics, export_artifacts, gt_trajectory, predicted_windows,
    trajectory_csv, Accumulation, Artifacts, DepthCap, DepthMetrics, Summary, Trajectory,
    ATE_WINDOW,
};
use ganvo_core::geometry::{DepthMap, PoseVec6, Se3};
use ganvo_core::networks::{ArchConfig, GanVo};
use ganvo_core::Error;
use rand::Rng;

fn scaled(traj: &Trajectory, s: f64) -> Trajectory {
    let poses = traj
        .poses
        .iter()
        .map(|p| {
            let t = p.translation();
            Se3::from_rotation_translation(p.rotation(), [s * t[0], s * t[1], s * t[2]]).unwrap()
        })
        .collect();
    Trajectory::new(traj.frames.clone(), poses).unwrap()
}

#[test]
fn ate_trivial_cases() {
    let gt = random_trajectory(&mut rng(1), 5);
    assert!(ate(&gt, &gt).unwrap().rmse < 1e-12);
    let tripled = ate(&scaled(&gt.anchored(), 3.0), &gt).unwrap();
    assert!(tripled.rmse < 1e-12);
    assert!((tripled.scale - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn ate_lateral_offset_matches_oracles() {
    let gt = random_trajectory(&mut rng(2), 5).anchored();
    let poses = gt
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut t = p.translation();
            if i > 0 {
                t[0] += 0.1;
            }
            Se3::from_rotation_translation(p.rotation(), t).unwrap()
        })
        .collect();
    let pred = Trajectory::from_poses(poses).unwrap();
    let got = ate(&pred, &gt).unwrap();
    assert!(got.rmse > 1e-3);
    assert!((got.rmse - ate_scan_oracle(&pred, &gt)).abs() < 1e-9);
}

#[test]
fn ate_invariances() {
    let mut r = rng(3);
    for _ in 0..20 {
        let pred = random_trajectory(&mut r, 5);
        let gt = random_trajectory(&mut r, 5);
        let base = ate(&pred, &gt).unwrap().rmse;
        let s = r.random_range(0.1..10.0);
        assert!((ate(&scaled(&pred, s), &gt).unwrap().rmse - base).abs() < 1e-12);
        let rigid = random_pose_vec(&mut r, 3.0, 1.0).to_matrix();
        let moved = |t: &Trajectory| {
            Trajectory::new(
                t.frames.clone(),
                t.poses.iter().map(|p| rigid.compose(p)).collect(),
            )
            .unwrap()
        };
        assert!((ate(&moved(&pred), &moved(&gt)).unwrap().rmse - base).abs() < 1e-9);
    }
}

#[test]
fn ate_static_prediction_is_flagged() {
    let gt = random_trajectory(&mut rng(4), 5);
    let still = Trajectory::from_poses(vec![Se3::identity(); 5]).unwrap();
    let a = ate(&still, &gt).unwrap();
    assert!(a.degenerate && a.scale == 1.0);
    assert!(a.rmse > 0.0);
    assert!(ate(&still, &gt.slice(0, 4).unwrap()).is_err());
}

#[test]
fn accumulate_examples() {
    let id = accumulate_trajectory(&[PoseVec6::default(); 4], Accumulation::Compose).unwrap();
    assert!(id
        .poses
        .iter()
        .all(|p| p.matrix() == Se3::identity().matrix()));
    let fwd = accumulate_trajectory(
        &[PoseVec6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0); 5],
        Accumulation::Compose,
    )
    .unwrap();
    for (k, p) in fwd.poses.iter().enumerate() {
        assert_eq!(p.translation(), [0.0, 0.0, k as f64]);
    }
    let back = accumulate_trajectory(
        &[PoseVec6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0); 5],
        Accumulation::ComposeInverse,
    )
    .unwrap();
    assert_eq!(back.poses[5].translation(), [0.0, 0.0, -5.0]);
    let bad = PoseVec6::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert!(matches!(
        accumulate_trajectory(&[bad], Accumulation::Compose),
        Err(Error::Numeric(_))
    ));
}

#[test]
fn accumulate_round_trips_relatives() {
    let mut r = rng(5);
    for conv in [Accumulation::Compose, Accumulation::ComposeInverse] {
        let rel: Vec<PoseVec6> = (0..30).map(|_| random_pose_vec(&mut r, 1.0, 0.3)).collect();
        let traj = accumulate_trajectory(&rel, conv).unwrap();
        for (k, w) in traj.poses.windows(2).enumerate() {
            let step = w[0].invert().compose(&w[1]);
            let m = match conv {
                Accumulation::Compose => step,
                Accumulation::ComposeInverse => step.invert(),
            };
            let back = PoseVec6::from_matrix(&m).to_array();
            for (a, b) in back.iter().zip(rel[k].to_array()) {
                assert!((a - b).abs() < 1e-9, "step {k}");
            }
        }
    }
}

#[test]
fn depth_trivial_cases() {
    let gt = random_depth(&mut rng(6), 8, 8, 1.0, 70.0);
    let same = depth_metrics(&gt, &gt, DepthCap::Cap80).unwrap();
    assert_eq!(same.values()[..4], [0.0; 4]);
    assert_eq!(same.values()[4..], [1.0; 3]);
    assert_eq!(
        depth_metrics(&gt.scaled(2.0), &gt, DepthCap::Cap80).unwrap(),
        same
    );
}

#[test]
fn depth_matches_formula_oracle() {
    let mut r = rng(7);
    for cap in [DepthCap::Cap80, DepthCap::Cap50] {
        for _ in 0..50 {
            let gt = random_depth(&mut r, 8, 8, 0.5, 90.0);
            let pred = random_depth(&mut r, 8, 8, 0.1, 10.0);
            let m = depth_metrics(&pred, &gt, cap).unwrap();
            let oracle = depth_metrics_oracle(&pred, &gt, cap.meters());
            for (a, b) in m.values().iter().zip(oracle) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3 && m.delta3 <= 1.0);
            let s = r.random_range(0.01..100.0);
            let ms = depth_metrics(&pred.scaled(s), &gt, cap).unwrap();
            for (a, b) in m.values().iter().zip(ms.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cap_changes_evaluated_pixels() {
    let gt = DepthMap::new(1, 4, vec![10.0, 20.0, 60.0, 75.0]).unwrap();
    let pred = DepthMap::new(1, 4, vec![10.0, 20.0, 30.0, 30.0]).unwrap();
    let m80 = depth_metrics(&pred, &gt, DepthCap::Cap80).unwrap();
    let m50 = depth_metrics(&pred, &gt, DepthCap::Cap50).unwrap();
    assert_eq!(m50.abs_rel, 0.0);
    assert!(m80.abs_rel > 0.0);
    let far = DepthMap::filled(2, 2, 60.0).unwrap();
    assert!(matches!(
        depth_metrics(&far, &far, DepthCap::Cap50),
        Err(Error::Data(_))
    ));
}

#[test]
fn report_formats() {
    let s = Summary::of(&[0.004, 0.014]).unwrap();
    assert_eq!(s.to_string(), "0.009 ± 0.005");
    let header = DepthMetrics::header();
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(
        cols,
        [
            "Abs",
            "Rel",
            "Sq",
            "Rel",
            "RMSE",
            "RMSE",
            "log",
            "δ<1.25",
            "δ<1.25²",
            "δ<1.25³"
        ]
    );
    let row = DepthMetrics {
        abs_rel: 0.15,
        sq_rel: 1.141,
        rmse: 5.448,
        rmse_log: 0.216,
        delta1: 0.808,
        delta2: 0.939,
        delta3: 0.975,
    }
    .row();
    let vals: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(
        vals,
        ["0.150", "1.141", "5.448", "0.216", "0.808", "0.939", "0.975"]
    );
    assert_eq!("50".parse::<DepthCap>().unwrap(), DepthCap::Cap50);
    assert!("40".parse::<DepthCap>().is_err());
}

#[test]
fn export_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let traj = Trajectory::from_poses(vec![Se3::identity(); 3]).unwrap();
    let csv = trajectory_csv(&traj);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "frame,x,y,z,qw,qx,qy,qz");
    assert_eq!(lines[2], "1,0,0,0,1,0,0,0");
    let uniform = DepthMap::filled(4, 5, 1.0).unwrap();
    let random = random_depth(&mut rng(8), 6, 7, 0.5, 60.0);
    let metrics = Summary::of(&[0.5]).unwrap();
    let written = export_artifacts(
        dir.path(),
        &Artifacts {
            trajectories: vec![("traj".into(), &traj, Some(&traj))],
            depth_maps: vec![("uniform".into(), &uniform), ("random".into(), &random)],
            metrics: Some(&metrics),
        },
    )
    .unwrap();
    assert_eq!(written.len(), 7);
    let svg = std::fs::read_to_string(dir.path().join("traj.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("ground truth"));
    let png = image::open(dir.path().join("uniform.png"))
        .unwrap()
        .into_luma16();
    assert!(png.pixels().all(|p| p.0[0] == 1000));
    let back = read_depth_mm(dir.path().join("random.png")).unwrap();
    for (a, b) in back.values().iter().zip(random.values()) {
        assert!((a - b).abs() <= 0.0005 + 1e-12);
    }
    let color = image::open(dir.path().join("random_color.png")).unwrap();
    assert_eq!((color.width(), color.height()), (7, 6));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(json["count"], 1);
}

#[test]
fn export_reports_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = export_artifacts::<Summary>(&blocker.join("sub"), &Artifacts::default()).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn window_counts_follow_sequence_length() {
    let seq = generate_synthetic_scene(1, &SceneConfig::toy()).unwrap();
    let gt = gt_trajectory(&seq).unwrap();
    for seq_len in [3, 5] {
        let arch = ArchConfig {
            seq_len,
            ..ArchConfig::toy()
        };
        let model = GanVo::new(arch, 2).unwrap();
        let windows = predicted_windows(&model, &seq).unwrap();
        assert_eq!(windows.len(), seq.len() - 4);
        for (start, w) in windows.iter().enumerate() {
            assert_eq!(w.len(), ATE_WINDOW);
            assert_eq!(w.frames[0], start);
            assert!(se3_close(&w.poses[0], &Se3::identity(), 1e-12));
            ate(w, &gt.slice(start, ATE_WINDOW).unwrap()).unwrap();
        }
    }
}

#[test]
fn chained_windows_match_direct_windows_for_exact_poses() {
    // a model that predicted exact relative poses gives the GT window either way
    let seq = generate_synthetic_scene(3, &SceneConfig::toy()).unwrap();
    let gt = gt_trajectory(&seq).unwrap();
    let start = 2;
    let rel: Vec<PoseVec6> = [0, 1, 3, 4]
        .iter()
        .map(|&f| PoseVec6::from_matrix(&seq.relative_transform(start + 2, start + f).unwrap()))
        .collect();
    let w = ganvo_core::evaluation::window_from_target_poses(start, 5, &rel).unwrap();
    let truth = gt.slice(start, 5).unwrap().anchored();
    for (a, b) in w.poses.iter().zip(&truth.poses) {
        assert!(se3_close(a, b, 1e-9));
    }
    assert!(ate(&w, &truth).unwrap().rmse < 1e-9);
}
