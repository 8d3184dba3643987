mod common;

use std::sync::Arc;

use ganvo_core::data::{
    generate_synthetic_dataset, generate_synthetic_scene, load_kitti_sequence, make_batches,
    materialize, parse_pose_file, read_pose_file, window_starts, Dataset, DatasetManifest,
    FrameSequence, Layout, Prefetcher, SceneConfig, Texture,
};
use ganvo_core::geometry::{CameraIntrinsics, PoseVec6, Se3};
use ganvo_core::view_synthesis::sample_bilinear;
use ganvo_core::{Error, Tensor};

fn plane_scene(frames: usize, velocity: [f64; 6]) -> SceneConfig {
    SceneConfig {
        layout: Layout::FrontoParallel { depth: 5.0 },
        frames,
        width: 64,
        height: 32,
        focal: 100.0,
        velocity,
        texture: Texture {
            cell_size: 0.4,
            octaves: 1,
            contrast: 0.8,
        },
    }
}

#[test]
fn zero_motion_frames_are_identical() {
    let seq = generate_synthetic_scene(3, &plane_scene(4, [0.0; 6])).unwrap();
    let f0 = seq.frame(0).unwrap();
    for i in 1..4 {
        assert_eq!(seq.frame(i).unwrap(), f0);
        assert_eq!(
            seq.relative_transform(0, i)
                .unwrap()
                .max_abs_diff(&Se3::identity()),
            0.0
        );
    }
}

#[test]
fn lateral_motion_gives_uniform_plane_flow() {
    let seq = generate_synthetic_scene(9, &plane_scene(2, [0.1, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
    let (f0, f1) = (seq.frame(0).unwrap(), seq.frame(1).unwrap());
    let expected = 100.0 * 0.1 / 5.0;
    // brute-force 1-D search for the shift s with I1(u) = I0(u + s)
    let cost = |s: f64| {
        let mut total = 0.0;
        let mut n = 0;
        for v in 0..32 {
            for u in 0..58 {
                if let Some(px) = sample_bilinear(&f0, u as f64 + s, v as f64).unwrap() {
                    for c in 0..3 {
                        total += (px[c] - f1.data()[(c * 32 + v) * 64 + u]).abs();
                    }
                    n += 1;
                }
            }
        }
        total / n as f64
    };
    let best = (0..=4000)
        .map(|i| i as f64 * 0.001)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap();
    assert!((best - expected).abs() < 0.05, "flow {best} vs {expected}");
}

#[test]
fn same_seed_is_bit_identical() {
    let cfg = SceneConfig::preset("slanted").unwrap();
    let a = generate_synthetic_scene(5, &cfg).unwrap();
    let b = generate_synthetic_scene(5, &cfg).unwrap();
    let c = generate_synthetic_scene(6, &cfg).unwrap();
    for i in 0..cfg.frames {
        assert_eq!(a.frame(i).unwrap(), b.frame(i).unwrap());
        assert_eq!(a.depth(i).unwrap(), b.depth(i).unwrap());
    }
    assert_ne!(a.frame(0).unwrap(), c.frame(0).unwrap());
}

#[test]
fn synthetic_depth_matches_plane_equation() {
    let cfg = SceneConfig::preset("slanted").unwrap();
    let seq = generate_synthetic_scene(1, &cfg).unwrap();
    let k = seq.intrinsics;
    let Layout::Slanted { depth, yaw, pitch } = cfg.layout else {
        unreachable!()
    };
    // normal of the plane in frame 0, built from explicit elementary rotations
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let rx_n = [0.0, -sp, cp];
    let n = [
        cy * rx_n[0] + sy * rx_n[2],
        rx_n[1],
        -sy * rx_n[0] + cy * rx_n[2],
    ];
    let d = seq.depth(0).unwrap().unwrap();
    for v in (0..cfg.height).step_by(7) {
        for u in (0..cfg.width).step_by(5) {
            let ray = [(u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0];
            let t = depth * n[2] / (n[0] * ray[0] + n[1] * ray[1] + n[2] * ray[2]);
            assert!((d.get(v, u) - t).abs() < 1e-12);
        }
    }
}

fn tiny_dataset(lengths: &[usize]) -> Dataset {
    let k = CameraIntrinsics::new(4.0, 4.0, 1.5, 1.5, 4, 4).unwrap();
    Dataset::new(
        lengths
            .iter()
            .enumerate()
            .map(|(s, &len)| {
                let frames = (0..len)
                    .map(|i| Tensor::full([3, 4, 4], (s * 100 + i) as f64))
                    .collect();
                FrameSequence::in_memory(format!("{s:02}"), k, frames, None, None).unwrap()
            })
            .collect(),
    )
}

#[test]
fn ten_frames_give_eight_triplets() {
    let ds = tiny_dataset(&[10]);
    assert_eq!(window_starts(&ds, 3).len(), 8);
    let batches: Vec<_> = make_batches(&ds, 3, 1, None).unwrap().collect();
    assert_eq!(batches.len(), 8);
}

#[test]
fn partial_batch_is_dropped_and_short_data_rejected() {
    let ds = tiny_dataset(&[10]);
    assert_eq!(make_batches(&ds, 3, 3, Some(1)).unwrap().count(), 2);
    assert!(matches!(
        make_batches(&tiny_dataset(&[2]), 3, 1, None),
        Err(Error::Data(_))
    ));
}

#[test]
fn shuffle_is_reproducible() {
    let ds = tiny_dataset(&[12, 9]);
    let order = |seed| {
        make_batches(&ds, 3, 2, Some(seed))
            .unwrap()
            .flat_map(|b| {
                b.unwrap()
                    .samples
                    .into_iter()
                    .map(|s| (s.sequence_id, s.start))
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(order(7), order(7));
    assert_ne!(order(7), order(8));
}

#[test]
fn windows_never_cross_sequences() {
    let ds = tiny_dataset(&[5, 4, 6]);
    for b in make_batches(&ds, 3, 1, Some(3)).unwrap() {
        let s = &b.unwrap().samples[0];
        let seq: usize = s.sequence_id.parse().unwrap();
        for (i, f) in s.frames.iter().enumerate() {
            assert_eq!(f.data()[0], (seq * 100 + s.start + i) as f64);
        }
    }
}

#[test]
fn batch_tensors_are_stacked_in_time_order() {
    let ds = tiny_dataset(&[6]);
    let b = make_batches(&ds, 3, 2, None)
        .unwrap()
        .next()
        .unwrap()
        .unwrap();
    assert_eq!(b.target().shape(), &[2, 3, 4, 4]);
    assert_eq!(b.target().data()[0], 1.0);
    assert_eq!(b.source(0).data()[0], 0.0);
    assert_eq!(b.source(1).data()[0], 2.0);
    let st = b.stacked();
    assert_eq!(st.shape(), &[2, 9, 4, 4]);
    assert_eq!(st.data()[6 * 16], 2.0);
    assert_eq!(st.data()[9 * 16], 1.0);
}

#[test]
fn prefetcher_matches_synchronous_batches() {
    let ds = Arc::new(tiny_dataset(&[9, 7]));
    let mut pf = Prefetcher::spawn(ds.clone(), 3, 2, 11).unwrap();
    let sync: Vec<_> = make_batches(&ds, 3, 2, Some(11))
        .unwrap()
        .chain(make_batches(&ds, 3, 2, Some(12)).unwrap())
        .map(|b| b.unwrap())
        .collect();
    for want in &sync {
        let got = pf.next_batch().unwrap();
        assert_eq!(got.stacked(), want.stacked());
    }
}

#[test]
fn resize_scales_intrinsics_and_projections() {
    let k = CameraIntrinsics::new(718.856, 718.856, 607.1928, 185.2157, 1241, 376).unwrap();
    let r = k.resized(416, 128).unwrap();
    assert!((r.fx - 718.856 * 416.0 / 1241.0).abs() < 1e-12);
    assert!((r.cy - 185.2157 * 128.0 / 376.0).abs() < 1e-12);
    let p = [1.3, -0.4, 7.5];
    let (u, v) = k.project(p, 1e-3).unwrap();
    let (ur, vr) = r.project(p, 1e-3).unwrap();
    assert!((ur - u * 416.0 / 1241.0).abs() < 1e-9);
    assert!((vr - v * 128.0 / 376.0).abs() < 1e-9);
}

#[test]
fn relative_pose_from_consecutive_absolutes() {
    let t1 = PoseVec6::new(0.3, -0.2, 1.0, 0.05, -0.1, 0.2).to_matrix();
    let t2 = PoseVec6::new(0.5, -0.1, 1.9, 0.07, -0.12, 0.18).to_matrix();
    let text: String = [&t1, &t2]
        .iter()
        .map(|t| {
            t.to_row_major_3x4()
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect::<Vec<_>>()
                .join(" ")
                + "\n"
        })
        .collect();
    let poses = parse_pose_file(&text, "mem").unwrap();
    let k = CameraIntrinsics::new(4.0, 4.0, 1.5, 1.5, 4, 4).unwrap();
    let seq =
        FrameSequence::in_memory("x", k, vec![Tensor::zeros([3, 4, 4]); 2], Some(poses), None)
            .unwrap();
    // invert(T1) * T2 by explicit 4x4 products
    let b = t2.matrix();
    let r = t1.rotation();
    let t = t1.translation();
    let mut inv = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = r[j][i];
        }
        inv[i][3] = -(0..3).map(|j| r[j][i] * t[j]).sum::<f64>();
    }
    inv[3][3] = 1.0;
    let rel = seq.relative_transform(1, 0).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let want: f64 = (0..4).map(|k| inv[i][k] * b[k][j]).sum();
            assert!((rel.matrix()[i][j] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn materialized_dataset_reloads() {
    let cfg = SceneConfig {
        frames: 7,
        ..SceneConfig::toy()
    };
    let ds = generate_synthetic_dataset(4, &cfg, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = materialize(
        &ds,
        dir.path(),
        vec!["00".into()],
        vec![],
        vec!["01".into()],
    )
    .unwrap();
    assert_eq!(m.width, 48);
    let reopened = DatasetManifest::open(dir.path()).unwrap();
    assert_eq!(reopened.test, vec!["01".to_string()]);

    let seq = load_kitti_sequence(&reopened, "01").unwrap();
    assert_eq!(seq.len(), 7);
    assert_eq!(seq.intrinsics, ds.sequences[1].intrinsics);
    let back = read_pose_file(reopened.pose_path("01")).unwrap();
    for (a, b) in back.iter().zip(ds.sequences[1].poses.as_ref().unwrap()) {
        assert!(a.max_abs_diff(b) < 1e-9);
    }
    let want = ds.sequences[1].frame(3).unwrap();
    let got = seq.frame(3).unwrap();
    assert!(want
        .data()
        .iter()
        .zip(got.data())
        .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
    let d = seq.depth(2).unwrap().unwrap();
    let gt = ds.sequences[1].depth(2).unwrap().unwrap();
    assert!(d
        .values()
        .iter()
        .zip(gt.values())
        .all(|(a, b)| (a - b).abs() <= 0.0005 + 1e-12));

    // five-frame windows are centered on start + 2
    let starts = window_starts(&reopened.load_split(&reopened.test).unwrap(), 5);
    let centers: Vec<usize> = starts.iter().map(|&(_, s)| s + 2).collect();
    assert_eq!(centers, (2..5).collect::<Vec<_>>());
    let w = seq.window(1, 5).unwrap();
    assert_eq!(w.target_index, 2);
    assert_eq!(w.gt_poses.as_ref().unwrap().len(), 4);
}

#[test]
fn missing_sequence_dir_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest {
        root: dir.path().to_path_buf(),
        train: vec!["07".into()],
        val: vec![],
        test: vec![],
        width: 48,
        height: 16,
        camera: "image_2".into(),
    };
    let err = m.validate().unwrap_err();
    assert!(err.to_string().contains("07"), "{err}");
    assert!(matches!(
        load_kitti_sequence(&m, "07"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn overlapping_splits_are_rejected() {
    let cfg = SceneConfig {
        frames: 3,
        ..SceneConfig::toy()
    };
    let ds = generate_synthetic_dataset(4, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = materialize(
        &ds,
        dir.path(),
        vec!["00".into()],
        vec!["00".into()],
        vec![],
    )
    .unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}

#[test]
fn calib_fallback_reads_p2() {
    let cfg = SceneConfig {
        frames: 2,
        ..SceneConfig::toy()
    };
    let ds = generate_synthetic_dataset(2, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = materialize(&ds, dir.path(), vec![], vec![], vec![]).unwrap();
    std::fs::remove_file(m.sequence_dir("00").join("intrinsics.txt")).unwrap();
    let seq = load_kitti_sequence(&m, "00").unwrap();
    let k = ds.sequences[0].intrinsics;
    assert!((seq.intrinsics.fx - k.fx).abs() < 1e-12);
    assert!((seq.intrinsics.cy - k.cy).abs() < 1e-12);
}
