use proptest::prelude::*;
use speedcam::dataset::{
    clip_indices, denormalize_speed, normalize_speed, split_dataset, DatasetManifest, EpisodeMeta, EpisodeRecord,
    NormalizationSpec, SplitRatios, CLAMP_SLACK_MPS, FORMAT_VERSION,
};
use speedcam::evaluation::SpeedBins;
use speedcam::scenesynth::{frames_to_cover, speed_from_draw, CameraRig, Projection, VehicleCategory};

fn manifest_of(n: usize) -> DatasetManifest {
    let norm = NormalizationSpec::default();
    let episodes = (0..n)
        .map(|i| {
            EpisodeRecord::from_meta(
                EpisodeMeta {
                    episode_index: i,
                    speed_mps: 10.0,
                    uniform_draw: 0.1,
                    vehicle_name: "audi.a2".into(),
                    vehicle_category: VehicleCategory::Car,
                    environment_label: "Noon_0_0".into(),
                    fps: 80.0,
                    resolution: [16, 16],
                    segment_length_m: 20.0,
                    rng_seed: i as u64,
                    n_frames: 160,
                },
                &norm,
            )
        })
        .collect();
    DatasetManifest {
        root: Default::default(),
        format_version: FORMAT_VERSION,
        fps: 80.0,
        resolution: [16, 16],
        segment_length_m: 20.0,
        master_seed: None,
        episodes,
    }
}

proptest! {
    #[test]
    fn sampled_speeds_stay_in_range_and_round_trip(x in 0.0f64..=1.0) {
        let spec = NormalizationSpec::default();
        let v = speed_from_draw(x);
        prop_assert!((8.33..=27.78).contains(&v));
        let y = normalize_speed(v, &spec).unwrap();
        prop_assert!(!y.clamped);
        let bound = 1.0 + 2.0 * CLAMP_SLACK_MPS / spec.span();
        prop_assert!(y.value.abs() <= bound);
        prop_assert!((denormalize_speed(y.value, &spec).unwrap() - v).abs() < 1e-9);
    }

    #[test]
    fn frame_count_is_non_increasing_in_speed(a in 1.0f64..40.0, b in 1.0f64..40.0, len in 1.0f64..50.0) {
        let (slow, fast) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(frames_to_cover(len, slow, 80.0) >= frames_to_cover(len, fast, 80.0));
    }

    #[test]
    fn clip_indices_are_ordered_and_bounded(n_frames in 1usize..400, n in 2usize..40, horizon in 2usize..400) {
        prop_assume!(n <= horizon);
        let idx = clip_indices(n_frames, n, horizon).unwrap();
        prop_assert_eq!(idx.len(), n);
        prop_assert_eq!(idx[0], 0);
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(idx.iter().all(|&i| i < n_frames));
        if n_frames >= horizon {
            prop_assert_eq!(*idx.last().unwrap(), horizon - 1);
        }
    }

    #[test]
    fn speed_bins_cover_every_speed(v in 0.0f64..40.0, count in 1usize..30) {
        let bins = SpeedBins { count, ..SpeedBins::default() };
        prop_assert!(bins.index(v) < count);
    }

    #[test]
    fn split_partitions_any_manifest(n in 3usize..200, seed in any::<u64>()) {
        let manifest = manifest_of(n);
        let split = split_dataset(&manifest, SplitRatios::default(), seed).unwrap();
        split.check_against(&manifest).unwrap();
        prop_assert_eq!(split.train.len(), (0.6 * n as f64).floor() as usize);
        prop_assert_eq!(split.val.len(), (0.2 * n as f64).floor() as usize);
    }

    #[test]
    fn ground_points_ahead_project_below_the_horizon(x in 0.5f64..60.0, y in -1.0f64..1.0) {
        let rig = CameraRig::default().with_resolution(96, 96);
        match rig.project_point([x, y, 0.0]).unwrap() {
            Projection::InView { v, .. } => prop_assert!(v > 0.0 && v <= 96.0),
            Projection::OutOfView => prop_assert!(false, "ground point ({x}, {y}) out of view"),
        }
    }
}
