use std::collections::BTreeMap;

use fluorar::fiducial::{estimate_pose, CornerObservation};
use fluorar::simulator::experiments::{
    run_demo_twoview, run_experiment_calibration, run_experiment_guidance, run_experiment_landmarks,
    run_experiment_tracking, ExperimentConfig, ExperimentReport, ImagingMode, NoiseConfig,
};
use fluorar::simulator::{rms, Rig, VirtualOperator};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn quiet() -> ExperimentConfig {
    ExperimentConfig {
        noise: NoiseConfig::zero(),
        ..ExperimentConfig::default()
    }
}

fn fast(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        imaging: ImagingMode::ProjectedCorners,
        ..ExperimentConfig::default()
    }
}

#[test]
fn zero_noise_calibration_has_no_spread() {
    let r = run_experiment_calibration(&quiet()).unwrap();
    assert_eq!(r.measurements.len(), 42);
    assert!(
        r.position_mm.0 < 1e-6 && r.rotation_deg.0 < 1e-6,
        "{:?} {:?}",
        r.position_mm,
        r.rotation_deg
    );
    assert!(r.summary_text().contains("(0.00, 0.00)"));
}

#[test]
fn zero_noise_tracking_and_landmarks_are_exact() {
    let t = run_experiment_tracking(&quiet()).unwrap();
    assert!(t.rmse < 1e-6, "{}", t.rmse);
    let l = run_experiment_landmarks(&quiet()).unwrap();
    let rig = Rig::default_rig();
    let truth: BTreeMap<_, _> = rig
        .phantom
        .beads
        .iter()
        .map(|b| (b.label.clone(), rig.lab_to_w.apply_point(&b.position)))
        .collect();
    assert!(l.max_error_to(&truth) < 1e-5);
}

#[test]
fn zero_noise_guidance_hits_every_bead() {
    let g = run_experiment_guidance(&quiet(), &VirtualOperator::perfect()).unwrap();
    assert!(g.accuracy.overall.0 < 1e-6, "{:?}", g.accuracy.overall);
    let d = run_demo_twoview(&quiet(), &VirtualOperator::perfect()).unwrap();
    assert!(d.tip_error.0 < 1e-6);
}

#[test]
fn tracking_error_increases_with_slam_noise() {
    let levels = [0.0, 0.2, 0.5, 1.0];
    let errors: Vec<f64> = levels
        .iter()
        .map(|s| {
            let mut cfg = fast(21);
            cfg.noise = NoiseConfig {
                slam_translation_mm: *s,
                ..NoiseConfig::zero()
            };
            cfg.tracking.repetitions = 200;
            run_experiment_tracking(&cfg).unwrap().rmse
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[0] < w[1]), "{errors:?}");
}

#[test]
fn repositioning_to_the_same_spot_leaves_detection_noise_only() {
    let mut cfg = fast(4);
    let rig = Rig::default_rig();
    cfg.noise = NoiseConfig {
        rgb_corner_px: 0.5,
        ..NoiseConfig::zero()
    };
    cfg.tracking.placements = vec![rig.config.hmd.placement];
    cfg.tracking.repetitions = 2000;
    let simulated = run_experiment_tracking(&cfg).unwrap().rmse;

    // independent oracle: two noisy views of the same marker from one spot
    let lab_to_hmd = rig.lab_to_hmd(&rig.config.hmd.placement);
    let cam = rig.rgb_camera_at(&lab_to_hmd);
    let device = rig.rgb_device_camera().unwrap();
    let model = rig.marker.model;
    let clean = rig.marker.corners_lab().map(|c| cam.project(&c).unwrap());
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let draw = |rng: &mut ChaCha8Rng| {
        let c = clean.map(|p| p + Vector2::new(noise.sample(rng), noise.sample(rng)));
        estimate_pose(&CornerObservation::new(c, "v").unwrap(), &device, &model)
            .unwrap()
            .inverse()
    };
    let mut per = Vec::new();
    for _ in 0..2000 {
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let d: Vec<f64> = model
            .corner_points()
            .iter()
            .map(|c| (a.apply_point(c) - b.apply_point(c)).norm())
            .collect();
        per.push(rms(&d));
    }
    let oracle = rms(&per);
    assert!(
        (simulated / oracle - 1.0).abs() < 0.1,
        "simulated {simulated} vs oracle {oracle}"
    );
}

#[test]
fn in_plane_error_stays_below_3d_error() {
    let mut dominated = 0;
    for seed in 0..200 {
        let r = run_experiment_landmarks(&fast(seed)).unwrap();
        for e in &r.estimates {
            assert!(e.in_plane <= e.distance + 1e-12);
        }
        for i in 0..r.distance.labels.len() {
            assert!(r.in_plane.means[i] < r.distance.means[i], "seed {seed}");
        }
        dominated += r.out_of_plane_dominates() as usize;
    }
    assert!(dominated >= 190, "{dominated}/200");
}

#[test]
fn bias_separates_precision_from_accuracy() {
    for seed in 0..50 {
        let mut cfg = fast(seed);
        cfg.guidance.system_bias_mm = [4.0, -3.0, 0.0];
        let r = run_experiment_guidance(&cfg, &VirtualOperator::default()).unwrap();
        assert!(r.precision.overall.0 < r.accuracy.overall.0, "seed {seed}");
    }
}

#[test]
fn same_seed_same_tables() {
    let cfg = ExperimentConfig {
        seed: 7,
        ..ExperimentConfig::default()
    };
    let op = VirtualOperator::default();
    assert_eq!(
        run_experiment_landmarks(&cfg).unwrap().trials(),
        run_experiment_landmarks(&cfg).unwrap().trials()
    );
    assert_eq!(
        run_experiment_guidance(&cfg, &op).unwrap().trials(),
        run_experiment_guidance(&cfg, &op).unwrap().trials()
    );
    assert_eq!(
        run_experiment_tracking(&cfg).unwrap().trials(),
        run_experiment_tracking(&cfg).unwrap().trials()
    );
    let other = ExperimentConfig {
        seed: 8,
        ..cfg.clone()
    };
    assert_ne!(
        run_experiment_landmarks(&cfg).unwrap().trials(),
        run_experiment_landmarks(&other).unwrap().trials()
    );
}

#[test]
fn landmark_summary_mirrors_the_reference_layout() {
    let text = run_experiment_landmarks(&fast(7)).unwrap().summary_text();
    for needle in [
        "Target P1",
        "Target P4",
        "Centroid P1",
        "Average",
        "reference (physical system)",
        "(9.49, 6.31)",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}
