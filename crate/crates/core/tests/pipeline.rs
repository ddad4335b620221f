use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use octocal::calib::Intrinsics;
use octocal::octagon::OctagonCorners;
use octocal::pipeline::{
    self, calibrate, fallback_detect, ingest, process_view, DetectionConfig, PipelineConfig, Rejection,
};
use octocal::raster::{Image, RedThresholds};
use octocal::synth::{
    detection_box, render_scene, write_batch, BatchConfig, CameraPose, RenderedScene, SceneSpec,
};
use octocal::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn batch(dir: &Path, n: usize, noise: f64, seed: u64) {
    let cfg = BatchConfig {
        contour_noise_px: noise,
        ..BatchConfig::default()
    };
    write_batch(dir, n, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
}

/// Corner RMS against the truth under the best cyclic relabelling.
fn cyclic_rms(found: &OctagonCorners, truth: &OctagonCorners) -> f64 {
    (0..8)
        .map(|s| {
            let ss: f64 = (0..8)
                .map(|i| {
                    let (a, b) = (found.corners[i], truth.corners[(i + s) % 8]);
                    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
                })
                .sum();
            (ss / 8.0).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

fn scenes(n: usize, seed: u64, edit: impl Fn(SceneSpec) -> SceneSpec) -> Vec<RenderedScene> {
    let b = BatchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let pose = b.poses.sample(&mut rng).unwrap();
        if let Ok(s) = render_scene(&edit(b.scene(pose)), &mut rng) {
            out.push(s);
        }
    }
    out
}

#[test]
fn ingest_synth_batch() {
    let dir = tempfile::tempdir().unwrap();
    batch(dir.path(), 50, 0.0, 1);
    let got = ingest(dir.path(), &DetectionConfig::default(), &RedThresholds::default()).unwrap();
    assert_eq!(got.records.len(), 50);
    assert!(got.missing.is_empty());
    assert!(got.records.windows(2).all(|w| w[0].ts <= w[1].ts));
}

#[test]
fn ingest_skips_missing_frames() {
    let dir = tempfile::tempdir().unwrap();
    batch(dir.path(), 3, 0.0, 2);
    fs::remove_file(dir.path().join("f_001.png")).unwrap();
    let got = ingest(dir.path(), &DetectionConfig::default(), &RedThresholds::default()).unwrap();
    assert_eq!(got.records.len(), 2);
    assert_eq!(got.missing, vec!["f_001.png".to_string()]);
    let report = calibrate(&got, &PipelineConfig::default()).unwrap();
    assert_eq!(report.missing_frames.len(), 1);
    assert_eq!(report.detections, 2);
}

#[test]
fn ingest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = DetectionConfig::default();
    let r = RedThresholds::default();
    assert!(matches!(ingest(dir.path(), &d, &r), Err(Error::Dataset(_))));
    fs::write(dir.path().join("detections.json"), "[{\"frame\": 3}]").unwrap();
    assert!(matches!(ingest(dir.path(), &d, &r), Err(Error::Dataset(_))));
    fs::write(dir.path().join("detections.json"), "[]").unwrap();
    assert!(matches!(ingest(dir.path(), &d, &r), Err(Error::Dataset(_))));
}

#[test]
fn unreadable_frame_is_a_rejection() {
    let dir = tempfile::tempdir().unwrap();
    batch(dir.path(), 2, 0.0, 3);
    fs::write(dir.path().join("f_000.png"), b"not a png").unwrap();
    let got = ingest(dir.path(), &DetectionConfig::default(), &RedThresholds::default()).unwrap();
    let report = calibrate(&got, &PipelineConfig::default()).unwrap();
    assert_eq!(report.rejections["unreadable-frame"], 1);
    assert_eq!(report.accepted, 1);
}

#[test]
fn fallback_detector_without_detections_file() {
    let dir = tempfile::tempdir().unwrap();
    batch(dir.path(), 4, 0.0, 4);
    fs::remove_file(dir.path().join("detections.json")).unwrap();
    let report = pipeline::run(dir.path(), &PipelineConfig::default(), &dir.path().join("out")).unwrap();
    assert_eq!(report.detections, 4);
    assert_eq!(report.accepted, 4);
}

#[test]
fn fallback_finds_two_targets() {
    let k = Intrinsics::centered(1810.4, 1840.1, 1280, 800);
    let render = |x: f64| {
        let pose = CameraPose::from_angles(30.0, 45.0, 0.0, Vector3::new(x, 0.0, 8.0)).unwrap();
        render_scene(&SceneSpec::new(k, pose, 1280, 800), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    };
    let (a, b) = (render(-1.2), render(1.2));
    let bg = a.image.pixel_rgb(0, 0);
    let both = Image::from_fn_rgb(1280, 800, |x, y| {
        let p = b.image.pixel_rgb(x, y);
        if p != bg {
            p
        } else {
            a.image.pixel_rgb(x, y)
        }
    });
    let boxes = fallback_detect(&both, &DetectionConfig::default(), &RedThresholds::default()).unwrap();
    assert_eq!(boxes.len(), 2);
    for scene in [&a, &b] {
        let holds = |bx: &[f64; 4]| {
            scene
                .corners
                .corners
                .iter()
                .all(|c| c[0] > bx[0] && c[0] < bx[0] + bx[2] && c[1] > bx[1] && c[1] < bx[1] + bx[3])
        };
        assert_eq!(boxes.iter().filter(|bx| holds(bx)).count(), 1);
    }
}

#[test]
fn runs_are_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    batch(data.path(), 12, 0.3, 5);
    let cfg = PipelineConfig {
        seed: 17,
        ground_truth: Some([1810.4, 1840.1]),
        ..PipelineConfig::default()
    };
    let (o1, o2) = (data.path().join("o1"), data.path().join("o2"));
    pipeline::run(data.path(), &cfg, &o1).unwrap();
    pipeline::run(data.path(), &cfg, &o2).unwrap();
    for f in ["report.json", "trajectory.csv", "views.csv", "rejections.csv"] {
        assert_eq!(fs::read(o1.join(f)).unwrap(), fs::read(o2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn refinement_flag_follows_boundary() {
    let data = tempfile::tempdir().unwrap();
    batch(data.path(), 3, 0.0, 6);
    let off = pipeline::run(data.path(), &PipelineConfig::default(), &data.path().join("a")).unwrap();
    assert!(off.refinement_skipped);
    let mut cfg = PipelineConfig::default();
    cfg.refine.boundary = 0.5;
    let on = pipeline::run(data.path(), &cfg, &data.path().join("b")).unwrap();
    assert!(!on.refinement_skipped);
    let text = pipeline::summary_table(&pipeline::load_report(&data.path().join("a")).unwrap());
    assert!(text.contains("refinement  skipped"));
}

#[test]
fn rejection_totality() {
    let data = tempfile::tempdir().unwrap();
    let b = BatchConfig {
        corner_noise_px: 2.0,
        ..BatchConfig::default()
    };
    write_batch(data.path(), 30, &b, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let report = pipeline::run(data.path(), &PipelineConfig::default(), &data.path().join("o")).unwrap();
    let rejected: usize = report.rejections.values().sum();
    assert_eq!(report.accepted + rejected, report.detections);
    assert!(rejected > 0, "{:?}", report.rejections);
    let csv = fs::read_to_string(data.path().join("o/rejections.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + Rejection::ALL.len());
}

#[test]
fn accepted_fraction_does_not_grow_with_noise() {
    let b = BatchConfig::default();
    let cfg = PipelineConfig::default();
    let mut prev = usize::MAX;
    for sigma in [0.0, 0.3, 1.0, 3.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut accepted = 0;
        let mut n = 0;
        while n < 100 {
            let pose = b.poses.sample(&mut rng).unwrap();
            let spec = SceneSpec {
                contour_noise_px: sigma,
                ..b.scene(pose)
            };
            let Ok(s) = render_scene(&spec, &mut rng) else {
                continue;
            };
            n += 1;
            let mut r = ChaCha8Rng::seed_from_u64(n as u64);
            accepted += process_view(&s.image, detection_box(&s, 0.1), &cfg, &mut r).is_ok() as usize;
        }
        assert!(accepted <= prev, "sigma {sigma}: {accepted} > {prev}");
        prev = accepted;
    }
}

#[test]
fn clean_corners_within_tolerance() {
    let cfg = PipelineConfig::default();
    let (mut ss, mut n) = (0.0, 0);
    for (k, s) in scenes(50, 9, |spec| spec).iter().enumerate() {
        let v = process_view(&s.image, detection_box(s, 0.1), &cfg, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
        ss += cyclic_rms(&v.corners, &s.corners).powi(2);
        n += 1;
    }
    let rms = (ss / n as f64).sqrt();
    assert!(rms <= 0.15, "corner RMS {rms}");
}

#[test]
fn blurred_noisy_corners_within_tolerance() {
    let cfg = PipelineConfig::default();
    let all = scenes(100, 10, |spec| SceneSpec {
        blur_sigma_px: 2.0,
        contour_noise_px: 0.3,
        ..spec
    });
    let (mut ss, mut n) = (0.0, 0);
    for (k, s) in all.iter().enumerate() {
        if let Ok(v) = process_view(&s.image, detection_box(s, 0.1), &cfg, &mut ChaCha8Rng::seed_from_u64(k as u64)) {
            ss += cyclic_rms(&v.corners, &s.corners).powi(2);
            n += 1;
        }
    }
    assert!(n >= 95, "only {n} accepted");
    let rms = (ss / n as f64).sqrt();
    assert!(rms <= 0.6, "corner RMS {rms}");
}

#[test]
fn tilt_sweep_passes_affine_check() {
    let k = Intrinsics::centered(1810.4, 1840.1, 1280, 800);
    let cfg = PipelineConfig::default();
    for tilt in (15..=60).step_by(5) {
        for az in [30.0, 60.0, 120.0, 210.0, 330.0] {
            for d in [6.0, 11.0] {
                let pose = CameraPose::from_angles(tilt as f64, az, 0.0, Vector3::new(0.3, 0.2, d)).unwrap();
                let s = render_scene(&SceneSpec::new(k, pose, 1280, 800), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                let r = process_view(&s.image, detection_box(&s, 0.1), &cfg, &mut ChaCha8Rng::seed_from_u64(1));
                assert!(r.is_ok(), "tilt {tilt} az {az} d {d}: {:?}", r.err());
            }
        }
    }
}

#[test]
fn exposure_gain_changes_little() {
    let cfg = PipelineConfig::default();
    let k = Intrinsics::centered(1810.4, 1840.1, 1280, 800);
    let pose = CameraPose::from_angles(35.0, 50.0, 2.0, Vector3::new(0.1, 0.1, 6.0)).unwrap();
    let mut found = Vec::new();
    for gain in [0.6, 1.0] {
        let spec = SceneSpec {
            exposure_gain: gain,
            ..SceneSpec::new(k, pose, 1280, 800)
        };
        let s = render_scene(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let v = process_view(&s.image, detection_box(&s, 0.1), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(cyclic_rms(&v.corners, &s.corners) < 0.15);
        found.push(v.fx);
    }
    assert!((found[0] / found[1] - 1.0).abs() < 0.01, "{found:?}");
}
