//! Dataset generation: storage fidelity, byte determinism and the noise
//! model's statistics.

mod common;

use lightcal::dataset::load_dataset;
use lightcal::photometry::render_image;
use lightcal::solver::{calibrate, SolverOptions};
use lightcal::synth::{generate_dataset, sample_poses, ScenarioSpec};
use lightcal::ConvergenceStatus;

fn hash_file(path: &std::path::Path) -> u64 {
    // FNV-1a is plenty for comparing regeneration runs.
    let bytes = std::fs::read(path).unwrap();
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[test]
fn clean_dataset_reloads_bitwise() {
    let mut spec = common::small_scenario();
    spec.n_views = 3;
    let dir = tempfile::tempdir().unwrap();
    let generated = generate_dataset(&spec, dir.path()).unwrap();
    let dataset = load_dataset(&generated.manifest_path).unwrap();
    assert_eq!(dataset.views.len(), 3);

    let light = spec.ground_truth_light().unwrap();
    let poses = sample_poses(&spec).unwrap();
    for (view, pose) in dataset.views.iter().zip(&poses) {
        assert_eq!(view.pose.rotation(), pose.rotation());
        assert_eq!(view.pose.center(), pose.center());
        let rendered = render_image(&spec.intrinsics, pose, &light);
        for (stored, computed) in view.image.data.iter().zip(&rendered.image.data) {
            // PFM narrows to f32; the reload must match that exactly.
            assert_eq!(*stored, (*computed as f32) as f64);
        }
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let mut spec = common::small_scenario();
    spec.n_views = 3;
    spec.noise_sigma = 0.004;
    spec.quant_bits = Some(12);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = generate_dataset(&spec, dir_a.path()).unwrap();
    let b = generate_dataset(&spec, dir_b.path()).unwrap();
    assert_eq!(hash_file(&a.manifest_path), hash_file(&b.manifest_path));
    assert_eq!(hash_file(&a.ground_truth_path), hash_file(&b.ground_truth_path));
    assert_eq!(hash_file(&a.characteristic_path), hash_file(&b.characteristic_path));
    for (x, y) in a.image_paths.iter().zip(&b.image_paths) {
        assert_eq!(hash_file(x), hash_file(y), "{}", x.display());
    }
}

#[test]
fn gaussian_noise_statistics_match_sigma() {
    let mut spec = ScenarioSpec::default();
    spec.n_views = 9;
    spec.intrinsics.width = 400;
    spec.intrinsics.height = 300;
    spec.intrinsics.cx = 200.0;
    spec.intrinsics.cy = 150.0;
    spec.intrinsics.fx = 380.0;
    spec.intrinsics.fy = 380.0;

    let clean_dir = tempfile::tempdir().unwrap();
    let noisy_dir = tempfile::tempdir().unwrap();
    let clean = generate_dataset(&spec, clean_dir.path()).unwrap();
    spec.noise_sigma = 0.01;
    let noisy = generate_dataset(&spec, noisy_dir.path()).unwrap();
    assert_eq!(clean.max_intensity, noisy.max_intensity);
    let sigma = 0.01 * clean.max_intensity;

    let clean_data = load_dataset(&clean.manifest_path).unwrap();
    let noisy_data = load_dataset(&noisy.manifest_path).unwrap();
    let mut count = 0usize;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for (a, b) in clean_data.views.iter().zip(&noisy_data.views) {
        for (x, y) in a.image.data.iter().zip(&b.image.data) {
            let d = y - x;
            sum += d;
            sum_sq += d * d;
            count += 1;
        }
    }
    assert!(count >= 1_000_000, "need at least 1e6 pixels, got {count}");
    let mean = sum / count as f64;
    let std = (sum_sq / count as f64 - mean * mean).sqrt();
    assert!(
        (std - sigma).abs() / sigma < 0.05,
        "std {std} vs sigma {sigma}"
    );
    assert!(mean.abs() < 5.0 * sigma / (count as f64).sqrt(), "mean {mean}");
}

#[test]
fn stored_dataset_supports_self_consistent_fit() {
    let mut spec = common::small_scenario();
    spec.n_views = 12;
    let dir = tempfile::tempdir().unwrap();
    let generated = generate_dataset(&spec, dir.path()).unwrap();
    let dataset = load_dataset(&generated.manifest_path).unwrap();
    let truth = spec.light.to_model(dataset.characteristic.clone()).unwrap();

    let samples = common::collect_samples(&dataset.views, 64, 0);
    let result = calibrate(
        &dataset.views,
        &dataset.intrinsics,
        &samples,
        &truth,
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(result.status, ConvergenceStatus::Converged);
    // Residuals are bounded by the f32 storage rounding.
    let bound = (samples.len() as f64) * (generated.max_intensity * 1e-6).powi(2);
    assert!(result.final_cost < bound, "cost {} vs bound {bound}", result.final_cost);
}
