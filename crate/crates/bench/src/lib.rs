//! Shared fixtures for the pipeline benchmarks.

use nalgebra::Vector3;

use lightcal::solver::{select_pixels, PixelSample, SamplingOptions};
use lightcal::{
    CameraIntrinsics, CameraPose, Dataset, LightCharacteristic, LightModel, LightOrientation,
    RidCurve, ScenarioSpec, ViewRecord,
};

/// Scenario scaled down for benchmarking: fewer, smaller views.
pub fn bench_scenario() -> ScenarioSpec {
    let mut spec = ScenarioSpec::default();
    spec.n_views = 4;
    spec.intrinsics.width = 128;
    spec.intrinsics.height = 96;
    spec.intrinsics.cx = 64.0;
    spec.intrinsics.cy = 48.0;
    spec.intrinsics.fx = 120.0;
    spec.intrinsics.fy = 120.0;
    spec
}

/// In-memory dataset rendered from the benchmark scenario.
pub fn bench_dataset() -> Dataset {
    let spec = bench_scenario();
    let light = spec.ground_truth_light().expect("valid scenario");
    let poses = lightcal::synth::sample_poses(&spec).expect("valid scenario");
    let views = poses
        .into_iter()
        .map(|pose| {
            let rendered = lightcal::photometry::render_image(&spec.intrinsics, &pose, &light);
            ViewRecord { pose, image: rendered.image, exposure: 1.0 }
        })
        .collect();
    Dataset {
        intrinsics: spec.intrinsics.clone(),
        characteristic: light.characteristic.clone(),
        views,
    }
}

pub fn bench_samples(dataset: &Dataset, per_view: usize) -> Vec<PixelSample> {
    let opts = SamplingOptions { pixels_per_image: per_view, ..Default::default() };
    dataset
        .views
        .iter()
        .enumerate()
        .flat_map(|(i, view)| select_pixels(view, i, &opts).expect("lit view"))
        .collect()
}

pub fn bench_light() -> LightModel {
    LightModel::new(
        Vector3::new(0.22, -0.10, 0.04),
        LightOrientation::new(4f64.to_radians(), -7f64.to_radians(), 0.0),
        LightCharacteristic::Rid(RidCurve::isotropic()),
        1.6e5,
    )
    .expect("valid light")
}

pub fn bench_pose() -> CameraPose {
    CameraPose::look_at(
        Vector3::new(0.3, -0.2, 1.8),
        Vector3::new(0.0, 0.05, 0.0),
        0.25,
    )
    .expect("valid pose")
}

pub fn bench_intrinsics() -> CameraIntrinsics {
    bench_scenario().intrinsics
}
