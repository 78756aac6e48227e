//! Shared fixture helpers for the integration tests.

use lightcal::photometry::render_image;
use lightcal::solver::{select_pixels, PixelSample, SamplingOptions};
use lightcal::synth::sample_poses;
use lightcal::{LightModel, ScenarioSpec, ViewRecord};

/// Renders the scenario's views in memory (f64, no file round trip) under
/// its ground-truth light.
#[allow(dead_code)]
pub fn render_views(spec: &ScenarioSpec) -> (Vec<ViewRecord>, LightModel) {
    let light = spec.ground_truth_light().expect("valid scenario");
    let poses = sample_poses(spec).expect("valid scenario");
    let views = poses
        .into_iter()
        .map(|pose| {
            let rendered = render_image(&spec.intrinsics, &pose, &light);
            ViewRecord { pose, image: rendered.image, exposure: 1.0 }
        })
        .collect();
    (views, light)
}

pub fn collect_samples(views: &[ViewRecord], per_view: usize, seed: u64) -> Vec<PixelSample> {
    let opts = SamplingOptions { pixels_per_image: per_view, seed, ..Default::default() };
    views
        .iter()
        .enumerate()
        .flat_map(|(index, view)| select_pixels(view, index, &opts).expect("lit view"))
        .collect()
}

/// Scenario small enough for fast solver tests.
pub fn small_scenario() -> ScenarioSpec {
    let mut spec = ScenarioSpec::default();
    spec.n_views = 6;
    spec.intrinsics.fx = 150.0;
    spec.intrinsics.fy = 150.0;
    spec.intrinsics.cx = 80.0;
    spec.intrinsics.cy = 60.0;
    spec.intrinsics.width = 160;
    spec.intrinsics.height = 120;
    spec
}
