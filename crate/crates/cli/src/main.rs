//! `lightcal` — calibrate the pose and intensity scale of a camera-mounted
//! point light from multi-view images of a flat reference plane.
//!
//! Subcommands: `synth` (generate a synthetic dataset with known ground
//! truth), `calibrate` (estimate the light from a dataset), `render`
//! (forward-render one view under a given light) and `report` (calibrate
//! over view subsets and tabulate estimate consistency).
//!
//! Exit codes: 0 on success, 1 when the solver does not converge (or the
//! dataset is degenerate), 2 on input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use itertools::Itertools;
use rayon::prelude::*;

use lightcal::dataset::{
    load_dataset, load_light, load_manifest, save_report, LightFile, ResultReport,
    SubsetSizeStats, REPORT_VERSION,
};
use lightcal::photometry::{render_image, render_pixel};
use lightcal::raster::{write_pfm, ImageBuffer};
use lightcal::solver::{
    calibrate, calibrate_with_poses, select_pixels, CalibrationResult, ConvergenceStatus,
    PixelSample, SamplingOptions, SolverOptions,
};
use lightcal::synth::{generate_dataset, ScenarioSpec};
use lightcal::{CameraPose, Error, LightModel, ViewRecord};

#[derive(Parser)]
#[command(name = "lightcal", version, about = "Camera-mounted light pose calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario file
    Synth(SynthArgs),
    /// Estimate light pose and scale from a dataset
    Calibrate(CalibrateArgs),
    /// Forward-render one view under a given light
    Render(RenderArgs),
    /// Calibrate over view subsets and tabulate consistency
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON; omitted = built-in default scenario
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory for images, manifest and ground-truth sidecar
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Terminate when an accepted step decreases the cost by less than
    /// this relative amount
    #[arg(long, default_value_t = 1e-10)]
    cost_tolerance: f64,
    /// Terminate when the gradient infinity-norm drops below this
    #[arg(long, default_value_t = 1e-12)]
    gradient_tolerance: f64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iterations: self.max_iterations,
            cost_tolerance: self.cost_tolerance,
            gradient_tolerance: self.gradient_tolerance,
            ..Default::default()
        }
    }
}

#[derive(Args, Clone)]
struct SamplingArgs {
    #[arg(long, default_value_t = 100)]
    pixels_per_image: usize,
    /// Pixels at or above this intensity are skipped as saturated
    #[arg(long, default_value_t = f64::INFINITY)]
    saturation_threshold: f64,
    /// Pixels at or below this intensity are skipped as noise
    #[arg(long, default_value_t = 0.0)]
    floor_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplingArgs {
    fn options(&self) -> SamplingOptions {
        SamplingOptions {
            pixels_per_image: self.pixels_per_image,
            saturation_threshold: self.saturation_threshold,
            floor_threshold: self.floor_threshold,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dataset manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
    /// Initial light guess (JSON light file)
    #[arg(long)]
    init: PathBuf,
    /// Write the result report to this path (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use only the first N manifest views
    #[arg(long)]
    views: Option<usize>,
    /// Write per-view measured|rendered comparison images here
    #[arg(long)]
    render_comparison: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Light to render (JSON light file)
    #[arg(long)]
    light: PathBuf,
    /// View index into the manifest
    #[arg(long)]
    view: usize,
    /// Output PFM path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    init: PathBuf,
    /// Report output path (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Smallest subset size
    #[arg(long, default_value_t = 8)]
    subset_min: usize,
    /// Largest subset size; omitted = all views
    #[arg(long)]
    subset_max: Option<usize>,
    /// Cap on subsets per size, 0 = exhaustive
    #[arg(long, default_value_t = 0)]
    max_subsets: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
}

enum AppError {
    /// Bad inputs: files, formats, argument combinations. Exit code 2.
    Input(String),
    /// The solver could not produce a trustworthy estimate. Exit code 1.
    Solver(String),
}

impl From<Error> for AppError {
    fn from(err: Error) -> Self {
        match err {
            Error::DegenerateDataset(_) => AppError::Solver(err.to_string()),
            _ => AppError::Input(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Render(args) => cmd_render(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(code) => code,
        Err(AppError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, AppError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ScenarioSpec>(&text)
                .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let generated = generate_dataset(&spec, &args.out)?;
    println!(
        "wrote {} views to {} (max intensity {:.6})",
        spec.n_views,
        args.out.display(),
        generated.max_intensity
    );
    println!("manifest: {}", generated.manifest_path.display());
    println!("ground truth: {}", generated.ground_truth_path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_init(path: &Path, dataset_characteristic: &lightcal::LightCharacteristic) -> Result<LightModel, AppError> {
    let file = load_light(path)?;
    Ok(file.to_model(dataset_characteristic.clone())?)
}

fn select_all_pixels(
    views: &[ViewRecord],
    opts: &SamplingOptions,
) -> Result<Vec<Vec<PixelSample>>, AppError> {
    views
        .iter()
        .enumerate()
        .map(|(index, view)| {
            select_pixels(view, index, opts)
                .map_err(|e| AppError::Input(format!("view {index}: {e}")))
        })
        .collect()
}

fn warn_if_mostly_dark(
    samples: &[PixelSample],
    views: &[ViewRecord],
    intr: &lightcal::CameraIntrinsics,
    init: &LightModel,
) {
    let zeros = samples
        .iter()
        .filter(|s| {
            matches!(
                render_pixel(s.pixel, intr, &views[s.view_index].pose, init),
                Ok(v) if v == 0.0
            )
        })
        .count();
    if zeros * 2 > samples.len() {
        eprintln!(
            "warning: {zeros} of {} sampled pixels render to zero at the initial guess; \
             the guess may point the light cone away from the sampled area",
            samples.len()
        );
    }
}

fn print_summary(result: &CalibrationResult) {
    let light = LightFile::from_model(&result.light);
    println!(
        "status: {}  iterations: {}  final cost: {:.6e}",
        match result.status {
            ConvergenceStatus::Converged => "converged",
            ConvergenceStatus::MaxIterations => "max-iterations",
            ConvergenceStatus::Stalled => "stalled",
        },
        result.iterations,
        result.final_cost
    );
    println!(
        "light position (camera frame, m): [{:+.5}, {:+.5}, {:+.5}]",
        light.position[0], light.position[1], light.position[2]
    );
    println!(
        "light orientation (deg): roll {:+.4}  pitch {:+.4}{}",
        light.roll_deg,
        light.pitch_deg,
        light
            .yaw_deg
            .map(|y| format!("  yaw {y:+.4}"))
            .unwrap_or_default()
    );
    println!("scale: {:.6e}", light.scale);
    let rms_line = result
        .per_view_rms
        .iter()
        .map(|r| format!("{r:.3e}"))
        .collect::<Vec<_>>()
        .join(" ");
    println!("per-view rms: {rms_line}");
}

fn build_report(result: &CalibrationResult, views_used: Option<Vec<usize>>) -> ResultReport {
    ResultReport {
        version: REPORT_VERSION,
        light: LightFile::from_model(&result.light),
        status: result.status,
        final_cost: result.final_cost,
        iterations: result.iterations,
        per_view_rms: result.per_view_rms.clone(),
        cost_trace: result.cost_trace.clone(),
        views_used,
        subset_consistency: None,
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode, AppError> {
    let dataset = load_dataset(&args.manifest)?;
    let mut views = dataset.views;
    let views_used = match args.views {
        Some(n) => {
            if n < 2 || n > views.len() {
                return Err(AppError::Input(format!(
                    "--views {n} out of range (dataset has {} views)",
                    views.len()
                )));
            }
            views.truncate(n);
            Some((0..n).collect())
        }
        None => None,
    };
    let init = load_init(&args.init, &dataset.characteristic)?;
    let sampling = args.sampling.options();
    let samples: Vec<PixelSample> = select_all_pixels(&views, &sampling)?
        .into_iter()
        .flatten()
        .collect();
    warn_if_mostly_dark(&samples, &views, &dataset.intrinsics, &init);

    let result = calibrate(&views, &dataset.intrinsics, &samples, &init, &args.solver.options())
        .map_err(AppError::from)?;
    print_summary(&result);

    if let Some(out) = &args.out {
        let report = build_report(&result, views_used);
        save_report(&report, out)?;
        println!("report: {}", out.display());
    }
    if let Some(dir) = &args.render_comparison {
        write_comparisons(dir, &views, &dataset.intrinsics, &result.light)?;
        println!("comparison images: {}", dir.display());
    }
    Ok(if result.status == ConvergenceStatus::Converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Measured and rendered images side by side in one PFM per view.
fn write_comparisons(
    dir: &Path,
    views: &[ViewRecord],
    intr: &lightcal::CameraIntrinsics,
    light: &LightModel,
) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::Input(format!("{}: {e}", dir.display())))?;
    for (index, view) in views.iter().enumerate() {
        let rendered = render_image(intr, &view.pose, light);
        let (w, h) = (view.image.width as usize, view.image.height as usize);
        let mut combined = ImageBuffer::new(2 * view.image.width, view.image.height);
        for row in 0..h {
            for col in 0..w {
                let measured = view.image.data[row * w + col];
                combined.data[row * 2 * w + col] = measured;
                combined.data[row * 2 * w + w + col] = rendered.image.data[row * w + col];
            }
        }
        let path = dir.join(format!("compare_view_{index:03}.pfm"));
        write_pfm(&combined, &path)?;
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<ExitCode, AppError> {
    let manifest = load_manifest(&args.manifest)?;
    let dir = args.manifest.parent().unwrap_or_else(|| Path::new("."));
    let characteristic = lightcal::dataset::load_characteristic(dir, &manifest.characteristic)?;
    if args.view >= manifest.views.len() {
        return Err(AppError::Input(format!(
            "view {} out of range (manifest has {} views)",
            args.view,
            manifest.views.len()
        )));
    }
    let pose = manifest.views[args.view].pose()?;
    let light = load_light(&args.light)?.to_model(characteristic)?;
    let rendered = render_image(&manifest.intrinsics, &pose, &light);
    write_pfm(&rendered.image, &args.out)?;
    let masked = rendered.mask.iter().filter(|m| !**m).count();
    if masked > 0 {
        eprintln!("warning: {masked} pixels could not be rendered and were written as 0");
    }
    println!("rendered view {} to {}", args.view, args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode, AppError> {
    let dataset = load_dataset(&args.manifest)?;
    let n_views = dataset.views.len();
    let subset_max = args.subset_max.unwrap_or(n_views);
    if args.subset_min < 2 || args.subset_min > subset_max || subset_max > n_views {
        return Err(AppError::Input(format!(
            "subset sizes {}..={subset_max} invalid for a {n_views}-view dataset",
            args.subset_min
        )));
    }
    let init = load_init(&args.init, &dataset.characteristic)?;
    let sampling = args.sampling.options();
    let per_view_samples = select_all_pixels(&dataset.views, &sampling)?;
    let poses: Vec<CameraPose> = dataset.views.iter().map(|v| v.pose.clone()).collect();
    let solver_opts = args.solver.options();

    let mut consistency = Vec::new();
    for size in args.subset_min..=subset_max {
        let mut subsets: Vec<Vec<usize>> = (0..n_views).combinations(size).collect();
        if args.max_subsets > 0 && subsets.len() > args.max_subsets {
            subsets.truncate(args.max_subsets);
        }
        let results: Vec<Option<CalibrationResult>> = subsets
            .par_iter()
            .map(|subset| {
                let sub_poses: Vec<CameraPose> =
                    subset.iter().map(|&i| poses[i].clone()).collect();
                let sub_samples: Vec<PixelSample> = subset
                    .iter()
                    .enumerate()
                    .flat_map(|(local, &original)| {
                        per_view_samples[original].iter().map(move |s| PixelSample {
                            view_index: local,
                            ..*s
                        })
                    })
                    .collect();
                calibrate_with_poses(
                    &sub_poses,
                    &dataset.intrinsics,
                    &sub_samples,
                    &init,
                    &solver_opts,
                )
                .ok()
                .filter(|r| r.status == ConvergenceStatus::Converged)
            })
            .collect();
        let converged: Vec<&CalibrationResult> = results.iter().flatten().collect();
        let failed = results.len() - converged.len();
        if failed > 0 {
            eprintln!("warning: {failed} of {} size-{size} subsets did not converge", results.len());
        }
        if converged.is_empty() {
            continue;
        }
        let pitches: Vec<f64> = converged
            .iter()
            .map(|r| r.light.orientation.pitch.to_degrees())
            .collect();
        let rolls: Vec<f64> = converged
            .iter()
            .map(|r| r.light.orientation.roll.to_degrees())
            .collect();
        let scales: Vec<f64> = converged.iter().map(|r| r.light.scale).collect();
        let mx = mean(&converged.iter().map(|r| r.light.position.x).collect::<Vec<_>>());
        let my = mean(&converged.iter().map(|r| r.light.position.y).collect::<Vec<_>>());
        let mz = mean(&converged.iter().map(|r| r.light.position.z).collect::<Vec<_>>());
        let position_rms: f64 = if converged.len() < 2 {
            0.0
        } else {
            (converged
                .iter()
                .map(|r| {
                    let dx = r.light.position.x - mx;
                    let dy = r.light.position.y - my;
                    let dz = r.light.position.z - mz;
                    dx * dx + dy * dy + dz * dz
                })
                .sum::<f64>()
                / (converged.len() - 1) as f64)
                .sqrt()
        };
        consistency.push(SubsetSizeStats {
            views: size,
            subsets: converged.len(),
            pitch_mean_deg: mean(&pitches),
            pitch_std_deg: sample_std(&pitches),
            roll_std_deg: sample_std(&rolls),
            position_std_m: position_rms,
            scale_rel_std: sample_std(&scales) / mean(&scales),
        });
    }

    // Headline estimate from the full view set.
    let all_samples: Vec<PixelSample> = per_view_samples.into_iter().flatten().collect();
    let full = calibrate(&dataset.views, &dataset.intrinsics, &all_samples, &init, &solver_opts)
        .map_err(AppError::from)?;
    print_summary(&full);

    println!("subset consistency:");
    println!("  views  subsets  pitch_mean_deg  pitch_std_deg  roll_std_deg  position_std_m  scale_rel_std");
    for row in &consistency {
        println!(
            "  {:>5}  {:>7}  {:>14.6}  {:>13.6}  {:>12.6}  {:>14.6e}  {:>13.6e}",
            row.views,
            row.subsets,
            row.pitch_mean_deg,
            row.pitch_std_deg,
            row.roll_std_deg,
            row.position_std_m,
            row.scale_rel_std
        );
    }

    let mut report = build_report(&full, None);
    report.subset_consistency = Some(consistency);
    save_report(&report, &args.out)?;
    println!("report: {}", args.out.display());

    Ok(if full.status == ConvergenceStatus::Converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
