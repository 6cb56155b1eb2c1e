//! End-to-end flow: specular detection, dilation, harmonic inpainting, Lab
//! conversion, K-means, ROI selection and crop, with a JSON report.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{rgb_to_lab_image_with, LabImage};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::{crop, load_image, save_image, save_mask, BBox, BinaryMask, RgbImage8};
use crate::inpaint::{inpaint_image, inpaint_image_grayscale, SolveStats, SolverConfig};
use crate::kmeans::{assign_points, kmeans, within_cluster_ss, ClusterModel, Features, KmeansConfig, KmeansInit};
use crate::roi::{extract_roi, ClusterScore, Connectivity, RoiResult};
use crate::specular::{detect_specular, dilate_with, SpecularConfig};

pub const REPORT_SCHEMA: u32 = 1;
/// Images with more pixels than this are clustered on a subsample.
pub const SUBSAMPLE_ABOVE: usize = 512 * 512;
pub const SUBSAMPLE_SIZE: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub specular: SpecularConfig,
    pub solver: SolverConfig,
    pub kmeans: KmeansConfig,
    pub connectivity: Connectivity,
    pub crop_margin: usize,
    /// Cluster on (L, a, b) instead of (a, b).
    pub use_lightness: bool,
    pub grayscale_inpaint: bool,
    pub subsample: bool,
    pub emit_intermediates: bool,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            specular: SpecularConfig::default(),
            solver: SolverConfig::default(),
            kmeans: KmeansConfig::default(),
            connectivity: Connectivity::Eight,
            crop_margin: 10,
            use_lightness: false,
            grayscale_inpaint: false,
            subsample: true,
            emit_intermediates: false,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.specular.validate()?;
        self.solver.validate()?;
        self.kmeans.validate()?;
        if self.kmeans.k < 2 {
            return Err(Error::Config("the ROI stage needs k >= 2".into()));
        }
        Ok(())
    }

    /// Sets the execution strategy of every data-parallel stage.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.solver.exec = exec;
        self.kmeans.exec = exec;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Config,
    Specular,
    Inpaint,
    Color,
    Kmeans,
    Roi,
    Crop,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Config => "config",
            Stage::Specular => "specular",
            Stage::Inpaint => "inpaint",
            Stage::Color => "color",
            Stage::Kmeans => "kmeans",
            Stage::Roi => "roi",
            Stage::Crop => "crop",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputInfo {
    pub path: Option<String>,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecularReport {
    pub threshold: u8,
    pub se: crate::specular::StructuringElement,
    pub raw_pixels: usize,
    pub dilated_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelStats {
    pub channel: &'static str,
    #[serde(flatten)]
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InpaintReport {
    pub mode: &'static str,
    pub omega: f64,
    pub tol: f64,
    pub channels: Vec<ChannelStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmeansReport {
    pub k: usize,
    pub init: KmeansInit,
    pub seed: u64,
    pub features: &'static str,
    /// Number of points the means were fitted on.
    pub fitted_points: usize,
    pub subsampled: bool,
    pub iterations: usize,
    pub converged: bool,
    pub wcss: f64,
    pub means: Vec<Vec<f64>>,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiReport {
    pub cluster_index: usize,
    pub scores: Vec<ClusterScore>,
    pub connectivity: Connectivity,
    pub component_count: usize,
    pub component_sizes: Vec<usize>,
    pub roi_pixels: usize,
    pub tight_bbox: BBox,
    pub margin: usize,
    pub bbox: BBox,
}

/// Wall-clock milliseconds per stage. Excluded from determinism checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub specular: f64,
    pub inpaint: f64,
    pub color: f64,
    pub kmeans: f64,
    pub roi: f64,
    pub crop: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub schema: u32,
    pub input: InputInfo,
    pub specular: SpecularReport,
    pub inpaint: InpaintReport,
    pub kmeans: KmeansReport,
    pub roi: RoiReport,
    pub warnings: Vec<String>,
    pub timings_ms: Timings,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub cropped: RgbImage8,
    pub roi: RoiResult,
    pub inpainted: RgbImage8,
    pub specular_mask: BinaryMask,
    pub dilated_mask: BinaryMask,
    pub report: PipelineReport,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn lab_features(lab: &LabImage, use_lightness: bool) -> Result<Features> {
    let (a, b, l) = (lab.a.values(), lab.b.values(), lab.l.values());
    let (dim, data) = if use_lightness {
        (3, (0..a.len()).flat_map(|i| [l[i], a[i], b[i]]).collect())
    } else {
        (2, (0..a.len()).flat_map(|i| [a[i], b[i]]).collect())
    };
    Features::new(dim, data)
}

/// Fits the means (on a seeded subsample for large inputs when enabled) and
/// assigns every pixel.
fn cluster_pixels(features: &Features, cfg: &PipelineConfig) -> Result<(ClusterModel, bool)> {
    let n = features.len();
    if !(cfg.subsample && n > SUBSAMPLE_ABOVE) {
        return Ok((kmeans(features, &cfg.kmeans)?, false));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.kmeans.seed.wrapping_add(0x5eed));
    let mut picks = index::sample(&mut rng, n, SUBSAMPLE_SIZE).into_vec();
    picks.sort_unstable();
    let fit = kmeans(&features.select(&picks), &cfg.kmeans)?;
    let assignments = assign_points(features, &fit.means, cfg.kmeans.exec)?;
    let wcss = within_cluster_ss(features, &assignments, &fit.means, cfg.kmeans.exec);
    Ok((
        ClusterModel {
            assignments,
            wcss,
            ..fit
        },
        true,
    ))
}

/// Runs every stage on one image. `path` is only recorded in the report.
pub fn run_pipeline(
    image: &RgbImage8,
    cfg: &PipelineConfig,
    path: Option<&Path>,
) -> std::result::Result<PipelineOutput, PipelineError> {
    let start = Instant::now();
    cfg.validate().stage(Stage::Config)?;
    let mut timings = Timings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let specular_mask = detect_specular(image, &cfg.specular);
    let dilated_mask = dilate_with(&specular_mask, &cfg.specular.se, cfg.solver.exec);
    timings.specular = ms_since(t);

    let t = Instant::now();
    let (inpainted, channels) = if cfg.grayscale_inpaint {
        let (img, s) = inpaint_image_grayscale(image, &dilated_mask, &cfg.solver).stage(Stage::Inpaint)?;
        (img, vec![ChannelStats { channel: "gray", stats: s }])
    } else {
        let (img, [r, g, b]) = inpaint_image(image, &dilated_mask, &cfg.solver).stage(Stage::Inpaint)?;
        let channels = [("r", r), ("g", g), ("b", b)]
            .into_iter()
            .map(|(channel, stats)| ChannelStats { channel, stats })
            .collect();
        (img, channels)
    };
    for c in &channels {
        if !c.stats.converged {
            warnings.push(format!(
                "inpaint channel {} did not converge: residual {:.3e} after {} iterations",
                c.channel, c.stats.final_residual, c.stats.iterations
            ));
        }
    }
    timings.inpaint = ms_since(t);

    let t = Instant::now();
    let lab = rgb_to_lab_image_with(&inpainted, cfg.kmeans.exec);
    let features = lab_features(&lab, cfg.use_lightness).stage(Stage::Color)?;
    timings.color = ms_since(t);

    let t = Instant::now();
    let (model, subsampled) = cluster_pixels(&features, cfg).stage(Stage::Kmeans)?;
    if !model.converged {
        warnings.push(format!(
            "k-means stopped at the iteration limit ({})",
            model.iterations
        ));
    }
    let sizes = model.cluster_sizes();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(PipelineError {
            stage: Stage::Kmeans,
            source: Error::Degenerate(
                "degenerate clustering: every pixel fell into a single cluster".into(),
            ),
        });
    }
    timings.kmeans = ms_since(t);

    let t = Instant::now();
    let roi = extract_roi(&model, &lab, cfg.connectivity, cfg.crop_margin).stage(Stage::Roi)?;
    timings.roi = ms_since(t);

    let t = Instant::now();
    let cropped = crop(&inpainted, roi.bbox).stage(Stage::Crop)?;
    timings.crop = ms_since(t);
    timings.total = ms_since(start);

    let report = PipelineReport {
        schema: REPORT_SCHEMA,
        input: InputInfo {
            path: path.map(|p| p.display().to_string()),
            width: image.width(),
            height: image.height(),
        },
        specular: SpecularReport {
            threshold: cfg.specular.threshold,
            se: cfg.specular.se,
            raw_pixels: specular_mask.count(),
            dilated_pixels: dilated_mask.count(),
        },
        inpaint: InpaintReport {
            mode: if cfg.grayscale_inpaint { "grayscale" } else { "rgb" },
            omega: cfg.solver.omega,
            tol: cfg.solver.tol,
            channels,
        },
        kmeans: KmeansReport {
            k: model.k,
            init: cfg.kmeans.init,
            seed: cfg.kmeans.seed,
            features: if cfg.use_lightness { "Lab" } else { "ab" },
            fitted_points: if subsampled { SUBSAMPLE_SIZE } else { features.len() },
            subsampled,
            iterations: model.iterations,
            converged: model.converged,
            wcss: model.wcss,
            means: model.means.clone(),
            cluster_sizes: sizes,
        },
        roi: RoiReport {
            cluster_index: roi.cluster_index,
            scores: roi.scores.clone(),
            connectivity: cfg.connectivity,
            component_count: roi.component_sizes.len(),
            component_sizes: roi.component_sizes.clone(),
            roi_pixels: roi.roi_mask.count(),
            tight_bbox: roi.tight_bbox,
            margin: cfg.crop_margin,
            bbox: roi.bbox,
        },
        warnings,
        timings_ms: timings,
    };

    Ok(PipelineOutput {
        cropped,
        roi,
        inpainted,
        specular_mask,
        dilated_mask,
        report,
    })
}

/// The inpainted image with everything outside the ROI mask blacked out.
pub fn roi_overlay(inpainted: &RgbImage8, roi_mask: &BinaryMask) -> RgbImage8 {
    let mut out = inpainted.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            if !roi_mask.get(x, y) {
                out.set(x, y, [0, 0, 0]);
            }
        }
    }
    out
}

/// Writes `<stem>_report.json` and `<stem>_cropped.png` into `dir`, plus the
/// mask, inpainted and ROI images when `emit_intermediates` is set.
pub fn write_outputs(output: &PipelineOutput, dir: &Path, stem: &str, emit_intermediates: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report_path = dir.join(format!("{stem}_report.json"));
    fs::write(&report_path, output.report.to_json()).map_err(|e| Error::io(&report_path, e))?;
    save_image(&output.cropped, dir.join(format!("{stem}_cropped.png")))?;
    if emit_intermediates {
        save_mask(&output.dilated_mask, dir.join(format!("{stem}_mask.png")))?;
        save_image(&output.inpainted, dir.join(format!("{stem}_inpainted.png")))?;
        save_image(
            &roi_overlay(&output.inpainted, &output.roi.roi_mask),
            dir.join(format!("{stem}_roi.png")),
        )?;
    }
    Ok(())
}

/// Loads, processes and writes one file.
pub fn process_file(
    path: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> std::result::Result<PipelineOutput, PipelineError> {
    let image = load_image(path).stage(Stage::Load)?;
    let output = run_pipeline(&image, cfg, Some(path))?;
    write_outputs(&output, out_dir, &file_stem(path), cfg.emit_intermediates).stage(Stage::Write)?;
    Ok(output)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchItem {
    pub file: String,
    pub width: usize,
    pub height: usize,
    pub specular_pixels: usize,
    pub bbox: BBox,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchFailure {
    pub file: String,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub schema: u32,
    pub processed: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub items: Vec<BatchItem>,
    pub failures: Vec<BatchFailure>,
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path.extension().is_some_and(|e| {
            let e = e.to_string_lossy().to_ascii_lowercase();
            e == "png" || e == "ppm"
        })
}

/// Runs the pipeline on every `.png`/`.ppm` file in `input_dir`, in filename
/// order. Per-image results go to `cfg.output_dir/<stem>/`, the summary to
/// `cfg.output_dir/summary.json`. A failing image is recorded and skipped.
pub fn run_batch(input_dir: &Path, cfg: &PipelineConfig) -> Result<BatchSummary> {
    let entries = fs::read_dir(input_dir).map_err(|e| Error::io(input_dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image_file(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::io(
            input_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .png or .ppm images in directory"),
        ));
    }
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();

    let results = cfg.solver.exec.map_slice(&files, |path| {
        let stem = file_stem(path);
        process_file(path, &cfg.output_dir.join(&stem), cfg)
    });

    let mut items = Vec::new();
    let mut failures = Vec::new();
    for (name, result) in names.into_iter().zip(results) {
        match result {
            Ok(out) => items.push(BatchItem {
                file: name,
                width: out.report.input.width,
                height: out.report.input.height,
                specular_pixels: out.report.specular.raw_pixels,
                bbox: out.report.roi.bbox,
                warnings: out.report.warnings,
            }),
            Err(e) => failures.push(BatchFailure {
                file: name,
                stage: e.stage,
                error: e.source.to_string(),
            }),
        }
    }
    let summary = BatchSummary {
        schema: REPORT_SCHEMA,
        processed: items.len() + failures.len(),
        succeeded: items.len(),
        failed: failures.len(),
        items,
        failures,
    };
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary is always serializable");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
