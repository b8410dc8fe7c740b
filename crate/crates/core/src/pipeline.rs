//! End-to-end mask generation and artifact emission.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::candidate::{propose_with, select_best, CandidateSet};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::importance::{estimate_importance, HeatmapLegend, ImportanceEstimate};
use crate::io;
use crate::judge::{Judge, JudgeBreakdown};
use crate::mask::{HoleMask, KeepMask};
use crate::sampler::sample_batch;
use crate::scalar::Scalar;

pub const IMPORTANCE_GRID: &str = "importance.bin";
pub const IMPORTANCE_HEATMAP: &str = "importance.png";
pub const IMPORTANCE_LEGEND: &str = "importance_legend.json";
pub const CANDIDATE_DIR: &str = "candidates";
pub const SCORE_TABLE: &str = "candidates/scores.jsonl";
pub const AURA_MASK: &str = "aura_mask.pgm";
pub const COMPLETED: &str = "completed.png";
pub const REPORT: &str = "report.json";
pub const RESOLVED_CONFIG: &str = "config.json";

pub fn build_judge<T: Scalar>(image: &Image<T>, target: &HoleMask, cfg: &PipelineConfig) -> Result<Judge<T>> {
    Judge::new(
        image.clone(),
        target.clone(),
        cfg.inpainter.build()?,
        cfg.detector.build()?,
        cfg.metric.build()?,
        cfg.weights(),
    )
}

fn check_inputs<T: Scalar>(image: &Image<T>, target: &HoleMask, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    target.ensure_dims(image.dims())?;
    if target.area() == 0 {
        return Err(Error::EmptyTarget);
    }
    Ok(())
}

/// Importance estimate only, on the configured worker pool.
pub fn importance<T: Scalar>(
    image: &Image<T>,
    target: &HoleMask,
    cfg: &PipelineConfig,
) -> Result<ImportanceEstimate<T>> {
    check_inputs(image, target, cfg)?;
    cfg.with_pool(|| {
        let judge = build_judge(image, target, cfg)?;
        let batch = sample_batch(target, &cfg.sampler)?;
        estimate_importance(&judge, &batch)
    })?
}

/// Everything one run produces.
#[derive(Clone, Debug)]
pub struct AuraRun<T> {
    pub estimate: ImportanceEstimate<T>,
    pub candidates: CandidateSet<T>,
    /// Completion under the selected mask.
    pub completed: Image<T>,
}

impl<T: Scalar> AuraRun<T> {
    pub fn mask(&self) -> &HoleMask {
        &self.candidates.selected().mask
    }
}

/// Sampling, importance estimation, candidate proposal and selection, on a
/// dedicated pool of `cfg.workers` threads.
pub fn run<T: Scalar>(image: &Image<T>, target: &HoleMask, cfg: &PipelineConfig) -> Result<AuraRun<T>> {
    check_inputs(image, target, cfg)?;
    cfg.with_pool(|| run_in_current_pool(image, target, cfg))?
}

/// Same as [`run`] but uses whichever rayon pool is current.
pub fn run_in_current_pool<T: Scalar>(image: &Image<T>, target: &HoleMask, cfg: &PipelineConfig) -> Result<AuraRun<T>> {
    check_inputs(image, target, cfg)?;
    let judge = build_judge(image, target, cfg)?;
    let batch = sample_batch(target, &cfg.sampler)?;
    log::info!(
        "sampled {} masks (seed {}) for a {}x{} image",
        batch.len(),
        batch.seed,
        image.height(),
        image.width()
    );
    let estimate = estimate_importance(&judge, &batch)?;
    let proposals = propose_with(&estimate.map, target, cfg.p_max, cfg.candidate_rule)?;
    let candidates = select_best(&judge, target, proposals)?;
    let completed = judge.complete(&candidates.selected().mask.complement())?;
    log::info!(
        "selected P={} ({} px, total {})",
        candidates.selected().percentile,
        candidates.selected().mask.area(),
        candidates.selected().score.total
    );
    Ok(AuraRun {
        estimate,
        candidates,
        completed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateSummary {
    pub percentile: u32,
    pub area: usize,
    pub total: f64,
    pub contains_target: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerateReport {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub target_area: usize,
    pub selected_percentile: u32,
    pub selected_area: usize,
    pub selected_contains_target: bool,
    pub selected_score: JudgeBreakdown<f64>,
    pub candidates: Vec<CandidateSummary>,
    /// Mean over pixels of the squared standard error of the importance
    /// estimate; shrinks roughly as `1/n_samples`.
    pub mean_estimator_variance: Option<f64>,
    pub uncovered_pixels: usize,
    pub importance_legend: HeatmapLegend,
    pub artifacts: Vec<PathBuf>,
}

fn to_f64<T: Scalar>(b: &JudgeBreakdown<T>) -> JudgeBreakdown<f64> {
    JudgeBreakdown {
        background: b.background.as_f64(),
        afterimage: b.afterimage.as_f64(),
        detect: b.detect.as_f64(),
        total: b.total.as_f64(),
        lambda_a: b.lambda_a.as_f64(),
        lambda_d: b.lambda_d.as_f64(),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the importance grid, its heatmap and legend.
pub fn write_importance<T: Scalar>(estimate: &ImportanceEstimate<T>, out: &Path) -> Result<HeatmapLegend> {
    create_dir(out)?;
    estimate.map.write_binary(out.join(IMPORTANCE_GRID))?;
    let legend = estimate.map.save_heatmap(out.join(IMPORTANCE_HEATMAP))?;
    write_json(&out.join(IMPORTANCE_LEGEND), &legend)?;
    Ok(legend)
}

pub fn write_config(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let path = out.join(RESOLVED_CONFIG);
    std::fs::write(&path, cfg.to_json() + "\n").map_err(|e| Error::io(&path, e))
}

/// Writes every artifact of `run` under `out` and returns the report.
pub fn write_artifacts<T: Scalar + Serialize>(
    run: &AuraRun<T>,
    target: &HoleMask,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<GenerateReport> {
    create_dir(out)?;
    write_config(cfg, out)?;
    let legend = write_importance(&run.estimate, out)?;
    run.candidates.write_dir(out.join(CANDIDATE_DIR))?;
    io::save_hole_mask(run.mask(), out.join(AURA_MASK))?;
    io::save_image(&run.completed, out.join(COMPLETED))?;
    let sel = run.candidates.selected();
    let report = GenerateReport {
        height: target.height(),
        width: target.width(),
        seed: cfg.seed(),
        n_samples: cfg.sampler.n_samples,
        target_area: target.area(),
        selected_percentile: sel.percentile,
        selected_area: sel.mask.area(),
        selected_contains_target: sel.contains_target,
        selected_score: to_f64(&sel.score),
        candidates: run
            .candidates
            .candidates
            .iter()
            .map(|c| CandidateSummary {
                percentile: c.percentile,
                area: c.mask.area(),
                total: c.score.total.as_f64(),
                contains_target: c.contains_target,
            })
            .collect(),
        mean_estimator_variance: run.estimate.mean_estimator_variance(),
        uncovered_pixels: run.estimate.map.coverage.iter().filter(|&&c| c == 0).count(),
        importance_legend: legend,
        artifacts: [
            IMPORTANCE_GRID,
            IMPORTANCE_HEATMAP,
            SCORE_TABLE,
            AURA_MASK,
            COMPLETED,
            REPORT,
        ]
        .iter()
        .map(PathBuf::from)
        .collect(),
    };
    write_json(&out.join(REPORT), &report)?;
    Ok(report)
}

/// Loads inputs, runs the pipeline and writes all artifacts.
pub fn generate(image_path: &Path, mask_path: &Path, cfg: &PipelineConfig, out: &Path) -> Result<GenerateReport> {
    let image: Image<f64> = io::load_image(image_path)?;
    let target = io::load_hole_mask(mask_path)?;
    let run = run(&image, &target, cfg)?;
    write_artifacts(&run, &target, cfg, out)
}

/// Scores one keep-mask (default: the bare target) and writes `judge.json`.
pub fn judge_only(
    image_path: &Path,
    mask_path: &Path,
    keep_path: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<JudgeBreakdown<f64>> {
    cfg.validate()?;
    let image: Image<f64> = io::load_image(image_path)?;
    let target = io::load_hole_mask(mask_path)?;
    target.ensure_dims(image.dims())?;
    let keep: KeepMask = match keep_path {
        Some(p) => io::load_keep_mask(p)?,
        None => target.complement(),
    };
    keep.ensure_dims(image.dims())?;
    let score = cfg.with_pool(|| build_judge(&image, &target, cfg)?.score(&keep))??;
    create_dir(out)?;
    write_config(cfg, out)?;
    write_json(&out.join("judge.json"), &score)?;
    Ok(score)
}
