//! Synthetic removal scenes, the dilation baseline sweep and AURA runs
//! scored against ground truth.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::inpaint::InpainterSpec;
use crate::io;
use crate::judge::{Judge, JudgeBreakdown, MetricSpec};
use crate::mask::HoleMask;
use crate::metrics;
use crate::pipeline::{self, AuraRun};
use crate::sampler::SamplerConfig;

/// Kernel sizes of the default dilation sweep.
pub const DEFAULT_KERNELS: [usize; 5] = [0, 10, 20, 30, 40];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    /// Low-frequency sinusoidal shading.
    Smooth,
    /// Smooth shading plus box-filtered noise.
    Textured,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub background: Background,
    /// Object rectangle `(top, left, height, width)`.
    pub object: (usize, usize, usize, usize),
    /// Erosion radius separating the provided segmentation from the object.
    pub halo: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    /// Background only.
    pub ground_truth: Image<f64>,
    /// Background with the object pasted in.
    pub composited: Image<f64>,
    pub true_object_mask: HoleMask,
    /// Under-covering segmentation handed to the pipeline.
    pub provided_seg_mask: HoleMask,
}

impl SyntheticScene {
    /// Object pixels the segmentation misses.
    pub fn ring(&self) -> HoleMask {
        let bits = self
            .true_object_mask
            .bits()
            .iter()
            .zip(self.provided_seg_mask.bits())
            .map(|(&t, &s)| t && !s)
            .collect();
        HoleMask::from_bits(self.spec.height, self.spec.width, bits).expect("same dims")
    }
}

fn smooth_background(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<[f64; 3]> {
    let tau = std::f64::consts::TAU;
    let params: Vec<[f64; 6]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(0.35..0.6),
                rng.gen_range(0.06..0.14),
                rng.gen_range(0.4..1.2),
                rng.gen_range(0.4..1.2),
                rng.gen_range(0.0..tau),
                rng.gen_range(0.0..tau),
            ]
        })
        .collect();
    (0..h * w)
        .map(|p| {
            let (u, v) = ((p % w) as f64 / w as f64, (p / w) as f64 / h as f64);
            let mut px = [0.0; 3];
            for (c, [base, amp, fx, fy, px0, py0]) in params.iter().enumerate() {
                px[c] = base + amp * (tau * fx * u + px0).sin() * (tau * fy * v + py0).cos();
            }
            px
        })
        .collect()
}

/// Separable box blur with clamped borders.
fn box_blur(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if horizontal { (x, w) } else { (y, h) };
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(len - 1);
                let sum: f64 = (lo..=hi)
                    .map(|i| if horizontal { src[y * w + i] } else { src[i * w + x] })
                    .sum();
                out[y * w + x] = sum / (hi - lo + 1) as f64;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

fn texture(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    let noise: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let blurred = box_blur(&noise, h, w, 1);
    let peak = blurred.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    blurred.iter().map(|v| v / peak).collect()
}

/// Builds the scene for `spec`; identical specs give identical scenes.
pub fn make_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let (h, w) = (spec.height, spec.width);
    let (top, left, oh, ow) = spec.object;
    if oh == 0 || ow == 0 {
        return Err(Error::Precondition("object must be non-empty".into()));
    }
    if top + oh > h || left + ow > w {
        return Err(Error::Precondition(format!(
            "object {oh}x{ow} at ({top}, {left}) does not fit a {h}x{w} image"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut bg = smooth_background(&mut rng, h, w);
    if spec.background == Background::Textured {
        let t = texture(&mut rng, h, w);
        for (px, v) in bg.iter_mut().zip(&t) {
            for c in px.iter_mut() {
                *c += 0.12 * v;
            }
        }
    }
    let true_mask = HoleMask::from_fn(h, w, |y, x| (top..top + oh).contains(&y) && (left..left + ow).contains(&x));
    // reddish stripes with per-pixel grain
    let period = rng.gen_range(3..6);
    let grain: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-0.05..0.05)).collect();
    let object_px = |y: usize, x: usize| -> [f64; 3] {
        let g = grain[y * w + x];
        if ((y - top) + (x - left)) / period % 2 == 0 {
            [0.92 + g, 0.12 + g, 0.1 + g]
        } else {
            [0.75 + g, 0.55 + g, 0.05 + g]
        }
    };
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let ground_truth = Image::from_fn(h, w, 3, |y, x, c| clamp(bg[y * w + x][c]))?;
    let composited = Image::from_fn(h, w, 3, |y, x, c| {
        if true_mask.at(y, x) {
            clamp(object_px(y, x)[c])
        } else {
            clamp(bg[y * w + x][c])
        }
    })?;
    let seg = true_mask.erode(spec.halo);
    if seg.area() == 0 {
        return Err(Error::Precondition(format!(
            "halo {} erases the whole {oh}x{ow} object",
            spec.halo
        )));
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        ground_truth,
        composited,
        true_object_mask: true_mask,
        provided_seg_mask: seg,
    })
}

fn scene_spec(name: String, background: Background, halo: usize, seed: u64) -> SceneSpec {
    let (h, w) = (64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9e);
    let oh = rng.gen_range(16..=22);
    let ow = rng.gen_range(16..=22);
    let top = rng.gen_range(12..=h - 12 - oh);
    let left = rng.gen_range(12..=w - 12 - ow);
    SceneSpec {
        name,
        height: h,
        width: w,
        background,
        object: (top, left, oh, ow),
        halo,
        seed,
    }
}

/// The ten under-covering scenes (halo 1, 2 or 4) on 64x64 canvases.
pub fn suite() -> Vec<SceneSpec> {
    const HALOS: [usize; 3] = [1, 2, 4];
    (0..10)
        .map(|i| {
            let bg = if i % 2 == 0 { Background::Smooth } else { Background::Textured };
            let halo = HALOS[i % 3];
            let tag = if bg == Background::Smooth { "smooth" } else { "textured" };
            scene_spec(format!("s{i:02}-{tag}-halo{halo}"), bg, halo, 1000 + i as u64)
        })
        .collect()
}

/// Scenes whose segmentation is exact (halo 0).
pub fn exact_suite() -> Vec<SceneSpec> {
    (0..4)
        .map(|i| {
            let bg = if i % 2 == 0 { Background::Smooth } else { Background::Textured };
            let tag = if bg == Background::Smooth { "smooth" } else { "textured" };
            scene_spec(format!("e{i:02}-{tag}-halo0"), bg, 0, 2000 + i as u64)
        })
        .collect()
}

/// Pipeline settings for the 64x64 fixtures: mask radii scaled to the
/// canvas and `lambda_a` set so the afterimage and background terms are of
/// comparable size under the patch-stats metric.
pub fn suite_config() -> PipelineConfig {
    PipelineConfig {
        sampler: SamplerConfig {
            radius_min: 3,
            radius_max: 10,
            ..SamplerConfig::default()
        },
        inpainter: InpainterSpec::default(),
        metric: MetricSpec::default(),
        lambda_a: SUITE_LAMBDA_A,
        ..PipelineConfig::default()
    }
}

pub const SUITE_LAMBDA_A: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub scene: String,
    /// `kernel-K`, `true-mask` or `aura`.
    pub mask: String,
    /// Sampling seed for AURA rows.
    pub seed: Option<u64>,
    pub psnr: f64,
    pub ssim: f64,
    pub l2_energy: f64,
    /// Squared error against ground truth on the object pixels the
    /// segmentation misses.
    pub ring_energy: f64,
    pub background: f64,
    pub afterimage: f64,
    pub detect: f64,
    pub total: f64,
    pub hole_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RemovalReport {
    pub rows: Vec<ReportRow>,
}

impl RemovalReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let fail = |e: csv::Error| Error::Format {
            what: "csv report",
            reason: format!("{}: {e}", path.display()),
        };
        let mut w = csv::Writer::from_path(path).map_err(fail)?;
        for row in &self.rows {
            w.serialize(row).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<24} {:<10} {:>6} {:>8} {:>7} {:>10} {:>10} {:>11} {:>11} {:>11} {:>6}\n",
            "scene", "mask", "seed", "psnr", "ssim", "l2", "ring", "background", "afterimage", "total", "hole%"
        );
        for r in &self.rows {
            let seed = r.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<24} {:<10} {:>6} {:>8.3} {:>7.4} {:>10.4} {:>10.4} {:>11.6} {:>11.6} {:>11.6} {:>6.2}",
                r.scene,
                r.mask,
                seed,
                r.psnr,
                r.ssim,
                r.l2_energy,
                r.ring_energy,
                r.background,
                r.afterimage,
                r.total,
                100.0 * r.hole_fraction
            );
        }
        s
    }
}

fn row(
    scene: &SyntheticScene,
    mask: String,
    seed: Option<u64>,
    hole: &HoleMask,
    completed: &Image<f64>,
    score: &JudgeBreakdown<f64>,
) -> Result<ReportRow> {
    let gt = &scene.ground_truth;
    Ok(ReportRow {
        scene: scene.spec.name.clone(),
        mask,
        seed,
        psnr: metrics::psnr(completed, gt)?,
        ssim: metrics::ssim(completed, gt)?,
        l2_energy: metrics::l2_energy(completed, gt)?,
        ring_energy: metrics::region_energy(completed, gt, &scene.ring())?,
        background: score.background,
        afterimage: score.afterimage,
        detect: score.detect,
        total: score.total,
        hole_fraction: hole.area() as f64 / hole.pixel_count() as f64,
    })
}

fn scene_judge(scene: &SyntheticScene, cfg: &PipelineConfig) -> Result<Judge<f64>> {
    pipeline::build_judge(&scene.composited, &scene.provided_seg_mask, cfg)
}

/// Scores a fixed hole mask on `scene`.
pub fn evaluate_mask(
    scene: &SyntheticScene,
    judge: &Judge<f64>,
    name: String,
    hole: &HoleMask,
) -> Result<ReportRow> {
    let keep = hole.complement();
    let completed = judge.complete(&keep)?;
    let score = judge.score_completed(&completed)?;
    row(scene, name, None, hole, &completed, &score)
}

/// One row per kernel size (segmentation dilated by that kernel), then a
/// `true-mask` row.
pub fn baseline_sweep(scene: &SyntheticScene, kernels: &[usize], cfg: &PipelineConfig) -> Result<RemovalReport> {
    let judge = scene_judge(scene, cfg)?;
    let mut rows = kernels
        .par_iter()
        .map(|&k| {
            let hole = scene.provided_seg_mask.dilate(k);
            evaluate_mask(scene, &judge, format!("kernel-{k}"), &hole)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.push(evaluate_mask(
        scene,
        &judge,
        "true-mask".into(),
        &scene.true_object_mask,
    )?);
    Ok(RemovalReport { rows })
}

/// Runs the full pipeline on `scene` using the current rayon pool, and
/// writes the artifacts under `out` when given.
pub fn run_aura(
    scene: &SyntheticScene,
    cfg: &PipelineConfig,
    out: Option<&Path>,
) -> Result<(ReportRow, AuraRun<f64>)> {
    let run = pipeline::run_in_current_pool(&scene.composited, &scene.provided_seg_mask, cfg)?;
    let sel = run.candidates.selected();
    let r = row(scene, "aura".into(), Some(cfg.seed()), &sel.mask, &run.completed, &sel.score)?;
    if let Some(dir) = out {
        pipeline::write_artifacts(&run, &scene.provided_seg_mask, cfg, dir)?;
        write_scene(scene, dir)?;
    }
    Ok((r, run))
}

/// Writes the scene inputs next to a run's artifacts.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_image(&scene.composited, dir.join("input.png"))?;
    io::save_image(&scene.ground_truth, dir.join("ground_truth.png"))?;
    io::save_hole_mask(&scene.provided_seg_mask, dir.join("seg_mask.pgm"))?;
    io::save_hole_mask(&scene.true_object_mask, dir.join("true_mask.pgm"))
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineMean {
    pub mask: String,
    pub mean_total: f64,
}

/// Outcome of the dominance check over a suite.
#[derive(Clone, Debug, Serialize)]
pub struct Dominance {
    pub aura_mean_total: f64,
    pub baselines: Vec<BaselineMean>,
    /// Scenes where the seed-averaged AURA PSNR is at least the kernel-0 PSNR.
    pub psnr_wins: usize,
    pub scenes: usize,
    pub required_psnr_wins: usize,
    pub total_dominates: bool,
    pub holds: bool,
}

/// Mean AURA total must exceed the mean total of every `kernel-*` row, and
/// AURA's seed-averaged PSNR must reach the kernel-0 PSNR on at least 80% of
/// the scenes.
pub fn dominance(report: &RemovalReport) -> Dominance {
    let mean = |it: Vec<f64>| it.iter().sum::<f64>() / it.len().max(1) as f64;
    let aura: Vec<&ReportRow> = report.rows.iter().filter(|r| r.mask == "aura").collect();
    let aura_mean_total = mean(aura.iter().map(|r| r.total).collect());
    let mut names: Vec<String> = Vec::new();
    for r in &report.rows {
        if r.mask.starts_with("kernel-") && !names.contains(&r.mask) {
            names.push(r.mask.clone());
        }
    }
    let baselines: Vec<BaselineMean> = names
        .into_iter()
        .map(|m| BaselineMean {
            mean_total: mean(report.rows.iter().filter(|r| r.mask == m).map(|r| r.total).collect()),
            mask: m,
        })
        .collect();
    let total_dominates = baselines.iter().all(|b| aura_mean_total > b.mean_total);

    let mut scenes: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !scenes.contains(&r.scene.as_str()) {
            scenes.push(&r.scene);
        }
    }
    let psnr_wins = scenes
        .iter()
        .filter(|&&s| {
            let k0 = report.rows.iter().find(|r| r.scene == s && r.mask == "kernel-0");
            let a = mean(aura.iter().filter(|r| r.scene == s).map(|r| r.psnr).collect());
            k0.is_some_and(|k| a >= k.psnr)
        })
        .count();
    let required = (scenes.len() * 4).div_ceil(5);
    Dominance {
        aura_mean_total,
        baselines,
        psnr_wins,
        scenes: scenes.len(),
        required_psnr_wins: required,
        total_dominates,
        holds: total_dominates && psnr_wins >= required,
    }
}

/// Baseline sweep plus one AURA run per seed for every scene; scene-seed
/// jobs run in parallel on a pool of `cfg.workers` threads. Sampling seeds
/// are `cfg.seed() + s` for `s` in `0..seeds`.
pub fn run_suite(
    specs: &[SceneSpec],
    seeds: u64,
    kernels: &[usize],
    cfg: &PipelineConfig,
    out: Option<&Path>,
) -> Result<RemovalReport> {
    cfg.validate()?;
    cfg.with_pool(|| {
        let scenes = specs.iter().map(make_scene).collect::<Result<Vec<_>>>()?;
        let per_scene = scenes
            .par_iter()
            .map(|scene| {
                let mut rows = baseline_sweep(scene, kernels, cfg)?.rows;
                let aura = (0..seeds)
                    .into_par_iter()
                    .map(|s| {
                        let mut c = cfg.clone();
                        c.sampler.seed = cfg.seed() + s;
                        let dir = out.map(|o| o.join(&scene.spec.name).join(format!("seed-{}", c.seed())));
                        run_aura(scene, &c, dir.as_deref()).map(|(r, _)| r)
                    })
                    .collect::<Result<Vec<_>>>()?;
                log::info!("scene {} done", scene.spec.name);
                rows.extend(aura);
                Ok(rows)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RemovalReport {
            rows: per_scene.into_iter().flatten().collect(),
        })
    })?
}
