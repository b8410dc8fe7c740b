//! Scoring of completed images.
//!
//! A judge score combines three terms:
//!
//! * background: negative mean squared error against the original outside the
//!   target, so damage to the surroundings is penalized;
//! * afterimage: dissimilarity, inside the target, between the completion
//!   under the query mask and the completion under the bare target mask,
//!   divided by the target area. A tight mask leaves traces of the object
//!   in its completion, so moving away from it is rewarded;
//! * detect: minus the detected area over the target area.
//!
//! `total = background + λa·afterimage + λd·detect`; higher is better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::external::ExternalCommand;
use crate::image::{squared_error, Image};
use crate::inpaint::{complete, Inpainter};
use crate::io;
use crate::mask::{HoleMask, KeepMask};
use crate::scalar::Scalar;

/// The three judge terms, their weights, and the weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeBreakdown<T> {
    pub background: T,
    pub afterimage: T,
    pub detect: T,
    pub total: T,
    pub lambda_a: T,
    pub lambda_d: T,
}

impl<T: Scalar> JudgeBreakdown<T> {
    pub fn new(background: T, afterimage: T, detect: T, weights: Weights) -> Self {
        let lambda_a = T::of(weights.lambda_a);
        let lambda_d = T::of(weights.lambda_d);
        Self {
            background,
            afterimage,
            detect,
            total: background + lambda_a * afterimage + lambda_d * detect,
            lambda_a,
            lambda_d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub lambda_a: f64,
    pub lambda_d: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            lambda_a: 90_000.0,
            lambda_d: 0.5,
        }
    }
}

// ---------------------------------------------------------------------------
// detectors

/// Produces a binary map of pixels where the removal target is still found.
pub trait Detector<T: Scalar>: Send + Sync {
    fn detect(&self, completed: &Image<T>, original: &Image<T>, target: &HoleMask) -> Result<HoleMask>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DetectorSpec {
    Null,
    Residual {
        #[serde(default = "default_residual_threshold")]
        threshold: f64,
        #[serde(default = "default_residual_window")]
        window: usize,
    },
    External(ExternalCommand),
}

fn default_residual_threshold() -> f64 {
    0.15
}

fn default_residual_window() -> usize {
    7
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec::Null
    }
}

impl DetectorSpec {
    pub fn residual() -> Self {
        DetectorSpec::Residual {
            threshold: default_residual_threshold(),
            window: default_residual_window(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DetectorSpec::Residual { threshold, window } = self {
            if !(*threshold > 0.0 && *threshold <= 1.0) || *window == 0 {
                return Err(Error::InvalidConfig(
                    "residual detector needs threshold in (0,1] and window >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Detector<T>>> {
        self.validate()?;
        Ok(match self {
            DetectorSpec::Null => Box::new(NullDetector),
            DetectorSpec::Residual { threshold, window } => Box::new(ResidualDetector {
                threshold: *threshold,
                window: *window,
            }),
            DetectorSpec::External(cmd) => Box::new(ExternalDetector(cmd.clone())),
        })
    }
}

/// Never detects anything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullDetector;

impl<T: Scalar> Detector<T> for NullDetector {
    fn detect(&self, completed: &Image<T>, _: &Image<T>, _: &HoleMask) -> Result<HoleMask> {
        Ok(HoleMask::zeros(completed.height(), completed.width()))
    }
}

/// Marks target pixels whose `window`-sized neighbourhood has a mean absolute
/// difference (averaged over channels) between completed and original image
/// above `threshold`. Detections are restricted to the target.
#[derive(Clone, Copy, Debug)]
pub struct ResidualDetector {
    pub threshold: f64,
    pub window: usize,
}

impl<T: Scalar> Detector<T> for ResidualDetector {
    fn detect(&self, completed: &Image<T>, original: &Image<T>, target: &HoleMask) -> Result<HoleMask> {
        completed.ensure_same_shape(original)?;
        target.ensure_dims(completed.dims())?;
        let (h, w) = completed.dims();
        let c = completed.channels();
        // summed-area table of per-pixel mean absolute difference
        let mut sat = vec![0.0f64; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                let d: f64 = completed
                    .pixel(y, x)
                    .iter()
                    .zip(original.pixel(y, x))
                    .map(|(&a, &b)| (a - b).abs().as_f64())
                    .sum::<f64>()
                    / c as f64;
                row += d;
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        let lo = self.window / 2;
        let hi = self.window - 1 - lo;
        Ok(HoleMask::from_fn(h, w, |y, x| {
            if !target.at(y, x) {
                return false;
            }
            let (y0, y1) = (y.saturating_sub(lo), (y + hi).min(h - 1) + 1);
            let (x0, x1) = (x.saturating_sub(lo), (x + hi).min(w - 1) + 1);
            let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
                + sat[y0 * (w + 1) + x0];
            s / ((y1 - y0) * (x1 - x0)) as f64 > self.threshold
        }))
    }
}

/// `input.png` in, `detections.pgm` out.
#[derive(Clone, Debug)]
pub struct ExternalDetector(pub ExternalCommand);

impl<T: Scalar> Detector<T> for ExternalDetector {
    fn detect(&self, completed: &Image<T>, _: &Image<T>, _: &HoleMask) -> Result<HoleMask> {
        let cmd = &self.0;
        let dir = cmd.scratch_dir()?;
        io::save_image(completed, dir.path().join("input.png"))?;
        cmd.run(dir.path())?;
        let path = dir.path().join("detections.pgm");
        let map = io::load_hole_mask(&path).map_err(|e| cmd.failure(e.to_string(), ""))?;
        if map.dims() != completed.dims() {
            return Err(cmd.failure(
                format!("detections.pgm is {:?}, expected {:?}", map.dims(), completed.dims()),
                "",
            ));
        }
        Ok(map)
    }
}

// ---------------------------------------------------------------------------
// perceptual metrics

/// Dissimilarity between two images that have been zeroed outside `target`.
pub trait Metric<T: Scalar>: Send + Sync {
    fn distance(&self, a: &Image<T>, b: &Image<T>, target: &HoleMask) -> Result<T>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    L2,
    PatchStats {
        #[serde(default = "default_patch_window")]
        window: usize,
    },
    External(ExternalCommand),
}

fn default_patch_window() -> usize {
    8
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::PatchStats {
            window: default_patch_window(),
        }
    }
}

impl MetricSpec {
    pub fn validate(&self) -> Result<()> {
        if let MetricSpec::PatchStats { window } = self {
            if *window < 2 {
                return Err(Error::InvalidConfig("patch-stats window must be >= 2".into()));
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Metric<T>>> {
        self.validate()?;
        Ok(match self {
            MetricSpec::L2 => Box::new(SquaredL2),
            MetricSpec::PatchStats { window } => Box::new(PatchStats { window: *window }),
            MetricSpec::External(cmd) => Box::new(ExternalMetric(cmd.clone())),
        })
    }
}

/// Sum of squared differences over all pixels and channels.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquaredL2;

impl<T: Scalar> Metric<T> for SquaredL2 {
    fn distance(&self, a: &Image<T>, b: &Image<T>, _: &HoleMask) -> Result<T> {
        a.ensure_same_shape(b)?;
        Ok(squared_error(a, b, |_| true))
    }
}

/// Compares local statistics on a non-overlapping tiling.
///
/// Tiles are `window × window` squares anchored at the origin (clipped at the
/// border). For every tile that touches the target and every channel, the
/// triple (mean, standard deviation, mean gradient magnitude) is computed on
/// both images and the squared differences are summed. Gradients are forward
/// differences inside the tile; a missing neighbour contributes 0.
#[derive(Clone, Copy, Debug)]
pub struct PatchStats {
    pub window: usize,
}

impl Default for PatchStats {
    fn default() -> Self {
        Self {
            window: default_patch_window(),
        }
    }
}

impl PatchStats {
    fn tile_stats<T: Scalar>(img: &Image<T>, y0: usize, x0: usize, y1: usize, x1: usize, ch: usize) -> [f64; 3] {
        let n = ((y1 - y0) * (x1 - x0)) as f64;
        let v = |y: usize, x: usize| img.get(y, x, ch).as_f64();
        let mut sum = 0.0;
        let mut grad = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                let here = v(y, x);
                sum += here;
                let gx = if x + 1 < x1 { v(y, x + 1) - here } else { 0.0 };
                let gy = if y + 1 < y1 { v(y + 1, x) - here } else { 0.0 };
                grad += (gx * gx + gy * gy).sqrt();
            }
        }
        let mean = sum / n;
        let var = (y0..y1)
            .flat_map(|y| (x0..x1).map(move |x| (y, x)))
            .map(|(y, x)| (v(y, x) - mean).powi(2))
            .sum::<f64>()
            / n;
        [mean, var.sqrt(), grad / n]
    }
}

impl<T: Scalar> Metric<T> for PatchStats {
    fn distance(&self, a: &Image<T>, b: &Image<T>, target: &HoleMask) -> Result<T> {
        a.ensure_same_shape(b)?;
        target.ensure_dims(a.dims())?;
        let (h, w) = a.dims();
        let s = self.window;
        let mut total = 0.0;
        for ty in (0..h).step_by(s) {
            for tx in (0..w).step_by(s) {
                let (y1, x1) = ((ty + s).min(h), (tx + s).min(w));
                let touches = (ty..y1).any(|y| (tx..x1).any(|x| target.at(y, x)));
                if !touches {
                    continue;
                }
                for ch in 0..a.channels() {
                    let sa = Self::tile_stats(a, ty, tx, y1, x1, ch);
                    let sb = Self::tile_stats(b, ty, tx, y1, x1, ch);
                    total += sa.iter().zip(&sb).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
                }
            }
        }
        Ok(T::of(total))
    }
}

/// `a.png`, `b.png` in, one decimal number on stdout.
#[derive(Clone, Debug)]
pub struct ExternalMetric(pub ExternalCommand);

impl<T: Scalar> Metric<T> for ExternalMetric {
    fn distance(&self, a: &Image<T>, b: &Image<T>, _: &HoleMask) -> Result<T> {
        let cmd = &self.0;
        let dir = cmd.scratch_dir()?;
        io::save_image(a, dir.path().join("a.png"))?;
        io::save_image(b, dir.path().join("b.png"))?;
        let out = cmd.run(dir.path())?;
        let v: f64 = out
            .trim()
            .parse()
            .map_err(|_| cmd.failure(format!("expected a number on stdout, got {:?}", out.trim()), ""))?;
        if !v.is_finite() || v < 0.0 {
            return Err(cmd.failure(format!("metric returned {v}"), ""));
        }
        Ok(T::of(v))
    }
}

// ---------------------------------------------------------------------------
// score terms

/// `-A(S(completed)) / A(L)`.
pub fn j_detect<T: Scalar>(
    completed: &Image<T>,
    target: &HoleMask,
    detector: &(impl Detector<T> + ?Sized),
    original: &Image<T>,
) -> Result<T> {
    if target.area() == 0 {
        return Err(Error::EmptyTarget);
    }
    let s = detector.detect(completed, original, target)?;
    Ok(T::zero() - T::of_usize(s.area()) / T::of_usize(target.area()))
}

/// Negative mean squared error outside the target, normalized by the number
/// of background pixels.
pub fn j_background<T: Scalar>(original: &Image<T>, completed: &Image<T>, target: &HoleMask) -> Result<T> {
    original.ensure_same_shape(completed)?;
    target.ensure_dims(original.dims())?;
    let bg = target.pixel_count() - target.area();
    if bg == 0 {
        return Err(Error::FullTarget);
    }
    let energy = squared_error(original, completed, |p| !target.bit(p));
    Ok(T::zero() - energy / T::of_usize(bg))
}

/// `D(query ⊙ L, seg ⊙ L) / A(L)`.
pub fn j_afterimage<T: Scalar>(
    completed_query: &Image<T>,
    completed_seg: &Image<T>,
    target: &HoleMask,
    metric: &(impl Metric<T> + ?Sized),
) -> Result<T> {
    completed_query.ensure_same_shape(completed_seg)?;
    target.ensure_dims(completed_query.dims())?;
    if target.area() == 0 {
        return Err(Error::EmptyTarget);
    }
    let a = completed_query.zero_outside(|p| target.bit(p));
    let b = completed_seg.zero_outside(|p| target.bit(p));
    Ok(metric.distance(&a, &b, target)? / T::of_usize(target.area()))
}

/// Scores an already completed image.
pub fn judge_completed<T: Scalar>(
    original: &Image<T>,
    completed: &Image<T>,
    target: &HoleMask,
    detector: &(impl Detector<T> + ?Sized),
    metric: &(impl Metric<T> + ?Sized),
    weights: Weights,
    seg_completion: &Image<T>,
) -> Result<JudgeBreakdown<T>> {
    let background = j_background(original, completed, target)?;
    let afterimage = j_afterimage(completed, seg_completion, target, metric)?;
    let detect = j_detect(completed, target, detector, original)?;
    Ok(JudgeBreakdown::new(background, afterimage, detect, weights))
}

/// Completes `original` under `keep` and scores the result.
#[allow(clippy::too_many_arguments)]
pub fn judge<T: Scalar>(
    original: &Image<T>,
    keep: &KeepMask,
    target: &HoleMask,
    inpainter: &(impl Inpainter<T> + ?Sized),
    detector: &(impl Detector<T> + ?Sized),
    metric: &(impl Metric<T> + ?Sized),
    weights: Weights,
    seg_completion: &Image<T>,
) -> Result<JudgeBreakdown<T>> {
    let completed = complete(inpainter, original, keep)?;
    judge_completed(original, &completed, target, detector, metric, weights, seg_completion)
}

/// Oracles for one image and target, with the tight-mask completion cached.
pub struct Judge<T: Scalar> {
    original: Image<T>,
    target: HoleMask,
    seg_completion: Image<T>,
    inpainter: Box<dyn Inpainter<T>>,
    detector: Box<dyn Detector<T>>,
    metric: Box<dyn Metric<T>>,
    weights: Weights,
}

impl<T: Scalar> Judge<T> {
    pub fn new(
        original: Image<T>,
        target: HoleMask,
        inpainter: Box<dyn Inpainter<T>>,
        detector: Box<dyn Detector<T>>,
        metric: Box<dyn Metric<T>>,
        weights: Weights,
    ) -> Result<Self> {
        target.ensure_dims(original.dims())?;
        if target.area() == 0 {
            return Err(Error::EmptyTarget);
        }
        if target.area() == target.pixel_count() {
            return Err(Error::FullTarget);
        }
        let seg_completion = complete(inpainter.as_ref(), &original, &target.complement())?;
        Ok(Self {
            original,
            target,
            seg_completion,
            inpainter,
            detector,
            metric,
            weights,
        })
    }

    pub fn original(&self) -> &Image<T> {
        &self.original
    }

    pub fn target(&self) -> &HoleMask {
        &self.target
    }

    /// Completion under the bare target mask.
    pub fn seg_completion(&self) -> &Image<T> {
        &self.seg_completion
    }

    pub fn weights(&self) -> Weights {
        self.weights
    }

    pub fn inpainter(&self) -> &dyn Inpainter<T> {
        self.inpainter.as_ref()
    }

    pub fn complete(&self, keep: &KeepMask) -> Result<Image<T>> {
        complete(self.inpainter.as_ref(), &self.original, keep)
    }

    pub fn score_completed(&self, completed: &Image<T>) -> Result<JudgeBreakdown<T>> {
        judge_completed(
            &self.original,
            completed,
            &self.target,
            self.detector.as_ref(),
            self.metric.as_ref(),
            self.weights,
            &self.seg_completion,
        )
    }

    pub fn score(&self, keep: &KeepMask) -> Result<JudgeBreakdown<T>> {
        self.score_completed(&self.complete(keep)?)
    }
}
